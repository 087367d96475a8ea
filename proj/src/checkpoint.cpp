#include "svq/checkpoint.h"

#include <bit>
#include <cstring>
#include <fstream>

#include "svq/check.h"

namespace svq {

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<char*>(b), 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  put_u32(out, static_cast<std::uint32_t>(v));
  put_u32(out, static_cast<std::uint32_t>(v >> 32));
}

void put_f32(std::ostream& out, float f) {
  put_u32(out, std::bit_cast<std::uint32_t>(f));
}

void put_str(std::ostream& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void put_floats(std::ostream& out, const std::vector<float>& v) {
  for (float f : v) put_f32(out, f);
}

struct Reader {
  std::ifstream in;
  std::string path;
  Reader(const std::string& p, const char* what) : in(p, std::ios::binary), path(p) {
    SVQ_CHECK(in.good(), what, ": cannot open '", p, "'");
  }
  void raw(void* dst, std::size_t n, const char* what) {
    in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    SVQ_CHECK(static_cast<std::size_t>(in.gcount()) == n, what,
              ": truncated file '", path, "'");
  }
  std::uint32_t u32(const char* what) {
    unsigned char b[4];
    raw(b, 4, what);
    return b[0] | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
           (std::uint32_t(b[3]) << 24);
  }
  std::uint64_t u64(const char* what) {
    const std::uint64_t lo = u32(what);
    return lo | (std::uint64_t(u32(what)) << 32);
  }
  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
  std::string str(const char* what) {
    const std::uint32_t n = u32(what);
    std::string s(n, '\0');
    raw(s.data(), n, what);
    return s;
  }
  std::vector<float> floats(std::size_t n, const char* what) {
    std::vector<std::uint32_t> raw_bits(n);
    raw(raw_bits.data(), n * 4, what);
    std::vector<float> v(n);
    for (std::size_t i = 0; i < n; ++i) {
      // stored little-endian; reinterpret on LE hosts, swap otherwise
      std::uint32_t bits = raw_bits[i];
      if constexpr (std::endian::native == std::endian::big)
        bits = __builtin_bswap32(bits);
      v[i] = std::bit_cast<float>(bits);
    }
    return v;
  }
};

constexpr char kModelMagic[4] = {'S', 'V', 'Q', 'C'};
constexpr char kSeqMagic[4] = {'S', 'V', 'Q', 'I'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

Checkpoint make_checkpoint(int kind, const RunConfig& cfg, const AdamW& opt,
                           std::int64_t epoch, const std::string& rng_state,
                           const std::vector<std::int64_t>& usage) {
  Checkpoint ck;
  ck.kind = kind;
  ck.config = cfg;
  ck.epoch = epoch;
  ck.opt_step = opt.step_count();
  ck.rng_state = rng_state;
  ck.usage = usage;
  for (const ParamSlot& s : opt.slots()) {
    ParamBlob b;
    b.name = s.name;
    b.shape = s.param.shape();
    b.data = s.param.vec();
    b.m = s.m;
    b.v = s.v;
    ck.params.push_back(std::move(b));
  }
  return ck;
}

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  SVQ_CHECK(out.good(), "checkpoint: cannot write '", path, "'");
  out.write(kModelMagic, 4);
  put_u32(out, kVersion);
  out.put(static_cast<char>(ck.kind));
  put_str(out, ck.config.to_text());
  put_u64(out, static_cast<std::uint64_t>(ck.epoch));
  put_u32(out, static_cast<std::uint32_t>(ck.params.size()));
  for (const ParamBlob& b : ck.params) {
    put_str(out, b.name);
    put_u32(out, static_cast<std::uint32_t>(b.shape.size()));
    for (int d : b.shape) put_u32(out, static_cast<std::uint32_t>(d));
    put_u64(out, b.data.size());
    put_floats(out, b.data);
    SVQ_CHECK(b.m.size() == b.data.size() && b.v.size() == b.data.size(),
              "checkpoint: moment buffers for '", b.name,
              "' do not match the parameter size");
    put_floats(out, b.m);
    put_floats(out, b.v);
  }
  put_u64(out, static_cast<std::uint64_t>(ck.opt_step));
  put_str(out, ck.rng_state);
  put_u32(out, static_cast<std::uint32_t>(ck.usage.size()));
  for (std::int64_t c : ck.usage) put_u64(out, static_cast<std::uint64_t>(c));
  SVQ_CHECK(out.good(), "checkpoint: write to '", path, "' failed");
}

Checkpoint load_checkpoint(const std::string& path) {
  Reader r(path, "checkpoint");
  char magic[4];
  r.raw(magic, 4, "checkpoint");
  SVQ_CHECK(std::memcmp(magic, kModelMagic, 4) == 0,
            "checkpoint: bad magic in '", path, "'");
  const std::uint32_t version = r.u32("checkpoint");
  SVQ_CHECK(version == kVersion, "checkpoint: unsupported version ", version);
  Checkpoint ck;
  char kind = 0;
  r.raw(&kind, 1, "checkpoint");
  SVQ_CHECK(kind == kCheckpointModel || kind == kCheckpointPrior,
            "checkpoint: unknown kind ", int(kind));
  ck.kind = kind;
  try {
    ck.config = parse_config_text(r.str("checkpoint"));
  } catch (const ConfigError& e) {
    throw std::runtime_error("checkpoint: bad config snapshot in '" + path +
                             "': " + e.what());
  }
  ck.epoch = static_cast<std::int64_t>(r.u64("checkpoint"));
  const std::uint32_t n_params = r.u32("checkpoint");
  for (std::uint32_t i = 0; i < n_params; ++i) {
    ParamBlob b;
    b.name = r.str("checkpoint");
    const std::uint32_t rank = r.u32("checkpoint");
    SVQ_CHECK(rank <= 8, "checkpoint: implausible rank ", rank, " for '",
              b.name, "'");
    std::size_t numel = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      b.shape.push_back(static_cast<int>(r.u32("checkpoint")));
      numel *= static_cast<std::size_t>(b.shape.back());
    }
    const std::uint64_t stored = r.u64("checkpoint");
    SVQ_CHECK(stored == numel, "checkpoint: size mismatch for '", b.name, "'");
    b.data = r.floats(numel, "checkpoint");
    b.m = r.floats(numel, "checkpoint");
    b.v = r.floats(numel, "checkpoint");
    ck.params.push_back(std::move(b));
  }
  ck.opt_step = static_cast<std::int64_t>(r.u64("checkpoint"));
  ck.rng_state = r.str("checkpoint");
  const std::uint32_t n_usage = r.u32("checkpoint");
  for (std::uint32_t i = 0; i < n_usage; ++i)
    ck.usage.push_back(static_cast<std::int64_t>(r.u64("checkpoint")));
  return ck;
}

void fill_from_checkpoint(const Checkpoint& ck, AdamW& opt) {
  SVQ_CHECK(ck.params.size() == opt.slots().size(),
            "checkpoint: holds ", ck.params.size(), " params, model has ",
            opt.slots().size());
  for (std::size_t i = 0; i < ck.params.size(); ++i) {
    const ParamBlob& b = ck.params[i];
    ParamSlot& s = opt.slots()[i];
    SVQ_CHECK(b.name == s.name, "checkpoint: param ", i, " is '", b.name,
              "', model expects '", s.name, "'");
    SVQ_CHECK(b.shape == s.param.shape(), "checkpoint: shape mismatch for '",
              b.name, "': stored ", shape_str(b.shape), ", model ",
              shape_str(s.param.shape()));
    s.param.vec() = b.data;
    s.m = b.m;
    s.v = b.v;
  }
  opt.set_step_count(ck.opt_step);
}

void write_sequences(const IndexSequences& s, const std::string& path) {
  SVQ_CHECK(s.n_q > 0 && s.n_q <= 65535, "sequences: n_q ", s.n_q,
            " does not fit u16 tokens");
  const std::size_t len =
      static_cast<std::size_t>(s.t) * s.h * static_cast<std::size_t>(s.w);
  SVQ_CHECK(len > 0, "sequences: empty grid geometry");
  std::ofstream out(path, std::ios::binary);
  SVQ_CHECK(out.good(), "sequences: cannot write '", path, "'");
  out.write(kSeqMagic, 4);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(s.n_q));
  put_u32(out, static_cast<std::uint32_t>(s.t));
  put_u32(out, static_cast<std::uint32_t>(s.h));
  put_u32(out, static_cast<std::uint32_t>(s.w));
  put_u64(out, s.seqs.size());
  for (const std::vector<int>& seq : s.seqs) {
    SVQ_CHECK(seq.size() == len, "sequences: sequence of length ", seq.size(),
              ", grid needs ", len);
    for (int tok : seq) {
      SVQ_CHECK(tok >= 0 && tok < s.n_q, "sequences: token ", tok,
                " outside [0,", s.n_q, ")");
      const unsigned char b[2] = {static_cast<unsigned char>(tok),
                                  static_cast<unsigned char>(tok >> 8)};
      out.write(reinterpret_cast<const char*>(b), 2);
    }
  }
}

IndexSequences load_sequences(const std::string& path) {
  Reader r(path, "sequences");
  char magic[4];
  r.raw(magic, 4, "sequences");
  SVQ_CHECK(std::memcmp(magic, kSeqMagic, 4) == 0,
            "sequences: bad magic in '", path, "'");
  const std::uint32_t version = r.u32("sequences");
  SVQ_CHECK(version == kVersion, "sequences: unsupported version ", version);
  IndexSequences s;
  s.n_q = static_cast<int>(r.u32("sequences"));
  s.t = static_cast<int>(r.u32("sequences"));
  s.h = static_cast<int>(r.u32("sequences"));
  s.w = static_cast<int>(r.u32("sequences"));
  SVQ_CHECK(s.n_q > 0 && s.t > 0 && s.h > 0 && s.w > 0,
            "sequences: bad header in '", path, "'");
  const std::uint64_t count = r.u64("sequences");
  const std::size_t len =
      static_cast<std::size_t>(s.t) * s.h * static_cast<std::size_t>(s.w);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::vector<int> seq(len);
    for (std::size_t j = 0; j < len; ++j) {
      unsigned char b[2];
      r.raw(b, 2, "sequences");
      const int tok = b[0] | (int(b[1]) << 8);
      SVQ_CHECK(tok < s.n_q, "sequences: token ", tok, " outside [0,", s.n_q,
                ") at record ", i);
      seq[j] = tok;
    }
    s.seqs.push_back(std::move(seq));
  }
  return s;
}

}  // namespace svq
