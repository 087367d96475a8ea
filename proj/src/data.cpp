#include "svq/data.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>

#include "svq/check.h"

namespace svq {

namespace {

std::uint32_t read_u32_be(std::istream& in, const std::string& path,
                          std::streamoff offset) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  SVQ_CHECK(in.gcount() == 4, "idx: truncated file '", path, "' at offset ",
            offset);
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
         (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

void write_u32_be(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<char*>(b), 4);
}

std::uint16_t read_u16_le(std::istream& in) {
  unsigned char b[2];
  in.read(reinterpret_cast<char*>(b), 2);
  return static_cast<std::uint16_t>(b[0] | (std::uint16_t(b[1]) << 8));
}

void write_u16_le(std::ostream& out, std::uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v),
                        static_cast<unsigned char>(v >> 8)};
  out.write(reinterpret_cast<char*>(b), 2);
}

void write_u32_le(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<char*>(b), 4);
}

}  // namespace

ImageDataset load_idx(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  SVQ_CHECK(in.good(), "idx: cannot open '", path, "'");
  const std::uint32_t magic = read_u32_be(in, path, 0);
  SVQ_CHECK(magic == 0x803, "idx: bad magic ", magic, " in '", path,
            "' at offset 0, expected 2051 (images)");
  const std::uint32_t n = read_u32_be(in, path, 4);
  const std::uint32_t h = read_u32_be(in, path, 8);
  const std::uint32_t w = read_u32_be(in, path, 12);
  SVQ_CHECK(n > 0 && h > 0 && w > 0, "idx: empty dataset in '", path, "'");
  ImageDataset ds;
  ds.c = 1;
  ds.h = static_cast<int>(h);
  ds.w = static_cast<int>(w);
  std::vector<unsigned char> raw(static_cast<std::size_t>(h) * w);
  for (std::uint32_t i = 0; i < n; ++i) {
    in.read(reinterpret_cast<char*>(raw.data()),
            static_cast<std::streamsize>(raw.size()));
    SVQ_CHECK(static_cast<std::size_t>(in.gcount()) == raw.size(),
              "idx: truncated file '", path, "' at offset ",
              16 + static_cast<std::streamoff>(i) *
                       static_cast<std::streamoff>(raw.size()),
              ", image ", i, " of ", n, " incomplete");
    std::vector<float> v(raw.size());
    for (std::size_t j = 0; j < raw.size(); ++j)
      v[j] = static_cast<float>(raw[j]) / 255.0f;
    ds.images.push_back(
        Tensor::from_data({1, ds.h, ds.w}, std::move(v)));
  }
  return ds;
}

std::vector<int> load_idx_labels(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  SVQ_CHECK(in.good(), "idx: cannot open '", path, "'");
  const std::uint32_t magic = read_u32_be(in, path, 0);
  SVQ_CHECK(magic == 0x801, "idx: bad magic ", magic, " in '", path,
            "' at offset 0, expected 2049 (labels)");
  const std::uint32_t n = read_u32_be(in, path, 4);
  std::vector<unsigned char> raw(n);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n));
  SVQ_CHECK(static_cast<std::uint32_t>(in.gcount()) == n,
            "idx: truncated file '", path, "' at offset 8");
  return std::vector<int>(raw.begin(), raw.end());
}

void write_idx(const ImageDataset& ds, const std::string& path) {
  SVQ_CHECK(ds.c == 1, "idx: only single-channel images are stored");
  SVQ_CHECK(!ds.images.empty(), "idx: refusing to write an empty dataset");
  std::ofstream out(path, std::ios::binary);
  SVQ_CHECK(out.good(), "idx: cannot write '", path, "'");
  write_u32_be(out, 0x803);
  write_u32_be(out, static_cast<std::uint32_t>(ds.images.size()));
  write_u32_be(out, static_cast<std::uint32_t>(ds.h));
  write_u32_be(out, static_cast<std::uint32_t>(ds.w));
  for (const Tensor& img : ds.images) {
    SVQ_CHECK(img.shape() == Shape({1, ds.h, ds.w}),
              "idx: inconsistent image shape");
    for (float v : img.vec()) {
      const float clamped = std::min(1.0f, std::max(0.0f, v));
      const unsigned char b =
          static_cast<unsigned char>(std::lround(clamped * 255.0f));
      out.write(reinterpret_cast<const char*>(&b), 1);
    }
  }
}

void write_idx_labels(const std::vector<int>& labels, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  SVQ_CHECK(out.good(), "idx: cannot write '", path, "'");
  write_u32_be(out, 0x801);
  write_u32_be(out, static_cast<std::uint32_t>(labels.size()));
  for (int l : labels) {
    SVQ_CHECK(l >= 0 && l < 256, "idx: label ", l, " does not fit a byte");
    const unsigned char b = static_cast<unsigned char>(l);
    out.write(reinterpret_cast<const char*>(&b), 1);
  }
}

void EventStream::validate() const {
  SVQ_CHECK(width > 0 && height > 0, "events: sensor size must be positive");
  std::uint32_t prev = 0;
  for (std::size_t i = 0; i < events.size(); ++i) {
    const EventRecord& e = events[i];
    SVQ_CHECK(e.t >= prev, "events: timestamp decreases at record ", i);
    SVQ_CHECK(e.x < width && e.y < height, "events: record ", i,
              " at (", e.x, ",", e.y, ") outside ", width, "x", height,
              " sensor");
    SVQ_CHECK(e.p <= 1, "events: record ", i, " has polarity ",
              int(e.p), ", expected 0 or 1");
    prev = e.t;
  }
}

EventStream load_events(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  SVQ_CHECK(in.good(), "events: cannot open '", path, "'");
  char magic[4];
  in.read(magic, 4);
  SVQ_CHECK(in.gcount() == 4 && std::string(magic, 4) == "SVQE",
            "events: bad magic in '", path, "' at offset 0");
  EventStream s;
  s.width = read_u16_le(in);
  s.height = read_u16_le(in);
  SVQ_CHECK(in.good(), "events: truncated header in '", path, "'");
  while (true) {
    unsigned char rec[9];
    in.read(reinterpret_cast<char*>(rec), 9);
    if (in.gcount() == 0) break;
    SVQ_CHECK(in.gcount() == 9, "events: truncated record in '", path,
              "' at offset ",
              8 + static_cast<std::streamoff>(s.events.size()) * 9);
    EventRecord e;
    e.t = rec[0] | (std::uint32_t(rec[1]) << 8) | (std::uint32_t(rec[2]) << 16) |
          (std::uint32_t(rec[3]) << 24);
    e.x = static_cast<std::uint16_t>(rec[4] | (std::uint16_t(rec[5]) << 8));
    e.y = static_cast<std::uint16_t>(rec[6] | (std::uint16_t(rec[7]) << 8));
    e.p = rec[8];
    s.events.push_back(e);
  }
  s.validate();
  return s;
}

void write_events(const EventStream& s, const std::string& path) {
  s.validate();
  std::ofstream out(path, std::ios::binary);
  SVQ_CHECK(out.good(), "events: cannot write '", path, "'");
  out.write("SVQE", 4);
  write_u16_le(out, static_cast<std::uint16_t>(s.width));
  write_u16_le(out, static_cast<std::uint16_t>(s.height));
  for (const EventRecord& e : s.events) {
    write_u32_le(out, e.t);
    write_u16_le(out, e.x);
    write_u16_le(out, e.y);
    out.write(reinterpret_cast<const char*>(&e.p), 1);
  }
}

Tensor bin_events(const EventStream& s, int T) {
  SVQ_CHECK(T >= 1, "bin_events: T must be positive");
  s.validate();
  Tensor out = Tensor::zeros({T, 2, s.height, s.width});
  if (s.events.empty()) {
    std::cerr << "warning: bin_events on an empty stream, returning zeros\n";
    return out;
  }
  const std::uint64_t t0 = s.events.front().t;
  const std::uint64_t range = s.events.back().t - t0;
  const std::size_t plane = static_cast<std::size_t>(s.height) * s.width;
  for (const EventRecord& e : s.events) {
    std::int64_t idx = 0;
    if (range > 0) {
      const std::uint64_t num = (e.t - t0) * static_cast<std::uint64_t>(T);
      idx = static_cast<std::int64_t>(num / range);
      if (idx > 0 && num % range == 0) --idx;  // boundary to earlier window
      if (idx >= T) idx = T - 1;
    }
    out.data()[static_cast<std::size_t>(idx) * 2 * plane + e.p * plane +
               static_cast<std::size_t>(e.y) * s.width + e.x] = 1.0f;
  }
  return out;
}

SpikeFrameDataset synth_temporal(int n, int T, int h, int w, Rng& rng) {
  SVQ_CHECK(n >= 1, "synth: need at least one sample");
  SVQ_CHECK(T >= 2, "synth: need T >= 2 for motion");
  const int span = T - 1;
  // slowest horizontal bar motion must fit: 2-wide object plus span steps
  const bool bar_fits = w >= 2 + span;
  const bool dot_fits = (w >= 2 + span) || (h >= 2 + span);
  SVQ_CHECK(bar_fits || dot_fits, "synth: geometry too small for motion (",
            h, "x", w, " over ", T, " steps)");

  SpikeFrameDataset ds;
  ds.T = T;
  ds.h = h;
  ds.w = w;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int i = 0; i < n; ++i) {
    Trajectory tr;
    const bool want_bar = bar_fits && (!dot_fits || rng.uniform() < 0.5);
    for (int attempt = 0;; ++attempt) {
      SVQ_CHECK(attempt < 10000, "synth: could not place a moving object");
      if (want_bar) {
        tr.kind = Trajectory::kBar;
        tr.vx = rng.uniform_int(2) == 0 ? -1 - rng.uniform_int(2)
                                        : 1 + rng.uniform_int(2);
        tr.vy = 0;
        tr.x0 = rng.uniform_int(w - 1);
        tr.y0 = 0;
      } else {
        tr.kind = Trajectory::kDot;
        tr.vx = rng.uniform_int(5) - 2;
        tr.vy = rng.uniform_int(5) - 2;
        if (tr.vx == 0 && tr.vy == 0) continue;
        tr.x0 = rng.uniform_int(w - 1);
        tr.y0 = rng.uniform_int(h - 1);
      }
      const int xe = tr.x0 + tr.vx * span;
      const int ye = tr.y0 + tr.vy * span;
      const int ow = 2, oh = tr.kind == Trajectory::kBar ? h : 2;
      if (tr.x0 < 0 || tr.x0 + ow > w || xe < 0 || xe + ow > w) continue;
      if (tr.kind == Trajectory::kDot &&
          (tr.y0 < 0 || tr.y0 + oh > h || ye < 0 || ye + oh > h))
        continue;
      break;
    }
    std::vector<float> v(static_cast<std::size_t>(T) * plane, 0.0f);
    for (int t = 0; t < T; ++t) {
      const int x = tr.x0 + tr.vx * t;
      const int y = tr.kind == Trajectory::kBar ? 0 : tr.y0 + tr.vy * t;
      const int oh = tr.kind == Trajectory::kBar ? h : 2;
      for (int dy = 0; dy < oh; ++dy)
        for (int dx = 0; dx < 2; ++dx)
          v[static_cast<std::size_t>(t) * plane +
            static_cast<std::size_t>(y + dy) * w + (x + dx)] = 1.0f;
    }
    ds.samples.push_back(Tensor::from_data({T, 1, h, w}, std::move(v)));
    ds.trajectories.push_back(tr);
  }
  return ds;
}

std::vector<std::vector<int>> batches(std::size_t n, int batch_size,
                                      bool shuffle, Rng& rng) {
  SVQ_CHECK(batch_size >= 1, "batches: batch_size must be positive");
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  if (shuffle) rng.shuffle(order);
  std::vector<std::vector<int>> out;
  for (std::size_t i = 0; i < n; i += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(n, i + static_cast<std::size_t>(batch_size));
    out.emplace_back(order.begin() + static_cast<long>(i),
                     order.begin() + static_cast<long>(end));
  }
  return out;
}

void write_image(const Tensor& img, const std::string& path) {
  SVQ_CHECK(img.rank() == 3, "image: expected [C,H,W], got ",
            shape_str(img.shape()));
  const int c = img.dim(0), h = img.dim(1), w = img.dim(2);
  SVQ_CHECK(c == 1 || c == 3, "image: ", c, " channels, expected 1 or 3");
  std::ofstream out(path, std::ios::binary);
  SVQ_CHECK(out.good(), "image: cannot write '", path, "'");
  out << (c == 1 ? "P5" : "P6") << "\n" << w << " " << h << "\n255\n";
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (std::size_t i = 0; i < plane; ++i) {
    for (int ch = 0; ch < c; ++ch) {
      const float v = std::min(
          1.0f, std::max(0.0f, img.vec()[static_cast<std::size_t>(ch) * plane + i]));
      const unsigned char b =
          static_cast<unsigned char>(std::lround(v * 255.0f));
      out.write(reinterpret_cast<const char*>(&b), 1);
    }
  }
}

Tensor read_image(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  SVQ_CHECK(in.good(), "image: cannot open '", path, "'");
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  SVQ_CHECK(magic == "P5" || magic == "P6", "image: '", path,
            "' is not binary PGM/PPM");
  SVQ_CHECK(maxval == 255, "image: unsupported maxval ", maxval);
  SVQ_CHECK(w > 0 && h > 0, "image: bad dimensions");
  in.get();  // single whitespace after header
  const int c = magic == "P5" ? 1 : 3;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  std::vector<unsigned char> raw(plane * static_cast<std::size_t>(c));
  in.read(reinterpret_cast<char*>(raw.data()),
          static_cast<std::streamsize>(raw.size()));
  SVQ_CHECK(static_cast<std::size_t>(in.gcount()) == raw.size(),
            "image: truncated pixel data in '", path, "'");
  std::vector<float> v(raw.size());
  for (std::size_t i = 0; i < plane; ++i)
    for (int ch = 0; ch < c; ++ch)
      v[static_cast<std::size_t>(ch) * plane + i] =
          static_cast<float>(raw[i * static_cast<std::size_t>(c) +
                                 static_cast<std::size_t>(ch)]) /
          255.0f;
  return Tensor::from_data({c, h, w}, std::move(v));
}

}  // namespace svq
