#include "svq/prior.h"

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "svq/check.h"

namespace svq {

void PriorConfig::validate() const {
  SVQ_CHECK(n_q >= 1, "prior: n_q must be positive");
  SVQ_CHECK(layers >= 1, "prior: need at least one layer");
  SVQ_CHECK(heads >= 1, "prior: need at least one head");
  SVQ_CHECK(width % heads == 0, "prior: width ", width,
            " not divisible by heads ", heads);
  SVQ_CHECK(context >= 2, "prior: context must cover BOS plus one token");
  SVQ_CHECK(top_k >= 0, "prior: top_k must be non-negative");
  SVQ_CHECK(temperature > 0.0f, "prior: temperature must be positive");
}

std::vector<int> flatten_indices(const IndexGrid& grid) {
  SVQ_CHECK(grid.h >= 1 && grid.w >= 1, "flatten: empty grid");
  SVQ_CHECK(grid.v.size() ==
                static_cast<std::size_t>(grid.h) * static_cast<std::size_t>(grid.w),
            "flatten: grid holds ", grid.v.size(), " values, expected ",
            grid.h * grid.w);
  for (int t : grid.v) SVQ_CHECK(t >= 0, "flatten: negative index");
  return grid.v;
}

IndexGrid unflatten_indices(const std::vector<int>& seq, int h, int w) {
  SVQ_CHECK(seq.size() == static_cast<std::size_t>(h) * static_cast<std::size_t>(w),
            "unflatten: sequence length ", seq.size(), " does not fill a ", h,
            "x", w, " grid");
  return IndexGrid{seq, h, w};
}

namespace {

Tensor init_normal(Shape shape, float sd, Rng& rng) {
  Tensor t = Tensor::zeros(shape, true);
  for (std::size_t i = 0; i < t.numel(); ++i)
    t.data()[i] = rng.normal(0.0f, sd);
  return t;
}

}  // namespace

TransformerPrior::TransformerPrior(const PriorConfig& cfg, Rng& rng)
    : cfg(cfg) {
  cfg.validate();
  const int w = cfg.width;
  tok_emb = init_normal({cfg.n_q + 1, w}, 0.02f, rng);
  pos_emb = init_normal({cfg.context, w}, 0.02f, rng);
  for (int l = 0; l < cfg.layers; ++l) {
    Block b;
    b.ln1_g = Tensor::full({w}, 1.0f, true);
    b.ln1_b = Tensor::zeros({w}, true);
    b.wq = init_normal({w, w}, 0.02f, rng);
    b.wk = init_normal({w, w}, 0.02f, rng);
    b.wv = init_normal({w, w}, 0.02f, rng);
    b.wo = init_normal({w, w}, 0.02f, rng);
    b.ln2_g = Tensor::full({w}, 1.0f, true);
    b.ln2_b = Tensor::zeros({w}, true);
    b.fc1_w = init_normal({w, 4 * w}, 0.02f, rng);
    b.fc1_b = Tensor::zeros({4 * w}, true);
    b.fc2_w = init_normal({4 * w, w}, 0.02f, rng);
    b.fc2_b = Tensor::zeros({w}, true);
    blocks.push_back(std::move(b));
  }
  lnf_g = Tensor::full({w}, 1.0f, true);
  lnf_b = Tensor::zeros({w}, true);
  head_w = init_normal({w, cfg.n_q}, 0.02f, rng);
}

Tensor TransformerPrior::logits(Tape& tape, const std::vector<int>& tokens) const {
  SVQ_CHECK(!tokens.empty(), "prior: empty token sequence");
  SVQ_CHECK(static_cast<int>(tokens.size()) <= cfg.context,
            "prior: overlong prefix, ", tokens.size(),
            " tokens exceed context ", cfg.context);
  for (std::size_t i = 0; i < tokens.size(); ++i)
    SVQ_CHECK(tokens[i] >= 0 && tokens[i] <= cfg.n_q, "prior: token ",
              tokens[i], " out of range at position ", i);
  const int L = static_cast<int>(tokens.size());
  const int W = cfg.width;
  const int H = cfg.heads;
  const int hd = W / H;

  Tensor x = add(tape, embedding(tape, tok_emb, tokens),
                 slice(tape, pos_emb, 0, 0, L));

  // additive causal mask, strictly upper triangle at -1e9
  Tensor mask = Tensor::zeros({L, L});
  for (int i = 0; i < L; ++i)
    for (int j = i + 1; j < L; ++j)
      mask.data()[static_cast<std::size_t>(i) * L + j] = -1e9f;

  const float scale = 1.0f / std::sqrt(static_cast<float>(hd));
  auto split_heads = [&](const Tensor& t) {  // [L,W] -> [H,L,hd]
    return permute(tape, reshape(tape, t, {L, H, hd}), {1, 0, 2});
  };
  for (const Block& b : blocks) {
    Tensor h = layer_norm(tape, x, b.ln1_g, b.ln1_b);
    Tensor q = split_heads(matmul(tape, h, b.wq));
    Tensor k = split_heads(matmul(tape, h, b.wk));
    Tensor v = split_heads(matmul(tape, h, b.wv));
    Tensor att = mul_scalar(
        tape, bmm(tape, q, permute(tape, k, {0, 2, 1})), scale);
    att = softmax_lastdim(tape, add_broadcast(tape, att, mask));
    Tensor ctx = bmm(tape, att, v);  // [H,L,hd]
    ctx = reshape(tape, permute(tape, ctx, {1, 0, 2}), {L, W});
    x = add(tape, x, matmul(tape, ctx, b.wo));

    Tensor m = layer_norm(tape, x, b.ln2_g, b.ln2_b);
    m = add_broadcast(tape, matmul(tape, m, b.fc1_w), b.fc1_b);
    m = add_broadcast(tape, matmul(tape, gelu(tape, m), b.fc2_w), b.fc2_b);
    x = add(tape, x, m);
  }
  x = layer_norm(tape, x, lnf_g, lnf_b);
  return matmul(tape, x, head_w);  // [L, n_q]
}

void TransformerPrior::register_params(AdamW& opt) {
  opt.add_param("prior.tok_emb", tok_emb);
  opt.add_param("prior.pos_emb", pos_emb);
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    const std::string p = "prior.b" + std::to_string(l) + ".";
    Block& b = blocks[l];
    opt.add_param(p + "ln1.g", b.ln1_g);
    opt.add_param(p + "ln1.b", b.ln1_b);
    opt.add_param(p + "wq", b.wq);
    opt.add_param(p + "wk", b.wk);
    opt.add_param(p + "wv", b.wv);
    opt.add_param(p + "wo", b.wo);
    opt.add_param(p + "ln2.g", b.ln2_g);
    opt.add_param(p + "ln2.b", b.ln2_b);
    opt.add_param(p + "fc1.w", b.fc1_w);
    opt.add_param(p + "fc1.b", b.fc1_b);
    opt.add_param(p + "fc2.w", b.fc2_w);
    opt.add_param(p + "fc2.b", b.fc2_b);
  }
  opt.add_param("prior.lnf.g", lnf_g);
  opt.add_param("prior.lnf.b", lnf_b);
  opt.add_param("prior.head.w", head_w);
}

namespace {

// softmax of one logits row in double
std::vector<double> row_softmax(const float* row, int n) {
  double mx = row[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, static_cast<double>(row[i]));
  std::vector<double> p(static_cast<std::size_t>(n));
  double denom = 0.0;
  for (int i = 0; i < n; ++i) {
    p[static_cast<std::size_t>(i)] = std::exp(static_cast<double>(row[i]) - mx);
    denom += p[static_cast<std::size_t>(i)];
  }
  for (double& v : p) v /= denom;
  return p;
}

}  // namespace

std::vector<double> prior_forward(const TransformerPrior& m,
                                  const std::vector<int>& prefix) {
  std::vector<int> tokens;
  tokens.reserve(prefix.size() + 1);
  tokens.push_back(m.bos());
  tokens.insert(tokens.end(), prefix.begin(), prefix.end());
  Tape tape;
  Tensor lg = m.logits(tape, tokens);
  const int L = lg.dim(0);
  return row_softmax(lg.data() + static_cast<std::size_t>(L - 1) * m.cfg.n_q,
                     m.cfg.n_q);
}

double prior_train_step(TransformerPrior& m,
                        const std::vector<std::vector<int>>& batch,
                        AdamW& opt) {
  SVQ_CHECK(!batch.empty(), "prior_train_step: empty batch");
  Tape tape;
  Tensor total;
  for (const auto& seq : batch) {
    SVQ_CHECK(!seq.empty(), "prior_train_step: empty sequence");
    SVQ_CHECK(static_cast<int>(seq.size()) + 1 <= m.cfg.context,
              "prior_train_step: sequence of ", seq.size(),
              " tokens does not fit context ", m.cfg.context);
    for (std::size_t i = 0; i < seq.size(); ++i)
      SVQ_CHECK(seq[i] >= 0 && seq[i] < m.cfg.n_q, "prior_train_step: token ",
                seq[i], " out of range at position ", i);
    // input = BOS + all but the last token; row i predicts seq[i]
    std::vector<int> input;
    input.reserve(seq.size());
    input.push_back(m.bos());
    input.insert(input.end(), seq.begin(), seq.end() - 1);
    Tensor lg = m.logits(tape, input);
    Tensor nll = cross_entropy_logits(tape, lg, seq);
    total = total.defined() ? add(tape, total, nll) : nll;
  }
  total = mul_scalar(tape, total, 1.0f / static_cast<float>(batch.size()));
  const double value = total.item();
  opt.zero_grad();
  tape.backward(total);
  opt.step();
  return value;
}

IndexGrid sample_indices(const TransformerPrior& m, int h, int w,
                         float temperature, int top_k, Rng& rng) {
  SVQ_CHECK(temperature > 0.0f, "sample: temperature must be positive, got ",
            temperature);
  SVQ_CHECK(h >= 1 && w >= 1, "sample: grid must be non-empty");
  SVQ_CHECK(h * w + 1 <= m.cfg.context, "sample: ", h, "x", w,
            " grid does not fit context ", m.cfg.context);
  const int n = m.cfg.n_q;
  std::vector<int> tokens = {m.bos()};
  IndexGrid grid;
  grid.h = h;
  grid.w = w;
  for (int i = 0; i < h * w; ++i) {
    Tape tape;
    Tensor lg = m.logits(tape, tokens);
    const float* row =
        lg.data() + static_cast<std::size_t>(lg.dim(0) - 1) * n;
    std::vector<double> scaled(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j)
      scaled[static_cast<std::size_t>(j)] =
          static_cast<double>(row[j]) / static_cast<double>(temperature);
    // top-k truncation: everything below the k-th largest logit drops out
    const int k = (top_k <= 0 || top_k > n) ? n : top_k;
    std::vector<double> sorted = scaled;
    std::nth_element(sorted.begin(), sorted.begin() + (k - 1), sorted.end(),
                     std::greater<double>());
    const double cutoff = sorted[static_cast<std::size_t>(k - 1)];
    double mx = -1e300;
    for (double v : scaled)
      if (v >= cutoff) mx = std::max(mx, v);
    std::vector<double> p(static_cast<std::size_t>(n), 0.0);
    double denom = 0.0;
    int kept = 0;
    for (int j = 0; j < n; ++j) {
      if (scaled[static_cast<std::size_t>(j)] < cutoff || kept >= k) continue;
      ++kept;
      p[static_cast<std::size_t>(j)] =
          std::exp(scaled[static_cast<std::size_t>(j)] - mx);
      denom += p[static_cast<std::size_t>(j)];
    }
    const double r = rng.uniform() * denom;
    double acc = 0.0;
    int pick = -1;
    for (int j = 0; j < n; ++j) {
      if (p[static_cast<std::size_t>(j)] == 0.0) continue;
      acc += p[static_cast<std::size_t>(j)];
      if (acc >= r) {
        pick = j;
        break;
      }
    }
    if (pick < 0) {  // numerical tail: fall back to the last kept index
      for (int j = n - 1; j >= 0; --j)
        if (p[static_cast<std::size_t>(j)] > 0.0) {
          pick = j;
          break;
        }
    }
    grid.v.push_back(pick);
    tokens.push_back(pick);
  }
  return grid;
}

}  // namespace svq
