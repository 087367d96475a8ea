#include "svq/config.h"

#include <fstream>
#include <sstream>

namespace svq {

namespace {

[[noreturn]] void bad_value(const std::string& key, const std::string& value) {
  throw ConfigError("config: bad value '" + value + "' for key '" + key + "'");
}

int to_int(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  int v = 0;
  try {
    v = std::stoi(value, &used);
  } catch (const std::exception&) {
    bad_value(key, value);
  }
  if (used != value.size()) bad_value(key, value);
  return v;
}

float to_float(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  float v = 0.0f;
  try {
    v = std::stof(value, &used);
  } catch (const std::exception&) {
    bad_value(key, value);
  }
  if (used != value.size()) bad_value(key, value);
  return v;
}

std::uint64_t to_u64(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  std::uint64_t v = 0;
  try {
    v = std::stoull(value, &used);
  } catch (const std::exception&) {
    bad_value(key, value);
  }
  if (used != value.size()) bad_value(key, value);
  return v;
}

std::vector<int> to_int_list(const std::string& key, const std::string& value) {
  std::vector<int> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_int(key, item));
  if (out.empty()) bad_value(key, value);
  return out;
}

std::string trim(const std::string& s) {
  const std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  if (key == "dataset") dataset = value;
  else if (key == "data_path") data_path = value;
  else if (key == "samples") samples = to_int(key, value);
  else if (key == "limit") limit = to_int(key, value);
  else if (key == "presentation") presentation = value;
  else if (key == "in_channels") in_channels = to_int(key, value);
  else if (key == "image_h") image_h = to_int(key, value);
  else if (key == "image_w") image_w = to_int(key, value);
  else if (key == "stem") stem = to_int(key, value);
  else if (key == "stage_widths") stage_widths = to_int_list(key, value);
  else if (key == "latent_c") latent_c = to_int(key, value);
  else if (key == "n_q") n_q = to_int(key, value);
  else if (key == "T") T = to_int(key, value);
  else if (key == "codebook") codebook = value;
  else if (key == "beta") beta = to_float(key, value);
  else if (key == "lambda_p") lambda_p = to_float(key, value);
  else if (key == "perceptual") perceptual = value;
  else if (key == "tau") tau = to_float(key, value);
  else if (key == "v_threshold") v_threshold = to_float(key, value);
  else if (key == "v_reset") v_reset = to_float(key, value);
  else if (key == "surrogate_alpha") surrogate_alpha = to_float(key, value);
  else if (key == "lr") lr = to_float(key, value);
  else if (key == "weight_decay") weight_decay = to_float(key, value);
  else if (key == "batch") batch = to_int(key, value);
  else if (key == "epochs") epochs = to_int(key, value);
  else if (key == "seed") seed = to_u64(key, value);
  else if (key == "p_d") p_d = to_float(key, value);
  else if (key == "prior_layers") prior_layers = to_int(key, value);
  else if (key == "prior_width") prior_width = to_int(key, value);
  else if (key == "prior_heads") prior_heads = to_int(key, value);
  else if (key == "prior_lr") prior_lr = to_float(key, value);
  else if (key == "prior_steps") prior_steps = to_int(key, value);
  else if (key == "temperature") temperature = to_float(key, value);
  else if (key == "top_k") top_k = to_int(key, value);
  else if (key == "out_dir") out_dir = value;
  else throw ConfigError("config: unknown key '" + key + "'");
}

void RunConfig::set_kv(const std::string& kv) {
  const std::size_t eq = kv.find('=');
  if (eq == std::string::npos)
    throw ConfigError("config: expected key=value, got '" + kv + "'");
  set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
}

std::string RunConfig::to_text() const {
  std::ostringstream os;
  os << "dataset=" << dataset << "\n";
  os << "data_path=" << data_path << "\n";
  os << "samples=" << samples << "\n";
  os << "limit=" << limit << "\n";
  os << "presentation=" << presentation << "\n";
  os << "in_channels=" << in_channels << "\n";
  os << "image_h=" << image_h << "\n";
  os << "image_w=" << image_w << "\n";
  os << "stem=" << stem << "\n";
  os << "stage_widths=";
  for (std::size_t i = 0; i < stage_widths.size(); ++i)
    os << (i ? "," : "") << stage_widths[i];
  os << "\n";
  os << "latent_c=" << latent_c << "\n";
  os << "n_q=" << n_q << "\n";
  os << "T=" << T << "\n";
  os << "codebook=" << codebook << "\n";
  os.precision(9);
  os << "beta=" << beta << "\n";
  os << "lambda_p=" << lambda_p << "\n";
  os << "perceptual=" << perceptual << "\n";
  os << "tau=" << tau << "\n";
  os << "v_threshold=" << v_threshold << "\n";
  os << "v_reset=" << v_reset << "\n";
  os << "surrogate_alpha=" << surrogate_alpha << "\n";
  os << "lr=" << lr << "\n";
  os << "weight_decay=" << weight_decay << "\n";
  os << "batch=" << batch << "\n";
  os << "epochs=" << epochs << "\n";
  os << "seed=" << seed << "\n";
  os << "p_d=" << p_d << "\n";
  os << "prior_layers=" << prior_layers << "\n";
  os << "prior_width=" << prior_width << "\n";
  os << "prior_heads=" << prior_heads << "\n";
  os << "prior_lr=" << prior_lr << "\n";
  os << "prior_steps=" << prior_steps << "\n";
  os << "temperature=" << temperature << "\n";
  os << "top_k=" << top_k << "\n";
  os << "out_dir=" << out_dir << "\n";
  return os.str();
}

void RunConfig::validate() const {
  if (dataset != "synthetic" && dataset != "idx" && dataset != "events")
    throw ConfigError("config: dataset must be synthetic, idx, or events, got '" +
                      dataset + "'");
  if (dataset != "synthetic" && data_path.empty())
    throw ConfigError("config: dataset=" + dataset + " needs data_path");
  if (presentation != "temporal" && presentation != "static")
    throw ConfigError("config: presentation must be temporal or static, got '" +
                      presentation + "'");
  if (codebook != "temporal" && codebook != "vanilla")
    throw ConfigError("config: codebook must be temporal or vanilla, got '" +
                      codebook + "'");
  if (perceptual != "identity" && perceptual != "random")
    throw ConfigError("config: perceptual must be identity or random, got '" +
                      perceptual + "'");
  if (samples < 1) throw ConfigError("config: samples must be positive");
  if (limit < 0) throw ConfigError("config: limit must be >= 0");
  if (batch < 1) throw ConfigError("config: batch must be positive");
  if (epochs < 0) throw ConfigError("config: epochs must be >= 0");
  if (lr <= 0) throw ConfigError("config: lr must be positive");
  if (weight_decay < 0) throw ConfigError("config: weight_decay must be >= 0");
  if (lambda_p < 0) throw ConfigError("config: lambda_p must be >= 0");
  if (p_d < 0 || p_d > 1) throw ConfigError("config: p_d must be in [0,1]");
  if (prior_lr <= 0) throw ConfigError("config: prior_lr must be positive");
  if (prior_steps < 0) throw ConfigError("config: prior_steps must be >= 0");
  try {
    model_config().validate();
    prior_config().validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

ModelConfig RunConfig::model_config() const {
  ModelConfig m;
  m.in_channels = in_channels;
  m.image_h = image_h;
  m.image_w = image_w;
  m.stem = stem;
  m.stage_widths = stage_widths;
  m.latent_c = latent_c;
  m.n_q = n_q;
  m.T = T;
  m.temporal_codebook = codebook == "temporal";
  m.beta = beta;
  m.lif.tau = tau;
  m.lif.v_threshold = v_threshold;
  m.lif.v_reset = v_reset;
  m.lif.surrogate_alpha = surrogate_alpha;
  m.decoder_lif = m.lif;
  return m;
}

int RunConfig::sequence_length() const {
  const ModelConfig m = model_config();
  const int sites = m.latent_h() * m.latent_w();
  return codebook == "temporal" ? sites : T * sites;
}

PriorConfig RunConfig::prior_config() const {
  PriorConfig p;
  p.n_q = n_q;
  p.layers = prior_layers;
  p.width = prior_width;
  p.heads = prior_heads;
  p.context = sequence_length() + 1;
  p.temperature = temperature;
  p.top_k = top_k;
  return p;
}

void apply_config_text(RunConfig& cfg, const std::string& text) {
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    try {
      cfg.set_kv(t);
    } catch (const ConfigError& e) {
      throw ConfigError(std::string(e.what()) + " (line " +
                        std::to_string(lineno) + ")");
    }
  }
}

void apply_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in.good()) throw ConfigError("config: cannot open '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  apply_config_text(cfg, os.str());
}

RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  apply_config_text(cfg, text);
  return cfg;
}

RunConfig load_config_file(const std::string& path) {
  RunConfig cfg;
  apply_config_file(cfg, path);
  return cfg;
}

void apply_preset(RunConfig& cfg, const std::string& name) {
  if (name == "toy") {
    cfg.dataset = "synthetic";
    cfg.samples = 64;
    cfg.image_h = 16;
    cfg.image_w = 16;
    cfg.stem = 8;
    cfg.stage_widths = {16, 16};
    cfg.latent_c = 8;
    cfg.n_q = 32;
    cfg.T = 2;
    cfg.codebook = "temporal";
    cfg.batch = 8;
    cfg.epochs = 40;
    cfg.lr = 3e-3f;
  } else if (name == "compare") {
    apply_preset(cfg, "toy");
    cfg.epochs = 300;
  } else {
    throw ConfigError("config: unknown preset '" + name + "'");
  }
}

}  // namespace svq
