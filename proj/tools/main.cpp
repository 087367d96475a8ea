#include <CLI11.hpp>
#include <iostream>
#include <string>
#include <vector>

#include "svq/config.h"
#include "svq/train.h"

using namespace svq;

namespace {

// Layering: defaults, then preset, then config file, then --set pairs.
RunConfig build_config(const std::string& preset, const std::string& file,
                       const std::vector<std::string>& sets) {
  RunConfig cfg;
  if (!preset.empty()) apply_preset(cfg, preset);
  if (!file.empty()) apply_config_file(cfg, file);
  for (const std::string& kv : sets) cfg.set_kv(kv);
  return cfg;
}

void add_override_opts(CLI::App* cmd, std::vector<std::string>& sets,
                       std::string& out, std::string& seed) {
  cmd->add_option("--set", sets, "override key=value (repeatable)");
  cmd->add_option("--out", out, "output directory");
  cmd->add_option("--seed", seed, "rng seed");
}

std::vector<std::string> merge_overrides(std::vector<std::string> sets,
                                         const std::string& out,
                                         const std::string& seed) {
  if (!out.empty()) sets.push_back("out_dir=" + out);
  if (!seed.empty()) sets.push_back("seed=" + seed);
  return sets;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spiking vector-quantized autoencoder with a temporal codebook"};
  app.require_subcommand(1);

  std::string t_preset, t_config, t_resume, t_out, t_seed;
  std::vector<std::string> t_set;
  CLI::App* train = app.add_subcommand("train", "train the first stage");
  train->add_option("--preset", t_preset, "named defaults (toy, compare)");
  train->add_option("--config", t_config, "key=value config file");
  train->add_option("--resume", t_resume, "checkpoint to continue from");
  add_override_opts(train, t_set, t_out, t_seed);

  std::string tp_ckpt, tp_out, tp_seed;
  std::vector<std::string> tp_set;
  CLI::App* train_prior =
      app.add_subcommand("train-prior", "train the index prior on a first stage");
  train_prior->add_option("ckpt", tp_ckpt, "first-stage checkpoint")->required();
  add_override_opts(train_prior, tp_set, tp_out, tp_seed);

  std::string s_prior, s_model, s_out, s_seed, s_temp, s_topk;
  std::vector<std::string> s_set;
  int s_n = 8;
  CLI::App* sample = app.add_subcommand("sample", "generate images from the prior");
  sample->add_option("--prior", s_prior, "prior checkpoint")->required();
  sample->add_option("--model", s_model, "first-stage checkpoint")->required();
  sample->add_option("-n,--n", s_n, "how many samples");
  sample->add_option("--temperature", s_temp, "softmax temperature");
  sample->add_option("--top-k", s_topk, "keep only the k most likely codes");
  add_override_opts(sample, s_set, s_out, s_seed);

  std::string r_ckpt, r_out, r_seed;
  std::vector<std::string> r_set;
  int r_n = 4;
  CLI::App* recon = app.add_subcommand("reconstruct", "round-trip dataset samples");
  recon->add_option("ckpt", r_ckpt, "first-stage checkpoint")->required();
  recon->add_option("-n,--n", r_n, "how many samples");
  add_override_opts(recon, r_set, r_out, r_seed);

  std::string a_ckpt, a_out, a_seed;
  std::vector<std::string> a_set;
  CLI::App* ablate = app.add_subcommand(
      "ablate-destruction", "reconstruction error vs temporal destruction");
  ablate->add_option("ckpt", a_ckpt, "temporal-codebook checkpoint")->required();
  add_override_opts(ablate, a_set, a_out, a_seed);

  std::string c_preset, c_config, c_out, c_seed;
  std::vector<std::string> c_set;
  CLI::App* compare = app.add_subcommand(
      "compare-codebooks", "train both codebooks at T in {2,4,6}");
  compare->add_option("--preset", c_preset, "named defaults (toy, compare)");
  compare->add_option("--config", c_config, "key=value config file");
  add_override_opts(compare, c_set, c_out, c_seed);

  std::string h_ckpt, h_out = "heatmap.csv";
  CLI::App* heatmap =
      app.add_subcommand("export-heatmap", "entry magnitudes per time step");
  heatmap->add_option("ckpt", h_ckpt, "temporal-codebook checkpoint")->required();
  heatmap->add_option("--out", h_out, "output CSV path");

  std::string i_ckpt;
  CLI::App* info = app.add_subcommand("info", "describe a checkpoint");
  info->add_option("ckpt", i_ckpt, "checkpoint path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*train) {
      cmd_train(build_config(t_preset, t_config,
                             merge_overrides(t_set, t_out, t_seed)),
                t_resume);
    } else if (*train_prior) {
      cmd_train_prior(tp_ckpt, merge_overrides(tp_set, tp_out, tp_seed));
    } else if (*sample) {
      std::vector<std::string> sets = merge_overrides(s_set, s_out, s_seed);
      if (!s_temp.empty()) sets.push_back("temperature=" + s_temp);
      if (!s_topk.empty()) sets.push_back("top_k=" + s_topk);
      cmd_sample(s_prior, s_model, s_n, sets);
    } else if (*recon) {
      cmd_reconstruct(r_ckpt, r_n, merge_overrides(r_set, r_out, r_seed));
    } else if (*ablate) {
      cmd_ablate_destruction(a_ckpt, merge_overrides(a_set, a_out, a_seed));
    } else if (*compare) {
      cmd_compare_codebooks(build_config(
          c_preset, c_config, merge_overrides(c_set, c_out, c_seed)));
    } else if (*heatmap) {
      cmd_export_heatmap(h_ckpt, h_out);
    } else if (*info) {
      cmd_info(i_ckpt);
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
