#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "mp2/commands.hpp"

namespace {

using mp2::json;

// --config FILE provides defaults; command-line flags override its values.
json load_config_defaults(int argc, char** argv) {
  for (int i = 1; i + 1 < argc; ++i)
    if (std::string(argv[i]) == "--config") return mp2::load_json_file(argv[i + 1]);
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg.rfind("--config=", 0) == 0) return mp2::load_json_file(arg.substr(9));
  }
  return json::object();
}

template <typename T>
void config_default(const json& cfg, const char* key, T& value) {
  if (cfg.contains(key)) value = cfg[key].get<T>();
}

void config_default_path(const json& cfg, const char* key, std::filesystem::path& value) {
  if (cfg.contains(key)) value = cfg[key].get<std::string>();
}

struct SeedGuard {
  bool seen = false;
};

void add_seed(CLI::App* cmd, std::uint64_t& seed, SeedGuard& guard, const json& cfg) {
  if (cfg.contains("seed")) {
    seed = cfg["seed"].get<std::uint64_t>();
    guard.seen = true;
  }
  cmd->add_option_function<std::uint64_t>(
         "--seed",
         [&seed, &guard](const std::uint64_t& v) {
           seed = v;
           guard.seen = true;
         },
         "random seed (required)")
      ->type_name("UINT");
}

void add_sampler_flags(CLI::App* cmd, mp2::SamplerConfig& cfg, const json& defaults) {
  config_default(defaults, "chains", cfg.chains);
  config_default(defaults, "iterations", cfg.iterations);
  config_default(defaults, "warmup", cfg.warmup);
  config_default(defaults, "target_accept", cfg.target_accept);
  config_default(defaults, "max_tree_depth", cfg.max_tree_depth);
  cmd->add_option("--chains", cfg.chains, "number of chains");
  cmd->add_option("--iterations", cfg.iterations, "iterations per chain (warmup included)");
  cmd->add_option("--warmup", cfg.warmup, "warmup iterations (default: half)");
  cmd->add_option("--target-accept", cfg.target_accept, "step size adaptation target");
  cmd->add_option("--max-tree-depth", cfg.max_tree_depth, "trajectory doubling limit");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian inference for directed binary multiplex networks"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string("mp2 ") + mp2::kVersion);

  json cfg;
  try {
    cfg = load_config_defaults(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return mp2::kExitValidation;
  }
  std::string config_path;
  unsigned threads = 0;
  config_default(cfg, "threads", threads);

  mp2::FitOptions fit;
  mp2::SimulateOptions sim;
  mp2::GofOptions gof;
  mp2::SbcCmdOptions sbc;
  mp2::SensitivityCmdOptions sens;
  mp2::MetaCmdOptions meta;
  SeedGuard fit_seed, sim_seed, sbc_seed, sens_seed, meta_seed;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON config file; flags override its values");
    cmd->add_option("--threads", threads, "worker thread bound (default: MP2_THREADS or all cores)");
  };

  {
    CLI::App* cmd = app.add_subcommand("fit", "estimate model parameters from observed data");
    add_common(cmd);
    config_default_path(cfg, "model", fit.model_spec);
    config_default_path(cfg, "data", fit.data.bundle);
    config_default_path(cfg, "out", fit.out_dir);
    config_default(cfg, "strict", fit.strict);
    cmd->add_option("--model", fit.model_spec, "model spec JSON");
    cmd->add_option("--data", fit.data.bundle, "data bundle JSON");
    cmd->add_option("--layer", fit.data.layer_files, "layer CSV (repeat per layer, in spec order)");
    cmd->add_option("--out", fit.out_dir, "output directory")->required(false);
    cmd->add_flag("--strict", fit.strict, "exit 3 when any R-hat exceeds 1.05");
    add_sampler_flags(cmd, fit.sampler, cfg);
    add_seed(cmd, fit.sampler.seed, fit_seed, cfg);
  }
  {
    CLI::App* cmd = app.add_subcommand("simulate", "generate networks from prior, posterior, or fixed parameters");
    add_common(cmd);
    config_default_path(cfg, "model", sim.model_spec);
    config_default_path(cfg, "data", sim.data.bundle);
    config_default_path(cfg, "out", sim.out_dir);
    config_default_path(cfg, "draws", sim.draws_file);
    config_default_path(cfg, "params", sim.params_file);
    config_default(cfg, "from", sim.from);
    config_default(cfg, "count", sim.count);
    config_default(cfg, "n", sim.n);
    cmd->add_option("--model", sim.model_spec, "model spec JSON");
    cmd->add_option("--from", sim.from, "prior | posterior | params");
    cmd->add_option("--count", sim.count, "number of networks");
    cmd->add_option("--n", sim.n, "actor count");
    cmd->add_option("--data", sim.data.bundle, "data bundle (covariates / actor count)");
    cmd->add_option("--draws", sim.draws_file, "draws CSV (posterior mode)");
    cmd->add_option("--params", sim.params_file, "parameter JSON (params mode)");
    cmd->add_option("--out", sim.out_dir, "output directory");
    add_seed(cmd, sim.seed, sim_seed, cfg);
  }
  {
    CLI::App* cmd = app.add_subcommand("gof", "goodness-of-fit report against a simulated batch");
    add_common(cmd);
    config_default_path(cfg, "model", gof.model_spec);
    config_default_path(cfg, "observed", gof.observed.bundle);
    config_default_path(cfg, "batch", gof.batch_dir);
    config_default_path(cfg, "out", gof.out_dir);
    config_default(cfg, "statistics", gof.statistics);
    cmd->add_option("--model", gof.model_spec, "model spec JSON (layer order)");
    cmd->add_option("--observed", gof.observed.bundle, "observed data bundle JSON");
    cmd->add_option("--layer", gof.observed.layer_files, "observed layer CSV (repeatable)");
    cmd->add_option("--batch", gof.batch_dir, "simulated batch directory");
    cmd->add_option("--statistics", gof.statistics,
                    "all or a comma list: density,reciprocity,transitivity,degrees,triads,"
                    "jaccard,cross_reciprocity,degree_correlations");
    cmd->add_option("--out", gof.out_dir, "output directory");
  }
  {
    CLI::App* cmd = app.add_subcommand("sbc", "simulation-based calibration of the sampler");
    add_common(cmd);
    config_default_path(cfg, "model", sbc.model_spec);
    config_default_path(cfg, "out", sbc.out_dir);
    config_default(cfg, "n", sbc.n);
    config_default(cfg, "L", sbc.sbc.L);
    config_default(cfg, "K", sbc.sbc.K);
    config_default(cfg, "bins", sbc.bins);
    config_default(cfg, "rhat_threshold", sbc.sbc.rhat_threshold);
    cmd->add_option("--model", sbc.model_spec, "model spec JSON");
    cmd->add_option("--n", sbc.n, "actor count for the synthetic networks");
    cmd->add_option("--L", sbc.sbc.L, "number of replications");
    cmd->add_option("--K", sbc.sbc.K, "posterior draws kept per replication");
    cmd->add_option("--bins", sbc.bins, "histogram bins for the uniformity check");
    cmd->add_option("--rhat-threshold", sbc.sbc.rhat_threshold, "convergence gate per fit");
    cmd->add_option("--out", sbc.out_dir, "output directory (holds resume checkpoints)");
    add_sampler_flags(cmd, sbc.sbc.sampler, cfg);
    add_seed(cmd, sbc.sbc.seed, sbc_seed, cfg);
  }
  {
    CLI::App* cmd = app.add_subcommand("sensitivity", "posterior z-score and contraction study");
    add_common(cmd);
    config_default_path(cfg, "model", sens.model_spec);
    config_default_path(cfg, "out", sens.out_dir);
    config_default(cfg, "n", sens.n);
    config_default(cfg, "L", sens.sens.L);
    config_default(cfg, "rhat_threshold", sens.sens.rhat_threshold);
    cmd->add_option("--model", sens.model_spec, "model spec JSON");
    cmd->add_option("--n", sens.n, "actor count for the synthetic networks");
    cmd->add_option("--L", sens.sens.L, "number of replications");
    cmd->add_option("--rhat-threshold", sens.sens.rhat_threshold, "convergence gate per fit");
    cmd->add_option("--out", sens.out_dir, "output directory (holds resume checkpoints)");
    add_sampler_flags(cmd, sens.sens.sampler, cfg);
    add_seed(cmd, sens.sens.seed, sens_seed, cfg);
  }
  {
    CLI::App* cmd = app.add_subcommand("meta", "normal-normal hierarchical meta-analysis");
    add_common(cmd);
    config_default_path(cfg, "input", meta.input);
    config_default_path(cfg, "out", meta.out_dir);
    config_default(cfg, "mu_sd", meta.prior.mu_sd);
    config_default(cfg, "cov_mu_sd", meta.cov_mu_sd);
    config_default(cfg, "tau_scale", meta.prior.tau_scale);
    cmd->add_option("--input", meta.input, "CSV of group,parameter,mean,sd");
    cmd->add_option("--mu-sd", meta.prior.mu_sd, "prior sd of the population mean");
    cmd->add_option("--cov-mu-sd", meta.cov_mu_sd,
                    "population-mean prior sd for sigma/Omega parameters");
    cmd->add_option("--tau-scale", meta.prior.tau_scale, "half-Cauchy scale of the population sd");
    cmd->add_option("--out", meta.out_dir, "output directory");
    add_sampler_flags(cmd, meta.sampler, cfg);
    add_seed(cmd, meta.sampler.seed, meta_seed, cfg);
  }

  CLI11_PARSE(app, argc, argv);

  auto require_seed = [](const SeedGuard& guard) {
    if (!guard.seen) throw mp2::ValidationError("a seed is required (--seed)");
  };
  auto require_out = [](const std::filesystem::path& out) {
    if (out.empty()) throw mp2::ValidationError("an output directory is required (--out)");
  };

  try {
    if (app.got_subcommand("fit")) {
      require_seed(fit_seed);
      require_out(fit.out_dir);
      fit.threads = threads;
      return cmd_fit(fit);
    }
    if (app.got_subcommand("simulate")) {
      require_seed(sim_seed);
      require_out(sim.out_dir);
      sim.threads = threads;
      return cmd_simulate(sim);
    }
    if (app.got_subcommand("gof")) {
      require_out(gof.out_dir);
      return cmd_gof(gof);
    }
    if (app.got_subcommand("sbc")) {
      require_seed(sbc_seed);
      require_out(sbc.out_dir);
      sbc.threads = threads;
      return cmd_sbc(sbc);
    }
    if (app.got_subcommand("sensitivity")) {
      require_seed(sens_seed);
      require_out(sens.out_dir);
      sens.threads = threads;
      return cmd_sensitivity(sens);
    }
    if (app.got_subcommand("meta")) {
      require_seed(meta_seed);
      require_out(meta.out_dir);
      meta.threads = threads;
      return cmd_meta(meta);
    }
  } catch (const mp2::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return mp2::kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return mp2::kExitError;
  }
  return mp2::kExitOk;
}
