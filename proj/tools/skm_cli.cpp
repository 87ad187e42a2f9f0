// skm: simulate, infer, compare, verify for the prokaryotic autoregulation model.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>

#include <CLI11.hpp>
#include <tbb/global_control.h>

#include "skm/errors.hpp"
#include "skm/experiment.hpp"

namespace ex = skm::experiment;
using nlohmann::json;

namespace {

json read_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw skm::ConfigError("cannot read " + path);
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw skm::ConfigError(path + ": " + e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian inference for stochastic kinetic models"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path, out_dir, scenario, sampler;
  std::uint64_t seed = 0;
  std::size_t threads = 0, replicates = 0, param = 0;
  bool all_params = false;
  app.add_option("--config", config_path, "JSON config (or a manifest to replay)");
  auto* seed_opt = app.add_option("--seed", seed, "master seed");
  app.add_option("--threads", threads, "worker threads (0 = all cores)");
  auto* out_opt = app.add_option("--out-dir", out_dir, "output directory");

  auto add_experiment_flags = [&](CLI::App* sub) {
    sub->add_option("--scenario", scenario, "CO or PO");
    sub->add_option("--sampler", sampler, "npmc or pmmh");
    sub->add_option("--replicates", replicates, "number of independent runs P");
    sub->add_option("--param", param, "infer only this rate constant (1-based)");
    sub->add_flag("--all-params", all_params, "infer all rate constants");
  };
  auto* simulate = app.add_subcommand("simulate", "simulate true trajectories and CO/PO observations");
  add_experiment_flags(simulate);
  auto* infer = app.add_subcommand("infer", "run the sampler on every replicate and aggregate metrics");
  add_experiment_flags(infer);

  std::string file_a, file_b;
  auto* compare = app.add_subcommand("compare", "side-by-side table of two aggregate files");
  compare->add_option("a", file_a)->required()->check(CLI::ExistingFile);
  compare->add_option("b", file_b)->required()->check(CLI::ExistingFile);

  bool extended = false;
  auto* verify = app.add_subcommand("verify", "run the numerical verification checks");
  verify->add_flag("--extended", extended, "also run the importance sampling check with particle filter weights");

  CLI11_PARSE(app, argc, argv);

  std::unique_ptr<tbb::global_control> limit;
  if (threads > 0) limit = std::make_unique<tbb::global_control>(tbb::global_control::max_allowed_parallelism, threads);

  try {
    if (*simulate || *infer) {
      ex::ExperimentConfig cfg;
      if (!config_path.empty()) cfg = ex::load_config(config_path, cfg);
      if (*seed_opt) cfg.seed = seed;
      if (*out_opt) cfg.out_dir = out_dir;
      if (!scenario.empty()) cfg.scenario = ex::parse_scenario(scenario);
      if (!sampler.empty()) cfg.sampler = ex::parse_sampler(sampler);
      if (replicates > 0) cfg.replicates = replicates;
      if (all_params) cfg.mode = ex::InferenceMode::all_params;
      if (param > 0) {
        cfg.mode = ex::InferenceMode::single_param;
        cfg.param_index = param - 1;
      }
      if (*simulate) {
        ex::cmd_simulate(cfg);
        std::cout << "wrote " << cfg.replicates << " replicate(s) to " << (std::filesystem::path(cfg.out_dir) / "data")
                  << '\n';
        return 0;
      }
      const auto results = ex::cmd_infer(cfg);
      const auto agg = ex::aggregate(cfg, results);
      std::cout << ex::to_json(agg).dump(2) << '\n';
      for (const auto& r : results)
        if (!r.ok) std::cerr << "run " << r.replicate + 1 << " failed: " << r.error << '\n';
      return 0;
    }
    if (*compare) {
      const auto a = ex::aggregate_from_json(read_json(file_a));
      const auto b = ex::aggregate_from_json(read_json(file_b));
      const auto doc = ex::cmd_compare(a, b, std::cout);
      if (*out_opt) {
        std::filesystem::create_directories(out_dir);
        std::ofstream(std::filesystem::path(out_dir) / "comparison.json") << doc.dump(2) << '\n';
      }
      return 0;
    }
    if (*verify) {
      ex::VerifyConfig vc;
      if (!config_path.empty()) vc = ex::verify_config_from_json(read_json(config_path));
      if (extended && !vc.nis_pf_rate) vc.nis_pf_rate.emplace();
      const auto report = ex::cmd_verify(vc);
      std::cout << report.dump(2) << '\n';
      if (*out_opt) {
        std::filesystem::create_directories(out_dir);
        std::ofstream(std::filesystem::path(out_dir) / "verify_report.json") << report.dump(2) << '\n';
      }
      return report.at("pass").get<bool>() ? 0 : 1;
    }
  } catch (const skm::PreconditionError& e) {
    std::cerr << "precondition violated: " << e.what() << '\n';
    return 2;
  } catch (const skm::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
