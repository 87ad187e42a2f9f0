#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <tbb/global_control.h>
#include <tbb/task_arena.h>

#include "skm/errors.hpp"
#include "skm/experiment.hpp"

using namespace skm;
using namespace skm::experiment;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("skm_test_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

ExperimentConfig small_npmc(const fs::path& dir) {
  ExperimentConfig cfg;
  cfg.out_dir = dir.string();
  cfg.steps = 10;
  cfg.replicates = 2;
  cfg.sampler = SamplerKind::npmc;
  cfg.npmc.iterations = 2;
  cfg.npmc.samples = 30;
  cfg.npmc.clip = 5;
  cfg.npmc.particles = 10;
  return cfg;
}

}  // namespace

TEST_SUITE("cli-harness") {

TEST_CASE("config round trip and precedence") {
  ExperimentConfig cfg;
  cfg.scenario = Scenario::PO;
  cfg.mode = InferenceMode::all_params;
  cfg.sampler = SamplerKind::pmmh;
  cfg.pmmh.iterations = 1234;
  cfg.seed = 99;
  const auto back = config_from_json(config_to_json(cfg));
  CHECK(config_to_json(back) == config_to_json(cfg));

  // a file value overrides the default; values absent from the file keep the base
  ExperimentConfig base;
  base.replicates = 7;
  const auto merged = config_from_json(nlohmann::json{{"schema_version", 1}, {"seed", 5}}, base);
  CHECK(merged.seed == 5);
  CHECK(merged.replicates == 7);
  CHECK(merged.steps == 100);
}

TEST_CASE("config errors") {
  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"sede", 5}}), ConfigError);
  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"schema_version", 2}}), ConfigError);
  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"scenario", "XO"}}), ConfigError);
  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"npmc", {{"samples", "many"}}}}), ConfigError);
  ExperimentConfig cfg;
  cfg.replicates = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("pmmh with no retained samples is refused") {
  ExperimentConfig cfg;
  cfg.sampler = SamplerKind::pmmh;
  cfg.pmmh.iterations = 500;
  cfg.pmmh.burn_in = 500;
  try {
    cfg.validate();
    FAIL("expected a ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("no retained samples") != std::string::npos);
  }
}

TEST_CASE("scenario fixes the observation matrix") {
  ExperimentConfig cfg;
  CHECK(cfg.observation_model(Scenario::CO).matrix.isIdentity());
  CHECK(cfg.observation_model(Scenario::PO).matrix.rows() == 1);
  CHECK(cfg.layout().free == std::vector<std::size_t>{0});
  cfg.mode = InferenceMode::all_params;
  CHECK(cfg.layout().free.size() == 8);
}

TEST_CASE("simulate writes conserved, reproducible data") {
  const auto dir = scratch_dir("simulate");
  ExperimentConfig cfg;
  cfg.out_dir = dir.string();
  cfg.replicates = 3;
  cmd_simulate(cfg);
  const auto t1 = dir / "data" / "trajectory_p1.csv";
  std::ifstream is(t1);
  const auto states = read_trajectory_csv(is);
  REQUIRE(states.size() == 100);
  for (const auto& x : states) CHECK(x[3] + x[4] == 10);
  const std::string first = slurp(t1), po = slurp(dir / "data" / "observations_PO_p1.csv");
  CHECK(first != slurp(dir / "data" / "trajectory_p2.csv"));
  CHECK(slurp(dir / "data" / "trajectory_p2.csv") != slurp(dir / "data" / "trajectory_p3.csv"));
  cmd_simulate(cfg);
  CHECK(slurp(t1) == first);
  CHECK(slurp(dir / "data" / "observations_PO_p1.csv") == po);
  const auto manifest = nlohmann::json::parse(slurp(dir / "data" / "manifest.json"));
  CHECK(manifest.at("replicates").size() == 3);
  CHECK(manifest.at("files").size() == 9);
  fs::remove_all(dir);
}

TEST_CASE("CO and PO observe the same trajectory") {
  ExperimentConfig cfg;
  const auto d = simulate_replicate(cfg, 0);
  for (std::size_t n = 0; n < d.trajectory.steps(); ++n) {
    const auto& x = d.trajectory.states[n];
    // both observation sets stay within noise of the same latent state
    CHECK(std::abs(d.po.y(static_cast<Eigen::Index>(n), 0) - static_cast<double>(x[1] + 2 * x[2])) < 12.0);
    CHECK(std::abs(d.co.y(static_cast<Eigen::Index>(n), 0) - static_cast<double>(x[0])) < 12.0);
  }
}

TEST_CASE("infer is deterministic across replays and thread counts") {
  const auto dir = scratch_dir("infer");
  auto cfg = small_npmc(dir);
  std::vector<ReplicateResult> a, b;
  {
    tbb::global_control gc(tbb::global_control::max_allowed_parallelism, 1);
    a = cmd_infer(cfg);
  }
  const auto agg_file = dir / "aggregate_npmc_CO_theta1.json";
  const auto metrics_file = dir / "metrics_npmc_CO_theta1.csv";
  const std::string agg = slurp(agg_file), metrics = slurp(metrics_file);
  {
    tbb::global_control gc(tbb::global_control::max_allowed_parallelism, 4);
    tbb::task_arena arena(4);
    arena.execute([&] { b = cmd_infer(cfg); });
  }
  CHECK(slurp(agg_file) == agg);
  CHECK(slurp(metrics_file) == metrics);
  REQUIRE(a.size() == 2);
  for (const auto& r : a) {
    CHECK(r.ok);
    CHECK(r.ness_series.size() == 2);
    CHECK(r.metrics.mse.size() == 1);
  }
  // replay from the manifest
  const auto manifest = load_config(dir / "manifest_npmc_CO_theta1.json");
  CHECK(config_to_json(manifest) == config_to_json(cfg));
  cmd_infer(manifest);
  CHECK(slurp(agg_file) == agg);

  std::string header;
  std::ifstream m(metrics_file);
  std::getline(m, header);
  CHECK(header == "run,scenario,sampler,MSE_theta_1,meanMSE,NESS,acc_rate");
  fs::remove_all(dir);
}

TEST_CASE("pmmh replicate metrics") {
  ExperimentConfig cfg;
  cfg.steps = 10;
  cfg.sampler = SamplerKind::pmmh;
  cfg.pmmh.iterations = 300;
  cfg.pmmh.burn_in = 100;
  cfg.pmmh.thin = 2;
  cfg.pmmh.particles = 10;
  const auto d = simulate_replicate(cfg, 0);
  const auto r = infer_replicate(cfg, d.co, 0);
  REQUIRE(r.ok);
  CHECK(r.metrics.acceptance_rate >= 0.0);
  CHECK(r.metrics.ness > 0.0);
  CHECK(r.metrics.ness <= 1.0);
  CHECK(r.metrics.mse[0] >= 0.0);
}

TEST_CASE("failed runs are counted, not dropped") {
  ExperimentConfig cfg;
  cfg.steps = 5;
  cfg.event_cap = 1;  // every filter degenerates
  cfg.sampler = SamplerKind::pmmh;
  cfg.pmmh.iterations = 20;
  cfg.pmmh.burn_in = 0;
  cfg.pmmh.thin = 1;
  cfg.pmmh.particles = 5;
  cfg.pmmh.init_retry_cap = 3;
  const auto d = simulate_replicate(cfg, 0);
  std::vector<ReplicateResult> results{infer_replicate(cfg, d.co, 0)};
  CHECK(!results[0].ok);
  CHECK(!results[0].error.empty());
  const auto agg = aggregate(cfg, results);
  CHECK(agg.runs == 1);
  CHECK(agg.failures == 1);
}

TEST_CASE("compare") {
  Aggregate a;
  a.scenario = "CO";
  a.sampler = "npmc";
  a.mode = "all_params";
  a.steps = 100;
  for (int k = 1; k <= 8; ++k) a.params.push_back("theta_" + std::to_string(k));
  a.mse_mean.assign(8, 0.3);
  a.mean_mse = 0.3;
  a.std_mse = 0.1;
  a.ness_mean = 0.2;
  std::stringstream table;
  const auto self = cmd_compare(a, aggregate_from_json(to_json(a)), table);
  for (const auto& row : self.at("rows"))
    if (!row.at("difference").is_null()) CHECK(row.at("difference").get<double>() == 0.0);
  CHECK(table.str().find("mean MSE") != std::string::npos);
  auto b = a;
  b.steps = 50;
  CHECK_THROWS_AS(cmd_compare(a, b, table), ConfigError);
  CHECK_THROWS_AS(aggregate_from_json(nlohmann::json{{"kind", "aggregate"}}), ConfigError);
}

TEST_CASE("verify report") {
  VerifyConfig cfg;
  cfg.clipping_trials = 50;
  cfg.is_rate.grid = {100, 400, 1600};
  cfg.is_rate.replicates = 50;
  cfg.pf_rate.particle_grid = {25, 100, 400};
  cfg.pf_rate.replicates = 50;
  cfg.pf_rate.theta_grid = {0.0, 0.5};
  const auto report = cmd_verify(cfg);
  CHECK(report.at("pass").get<bool>());
  for (const auto& c : report.at("checks")) {
    CHECK(c.contains("pass"));
    if (c.at("name") != "clipping_example") CHECK(c.contains("seed"));
  }
  const auto parsed = verify_config_from_json(nlohmann::json{{"is_rate", {{"a", 1.5}}}});
  CHECK_THROWS_AS(cmd_verify(parsed), PreconditionError);
  CHECK_THROWS_AS(verify_config_from_json(nlohmann::json{{"bogus", 1}}), ConfigError);
}

}  // TEST_SUITE
