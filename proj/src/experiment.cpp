#include "skm/experiment.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include <tbb/parallel_for.h>

#include "skm/errors.hpp"
#include "skm/random.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace skm::experiment {

std::string to_string(Scenario s) { return s == Scenario::CO ? "CO" : "PO"; }
std::string to_string(InferenceMode m) { return m == InferenceMode::single_param ? "single_param" : "all_params"; }
std::string to_string(SamplerKind k) { return k == SamplerKind::pmmh ? "pmmh" : "npmc"; }

Scenario parse_scenario(const std::string& s) {
  if (s == "CO") return Scenario::CO;
  if (s == "PO") return Scenario::PO;
  throw ConfigError("unknown scenario '" + s + "' (expected CO or PO)");
}

SamplerKind parse_sampler(const std::string& s) {
  if (s == "pmmh" || s == "pmcmc") return SamplerKind::pmmh;
  if (s == "npmc") return SamplerKind::npmc;
  throw ConfigError("unknown sampler '" + s + "' (expected pmmh or npmc)");
}

namespace {

void check_keys(const json& doc, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!doc.is_object()) throw ConfigError(where + ": expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : doc.items())
    if (!ok.count(k)) throw ConfigError(where + ": unknown key '" + k + "'");
}

template <class T>
void read(const json& doc, const char* key, T& out) {
  if (!doc.contains(key)) return;
  try {
    out = doc.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

std::string prefix(const ExperimentConfig& cfg) {
  return to_string(cfg.sampler) + "_" + to_string(cfg.scenario) + "_" +
         (cfg.mode == InferenceMode::single_param ? "theta" + std::to_string(cfg.param_index + 1) : "all");
}

fs::path data_dir(const ExperimentConfig& cfg) { return fs::path(cfg.out_dir) / "data"; }
fs::path trajectory_file(const ExperimentConfig& cfg, std::size_t p) {
  return data_dir(cfg) / ("trajectory_p" + std::to_string(p + 1) + ".csv");
}
fs::path observation_file(const ExperimentConfig& cfg, Scenario s, std::size_t p) {
  return data_dir(cfg) / ("observations_" + to_string(s) + "_p" + std::to_string(p + 1) + ".csv");
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  return os;
}

void write_json(const fs::path& path, const json& doc) {
  auto os = open_out(path);
  os << doc.dump(2) << '\n';
  if (!os) throw Error("write failed: " + path.string());
}

json inventory(const std::vector<fs::path>& files, const fs::path& root) {
  json out = json::array();
  for (const auto& f : files)
    out.push_back({{"path", fs::relative(f, root).generic_string()}, {"bytes", fs::file_size(f)}});
  return out;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

json number_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }
double number_or_nan(const json& j) { return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>(); }

}  // namespace

void ExperimentConfig::validate() const {
  const std::size_t K = 8, V = 5;
  if (replicates < 1) throw ConfigError("need at least one replicate");
  if (steps < 1) throw ConfigError("need N >= 1 observations");
  if (!(delta > 0.0)) throw ConfigError("delta must be positive");
  if (!(noise_variance > 0.0)) throw ConfigError("noise variance must be positive");
  if (true_rates.size() != K) throw ConfigError("true_rates needs 8 entries");
  for (double c : true_rates)
    if (!(c > 0.0)) throw ConfigError("true rates must be positive");
  if (x0.size() != V || x0_means.size() != V) throw ConfigError("x0 and x0_means need 5 entries");
  if (!(theta_lo < theta_hi)) throw ConfigError("theta bounds must satisfy lo < hi");
  if (mode == InferenceMode::single_param && param_index >= K) throw ConfigError("parameter index out of range");
  if (event_cap < 1) throw ConfigError("event cap must be positive");
  if (sampler == SamplerKind::pmmh) {
    pmmh.validate();
    if (pmmh.retained_count() == 0)
      throw ConfigError("pmmh: burn-in and thinning leave no retained samples (I=" + std::to_string(pmmh.iterations) +
                        ", B=" + std::to_string(pmmh.burn_in) + ", T=" + std::to_string(pmmh.thin) + ")");
  } else {
    npmc.validate();
  }
}

ReactionNetwork ExperimentConfig::network() const { return build_prokaryotic(gene_copies); }

PriorSpec ExperimentConfig::priors() const {
  PriorSpec p;
  p.theta_bounds.assign(true_rates.size(), UniformBounds{theta_lo, theta_hi});
  p.x0_prior = PoissonInitialPrior{x0_means};
  return p;
}

ObservationModel ExperimentConfig::observation_model(Scenario s) const {
  return s == Scenario::CO ? prokaryotic::complete_observation(noise_variance)
                           : prokaryotic::partial_observation(noise_variance);
}

std::vector<double> ExperimentConfig::true_theta() const {
  std::vector<double> t;
  for (double c : true_rates) t.push_back(std::log(c));
  return t;
}

ParameterLayout ExperimentConfig::layout() const {
  return mode == InferenceMode::single_param ? ParameterLayout::single(true_theta(), param_index)
                                             : ParameterLayout::all(true_rates.size());
}

std::vector<std::string> ExperimentConfig::free_names() const {
  std::vector<std::string> out;
  for (std::size_t k : layout().free) out.push_back("theta_" + std::to_string(k + 1));
  return out;
}

ExperimentConfig config_from_json(const json& doc, ExperimentConfig cfg) {
  if (doc.contains("config") && doc.contains("kind")) return config_from_json(doc.at("config"), std::move(cfg));
  check_keys(doc,
             {"schema_version", "scenario", "inference", "steps", "delta", "noise_variance", "true_rates", "x0",
              "x0_means", "theta_bounds", "gene_copies", "sampler", "pmmh", "npmc", "event_cap", "replicates", "seed",
              "out_dir", "write_samples"},
             "config");
  if (doc.contains("schema_version") && doc.at("schema_version") != kSchemaVersion)
    throw ConfigError("unsupported config schema_version " + doc.at("schema_version").dump());
  if (doc.contains("scenario")) cfg.scenario = parse_scenario(doc.at("scenario").get<std::string>());
  if (doc.contains("inference")) {
    const auto& inf = doc.at("inference");
    check_keys(inf, {"mode", "index"}, "inference");
    if (inf.contains("mode")) {
      const auto m = inf.at("mode").get<std::string>();
      if (m == "single_param") cfg.mode = InferenceMode::single_param;
      else if (m == "all_params") cfg.mode = InferenceMode::all_params;
      else throw ConfigError("unknown inference mode '" + m + "'");
    }
    read(inf, "index", cfg.param_index);
  }
  read(doc, "steps", cfg.steps);
  read(doc, "delta", cfg.delta);
  read(doc, "noise_variance", cfg.noise_variance);
  read(doc, "true_rates", cfg.true_rates);
  read(doc, "x0", cfg.x0);
  read(doc, "x0_means", cfg.x0_means);
  if (doc.contains("theta_bounds")) {
    const auto b = doc.at("theta_bounds").get<std::vector<double>>();
    if (b.size() != 2) throw ConfigError("theta_bounds needs [lo, hi]");
    cfg.theta_lo = b[0];
    cfg.theta_hi = b[1];
  }
  read(doc, "gene_copies", cfg.gene_copies);
  if (doc.contains("sampler")) cfg.sampler = parse_sampler(doc.at("sampler").get<std::string>());
  if (doc.contains("pmmh")) {
    const auto& p = doc.at("pmmh");
    check_keys(p, {"iterations", "burn_in", "thin", "proposal_variance", "particles", "init_retry_cap"}, "pmmh");
    read(p, "iterations", cfg.pmmh.iterations);
    read(p, "burn_in", cfg.pmmh.burn_in);
    read(p, "thin", cfg.pmmh.thin);
    read(p, "proposal_variance", cfg.pmmh.proposal_variance);
    read(p, "particles", cfg.pmmh.particles);
    read(p, "init_retry_cap", cfg.pmmh.init_retry_cap);
  }
  if (doc.contains("npmc")) {
    const auto& n = doc.at("npmc");
    check_keys(n, {"iterations", "samples", "clip", "particles", "jitter"}, "npmc");
    read(n, "iterations", cfg.npmc.iterations);
    read(n, "samples", cfg.npmc.samples);
    read(n, "clip", cfg.npmc.clip);
    read(n, "particles", cfg.npmc.particles);
    read(n, "jitter", cfg.npmc.jitter);
  }
  read(doc, "event_cap", cfg.event_cap);
  read(doc, "replicates", cfg.replicates);
  read(doc, "seed", cfg.seed);
  read(doc, "out_dir", cfg.out_dir);
  read(doc, "write_samples", cfg.write_samples);
  return cfg;
}

json config_to_json(const ExperimentConfig& cfg) {
  json inf = {{"mode", to_string(cfg.mode)}};
  if (cfg.mode == InferenceMode::single_param) inf["index"] = cfg.param_index;
  return {{"schema_version", kSchemaVersion},
          {"scenario", to_string(cfg.scenario)},
          {"inference", inf},
          {"steps", cfg.steps},
          {"delta", cfg.delta},
          {"noise_variance", cfg.noise_variance},
          {"true_rates", cfg.true_rates},
          {"x0", cfg.x0},
          {"x0_means", cfg.x0_means},
          {"theta_bounds", {cfg.theta_lo, cfg.theta_hi}},
          {"gene_copies", cfg.gene_copies},
          {"sampler", to_string(cfg.sampler)},
          {"pmmh",
           {{"iterations", cfg.pmmh.iterations},
            {"burn_in", cfg.pmmh.burn_in},
            {"thin", cfg.pmmh.thin},
            {"proposal_variance", cfg.pmmh.proposal_variance},
            {"particles", cfg.pmmh.particles},
            {"init_retry_cap", cfg.pmmh.init_retry_cap}}},
          {"npmc",
           {{"iterations", cfg.npmc.iterations},
            {"samples", cfg.npmc.samples},
            {"clip", cfg.npmc.clip},
            {"particles", cfg.npmc.particles},
            {"jitter", cfg.npmc.jitter}}},
          {"event_cap", cfg.event_cap},
          {"replicates", cfg.replicates},
          {"seed", cfg.seed},
          {"out_dir", cfg.out_dir},
          {"write_samples", cfg.write_samples}};
}

ExperimentConfig load_config(const fs::path& path, ExperimentConfig base) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config " + path.string());
  json doc;
  try {
    doc = json::parse(is);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return config_from_json(doc, std::move(base));
}

ReplicateSeeds replicate_seeds(const ExperimentConfig& cfg, std::size_t p) {
  return {derive_seed(cfg.seed, {1, p}), derive_seed(cfg.seed, {2, p}), derive_seed(cfg.seed, {3, p}),
          derive_seed(cfg.seed, {4, p, static_cast<std::uint64_t>(cfg.scenario),
                                 static_cast<std::uint64_t>(cfg.sampler)})};
}

ReplicateData simulate_replicate(const ExperimentConfig& cfg, std::size_t p) {
  const auto net = cfg.network();
  const auto seeds = replicate_seeds(cfg, p);
  ReplicateData d;
  Rng traj_rng(seeds.trajectory);
  d.trajectory = simulate_trajectory(net, cfg.true_rates, cfg.x0, cfg.delta, cfg.steps, traj_rng);
  Rng co_rng(seeds.noise_co), po_rng(seeds.noise_po);
  d.co = synthesize_observations(d.trajectory, cfg.observation_model(Scenario::CO), co_rng);
  d.po = synthesize_observations(d.trajectory, cfg.observation_model(Scenario::PO), po_rng);
  return d;
}

ReplicateResult infer_replicate(const ExperimentConfig& cfg, const ObservationSet& obs, std::size_t p,
                                std::ostream* samples_csv) {
  ReplicateResult r;
  r.replicate = p;
  r.seed = replicate_seeds(cfg, p).sampler;
  r.metrics.run_id = std::to_string(p + 1);
  r.metrics.scenario = to_string(cfg.scenario);
  r.metrics.sampler = to_string(cfg.sampler);

  const auto net = cfg.network();
  const auto layout = cfg.layout();
  const auto truth = layout.restrict(cfg.true_theta());
  const std::size_t d = truth.size();
  FilterOptions filter;
  filter.event_cap = cfg.event_cap;
  filter.keep_paths = false;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    if (cfg.sampler == SamplerKind::pmmh) {
      auto pc = cfg.pmmh;
      pc.seed = r.seed;
      pc.keep_paths = false;
      const auto chain = run_pmmh(net, cfg.priors(), obs, layout, pc, filter);
      r.samples_drawn = pc.iterations;
      for (std::size_t k = 0; k < d; ++k) r.metrics.mse.push_back(mse_chain(chain.retained_theta, truth[k], k));
      try {
        r.metrics.ness = ness_mcmc(chain.retained_theta);
      } catch (const PreconditionError&) {
        // a chain that never moved has no autocorrelation to speak of
        r.metrics.ness = 1.0 / static_cast<double>(chain.retained_theta.size());
      }
      r.metrics.acceptance_rate = chain.acceptance_rate;
      if (samples_csv) write_chain_csv(*samples_csv, chain);
    } else {
      auto nc = cfg.npmc;
      nc.seed = r.seed;
      nc.keep_paths = false;
      const auto run = run_npmc(net, cfg.priors(), obs, layout, nc, filter);
      if (run.aborted) throw DegeneratePopulation(run.diagnostic);
      r.samples_drawn = nc.samples * nc.iterations;
      for (const auto& it : run.iterations) {
        double total = 0.0;
        std::vector<double> mse(d);
        for (std::size_t k = 0; k < d; ++k) {
          double m = 0.0, v = 0.0;
          for (std::size_t i = 0; i < it.tiw.size(); ++i) m += it.tiw[i] * it.samples(static_cast<Eigen::Index>(i), k);
          for (std::size_t i = 0; i < it.tiw.size(); ++i) {
            const double e = it.samples(static_cast<Eigen::Index>(i), k) - m;
            v += it.tiw[i] * e * e;
          }
          mse[k] = mse_moments(m, v, truth[k]);
          total += mse[k];
        }
        r.ness_series.push_back(it.ness);
        r.mse_series.push_back(total / static_cast<double>(d));
        r.metrics.mse = mse;
      }
      r.metrics.ness = run.iterations.back().ness;
      if (samples_csv) write_npmc_csv(*samples_csv, run);
    }
    r.metrics.mean_mse = mean_of(r.metrics.mse);
    r.ok = true;
  } catch (const Error& e) {
    r.ok = false;
    r.error = e.what();
    r.metrics.mse.assign(d, std::numeric_limits<double>::quiet_NaN());
    r.metrics.mean_mse = r.metrics.ness = std::numeric_limits<double>::quiet_NaN();
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

Aggregate aggregate(const ExperimentConfig& cfg, const std::vector<ReplicateResult>& results) {
  Aggregate a;
  a.scenario = to_string(cfg.scenario);
  a.sampler = to_string(cfg.sampler);
  a.mode = to_string(cfg.mode);
  a.steps = cfg.steps;
  a.params = cfg.free_names();
  a.runs = results.size();
  const std::size_t d = a.params.size();
  std::vector<std::vector<double>> mse(d);
  std::vector<double> mean_mse, ness, acc;
  std::vector<std::vector<double>> ness_series, mse_series;
  for (const auto& r : results) {
    if (!r.ok) {
      ++a.failures;
      continue;
    }
    for (std::size_t k = 0; k < d; ++k) mse[k].push_back(r.metrics.mse[k]);
    mean_mse.push_back(r.metrics.mean_mse);
    ness.push_back(r.metrics.ness);
    if (r.metrics.acceptance_rate >= 0.0) acc.push_back(r.metrics.acceptance_rate);
    for (std::size_t l = 0; l < r.ness_series.size(); ++l) {
      if (ness_series.size() <= l) ness_series.resize(l + 1), mse_series.resize(l + 1);
      ness_series[l].push_back(r.ness_series[l]);
      mse_series[l].push_back(r.mse_series[l]);
    }
  }
  for (std::size_t k = 0; k < d; ++k) a.mse_mean.push_back(mean_of(mse[k]));
  a.mean_mse = mean_of(mean_mse);
  a.std_mse = std_of(mean_mse);
  a.ness_mean = mean_of(ness);
  a.ness_std = std_of(ness);
  if (!acc.empty()) {
    a.acceptance_mean = mean_of(acc);
    a.acceptance_std = std_of(acc);
  }
  for (std::size_t l = 0; l < ness_series.size(); ++l) {
    a.ness_series_mean.push_back(mean_of(ness_series[l]));
    a.mse_series_mean.push_back(mean_of(mse_series[l]));
  }
  return a;
}

json to_json(const Aggregate& a) {
  json mse = json::array(), ns = json::array(), ms = json::array();
  for (double v : a.mse_mean) mse.push_back(number_or_null(v));
  for (double v : a.ness_series_mean) ns.push_back(number_or_null(v));
  for (double v : a.mse_series_mean) ms.push_back(number_or_null(v));
  return {{"schema_version", kSchemaVersion},
          {"kind", "aggregate"},
          {"scenario", a.scenario},
          {"sampler", a.sampler},
          {"inference_mode", a.mode},
          {"N", a.steps},
          {"params", a.params},
          {"runs", a.runs},
          {"failures", a.failures},
          {"mse", mse},
          {"mean_mse", number_or_null(a.mean_mse)},
          {"std_mse", number_or_null(a.std_mse)},
          {"ness_mean", number_or_null(a.ness_mean)},
          {"ness_std", number_or_null(a.ness_std)},
          {"acceptance_mean", a.acceptance_mean >= 0.0 ? json(a.acceptance_mean) : json(nullptr)},
          {"acceptance_std", a.acceptance_mean >= 0.0 ? json(a.acceptance_std) : json(nullptr)},
          {"ness_series_mean", ns},
          {"mse_series_mean", ms}};
}

Aggregate aggregate_from_json(const json& doc) {
  try {
    if (doc.at("schema_version") != kSchemaVersion || doc.at("kind") != "aggregate")
      throw ConfigError("not a version-1 aggregate file");
    Aggregate a;
    a.scenario = doc.at("scenario").get<std::string>();
    a.sampler = doc.at("sampler").get<std::string>();
    a.mode = doc.at("inference_mode").get<std::string>();
    a.steps = doc.at("N").get<std::size_t>();
    a.params = doc.at("params").get<std::vector<std::string>>();
    a.runs = doc.at("runs").get<std::size_t>();
    a.failures = doc.at("failures").get<std::size_t>();
    for (const auto& v : doc.at("mse")) a.mse_mean.push_back(number_or_nan(v));
    a.mean_mse = number_or_nan(doc.at("mean_mse"));
    a.std_mse = number_or_nan(doc.at("std_mse"));
    a.ness_mean = number_or_nan(doc.at("ness_mean"));
    a.ness_std = number_or_nan(doc.at("ness_std"));
    if (!doc.at("acceptance_mean").is_null()) {
      a.acceptance_mean = doc.at("acceptance_mean").get<double>();
      a.acceptance_std = doc.at("acceptance_std").get<double>();
    }
    for (const auto& v : doc.at("ness_series_mean")) a.ness_series_mean.push_back(number_or_nan(v));
    for (const auto& v : doc.at("mse_series_mean")) a.mse_series_mean.push_back(number_or_nan(v));
    if (a.mse_mean.size() != a.params.size()) throw ConfigError("aggregate: mse and params lengths differ");
    return a;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("aggregate schema error: ") + e.what());
  }
}

void cmd_simulate(const ExperimentConfig& cfg) {
  cfg.validate();
  fs::create_directories(data_dir(cfg));
  const auto net = cfg.network();
  std::vector<fs::path> files;
  json seeds = json::array();
  for (std::size_t p = 0; p < cfg.replicates; ++p) {
    const auto d = simulate_replicate(cfg, p);
    const auto s = replicate_seeds(cfg, p);
    {
      auto os = open_out(trajectory_file(cfg, p));
      write_trajectory_csv(os, d.trajectory);
    }
    for (auto sc : {Scenario::CO, Scenario::PO}) {
      auto os = open_out(observation_file(cfg, sc, p));
      write_observations_csv(os, d.for_scenario(sc));
    }
    files.push_back(trajectory_file(cfg, p));
    files.push_back(observation_file(cfg, Scenario::CO, p));
    files.push_back(observation_file(cfg, Scenario::PO, p));
    seeds.push_back({{"replicate", p + 1},
                     {"trajectory", s.trajectory},
                     {"noise_CO", s.noise_co},
                     {"noise_PO", s.noise_po},
                     {"trajectory_envelope", trajectory_envelope(d.trajectory, net, s.trajectory)}});
  }
  json manifest = {{"schema_version", kSchemaVersion},
                   {"kind", "simulate_manifest"},
                   {"version", kVersion},
                   {"rng", "mt19937_64 streams, splitmix64 seed derivation"},
                   {"config", config_to_json(cfg)},
                   {"network", network_to_json(net)},
                   {"replicates", seeds},
                   {"files", inventory(files, cfg.out_dir)}};
  write_json(data_dir(cfg) / "manifest.json", manifest);
}

std::vector<ReplicateResult> cmd_infer(const ExperimentConfig& cfg) {
  cfg.validate();
  bool have_data = true;
  for (std::size_t p = 0; p < cfg.replicates; ++p)
    if (!fs::exists(observation_file(cfg, cfg.scenario, p))) have_data = false;
  if (!have_data) cmd_simulate(cfg);

  std::vector<ObservationSet> obs(cfg.replicates);
  for (std::size_t p = 0; p < cfg.replicates; ++p) {
    std::ifstream is(observation_file(cfg, cfg.scenario, p));
    if (!is) throw Error("cannot read " + observation_file(cfg, cfg.scenario, p).string());
    obs[p].y = read_observations_csv(is);
    obs[p].model = cfg.observation_model(cfg.scenario);
    obs[p].delta = cfg.delta;
    if (obs[p].steps() != cfg.steps || obs[p].y.cols() != static_cast<Eigen::Index>(obs[p].model.dim()))
      throw ConfigError("observation file does not match the configured N or scenario: " +
                        observation_file(cfg, cfg.scenario, p).string());
  }

  const auto name = prefix(cfg);
  const fs::path out = cfg.out_dir;
  const fs::path runs = out / "runs";
  fs::create_directories(runs);
  std::vector<ReplicateResult> results(cfg.replicates);
  auto samples_file = [&](std::size_t p) {
    return runs / (name + "_p" + std::to_string(p + 1) + (cfg.sampler == SamplerKind::pmmh ? "_chain.csv" : "_npmc.csv"));
  };
  // one replicate per task; seeds are fixed up front so scheduling does not matter
  tbb::parallel_for(std::size_t{0}, cfg.replicates, [&](std::size_t p) {
    if (cfg.write_samples) {
      auto os = open_out(samples_file(p));
      results[p] = infer_replicate(cfg, obs[p], p, &os);
    } else {
      results[p] = infer_replicate(cfg, obs[p], p);
    }
  });

  std::vector<fs::path> files;
  if (cfg.write_samples)
    for (std::size_t p = 0; p < cfg.replicates; ++p) files.push_back(samples_file(p));

  const auto metrics_path = out / ("metrics_" + name + ".csv");
  {
    auto os = open_out(metrics_path);
    os << std::setprecision(10);
    os << "run,scenario,sampler";
    for (const auto& p : cfg.free_names()) os << ",MSE_" << p;
    os << ",meanMSE,NESS,acc_rate\n";
    for (const auto& r : results) {
      os << r.metrics.run_id << ',' << r.metrics.scenario << ',' << r.metrics.sampler;
      for (double m : r.metrics.mse) os << ',' << m;
      os << ',' << r.metrics.mean_mse << ',' << r.metrics.ness << ',';
      if (r.metrics.acceptance_rate >= 0.0) os << r.metrics.acceptance_rate;
      os << '\n';
    }
  }
  files.push_back(metrics_path);

  if (cfg.sampler == SamplerKind::npmc) {
    const auto series_path = out / ("series_" + name + ".csv");
    auto os = open_out(series_path);
    os << std::setprecision(10) << "run,l,NESS,meanMSE\n";
    for (const auto& r : results)
      for (std::size_t l = 0; l < r.ness_series.size(); ++l)
        os << r.metrics.run_id << ',' << l + 1 << ',' << r.ness_series[l] << ',' << r.mse_series[l] << '\n';
    os.close();
    files.push_back(series_path);
  }

  const auto agg = aggregate(cfg, results);
  json agg_doc = to_json(agg);
  json errors = json::array();
  for (const auto& r : results)
    if (!r.ok) errors.push_back({{"run", r.replicate + 1}, {"error", r.error}});
  agg_doc["errors"] = errors;
  const auto agg_path = out / ("aggregate_" + name + ".json");
  write_json(agg_path, agg_doc);
  files.push_back(agg_path);

  json runs_doc = json::array();
  for (const auto& r : results) {
    const double per_k = r.samples_drawn ? r.seconds * 1000.0 / static_cast<double>(r.samples_drawn) : 0.0;
    runs_doc.push_back({{"run", r.replicate + 1},
                        {"sampler_seed", r.seed},
                        {"ok", r.ok},
                        {"seconds", r.seconds},
                        {"seconds_per_1000_samples", per_k}});
  }
  json manifest = {{"schema_version", kSchemaVersion},
                   {"kind", "infer_manifest"},
                   {"version", kVersion},
                   {"rng", "mt19937_64 streams, splitmix64 seed derivation"},
                   {"config", config_to_json(cfg)},
                   {"runs", runs_doc},
                   {"files", inventory(files, out)}};
  write_json(out / ("manifest_" + name + ".json"), manifest);
  return results;
}

json cmd_compare(const Aggregate& a, const Aggregate& b, std::ostream& table) {
  if (a.steps != b.steps)
    throw ConfigError("schema mismatch: N=" + std::to_string(a.steps) + " vs N=" + std::to_string(b.steps));
  if (a.mode != b.mode) throw ConfigError("schema mismatch: inference modes differ");
  if (a.params != b.params) throw ConfigError("schema mismatch: inferred parameters differ");

  const auto label = [](const Aggregate& x) { return x.scenario + " " + x.sampler; };
  json rows = json::array();
  auto row = [&](const std::string& metric, double va, double vb) {
    rows.push_back({{"metric", metric}, {"a", number_or_null(va)}, {"b", number_or_null(vb)},
                    {"difference", number_or_null(vb - va)}});
  };
  for (std::size_t k = 0; k < a.params.size(); ++k) row("MSE " + a.params[k], a.mse_mean[k], b.mse_mean[k]);
  row("mean MSE", a.mean_mse, b.mean_mse);
  row("std MSE", a.std_mse, b.std_mse);
  row("NESS", a.ness_mean, b.ness_mean);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  row("acceptance", a.acceptance_mean >= 0 ? a.acceptance_mean : nan, b.acceptance_mean >= 0 ? b.acceptance_mean : nan);
  row("failures", static_cast<double>(a.failures), static_cast<double>(b.failures));

  auto cell = [](const json& v) {
    if (v.is_null()) return std::string("-");
    std::ostringstream s;
    s << std::fixed << std::setprecision(4) << v.get<double>();
    return s.str();
  };
  table << std::left << std::setw(16) << "metric" << std::setw(14) << label(a) << std::setw(14) << label(b)
        << "difference\n";
  for (const auto& r : rows)
    table << std::setw(16) << r["metric"].get<std::string>() << std::setw(14) << cell(r["a"]) << std::setw(14)
          << cell(r["b"]) << cell(r["difference"]) << '\n';

  // wide form: one line per aggregate, parameters then mean/std of the global MSE
  table << '\n' << std::setw(12) << "";
  for (const auto& p : a.params) table << std::setw(10) << p;
  table << std::setw(10) << "mean MSE" << "std MSE\n";
  for (const auto* x : {&a, &b}) {
    table << std::setw(12) << label(*x);
    for (double v : x->mse_mean) table << std::setw(10) << cell(number_or_null(v));
    table << std::setw(10) << cell(number_or_null(x->mean_mse)) << cell(number_or_null(x->std_mse)) << '\n';
  }
  return {{"schema_version", kSchemaVersion}, {"kind", "comparison"}, {"a", label(a)}, {"b", label(b)},
          {"N", a.steps},                     {"rows", rows}};
}

VerifyConfig verify_config_from_json(const json& doc) {
  VerifyConfig cfg;
  check_keys(doc, {"schema_version", "clipping", "is_rate", "pf_rate", "nis_pf_rate"}, "verify config");
  if (doc.contains("schema_version") && doc.at("schema_version") != kSchemaVersion)
    throw ConfigError("unsupported verify schema_version");
  if (doc.contains("clipping")) {
    const auto& c = doc.at("clipping");
    check_keys(c, {"trials", "samples", "clip", "a", "seed"}, "clipping");
    read(c, "trials", cfg.clipping_trials);
    read(c, "samples", cfg.clipping_samples);
    read(c, "clip", cfg.clipping_clip);
    read(c, "a", cfg.clipping_a);
    read(c, "seed", cfg.clipping_seed);
  }
  if (doc.contains("is_rate")) {
    const auto& c = doc.at("is_rate");
    check_keys(c,
               {"grid", "replicates", "a", "support", "target_mean", "target_sd", "proposal_dof", "proposal_scale",
                "slope_lo", "slope_hi", "seed"},
               "is_rate");
    auto& r = cfg.is_rate;
    read(c, "grid", r.grid);
    read(c, "replicates", r.replicates);
    read(c, "a", r.a);
    read(c, "support", r.support);
    read(c, "target_mean", r.target_mean);
    read(c, "target_sd", r.target_sd);
    read(c, "proposal_dof", r.proposal_dof);
    read(c, "proposal_scale", r.proposal_scale);
    read(c, "slope_lo", r.slope_lo);
    read(c, "slope_hi", r.slope_hi);
    read(c, "seed", r.seed);
  }
  auto read_toy = [](const json& c, verify::TwoStateToy& toy) {
    std::size_t steps = toy.y.size();
    std::uint64_t seed = 7;
    read(c, "toy_steps", steps);
    read(c, "toy_seed", seed);
    if (c.contains("toy_steps") || c.contains("toy_seed")) toy = verify::TwoStateToy::make(steps, seed);
  };
  if (doc.contains("pf_rate")) {
    const auto& c = doc.at("pf_rate");
    check_keys(c, {"particle_grid", "theta_grid", "replicates", "slope_lo", "slope_hi", "seed", "toy_steps", "toy_seed"},
               "pf_rate");
    auto& r = cfg.pf_rate;
    read(c, "particle_grid", r.particle_grid);
    read(c, "theta_grid", r.theta_grid);
    read(c, "replicates", r.replicates);
    read(c, "slope_lo", r.slope_lo);
    read(c, "slope_hi", r.slope_hi);
    read(c, "seed", r.seed);
    read_toy(c, r.toy);
  }
  if (doc.contains("nis_pf_rate") && !doc.at("nis_pf_rate").is_null()) {
    const auto& c = doc.at("nis_pf_rate");
    check_keys(c,
               {"grid", "replicates", "theta_lo", "theta_hi", "proposal_mean", "proposal_sd", "slope_lo", "slope_hi",
                "seed", "toy_steps", "toy_seed"},
               "nis_pf_rate");
    verify::NisPfRateConfig r;
    read(c, "grid", r.grid);
    read(c, "replicates", r.replicates);
    read(c, "theta_lo", r.theta_lo);
    read(c, "theta_hi", r.theta_hi);
    read(c, "proposal_mean", r.proposal_mean);
    read(c, "proposal_sd", r.proposal_sd);
    read(c, "slope_lo", r.slope_lo);
    read(c, "slope_hi", r.slope_hi);
    read(c, "seed", r.seed);
    read_toy(c, r.toy);
    cfg.nis_pf_rate = r;
  }
  return cfg;
}

json cmd_verify(const VerifyConfig& cfg) {
  json checks = json::array();
  bool all = true;

  {
    const std::vector<double> lw{std::log(10.0), std::log(5.0), std::log(3.0), std::log(2.0), std::log(1.0)};
    const auto tiw = clip_weights(lw, 3);
    const std::vector<double> want{0.25, 0.25, 0.25, 1.0 / 6.0, 1.0 / 12.0};
    double err = 0.0;
    for (std::size_t i = 0; i < want.size(); ++i) err = std::max(err, std::abs(tiw[i] - want[i]));
    const bool pass = err < 1e-12;
    all = all && pass;
    checks.push_back({{"name", "clipping_example"}, {"max_abs_error", err}, {"tolerance", 1e-12}, {"pass", pass}});
  }
  {
    const auto s = verify::clipping_bound_sweep(cfg.clipping_trials, cfg.clipping_samples, cfg.clipping_clip,
                                                cfg.clipping_a, cfg.clipping_seed);
    const bool pass = s.failures == 0;
    all = all && pass;
    checks.push_back({{"name", "clipping_bound"},
                      {"trials", s.trials},
                      {"failures", s.failures},
                      {"worst_lhs_over_rhs", s.worst_ratio},
                      {"samples", cfg.clipping_samples},
                      {"clip", cfg.clipping_clip},
                      {"a", cfg.clipping_a},
                      {"seed", cfg.clipping_seed},
                      {"pass", pass}});
  }
  auto add_is = [&](const std::string& name, const verify::IsRateResult& r, std::uint64_t seed, double lo, double hi) {
    const bool pass = r.plain.pass && r.clipped.pass && r.limit_pass;
    all = all && pass;
    auto j = verify::to_json(r);
    j["name"] = name;
    j["seed"] = seed;
    j["slope_band"] = {lo, hi};
    j["pass"] = pass;
    checks.push_back(j);
  };
  add_is("is_rate", verify::check_is_rate(cfg.is_rate), cfg.is_rate.seed, cfg.is_rate.slope_lo, cfg.is_rate.slope_hi);
  {
    const auto r = verify::check_pf_likelihood_rate(cfg.pf_rate);
    all = all && r.pass;
    auto j = verify::to_json(r);
    j["seed"] = cfg.pf_rate.seed;
    j["replicates"] = cfg.pf_rate.replicates;
    j["slope_band"] = {cfg.pf_rate.slope_lo, cfg.pf_rate.slope_hi};
    checks.push_back(j);
  }
  if (cfg.nis_pf_rate)
    add_is("nis_pf_rate", verify::check_nis_pf_rate(*cfg.nis_pf_rate), cfg.nis_pf_rate->seed, cfg.nis_pf_rate->slope_lo,
           cfg.nis_pf_rate->slope_hi);

  return {{"schema_version", kSchemaVersion}, {"kind", "verification_report"}, {"version", kVersion},
          {"checks", checks},                  {"pass", all}};
}

}  // namespace skm::experiment
