#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "skm/diagnostics.hpp"
#include "skm/gillespie.hpp"
#include "skm/network.hpp"
#include "skm/npmc.hpp"
#include "skm/pmmh.hpp"
#include "skm/verify.hpp"

namespace skm::experiment {

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kVersion = "1.0.0";

enum class Scenario { CO, PO };
enum class InferenceMode { single_param, all_params };
enum class SamplerKind { pmmh, npmc };

std::string to_string(Scenario s);
std::string to_string(InferenceMode m);
std::string to_string(SamplerKind k);
Scenario parse_scenario(const std::string& s);
SamplerKind parse_sampler(const std::string& s);

struct ExperimentConfig {
  Scenario scenario = Scenario::CO;
  InferenceMode mode = InferenceMode::single_param;
  std::size_t param_index = 0;  // 0-based, single_param only
  std::size_t steps = 100;      // N
  double delta = 1.0;
  double noise_variance = 4.0;
  std::vector<double> true_rates = prokaryotic::true_rates();
  StateVector x0 = prokaryotic::initial_state();
  std::vector<double> x0_means{8, 8, 8, 5, 5};  // Poisson prior on x0
  double theta_lo = -7.0;
  double theta_hi = 2.0;
  Count gene_copies = 10;
  SamplerKind sampler = SamplerKind::npmc;
  PmmhConfig pmmh{};
  NpmcConfig npmc{};
  /// Per-particle, per-interval SSA cap inside the particle filter.
  std::uint64_t event_cap = 100'000;
  std::size_t replicates = 1;  // P
  std::uint64_t seed = 1;
  std::string out_dir = "skm_out";
  bool write_samples = true;

  void validate() const;
  ReactionNetwork network() const;
  PriorSpec priors() const;
  ObservationModel observation_model(Scenario s) const;
  ParameterLayout layout() const;
  std::vector<double> true_theta() const;  // log of true_rates
  std::vector<std::string> free_names() const;
};

/// Overlays `doc` on `base`. Unknown keys are a ConfigError. A manifest is
/// accepted too: its "config" member is used.
ExperimentConfig config_from_json(const nlohmann::json& doc, ExperimentConfig base = {});
nlohmann::json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base = {});

/// Per-replicate seeds, all derived from the master seed.
struct ReplicateSeeds {
  std::uint64_t trajectory;
  std::uint64_t noise_co;
  std::uint64_t noise_po;
  std::uint64_t sampler;
};
ReplicateSeeds replicate_seeds(const ExperimentConfig& cfg, std::size_t p);

/// One true trajectory and both observation sets built from it.
struct ReplicateData {
  Trajectory trajectory;
  ObservationSet co;
  ObservationSet po;
  const ObservationSet& for_scenario(Scenario s) const { return s == Scenario::CO ? co : po; }
};
ReplicateData simulate_replicate(const ExperimentConfig& cfg, std::size_t p);

struct ReplicateResult {
  std::size_t replicate = 0;
  bool ok = false;
  std::string error;
  MetricRecord metrics;
  /// NPMC only: NESS and mean MSE after each iteration.
  std::vector<double> ness_series;
  std::vector<double> mse_series;
  double seconds = 0.0;
  std::size_t samples_drawn = 0;  // M*L or I, for the per-10^3 timing
  std::uint64_t seed = 0;
};

/// Runs the configured sampler on one replicate's observations.
/// Sampler failures are caught and reported through `ok`/`error`.
ReplicateResult infer_replicate(const ExperimentConfig& cfg, const ObservationSet& obs, std::size_t p,
                                std::ostream* samples_csv = nullptr);

struct Aggregate {
  std::string scenario;
  std::string sampler;
  std::string mode;
  std::size_t steps = 0;
  std::vector<std::string> params;
  std::size_t runs = 0;
  std::size_t failures = 0;
  std::vector<double> mse_mean;  // per parameter
  double mean_mse = 0.0;
  double std_mse = 0.0;
  double ness_mean = 0.0;
  double ness_std = 0.0;
  double acceptance_mean = -1.0;
  double acceptance_std = 0.0;
  std::vector<double> ness_series_mean;  // NPMC only
  std::vector<double> mse_series_mean;
};
Aggregate aggregate(const ExperimentConfig& cfg, const std::vector<ReplicateResult>& results);
nlohmann::json to_json(const Aggregate& a);
Aggregate aggregate_from_json(const nlohmann::json& doc);

// Subcommands. Each writes into cfg.out_dir.
void cmd_simulate(const ExperimentConfig& cfg);
/// Reads the simulated data (simulating first when it is missing).
std::vector<ReplicateResult> cmd_infer(const ExperimentConfig& cfg);
/// Side-by-side table; ConfigError when the two aggregates are not comparable.
nlohmann::json cmd_compare(const Aggregate& a, const Aggregate& b, std::ostream& table);

struct VerifyConfig {
  std::size_t clipping_trials = 1000;
  std::size_t clipping_samples = 200;
  std::size_t clipping_clip = 20;
  double clipping_a = 10.0;
  std::uint64_t clipping_seed = 20240600;
  verify::RateCheckConfig is_rate{};
  verify::PfRateConfig pf_rate{};
  std::optional<verify::NisPfRateConfig> nis_pf_rate;  // off unless requested
};
VerifyConfig verify_config_from_json(const nlohmann::json& doc);
/// Runs every check; the report's "pass" is the conjunction. Precondition
/// errors propagate.
nlohmann::json cmd_verify(const VerifyConfig& cfg);

}  // namespace skm::experiment
