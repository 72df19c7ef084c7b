#pragma once

// End-to-end study: synthesize ground motions, run the structural model,
// estimate fragility curves with every method, bootstrap them, and write
// plot-ready CSV artifacts.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "seisfrag/bootstrap.hpp"
#include "seisfrag/fragility.hpp"
#include "seisfrag/ground_motion.hpp"
#include "seisfrag/nonparametric.hpp"
#include "seisfrag/parametric.hpp"
#include "seisfrag/structural.hpp"

namespace seisfrag::pipeline {

inline constexpr const char* kVersion = "seisfrag 1.0.0";

enum class ImType { kPga, kSa };
const char* im_name(ImType t);
ImType parse_im(const std::string& name);  // throws ConfigError

enum class Method { kMle, kLr, kBmcs, kKde };
const char* method_name(Method m);
Method parse_method(const std::string& name);  // throws ConfigError
inline constexpr Method kAllMethods[] = {Method::kMle, Method::kLr, Method::kBmcs, Method::kKde};

struct StructureSpec {
  std::size_t n_storeys = 3;
  double floor_mass = 30.58e3;
  double target_t1 = 0.42;
  double storey_height = 3.0;
  double yield_drift_ratio = 0.006;
  double hardening_ratio = 0.01;
  double damping_ratio = 0.02;
  bool linear = false;

  structure::ShearBuildingModel build() const;
};

struct StudyConfig {
  std::size_t n_motions = 2000;
  double dt = 0.01;
  std::uint64_t master_seed = 20140101;
  std::size_t jobs = 1;
  std::filesystem::path output_dir = "seisfrag_out";

  gm::ScenarioDistributions scenario = gm::ScenarioDistributions::defaults();
  double truncation_efolds = 8.0;
  StructureSpec structure;
  double sa_damping = 0.05;

  std::vector<double> thresholds{0.007, 0.015, 0.025};
  std::vector<ImType> im_types{ImType::kPga, ImType::kSa};
  std::size_t grid_points = 60;
  nonparametric::BmcsSettings bmcs;
  nonparametric::MarginalMode kde_mode = nonparametric::MarginalMode::kMatrixConsistent;
  // User-supplied KDE settings per IM type; normal-reference otherwise.
  std::map<ImType, nonparametric::KdeSettings> kde_user;

  std::size_t bootstrap_replications = 100;
  double bootstrap_confidence = 0.95;
  std::uint64_t bootstrap_seed = 7;
  std::vector<Method> bootstrap_methods{Method::kBmcs, Method::kKde};

  void validate() const;  // throws ConfigError
  std::string to_json() const;
  // Digest of the canonical JSON form, excluding jobs and output_dir.
  std::string hash() const;
  // Digest of the keys that determine the sample store contents.
  std::string store_hash() const;
};

// Keys absent from the JSON keep their defaults; unknown keys are rejected.
StudyConfig config_from_json(const std::string& text);
StudyConfig load_config(const std::filesystem::path& path);

// ---------------------------------------------------------------------------

struct StoreRecord {
  std::size_t record_id = 0;
  std::uint64_t seed = 0;
  std::size_t attempts = 0;
  bool skipped = false;  // no feasible scenario within the attempt budget
  gm::GroundMotionScenario scenario;
  double pga_g = 0.0;
  double arias = 0.0;
  double d595 = 0.0;
  double t_mid = 0.0;
  bool simulated = false;
  double sa_g = 0.0;
  double delta = 0.0;
  bool converged = false;
};

struct SampleStore {
  std::vector<StoreRecord> records;
  std::string config_hash;
  double model_t1 = 0.0;

  std::size_t skipped() const;
  std::size_t simulated() const;
  std::size_t non_converged() const;
};

std::string store_to_csv(const SampleStore& store);
SampleStore store_from_csv(const std::string& text);
void save_store(const std::filesystem::path& dir, const SampleStore& store, const StudyConfig& config);
SampleStore load_store(const std::filesystem::path& dir);

// (IM, delta) pairs of simulated, converged records.
SampleSet fragility_samples(const SampleStore& store, ImType type);

// ---------------------------------------------------------------------------

inline constexpr std::size_t kMaxScenarioAttempts = 10;

struct GeneratedRecord {
  std::size_t attempts = 0;
  std::optional<gm::Accelerogram> accelerogram;  // nullopt when skipped
};

// Deterministic in (config, record_id): draws scenarios from the record's own
// stream until one is feasible, then synthesizes it.
GeneratedRecord generate_record(const StudyConfig& config, std::size_t record_id);

struct SimulatedRecord {
  double sa_g = 0.0;
  double delta = 0.0;
  bool converged = true;
};

SimulatedRecord simulate_record(const structure::ShearBuildingModel& model, double sa_period, double sa_damping,
                                const gm::Accelerogram& a);

SampleStore generate_store(const StudyConfig& config);

// Fills in records that are not yet simulated. `checkpoint` is invoked after
// every block of records so an interrupted run can resume from disk.
void simulate_store(const StudyConfig& config, SampleStore& store,
                    const std::function<void(const SampleStore&)>& checkpoint = {});

// ---------------------------------------------------------------------------

struct CombinationKey {
  ImType im = ImType::kPga;
  double delta0 = 0.0;
  Method method = Method::kMle;
  auto operator<=>(const CombinationKey&) const = default;
};

struct AnalysisResult {
  std::map<ImType, std::vector<double>> grids;
  std::map<ImType, parametric::PsdmFit> psdm;
  std::map<ImType, nonparametric::KdeSettings> kde_settings;
  std::map<CombinationKey, FragilityCurveEstimate> curves;
  std::map<CombinationKey, parametric::LognormalCurve> lognormal;
  std::map<CombinationKey, std::string> errors;
};

AnalysisResult analyze(const StudyConfig& config, const SampleStore& store);

struct BootstrapResult {
  std::map<CombinationKey, bootstrap::BootstrapSummary> summaries;
  std::map<CombinationKey, std::string> errors;
};

BootstrapResult run_bootstrap(const StudyConfig& config, const SampleStore& store);

// Estimator used by analysis and bootstrap for a method and IM type.
bootstrap::Estimator make_estimator(const StudyConfig& config, Method method, ImType im);

// ---------------------------------------------------------------------------
// Commands. Each reads/writes artifacts under config.output_dir.

enum class Outcome { kSuccess = 0, kPartial = 4 };

struct CommandReport {
  Outcome outcome = Outcome::kSuccess;
  std::vector<std::string> messages;
};

CommandReport cmd_generate(const StudyConfig& config);
CommandReport cmd_simulate(const StudyConfig& config);
CommandReport cmd_analyze(const StudyConfig& config);
CommandReport cmd_bootstrap(const StudyConfig& config);
CommandReport cmd_report(const StudyConfig& config);
CommandReport cmd_all(const StudyConfig& config);

// Artifact writers, exposed for tests.
std::string curves_csv(const AnalysisResult& result, ImType im);
std::string parameters_csv(const StudyConfig& config, const AnalysisResult& result);
std::string envelope_csv(const bootstrap::BootstrapSummary& summary);
std::string logstd_csv(const StudyConfig& config, const BootstrapResult& result);

}  // namespace seisfrag::pipeline
