#include "seisfrag/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>
#include <sstream>

#include "json.hpp"
#include "seisfrag/common.hpp"
#include "seisfrag/io.hpp"
#include "seisfrag/parallel.hpp"
#include "seisfrag/stats.hpp"

namespace seisfrag::pipeline {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Names

const char* im_name(ImType t) { return t == ImType::kPga ? "PGA" : "Sa"; }

ImType parse_im(const std::string& name) {
  if (name == "PGA" || name == "pga") return ImType::kPga;
  if (name == "Sa" || name == "sa" || name == "SA") return ImType::kSa;
  throw ConfigError("unknown IM type '" + name + "'");
}

const char* method_name(Method m) {
  switch (m) {
    case Method::kMle: return "mle";
    case Method::kLr: return "lr";
    case Method::kBmcs: return "bmcs";
    case Method::kKde: return "kde";
  }
  return "?";
}

Method parse_method(const std::string& name) {
  for (Method m : kAllMethods)
    if (name == method_name(m)) return m;
  throw ConfigError("unknown method '" + name + "'");
}

namespace {

const char* family_name(gm::Family f) {
  switch (f) {
    case gm::Family::kLognormal: return "lognormal";
    case gm::Family::kBeta: return "beta";
    case gm::Family::kGamma: return "gamma";
    case gm::Family::kTwoSidedExponential: return "two-sided-exponential";
  }
  return "?";
}

gm::Family parse_family(const std::string& s) {
  for (auto f : {gm::Family::kLognormal, gm::Family::kBeta, gm::Family::kGamma, gm::Family::kTwoSidedExponential})
    if (s == family_name(f)) return f;
  throw ConfigError("unknown distribution family '" + s + "'");
}

const char* mode_name(nonparametric::MarginalMode m) {
  return m == nonparametric::MarginalMode::kMatrixConsistent ? "matrix-consistent" : "paper-faithful";
}

std::string delta_tag(double d) { return io::format_double(d); }

std::string key_tag(const CombinationKey& k) {
  return std::string(method_name(k.method)) + "_" + im_name(k.im) + "_" + delta_tag(k.delta0);
}

void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, value] : obj.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
      throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <class T>
void read(const json& obj, const char* key, T& target) {
  if (!obj.contains(key)) return;
  try {
    target = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

json marginal_json(const gm::MarginalSpec& m) {
  return {{"family", family_name(m.family)}, {"mean", m.mean}, {"std", m.std}, {"lower", m.lower}, {"upper", m.upper}};
}

void read_marginal(const json& obj, gm::MarginalSpec& m, const std::string& where) {
  check_keys(obj, {"family", "mean", "std", "lower", "upper"}, where);
  if (obj.contains("family")) m.family = parse_family(obj.at("family").get<std::string>());
  read(obj, "mean", m.mean);
  read(obj, "std", m.std);
  read(obj, "lower", m.lower);
  read(obj, "upper", m.upper);
}

json config_json(const StudyConfig& c, bool include_runtime) {
  json j;
  j["n_motions"] = c.n_motions;
  j["dt"] = c.dt;
  j["master_seed"] = c.master_seed;
  if (include_runtime) {
    j["jobs"] = c.jobs;
    j["output_dir"] = c.output_dir.string();
  }
  j["scenario"] = {{"arias", marginal_json(c.scenario.arias)},
                   {"strong_motion_duration", marginal_json(c.scenario.strong_motion_duration)},
                   {"t_mid", marginal_json(c.scenario.t_mid)},
                   {"omega_mid_hz", marginal_json(c.scenario.omega_mid_hz)},
                   {"omega_slope_hz", marginal_json(c.scenario.omega_slope_hz)},
                   {"filter_damping", marginal_json(c.scenario.filter_damping)}};
  j["truncation_efolds"] = std::isfinite(c.truncation_efolds) ? json(c.truncation_efolds) : json("inf");
  j["structure"] = {{"n_storeys", c.structure.n_storeys},
                    {"floor_mass", c.structure.floor_mass},
                    {"target_t1", c.structure.target_t1},
                    {"storey_height", c.structure.storey_height},
                    {"yield_drift_ratio", c.structure.yield_drift_ratio},
                    {"hardening_ratio", c.structure.hardening_ratio},
                    {"damping_ratio", c.structure.damping_ratio},
                    {"linear", c.structure.linear}};
  j["sa_damping"] = c.sa_damping;
  j["thresholds"] = c.thresholds;
  json ims = json::array();
  for (auto t : c.im_types) ims.push_back(im_name(t));
  j["im_types"] = ims;
  j["grid_points"] = c.grid_points;
  j["bmcs"] = {{"relative_half_width", c.bmcs.relative_half_width}, {"min_bin_count", c.bmcs.min_bin_count}};
  json user = json::object();
  for (const auto& [im, k] : c.kde_user)
    user[im_name(im)] = {{"h11", k.bandwidth.h11}, {"h12", k.bandwidth.h12}, {"h22", k.bandwidth.h22},
                         {"h_im", k.marginal_bandwidth}};
  j["kde"] = {{"marginal_mode", mode_name(c.kde_mode)}, {"user", user}};
  json methods = json::array();
  for (auto m : c.bootstrap_methods) methods.push_back(method_name(m));
  j["bootstrap"] = {{"replications", c.bootstrap_replications},
                    {"confidence", c.bootstrap_confidence},
                    {"seed", c.bootstrap_seed},
                    {"methods", methods}};
  return j;
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

structure::ShearBuildingModel StructureSpec::build() const {
  if (n_storeys < 1) throw ConfigError("structure needs at least one storey");
  auto m = structure::ShearBuildingModel::calibrated(n_storeys, floor_mass, target_t1);
  m.storey_height = storey_height;
  m.yield_drift_ratio = linear ? std::numeric_limits<double>::infinity() : yield_drift_ratio;
  m.hardening_ratio = hardening_ratio;
  m.damping_ratio = damping_ratio;
  m.validate();
  return m;
}

void StudyConfig::validate() const {
  if (n_motions < 1) throw ConfigError("n_motions must be at least 1");
  if (!(dt > 0.0 && dt <= 0.05)) throw ConfigError("dt must lie in (0, 0.05]");
  if (jobs < 1) throw ConfigError("jobs must be at least 1");
  gm::ScenarioSampler{scenario};
  if (!(truncation_efolds > 0.0)) throw ConfigError("truncation_efolds must be positive");
  structure.build();
  if (!(sa_damping > 0.0 && sa_damping < 1.0)) throw ConfigError("sa_damping must lie in (0,1)");
  if (thresholds.empty()) throw ConfigError("need at least one drift threshold");
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    if (!(thresholds[i] > 0.0)) throw ConfigError("drift thresholds must be positive");
    if (i > 0 && !(thresholds[i] > thresholds[i - 1])) throw ConfigError("drift thresholds must be strictly increasing");
  }
  if (im_types.empty()) throw ConfigError("need at least one IM type");
  if (std::set<ImType>(im_types.begin(), im_types.end()).size() != im_types.size())
    throw ConfigError("duplicate IM type");
  if (grid_points < 2) throw ConfigError("grid_points must be at least 2");
  bmcs.validate();
  for (const auto& [im, k] : kde_user) k.validate();
  if (bootstrap_replications < 2) throw ConfigError("bootstrap replications must be at least 2");
  if (!(bootstrap_confidence > 0.0 && bootstrap_confidence < 1.0))
    throw ConfigError("bootstrap confidence must lie in (0,1)");
}

std::string StudyConfig::to_json() const { return config_json(*this, true).dump(2); }

std::string StudyConfig::hash() const { return io::fnv1a_hex(config_json(*this, false).dump()); }

std::string StudyConfig::store_hash() const {
  const json full = config_json(*this, false);
  json j;
  for (const char* key : {"n_motions", "dt", "master_seed", "scenario", "truncation_efolds", "structure", "sa_damping"})
    j[key] = full.at(key);
  return io::fnv1a_hex(j.dump());
}

StudyConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(j,
             {"n_motions", "dt", "master_seed", "jobs", "output_dir", "scenario", "truncation_efolds", "structure",
              "sa_damping", "thresholds", "im_types", "grid_points", "bmcs", "kde", "bootstrap"},
             "config");
  StudyConfig c;
  read(j, "n_motions", c.n_motions);
  read(j, "dt", c.dt);
  read(j, "master_seed", c.master_seed);
  read(j, "jobs", c.jobs);
  if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
  if (j.contains("scenario")) {
    const auto& s = j.at("scenario");
    check_keys(s, {"arias", "strong_motion_duration", "t_mid", "omega_mid_hz", "omega_slope_hz", "filter_damping"},
               "scenario");
    auto sub = [&](const char* key, gm::MarginalSpec& m) {
      if (s.contains(key)) read_marginal(s.at(key), m, std::string("scenario.") + key);
    };
    sub("arias", c.scenario.arias);
    sub("strong_motion_duration", c.scenario.strong_motion_duration);
    sub("t_mid", c.scenario.t_mid);
    sub("omega_mid_hz", c.scenario.omega_mid_hz);
    sub("omega_slope_hz", c.scenario.omega_slope_hz);
    sub("filter_damping", c.scenario.filter_damping);
  }
  if (j.contains("truncation_efolds")) {
    const auto& t = j.at("truncation_efolds");
    c.truncation_efolds = t.is_string() && t.get<std::string>() == "inf" ? std::numeric_limits<double>::infinity()
                                                                          : t.get<double>();
  }
  if (j.contains("structure")) {
    const auto& s = j.at("structure");
    check_keys(s,
               {"n_storeys", "floor_mass", "target_t1", "storey_height", "yield_drift_ratio", "hardening_ratio",
                "damping_ratio", "linear"},
               "structure");
    read(s, "n_storeys", c.structure.n_storeys);
    read(s, "floor_mass", c.structure.floor_mass);
    read(s, "target_t1", c.structure.target_t1);
    read(s, "storey_height", c.structure.storey_height);
    read(s, "yield_drift_ratio", c.structure.yield_drift_ratio);
    read(s, "hardening_ratio", c.structure.hardening_ratio);
    read(s, "damping_ratio", c.structure.damping_ratio);
    read(s, "linear", c.structure.linear);
  }
  read(j, "sa_damping", c.sa_damping);
  read(j, "thresholds", c.thresholds);
  if (j.contains("im_types")) {
    c.im_types.clear();
    for (const auto& s : j.at("im_types")) c.im_types.push_back(parse_im(s.get<std::string>()));
  }
  read(j, "grid_points", c.grid_points);
  if (j.contains("bmcs")) {
    const auto& b = j.at("bmcs");
    check_keys(b, {"relative_half_width", "min_bin_count"}, "bmcs");
    read(b, "relative_half_width", c.bmcs.relative_half_width);
    read(b, "min_bin_count", c.bmcs.min_bin_count);
  }
  if (j.contains("kde")) {
    const auto& k = j.at("kde");
    check_keys(k, {"marginal_mode", "user"}, "kde");
    if (k.contains("marginal_mode")) {
      const auto mode = k.at("marginal_mode").get<std::string>();
      if (mode == "matrix-consistent") c.kde_mode = nonparametric::MarginalMode::kMatrixConsistent;
      else if (mode == "paper-faithful") c.kde_mode = nonparametric::MarginalMode::kPaperFaithful;
      else throw ConfigError("unknown kde.marginal_mode '" + mode + "'");
    }
    if (k.contains("user")) {
      const auto& user = k.at("user");
      if (!user.is_object()) throw ConfigError("kde.user must be an object");
      for (const auto& [name, v] : user.items()) {
        check_keys(v, {"h11", "h12", "h22", "h_im"}, "kde.user." + name);
        nonparametric::KdeSettings ks;
        ks.selector = nonparametric::BandwidthSelector::kUserSupplied;
        read(v, "h11", ks.bandwidth.h11);
        read(v, "h12", ks.bandwidth.h12);
        read(v, "h22", ks.bandwidth.h22);
        read(v, "h_im", ks.marginal_bandwidth);
        c.kde_user[parse_im(name)] = ks;
      }
    }
  }
  if (j.contains("bootstrap")) {
    const auto& b = j.at("bootstrap");
    check_keys(b, {"replications", "confidence", "seed", "methods"}, "bootstrap");
    read(b, "replications", c.bootstrap_replications);
    read(b, "confidence", c.bootstrap_confidence);
    read(b, "seed", c.bootstrap_seed);
    if (b.contains("methods")) {
      c.bootstrap_methods.clear();
      for (const auto& m : b.at("methods")) c.bootstrap_methods.push_back(parse_method(m.get<std::string>()));
    }
  }
  for (auto& [im, k] : c.kde_user) k.marginal_mode = c.kde_mode;
  c.validate();
  return c;
}

StudyConfig load_config(const fs::path& path) {
  std::string text;
  try {
    text = io::read_file(path);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  return config_from_json(text);
}

// ---------------------------------------------------------------------------
// Store

std::size_t SampleStore::skipped() const {
  return static_cast<std::size_t>(std::count_if(records.begin(), records.end(), [](const auto& r) { return r.skipped; }));
}
std::size_t SampleStore::simulated() const {
  return static_cast<std::size_t>(
      std::count_if(records.begin(), records.end(), [](const auto& r) { return r.simulated; }));
}
std::size_t SampleStore::non_converged() const {
  return static_cast<std::size_t>(
      std::count_if(records.begin(), records.end(), [](const auto& r) { return r.simulated && !r.converged; }));
}

namespace {

constexpr const char* kStoreHeader =
    "record_id,seed,attempts,skipped,arias_intensity,strong_motion_duration,t_mid,omega_mid,omega_slope,"
    "filter_damping,pga_g,arias_measured,d595_measured,t_mid_measured,simulated,sa_g,delta,converged";

}  // namespace

std::string store_to_csv(const SampleStore& store) {
  using io::format_double;
  std::ostringstream out;
  out << kStoreHeader << '\n';
  for (const auto& r : store.records) {
    const auto& s = r.scenario;
    out << r.record_id << ',' << r.seed << ',' << r.attempts << ',' << (r.skipped ? 1 : 0) << ','
        << format_double(s.arias_intensity) << ',' << format_double(s.strong_motion_duration) << ','
        << format_double(s.t_mid) << ',' << format_double(s.omega_mid) << ',' << format_double(s.omega_slope) << ','
        << format_double(s.filter_damping) << ',' << format_double(r.pga_g) << ',' << format_double(r.arias) << ','
        << format_double(r.d595) << ',' << format_double(r.t_mid) << ',' << (r.simulated ? 1 : 0) << ','
        << format_double(r.sa_g) << ',' << format_double(r.delta) << ',' << (r.converged ? 1 : 0) << '\n';
  }
  return out.str();
}

SampleStore store_from_csv(const std::string& text) {
  SampleStore store;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || io::trim(line) != kStoreHeader) throw Error("sample store: unexpected header");
  std::set<std::size_t> ids;
  while (std::getline(in, line)) {
    if (io::trim(line).empty()) continue;
    const auto f = io::split(io::trim(line));
    if (f.size() != 18) throw Error("sample store: row with " + std::to_string(f.size()) + " columns");
    StoreRecord r;
    r.record_id = std::stoull(f[0]);
    r.seed = std::stoull(f[1]);
    r.attempts = std::stoull(f[2]);
    r.skipped = f[3] == "1";
    r.scenario = {io::parse_double(f[4]), io::parse_double(f[5]), io::parse_double(f[6]),
                  io::parse_double(f[7]), io::parse_double(f[8]), io::parse_double(f[9])};
    r.pga_g = io::parse_double(f[10]);
    r.arias = io::parse_double(f[11]);
    r.d595 = io::parse_double(f[12]);
    r.t_mid = io::parse_double(f[13]);
    r.simulated = f[14] == "1";
    r.sa_g = io::parse_double(f[15]);
    r.delta = io::parse_double(f[16]);
    r.converged = f[17] == "1";
    if (!ids.insert(r.record_id).second) throw Error("sample store: duplicate record_id");
    store.records.push_back(r);
  }
  return store;
}

void save_store(const fs::path& dir, const SampleStore& store, const StudyConfig& config) {
  io::write_file(dir / "samples.csv", store_to_csv(store));
  json meta;
  meta["version"] = kVersion;
  meta["store_hash"] = store.config_hash;
  meta["config_hash"] = config.hash();
  meta["model_t1"] = store.model_t1;
  meta["records"] = store.records.size();
  meta["skipped"] = store.skipped();
  meta["simulated"] = store.simulated();
  meta["non_converged"] = store.non_converged();
  io::write_file(dir / "samples.json", meta.dump(2) + "\n");
}

SampleStore load_store(const fs::path& dir) {
  SampleStore store = store_from_csv(io::read_file(dir / "samples.csv"));
  const json meta = json::parse(io::read_file(dir / "samples.json"));
  store.config_hash = meta.at("store_hash").get<std::string>();
  store.model_t1 = meta.at("model_t1").get<double>();
  return store;
}

SampleSet fragility_samples(const SampleStore& store, ImType type) {
  SampleSet out;
  for (const auto& r : store.records) {
    if (r.skipped || !r.simulated || !r.converged) continue;
    out.push_back({type == ImType::kPga ? r.pga_g : r.sa_g, r.delta});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Generation and simulation

GeneratedRecord generate_record(const StudyConfig& config, std::size_t record_id) {
  const std::uint64_t seed = derive_seed(config.master_seed, record_id, StreamPurpose::kScenario);
  auto rng = make_stream(seed);
  const gm::ScenarioSampler sampler(config.scenario);
  GeneratedRecord out;
  for (std::size_t attempt = 1; attempt <= kMaxScenarioAttempts; ++attempt) {
    out.attempts = attempt;
    const auto scenario = sampler(rng);
    try {
      scenario.validate();
      gm::solve_modulation_params(scenario.arias_intensity, scenario.strong_motion_duration, scenario.t_mid);
    } catch (const InfeasibleScenario&) {
      continue;
    }
    gm::SynthesisOptions opts;
    opts.dt = config.dt;
    opts.truncation_efolds = config.truncation_efolds;
    out.accelerogram = gm::synthesize(scenario, rng, opts);
    return out;
  }
  return out;
}

SimulatedRecord simulate_record(const structure::ShearBuildingModel& model, double sa_period, double sa_damping,
                                const gm::Accelerogram& a) {
  const auto tr = structure::newmark_transient(model, a);
  SimulatedRecord out;
  out.delta = tr.max_interstorey_drift_ratio;
  out.converged = tr.converged;
  out.sa_g = structure::spectral_acceleration(sa_period, sa_damping, a) / kGravity;
  return out;
}

SampleStore generate_store(const StudyConfig& config) {
  config.validate();
  SampleStore store;
  store.config_hash = config.store_hash();
  store.model_t1 = structure::modal_periods(config.structure.build()).front();
  store.records.resize(config.n_motions);
  parallel_for(config.n_motions, config.jobs, [&](std::size_t id) {
    StoreRecord& r = store.records[id];
    r.record_id = id;
    r.seed = derive_seed(config.master_seed, id, StreamPurpose::kScenario);
    const auto gen = generate_record(config, id);
    r.attempts = gen.attempts;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    if (!gen.accelerogram) {
      r.skipped = true;
      r.scenario = {nan, nan, nan, nan, nan, nan};
      r.pga_g = r.arias = r.d595 = r.t_mid = nan;
      r.sa_g = r.delta = nan;
      return;
    }
    const auto& a = *gen.accelerogram;
    r.scenario = *a.scenario;
    r.pga_g = gm::compute_pga(a) / kGravity;
    const auto ev = gm::compute_arias_evolution(a);
    r.arias = ev.total;
    r.d595 = gm::compute_t_alpha(a, ev, 0.95) - gm::compute_t_alpha(a, ev, 0.05);
    r.t_mid = gm::compute_t_alpha(a, ev, 0.45);
    r.sa_g = nan;
    r.delta = nan;
  });
  return store;
}

void simulate_store(const StudyConfig& config, SampleStore& store,
                    const std::function<void(const SampleStore&)>& checkpoint) {
  config.validate();
  if (store.config_hash != config.store_hash())
    throw ConfigError("sample store was generated with a different configuration");
  const auto model = config.structure.build();
  const double t1 = structure::modal_periods(model).front();
  store.model_t1 = t1;

  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < store.records.size(); ++i)
    if (!store.records[i].skipped && !store.records[i].simulated) pending.push_back(i);

  constexpr std::size_t kBlock = 200;
  for (std::size_t begin = 0; begin < pending.size(); begin += kBlock) {
    const std::size_t end = std::min(pending.size(), begin + kBlock);
    parallel_for(end - begin, config.jobs, [&](std::size_t j) {
      StoreRecord& r = store.records[pending[begin + j]];
      const auto gen = generate_record(config, r.record_id);
      if (!gen.accelerogram || gm::compute_pga(*gen.accelerogram) / kGravity != r.pga_g)
        throw Error("record " + std::to_string(r.record_id) + " does not regenerate from its seed");
      const auto sim = simulate_record(model, t1, config.sa_damping, *gen.accelerogram);
      r.sa_g = sim.sa_g;
      r.delta = sim.delta;
      r.converged = sim.converged;
      r.simulated = true;
    });
    if (checkpoint) checkpoint(store);
  }

  const std::size_t bad = store.non_converged();
  const std::size_t done = store.simulated();
  if (done > 0 && static_cast<double>(bad) > 0.02 * static_cast<double>(done))
    throw NumericalError(std::to_string(bad) + " of " + std::to_string(done) +
                         " transient analyses did not converge (limit 2%)");
}

// ---------------------------------------------------------------------------
// Estimation

namespace {

SampleSet positive_only(std::span<const FragilitySample> samples) {
  SampleSet out;
  for (const auto& s : samples)
    if (s.im > 0.0 && s.delta > 0.0) out.push_back(s);
  return out;
}

void require_estimation_size(const StudyConfig& config) {
  if (config.n_motions < 100) throw ConfigError("estimation commands need n_motions >= 100");
}

}  // namespace

bootstrap::Estimator make_estimator(const StudyConfig& config, Method method, ImType im) {
  switch (method) {
    case Method::kMle:
      return [](std::span<const FragilitySample> s, double d0, std::span<const double> grid) {
        const auto fit = parametric::fit_mle(s, d0);
        if (fit.degenerate) throw NumericalError(fit.diagnostic);
        return parametric::tabulate(fit.curve, grid, d0, "mle");
      };
    case Method::kLr:
      return [](std::span<const FragilitySample> s, double d0, std::span<const double> grid) {
        const auto fit = parametric::fit_psdm(s);
        return parametric::tabulate(parametric::curve_from_psdm(fit, d0), grid, d0, "lr");
      };
    case Method::kBmcs:
      return [bm = config.bmcs](std::span<const FragilitySample> s, double d0, std::span<const double> grid) {
        return nonparametric::bmcs_fragility(s, d0, grid, bm);
      };
    case Method::kKde: {
      std::optional<nonparametric::KdeSettings> user;
      if (auto it = config.kde_user.find(im); it != config.kde_user.end()) user = it->second;
      return [user, mode = config.kde_mode](std::span<const FragilitySample> s, double d0,
                                            std::span<const double> grid) {
        const auto positive = positive_only(s);
        auto settings = user ? *user : nonparametric::select_bandwidths(positive);
        settings.marginal_mode = mode;
        return nonparametric::kde_fragility(positive, d0, grid, settings);
      };
    }
  }
  throw ConfigError("unknown method");
}

AnalysisResult analyze(const StudyConfig& config, const SampleStore& store) {
  config.validate();
  require_estimation_size(config);
  AnalysisResult out;
  for (ImType im : config.im_types) {
    const auto samples = fragility_samples(store, im);
    if (samples.empty()) throw PreconditionError("no simulated samples to analyze");
    out.grids[im] = nonparametric::default_im_grid(samples, config.grid_points);
    const auto& grid = out.grids[im];

    std::optional<parametric::PsdmFit> psdm;
    std::string psdm_error;
    try {
      psdm = parametric::fit_psdm(samples);
      out.psdm[im] = *psdm;
    } catch (const Error& e) {
      psdm_error = e.what();
    }
    std::optional<nonparametric::KdeSettings> kde;
    std::string kde_error;
    try {
      if (auto it = config.kde_user.find(im); it != config.kde_user.end()) kde = it->second;
      else kde = nonparametric::select_bandwidths(positive_only(samples));
      kde->marginal_mode = config.kde_mode;
      out.kde_settings[im] = *kde;
    } catch (const Error& e) {
      kde_error = e.what();
    }

    for (double d0 : config.thresholds) {
      for (Method m : kAllMethods) {
        const CombinationKey key{im, d0, m};
        try {
          switch (m) {
            case Method::kMle: {
              const auto fit = parametric::fit_mle(samples, d0);
              if (fit.degenerate) throw NumericalError(fit.diagnostic);
              out.lognormal[key] = fit.curve;
              out.curves[key] = parametric::tabulate(fit.curve, grid, d0, "mle");
              break;
            }
            case Method::kLr: {
              if (!psdm) throw NumericalError(psdm_error);
              const auto curve = parametric::curve_from_psdm(*psdm, d0);
              out.lognormal[key] = curve;
              out.curves[key] = parametric::tabulate(curve, grid, d0, "lr");
              break;
            }
            case Method::kBmcs:
              out.curves[key] = nonparametric::bmcs_fragility(samples, d0, grid, config.bmcs);
              break;
            case Method::kKde:
              if (!kde) throw NumericalError(kde_error);
              out.curves[key] = nonparametric::kde_fragility(positive_only(samples), d0, grid, *kde);
              break;
          }
        } catch (const Error& e) {
          out.errors[key] = e.what();
        }
      }
    }
  }
  return out;
}

BootstrapResult run_bootstrap(const StudyConfig& config, const SampleStore& store) {
  config.validate();
  require_estimation_size(config);
  BootstrapResult out;
  for (ImType im : config.im_types) {
    const auto samples = fragility_samples(store, im);
    if (samples.empty()) throw PreconditionError("no simulated samples to bootstrap");
    const auto grid = nonparametric::default_im_grid(samples, config.grid_points);
    for (double d0 : config.thresholds) {
      for (Method m : config.bootstrap_methods) {
        const CombinationKey key{im, d0, m};
        bootstrap::BootstrapSettings bs;
        bs.replications = config.bootstrap_replications;
        bs.confidence = config.bootstrap_confidence;
        bs.master_seed = derive_seed(config.bootstrap_seed, io::fnv1a64(key_tag(key)), StreamPurpose::kBootstrap);
        bs.jobs = config.jobs;
        try {
          out.summaries[key] = bootstrap::bootstrap_curves(make_estimator(config, m, im), samples, d0, grid, bs);
        } catch (const Error& e) {
          out.errors[key] = e.what();
        }
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Artifacts

std::string curves_csv(const AnalysisResult& result, ImType im) {
  std::ostringstream out;
  out << "method,im,probability,support_count,delta0\n";
  for (const auto& [key, curve] : result.curves) {
    if (key.im != im) continue;
    for (const auto& p : curve.grid)
      out << method_name(key.method) << ',' << io::format_double(p.im) << ',' << io::format_double(p.probability)
          << ',' << p.support_count << ',' << io::format_double(key.delta0) << '\n';
  }
  return out.str();
}

std::string parameters_csv(const StudyConfig& config, const AnalysisResult& result) {
  std::ostringstream out;
  out << "threshold,method,im_type,median,logstd\n";
  for (double d0 : config.thresholds) {
    for (Method m : kAllMethods) {
      for (ImType im : config.im_types) {
        const CombinationKey key{im, d0, m};
        out << io::format_double(d0) << ',' << method_name(m) << ',' << im_name(im) << ',';
        if (result.errors.count(key)) {
          out << "error,error\n";
          continue;
        }
        if (auto it = result.lognormal.find(key); it != result.lognormal.end()) {
          out << io::format_double(it->second.median_alpha) << ',' << io::format_double(it->second.logstd_beta)
              << '\n';
          continue;
        }
        const auto median = bootstrap::median_im(result.curves.at(key));
        out << (median ? io::format_double(*median) : "absent") << ",\n";
      }
    }
  }
  return out.str();
}

std::string envelope_csv(const bootstrap::BootstrapSummary& s) {
  std::ostringstream out;
  out << "im,median,lower,upper\n";
  auto cell = [](double x) { return std::isfinite(x) ? io::format_double(x) : std::string("absent"); };
  for (std::size_t j = 0; j < s.median_curve.grid.size(); ++j)
    out << io::format_double(s.median_curve.grid[j].im) << ',' << cell(s.median_curve.grid[j].probability) << ','
        << cell(s.lower_envelope.grid[j].probability) << ',' << cell(s.upper_envelope.grid[j].probability) << '\n';
  return out.str();
}

std::string logstd_csv(const StudyConfig& config, const BootstrapResult& result) {
  std::ostringstream out;
  out << "threshold,method";
  for (ImType im : config.im_types) out << ',' << im_name(im);
  out << '\n';
  for (double d0 : config.thresholds) {
    for (Method m : config.bootstrap_methods) {
      out << io::format_double(d0) << ',' << method_name(m);
      for (ImType im : config.im_types) {
        const auto it = result.summaries.find({im, d0, m});
        if (it == result.summaries.end()) out << ",error";
        else if (!it->second.logstd_median_im) out << ",absent";
        else out << ',' << io::format_double(*it->second.logstd_median_im);
      }
      out << '\n';
    }
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Commands

namespace {

class Timer {
 public:
  Timer(const StudyConfig& config, std::string name)
      : path_(config.output_dir / "timings.json"), name_(std::move(name)), start_(std::chrono::steady_clock::now()) {}
  ~Timer() {
    try {
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
      json j = json::object();
      if (fs::exists(path_)) j = json::parse(io::read_file(path_));
      j[name_] = secs;
      io::write_file(path_, j.dump(2) + "\n");
    } catch (...) {
    }
  }

 private:
  fs::path path_;
  std::string name_;
  std::chrono::steady_clock::time_point start_;
};

SampleStore load_checked(const StudyConfig& config) {
  SampleStore store;
  try {
    store = load_store(config.output_dir);
  } catch (const json::exception& e) {
    throw Error(std::string("sample store metadata unreadable: ") + e.what());
  }
  if (store.config_hash != config.store_hash())
    throw ConfigError("sample store in " + config.output_dir.string() + " was generated with a different configuration");
  return store;
}

std::string combo_message(const CombinationKey& k, const std::string& what) {
  return key_tag(k) + ": " + what;
}

}  // namespace

CommandReport cmd_generate(const StudyConfig& config) {
  config.validate();
  Timer timer(config, "generate");
  const auto store = generate_store(config);
  save_store(config.output_dir, store, config);
  CommandReport rep;
  rep.messages.push_back("generated " + std::to_string(store.records.size()) + " records, " +
                         std::to_string(store.skipped()) + " skipped after " +
                         std::to_string(kMaxScenarioAttempts) + " infeasible scenario draws");
  return rep;
}

CommandReport cmd_simulate(const StudyConfig& config) {
  config.validate();
  Timer timer(config, "simulate");
  auto store = load_checked(config);
  const std::size_t before = store.simulated();
  try {
    simulate_store(config, store, [&](const SampleStore& s) { save_store(config.output_dir, s, config); });
  } catch (const NumericalError&) {
    save_store(config.output_dir, store, config);
    throw;
  }
  save_store(config.output_dir, store, config);
  CommandReport rep;
  rep.messages.push_back("simulated " + std::to_string(store.simulated() - before) + " records (T1 = " +
                         io::format_double(store.model_t1) + " s), " + std::to_string(store.non_converged()) +
                         " not converged and excluded");
  return rep;
}

CommandReport cmd_analyze(const StudyConfig& config) {
  config.validate();
  Timer timer(config, "analyze");
  const auto store = load_checked(config);
  const auto result = analyze(config, store);
  const fs::path dir = config.output_dir / "analysis";
  for (ImType im : config.im_types) {
    io::write_file(dir / (std::string("curves_") + im_name(im) + ".csv"), curves_csv(result, im));
    json meta;
    meta["im_type"] = im_name(im);
    for (const auto& [key, curve] : result.curves)
      if (key.im == im) meta["settings"][key_tag(key)] = curve.settings;
    for (const auto& [key, curve] : result.curves)
      if (key.im == im && curve.range_violations > 0) meta["range_violations"][key_tag(key)] = curve.range_violations;
    if (auto it = result.psdm.find(im); it != result.psdm.end())
      meta["psdm"] = {{"A", it->second.slope_a},
                      {"B", it->second.intercept_b},
                      {"zeta", it->second.dispersion_zeta},
                      {"r_squared", it->second.r_squared},
                      {"n_used", it->second.n_used}};
    io::write_file(dir / (std::string("curves_") + im_name(im) + ".meta.json"), meta.dump(2) + "\n");
  }
  io::write_file(dir / "parameters.csv", parameters_csv(config, result));

  std::ostringstream errs;
  errs << "im_type,delta0,method,error\n";
  CommandReport rep;
  for (const auto& [key, what] : result.errors) {
    errs << im_name(key.im) << ',' << io::format_double(key.delta0) << ',' << method_name(key.method) << ",\""
         << what << "\"\n";
    rep.messages.push_back(combo_message(key, what));
  }
  io::write_file(dir / "errors.csv", errs.str());
  if (!result.errors.empty()) rep.outcome = Outcome::kPartial;
  rep.messages.push_back("wrote " + std::to_string(result.curves.size()) + " curves");
  return rep;
}

CommandReport cmd_bootstrap(const StudyConfig& config) {
  config.validate();
  Timer timer(config, "bootstrap");
  const auto store = load_checked(config);
  const auto result = run_bootstrap(config, store);
  const fs::path dir = config.output_dir / "bootstrap";
  CommandReport rep;
  for (const auto& [key, summary] : result.summaries) {
    io::write_file(dir / ("envelope_" + key_tag(key) + ".csv"), envelope_csv(summary));
    if (summary.dropped > 0)
      rep.messages.push_back(combo_message(key, std::to_string(summary.dropped) + " replications dropped"));
  }
  io::write_file(dir / "logstd_median_im.csv", logstd_csv(config, result));
  for (const auto& [key, what] : result.errors) rep.messages.push_back(combo_message(key, what));
  if (!result.errors.empty()) rep.outcome = Outcome::kPartial;
  rep.messages.push_back("bootstrapped " + std::to_string(result.summaries.size()) + " combinations with " +
                         std::to_string(config.bootstrap_replications) + " replications");
  return rep;
}

CommandReport cmd_report(const StudyConfig& config) {
  config.validate();
  CommandReport rep;
  std::vector<fs::path> artifacts;
  std::vector<std::string> missing;
  auto need = [&](const fs::path& p) {
    if (fs::exists(p)) artifacts.push_back(p);
    else missing.push_back(p.string());
  };
  need(config.output_dir / "samples.csv");
  for (ImType im : config.im_types) need(config.output_dir / "analysis" / (std::string("curves_") + im_name(im) + ".csv"));
  need(config.output_dir / "analysis" / "parameters.csv");
  std::vector<std::pair<CombinationKey, fs::path>> envelopes;
  for (ImType im : config.im_types)
    for (double d0 : config.thresholds)
      for (Method m : config.bootstrap_methods) {
        const CombinationKey key{im, d0, m};
        const auto p = config.output_dir / "bootstrap" / ("envelope_" + key_tag(key) + ".csv");
        if (fs::exists(p)) envelopes.emplace_back(key, p);
        else missing.push_back(p.string());
      }
  need(config.output_dir / "bootstrap" / "logstd_median_im.csv");

  std::ostringstream bundle;
  bundle << "source,method,im_type,delta0,im,probability,lower,upper,support_count\n";
  std::size_t rows = 0;
  for (ImType im : config.im_types) {
    const auto p = config.output_dir / "analysis" / (std::string("curves_") + im_name(im) + ".csv");
    if (!fs::exists(p)) continue;
    std::istringstream in(io::read_file(p));
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto f = io::split(line);  // method,im,probability,support_count,delta0
      bundle << "analysis," << f[0] << ',' << im_name(im) << ',' << f[4] << ',' << f[1] << ',' << f[2] << ",,,"
             << f[3] << '\n';
      ++rows;
    }
  }
  for (const auto& [key, path] : envelopes) {
    std::istringstream in(io::read_file(path));
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto f = io::split(line);  // im,median,lower,upper
      bundle << "bootstrap," << method_name(key.method) << ',' << im_name(key.im) << ','
             << io::format_double(key.delta0) << ',' << f[0] << ',' << f[1] << ',' << f[2] << ',' << f[3] << ",\n";
      ++rows;
    }
  }
  const fs::path dir = config.output_dir / "report";
  io::write_file(dir / "bundle.csv", bundle.str());

  json manifest;
  manifest["version"] = kVersion;
  manifest["config_hash"] = config.hash();
  manifest["store_hash"] = config.store_hash();
  manifest["master_seed"] = config.master_seed;
  manifest["bootstrap_seed"] = config.bootstrap_seed;
  manifest["n_motions"] = config.n_motions;
  manifest["bundle_rows"] = rows;
  manifest["config"] = json::parse(config.to_json());
  for (const auto& p : artifacts)
    manifest["artifacts"][fs::relative(p, config.output_dir).string()] = io::fnv1a_hex(io::read_file(p));
  for (const auto& [key, p] : envelopes)
    manifest["artifacts"][fs::relative(p, config.output_dir).string()] = io::fnv1a_hex(io::read_file(p));
  if (fs::exists(config.output_dir / "timings.json"))
    manifest["timings_s"] = json::parse(io::read_file(config.output_dir / "timings.json"));
  manifest["missing"] = missing;
  io::write_file(dir / "manifest.json", manifest.dump(2) + "\n");

  for (const auto& m : missing) rep.messages.push_back("missing artifact: " + m);
  if (!missing.empty()) rep.outcome = Outcome::kPartial;
  rep.messages.push_back("bundle rows: " + std::to_string(rows));
  return rep;
}

CommandReport cmd_all(const StudyConfig& config) {
  CommandReport all;
  for (auto* cmd : {&cmd_generate, &cmd_simulate, &cmd_analyze, &cmd_bootstrap, &cmd_report}) {
    auto rep = cmd(config);
    all.messages.insert(all.messages.end(), rep.messages.begin(), rep.messages.end());
    if (rep.outcome == Outcome::kPartial) all.outcome = Outcome::kPartial;
  }
  return all;
}

}  // namespace seisfrag::pipeline
