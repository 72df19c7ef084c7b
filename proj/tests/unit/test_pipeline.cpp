#include <cstdlib>
#include <filesystem>
#include <string>

#include "doctest.h"
#include "seisfrag/common.hpp"
#include "seisfrag/io.hpp"
#include "seisfrag/pipeline.hpp"

using namespace seisfrag;
using namespace seisfrag::pipeline;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("seisfrag_pipeline_" + name);
  fs::remove_all(p);
  return p;
}

StudyConfig small_config(const fs::path& out) {
  StudyConfig c;
  c.n_motions = 150;
  c.output_dir = out;
  c.bootstrap_replications = 10;
  return c;
}

int run_cli(const std::string& args) {
  const int status = std::system((std::string(SEISFRAG_CLI) + " " + args + " > /dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("config JSON keeps defaults and round-trips") {
  const auto c = config_from_json(R"({"n_motions": 300, "thresholds": [0.01, 0.02],
                                      "kde": {"marginal_mode": "paper-faithful"},
                                      "bootstrap": {"methods": ["kde"]}})");
  CHECK(c.n_motions == 300);
  CHECK(c.thresholds == std::vector<double>{0.01, 0.02});
  CHECK(c.kde_mode == nonparametric::MarginalMode::kPaperFaithful);
  CHECK(c.bootstrap_methods == std::vector<Method>{Method::kKde});
  CHECK(c.dt == 0.01);
  CHECK(c.bootstrap_replications == 100);
  const auto again = config_from_json(c.to_json());
  CHECK(again.hash() == c.hash());
  CHECK(again.to_json() == c.to_json());
}

TEST_CASE("config errors are reported as such") {
  CHECK_THROWS_AS(config_from_json(R"({"n_motion": 10})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"structure": {"storeys": 3}})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"thresholds": [0.02, 0.01]})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"im_types": ["PGV"]})"), ConfigError);
  CHECK_THROWS_AS(config_from_json("{not json"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"scenario": {"t_mid": {"mean": 30}}})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"dt": "fast"})"), ConfigError);
}

TEST_CASE("user bandwidths are accepted per IM type") {
  const auto c = config_from_json(
      R"({"kde": {"user": {"PGA": {"h11": 0.0306, "h12": 0.0246, "h22": 0.0283, "h_im": 0.1295}}}})");
  REQUIRE(c.kde_user.count(ImType::kPga) == 1);
  CHECK(c.kde_user.at(ImType::kPga).bandwidth.h12 == 0.0246);
  CHECK_THROWS_AS(config_from_json(R"({"kde": {"user": {"Sa": {"h11": 0.1, "h12": 0.2, "h22": 0.1, "h_im": 0.1}}}})"),
                  ConfigError);
}

TEST_CASE("store hash ignores estimation settings but not generation settings") {
  StudyConfig a;
  StudyConfig b = a;
  b.thresholds = {0.01};
  b.jobs = 4;
  CHECK(a.store_hash() == b.store_hash());
  CHECK(a.hash() != b.hash());
  b.master_seed += 1;
  CHECK(a.store_hash() != b.store_hash());
}

TEST_CASE("records regenerate identically from their id") {
  StudyConfig c;
  const auto a = generate_record(c, 17);
  const auto b = generate_record(c, 17);
  const auto d = generate_record(c, 18);
  REQUIRE(a.accelerogram);
  CHECK(a.accelerogram->samples == b.accelerogram->samples);
  CHECK(a.accelerogram->samples != d.accelerogram->samples);
}

TEST_CASE("store round-trips exactly and reproduces estimates") {
  const auto out = scratch("store");
  const auto c = small_config(out);
  auto store = generate_store(c);
  simulate_store(c, store);
  save_store(out, store, c);
  const auto back = load_store(out);
  CHECK(store_to_csv(back) == store_to_csv(store));
  const auto r1 = analyze(c, store);
  const auto r2 = analyze(c, back);
  for (auto im : c.im_types) CHECK(curves_csv(r1, im) == curves_csv(r2, im));
  CHECK(parameters_csv(c, r1) == parameters_csv(c, r2));
  fs::remove_all(out);
}

TEST_CASE("parallel generation matches serial generation") {
  auto c = small_config(scratch("par"));
  auto serial = generate_store(c);
  simulate_store(c, serial);
  c.jobs = 3;
  auto parallel = generate_store(c);
  simulate_store(c, parallel);
  CHECK(store_to_csv(serial) == store_to_csv(parallel));
}

TEST_CASE("one failing combination does not disturb the others") {
  auto c = small_config(scratch("iso"));
  // No record reaches this drift, so MLE lacks exceedances for it.
  c.thresholds = {0.007, 0.5};
  auto store = generate_store(c);
  simulate_store(c, store);
  const auto r = analyze(c, store);
  CHECK(r.errors.count({ImType::kPga, 0.5, Method::kMle}) == 1);
  CHECK(r.curves.count({ImType::kPga, 0.007, Method::kMle}) == 1);
  CHECK(r.curves.count({ImType::kPga, 0.5, Method::kKde}) == 1);

  auto only = c;
  only.thresholds = {0.007};
  const auto r0 = analyze(only, store);
  const auto& a = r.curves.at({ImType::kSa, 0.007, Method::kBmcs});
  const auto& b = r0.curves.at({ImType::kSa, 0.007, Method::kBmcs});
  CHECK(a.probabilities().size() == b.probabilities().size());
  for (std::size_t j = 0; j < a.grid.size(); ++j)
    if (!std::isnan(a.grid[j].probability)) CHECK(a.grid[j].probability == b.grid[j].probability);
}

TEST_CASE("estimation refuses tiny studies") {
  auto c = small_config(scratch("tiny"));
  c.n_motions = 50;
  auto store = generate_store(c);
  CHECK_THROWS_AS(analyze(c, store), ConfigError);
}

TEST_CASE("absent median IM cells are written as absent") {
  StudyConfig c;
  c.im_types = {ImType::kPga, ImType::kSa};
  c.thresholds = {0.01};
  c.bootstrap_methods = {Method::kKde};
  BootstrapResult r;
  bootstrap::BootstrapSummary s;
  s.logstd_median_im = 0.02;
  r.summaries[{ImType::kSa, 0.01, Method::kKde}] = s;
  r.summaries[{ImType::kPga, 0.01, Method::kKde}] = bootstrap::BootstrapSummary{};
  CHECK(logstd_csv(c, r) == "threshold,method,PGA,Sa\n0.01,kde,absent,0.02\n");
}

TEST_CASE("command sequence writes every artifact") {
  const auto out = scratch("cmds");
  const auto c = small_config(out);
  CHECK(cmd_all(c).outcome == Outcome::kSuccess);
  for (const char* f : {"samples.csv", "samples.json", "analysis/curves_PGA.csv", "analysis/curves_Sa.csv",
                        "analysis/parameters.csv", "analysis/errors.csv", "bootstrap/logstd_median_im.csv",
                        "bootstrap/envelope_kde_Sa_0.015.csv", "report/bundle.csv", "report/manifest.json"})
    CHECK_MESSAGE(fs::exists(out / f), f);
  const auto params = io::read_file(out / "analysis" / "parameters.csv");
  CHECK(params.rfind("threshold,method,im_type,median,logstd\n", 0) == 0);

  auto other = c;
  other.master_seed += 1;
  CHECK_THROWS_AS(cmd_analyze(other), ConfigError);
  fs::remove_all(out);
}

TEST_CASE("command line exit codes") {
  const auto out = scratch("cli");
  fs::create_directories(out);
  io::write_file(out / "bad.json", R"({"bogus": 1})");
  CHECK(run_cli("generate --config " + (out / "bad.json").string()) == 2);
  CHECK(run_cli("frobnicate") == 2);
  CHECK(run_cli("generate --n-motions 50 --out " + (out / "s").string()) == 0);
  CHECK(run_cli("analyze --n-motions 50 --out " + (out / "s").string()) == 2);
  CHECK(run_cli("generate --n-motions 150 --out " + (out / "t").string()) == 0);
  CHECK(run_cli("simulate --n-motions 150 --out " + (out / "t").string()) == 0);
  io::write_file(out / "th.json", R"({"n_motions": 150, "thresholds": [0.007, 0.5], "bootstrap": {"replications": 5}})");
  CHECK(run_cli("analyze --config " + (out / "th.json").string() + " --out " + (out / "t").string()) == 4);
  fs::remove_all(out);
}
