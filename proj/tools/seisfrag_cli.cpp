#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "seisfrag/common.hpp"
#include "seisfrag/pipeline.hpp"

namespace sp = seisfrag::pipeline;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

struct Overrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> jobs;
  std::optional<std::size_t> n_motions;
};

sp::StudyConfig resolve(const Overrides& o) {
  sp::StudyConfig c = o.config_path.empty() ? sp::StudyConfig{} : sp::load_config(o.config_path);
  if (o.seed) c.master_seed = *o.seed;
  if (o.out) c.output_dir = *o.out;
  if (o.jobs) c.jobs = *o.jobs;
  if (o.n_motions) c.n_motions = *o.n_motions;
  c.validate();
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stochastic ground motions, shear-building response and seismic fragility curves"};
  app.set_version_flag("--version", sp::kVersion);
  app.require_subcommand(1);

  Overrides o;
  app.add_option("--config", o.config_path, "JSON study configuration")->check(CLI::ExistingFile);
  app.add_option("--seed", o.seed, "Master seed for scenarios and noise");
  app.add_option("--out", o.out, "Output directory");
  app.add_option("--jobs", o.jobs, "Worker threads");
  app.add_option("--n-motions", o.n_motions, "Number of ground motions");
  bool dump_config = false;
  app.add_flag("--print-config", dump_config, "Print the resolved configuration before running");

  struct Sub {
    const char* name;
    const char* help;
    sp::CommandReport (*run)(const sp::StudyConfig&);
  };
  const Sub subs[] = {
      {"generate", "Sample scenarios and synthesize ground motions", &sp::cmd_generate},
      {"simulate", "Run transient analyses for every stored motion", &sp::cmd_simulate},
      {"analyze", "Estimate fragility curves with all four methods", &sp::cmd_analyze},
      {"bootstrap", "Bootstrap confidence envelopes", &sp::cmd_bootstrap},
      {"report", "Bundle artifacts and write the manifest", &sp::cmd_report},
      {"all", "Run every stage in order", &sp::cmd_all},
  };
  for (const auto& s : subs) app.add_subcommand(s.name, s.help)->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    const auto config = resolve(o);
    if (dump_config) std::cout << config.to_json() << '\n';
    for (const auto& s : subs) {
      if (!app.got_subcommand(s.name)) continue;
      const auto report = s.run(config);
      for (const auto& m : report.messages) std::cout << m << '\n';
      return static_cast<int>(report.outcome);
    }
  } catch (const seisfrag::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const seisfrag::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
  return 0;
}
