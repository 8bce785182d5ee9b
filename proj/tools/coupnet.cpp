// coupnet: synth | preprocess | featurize | sweep
//
// Exit status: 0 on success, 2 for missing inputs or bad configuration,
// 3 for malformed or inconsistent data, 1 for anything else.

#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "coupnet/pipeline.hpp"

namespace {

using coupnet::pipeline::RunConfig;

RunConfig resolve_config(const std::string& config_path, const CLI::Option* seed_opt, std::uint64_t seed,
                         const std::string& out, const CLI::Option* workers_opt, unsigned workers) {
  RunConfig c;
  if (!config_path.empty()) {
    c = coupnet::pipeline::load_config(config_path);
  } else {
    c.synthetic = coupnet::SyntheticConfig{};
  }
  if (const char* env = std::getenv(coupnet::pipeline::kOutputDirEnv); env && *env) c.output_dir = env;
  if (!out.empty()) c.output_dir = out;
  if (seed_opt->count() > 0) c.seed = seed;
  if (workers_opt->count() > 0) c.workers = workers;
  if (c.workers == 0) throw coupnet::ValidationError("--workers must be at least 1");
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Coupled social/behavioral network features, boosted classifiers and alpha sweeps"};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 0;
  std::string out;
  unsigned workers = 1;
  auto* config_opt = app.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "Global seed (overrides config)");
  app.add_option("--out", out, "Output directory (overrides $COUPNET_OUT and config)");
  auto* workers_opt = app.add_option("--workers", workers, "Maximum worker threads");
  (void)config_opt;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic coupled network");
  auto* preprocess = app.add_subcommand("preprocess", "Ingest, keep the largest component and align layers");
  auto* featurize = app.add_subcommand("featurize", "Compute the ten per-user structural features");
  auto* sweep = app.add_subcommand("sweep", "Label users, train hybrid classifiers and sweep alpha");

  CLI11_PARSE(app, argc, argv);

  try {
    const auto c = resolve_config(config_path, seed_opt, seed, out, workers_opt, workers);
    if (synth->parsed()) coupnet::pipeline::cmd_synth(c);
    if (preprocess->parsed()) coupnet::pipeline::cmd_preprocess(c);
    if (featurize->parsed()) coupnet::pipeline::cmd_featurize(c);
    if (sweep->parsed()) coupnet::pipeline::cmd_sweep(c);
  } catch (const coupnet::MissingInputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const coupnet::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const coupnet::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
