#include <omp.h>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "mplexnet/error.hpp"
#include "mplexnet/log.hpp"
#include "mplexnet/pipeline.hpp"

namespace fs = std::filesystem;
using namespace mplexnet;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitArtifact = 3;
constexpr int kExitNumerical = 4;

int fail(int code, const std::string& msg) {
  std::cerr << "error: " << msg << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  init_logging();
  tune_allocator();

  CLI::App app{"Multimodal outcome prediction with multiplexed graph networks"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  int jobs = 0;
  std::string out = "run";
  app.add_option("--config", config_path, "Run config JSON (default: <out>/config.json if present, else defaults)");
  app.add_option("--seed", seed, "Override the config seed");
  app.add_option("--jobs", jobs, "Worker threads for per-patient work (0 = OpenMP default)")->check(CLI::NonNegativeNumber);
  app.add_option("--out", out, "Run directory");

  auto* synth = app.add_subcommand("synth", "Generate the synthetic cohort into <out>/cohort");
  auto* enc = app.add_subcommand("train-encoders", "Train the domain and common autoencoders per split");
  auto* graphs = app.add_subcommand("build-graphs", "Build per-patient multiplex graphs per split");
  auto* train = app.add_subcommand("train", "Train one model per split and write its scores");
  auto* eval = app.add_subcommand("eval", "Summarize test scores of every trained model");
  auto* show = app.add_subcommand("config", "Print the effective config and its hash");

  std::optional<std::size_t> split;
  for (auto* sub : {enc, graphs, train}) sub->add_option("--split", split, "Run only this split index");
  std::string model;
  bool resume = false;
  std::optional<int> stop_after;
  train->add_option("--model", model, "mplex, rgcn_multiplex, rgcn_modality, gcn, early, intermediate or no_fusion:<modality>")
      ->required();
  train->add_flag("--resume", resume, "Continue from the saved training state");
  train->add_option("--stop-after", stop_after, "Stop once this many epochs are done")->check(CLI::NonNegativeNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    pipeline::RunConfig cfg;
    if (!config_path.empty())
      cfg = pipeline::RunConfig::load(config_path);
    else if (fs::exists(fs::path(out) / "config.json"))
      cfg = pipeline::RunConfig::load(fs::path(out) / "config.json");
    if (seed) cfg.seed = *seed;
    if (jobs > 0) omp_set_num_threads(jobs);
    const auto exec = jobs == 1 ? kernels::Exec::serial : kernels::Exec::parallel;
    pipeline::Run run(out, cfg);

    if (*show) {
      std::cout << "config_hash " << run.hash() << '\n' << cfg.to_json().dump(2) << '\n';
    } else if (*synth) {
      run.synth();
    } else if (*enc) {
      run.train_encoders(pipeline::select_splits(run, split));
    } else if (*graphs) {
      run.build_graphs(pipeline::select_splits(run, split), exec);
    } else if (*train) {
      pipeline::check_model_name(cfg, model);
      run.train(model, pipeline::select_splits(run, split), {resume, stop_after});
    } else if (*eval) {
      run.evaluate();
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    return fail(kExitConfig, e.what());
  } catch (const DimensionError& e) {
    return fail(kExitConfig, e.what());
  } catch (const ArtifactError& e) {
    return fail(kExitArtifact, e.what());
  } catch (const FormatError& e) {
    return fail(kExitArtifact, e.what());
  } catch (const NumericalError& e) {
    return fail(kExitNumerical, e.what());
  } catch (const std::exception& e) {
    return fail(1, e.what());
  }
}
