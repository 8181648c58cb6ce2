#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "consult/cli.hpp"
#include "consult/config.hpp"

namespace {

void apply_run_overrides(consult::HarnessConfig& config, bool offline,
                         bool replay, const std::string& mode,
                         int max_turns, int parallelism,
                         const std::string& corpus,
                         const std::string& run_dir) {
  if (offline) config.offline = true;
  if (replay) config.replay = true;
  if (!mode.empty()) config.mode = consult::run_mode_from_name(mode);
  if (max_turns > 0) config.max_turns = max_turns;
  if (parallelism > 0) config.parallelism = parallelism;
  if (!corpus.empty()) config.corpus_path = corpus;
  if (!run_dir.empty()) config.run_dir = run_dir;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-turn medical consultation evaluation harness"};
  app.require_subcommand(1);

  // build
  auto* build = app.add_subcommand(
      "build", "Reformulate raw multiple-choice questions into a corpus");
  consult::BuildOptions build_opts;
  std::string build_config_path;
  build->add_option("--raw", build_opts.raw_path, "raw MCQ jsonl file")
      ->required();
  build->add_option("--out", build_opts.out_corpus, "output corpus path")
      ->required();
  build->add_option("--source", build_opts.source, "corpus source name");
  build->add_flag("--dedup", build_opts.dedup,
                  "drop exact-duplicate stems before building");
  build->add_option("--config", build_config_path,
                    "harness config (enables LLM-backed extraction)");
  bool build_offline = false;
  build->add_flag("--offline", build_offline,
                  "force rule-based extraction even with a config");

  // run
  auto* run = app.add_subcommand("run", "Run consultations over a corpus");
  std::string run_config_path, run_mode, run_corpus, run_dir;
  bool run_offline = false, run_replay = false;
  int run_max_turns = 0, run_parallelism = 0;
  run->add_option("--config", run_config_path, "harness config file")
      ->required();
  run->add_flag("--offline", run_offline, "scripted agents only, no network");
  run->add_flag("--replay", run_replay, "serve all model calls from cache");
  run->add_option("--mode", run_mode, "consult | upper | lower");
  run->add_option("--max-turns", run_max_turns, "cap on doctor turns");
  run->add_option("--parallelism", run_parallelism, "max concurrent cases");
  run->add_option("--corpus", run_corpus, "corpus path override");
  run->add_option("--run-dir", run_dir, "run directory override");

  // analyze
  auto* analyze = app.add_subcommand(
      "analyze", "Turn curves, diversity, complexity bins over run outputs");
  consult::AnalyzeOptions analyze_opts;
  analyze->add_option("--corpus", analyze_opts.corpus_path, "corpus path")
      ->required();
  analyze->add_option("runs", analyze_opts.run_dirs, "run directories")
      ->required();
  analyze->add_option("--percentages", analyze_opts.percentages,
                      "ascending percentages in (0, 1]");
  analyze->add_option("--out-dir", analyze_opts.out_dir,
                      "where combined tables go (default: first run dir)");

  // report
  auto* report = app.add_subcommand("report", "Re-render a run's report");
  std::string report_run_dir;
  report->add_option("run", report_run_dir, "run directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (build->parsed()) {
      if (!build_config_path.empty()) {
        build_opts.config = consult::load_harness_config(build_config_path);
        build_opts.offline = build_offline;
      } else {
        build_opts.offline = true;
      }
      return consult::cmd_build(build_opts);
    }
    if (run->parsed()) {
      auto config = consult::load_harness_config(run_config_path);
      apply_run_overrides(config, run_offline, run_replay, run_mode,
                          run_max_turns, run_parallelism, run_corpus, run_dir);
      return consult::cmd_run(config);
    }
    if (analyze->parsed()) return consult::cmd_analyze(analyze_opts);
    if (report->parsed()) return consult::cmd_report(report_run_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
