// pmsense: dataset synthesis, spectrograms, training, sweeps and curve fitting.
//
// Exit codes: 0 success, 2 configuration or input error, 3 I/O error, 4 numerical
// error, 1 anything unexpected.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "pmsense/error.hpp"
#include "pmsense/pipeline.hpp"

namespace {

using namespace pmsense;

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config:
    case ErrorKind::input: return 2;
    case ErrorKind::io: return 3;
    case ErrorKind::numerical: return 4;
  }
  return 1;
}

const char* kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config: return "config error";
    case ErrorKind::input: return "input error";
    case ErrorKind::io: return "I/O error";
    case ErrorKind::numerical: return "numerical error";
  }
  return "error";
}

struct CommonArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;

  RunConfig load() const {
    RunConfig cfg = config.empty() ? RunConfig{} : load_run_config(config);
    if (seed) cfg.seed = *seed;
    if (!out.empty()) cfg.output_dir = out;
    cfg.validate();
    return cfg;
  }
};

void add_common(CLI::App* cmd, CommonArgs& a) {
  cmd->add_option("--config", a.config, "JSON run configuration (defaults when omitted)");
  cmd->add_option("--seed", a.seed, "Override the run seed");
  cmd->add_option("--out", a.out, "Output directory (overrides output_dir)");
}

void print_report(const char* what, const TrainReport& r) {
  std::printf("%s accuracy %.4f\n", what, r.accuracy);
  for (int t = 0; t < r.n_classes; ++t) {
    std::printf("  %-6s", to_string(class_gesture(t)).c_str());
    for (int p = 0; p < r.n_classes; ++p) std::printf(" %4d", r.count(t, p));
    std::printf("\n");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Passive bistatic gesture sensing pipeline"};
  app.require_subcommand(1);

  CommonArgs sim_args;
  auto* sim = app.add_subcommand("simulate", "Synthesize the reference/surveillance dataset");
  add_common(sim, sim_args);

  CommonArgs spec_args;
  std::string spec_input, spec_dataset, spec_mode = "caf";
  std::optional<double> spec_duration;
  bool spec_csv = false, spec_no_pgm = false;
  auto* spec = app.add_subcommand("spectrogram", "Compute spectrograms of one sample or a whole dataset");
  add_common(spec, spec_args);
  auto* in_opt = spec->add_option("--input", spec_input, "Sample description file (<id>.sample)");
  auto* ds_opt = spec->add_option("--dataset", spec_dataset, "Dataset directory; writes <dataset>/spectrograms/");
  in_opt->excludes(ds_opt);
  spec->add_option("--mode", spec_mode, "caf or csi")->check(CLI::IsMember({"caf", "csi"}));
  spec->add_option("--duration", spec_duration, "Use only the first SECONDS of the sample");
  spec->add_flag("--csv", spec_csv, "Also write a time,freq,magnitude CSV");
  spec->add_flag("--no-pgm", spec_no_pgm, "Skip the PGM image");

  CommonArgs train_args;
  std::string train_dataset;
  std::optional<double> train_duration;
  auto* trn = app.add_subcommand("train", "Train the classifier on a dataset split");
  add_common(trn, train_args);
  trn->add_option("--dataset", train_dataset, "Dataset directory")->required();
  trn->add_option("--duration", train_duration, "Sensing duration in seconds");

  CommonArgs eval_args;
  std::string eval_dataset, eval_model;
  std::optional<double> eval_duration;
  auto* evl = app.add_subcommand("eval", "Evaluate a trained model on the held-out split");
  add_common(evl, eval_args);
  evl->add_option("--dataset", eval_dataset, "Dataset directory")->required();
  evl->add_option("--model", eval_model, "Model file written by train")->required();
  evl->add_option("--duration", eval_duration, "Sensing duration in seconds");

  CommonArgs sweep_args;
  std::string sweep_dataset;
  auto* swp = app.add_subcommand("sweep", "Accuracy versus sensing duration, then curve fit");
  add_common(swp, sweep_args);
  swp->add_option("--dataset", sweep_dataset, "Dataset directory")->required();

  std::string fit_input, fit_out = ".";
  auto* fit = app.add_subcommand("fit", "Fit the accuracy curve to duration_s,accuracy points");
  fit->add_option("--input", fit_input, "CSV of points")->required();
  fit->add_option("--out", fit_out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*sim) {
      const RunConfig cfg = sim_args.load();
      const std::size_t n = cmd_simulate(cfg, cfg.output_dir);
      std::printf("wrote %zu samples to %s (config %s)\n", n, cfg.output_dir.c_str(), cfg.hash().c_str());
    } else if (*spec) {
      const RunConfig cfg = spec_args.load();
      const SpectrogramOutputs outputs{!spec_no_pgm, spec_csv};
      const SpectrogramMode mode = parse_mode(spec_mode);
      if (!spec_dataset.empty()) {
        if (spec_duration) throw ConfigError("--duration applies to --input only");
        const std::size_t n = cmd_spectrogram_dataset(cfg, spec_dataset, mode, outputs);
        std::printf("wrote %zu %s spectrograms to %s/spectrograms\n", n, spec_mode.c_str(), spec_dataset.c_str());
      } else if (!spec_input.empty()) {
        const fs::path out = cmd_spectrogram(cfg, spec_input, mode, cfg.output_dir, spec_duration, outputs);
        std::printf("wrote %s\n", out.string().c_str());
      } else {
        throw ConfigError("spectrogram needs --input or --dataset");
      }
    } else if (*trn) {
      const RunConfig cfg = train_args.load();
      const TrainCommandResult r = cmd_train(cfg, train_dataset, cfg.output_dir, train_duration);
      if (!r.outcome.train.epoch_loss.empty())
        std::printf("final training loss %.6f\n", r.outcome.train.epoch_loss.back());
      print_report("training", r.outcome.train);
      std::printf("model written to %s\n", r.model_path.string().c_str());
    } else if (*evl) {
      const RunConfig cfg = eval_args.load();
      print_report("test", cmd_eval(cfg, eval_dataset, eval_model, cfg.output_dir, eval_duration));
    } else if (*swp) {
      const RunConfig cfg = sweep_args.load();
      const SweepResult r = cmd_sweep(cfg, sweep_dataset, cfg.output_dir);
      for (const auto& p : r.mean_points) std::printf("T = %.3f s  mean accuracy %.4f\n", p.duration, p.accuracy);
      if (r.curve)
        std::printf("gamma %.6g  alpha %.6g  beta %.6g  rmse %.3g%s\n", r.curve->gamma, r.curve->alpha,
                    r.curve->beta, r.curve->rmse, r.curve->degenerate ? "  (degenerate)" : "");
    } else if (*fit) {
      const AccuracyCurve c = cmd_fit(fit_input, fit_out);
      std::printf("gamma %.6g  alpha %.6g  beta %.6g  rmse %.3g%s\n", c.gamma, c.alpha, c.beta, c.rmse,
                  c.degenerate ? "  (degenerate)" : "");
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "pmsense: %s: %s\n", kind_name(e.kind()), e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "pmsense: unexpected error: %s\n", e.what());
    return 1;
  }
  return 0;
}
