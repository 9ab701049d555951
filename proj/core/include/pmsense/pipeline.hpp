#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pmsense/accuracy_fit.hpp"
#include "pmsense/caf.hpp"
#include "pmsense/channel.hpp"
#include "pmsense/classifier.hpp"
#include "pmsense/dataset.hpp"
#include "pmsense/io.hpp"
#include "pmsense/waveform.hpp"

namespace pmsense {

struct GridConfig {
  double cit = 0.1;
  double hop = 0.05;
  int max_delay_samples = 16;
  double doppler_max = 500.0;
  double doppler_step = 0.0;  // 0 selects 1 / cit
  std::size_t max_batch_samples = 216;

  CafGrid make(double sample_rate) const;
};

struct ClassifierConfig {
  std::vector<int> block_channels{8, 16};
  int image_height = 32;
  int image_width = 32;
  int epochs = 100;
  int batch_size = 16;
  double learning_rate = 0.01;
  double momentum = 0.9;
  int train_per_class = 50;
  double duration = 1.9;  // sensing duration used by train / eval, s
  std::vector<Scenario> scenarios{Scenario::nlos};  // samples used by train, eval and sweep
};

struct SweepConfig {
  std::vector<double> durations{0.25, 0.5, 1.0, 1.5, 1.9};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
};

// Declarative experiment description, read from JSON. Missing keys take the
// defaults below; unknown keys are rejected.
struct RunConfig {
  FrameSpec frame;
  std::int64_t n_frames = 9000;
  int samples_per_gesture = 100;
  std::vector<Scenario> scenarios{Scenario::los, Scenario::nlos};
  // Sample i of each (scenario, gesture) uses snr_db[i % n] and offset_hz[i % n].
  std::vector<double> snr_db{10.0};
  std::vector<double> offset_hz{0.0};
  GridConfig grid;
  std::size_t csi_taps = 4;
  ClassifierConfig classifier;
  SweepConfig sweep;
  std::uint64_t seed = 1;
  std::string output_dir = "out";

  void validate() const;
  std::string to_json() const;
  // FNV-1a of the canonical JSON form; embedded in every manifest.
  std::string hash() const;
};

RunConfig parse_run_config(const std::string& json_text, const std::string& origin = "<config>");
RunConfig load_run_config(const fs::path& path);

// Seed of sample `index` of (scenario, gesture); independent of which other
// scenarios or gestures the config lists.
std::uint64_t sample_seed(std::uint64_t run_seed, Scenario scenario, Gesture gesture, int index);

struct SampleSpec {
  std::string id;  // e.g. nlos_push_007
  Scenario scenario;
  Gesture label;
  int index;
  double snr_db;
  double offset_hz;
  std::uint64_t seed;
};

// Every sample the config describes, in manifest order (scenario, gesture, index).
std::vector<SampleSpec> plan_samples(const RunConfig& cfg);
GestureSample synthesize(const RunConfig& cfg, const SampleSpec& s);

// On-disk dataset: <dir>/manifest.txt lists the samples; each sample has
// <dir>/samples/<id>.ref.iq, <id>.surv.iq (plus .meta sidecars) and <id>.sample
// carrying label, scenario, SNR, offset and seed.
struct DatasetEntry {
  SampleSpec spec;
  fs::path sample_file;
};

std::size_t cmd_simulate(const RunConfig& cfg, const fs::path& out_dir);
std::vector<DatasetEntry> read_dataset_manifest(const fs::path& dataset_dir);
GestureSample load_sample(const fs::path& sample_file);

enum class SpectrogramMode { caf, csi };
SpectrogramMode parse_mode(const std::string& name);

Spectrogram compute_spectrogram(const RunConfig& cfg, const GestureSample& sample, SpectrogramMode mode,
                                std::optional<double> duration = std::nullopt);

struct SpectrogramOutputs {
  bool pgm = true;
  bool csv = false;
};

// Spectrogram of one sample written to <out_dir>/<id>.<mode>.pmsg (plus .pgm/.csv).
fs::path cmd_spectrogram(const RunConfig& cfg, const fs::path& sample_file, SpectrogramMode mode,
                         const fs::path& out_dir, std::optional<double> duration, SpectrogramOutputs outputs);
// Every sample of a dataset, written to <dataset>/spectrograms/.
std::size_t cmd_spectrogram_dataset(const RunConfig& cfg, const fs::path& dataset_dir, SpectrogramMode mode,
                                    SpectrogramOutputs outputs);

// Full-length CAF spectrograms of the dataset samples in the given scenarios. Uses
// <dataset>/spectrograms/<id>.caf.pmsg when present and on the configured grid,
// otherwise computes from the IQ files.
std::vector<LabeledSpectrogram> dataset_spectrograms(const RunConfig& cfg, const fs::path& dataset_dir,
                                                     const std::vector<Scenario>& scenarios);

struct RunOutcome {
  TrainReport train;
  TrainReport test;
};

// One train/evaluate cycle at sensing duration `duration`: seeded stratified split,
// training, and inference on the held-out part. `seed` drives both split and
// initialization.
struct TrainedModel {
  ResidualNet net;
  RunOutcome outcome;
};
TrainedModel run_experiment(const RunConfig& cfg, const std::vector<LabeledSpectrogram>& data, double duration,
                            std::uint64_t seed);

struct TrainCommandResult {
  RunOutcome outcome;
  fs::path model_path;
};
// Trains on the dataset's split and writes model, loss CSV and training confusion;
// outcome.test is the saved model scored on the held-out part.
TrainCommandResult cmd_train(const RunConfig& cfg, const fs::path& dataset_dir, const fs::path& out_dir,
                             std::optional<double> duration);
// Evaluates a saved model on the held-out part of the same split.
TrainReport cmd_eval(const RunConfig& cfg, const fs::path& dataset_dir, const fs::path& model_path,
                     const fs::path& out_dir, std::optional<double> duration);

struct SweepRow {
  double duration;
  std::uint64_t seed;
  double accuracy;
};
struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<AccuracyPoint> mean_points;  // mean accuracy per duration
  std::optional<AccuracyCurve> curve;      // unset when the fit stage failed
};

// For every duration and seed: train, evaluate, record. Writes sweep_runs.csv,
// accuracy_points.csv and per-run confusion matrices before fitting, then
// curve_params.csv and curve_samples.csv. A failing stage raises the same error kind
// with the stage name prefixed.
SweepResult run_sweep(const RunConfig& cfg, const std::vector<LabeledSpectrogram>& data, const fs::path& out_dir);
SweepResult cmd_sweep(const RunConfig& cfg, const fs::path& dataset_dir, const fs::path& out_dir);

AccuracyCurve cmd_fit(const fs::path& points_csv, const fs::path& out_dir);

}  // namespace pmsense
