#include "pmsense/pipeline.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include "pmsense/csi.hpp"
#include "pmsense/error.hpp"
#include "pmsense/parallel.hpp"
#include "pmsense/rng.hpp"

namespace pmsense {

using json = nlohmann::ordered_json;

namespace {

[[noreturn]] void rethrow_stage(const std::string& stage, const Error& e) {
  const std::string msg = stage + ": " + e.what();
  switch (e.kind()) {
    case ErrorKind::config: throw ConfigError(msg);
    case ErrorKind::input: throw InputError(msg);
    case ErrorKind::io: throw IoError(msg);
    case ErrorKind::numerical: throw NumericalError(msg);
  }
  throw Error(e.kind(), msg);
}

template <typename Fn>
auto in_stage(const std::string& stage, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    rethrow_stage(stage, e);
  }
}

// Reads one JSON object with typed field access; every key must be consumed.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path, std::string origin)
      : j_(j), path_(std::move(path)), origin_(std::move(origin)) {
    if (!j_.is_object()) fail(path_, "expected an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const json& v = j_.at(key);
    try {
      if constexpr (std::is_same_v<T, double>) {
        if (!v.is_number()) throw std::invalid_argument("expected a number");
        out = v.get<double>();
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw std::invalid_argument("expected an integer");
        if constexpr (std::is_unsigned_v<T>) {
          if (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)
            throw std::invalid_argument("expected a non-negative integer");
        }
        out = v.get<T>();
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw std::invalid_argument("expected a string");
        out = v.get<std::string>();
      } else {
        out = v.get<T>();
      }
    } catch (const std::exception& e) {
      fail(path_ + "." + key, e.what());
    }
  }

  void read_scenarios(const char* key, std::vector<Scenario>& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const json& v = j_.at(key);
    if (!v.is_array()) fail(path_ + "." + key, "expected an array of scenario names");
    out.clear();
    for (const auto& item : v) {
      if (!item.is_string()) fail(path_ + "." + key, "expected scenario names");
      try {
        out.push_back(parse_scenario(item.get<std::string>()));
      } catch (const Error& e) {
        fail(path_ + "." + key, e.what());
      }
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (!seen_.count(key)) fail(path_ + "." + key, "unknown key");
  }

  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    throw ConfigError(origin_ + ": " + key + ": " + what);
  }

 private:
  const json& j_;
  std::string path_;
  std::string origin_;
  std::set<std::string> seen_;
};

json scenarios_json(const std::vector<Scenario>& v) {
  json a = json::array();
  for (Scenario s : v) a.push_back(to_string(s));
  return a;
}

std::string sample_id(Scenario s, Gesture g, int index) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%s_%03d", s == Scenario::los ? "los" : "nlos", to_string(g).c_str(), index);
  return buf;
}

std::string duration_tag(double t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", t);
  return buf;
}

}  // namespace

CafGrid GridConfig::make(double sample_rate) const {
  return CafGrid::make(sample_rate, cit, hop, max_delay_samples, doppler_max, doppler_step);
}

void RunConfig::validate() const {
  frame.validate();
  if (n_frames < 1) throw ConfigError("n_frames must be >= 1");
  if (samples_per_gesture < 1) throw ConfigError("samples_per_gesture must be >= 1");
  if (scenarios.empty()) throw ConfigError("scenarios must not be empty");
  if (snr_db.empty() || offset_hz.empty()) throw ConfigError("snr_db and offset_hz need at least one entry");
  for (double s : snr_db)
    if (std::isnan(s)) throw ConfigError("snr_db entries must be numbers");
  for (double f : offset_hz)
    if (!std::isfinite(f)) throw ConfigError("offset_hz entries must be finite");
  const CafGrid g = grid.make(frame.sample_rate);
  g.validate_doppler_limit(frame.frame_rate());
  if (grid.max_batch_samples < 1) throw ConfigError("grid.max_batch_samples must be >= 1");
  if (csi_taps < 1 || csi_taps > frame.training_samples())
    throw ConfigError("csi_taps must be in [1, training samples]");
  ResidualNetConfig{classifier.block_channels, classifier.image_height, classifier.image_width, 3, seed}.validate();
  if (classifier.epochs < 0 || classifier.batch_size < 1 || classifier.train_per_class < 1)
    throw ConfigError("classifier: epochs >= 0, batch_size >= 1 and train_per_class >= 1 required");
  if (!(classifier.learning_rate >= 0.0) || !(classifier.momentum >= 0.0 && classifier.momentum < 1.0))
    throw ConfigError("classifier: learning_rate >= 0 and momentum in [0, 1) required");
  if (!(classifier.duration >= grid.cit)) throw ConfigError("classifier.duration must be >= grid.cit");
  if (classifier.scenarios.empty()) throw ConfigError("classifier.scenarios must not be empty");
  if (sweep.durations.empty() || sweep.seeds.empty()) throw ConfigError("sweep needs durations and seeds");
  for (double t : sweep.durations)
    if (!(t >= grid.cit)) throw ConfigError("sweep.durations must all be >= grid.cit");
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
}

std::string RunConfig::to_json() const {
  json j;
  j["frame"] = {{"training_duration", frame.training_duration},
                {"payload_duration", frame.payload_duration},
                {"sample_rate", frame.sample_rate},
                {"training_seed", frame.training_seed},
                {"payload_seed", frame.payload_seed}};
  j["n_frames"] = n_frames;
  j["samples_per_gesture"] = samples_per_gesture;
  j["scenarios"] = scenarios_json(scenarios);
  json snr = json::array();
  for (double s : snr_db) snr.push_back(std::isinf(s) ? json("inf") : json(s));
  j["snr_db"] = snr;
  j["offset_hz"] = offset_hz;
  j["grid"] = {{"cit", grid.cit},
               {"hop", grid.hop},
               {"max_delay_samples", grid.max_delay_samples},
               {"doppler_max", grid.doppler_max},
               {"doppler_step", grid.doppler_step},
               {"max_batch_samples", grid.max_batch_samples}};
  j["csi_taps"] = csi_taps;
  j["classifier"] = {{"block_channels", classifier.block_channels},
                     {"image_height", classifier.image_height},
                     {"image_width", classifier.image_width},
                     {"epochs", classifier.epochs},
                     {"batch_size", classifier.batch_size},
                     {"learning_rate", classifier.learning_rate},
                     {"momentum", classifier.momentum},
                     {"train_per_class", classifier.train_per_class},
                     {"duration", classifier.duration},
                     {"scenarios", scenarios_json(classifier.scenarios)}};
  j["sweep"] = {{"durations", sweep.durations}, {"seeds", sweep.seeds}};
  j["seed"] = seed;
  j["output_dir"] = output_dir;
  return j.dump(2) + "\n";
}

std::string RunConfig::hash() const { return hex64(fnv1a64(to_json())); }

RunConfig parse_run_config(const std::string& json_text, const std::string& origin) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(origin + ": malformed JSON: " + e.what());
  }
  RunConfig cfg;
  ObjectReader r(root, "config", origin);
  if (const json* f = r.child("frame")) {
    ObjectReader fr(*f, "config.frame", origin);
    fr.read("training_duration", cfg.frame.training_duration);
    fr.read("payload_duration", cfg.frame.payload_duration);
    fr.read("sample_rate", cfg.frame.sample_rate);
    fr.read("training_seed", cfg.frame.training_seed);
    fr.read("payload_seed", cfg.frame.payload_seed);
    fr.finish();
  }
  r.read("n_frames", cfg.n_frames);
  r.read("samples_per_gesture", cfg.samples_per_gesture);
  r.read_scenarios("scenarios", cfg.scenarios);
  if (const json* s = r.child("snr_db")) {
    if (!s->is_array()) r.fail("config.snr_db", "expected an array");
    cfg.snr_db.clear();
    for (const auto& v : *s) {
      if (v.is_number()) cfg.snr_db.push_back(v.get<double>());
      else if (v.is_string() && v.get<std::string>() == "inf") cfg.snr_db.push_back(INFINITY);
      else r.fail("config.snr_db", "entries must be numbers or \"inf\" (noise off)");
    }
  }
  r.read("offset_hz", cfg.offset_hz);
  if (const json* g = r.child("grid")) {
    ObjectReader gr(*g, "config.grid", origin);
    gr.read("cit", cfg.grid.cit);
    gr.read("hop", cfg.grid.hop);
    gr.read("max_delay_samples", cfg.grid.max_delay_samples);
    gr.read("doppler_max", cfg.grid.doppler_max);
    gr.read("doppler_step", cfg.grid.doppler_step);
    gr.read("max_batch_samples", cfg.grid.max_batch_samples);
    gr.finish();
  }
  r.read("csi_taps", cfg.csi_taps);
  if (const json* c = r.child("classifier")) {
    ObjectReader cr(*c, "config.classifier", origin);
    cr.read("block_channels", cfg.classifier.block_channels);
    cr.read("image_height", cfg.classifier.image_height);
    cr.read("image_width", cfg.classifier.image_width);
    cr.read("epochs", cfg.classifier.epochs);
    cr.read("batch_size", cfg.classifier.batch_size);
    cr.read("learning_rate", cfg.classifier.learning_rate);
    cr.read("momentum", cfg.classifier.momentum);
    cr.read("train_per_class", cfg.classifier.train_per_class);
    cr.read("duration", cfg.classifier.duration);
    cr.read_scenarios("scenarios", cfg.classifier.scenarios);
    cr.finish();
  }
  if (const json* s = r.child("sweep")) {
    ObjectReader sr(*s, "config.sweep", origin);
    sr.read("durations", cfg.sweep.durations);
    sr.read("seeds", cfg.sweep.seeds);
    sr.finish();
  }
  r.read("seed", cfg.seed);
  r.read("output_dir", cfg.output_dir);
  r.finish();
  try {
    cfg.validate();
  } catch (const Error& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  return cfg;
}

RunConfig load_run_config(const fs::path& path) { return parse_run_config(read_file(path), path.string()); }

std::uint64_t sample_seed(std::uint64_t run_seed, Scenario scenario, Gesture gesture, int index) {
  return derive_seed(derive_seed(derive_seed(run_seed, static_cast<std::uint64_t>(scenario) + 1),
                                 static_cast<std::uint64_t>(gesture) + 1),
                     static_cast<std::uint64_t>(index));
}

std::vector<SampleSpec> plan_samples(const RunConfig& cfg) {
  std::vector<SampleSpec> out;
  for (Scenario s : cfg.scenarios)
    for (Gesture g : kAllGestures)
      for (int i = 0; i < cfg.samples_per_gesture; ++i)
        out.push_back({sample_id(s, g, i), s, g, i, cfg.snr_db[static_cast<std::size_t>(i) % cfg.snr_db.size()],
                       cfg.offset_hz[static_cast<std::size_t>(i) % cfg.offset_hz.size()],
                       sample_seed(cfg.seed, s, g, i)});
  return out;
}

GestureSample synthesize(const RunConfig& cfg, const SampleSpec& s) {
  return synthesize_sample(cfg.frame, cfg.n_frames, make_preset(s.scenario, s.label), s.snr_db, s.offset_hz, s.seed);
}

namespace {

KeyValues sample_record(const SampleSpec& s) {
  KeyValues kv;
  kv.set("id", s.id);
  kv.set("label", to_string(s.label));
  kv.set("scenario", to_string(s.scenario));
  kv.set("index", static_cast<std::int64_t>(s.index));
  kv.set("snr_db", std::isinf(s.snr_db) ? std::string("inf") : format_double(s.snr_db));
  kv.set("offset_hz", s.offset_hz);
  kv.set("seed", s.seed);
  kv.set("reference", s.id + ".ref.iq");
  kv.set("surveillance", s.id + ".surv.iq");
  return kv;
}

SampleSpec parse_sample_record(const KeyValues& kv) {
  try {
    SampleSpec s;
    s.id = kv.get("id");
    s.label = parse_gesture(kv.get("label"));
    s.scenario = parse_scenario(kv.get("scenario"));
    s.index = static_cast<int>(kv.get_int("index"));
    s.snr_db = kv.get("snr_db") == "inf" ? INFINITY : kv.get_double("snr_db");
    s.offset_hz = kv.get_double("offset_hz");
    s.seed = kv.get_uint("seed");
    return s;
  } catch (const Error& e) {
    throw IoError("corrupt sample description " + kv.origin + ": " + e.what());
  }
}

}  // namespace

std::size_t cmd_simulate(const RunConfig& cfg, const fs::path& out_dir) {
  cfg.validate();
  const std::vector<SampleSpec> plan = plan_samples(cfg);
  const fs::path sample_dir = out_dir / "samples";
  parallel_for(plan.size(), [&](std::size_t i) {
    const SampleSpec& s = plan[i];
    const GestureSample g = in_stage("simulate " + s.id, [&] { return synthesize(cfg, s); });
    KeyValues tags;
    tags.set("tag.sample", s.id);
    tags.set("tag.channel", std::string("reference"));
    write_iq(sample_dir / (s.id + ".ref.iq"), g.reference, tags);
    tags.set("tag.channel", std::string("surveillance"));
    write_iq(sample_dir / (s.id + ".surv.iq"), g.surveillance, tags);
    write_key_values(sample_dir / (s.id + ".sample"), sample_record(s));
  });

  KeyValues manifest;
  manifest.set("format", std::string("pmsense-dataset-1"));
  manifest.set("config_hash", cfg.hash());
  manifest.set("n_frames", cfg.n_frames);
  manifest.set("sample_rate", cfg.frame.sample_rate);
  manifest.set("count", static_cast<std::uint64_t>(plan.size()));
  for (std::size_t i = 0; i < plan.size(); ++i) manifest.set("sample." + std::to_string(i), plan[i].id);
  write_key_values(out_dir / "manifest.txt", manifest);
  write_file_atomic(out_dir / "config.json", cfg.to_json());
  return plan.size();
}

std::vector<DatasetEntry> read_dataset_manifest(const fs::path& dataset_dir) {
  const KeyValues manifest = read_key_values(dataset_dir / "manifest.txt");
  if (manifest.get("format") != "pmsense-dataset-1")
    throw IoError((dataset_dir / "manifest.txt").string() + ": not a dataset manifest");
  const std::uint64_t count = manifest.get_uint("count");
  std::vector<DatasetEntry> out;
  out.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const fs::path file = dataset_dir / "samples" / (manifest.get("sample." + std::to_string(i)) + ".sample");
    out.push_back({parse_sample_record(read_key_values(file)), file});
  }
  return out;
}

GestureSample load_sample(const fs::path& sample_file) {
  const KeyValues kv = read_key_values(sample_file);
  const SampleSpec s = parse_sample_record(kv);
  const fs::path dir = sample_file.parent_path();
  IqFile ref = read_iq(dir / kv.get("reference"));
  IqFile sur = read_iq(dir / kv.get("surveillance"));
  return {std::move(ref.trace), std::move(sur.trace), s.label, s.scenario, s.snr_db, s.offset_hz, s.seed};
}

SpectrogramMode parse_mode(const std::string& name) {
  if (name == "caf") return SpectrogramMode::caf;
  if (name == "csi") return SpectrogramMode::csi;
  throw ConfigError("unknown spectrogram mode '" + name + "' (expected caf or csi)");
}

Spectrogram compute_spectrogram(const RunConfig& cfg, const GestureSample& sample, SpectrogramMode mode,
                                std::optional<double> duration) {
  const double fs_hz = sample.surveillance.sample_rate();
  std::size_t count = sample.surveillance.size();
  if (duration) {
    const auto n = static_cast<std::size_t>(std::llround(*duration * fs_hz));
    if (n < 1 || n > count)
      throw InputError("duration " + format_double(*duration) + " s is outside the sample (" +
                       format_double(sample.surveillance.duration()) + " s)");
    count = n;
  }
  if (mode == SpectrogramMode::csi) {
    const CsiSeries csi = estimate_csi(sample.surveillance.prefix(count), cfg.frame, cfg.csi_taps);
    return csi_spectrogram(csi, cfg.grid.cit, cfg.grid.hop);
  }
  const CafGrid grid = cfg.grid.make(fs_hz);
  grid.validate_doppler_limit(cfg.frame.frame_rate());
  const std::size_t batch = batch_length_for(grid, fs_hz, cfg.grid.max_batch_samples);
  return spectrogram_fast(sample.surveillance.prefix(count), sample.reference.prefix(count), grid, batch);
}

namespace {

void write_spectrogram_outputs(const Spectrogram& s, const fs::path& base, SpectrogramOutputs outputs) {
  write_spectrogram(fs::path(base.string() + ".pmsg"), s);
  if (outputs.pgm) write_spectrogram_pgm(fs::path(base.string() + ".pgm"), s);
  if (outputs.csv) write_spectrogram_csv(fs::path(base.string() + ".csv"), s);
}

const char* mode_name(SpectrogramMode m) { return m == SpectrogramMode::caf ? "caf" : "csi"; }

}  // namespace

fs::path cmd_spectrogram(const RunConfig& cfg, const fs::path& sample_file, SpectrogramMode mode,
                         const fs::path& out_dir, std::optional<double> duration, SpectrogramOutputs outputs) {
  const SampleSpec spec = parse_sample_record(read_key_values(sample_file));
  const Spectrogram s = compute_spectrogram(cfg, load_sample(sample_file), mode, duration);
  const fs::path base = out_dir / (spec.id + "." + mode_name(mode));
  write_spectrogram_outputs(s, base, outputs);
  return fs::path(base.string() + ".pmsg");
}

std::size_t cmd_spectrogram_dataset(const RunConfig& cfg, const fs::path& dataset_dir, SpectrogramMode mode,
                                    SpectrogramOutputs outputs) {
  const std::vector<DatasetEntry> entries = read_dataset_manifest(dataset_dir);
  parallel_for(entries.size(), [&](std::size_t i) {
    const Spectrogram s = compute_spectrogram(cfg, load_sample(entries[i].sample_file), mode);
    write_spectrogram_outputs(s, dataset_dir / "spectrograms" / (entries[i].spec.id + "." + mode_name(mode)), outputs);
  });
  return entries.size();
}

std::vector<LabeledSpectrogram> dataset_spectrograms(const RunConfig& cfg, const fs::path& dataset_dir,
                                                     const std::vector<Scenario>& scenarios) {
  std::vector<DatasetEntry> entries;
  for (DatasetEntry& e : read_dataset_manifest(dataset_dir))
    if (std::find(scenarios.begin(), scenarios.end(), e.spec.scenario) != scenarios.end())
      entries.push_back(std::move(e));
  if (entries.empty()) throw InputError(dataset_dir.string() + ": no samples in the requested scenarios");
  const CafGrid grid = cfg.grid.make(cfg.frame.sample_rate);
  std::vector<LabeledSpectrogram> out(entries.size());
  parallel_for(entries.size(), [&](std::size_t i) {
    const fs::path cached = dataset_dir / "spectrograms" / (entries[i].spec.id + ".caf.pmsg");
    std::optional<Spectrogram> s;
    if (fs::exists(cached)) {
      Spectrogram c = read_spectrogram(cached);
      const double tol = 1e-6;
      if (!c.one_sided && c.n_freq == grid.doppler_bins.size() && std::abs(c.cit - grid.cit) < tol * grid.cit &&
          std::abs(c.hop - grid.hop) < tol * grid.hop)
        s = std::move(c);
    }
    if (!s) s = compute_spectrogram(cfg, load_sample(entries[i].sample_file), SpectrogramMode::caf);
    out[i] = {std::move(*s), entries[i].spec.label, entries[i].spec.scenario};
  });
  return out;
}

namespace {

constexpr std::uint64_t kSplitSalt = 0x73706c6974;  // "split"
constexpr std::uint64_t kInitSalt = 0x696e6974;     // "init"
constexpr std::uint64_t kShuffleSalt = 0x73687566;  // "shuf"

ResidualNetConfig net_config(const RunConfig& cfg, std::uint64_t seed) {
  return {cfg.classifier.block_channels, cfg.classifier.image_height, cfg.classifier.image_width, 3,
          derive_seed(seed, kInitSalt)};
}

TrainOptions train_options(const RunConfig& cfg, std::uint64_t seed) {
  TrainOptions o;
  o.epochs = cfg.classifier.epochs;
  o.batch_size = cfg.classifier.batch_size;
  o.learning_rate = cfg.classifier.learning_rate;
  o.momentum = cfg.classifier.momentum;
  o.seed = derive_seed(seed, kShuffleSalt);
  return o;
}

Split split_for(const RunConfig& cfg, const std::vector<LabeledSpectrogram>& data, double duration,
                std::uint64_t seed) {
  const std::vector<SpecImage> images =
      in_stage("images", [&] {
        return images_from_spectrograms(data, duration, cfg.classifier.image_height, cfg.classifier.image_width);
      });
  return in_stage("split", [&] { return stratified_split(images, cfg.classifier.train_per_class, derive_seed(seed, kSplitSalt)); });
}

}  // namespace

TrainedModel run_experiment(const RunConfig& cfg, const std::vector<LabeledSpectrogram>& data, double duration,
                            std::uint64_t seed) {
  const Split split = split_for(cfg, data, duration, seed);
  if (split.test.empty()) throw InputError("split: no samples left for testing");
  TrainResult trained =
      in_stage("train", [&] { return train(net_config(cfg, seed), split.train, train_options(cfg, seed)); });
  TrainReport test = in_stage("evaluate", [&] { return evaluate(trained.net, split.test); });
  return {std::move(trained.net), {std::move(trained.report), std::move(test)}};
}

TrainCommandResult cmd_train(const RunConfig& cfg, const fs::path& dataset_dir, const fs::path& out_dir,
                             std::optional<double> duration) {
  const double t = duration.value_or(cfg.classifier.duration);
  const auto data = in_stage("spectrograms", [&] { return dataset_spectrograms(cfg, dataset_dir, cfg.classifier.scenarios); });
  const Split split = split_for(cfg, data, t, cfg.seed);
  TrainResult trained =
      in_stage("train", [&] { return train(net_config(cfg, cfg.seed), split.train, train_options(cfg, cfg.seed)); });
  const fs::path model = out_dir / "model.bin";
  save_model(model, trained.net);
  // Held-out score of the model as saved (float32), so it matches `eval`.
  ResidualNet saved = load_model(model);
  TrainReport test = in_stage("evaluate", [&] { return evaluate(saved, split.test); });
  write_loss_csv(out_dir / "train_loss.csv", trained.report);
  write_confusion_csv(out_dir / "train_confusion.csv", trained.report);
  KeyValues meta;
  meta.set("config_hash", cfg.hash());
  meta.set("duration_s", t);
  meta.set("train_accuracy", trained.report.accuracy);
  meta.set("n_train", static_cast<std::uint64_t>(split.train.size()));
  meta.set("test_accuracy", test.accuracy);
  meta.set("n_test", static_cast<std::uint64_t>(split.test.size()));
  write_key_values(out_dir / "train_report.txt", meta);
  return {{std::move(trained.report), std::move(test)}, model};
}

TrainReport cmd_eval(const RunConfig& cfg, const fs::path& dataset_dir, const fs::path& model_path,
                     const fs::path& out_dir, std::optional<double> duration) {
  const double t = duration.value_or(cfg.classifier.duration);
  ResidualNet net = load_model(model_path);
  const auto data = in_stage("spectrograms", [&] { return dataset_spectrograms(cfg, dataset_dir, cfg.classifier.scenarios); });
  const Split split = split_for(cfg, data, t, cfg.seed);
  if (split.test.empty()) throw InputError("split: no samples left for testing");
  TrainReport report = in_stage("evaluate", [&] { return evaluate(net, split.test); });
  write_confusion_csv(out_dir / "eval_confusion.csv", report);
  KeyValues meta;
  meta.set("config_hash", cfg.hash());
  meta.set("duration_s", t);
  meta.set("accuracy", report.accuracy);
  meta.set("n_test", static_cast<std::uint64_t>(split.test.size()));
  write_key_values(out_dir / "eval_report.txt", meta);
  return report;
}

SweepResult run_sweep(const RunConfig& cfg, const std::vector<LabeledSpectrogram>& data, const fs::path& out_dir) {
  SweepResult result;
  std::string runs = "duration_s,seed,accuracy\n";
  for (std::size_t d = 0; d < cfg.sweep.durations.size(); ++d) {
    const double t = cfg.sweep.durations[d];
    double sum = 0.0;
    for (std::uint64_t seed : cfg.sweep.seeds) {
      const std::uint64_t run_seed = derive_seed(seed, d);
      TrainedModel m = run_experiment(cfg, data, t, run_seed);
      write_confusion_csv(out_dir / ("confusion_T" + duration_tag(t) + "_seed" + std::to_string(seed) + ".csv"),
                          m.outcome.test);
      result.rows.push_back({t, seed, m.outcome.test.accuracy});
      runs += format_double(t) + "," + std::to_string(seed) + "," + format_double(m.outcome.test.accuracy) + "\n";
      sum += m.outcome.test.accuracy;
    }
    result.mean_points.push_back({t, sum / static_cast<double>(cfg.sweep.seeds.size())});
  }
  write_file_atomic(out_dir / "sweep_runs.csv", runs);
  write_accuracy_points(out_dir / "accuracy_points.csv", result.mean_points);

  const AccuracyCurve curve = in_stage("fit", [&] { return fit_accuracy_curve(result.mean_points); });
  write_curve_params(out_dir / "curve_params.csv", curve);
  const auto [lo, hi] = std::minmax_element(cfg.sweep.durations.begin(), cfg.sweep.durations.end());
  write_curve_samples(out_dir / "curve_samples.csv", curve, *lo, *hi);
  result.curve = curve;
  return result;
}

SweepResult cmd_sweep(const RunConfig& cfg, const fs::path& dataset_dir, const fs::path& out_dir) {
  const auto data = in_stage("spectrograms", [&] { return dataset_spectrograms(cfg, dataset_dir, cfg.classifier.scenarios); });
  return run_sweep(cfg, data, out_dir);
}

AccuracyCurve cmd_fit(const fs::path& points_csv, const fs::path& out_dir) {
  const std::vector<AccuracyPoint> points = read_accuracy_points(points_csv);
  const AccuracyCurve curve = in_stage("fit", [&] { return fit_accuracy_curve(points); });
  write_curve_params(out_dir / "curve_params.csv", curve);
  double lo = points.front().duration, hi = lo;
  for (const auto& p : points) {
    lo = std::min(lo, p.duration);
    hi = std::max(hi, p.duration);
  }
  write_curve_samples(out_dir / "curve_samples.csv", curve, lo, hi);
  return curve;
}

}  // namespace pmsense
