// Acceptance gate: one PASS/FAIL line per criterion A1-A8. Pass criterion names
// (e.g. `pmsense_acceptance A1 A5`) to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "pmsense/accuracy_fit.hpp"
#include "pmsense/caf.hpp"
#include "pmsense/channel.hpp"
#include "pmsense/classifier.hpp"
#include "pmsense/csi.hpp"
#include "pmsense/dataset.hpp"
#include "pmsense/error.hpp"
#include "pmsense/pipeline.hpp"
#include "pmsense/rng.hpp"

using namespace pmsense;

namespace {

const double kInf = std::numeric_limits<double>::infinity();

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::size_t nearest_bin(const std::vector<double>& axis, double f) {
  std::size_t best = 0;
  for (std::size_t j = 0; j < axis.size(); ++j)
    if (std::abs(axis[j] - f) < std::abs(axis[best] - f)) best = j;
  return best;
}

double mean_power(const IqTrace& x) {
  double p = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) p += std::norm(x[i]);
  return p / static_cast<double>(x.size());
}

double rel_dev(const Spectrogram& a, const Spectrogram& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) d = std::max(d, std::abs(a.values[i] - b.values[i]));
  return d / std::max(a.max_value(), b.max_value());
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// A1: constant-Doppler surveillance path at 10 dB SNR; per-window argmax near +f0.
Verdict doppler_localization() {
  const FrameSpec spec;
  const IqTrace tx = make_burst(spec, 9260);
  const CafGrid grid = CafGrid::make(spec.sample_rate);
  const std::size_t batch = batch_length_for(grid, spec.sample_rate, 216);
  const double noise = mean_power(tx) / 10.0;
  ChannelConfig ref{{Path{1.0, 0.0, {}}}, 0.0, noise, 11};
  const IqTrace y_r = apply_channel(tx, ref);
  Verdict v{true, ""};
  std::ostringstream d;
  std::uint64_t noise_seed = 20;
  for (double f0 : {-200.0, -100.0, 50.0, 150.0}) {
    ChannelConfig surv{{Path{1.0, 3e-6, DopplerTrajectory::Constant{f0}}}, 0.0, noise, ++noise_seed};
    const Spectrogram s = spectrogram_fast(apply_channel(tx, surv), y_r, grid, batch);
    const std::size_t target = nearest_bin(s.freq_axis, f0);
    std::size_t hits = 0;
    for (std::size_t w = 0; w < s.n_windows; ++w) {
      const std::size_t j = s.row_argmax(w);
      hits += (j + 1 >= target && j <= target + 1);
    }
    const double frac = static_cast<double>(hits) / static_cast<double>(s.n_windows);
    v.pass &= frac >= 0.95;
    d << (f0 == -200.0 ? "" : "; ") << "f0=" << f0 << " Hz: " << hits << "/" << s.n_windows << " windows";
  }
  v.detail = d.str();
  return v;
}

// A2: noise-free sample at offset 0 and 10 kHz.
Verdict offset_invariance() {
  const FrameSpec spec;
  const CafGrid grid = CafGrid::make(spec.sample_rate);
  const std::size_t batch = batch_length_for(grid, spec.sample_rate, 216);
  double worst = 0.0;
  for (Gesture g : kAllGestures) {
    const ScenarioPreset preset = make_preset(Scenario::los, g);
    const GestureSample a = synthesize_sample(spec, 9260, preset, kInf, 0.0, 5);
    const GestureSample b = synthesize_sample(spec, 9260, preset, kInf, 1e4, 5);
    worst = std::max(worst, rel_dev(spectrogram_fast(a.surveillance, a.reference, grid, batch),
                                    spectrogram_fast(b.surveillance, b.reference, grid, batch)));
  }
  return {worst <= 1e-9, "max relative deviation " + fmt("%.3g", worst) + " (limit 1e-9)"};
}

RunConfig acceptance_config() { return load_run_config(PMSENSE_SOURCE_DIR "/configs/acceptance.json"); }

// Full-length CAF spectrograms of the acceptance dataset, computed one sample at a
// time so only the spectrograms stay in memory.
const std::vector<LabeledSpectrogram>& acceptance_spectrograms(const RunConfig& cfg) {
  static std::vector<LabeledSpectrogram> data;
  if (!data.empty()) return data;
  const auto plan = plan_samples(cfg);
  const auto start = std::chrono::steady_clock::now();
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const GestureSample g = synthesize(cfg, plan[i]);
    data.push_back({compute_spectrogram(cfg, g, SpectrogramMode::caf), g.label, g.scenario});
    if ((i + 1) % 50 == 0)
      std::fprintf(stderr, "  dataset: %zu/%zu samples (%.0f s)\n", i + 1, plan.size(),
                   std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  }
  return data;
}

// A3: NLoS, 100 samples/gesture, 50/class train, T = 2 s, 5 seeds.
Verdict classification() {
  const RunConfig cfg = acceptance_config();
  const auto& data = acceptance_spectrograms(cfg);
  int good = 0;
  std::ostringstream d;
  d << "test accuracy per seed:";
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const TrainedModel m = run_experiment(cfg, data, cfg.classifier.duration, seed);
    good += m.outcome.test.accuracy >= 0.90;
    d << " " << fmt("%.3f", m.outcome.test.accuracy);
    std::fprintf(stderr, "  A3 seed %llu: %.3f\n", static_cast<unsigned long long>(seed), m.outcome.test.accuracy);
  }
  d << " (" << good << "/5 >= 0.90)";
  return {good >= 4, d.str()};
}

void randomize(ResidualNet& net, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  for (auto& p : net.parameters())
    for (double& v : p.value) {
      if (p.name.find("gamma") != std::string::npos) v = uniform(rng, 0.5, 1.5);
      else if (p.name.find("beta") != std::string::npos) v = 0.2 * g(rng);
      else v = 0.5 * g(rng);
    }
}

// A4: finite differences on every parameter of the 1-block network, 20 draws.
Verdict gradient_check() {
  ResidualNetConfig cfg;
  cfg.block_channels = {4};
  cfg.input_height = cfg.input_width = 8;
  double worst = 0.0;
  std::size_t checked = 0, kinks = 0;
  for (std::uint64_t draw = 0; draw < 20; ++draw) {
    cfg.seed = draw + 1;
    ResidualNet net(cfg);
    randomize(net, 1000 + draw);
    Rng rng(2000 + draw);
    std::normal_distribution<double> g(0.0, 1.0);
    Tensor x(4, 1, 8, 8);
    for (double& v : x.data) v = g(rng);
    const std::vector<int> y{0, 1, 2, static_cast<int>(rng() % 3)};
    net.zero_grad();
    Tensor grad;
    softmax_cross_entropy(net.forward(x, Mode::training, false), y, &grad);
    net.backward(grad);
    const std::uint64_t sig = net.activation_signature();
    for (auto& p : net.parameters())
      for (std::size_t j = 0; j < p.value.size(); ++j) {
        const double orig = p.value[j];
        double numeric = 0.0;
        bool smooth = false;
        for (double h = 1e-5; h >= 1e-8 && !smooth; h /= 10.0) {
          p.value[j] = orig + h;
          const double lp = softmax_cross_entropy(net.forward(x, Mode::training, false), y, nullptr);
          const bool sp = net.activation_signature() == sig;
          p.value[j] = orig - h;
          const double lm = softmax_cross_entropy(net.forward(x, Mode::training, false), y, nullptr);
          const bool sm = net.activation_signature() == sig;
          p.value[j] = orig;
          smooth = sp && sm;
          numeric = (lp - lm) / (2.0 * h);
        }
        kinks += !smooth;
        const double a = p.grad[j];
        worst = std::max(worst, std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-7}));
        ++checked;
      }
  }
  return {worst < 1e-4 && kinks == 0, std::to_string(checked) + " entries, worst relative error " +
                                          fmt("%.3g", worst) + ", unresolved kinks " + std::to_string(kinks)};
}

// A5: batched vs brute-force spectrogram on a 50-frame trace.
Verdict fast_direct() {
  const FrameSpec spec;
  const IqTrace tx = make_burst(spec, 50);
  ChannelConfig ref{{Path{1.0, 0.0, {}}}, 0.0, 0.05, 3};
  ChannelConfig surv{{Path{0.6, 2e-6, {}}, Path{0.4, 5e-6, DopplerTrajectory::Sinusoid{300.0, 0.01, 0.3}}}, 0.0, 0.05, 4};
  const IqTrace y_r = apply_channel(tx, ref), y_s = apply_channel(tx, surv);
  const CafGrid grid = CafGrid::make(spec.sample_rate, 20 * 216e-6, 10 * 216e-6, 8, 2000.0);
  double worst = 0.0;
  const Spectrogram direct = spectrogram(y_s, y_r, grid);
  for (std::size_t b : {216, 72, 24}) worst = std::max(worst, rel_dev(direct, spectrogram_fast(y_s, y_r, grid, b)));
  return {worst <= 1e-6, std::to_string(direct.n_windows) + " windows x " + std::to_string(direct.n_freq) +
                             " bins, max relative deviation " + fmt("%.3g", worst) + " (limit 1e-6)"};
}

// A6: noiseless round trip on the reference parameters and seeded noisy recovery.
Verdict curve_fit() {
  const AccuracyCurve ref{1.107, 0.0999, 0.7907};
  std::vector<AccuracyPoint> pts;
  for (double t : {0.25, 0.5, 1.0, 1.5, 2.0}) pts.push_back({t, eval_curve(ref, t).raw});
  const AccuracyCurve c = fit_accuracy_curve(pts);
  const double param_err =
      std::max({std::abs(c.gamma - ref.gamma), std::abs(c.alpha - ref.alpha), std::abs(c.beta - ref.beta)});
  std::vector<double> errs;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    Rng rng(seed);
    std::normal_distribution<double> g(0.0, 0.005);
    std::vector<AccuracyPoint> noisy;
    for (int i = 0; i < 20; ++i) {
      const double t = 0.1 + 0.1 * i;
      noisy.push_back({t, eval_curve(ref, t).raw + g(rng)});
    }
    errs.push_back(std::abs(fit_accuracy_curve(noisy).gamma - ref.gamma));
  }
  std::sort(errs.begin(), errs.end());
  return {param_err < 1e-3 && c.rmse < 1e-9 && errs[94] < 0.02,
          "round-trip max parameter error " + fmt("%.2g", param_err) + ", rmse " + fmt("%.2g", c.rmse) +
              "; noisy (sigma 0.005, 20 durations) 95th-pct gamma error " + fmt("%.4f", errs[94]) + " (limit 0.02)"};
}

double line_level(const Spectrogram& s, double f) {
  const std::size_t j = nearest_bin(s.freq_axis, f);
  double sum = 0.0;
  for (std::size_t w = 0; w < s.n_windows; ++w) sum += s.at(w, j);
  return sum / static_cast<double>(s.n_windows);
}

// A7: one-sided axis, coupling line for two movers, >= 20 dB loss without the static path.
Verdict csi_properties() {
  const FrameSpec spec;
  const IqTrace tx = make_burst(spec, 2000);
  const double f1 = 100.0, f2 = -230.0;
  ChannelConfig two{{Path{1.0, 0.0, {}}, Path{0.3, 0.0, DopplerTrajectory::Constant{f1}},
                     Path{0.2, 0.0, DopplerTrajectory::Constant{f2}}}};
  const Spectrogram s = csi_spectrogram(estimate_csi(apply_channel(tx, two), spec, 1), 0.1, 0.05);
  bool one_sided = s.one_sided;
  for (double f : s.freq_axis) one_sided &= f >= 0.0;
  // Coupling line: a local maximum at |f1 - f2| standing well above the floor.
  std::vector<double> mean(s.n_freq, 0.0);
  for (std::size_t w = 0; w < s.n_windows; ++w)
    for (std::size_t j = 0; j < s.n_freq; ++j) mean[j] += s.at(w, j);
  const std::size_t jc = nearest_bin(s.freq_axis, std::abs(f1 - f2));
  std::size_t peak = jc;
  for (std::size_t j = jc - 1; j <= jc + 1; ++j)
    if (mean[j] > mean[peak]) peak = j;
  std::vector<double> sorted = mean;
  std::sort(sorted.begin(), sorted.end());
  const double floor = sorted[sorted.size() / 2];
  const double coupling_db = 10.0 * std::log10(mean[peak] / floor);

  const Path mover{0.5, 2e-6, DopplerTrajectory::Constant{120.0}};
  const auto level = [&](bool with_static) {
    ChannelConfig c{{mover}};
    if (with_static) c.paths.push_back({1.0, 2e-6, {}});
    return line_level(csi_spectrogram(estimate_csi(apply_channel(tx, c), spec, 4), 0.1, 0.05), 120.0);
  };
  const double drop_db = 20.0 * std::log10(level(true) / std::max(level(false), 1e-300));
  return {one_sided && coupling_db >= 20.0 && drop_db >= 20.0,
          std::string("axis one-sided: ") + (one_sided ? "yes" : "no") + "; |f1-f2| line " + fmt("%.1f", coupling_db) +
              " dB over median; static-path removal drop " + fmt("%.1f", drop_db) + " dB"};
}

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * static_cast<double>(i + j);
    i = j + 1;
  }
  return r;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  const auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) ma += ra[i] / n, mb += rb[i] / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  return saa > 0.0 && sbb > 0.0 ? sab / std::sqrt(saa * sbb) : 0.0;
}

// A8: duration sweep {0.25, 0.5, 1, 1.5, 2} s x 5 seeds.
Verdict monotonicity() {
  const RunConfig cfg = acceptance_config();
  const auto& data = acceptance_spectrograms(cfg);
  const fs::path out = fs::temp_directory_path() / "pmsense_acceptance_sweep";
  fs::remove_all(out);
  const SweepResult r = run_sweep(cfg, data, out);
  std::vector<double> t, acc;
  std::ostringstream d;
  d << "mean accuracy:";
  for (const auto& p : r.mean_points) {
    t.push_back(p.duration);
    acc.push_back(p.accuracy);
    d << " " << p.duration << "s=" << fmt("%.3f", p.accuracy);
  }
  const double rho = spearman(t, acc);
  d << "; Spearman " << fmt("%.3f", rho);
  if (r.curve) d << "; fit gamma " << fmt("%.3f", r.curve->gamma) << " alpha " << fmt("%.4f", r.curve->alpha)
                 << " beta " << fmt("%.3f", r.curve->beta);
  return {rho > 0.0, d.str()};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"A1", doppler_localization}, {"A2", offset_invariance}, {"A3", classification},
      {"A4", gradient_check},       {"A5", fast_direct},       {"A6", curve_fit},
      {"A7", csi_properties},       {"A8", monotonicity}};
  std::set<std::string> only(argv + 1, argv + argc);
  int failures = 0;
  for (const auto& [name, run] : criteria) {
    if (!only.empty() && !only.count(name)) continue;
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = run();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%s %s (%.1f s) %s\n", name.c_str(), v.pass ? "PASS" : "FAIL", secs, v.detail.c_str());
    std::fflush(stdout);
    failures += !v.pass;
  }
  return failures == 0 ? 0 : 1;
}
