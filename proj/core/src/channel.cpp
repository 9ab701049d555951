#include "pmsense/channel.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <numbers>

#include "pmsense/error.hpp"
#include "pmsense/rng.hpp"

namespace pmsense {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr int kJitterComponents = 4;
constexpr double kJitterRateLo = 3.0;  // Hz, finger-rubbing cadence
constexpr double kJitterRateHi = 8.0;

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

// Kahan-compensated running sum.
struct CompensatedSum {
  double sum = 0.0, carry = 0.0;
  void add(double x) {
    const double y = x - carry;
    const double t = sum + y;
    carry = (t - sum) - y;
    sum = t;
  }
};

}  // namespace

std::string to_string(Gesture g) {
  switch (g) {
    case Gesture::push: return "push";
    case Gesture::thumb: return "thumb";
    case Gesture::rub: return "rub";
  }
  return "?";
}

std::string to_string(Scenario s) { return s == Scenario::los ? "LoS" : "NLoS"; }

Gesture parse_gesture(std::string_view name) {
  const std::string n = lower(name);
  if (n == "push") return Gesture::push;
  if (n == "thumb") return Gesture::thumb;
  if (n == "rub") return Gesture::rub;
  throw InputError("unknown gesture label '" + std::string(name) + "' (expected push, thumb, rub)");
}

Scenario parse_scenario(std::string_view name) {
  const std::string n = lower(name);
  if (n == "los") return Scenario::los;
  if (n == "nlos") return Scenario::nlos;
  throw InputError("unknown scenario '" + std::string(name) + "' (expected LoS, NLoS)");
}

DopplerTrajectory::DopplerTrajectory(Constant c) : params_(c) {
  if (!std::isfinite(c.f0)) throw ConfigError("constant trajectory: f0 must be finite");
}

DopplerTrajectory::DopplerTrajectory(Sinusoid s) : params_(s) {
  if (!std::isfinite(s.peak) || !(s.period > 0.0) || !std::isfinite(s.phase))
    throw ConfigError("sinusoid trajectory: need finite peak/phase and period > 0");
}

DopplerTrajectory::DopplerTrajectory(ImpulseTrain t) : params_(std::move(t)) {
  const auto& p = std::get<ImpulseTrain>(params_);
  if (!std::isfinite(p.peak) || !(p.width > 0.0) || p.times.size() != p.signs.size())
    throw ConfigError("impulse trajectory: need finite peak, width > 0, one sign per impulse");
}

DopplerTrajectory::DopplerTrajectory(Jitter j) : params_(j) {
  if (!(j.band_limit >= 0.0) || !std::isfinite(j.band_limit))
    throw ConfigError("jitter trajectory: band_limit must be finite and >= 0");
  Rng rng(j.seed);
  double total = 0.0;
  for (int i = 0; i < kJitterComponents; ++i) {
    JitterComponent c{};
    c.weight = uniform(rng, 0.5, 1.0);
    c.rate = uniform(rng, kJitterRateLo, kJitterRateHi);
    c.phase = uniform(rng, 0.0, kTwoPi);
    total += c.weight;
    jitter_.push_back(c);
  }
  for (auto& c : jitter_) c.weight /= total;
}

DopplerTrajectory::Kind DopplerTrajectory::kind() const noexcept {
  return static_cast<Kind>(params_.index());
}

bool DopplerTrajectory::is_static() const noexcept {
  const auto* c = std::get_if<Constant>(&params_);
  return c != nullptr && c->f0 == 0.0;
}

double DopplerTrajectory::frequency(double t) const {
  struct Visitor {
    const DopplerTrajectory& self;
    double t;
    double operator()(const Constant& c) const { return c.f0; }
    double operator()(const Sinusoid& s) const {
      return s.peak * std::sin(kTwoPi * t / s.period + s.phase);
    }
    double operator()(const ImpulseTrain& p) const {
      double f = 0.0;
      for (std::size_t i = 0; i < p.times.size(); ++i) {
        const double u = (t - p.times[i]) / p.width;
        if (std::abs(u) < 10.0) f += p.signs[i] * p.peak * std::exp(-0.5 * u * u);
      }
      return f;
    }
    double operator()(const Jitter& j) const {
      double f = 0.0;
      for (const auto& c : self.jitter_) f += c.weight * std::sin(kTwoPi * c.rate * t + c.phase);
      return j.band_limit * f;
    }
  };
  return std::visit(Visitor{*this, t}, params_);
}

std::vector<double> accumulated_phase(const DopplerTrajectory& traj, double t0, double sample_rate,
                                      std::size_t count) {
  std::vector<double> phase(count);
  if (count == 0) return phase;
  if (traj.is_static()) return phase;

  CompensatedSum integral;  // of f(u) du from 0
  if (t0 != 0.0) {
    const auto steps = static_cast<std::size_t>(std::max(1.0, std::ceil(std::abs(t0) * sample_rate)));
    const double h = t0 / static_cast<double>(steps);
    double f_prev = traj.frequency(0.0);
    for (std::size_t i = 1; i <= steps; ++i) {
      const double f = traj.frequency(h * static_cast<double>(i));
      integral.add(0.5 * (f_prev + f) * h);
      f_prev = f;
    }
  }
  const double dt = 1.0 / sample_rate;
  double f_prev = traj.frequency(t0);
  phase[0] = -kTwoPi * integral.sum;
  for (std::size_t k = 1; k < count; ++k) {
    const double f = traj.frequency(t0 + static_cast<double>(k) * dt);
    integral.add(0.5 * (f_prev + f) * dt);
    f_prev = f;
    phase[k] = -kTwoPi * integral.sum;
  }
  return phase;
}

IqTrace apply_channel(const IqTrace& tx, const ChannelConfig& cfg) {
  if (cfg.paths.empty()) throw ConfigError("apply_channel: path set is empty");
  if (!(cfg.noise_power >= 0.0) || !std::isfinite(cfg.noise_power))
    throw ConfigError("apply_channel: noise_power must be finite and >= 0");
  if (!std::isfinite(cfg.freq_offset)) throw ConfigError("apply_channel: freq_offset must be finite");

  const std::size_t n = tx.size();
  const double fs = tx.sample_rate();
  const auto in = tx.samples();
  std::vector<cdouble> out(n, cdouble{});

  for (std::size_t p = 0; p < cfg.paths.size(); ++p) {
    const Path& path = cfg.paths[p];
    if (!(path.delay >= 0.0)) throw ConfigError("apply_channel: path " + std::to_string(p) + " has negative delay");
    if (!(std::abs(path.gain) > 0.0)) throw ConfigError("apply_channel: path " + std::to_string(p) + " has zero gain");
    if (!(path.delay < tx.duration()))
      throw ConfigError("apply_channel: path " + std::to_string(p) + " delay " +
                        std::to_string(path.delay) + " s is not shorter than the trace (" +
                        std::to_string(tx.duration()) + " s)");

    const double delay_samples = path.delay * fs;
    double whole = std::floor(delay_samples);
    double frac = delay_samples - whole;
    if (frac < 1e-9) frac = 0.0;
    if (frac > 1.0 - 1e-9) {
      whole += 1.0;
      frac = 0.0;
    }
    const auto shift = static_cast<std::size_t>(whole);
    const std::vector<double> phase =
        path.doppler.is_static() ? std::vector<double>{} : accumulated_phase(path.doppler, tx.t0(), fs, n);

    for (std::size_t k = shift; k < n; ++k) {
      cdouble s = in[k - shift];
      if (frac != 0.0) {
        const cdouble prev = k > shift ? in[k - shift - 1] : cdouble{};
        s = (1.0 - frac) * s + frac * prev;
      }
      cdouble v = path.gain * s;
      if (!phase.empty()) v *= std::polar(1.0, phase[k]);
      out[k] += v;
    }
  }

  if (cfg.freq_offset != 0.0) {
    for (std::size_t k = 0; k < n; ++k)
      out[k] *= std::polar(1.0, -kTwoPi * cfg.freq_offset * tx.time_at(k));
  }

  if (cfg.noise_power > 0.0) {
    Rng rng(cfg.noise_seed);
    std::normal_distribution<double> normal(0.0, std::sqrt(cfg.noise_power / 2.0));
    for (auto& v : out) {
      const double re = normal(rng);
      const double im = normal(rng);
      v += cdouble(re, im);
    }
  }
  return IqTrace(std::move(out), fs, tx.t0());
}

DopplerTrajectory gesture_trajectory(Gesture label, double duration, std::uint64_t seed,
                                     const GestureDefaults& d) {
  if (!(duration > 0.0)) throw InputError("gesture_trajectory: duration must be > 0");
  Rng rng(seed);
  switch (label) {
    case Gesture::push:
      return DopplerTrajectory::Sinusoid{d.push_peak, d.push_period, uniform(rng, 0.0, kTwoPi)};
    case Gesture::thumb: {
      // 2-4 impulses per second, alternating sign, spacing jittered by +-20%.
      const int per_second = 2 + static_cast<int>(rng() % 3);
      const double spacing = 1.0 / per_second;
      DopplerTrajectory::ImpulseTrain train;
      train.peak = d.thumb_peak;
      train.width = d.thumb_width;
      int sign = (rng() & 1) ? 1 : -1;
      for (double t = uniform(rng, 0.05, spacing); t < duration; t += spacing * uniform(rng, 0.8, 1.2)) {
        train.times.push_back(t);
        train.signs.push_back(sign);
        sign = -sign;
      }
      return train;
    }
    case Gesture::rub:
      return DopplerTrajectory::Jitter{d.rub_band, rng()};
  }
  throw InputError("gesture_trajectory: unknown label");
}

ScenarioPreset make_preset(Scenario scenario, Gesture gesture) {
  ScenarioPreset p;
  p.scenario = scenario;
  p.gesture = gesture;
  const double ref_gain = scenario == Scenario::los ? 1.0 : 0.3;
  const double sur_scale = scenario == Scenario::los ? 1.0 : 0.6;
  p.reference_gain = {ref_gain, 0.0};
  p.reference_delay = 1e-6;
  p.clutter = {
      Path{std::polar(0.5 * sur_scale, 0.7), 3e-6, {}},
      Path{std::polar(0.25 * sur_scale, -1.9), 8e-6, {}},
  };
  p.gesture_gain = {sur_scale, 0.0};
  p.gesture_delay = 5e-6;
  return p;
}

GestureSample synthesize_sample(const FrameSpec& spec, std::int64_t n_frames,
                                const ScenarioPreset& preset, double snr_db, double offset_hz,
                                std::uint64_t seed) {
  if (std::isnan(snr_db)) throw ConfigError("synthesize_sample: snr_db is NaN");
  FrameSpec burst_spec = spec;
  burst_spec.payload_seed = derive_seed(spec.payload_seed, seed);
  const IqTrace tx = make_burst(burst_spec, n_frames);

  const auto noise_for = [&](double dominant_power) {
    if (std::isinf(snr_db) && snr_db > 0) return 0.0;
    return dominant_power / std::pow(10.0, snr_db / 10.0);
  };

  ChannelConfig ref;
  ref.paths = {Path{preset.reference_gain, preset.reference_delay, {}}};
  ref.freq_offset = offset_hz;
  ref.noise_power = noise_for(std::norm(preset.reference_gain));
  ref.noise_seed = derive_seed(seed, 2);

  ChannelConfig sur;
  sur.paths = preset.clutter;
  if (preset.with_gesture)
    sur.paths.push_back(Path{preset.gesture_gain, preset.gesture_delay,
                             gesture_trajectory(preset.gesture, tx.duration(), derive_seed(seed, 1),
                                                preset.gesture_defaults)});
  if (sur.paths.empty()) throw ConfigError("synthesize_sample: surveillance channel has no paths");
  double dominant = 0.0;
  for (const auto& path : sur.paths) dominant = std::max(dominant, std::norm(path.gain));
  sur.freq_offset = offset_hz;
  sur.noise_power = noise_for(dominant);
  sur.noise_seed = derive_seed(seed, 3);

  return GestureSample{apply_channel(tx, ref), apply_channel(tx, sur), preset.gesture,
                       preset.scenario, snr_db, offset_hz, seed};
}

}  // namespace pmsense
