#include "pmsense/waveform.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "pmsense/error.hpp"
#include "pmsense/rng.hpp"

namespace pmsense {

namespace {

// Whole sample count for `seconds` at `rate`, or -1 when not (nearly) integral.
long long whole_samples(double seconds, double rate) {
  const double exact = seconds * rate;
  const double rounded = std::round(exact);
  if (std::abs(exact - rounded) > 1e-6 * std::max(1.0, std::abs(exact))) return -1;
  return static_cast<long long>(rounded);
}

cdouble qpsk_chip(std::uint64_t bits) {
  static const double kQuarter = std::numbers::pi / 4.0;
  const double phase = kQuarter + static_cast<double>(bits >> 62) * std::numbers::pi / 2.0;
  return std::polar(1.0, phase);
}

void append_chips(std::vector<cdouble>& out, std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  for (std::size_t k = 0; k < count; ++k) out.push_back(qpsk_chip(rng()));
}

}  // namespace

IqTrace::IqTrace(std::vector<cdouble> samples, double sample_rate, double t0)
    : samples_(std::move(samples)), sample_rate_(sample_rate), t0_(t0) {
  if (samples_.empty()) throw InputError("IqTrace: sample count must be >= 1");
  if (!(sample_rate_ > 0.0) || !std::isfinite(sample_rate_))
    throw InputError("IqTrace: sample_rate must be > 0");
  if (!std::isfinite(t0_)) throw InputError("IqTrace: t0 must be finite");
}

IqTrace IqTrace::prefix(std::size_t count) const {
  if (count == 0 || count > samples_.size())
    throw InputError("IqTrace::prefix: count " + std::to_string(count) + " outside [1, " +
                     std::to_string(samples_.size()) + "]");
  return IqTrace(std::vector<cdouble>(samples_.begin(), samples_.begin() + count), sample_rate_,
                 t0_);
}

void FrameSpec::validate() const {
  if (!(training_duration > 0.0)) throw ConfigError("frame: training_duration must be > 0");
  if (!(payload_duration >= 0.0)) throw ConfigError("frame: payload_duration must be >= 0");
  if (!(sample_rate > 0.0) || !std::isfinite(sample_rate))
    throw ConfigError("frame: sample_rate must be > 0");
  if (whole_samples(training_duration, sample_rate) < 1)
    throw ConfigError("frame: training_duration x sample_rate must be a positive integer");
  if (whole_samples(payload_duration, sample_rate) < 0)
    throw ConfigError("frame: payload_duration x sample_rate must be an integer");
}

std::size_t FrameSpec::training_samples() const {
  validate();
  return static_cast<std::size_t>(whole_samples(training_duration, sample_rate));
}

std::size_t FrameSpec::samples_per_frame() const {
  validate();
  return static_cast<std::size_t>(whole_samples(training_duration, sample_rate) +
                                  whole_samples(payload_duration, sample_rate));
}

std::vector<cdouble> training_sequence(const FrameSpec& spec) {
  std::vector<cdouble> chips;
  const std::size_t n = spec.training_samples();
  chips.reserve(n);
  append_chips(chips, n, spec.training_seed);
  return chips;
}

IqTrace make_frame(const FrameSpec& spec) { return make_burst(spec, 1); }

IqTrace make_burst(const FrameSpec& spec, std::int64_t n_frames) {
  if (n_frames < 1) throw ConfigError("make_burst: n_frames must be >= 1");
  const std::size_t frame_len = spec.samples_per_frame();
  const std::vector<cdouble> training = training_sequence(spec);
  const std::size_t payload_len = frame_len - training.size();

  std::vector<cdouble> out;
  out.reserve(frame_len * static_cast<std::size_t>(n_frames));
  for (std::int64_t i = 0; i < n_frames; ++i) {
    out.insert(out.end(), training.begin(), training.end());
    append_chips(out, payload_len, derive_seed(spec.payload_seed, static_cast<std::uint64_t>(i)));
  }
  return IqTrace(std::move(out), spec.sample_rate, 0.0);
}

std::vector<double> autocorrelation(std::span<const cdouble> x) {
  std::vector<double> mags(x.size());
  for (std::size_t lag = 0; lag < x.size(); ++lag) {
    cdouble acc{};
    for (std::size_t k = lag; k < x.size(); ++k) acc += x[k] * std::conj(x[k - lag]);
    mags[lag] = std::abs(acc);
  }
  return mags;
}

}  // namespace pmsense
