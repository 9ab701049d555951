#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace pmsense {

using cdouble = std::complex<double>;

// Uniformly sampled complex baseband signal. Sample k sits at t0 + k / sample_rate.
class IqTrace {
 public:
  IqTrace(std::vector<cdouble> samples, double sample_rate, double t0 = 0.0);

  std::span<const cdouble> samples() const noexcept { return samples_; }
  std::span<cdouble> samples() noexcept { return samples_; }
  std::vector<cdouble>& data() noexcept { return samples_; }

  std::size_t size() const noexcept { return samples_.size(); }
  double sample_rate() const noexcept { return sample_rate_; }
  double t0() const noexcept { return t0_; }
  double dt() const noexcept { return 1.0 / sample_rate_; }
  double duration() const noexcept { return static_cast<double>(samples_.size()) / sample_rate_; }
  double time_at(std::size_t k) const noexcept {
    return t0_ + static_cast<double>(k) / sample_rate_;
  }

  const cdouble& operator[](std::size_t k) const noexcept { return samples_[k]; }
  cdouble& operator[](std::size_t k) noexcept { return samples_[k]; }

  // First `count` samples; count must be in [1, size()].
  IqTrace prefix(std::size_t count) const;

  bool operator==(const IqTrace&) const = default;

 private:
  std::vector<cdouble> samples_;
  double sample_rate_;
  double t0_;
};

// One transmitted frame: a fixed training sequence followed by a pseudo-random payload.
struct FrameSpec {
  double training_duration = 16e-6;
  double payload_duration = 200e-6;
  double sample_rate = 1e6;
  std::uint64_t training_seed = 1;
  std::uint64_t payload_seed = 2;

  // Throws ConfigError when durations/rate are out of range or the frame is not a
  // whole number of samples.
  void validate() const;

  std::size_t training_samples() const;
  std::size_t samples_per_frame() const;
  double frame_duration() const { return training_duration + payload_duration; }
  double frame_rate() const { return 1.0 / frame_duration(); }
};

// Unit-modulus QPSK chips of the training sequence (deterministic in training_seed).
std::vector<cdouble> training_sequence(const FrameSpec& spec);

IqTrace make_frame(const FrameSpec& spec);

// n_frames frames back to back. The training part repeats verbatim; the payload of
// frame i is drawn from a seed derived from (payload_seed, i), so frame 0 equals
// make_frame(spec).
IqTrace make_burst(const FrameSpec& spec, std::int64_t n_frames);

// Aperiodic autocorrelation magnitude |sum_k x[k] conj(x[k-lag])| for lag in [0, n).
std::vector<double> autocorrelation(std::span<const cdouble> x);

}  // namespace pmsense
