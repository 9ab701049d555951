#pragma once

#include <cstddef>
#include <vector>

#include "pmsense/spectrogram.hpp"
#include "pmsense/waveform.hpp"

namespace pmsense {

// Delay/Doppler evaluation grid for the cross ambiguity function.
struct CafGrid {
  std::vector<double> delay_bins;    // s, non-negative
  std::vector<double> doppler_bins;  // Hz, strictly increasing and symmetric about 0
  double cit = 0.1;                  // coherent integration time T_w, s
  double hop = 0.05;                 // window stride, s

  void validate() const;
  // Rejects Doppler bins outside +-frame_rate / 2.
  void validate_doppler_limit(double frame_rate) const;

  // Delays 0..max_delay_samples in one-sample steps; Doppler bins k * step for
  // |k * step| <= doppler_max. step defaults to 1 / cit.
  static CafGrid make(double sample_rate, double cit = 0.1, double hop = 0.05,
                      int max_delay_samples = 16, double doppler_max = 500.0,
                      double doppler_step = 0.0);
};

// R(tau, f) on the grid, row-major with one row per delay bin.
struct AmbiguitySurface {
  std::vector<cdouble> values;
  CafGrid grid;
  double t_start = 0.0;

  const cdouble& at(std::size_t delay, std::size_t doppler) const {
    return values[delay * grid.doppler_bins.size() + doppler];
  }
};

// Discrete cross ambiguity function over [t_start, t_start + cit):
//   R(tau, f) = dt * sum_k y_s[k] conj(y_r(t_k - tau)) exp(j 2 pi f t_k)
// with t_k absolute sample times. Both traces must share sample rate and t0; the
// reference is zero before its first sample and linearly interpolated for
// fractional delays.
AmbiguitySurface caf(const IqTrace& y_s, const IqTrace& y_r, const CafGrid& grid, double t_start);

// Number of whole windows of `window` samples at stride `hop` in `count` samples.
std::size_t window_count(std::size_t count, std::size_t window, std::size_t hop);

// Sliding-window time-Doppler map: for each window start t = t0 + w * hop and each
// Doppler bin, the largest |R(tau, f)| over the delay bins. Direct evaluation.
Spectrogram spectrogram(const IqTrace& y_s, const IqTrace& y_r, const CafGrid& grid);

// Same map computed batch-wise: the lag product is reduced to a few moment sums per
// batch of `batch_samples` samples, which are then transformed across batches with an
// FFT. The intra-batch Doppler phase is restored by a Taylor series truncated below
// double-precision round-off, so the result matches spectrogram() to ~1e-12.
// Requires integer-sample delays, cit and hop that are whole multiples of the batch,
// Doppler bins on multiples of 1 / cit and within +-batch_rate / 2.
Spectrogram spectrogram_fast(const IqTrace& y_s, const IqTrace& y_r, const CafGrid& grid,
                             std::size_t batch_samples);

// Largest batch length <= max_batch that divides both the window and hop lengths.
std::size_t batch_length_for(const CafGrid& grid, double sample_rate, std::size_t max_batch);

}  // namespace pmsense
