#pragma once

#include <cstddef>
#include <vector>

#include "pmsense/spectrogram.hpp"
#include "pmsense/waveform.hpp"

namespace pmsense {

// Per-frame FIR channel estimates, row-major (frame x tap).
struct CsiSeries {
  std::vector<cdouble> values;
  std::vector<double> frame_times;  // start time of each frame, s
  double frame_rate = 0.0;
  std::size_t n_taps = 0;

  std::size_t n_frames() const { return frame_times.size(); }
  const cdouble& tap(std::size_t frame, std::size_t k) const { return values[frame * n_taps + k]; }
  // Tap with the largest mean power across frames.
  std::size_t dominant_tap() const;
};

// Least-squares n_taps FIR fit of each frame's received training segment against the
// known training sequence. Only fully overlapped rows are used, so the estimate never
// depends on the preceding payload. y_s must start on a frame boundary; a trailing
// partial frame is ignored. Throws NumericalError carrying the condition number when
// the training matrix is rank deficient or ill-conditioned (> 1e8).
CsiSeries estimate_csi(const IqTrace& y_s, const FrameSpec& spec, std::size_t n_taps);

// Sliding-window DFT of the dominant tap's magnitude sequence. Windows span
// round(cit * frame_rate) frames and advance by round(hop * frame_rate) frames; the
// recorded cit/hop are those whole-frame values. The magnitude sequence is real, so
// only bins 0 .. frame_rate / 2 are kept.
Spectrogram csi_spectrogram(const CsiSeries& csi, double cit, double hop, bool remove_mean = true);

}  // namespace pmsense
