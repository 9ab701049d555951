#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

namespace pmsense {

// Time x frequency magnitude matrix, row-major with one row per window.
struct Spectrogram {
  std::size_t n_windows = 0;
  std::size_t n_freq = 0;
  std::vector<double> values;
  std::vector<double> time_axis;  // window start times, s
  std::vector<double> freq_axis;  // Hz
  double cit = 0.0;
  double hop = 0.0;
  bool one_sided = false;  // true for CSI-magnitude spectrograms (f >= 0 only)

  double at(std::size_t window, std::size_t freq) const { return values[window * n_freq + freq]; }
  double& at(std::size_t window, std::size_t freq) { return values[window * n_freq + freq]; }

  // Index of the largest value in a row, optionally ignoring bins with |f| <= exclude_hz.
  std::size_t row_argmax(std::size_t window, double exclude_hz = -1.0) const;
  double max_value() const;

  // Throws InputError on non-finite or negative values, non-increasing axes or
  // inconsistent dimensions.
  void validate() const;
};

// Binary layout (little-endian): 32-byte header
//   char magic[4] = "PMSG"; u32 n_windows; u32 n_freq; u32 flags (bit 0: one-sided);
//   f32 cit; f32 hop; f32 f_min; f32 f_max
// followed by n_windows * n_freq float32 magnitudes, time-major. On read the time
// axis is reconstructed as w * hop and the frequency axis as a uniform grid.
inline constexpr std::size_t kSpectrogramHeaderBytes = 32;

void write_spectrogram(const std::filesystem::path& path, const Spectrogram& s);
Spectrogram read_spectrogram(const std::filesystem::path& path);

// `time_s,freq_hz,magnitude` rows.
void write_spectrogram_csv(const std::filesystem::path& path, const Spectrogram& s);

// 8-bit binary PGM; frequency on the vertical axis (highest at the top), time on the
// horizontal axis, log-compressed over `dynamic_range_db` below the peak.
void write_spectrogram_pgm(const std::filesystem::path& path, const Spectrogram& s,
                           double dynamic_range_db = 60.0);

}  // namespace pmsense
