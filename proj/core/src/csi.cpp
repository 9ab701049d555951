#include "pmsense/csi.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <cmath>
#include <limits>
#include <string>

#include "fft.hpp"
#include "pmsense/error.hpp"

namespace pmsense {

namespace {
constexpr double kMaxCondition = 1e8;
}

std::size_t CsiSeries::dominant_tap() const {
  std::size_t best = 0;
  double best_power = -1.0;
  for (std::size_t k = 0; k < n_taps; ++k) {
    double power = 0.0;
    for (std::size_t m = 0; m < n_frames(); ++m) power += std::norm(tap(m, k));
    if (power > best_power) {
      best_power = power;
      best = k;
    }
  }
  return best;
}

CsiSeries estimate_csi(const IqTrace& y_s, const FrameSpec& spec, std::size_t n_taps) {
  const std::size_t frame_len = spec.samples_per_frame();
  const std::vector<cdouble> training = training_sequence(spec);
  const std::size_t train_len = training.size();
  if (std::abs(y_s.sample_rate() - spec.sample_rate) > 1e-12 * spec.sample_rate)
    throw InputError("estimate_csi: trace sample rate does not match the frame spec");
  if (n_taps == 0 || n_taps > train_len)
    throw InputError("estimate_csi: n_taps must be in [1, " + std::to_string(train_len) + "]");
  const std::size_t n_frames = y_s.size() / frame_len;
  if (n_frames == 0) throw InputError("estimate_csi: trace shorter than one frame");

  const std::size_t rows = train_len - n_taps + 1;
  if (rows < n_taps)
    throw NumericalError("estimate_csi: " + std::to_string(n_taps) + " taps from a " +
                         std::to_string(train_len) + "-chip training sequence leaves " + std::to_string(rows) +
                         " equations (underdetermined, condition number inf)");

  Eigen::MatrixXcd A(rows, n_taps);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t l = 0; l < n_taps; ++l) A(r, l) = training[r + n_taps - 1 - l];

  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const double cond = sv(sv.size() - 1) > 0.0 ? sv(0) / sv(sv.size() - 1) : std::numeric_limits<double>::infinity();
  if (!(cond <= kMaxCondition))
    throw NumericalError("estimate_csi: training matrix ill-conditioned (condition number " +
                         std::to_string(cond) + ")");
  const Eigen::MatrixXcd pinv =
      svd.matrixV() * sv.cwiseInverse().asDiagonal() * svd.matrixU().adjoint();

  CsiSeries out;
  out.n_taps = n_taps;
  out.frame_rate = spec.frame_rate();
  out.values.resize(n_frames * n_taps);
  out.frame_times.resize(n_frames);
  Eigen::VectorXcd y(rows);
  for (std::size_t m = 0; m < n_frames; ++m) {
    const std::size_t base = m * frame_len + n_taps - 1;
    for (std::size_t r = 0; r < rows; ++r) y(r) = y_s[base + r];
    const Eigen::VectorXcd h = pinv * y;
    for (std::size_t l = 0; l < n_taps; ++l) out.values[m * n_taps + l] = h(l);
    out.frame_times[m] = y_s.time_at(m * frame_len);
  }
  return out;
}

Spectrogram csi_spectrogram(const CsiSeries& csi, double cit, double hop, bool remove_mean) {
  if (!(cit > 0.0) || !(hop > 0.0)) throw InputError("csi_spectrogram: cit and hop must be > 0");
  if (csi.n_frames() == 0 || csi.n_taps == 0) throw InputError("csi_spectrogram: empty CSI series");
  const auto window = static_cast<std::size_t>(std::llround(cit * csi.frame_rate));
  const auto step = static_cast<std::size_t>(std::llround(hop * csi.frame_rate));
  if (window < 2) throw InputError("csi_spectrogram: window spans fewer than two frames");
  if (step < 1) throw InputError("csi_spectrogram: hop spans no frames");
  if (window > csi.n_frames())
    throw InputError("csi_spectrogram: window (" + std::to_string(window) + " frames) longer than the series (" +
                     std::to_string(csi.n_frames()) + " frames)");

  const std::size_t tap = csi.dominant_tap();
  std::vector<double> magnitude(csi.n_frames());
  for (std::size_t m = 0; m < csi.n_frames(); ++m) magnitude[m] = std::abs(csi.tap(m, tap));

  Spectrogram out;
  out.one_sided = true;
  out.n_windows = (csi.n_frames() - window) / step + 1;
  out.n_freq = window / 2 + 1;
  out.cit = static_cast<double>(window) / csi.frame_rate;
  out.hop = static_cast<double>(step) / csi.frame_rate;
  out.values.resize(out.n_windows * out.n_freq);
  out.freq_axis.resize(out.n_freq);
  for (std::size_t d = 0; d < out.n_freq; ++d)
    out.freq_axis[d] = static_cast<double>(d) * csi.frame_rate / static_cast<double>(window);
  out.time_axis.resize(out.n_windows);

  const detail::Dft dft(window, detail::Dft::Direction::forward);
  std::vector<cdouble> in(window), spectrum(window);
  const double dt = 1.0 / csi.frame_rate;
  for (std::size_t w = 0; w < out.n_windows; ++w) {
    const std::size_t start = w * step;
    out.time_axis[w] = csi.frame_times[start];
    double mean = 0.0;
    if (remove_mean) {
      for (std::size_t m = 0; m < window; ++m) mean += magnitude[start + m];
      mean /= static_cast<double>(window);
    }
    for (std::size_t m = 0; m < window; ++m) in[m] = magnitude[start + m] - mean;
    dft.execute(in, spectrum);
    for (std::size_t d = 0; d < out.n_freq; ++d) out.at(w, d) = std::abs(spectrum[d]) * dt;
  }
  return out;
}

}  // namespace pmsense
