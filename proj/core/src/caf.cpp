#include "pmsense/caf.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "fft.hpp"
#include "pmsense/error.hpp"

namespace pmsense {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::size_t whole_samples(double seconds, double rate, const char* what) {
  const double exact = seconds * rate;
  const double rounded = std::round(exact);
  if (rounded < 0.0 || std::abs(exact - rounded) > 1e-6 * std::max(1.0, std::abs(exact)))
    throw InputError(std::string(what) + " (" + std::to_string(seconds) +
                     " s) is not a whole number of samples");
  return static_cast<std::size_t>(rounded);
}

struct SplitDelay {
  std::size_t whole;
  double frac;
};

SplitDelay split_delay(double delay, double rate) {
  const double d = delay * rate;
  double whole = std::floor(d);
  double frac = d - whole;
  if (frac < 1e-9) frac = 0.0;
  if (frac > 1.0 - 1e-9) {
    whole += 1.0;
    frac = 0.0;
  }
  return {static_cast<std::size_t>(whole), frac};
}

void check_pair(const IqTrace& y_s, const IqTrace& y_r) {
  if (std::abs(y_s.sample_rate() - y_r.sample_rate()) > 1e-12 * y_s.sample_rate())
    throw InputError("caf: surveillance and reference sample rates differ");
  if (std::abs(y_s.t0() - y_r.t0()) > 0.5 / y_s.sample_rate())
    throw InputError("caf: surveillance and reference traces start at different times");
}

// y_s[k] * conj(y_r(t_k - tau)) for k in [start, start + len).
std::vector<cdouble> lag_product(const IqTrace& y_s, const IqTrace& y_r, std::size_t start,
                                 std::size_t len, double delay) {
  const SplitDelay d = split_delay(delay, y_s.sample_rate());
  std::vector<cdouble> z(len);
  const auto s = y_s.samples();
  const auto r = y_r.samples();
  for (std::size_t i = 0; i < len; ++i) {
    const std::size_t k = start + i;
    if (k < d.whole) continue;
    cdouble ref = r[k - d.whole];
    if (d.frac != 0.0) ref = (1.0 - d.frac) * ref + d.frac * (k > d.whole ? r[k - d.whole - 1] : cdouble{});
    z[i] = s[k] * std::conj(ref);
  }
  return z;
}

// Direct surface for the window starting at sample `start`; row-major delay x doppler.
std::vector<cdouble> direct_surface(const IqTrace& y_s, const IqTrace& y_r, const CafGrid& grid,
                                    std::size_t start, std::size_t len) {
  const std::size_t n_tau = grid.delay_bins.size();
  const std::size_t n_f = grid.doppler_bins.size();
  std::vector<std::vector<cdouble>> products;
  products.reserve(n_tau);
  for (double tau : grid.delay_bins) products.push_back(lag_product(y_s, y_r, start, len, tau));

  std::vector<cdouble> surface(n_tau * n_f);
  std::vector<cdouble> phasor(len);
  const double dt = y_s.dt();
  for (std::size_t j = 0; j < n_f; ++j) {
    const double f = grid.doppler_bins[j];
    for (std::size_t i = 0; i < len; ++i) phasor[i] = std::polar(1.0, kTwoPi * f * y_s.time_at(start + i));
    for (std::size_t t = 0; t < n_tau; ++t) {
      cdouble acc{};
      const auto& z = products[t];
      for (std::size_t i = 0; i < len; ++i) acc += z[i] * phasor[i];
      surface[t * n_f + j] = acc * dt;
    }
  }
  return surface;
}

struct WindowLayout {
  std::size_t window, hop, count;
};

WindowLayout layout_for(const IqTrace& y_s, const IqTrace& y_r, const CafGrid& grid) {
  grid.validate();
  check_pair(y_s, y_r);
  const double fs = y_s.sample_rate();
  const std::size_t window = whole_samples(grid.cit, fs, "cit");
  const std::size_t hop = whole_samples(grid.hop, fs, "hop");
  if (window == 0 || hop == 0) throw InputError("spectrogram: cit and hop must span at least one sample");
  const std::size_t usable = std::min(y_s.size(), y_r.size());
  if (usable < window)
    throw InputError("spectrogram: traces (" + std::to_string(usable) + " samples) shorter than one window (" +
                     std::to_string(window) + " samples)");
  return {window, hop, window_count(usable, window, hop)};
}

Spectrogram empty_spectrogram(const IqTrace& y_s, const CafGrid& grid, const WindowLayout& w) {
  Spectrogram out;
  out.n_windows = w.count;
  out.n_freq = grid.doppler_bins.size();
  out.values.assign(out.n_windows * out.n_freq, 0.0);
  out.freq_axis = grid.doppler_bins;
  out.cit = grid.cit;
  out.hop = grid.hop;
  out.time_axis.resize(w.count);
  for (std::size_t i = 0; i < w.count; ++i) out.time_axis[i] = y_s.time_at(i * w.hop);
  return out;
}

}  // namespace

void CafGrid::validate() const {
  if (!(cit > 0.0) || !std::isfinite(cit)) throw InputError("CafGrid: cit must be > 0");
  if (!(hop > 0.0) || !std::isfinite(hop)) throw InputError("CafGrid: hop must be > 0");
  if (delay_bins.empty()) throw InputError("CafGrid: delay_bins is empty");
  for (double d : delay_bins)
    if (!(d >= 0.0) || !std::isfinite(d)) throw InputError("CafGrid: delay bins must be finite and >= 0");
  if (doppler_bins.empty()) throw InputError("CafGrid: doppler_bins is empty");
  for (std::size_t i = 0; i < doppler_bins.size(); ++i) {
    if (!std::isfinite(doppler_bins[i])) throw InputError("CafGrid: doppler bins must be finite");
    if (i > 0 && !(doppler_bins[i] > doppler_bins[i - 1]))
      throw InputError("CafGrid: doppler bins must be strictly increasing");
    const double mirror = doppler_bins[doppler_bins.size() - 1 - i];
    if (std::abs(doppler_bins[i] + mirror) > 1e-9 * std::max(1.0, std::abs(mirror)))
      throw InputError("CafGrid: doppler bins must be symmetric about 0");
  }
}

void CafGrid::validate_doppler_limit(double frame_rate) const {
  const double limit = frame_rate / 2.0;
  for (double f : doppler_bins)
    if (std::abs(f) > limit * (1.0 + 1e-12))
      throw InputError("CafGrid: doppler bin " + std::to_string(f) + " Hz beyond +-" +
                       std::to_string(limit) + " Hz (half the frame rate)");
}

CafGrid CafGrid::make(double sample_rate, double cit, double hop, int max_delay_samples,
                      double doppler_max, double doppler_step) {
  if (!(sample_rate > 0.0)) throw InputError("CafGrid::make: sample_rate must be > 0");
  if (max_delay_samples < 0) throw InputError("CafGrid::make: max_delay_samples must be >= 0");
  if (!(cit > 0.0)) throw InputError("CafGrid::make: cit must be > 0");
  const double step = doppler_step > 0.0 ? doppler_step : 1.0 / cit;
  if (!(doppler_max >= 0.0)) throw InputError("CafGrid::make: doppler_max must be >= 0");
  CafGrid g;
  g.cit = cit;
  g.hop = hop;
  for (int d = 0; d <= max_delay_samples; ++d) g.delay_bins.push_back(d / sample_rate);
  const auto half = static_cast<long>(std::floor(doppler_max / step + 1e-9));
  for (long k = -half; k <= half; ++k) g.doppler_bins.push_back(static_cast<double>(k) * step);
  g.validate();
  return g;
}

AmbiguitySurface caf(const IqTrace& y_s, const IqTrace& y_r, const CafGrid& grid, double t_start) {
  grid.validate();
  check_pair(y_s, y_r);
  const double fs = y_s.sample_rate();
  const double offset = t_start - y_s.t0();
  if (offset < -0.5 / fs) throw InputError("caf: window starts before the surveillance trace");
  const std::size_t start = whole_samples(offset, fs, "caf window start");
  const std::size_t len = whole_samples(grid.cit, fs, "cit");
  if (len == 0) throw InputError("caf: cit spans no samples");
  if (start + len > y_s.size() || start + len > y_r.size())
    throw InputError("caf: traces do not cover [t_start, t_start + cit]");
  return {direct_surface(y_s, y_r, grid, start, len), grid, t_start};
}

std::size_t window_count(std::size_t count, std::size_t window, std::size_t hop) {
  if (window == 0 || hop == 0 || count < window) return 0;
  return (count - window) / hop + 1;
}

Spectrogram spectrogram(const IqTrace& y_s, const IqTrace& y_r, const CafGrid& grid) {
  const WindowLayout w = layout_for(y_s, y_r, grid);
  Spectrogram out = empty_spectrogram(y_s, grid, w);
  const std::size_t n_f = out.n_freq;
  for (std::size_t win = 0; win < w.count; ++win) {
    const auto surface = direct_surface(y_s, y_r, grid, win * w.hop, w.window);
    for (std::size_t t = 0; t < grid.delay_bins.size(); ++t)
      for (std::size_t j = 0; j < n_f; ++j)
        out.at(win, j) = std::max(out.at(win, j), std::abs(surface[t * n_f + j]));
  }
  return out;
}

std::size_t batch_length_for(const CafGrid& grid, double sample_rate, std::size_t max_batch) {
  const std::size_t window = whole_samples(grid.cit, sample_rate, "cit");
  const std::size_t hop = whole_samples(grid.hop, sample_rate, "hop");
  for (std::size_t b = std::min({max_batch, window, hop}); b >= 1; --b)
    if (window % b == 0 && hop % b == 0) return b;
  return 1;
}

Spectrogram spectrogram_fast(const IqTrace& y_s, const IqTrace& y_r, const CafGrid& grid,
                             std::size_t batch_samples) {
  const WindowLayout w = layout_for(y_s, y_r, grid);
  const std::size_t B = batch_samples;
  if (B == 0) throw InputError("spectrogram_fast: batch length must be >= 1");
  if (w.window % B != 0 || w.hop % B != 0)
    throw InputError("spectrogram_fast: cit and hop must be whole multiples of the " + std::to_string(B) +
                     "-sample batch (trace is not batch-aligned)");
  const double fs = y_s.sample_rate();
  grid.validate_doppler_limit(fs / static_cast<double>(B));

  const std::size_t M = w.window / B;  // batches per window
  const std::size_t hop_batches = w.hop / B;
  std::vector<std::size_t> fft_bin(grid.doppler_bins.size());
  double f_max = 0.0;
  for (std::size_t j = 0; j < grid.doppler_bins.size(); ++j) {
    const double f = grid.doppler_bins[j];
    const double idx = f * grid.cit;
    const double rounded = std::round(idx);
    if (std::abs(idx - rounded) > 1e-6)
      throw InputError("spectrogram_fast: doppler bin " + std::to_string(f) + " Hz is not a multiple of 1/cit");
    const auto d = static_cast<long>(rounded);
    fft_bin[j] = static_cast<std::size_t>(((d % static_cast<long>(M)) + static_cast<long>(M)) % static_cast<long>(M));
    f_max = std::max(f_max, std::abs(f));
  }
  for (double tau : grid.delay_bins)
    if (split_delay(tau, fs).frac != 0.0)
      throw InputError("spectrogram_fast: delay bins must be whole samples");

  // Taylor order: intra-batch phase |2 pi f (t_k - t_center)| <= x_max.
  const double x_max = std::numbers::pi * f_max * static_cast<double>(B - 1) / fs;
  std::size_t order = 1;
  for (double term = 1.0; order < 40; ++order) {
    term *= x_max / static_cast<double>(order);
    if (term < 1e-17) break;
  }

  // Centered, batch-normalized offsets raised to powers 0..order-1.
  std::vector<double> wpow(B * order);
  for (std::size_t p = 0; p < B; ++p) {
    const double u = (static_cast<double>(p) - 0.5 * static_cast<double>(B - 1)) / static_cast<double>(B);
    double v = 1.0;
    for (std::size_t n = 0; n < order; ++n, v *= u) wpow[p * order + n] = v;
  }

  // Series coefficients (j theta)^n / n! per Doppler bin, theta = 2 pi f B / fs.
  const std::size_t n_f = grid.doppler_bins.size();
  std::vector<cdouble> series(n_f * order);
  for (std::size_t j = 0; j < n_f; ++j) {
    const cdouble jtheta(0.0, kTwoPi * grid.doppler_bins[j] * static_cast<double>(B) / fs);
    cdouble c = 1.0;
    for (std::size_t n = 0; n < order; ++n) {
      series[j * order + n] = c;
      c *= jtheta / static_cast<double>(n + 1);
    }
  }

  Spectrogram out = empty_spectrogram(y_s, grid, w);
  const std::size_t n_batches = (w.count - 1) * hop_batches + M;
  const detail::Dft dft(M, detail::Dft::Direction::backward);
  std::vector<cdouble> moments(order * n_batches);  // [n][batch]
  std::vector<cdouble> spectra(order * M);          // [n][bin]
  std::vector<cdouble> acc(order);
  const double dt = 1.0 / fs;

  for (double tau : grid.delay_bins) {
    const std::vector<cdouble> z = lag_product(y_s, y_r, 0, n_batches * B, tau);
    for (std::size_t b = 0; b < n_batches; ++b) {
      std::fill(acc.begin(), acc.end(), cdouble{});
      const cdouble* zb = z.data() + b * B;
      for (std::size_t p = 0; p < B; ++p) {
        const double* wp = wpow.data() + p * order;
        const cdouble zp = zb[p];
        for (std::size_t n = 0; n < order; ++n) acc[n] += wp[n] * zp;
      }
      for (std::size_t n = 0; n < order; ++n) moments[n * n_batches + b] = acc[n];
    }

    for (std::size_t win = 0; win < w.count; ++win) {
      const std::size_t b0 = win * hop_batches;
      for (std::size_t n = 0; n < order; ++n)
        dft.execute(std::span<const cdouble>(moments.data() + n * n_batches + b0, M),
                    std::span<cdouble>(spectra.data() + n * M, M));
      const double t_center = y_s.t0() + (static_cast<double>(b0 * B) + 0.5 * static_cast<double>(B - 1)) / fs;
      for (std::size_t j = 0; j < n_f; ++j) {
        cdouble sum{};
        for (std::size_t n = 0; n < order; ++n) sum += series[j * order + n] * spectra[n * M + fft_bin[j]];
        const cdouble r = sum * std::polar(dt, kTwoPi * grid.doppler_bins[j] * t_center);
        out.at(win, j) = std::max(out.at(win, j), std::abs(r));
      }
    }
  }
  return out;
}

}  // namespace pmsense
