#include "pmsense/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "pmsense/error.hpp"
#include "pmsense/parallel.hpp"
#include "pmsense/rng.hpp"

namespace pmsense {

namespace {

// Relative compression floor: magnitudes are expressed in units of 1e-3 x peak.
constexpr double kLogReference = 1e-3;

void check_shape(int height, int width) {
  if (height < 1 || width < 1) throw InputError("image shape must be at least 1 x 1");
}

double sample_bilinear(const std::vector<double>& src, std::size_t rows, std::size_t cols, double y, double x) {
  const auto y0 = static_cast<std::size_t>(std::floor(y));
  const auto x0 = static_cast<std::size_t>(std::floor(x));
  const std::size_t y1 = std::min(y0 + 1, rows - 1);
  const std::size_t x1 = std::min(x0 + 1, cols - 1);
  const double fy = y - static_cast<double>(y0);
  const double fx = x - static_cast<double>(x0);
  const double top = (1.0 - fx) * src[y0 * cols + x0] + fx * src[y0 * cols + x1];
  const double bottom = (1.0 - fx) * src[y1 * cols + x0] + fx * src[y1 * cols + x1];
  return (1.0 - fy) * top + fy * bottom;
}

double source_coord(int i, int target, std::size_t source) {
  if (target == 1 || source == 1) return 0.0;
  return static_cast<double>(i) * static_cast<double>(source - 1) / static_cast<double>(target - 1);
}

}  // namespace

Spectrogram truncate_spectrogram(const Spectrogram& s, double duration) {
  if (!(duration >= s.cit))
    throw InputError("duration " + std::to_string(duration) + " s is shorter than one window (" +
                     std::to_string(s.cit) + " s)");
  const auto rows = static_cast<std::size_t>(std::floor((duration - s.cit) / s.hop + 1e-9)) + 1;
  if (rows > s.n_windows)
    throw InputError("duration " + std::to_string(duration) + " s exceeds the trace (" +
                     std::to_string(s.n_windows) + " windows available)");
  Spectrogram out = s;
  out.n_windows = rows;
  out.values.resize(rows * s.n_freq);
  out.time_axis.resize(rows);
  return out;
}

SpecImage make_image(const Spectrogram& s, int height, int width) {
  check_shape(height, width);
  s.validate();
  const double peak = s.max_value();
  if (!(peak > 0.0)) throw NumericalError("make_image: spectrogram is all zero (zero variance), image rejected");

  // Transpose to frequency x time while compressing.
  const std::size_t rows = s.n_freq, cols = s.n_windows;
  std::vector<double> compressed(rows * cols);
  for (std::size_t f = 0; f < rows; ++f)
    for (std::size_t w = 0; w < cols; ++w)
      compressed[f * cols + w] = std::log1p(s.at(w, f) / peak / kLogReference);

  SpecImage img;
  img.height = height;
  img.width = width;
  img.pixels.resize(static_cast<std::size_t>(height) * width);
  for (int i = 0; i < height; ++i)
    for (int j = 0; j < width; ++j)
      img.pixels[static_cast<std::size_t>(i) * width + j] =
          sample_bilinear(compressed, rows, cols, source_coord(i, height, rows), source_coord(j, width, cols));

  double mean = 0.0;
  for (double v : img.pixels) mean += v;
  mean /= static_cast<double>(img.pixels.size());
  double var = 0.0;
  for (double v : img.pixels) var += (v - mean) * (v - mean);
  var /= static_cast<double>(img.pixels.size());
  if (!(var > 1e-24)) throw NumericalError("make_image: zero variance after resampling, image rejected");
  const double inv_std = 1.0 / std::sqrt(var);
  for (double& v : img.pixels) v = (v - mean) * inv_std;
  return img;
}

std::vector<SpecImage> build_dataset(const std::vector<GestureSample>& samples, const CafGrid& grid,
                                     double duration, int height, int width, std::size_t batch_samples) {
  check_shape(height, width);
  if (!(duration >= grid.cit))
    throw InputError("build_dataset: duration " + std::to_string(duration) + " s is shorter than cit");
  std::vector<SpecImage> images(samples.size());
  parallel_for(samples.size(), [&](std::size_t i) {
    const GestureSample& s = samples[i];
    const auto count = static_cast<std::size_t>(std::llround(duration * s.surveillance.sample_rate()));
    if (count > s.surveillance.size() || count > s.reference.size())
      throw InputError("build_dataset: duration " + std::to_string(duration) + " s exceeds sample " +
                       std::to_string(i) + " (" + std::to_string(s.surveillance.duration()) + " s)");
    const Spectrogram spec =
        spectrogram_fast(s.surveillance.prefix(count), s.reference.prefix(count), grid, batch_samples);
    images[i] = make_image(spec, height, width);
    images[i].label = s.label;
    images[i].scenario = s.scenario;
    images[i].sensing_duration = duration;
  });
  return images;
}

std::vector<SpecImage> images_from_spectrograms(const std::vector<LabeledSpectrogram>& items, double duration,
                                                int height, int width) {
  std::vector<SpecImage> images(items.size());
  parallel_for(items.size(), [&](std::size_t i) {
    images[i] = make_image(truncate_spectrogram(items[i].spectrogram, duration), height, width);
    images[i].label = items[i].label;
    images[i].scenario = items[i].scenario;
    images[i].sensing_duration = duration;
  });
  return images;
}

Split stratified_split(const std::vector<SpecImage>& images, int train_per_class, std::uint64_t seed) {
  if (train_per_class < 1) throw ConfigError("stratified_split: train_per_class must be >= 1");
  std::map<Gesture, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < images.size(); ++i) by_class[images[i].label].push_back(i);
  Split split;
  Rng rng(seed);
  for (auto& [label, idx] : by_class) {
    if (idx.size() < static_cast<std::size_t>(train_per_class))
      throw ConfigError("stratified_split: class " + to_string(label) + " has " + std::to_string(idx.size()) +
                        " images, fewer than " + std::to_string(train_per_class));
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng() % i]);
    for (std::size_t k = 0; k < idx.size(); ++k)
      (k < static_cast<std::size_t>(train_per_class) ? split.train : split.test).push_back(images[idx[k]]);
  }
  return split;
}

}  // namespace pmsense
