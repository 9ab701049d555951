#pragma once

#include <cstdint>
#include <vector>

#include "pmsense/caf.hpp"
#include "pmsense/channel.hpp"
#include "pmsense/spectrogram.hpp"

namespace pmsense {

// Classifier input: log-compressed, resampled and standardized spectrogram with the
// Doppler axis vertical (row 0 = most negative bin) and time horizontal.
struct SpecImage {
  int height = 0;
  int width = 0;
  std::vector<double> pixels;  // row-major
  Gesture label = Gesture::push;
  Scenario scenario = Scenario::los;
  double sensing_duration = 0.0;
};

// Rows whose windows lie inside the first `duration` seconds.
Spectrogram truncate_spectrogram(const Spectrogram& s, double duration);

// Magnitudes m -> log(1 + m / m_ref) with m_ref = 1e-3 x peak (60 dB of compression
// range, invariant to rescaling the input), bilinear resampling to height x width,
// then per-image standardization. Throws NumericalError when the image has zero
// variance (e.g. an all-zero spectrogram).
SpecImage make_image(const Spectrogram& s, int height, int width);

// Spectrogram of the first `duration` seconds of each sample (batched CAF with
// `batch_samples`), turned into images. Samples are processed in parallel.
std::vector<SpecImage> build_dataset(const std::vector<GestureSample>& samples, const CafGrid& grid,
                                     double duration, int height, int width, std::size_t batch_samples);

// Images from precomputed full-length spectrograms, truncated to `duration`.
struct LabeledSpectrogram {
  Spectrogram spectrogram;
  Gesture label;
  Scenario scenario;
};
std::vector<SpecImage> images_from_spectrograms(const std::vector<LabeledSpectrogram>& items, double duration,
                                                int height, int width);

// Seeded stratified split: per class, `train_per_class` images go to the training set
// and the rest to the test set.
struct Split {
  std::vector<SpecImage> train;
  std::vector<SpecImage> test;
};
Split stratified_split(const std::vector<SpecImage>& images, int train_per_class, std::uint64_t seed);

}  // namespace pmsense
