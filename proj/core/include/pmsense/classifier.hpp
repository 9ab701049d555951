#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "pmsense/dataset.hpp"

namespace pmsense {

// Dense NCHW tensor of doubles.
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_) : n(n_), c(c_), h(h_), w(w_), data(static_cast<std::size_t>(n_) * c_ * h_ * w_) {}

  std::size_t size() const { return data.size(); }
  double& at(int in, int ic, int y, int x) { return data[((static_cast<std::size_t>(in) * c + ic) * h + y) * w + x]; }
  double at(int in, int ic, int y, int x) const { return data[((static_cast<std::size_t>(in) * c + ic) * h + y) * w + x]; }
};

// Stack single-channel images into an N x 1 x H x W batch.
Tensor stack_images(const std::vector<const SpecImage*>& images);

struct ResidualNetConfig {
  // One entry per residual block; the stem outputs block_channels[0] channels and a
  // block whose width differs from its input downsamples by 2 with a 1x1 projection
  // shortcut. {8, 16} is the desk-scale default; {64, 64, 128, 128, 256, 256, 512,
  // 512} gives the ResNet-18 layout.
  std::vector<int> block_channels{8, 16};
  int input_height = 32;
  int input_width = 32;
  int n_classes = 3;
  std::uint64_t seed = 1;

  int n_blocks() const { return static_cast<int>(block_channels.size()); }
  void validate() const;
};

struct Parameter {
  std::string name;
  std::vector<int> shape;
  std::vector<double> value;
  std::vector<double> grad;
};

enum class Mode { training, inference };

// conv-bn-relu stem, residual blocks (conv-bn-relu-conv-bn + shortcut, relu), global
// average pooling and one fully connected layer. Convolutions carry no bias; the FC
// layer starts at zero so the initial network is symmetric in the class labels.
class ResidualNet {
 public:
  explicit ResidualNet(ResidualNetConfig cfg);
  ~ResidualNet();
  ResidualNet(const ResidualNet& other);
  ResidualNet& operator=(const ResidualNet& other);
  ResidualNet(ResidualNet&&) noexcept;
  ResidualNet& operator=(ResidualNet&&) noexcept;

  const ResidualNetConfig& config() const;

  // Class scores (N x n_classes x 1 x 1). Training mode normalizes with batch
  // statistics and, when update_running_stats is set, folds them into the running
  // averages (momentum 0.1); inference mode uses the running averages.
  Tensor forward(const Tensor& batch, Mode mode, bool update_running_stats = true);
  // Accumulates parameter gradients for the last forward() and returns d(loss)/d(input).
  Tensor backward(const Tensor& grad_scores);
  void zero_grad();

  std::vector<Parameter>& parameters();
  const std::vector<Parameter>& parameters() const;
  // Batch-norm running means and variances (gradients unused).
  std::vector<Parameter>& buffers();
  const std::vector<Parameter>& buffers() const;

  // Hash of every ReLU on/off state in the last forward pass.
  std::uint64_t activation_signature() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Mean softmax cross-entropy over the batch; fills grad_scores (same shape as scores).
double softmax_cross_entropy(const Tensor& scores, const std::vector<int>& labels, Tensor* grad_scores);

struct TrainOptions {
  int epochs = 100;
  int batch_size = 16;
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::uint64_t seed = 1;
};

struct TrainReport {
  std::vector<double> epoch_loss;
  double accuracy = 0.0;
  int n_classes = 3;
  std::vector<int> confusion;  // row = true class, column = predicted class

  int count(int truth, int predicted) const { return confusion[truth * n_classes + predicted]; }
};

int class_index(Gesture g);
Gesture class_gesture(int index);

// Number of mini-batches per epoch (the last one may be short).
int batches_per_epoch(std::size_t n_train, int batch_size);

// Mini-batch SGD with momentum on softmax cross-entropy, seeded reshuffling each
// epoch. epoch_loss[e] is the training-set loss after epoch e, measured with batch
// statistics over a fixed (unshuffled) partition so it depends on the parameters
// only. The report's accuracy and confusion matrix are on the training set in
// inference mode. Throws NumericalError naming the epoch if the loss diverges
// (non-finite or above 1e4).
struct TrainResult {
  ResidualNet net;
  TrainReport report;
};
TrainResult train(const ResidualNetConfig& cfg, const std::vector<SpecImage>& train_set, const TrainOptions& opt);

// Inference-mode confusion matrix and accuracy.
TrainReport evaluate(ResidualNet& net, const std::vector<SpecImage>& test_set);
std::vector<int> predict(ResidualNet& net, const std::vector<SpecImage>& images);

// `<path>` holds every parameter and buffer as little-endian float32, concatenated;
// `<path>.manifest` lists name, shape and byte offset per tensor plus the config.
void save_model(const std::filesystem::path& path, const ResidualNet& net);
ResidualNet load_model(const std::filesystem::path& path);

void write_loss_csv(const std::filesystem::path& path, const TrainReport& report);
void write_confusion_csv(const std::filesystem::path& path, const TrainReport& report);

}  // namespace pmsense
