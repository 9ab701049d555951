#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "helpers.hpp"
#include "pmsense/classifier.hpp"
#include "pmsense/error.hpp"
#include "pmsense/io.hpp"
#include "pmsense/rng.hpp"

using namespace pmsense;

namespace {

SpecImage noise_image(int h, int w, Gesture label, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  SpecImage img;
  img.height = h;
  img.width = w;
  img.label = label;
  img.pixels.resize(static_cast<std::size_t>(h) * w);
  for (double& p : img.pixels) p = g(rng);
  return img;
}

// Class k lights up horizontal band k; solvable by a linear model on the band means.
std::vector<SpecImage> separable_set(int per_class, int size, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> g(0.0, 0.2);
  std::vector<SpecImage> out;
  for (int i = 0; i < per_class; ++i)
    for (int k = 0; k < 3; ++k) {
      SpecImage img;
      img.height = img.width = size;
      img.label = class_gesture(k);
      img.pixels.resize(static_cast<std::size_t>(size) * size);
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
          img.pixels[static_cast<std::size_t>(y) * size + x] = (y * 3 / size == k ? 2.0 : 0.0) + g(rng);
      out.push_back(img);
    }
  return out;
}

void randomize(ResidualNet& net, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  for (auto& p : net.parameters()) {
    const bool is_gamma = p.name.find("gamma") != std::string::npos;
    const bool is_beta = p.name.find("beta") != std::string::npos;
    for (double& v : p.value) {
      if (is_gamma) v = uniform(rng, 0.5, 1.5);
      else if (is_beta) v = 0.2 * g(rng);
      else v = 0.5 * g(rng);
    }
  }
}

Tensor as_batch(const std::vector<SpecImage>& set) {
  std::vector<const SpecImage*> ptrs;
  for (const auto& img : set) ptrs.push_back(&img);
  return stack_images(ptrs);
}

std::vector<int> labels_of(const std::vector<SpecImage>& set) {
  std::vector<int> y;
  for (const auto& img : set) y.push_back(class_index(img.label));
  return y;
}

}  // namespace

TEST_CASE("freshly built network scores every class equally") {
  ResidualNet net(ResidualNetConfig{});
  Rng rng(1);
  std::vector<SpecImage> set{noise_image(32, 32, Gesture::push, rng), noise_image(32, 32, Gesture::rub, rng)};
  const Tensor s = net.forward(as_batch(set), Mode::inference);
  for (int i = 0; i < s.n; ++i)
    for (int k = 1; k < 3; ++k) CHECK(s.data[i * 3 + k] == s.data[i * 3]);

  for (auto& p : net.parameters()) std::fill(p.value.begin(), p.value.end(), 0.0);
  const Tensor z = net.forward(as_batch(set), Mode::training);
  for (double v : z.data) CHECK(v == 0.0);
}

TEST_CASE("duplicated image gives identical score rows in inference mode") {
  ResidualNet net(ResidualNetConfig{});
  randomize(net, 3);
  Rng rng(2);
  const SpecImage a = noise_image(32, 32, Gesture::push, rng), b = noise_image(32, 32, Gesture::thumb, rng);
  const Tensor s = net.forward(as_batch({a, b, a}), Mode::inference);
  for (int k = 0; k < 3; ++k) CHECK(s.data[k] == s.data[6 + k]);
}

TEST_CASE("parameter gradients match central finite differences (1-block, 8x8, 20 draws)") {
  ResidualNetConfig cfg;
  cfg.block_channels = {4};
  cfg.input_height = cfg.input_width = 8;
  std::size_t checked = 0;
  double worst = 0.0;
  for (std::uint64_t draw = 0; draw < 20; ++draw) {
    cfg.seed = draw + 1;
    ResidualNet net(cfg);
    randomize(net, 100 + draw);
    Rng rng(200 + draw);
    std::vector<SpecImage> set;
    for (int i = 0; i < 4; ++i) set.push_back(noise_image(8, 8, class_gesture(i % 3), rng));
    const Tensor x = as_batch(set);
    const std::vector<int> y = labels_of(set);

    net.zero_grad();
    Tensor grad;
    softmax_cross_entropy(net.forward(x, Mode::training, false), y, &grad);
    net.backward(grad);
    const std::uint64_t base_sig = net.activation_signature();

    for (std::size_t pi = 0; pi < net.parameters().size(); ++pi) {
      for (std::size_t j = 0; j < net.parameters()[pi].value.size(); ++j) {
        double& v = net.parameters()[pi].value[j];
        const double analytic = net.parameters()[pi].grad[j];
        const double orig = v;
        double numeric = 0.0;
        bool smooth = false;
        // Retry with a smaller step when +-h straddles a ReLU kink.
        for (double h = 1e-5; h >= 1e-8 && !smooth; h /= 10.0) {
          v = orig + h;
          const double lp = softmax_cross_entropy(net.forward(x, Mode::training, false), y, nullptr);
          const std::uint64_t sp = net.activation_signature();
          v = orig - h;
          const double lm = softmax_cross_entropy(net.forward(x, Mode::training, false), y, nullptr);
          const std::uint64_t sm = net.activation_signature();
          v = orig;
          smooth = sp == base_sig && sm == base_sig;
          numeric = (lp - lm) / (2.0 * h);
        }
        CHECK_MESSAGE(smooth, net.parameters()[pi].name << "[" << j << "] sits on a ReLU kink");
        const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-7});
        worst = std::max(worst, rel);
        if (rel >= 1e-4)
          FAIL_CHECK(net.parameters()[pi].name << "[" << j << "] analytic " << analytic << " numeric " << numeric);
        ++checked;
      }
    }
  }
  MESSAGE(checked << " gradient entries checked, worst relative error " << worst);
  CHECK(worst < 1e-4);
}

TEST_CASE("input gradient matches finite differences") {
  ResidualNetConfig cfg;
  cfg.block_channels = {3, 6};
  cfg.input_height = cfg.input_width = 8;
  ResidualNet net(cfg);
  randomize(net, 5);
  Rng rng(6);
  std::vector<SpecImage> set;
  for (int i = 0; i < 3; ++i) set.push_back(noise_image(8, 8, class_gesture(i), rng));
  Tensor x = as_batch(set);
  const std::vector<int> y = labels_of(set);
  net.zero_grad();
  Tensor grad;
  softmax_cross_entropy(net.forward(x, Mode::training, false), y, &grad);
  const Tensor dx = net.backward(grad);
  for (std::size_t i = 0; i < x.data.size(); i += 7) {
    const double orig = x.data[i];
    const double h = 1e-6;
    x.data[i] = orig + h;
    const double lp = softmax_cross_entropy(net.forward(x, Mode::training, false), y, nullptr);
    x.data[i] = orig - h;
    const double lm = softmax_cross_entropy(net.forward(x, Mode::training, false), y, nullptr);
    x.data[i] = orig;
    const double numeric = (lp - lm) / (2 * h);
    CHECK(std::abs(dx.data[i] - numeric) <= 1e-4 * std::max({std::abs(numeric), std::abs(dx.data[i]), 1e-7}));
  }
}

TEST_CASE("lr = 0 leaves parameters untouched and the loss constant") {
  ResidualNetConfig cfg;
  cfg.input_height = cfg.input_width = 12;
  const auto set = separable_set(4, 12, 3);
  TrainOptions opt;
  opt.epochs = 5;
  opt.batch_size = 5;
  opt.learning_rate = 0.0;
  const TrainResult r = train(cfg, set, opt);
  const ResidualNet fresh(cfg);
  for (std::size_t i = 0; i < fresh.parameters().size(); ++i)
    CHECK(r.net.parameters()[i].value == fresh.parameters()[i].value);
  REQUIRE(r.report.epoch_loss.size() == 5);
  for (double l : r.report.epoch_loss) CHECK(l == r.report.epoch_loss.front());
}

TEST_CASE("separable 3-per-class set reaches 100% training accuracy within 50 epochs") {
  ResidualNetConfig cfg;
  cfg.input_height = cfg.input_width = 12;
  const auto set = separable_set(3, 12, 11);
  TrainOptions opt;
  opt.epochs = 50;
  opt.batch_size = 3;
  TrainResult r = train(cfg, set, opt);
  CHECK(r.report.accuracy == 1.0);
  CHECK(evaluate(r.net, set).accuracy == 1.0);
  CHECK(r.report.epoch_loss.back() < r.report.epoch_loss.front());
}

TEST_CASE("150 training images at batch 16 make 10 mini-batches, the last of 6") {
  CHECK(batches_per_epoch(150, 16) == 10);
  CHECK(150 - 9 * 16 == 6);
  CHECK(batches_per_epoch(16, 16) == 1);
  CHECK(batches_per_epoch(17, 16) == 2);
}

TEST_CASE("training is deterministic in its seed") {
  ResidualNetConfig cfg;
  cfg.input_height = cfg.input_width = 12;
  const auto set = separable_set(3, 12, 4);
  TrainOptions opt;
  opt.epochs = 4;
  opt.batch_size = 4;
  const TrainResult a = train(cfg, set, opt), b = train(cfg, set, opt);
  CHECK(a.report.epoch_loss == b.report.epoch_loss);
  opt.seed = 2;
  const TrainResult c = train(cfg, set, opt);
  CHECK(a.report.epoch_loss != c.report.epoch_loss);
}

TEST_CASE("evaluation is invariant to test-set order") {
  ResidualNetConfig cfg;
  cfg.input_height = cfg.input_width = 12;
  const auto set = separable_set(6, 12, 5);
  TrainOptions opt;
  opt.epochs = 3;
  opt.batch_size = 6;
  TrainResult r = train(cfg, set, opt);
  auto shuffled = set;
  std::reverse(shuffled.begin(), shuffled.end());
  std::rotate(shuffled.begin(), shuffled.begin() + 5, shuffled.end());
  const TrainReport a = evaluate(r.net, set), b = evaluate(r.net, shuffled);
  CHECK(a.confusion == b.confusion);
  int total = 0;
  for (int t = 0; t < 3; ++t) {
    int row = 0;
    for (int p = 0; p < 3; ++p) row += a.count(t, p);
    CHECK(row == 6);
    total += a.count(t, t);
  }
  CHECK(a.accuracy == doctest::Approx(total / 18.0));
}

TEST_CASE("permuting class labels permutes the confusion matrix") {
  ResidualNetConfig cfg;
  cfg.input_height = cfg.input_width = 12;
  auto set = separable_set(4, 12, 6);
  // Add ambiguous images so the matrix has off-diagonal structure.
  Rng rng(9);
  for (int i = 0; i < 6; ++i) set.push_back(noise_image(12, 12, class_gesture(i % 3), rng));
  const int perm[3] = {2, 0, 1};
  auto permuted = set;
  for (auto& img : permuted) img.label = class_gesture(perm[class_index(img.label)]);
  TrainOptions opt;
  opt.epochs = 8;
  opt.batch_size = 6;
  TrainResult a = train(cfg, set, opt);
  TrainResult b = train(cfg, permuted, opt);
  const TrainReport ra = evaluate(a.net, set), rb = evaluate(b.net, permuted);
  for (int t = 0; t < 3; ++t)
    for (int p = 0; p < 3; ++p) CHECK(rb.count(perm[t], perm[p]) == ra.count(t, p));
}

TEST_CASE("prediction is invariant to rescaling the raw spectrogram") {
  ResidualNetConfig cfg;
  cfg.input_height = cfg.input_width = 16;
  ResidualNet net(cfg);
  randomize(net, 8);
  std::vector<SpecImage> raw, scaled;
  Rng rng(3);
  for (int i = 0; i < 12; ++i) {
    Spectrogram s;
    s.n_windows = 20;
    s.n_freq = 25;
    s.cit = 0.1;
    s.hop = 0.05;
    for (int w = 0; w < 20; ++w) s.time_axis.push_back(0.05 * w);
    for (int j = 0; j < 25; ++j) s.freq_axis.push_back(10.0 * (j - 12));
    for (int k = 0; k < 500; ++k) s.values.push_back(uniform(rng, 0.0, 1.0) + (k % 25 == i ? 5.0 : 0.0));
    raw.push_back(make_image(s, 16, 16));
    for (double& v : s.values) v *= 3.7e-5;
    scaled.push_back(make_image(s, 16, 16));
  }
  CHECK(predict(net, raw) == predict(net, scaled));
}

TEST_CASE("diverging training names the epoch") {
  ResidualNetConfig cfg;
  cfg.input_height = cfg.input_width = 12;
  const auto set = separable_set(3, 12, 2);
  TrainOptions opt;
  opt.epochs = 5;
  opt.batch_size = 3;
  opt.learning_rate = 1e6;
  opt.epochs = 30;
  try {
    train(cfg, set, opt);
    FAIL("expected divergence");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("epoch") != std::string::npos);
  }
}

TEST_CASE("training argument and shape errors") {
  ResidualNetConfig cfg;
  const auto set = separable_set(2, 12, 1);
  TrainOptions opt;
  opt.batch_size = 7;
  CHECK_THROWS_AS(train(cfg, set, opt), ConfigError);
  CHECK_THROWS_AS(train(cfg, {}, opt), InputError);
  opt.batch_size = 2;
  CHECK_THROWS_AS(train(cfg, set, opt), InputError);  // 12x12 images, 32x32 network
  ResidualNetConfig bad;
  bad.block_channels.clear();
  CHECK_THROWS_AS(ResidualNet{bad}, ConfigError);
  bad = ResidualNetConfig{};
  bad.n_classes = 1;
  CHECK_THROWS_AS(ResidualNet{bad}, ConfigError);
}

TEST_CASE("saved model reloads with the same predictions") {
  const auto dir = test::scratch_dir("model");
  ResidualNetConfig cfg;
  cfg.block_channels = {4, 8, 8};
  cfg.input_height = cfg.input_width = 12;
  auto set = separable_set(4, 12, 3);
  TrainOptions opt;
  opt.epochs = 5;
  opt.batch_size = 4;
  TrainResult r = train(cfg, set, opt);
  save_model(dir / "m.bin", r.net);
  ResidualNet back = load_model(dir / "m.bin");
  CHECK(back.config().block_channels == cfg.block_channels);
  for (std::size_t i = 0; i < back.parameters().size(); ++i)
    for (std::size_t j = 0; j < back.parameters()[i].value.size(); ++j)
      CHECK(back.parameters()[i].value[j] == static_cast<float>(r.net.parameters()[i].value[j]));
  CHECK(predict(back, set) == predict(r.net, set));
  std::size_t floats = 0;
  for (const auto& p : r.net.parameters()) floats += p.value.size();
  for (const auto& p : r.net.buffers()) floats += p.value.size();
  CHECK(std::filesystem::file_size(dir / "m.bin") == 4 * floats);
  write_file_atomic(dir / "m.bin", "xx");
  CHECK_THROWS_AS(load_model(dir / "m.bin"), IoError);

  write_loss_csv(dir / "loss.csv", r.report);
  write_confusion_csv(dir / "conf.csv", r.report);
  CHECK(read_file(dir / "loss.csv").rfind("epoch,loss\n1,", 0) == 0);
  CHECK(read_file(dir / "conf.csv").find("push") != std::string::npos);
}
