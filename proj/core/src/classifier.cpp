#include "pmsense/classifier.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "pmsense/error.hpp"
#include "pmsense/io.hpp"
#include "pmsense/rng.hpp"

namespace pmsense {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

constexpr double kBnEpsilon = 1e-5;
constexpr double kBnMomentum = 0.1;
// Batch norm keeps the conv layers scale-free, so a runaway step size shows up as an
// exploding but still finite loss through the FC layer.
constexpr double kDivergedLoss = 1e4;

bool diverged(double loss) { return !std::isfinite(loss) || loss > kDivergedLoss; }

struct ConvLayer {
  int in_c = 0, out_c = 0, k = 3, stride = 1, pad = 1;
  std::size_t weight = 0;
  // Cached by forward().
  int n = 0, ih = 0, iw = 0, oh = 0, ow = 0;
  std::vector<RowMat> cols;
};

struct BnLayer {
  int c = 0;
  std::size_t gamma = 0, beta = 0;
  std::size_t running_mean = 0, running_var = 0;
  // Cached by forward().
  Tensor xhat;
  std::vector<double> inv_std;
  bool used_batch_stats = false;
};

struct Block {
  ConvLayer conv1, conv2;
  BnLayer bn1, bn2;
  bool projected = false;
  ConvLayer proj;
  BnLayer proj_bn;
  Tensor relu1_out, out;
};

Tensor conv_forward(ConvLayer& L, const Tensor& x, const std::vector<Parameter>& params) {
  if (x.c != L.in_c) throw InputError("conv: channel mismatch");
  L.n = x.n;
  L.ih = x.h;
  L.iw = x.w;
  L.oh = (x.h + 2 * L.pad - L.k) / L.stride + 1;
  L.ow = (x.w + 2 * L.pad - L.k) / L.stride + 1;
  if (L.oh < 1 || L.ow < 1) throw InputError("conv: input too small");
  const int kk = L.in_c * L.k * L.k;
  const int hw = L.oh * L.ow;
  L.cols.assign(static_cast<std::size_t>(x.n), RowMat());
  Tensor y(x.n, L.out_c, L.oh, L.ow);
  const ConstMatMap W(params[L.weight].value.data(), L.out_c, kk);
  for (int in = 0; in < x.n; ++in) {
    RowMat& col = L.cols[static_cast<std::size_t>(in)];
    col.setZero(kk, hw);
    for (int ic = 0; ic < L.in_c; ++ic)
      for (int ky = 0; ky < L.k; ++ky)
        for (int kx = 0; kx < L.k; ++kx) {
          double* row = col.data() + static_cast<std::size_t>((ic * L.k + ky) * L.k + kx) * hw;
          for (int oy = 0; oy < L.oh; ++oy) {
            const int iy = oy * L.stride - L.pad + ky;
            if (iy < 0 || iy >= x.h) continue;
            for (int ox = 0; ox < L.ow; ++ox) {
              const int ix = ox * L.stride - L.pad + kx;
              if (ix >= 0 && ix < x.w) row[oy * L.ow + ox] = x.at(in, ic, iy, ix);
            }
          }
        }
    MatMap out(y.data.data() + static_cast<std::size_t>(in) * L.out_c * hw, L.out_c, hw);
    out.noalias() = W * col;
  }
  return y;
}

Tensor conv_backward(ConvLayer& L, const Tensor& dy, std::vector<Parameter>& params) {
  const int kk = L.in_c * L.k * L.k;
  const int hw = L.oh * L.ow;
  const ConstMatMap W(params[L.weight].value.data(), L.out_c, kk);
  MatMap dW(params[L.weight].grad.data(), L.out_c, kk);
  Tensor dx(L.n, L.in_c, L.ih, L.iw);
  RowMat dcol(kk, hw);
  for (int in = 0; in < L.n; ++in) {
    const ConstMatMap g(dy.data.data() + static_cast<std::size_t>(in) * L.out_c * hw, L.out_c, hw);
    dW.noalias() += g * L.cols[static_cast<std::size_t>(in)].transpose();
    dcol.noalias() = W.transpose() * g;
    for (int ic = 0; ic < L.in_c; ++ic)
      for (int ky = 0; ky < L.k; ++ky)
        for (int kx = 0; kx < L.k; ++kx) {
          const double* row = dcol.data() + static_cast<std::size_t>((ic * L.k + ky) * L.k + kx) * hw;
          for (int oy = 0; oy < L.oh; ++oy) {
            const int iy = oy * L.stride - L.pad + ky;
            if (iy < 0 || iy >= L.ih) continue;
            for (int ox = 0; ox < L.ow; ++ox) {
              const int ix = ox * L.stride - L.pad + kx;
              if (ix >= 0 && ix < L.iw) dx.at(in, ic, iy, ix) += row[oy * L.ow + ox];
            }
          }
        }
  }
  L.cols.clear();
  return dx;
}

Tensor bn_forward(BnLayer& L, const Tensor& x, std::vector<Parameter>& params, std::vector<Parameter>& buffers,
                  Mode mode, bool update_stats) {
  const std::size_t hw = static_cast<std::size_t>(x.h) * x.w;
  const double count = static_cast<double>(x.n) * static_cast<double>(hw);
  Tensor y(x.n, x.c, x.h, x.w);
  L.xhat = Tensor(x.n, x.c, x.h, x.w);
  L.inv_std.assign(static_cast<std::size_t>(x.c), 0.0);
  L.used_batch_stats = mode == Mode::training;
  const auto& gamma = params[L.gamma].value;
  const auto& beta = params[L.beta].value;
  auto& rmean = buffers[L.running_mean].value;
  auto& rvar = buffers[L.running_var].value;
  for (int c = 0; c < x.c; ++c) {
    double mean, var;
    if (L.used_batch_stats) {
      mean = 0.0;
      for (int n = 0; n < x.n; ++n) {
        const double* p = x.data.data() + (static_cast<std::size_t>(n) * x.c + c) * hw;
        for (std::size_t i = 0; i < hw; ++i) mean += p[i];
      }
      mean /= count;
      var = 0.0;
      for (int n = 0; n < x.n; ++n) {
        const double* p = x.data.data() + (static_cast<std::size_t>(n) * x.c + c) * hw;
        for (std::size_t i = 0; i < hw; ++i) var += (p[i] - mean) * (p[i] - mean);
      }
      var /= count;
      if (update_stats) {
        const double unbiased = count > 1.0 ? var * count / (count - 1.0) : var;
        rmean[c] = (1.0 - kBnMomentum) * rmean[c] + kBnMomentum * mean;
        rvar[c] = (1.0 - kBnMomentum) * rvar[c] + kBnMomentum * unbiased;
      }
    } else {
      mean = rmean[c];
      var = rvar[c];
    }
    const double inv = 1.0 / std::sqrt(var + kBnEpsilon);
    L.inv_std[c] = inv;
    for (int n = 0; n < x.n; ++n) {
      const std::size_t off = (static_cast<std::size_t>(n) * x.c + c) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        const double xh = (x.data[off + i] - mean) * inv;
        L.xhat.data[off + i] = xh;
        y.data[off + i] = gamma[c] * xh + beta[c];
      }
    }
  }
  return y;
}

Tensor bn_backward(BnLayer& L, const Tensor& dy, std::vector<Parameter>& params) {
  const std::size_t hw = static_cast<std::size_t>(dy.h) * dy.w;
  const double count = static_cast<double>(dy.n) * static_cast<double>(hw);
  Tensor dx(dy.n, dy.c, dy.h, dy.w);
  const auto& gamma = params[L.gamma].value;
  auto& dgamma = params[L.gamma].grad;
  auto& dbeta = params[L.beta].grad;
  for (int c = 0; c < dy.c; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int n = 0; n < dy.n; ++n) {
      const std::size_t off = (static_cast<std::size_t>(n) * dy.c + c) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        sum_dy += dy.data[off + i];
        sum_dy_xhat += dy.data[off + i] * L.xhat.data[off + i];
      }
    }
    dgamma[c] += sum_dy_xhat;
    dbeta[c] += sum_dy;
    const double scale = gamma[c] * L.inv_std[c];
    for (int n = 0; n < dy.n; ++n) {
      const std::size_t off = (static_cast<std::size_t>(n) * dy.c + c) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        if (L.used_batch_stats)
          dx.data[off + i] =
              scale / count * (count * dy.data[off + i] - sum_dy - L.xhat.data[off + i] * sum_dy_xhat);
        else
          dx.data[off + i] = scale * dy.data[off + i];
      }
    }
  }
  return dx;
}

void relu_inplace(Tensor& t) {
  for (double& v : t.data) v = v > 0.0 ? v : 0.0;
}

// Gradient through a ReLU whose output was `out`.
Tensor relu_backward(const Tensor& dy, const Tensor& out) {
  Tensor dx = dy;
  for (std::size_t i = 0; i < dx.data.size(); ++i)
    if (!(out.data[i] > 0.0)) dx.data[i] = 0.0;
  return dx;
}

Tensor add(const Tensor& a, const Tensor& b) {
  Tensor r = a;
  for (std::size_t i = 0; i < r.data.size(); ++i) r.data[i] += b.data[i];
  return r;
}

}  // namespace

struct ResidualNet::Impl {
  ResidualNetConfig cfg;
  std::vector<Parameter> params;
  std::vector<Parameter> buffers;
  ConvLayer stem;
  BnLayer stem_bn;
  Tensor stem_out;
  std::vector<Block> blocks;
  std::size_t fc_weight = 0, fc_bias = 0;
  Tensor features;  // N x C x 1 x 1 after pooling
  int pooled_h = 0, pooled_w = 0;

  std::size_t add_param(std::string name, std::vector<int> shape, double fill) {
    const std::size_t n = std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                                          [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
    params.push_back({std::move(name), std::move(shape), std::vector<double>(n, fill), std::vector<double>(n, 0.0)});
    return params.size() - 1;
  }
  std::size_t add_buffer(std::string name, int c, double fill) {
    buffers.push_back({std::move(name), {c}, std::vector<double>(static_cast<std::size_t>(c), fill), {}});
    return buffers.size() - 1;
  }

  ConvLayer make_conv(const std::string& name, int in_c, int out_c, int k, int stride, Rng& rng) {
    ConvLayer L;
    L.in_c = in_c;
    L.out_c = out_c;
    L.k = k;
    L.stride = stride;
    L.pad = k / 2;
    L.weight = add_param(name + ".weight", {out_c, in_c, k, k}, 0.0);
    std::normal_distribution<double> he(0.0, std::sqrt(2.0 / (in_c * k * k)));
    for (double& w : params[L.weight].value) w = he(rng);
    return L;
  }

  BnLayer make_bn(const std::string& name, int c) {
    BnLayer L;
    L.c = c;
    L.gamma = add_param(name + ".gamma", {c}, 1.0);
    L.beta = add_param(name + ".beta", {c}, 0.0);
    L.running_mean = add_buffer(name + ".running_mean", c, 0.0);
    L.running_var = add_buffer(name + ".running_var", c, 1.0);
    return L;
  }

  explicit Impl(ResidualNetConfig c) : cfg(std::move(c)) {
    cfg.validate();
    Rng rng(cfg.seed);
    const int c0 = cfg.block_channels.front();
    stem = make_conv("stem.conv", 1, c0, 3, 1, rng);
    stem_bn = make_bn("stem.bn", c0);
    int in_c = c0;
    for (int b = 0; b < cfg.n_blocks(); ++b) {
      const int out_c = cfg.block_channels[static_cast<std::size_t>(b)];
      const int stride = out_c != in_c ? 2 : 1;
      const std::string prefix = "block" + std::to_string(b);
      Block blk;
      blk.conv1 = make_conv(prefix + ".conv1", in_c, out_c, 3, stride, rng);
      blk.bn1 = make_bn(prefix + ".bn1", out_c);
      blk.conv2 = make_conv(prefix + ".conv2", out_c, out_c, 3, 1, rng);
      blk.bn2 = make_bn(prefix + ".bn2", out_c);
      if (stride != 1 || in_c != out_c) {
        blk.projected = true;
        blk.proj = make_conv(prefix + ".proj", in_c, out_c, 1, stride, rng);
        blk.proj_bn = make_bn(prefix + ".proj_bn", out_c);
      }
      blocks.push_back(std::move(blk));
      in_c = out_c;
    }
    fc_weight = add_param("fc.weight", {cfg.n_classes, in_c}, 0.0);
    fc_bias = add_param("fc.bias", {cfg.n_classes}, 0.0);
  }

  Tensor forward(const Tensor& x, Mode mode, bool update) {
    if (x.c != 1 || x.h != cfg.input_height || x.w != cfg.input_width || x.n < 1)
      throw InputError("ResidualNet: expected N x 1 x " + std::to_string(cfg.input_height) + " x " +
                       std::to_string(cfg.input_width) + " input, got " + std::to_string(x.n) + " x " +
                       std::to_string(x.c) + " x " + std::to_string(x.h) + " x " + std::to_string(x.w));
    Tensor h = bn_forward(stem_bn, conv_forward(stem, x, params), params, buffers, mode, update);
    relu_inplace(h);
    stem_out = h;
    for (Block& b : blocks) {
      Tensor a = bn_forward(b.bn1, conv_forward(b.conv1, h, params), params, buffers, mode, update);
      relu_inplace(a);
      b.relu1_out = a;
      a = bn_forward(b.bn2, conv_forward(b.conv2, a, params), params, buffers, mode, update);
      const Tensor shortcut =
          b.projected ? bn_forward(b.proj_bn, conv_forward(b.proj, h, params), params, buffers, mode, update) : h;
      h = add(a, shortcut);
      relu_inplace(h);
      b.out = h;
    }
    pooled_h = h.h;
    pooled_w = h.w;
    const std::size_t hw = static_cast<std::size_t>(h.h) * h.w;
    features = Tensor(h.n, h.c, 1, 1);
    for (int n = 0; n < h.n; ++n)
      for (int c = 0; c < h.c; ++c) {
        const double* p = h.data.data() + (static_cast<std::size_t>(n) * h.c + c) * hw;
        double s = 0.0;
        for (std::size_t i = 0; i < hw; ++i) s += p[i];
        features.data[static_cast<std::size_t>(n) * h.c + c] = s / static_cast<double>(hw);
      }
    Tensor scores(h.n, cfg.n_classes, 1, 1);
    const ConstMatMap F(features.data.data(), h.n, h.c);
    const ConstMatMap W(params[fc_weight].value.data(), cfg.n_classes, h.c);
    MatMap S(scores.data.data(), h.n, cfg.n_classes);
    S.noalias() = F * W.transpose();
    for (int n = 0; n < h.n; ++n)
      for (int k = 0; k < cfg.n_classes; ++k) S(n, k) += params[fc_bias].value[static_cast<std::size_t>(k)];
    return scores;
  }

  Tensor backward(const Tensor& grad_scores) {
    const int n = features.n, c = features.c;
    if (grad_scores.n != n || grad_scores.c != cfg.n_classes)
      throw InputError("ResidualNet::backward: gradient shape does not match the last forward pass");
    const ConstMatMap G(grad_scores.data.data(), n, cfg.n_classes);
    const ConstMatMap F(features.data.data(), n, c);
    MatMap dW(params[fc_weight].grad.data(), cfg.n_classes, c);
    dW.noalias() += G.transpose() * F;
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < cfg.n_classes; ++k) params[fc_bias].grad[static_cast<std::size_t>(k)] += G(i, k);
    const ConstMatMap W(params[fc_weight].value.data(), cfg.n_classes, c);
    const RowMat dF = G * W;

    const std::size_t hw = static_cast<std::size_t>(pooled_h) * pooled_w;
    Tensor d(n, c, pooled_h, pooled_w);
    for (int i = 0; i < n; ++i)
      for (int ch = 0; ch < c; ++ch) {
        const double g = dF(i, ch) / static_cast<double>(hw);
        double* p = d.data.data() + (static_cast<std::size_t>(i) * c + ch) * hw;
        std::fill(p, p + hw, g);
      }

    for (auto it = blocks.rbegin(); it != blocks.rend(); ++it) {
      Block& b = *it;
      const Tensor dsum = relu_backward(d, b.out);
      Tensor da = bn_backward(b.bn2, dsum, params);
      da = conv_backward(b.conv2, da, params);
      da = relu_backward(da, b.relu1_out);
      da = bn_backward(b.bn1, da, params);
      da = conv_backward(b.conv1, da, params);
      if (b.projected) {
        Tensor ds = bn_backward(b.proj_bn, dsum, params);
        ds = conv_backward(b.proj, ds, params);
        d = add(da, ds);
      } else {
        d = add(da, dsum);
      }
    }
    d = relu_backward(d, stem_out);
    d = bn_backward(stem_bn, d, params);
    return conv_backward(stem, d, params);
  }

  std::uint64_t signature() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    const auto mix = [&h](const Tensor& t) {
      for (double v : t.data) {
        h ^= v > 0.0 ? 1u : 0u;
        h *= 0x100000001b3ULL;
      }
    };
    mix(stem_out);
    for (const Block& b : blocks) {
      mix(b.relu1_out);
      mix(b.out);
    }
    return h;
  }
};

void ResidualNetConfig::validate() const {
  if (block_channels.empty()) throw ConfigError("classifier: need at least one residual block");
  for (int c : block_channels)
    if (c < 1) throw ConfigError("classifier: block channel counts must be >= 1");
  if (n_classes < 2) throw ConfigError("classifier: n_classes must be >= 2");
  if (input_height < 1 || input_width < 1) throw ConfigError("classifier: input shape must be positive");
}

ResidualNet::ResidualNet(ResidualNetConfig cfg) : impl_(std::make_unique<Impl>(std::move(cfg))) {}
ResidualNet::~ResidualNet() = default;
ResidualNet::ResidualNet(const ResidualNet& other) : impl_(std::make_unique<Impl>(*other.impl_)) {}
ResidualNet& ResidualNet::operator=(const ResidualNet& other) {
  if (this != &other) impl_ = std::make_unique<Impl>(*other.impl_);
  return *this;
}
ResidualNet::ResidualNet(ResidualNet&&) noexcept = default;
ResidualNet& ResidualNet::operator=(ResidualNet&&) noexcept = default;

const ResidualNetConfig& ResidualNet::config() const { return impl_->cfg; }
Tensor ResidualNet::forward(const Tensor& batch, Mode mode, bool update_running_stats) {
  return impl_->forward(batch, mode, update_running_stats);
}
Tensor ResidualNet::backward(const Tensor& grad_scores) { return impl_->backward(grad_scores); }
void ResidualNet::zero_grad() {
  for (auto& p : impl_->params) std::fill(p.grad.begin(), p.grad.end(), 0.0);
}
std::vector<Parameter>& ResidualNet::parameters() { return impl_->params; }
const std::vector<Parameter>& ResidualNet::parameters() const { return impl_->params; }
std::vector<Parameter>& ResidualNet::buffers() { return impl_->buffers; }
const std::vector<Parameter>& ResidualNet::buffers() const { return impl_->buffers; }
std::uint64_t ResidualNet::activation_signature() const { return impl_->signature(); }

Tensor stack_images(const std::vector<const SpecImage*>& images) {
  if (images.empty()) throw InputError("stack_images: empty batch");
  const int h = images.front()->height, w = images.front()->width;
  Tensor t(static_cast<int>(images.size()), 1, h, w);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const SpecImage& img = *images[i];
    if (img.height != h || img.width != w || img.pixels.size() != static_cast<std::size_t>(h) * w)
      throw InputError("stack_images: images differ in shape");
    std::copy(img.pixels.begin(), img.pixels.end(), t.data.begin() + static_cast<std::ptrdiff_t>(i * img.pixels.size()));
  }
  return t;
}

double softmax_cross_entropy(const Tensor& scores, const std::vector<int>& labels, Tensor* grad_scores) {
  const int n = scores.n, k = scores.c;
  if (static_cast<int>(labels.size()) != n) throw InputError("softmax_cross_entropy: label count mismatch");
  if (grad_scores) *grad_scores = Tensor(n, k, 1, 1);
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    const double* s = scores.data.data() + static_cast<std::size_t>(i) * k;
    const double mx = *std::max_element(s, s + k);
    double z = 0.0;
    for (int j = 0; j < k; ++j) z += std::exp(s[j] - mx);
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= k) throw InputError("softmax_cross_entropy: label out of range");
    loss += std::log(z) - (s[y] - mx);
    if (grad_scores)
      for (int j = 0; j < k; ++j)
        grad_scores->data[static_cast<std::size_t>(i) * k + j] =
            (std::exp(s[j] - mx) / z - (j == y ? 1.0 : 0.0)) / n;
  }
  return loss / n;
}

int class_index(Gesture g) { return static_cast<int>(g); }
Gesture class_gesture(int index) {
  if (index < 0 || index > 2) throw InputError("class index out of range");
  return static_cast<Gesture>(index);
}

int batches_per_epoch(std::size_t n_train, int batch_size) {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  return static_cast<int>((n_train + static_cast<std::size_t>(batch_size) - 1) / static_cast<std::size_t>(batch_size));
}

namespace {

std::vector<int> labels_of(const std::vector<const SpecImage*>& batch) {
  std::vector<int> y;
  y.reserve(batch.size());
  for (const SpecImage* img : batch) y.push_back(class_index(img->label));
  return y;
}

// Training-set loss with batch statistics over consecutive batches in input order.
double fixed_partition_loss(ResidualNet& net, const std::vector<SpecImage>& set, int batch_size) {
  double total = 0.0;
  for (std::size_t start = 0; start < set.size(); start += static_cast<std::size_t>(batch_size)) {
    std::vector<const SpecImage*> batch;
    for (std::size_t i = start; i < std::min(set.size(), start + static_cast<std::size_t>(batch_size)); ++i)
      batch.push_back(&set[i]);
    const Tensor scores = net.forward(stack_images(batch), Mode::training, false);
    total += softmax_cross_entropy(scores, labels_of(batch), nullptr) * static_cast<double>(batch.size());
  }
  return total / static_cast<double>(set.size());
}

}  // namespace

TrainResult train(const ResidualNetConfig& cfg, const std::vector<SpecImage>& train_set, const TrainOptions& opt) {
  if (train_set.empty()) throw InputError("train: training set is empty");
  if (opt.batch_size < 1 || static_cast<std::size_t>(opt.batch_size) > train_set.size())
    throw ConfigError("train: batch_size must be in [1, training set size]");
  if (opt.epochs < 0) throw ConfigError("train: epochs must be >= 0");
  if (!(opt.learning_rate >= 0.0) || !(opt.momentum >= 0.0 && opt.momentum < 1.0))
    throw ConfigError("train: need learning_rate >= 0 and momentum in [0, 1)");

  ResidualNet net(cfg);
  std::vector<std::vector<double>> velocity;
  for (const auto& p : net.parameters()) velocity.emplace_back(p.value.size(), 0.0);

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(opt.seed);
  TrainReport report;
  report.n_classes = cfg.n_classes;

  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(opt.batch_size)) {
      std::vector<const SpecImage*> batch;
      for (std::size_t i = start; i < std::min(order.size(), start + static_cast<std::size_t>(opt.batch_size)); ++i)
        batch.push_back(&train_set[order[i]]);
      net.zero_grad();
      Tensor grad;
      const double loss = softmax_cross_entropy(net.forward(stack_images(batch), Mode::training), labels_of(batch), &grad);
      if (diverged(loss)) throw NumericalError("train: loss diverged in epoch " + std::to_string(epoch + 1));
      net.backward(grad);
      auto& params = net.parameters();
      for (std::size_t p = 0; p < params.size(); ++p) {
        auto& v = velocity[p];
        auto& value = params[p].value;
        const auto& g = params[p].grad;
        for (std::size_t j = 0; j < value.size(); ++j) {
          v[j] = opt.momentum * v[j] + g[j];
          value[j] -= opt.learning_rate * v[j];
        }
      }
    }
    const double epoch_loss = fixed_partition_loss(net, train_set, opt.batch_size);
    if (diverged(epoch_loss))
      throw NumericalError("train: loss diverged in epoch " + std::to_string(epoch + 1));
    report.epoch_loss.push_back(epoch_loss);
  }

  TrainReport fit = evaluate(net, train_set);
  report.accuracy = fit.accuracy;
  report.confusion = std::move(fit.confusion);
  return {std::move(net), std::move(report)};
}

std::vector<int> predict(ResidualNet& net, const std::vector<SpecImage>& images) {
  constexpr std::size_t kChunk = 64;
  std::vector<int> out;
  out.reserve(images.size());
  for (std::size_t start = 0; start < images.size(); start += kChunk) {
    std::vector<const SpecImage*> batch;
    for (std::size_t i = start; i < std::min(images.size(), start + kChunk); ++i) batch.push_back(&images[i]);
    const Tensor scores = net.forward(stack_images(batch), Mode::inference);
    for (int i = 0; i < scores.n; ++i) {
      const double* s = scores.data.data() + static_cast<std::size_t>(i) * scores.c;
      out.push_back(static_cast<int>(std::max_element(s, s + scores.c) - s));
    }
  }
  return out;
}

TrainReport evaluate(ResidualNet& net, const std::vector<SpecImage>& test_set) {
  if (test_set.empty()) throw InputError("evaluate: test set is empty");
  const int k = net.config().n_classes;
  TrainReport r;
  r.n_classes = k;
  r.confusion.assign(static_cast<std::size_t>(k) * k, 0);
  const std::vector<int> pred = predict(net, test_set);
  int correct = 0;
  for (std::size_t i = 0; i < test_set.size(); ++i) {
    const int truth = class_index(test_set[i].label);
    if (truth >= k) throw InputError("evaluate: label outside the network's classes");
    ++r.confusion[static_cast<std::size_t>(truth) * k + pred[i]];
    correct += truth == pred[i] ? 1 : 0;
  }
  r.accuracy = static_cast<double>(correct) / static_cast<double>(test_set.size());
  return r;
}

namespace {

std::string join_shape(const std::vector<int>& shape) {
  std::string s;
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "x" : "") + std::to_string(shape[i]);
  return s;
}

std::vector<int> parse_int_list(const std::string& text, char sep) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep)) {
    try {
      out.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw IoError("model manifest: malformed integer list '" + text + "'");
    }
  }
  return out;
}

}  // namespace

void save_model(const std::filesystem::path& path, const ResidualNet& net) {
  const ResidualNetConfig& cfg = net.config();
  KeyValues manifest;
  manifest.set("format", std::string("pmsense-model-1"));
  std::string channels;
  for (std::size_t i = 0; i < cfg.block_channels.size(); ++i)
    channels += (i ? "," : "") + std::to_string(cfg.block_channels[i]);
  manifest.set("block_channels", channels);
  manifest.set("input_height", static_cast<std::int64_t>(cfg.input_height));
  manifest.set("input_width", static_cast<std::int64_t>(cfg.input_width));
  manifest.set("n_classes", static_cast<std::int64_t>(cfg.n_classes));
  manifest.set("seed", cfg.seed);

  std::string bytes;
  std::size_t index = 0;
  const auto emit = [&](const Parameter& p) {
    const std::string key = "tensor." + std::to_string(index++);
    manifest.set(key + ".name", p.name);
    manifest.set(key + ".shape", join_shape(p.shape));
    manifest.set(key + ".offset", static_cast<std::uint64_t>(bytes.size()));
    for (double v : p.value) {
      const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
      for (int b = 0; b < 4; ++b) bytes.push_back(static_cast<char>((bits >> (8 * b)) & 0xffu));
    }
  };
  for (const auto& p : net.parameters()) emit(p);
  for (const auto& p : net.buffers()) emit(p);
  manifest.set("tensor_count", static_cast<std::uint64_t>(index));
  manifest.set("total_bytes", static_cast<std::uint64_t>(bytes.size()));
  write_file_atomic(path, bytes);
  fs::path mpath = path;
  mpath += ".manifest";
  write_key_values(mpath, manifest);
}

ResidualNet load_model(const std::filesystem::path& path) {
  fs::path mpath = path;
  mpath += ".manifest";
  const KeyValues manifest = read_key_values(mpath);
  if (manifest.get("format") != "pmsense-model-1") throw IoError(mpath.string() + ": unsupported model format");
  ResidualNetConfig cfg;
  cfg.block_channels = parse_int_list(manifest.get("block_channels"), ',');
  cfg.input_height = static_cast<int>(manifest.get_int("input_height"));
  cfg.input_width = static_cast<int>(manifest.get_int("input_width"));
  cfg.n_classes = static_cast<int>(manifest.get_int("n_classes"));
  cfg.seed = manifest.get_uint("seed");
  ResidualNet net(cfg);

  const std::string bytes = read_file(path);
  if (bytes.size() != manifest.get_uint("total_bytes")) throw IoError(path.string() + ": size does not match manifest");
  std::size_t index = 0;
  const auto load = [&](Parameter& p) {
    const std::string key = "tensor." + std::to_string(index++);
    if (manifest.get(key + ".name") != p.name || parse_int_list(manifest.get(key + ".shape"), 'x') != p.shape)
      throw IoError(mpath.string() + ": tensor " + key + " does not match the network layout");
    const std::uint64_t offset = manifest.get_uint(key + ".offset");
    if (offset + 4 * p.value.size() > bytes.size()) throw IoError(path.string() + ": truncated tensor data");
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b)
        bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[offset + 4 * j + b])) << (8 * b);
      p.value[j] = std::bit_cast<float>(bits);
    }
  };
  for (auto& p : net.parameters()) load(p);
  for (auto& p : net.buffers()) load(p);
  if (index != manifest.get_uint("tensor_count")) throw IoError(mpath.string() + ": tensor count mismatch");
  return net;
}

void write_loss_csv(const std::filesystem::path& path, const TrainReport& report) {
  std::string out = "epoch,loss\n";
  for (std::size_t e = 0; e < report.epoch_loss.size(); ++e)
    out += std::to_string(e + 1) + "," + format_double(report.epoch_loss[e]) + "\n";
  write_file_atomic(path, out);
}

void write_confusion_csv(const std::filesystem::path& path, const TrainReport& report) {
  std::string out = "true\\predicted";
  for (int k = 0; k < report.n_classes; ++k) out += "," + (report.n_classes == 3 ? to_string(class_gesture(k)) : std::to_string(k));
  out += "\n";
  for (int t = 0; t < report.n_classes; ++t) {
    out += report.n_classes == 3 ? to_string(class_gesture(t)) : std::to_string(t);
    for (int p = 0; p < report.n_classes; ++p) out += "," + std::to_string(report.count(t, p));
    out += "\n";
  }
  write_file_atomic(path, out);
}

}  // namespace pmsense
