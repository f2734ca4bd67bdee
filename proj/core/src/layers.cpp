#include "prunescope/layers.hpp"

#include <cmath>

#include "prunescope/errors.hpp"
#include "prunescope/kernels.hpp"

namespace prunescope {
namespace {

void check_rank(const Tensor& x, std::size_t rank, const std::string& layer) {
  if (x.shape.size() != rank) {
    throw DomainError(layer + ": expected rank-" + std::to_string(rank) + " input, got " + shape_string(x.shape));
  }
}

void add_into(Tensor& dst, const Tensor& src) {
  for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
}

}  // namespace

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(std::string name, int in_channels, int out_channels, int kernel, int stride, int pad, bool bias)
    : Layer(std::move(name)), in_(in_channels), out_(out_channels), kernel_(kernel), stride_(stride), pad_(pad),
      bias_(bias) {
  if (in_ <= 0 || out_ <= 0 || kernel_ <= 0 || stride_ <= 0 || pad_ < 0) {
    throw DomainError(this->name() + ": invalid convolution geometry");
  }
}

Shape Conv2d::output_shape(const Shape& input) const {
  if (input.size() != 3 || input[0] != in_) {
    throw DomainError(name() + ": expected " + std::to_string(in_) + " input channels, got " + shape_string(input));
  }
  kernels::ConvGeometry g{1, in_, static_cast<int>(input[1]), static_cast<int>(input[2]), kernel_, stride_, pad_};
  if (g.out_height() <= 0 || g.out_width() <= 0) throw DomainError(name() + ": input too small");
  return {out_, g.out_height(), g.out_width()};
}

void Conv2d::declare(NamedTensorSet& state, std::mt19937_64& rng) const {
  // Kaiming normal, fan-out mode
  Tensor w({out_, in_, kernel_, kernel_});
  const double std = std::sqrt(2.0 / (static_cast<double>(out_) * kernel_ * kernel_));
  for (auto& v : w.data) v = static_cast<float>(std * standard_normal(rng));
  state.add(param("weight"), TensorRole::ConvWeight, std::move(w));
  if (bias_) state.add(param("bias"), TensorRole::Bias, Tensor({out_}));
}

Tensor Conv2d::forward(const Tensor& x, const NamedTensorSet& state, Mode, TapeNode* tape) const {
  check_rank(x, 4, name());
  kernels::ConvGeometry g{static_cast<int>(x.dim(0)), in_, static_cast<int>(x.dim(2)), static_cast<int>(x.dim(3)),
                          kernel_, stride_, pad_};
  if (x.dim(1) != in_) throw DomainError(name() + ": channel mismatch");
  const int ho = g.out_height(), wo = g.out_width();
  const std::int64_t plane = static_cast<std::int64_t>(ho) * wo;
  const std::int64_t ncols = g.columns();

  Tensor cols({g.patch(), ncols});
  kernels::im2col(g, x.ptr(), cols.ptr());
  std::vector<float> tmp(static_cast<std::size_t>(out_ * ncols), 0.0f);
  kernels::gemm_nn(out_, static_cast<int>(ncols), g.patch(), state.at(param("weight")).ptr(), cols.ptr(),
                   tmp.data());

  Tensor y({g.batch, out_, ho, wo});
  const float* b = bias_ ? state.at(param("bias")).ptr() : nullptr;
  for (int n = 0; n < g.batch; ++n) {
    for (int o = 0; o < out_; ++o) {
      const float* src = tmp.data() + o * ncols + n * plane;
      float* dst = y.ptr() + (static_cast<std::int64_t>(n) * out_ + o) * plane;
      const float bv = b ? b[o] : 0.0f;
      for (std::int64_t p = 0; p < plane; ++p) dst[p] = src[p] + bv;
    }
  }
  if (tape) {
    tape->saved.clear();
    tape->saved.push_back(std::move(cols));
    tape->saved.push_back(Tensor({static_cast<std::int64_t>(g.height), static_cast<std::int64_t>(g.width)}));
  }
  return y;
}

Tensor Conv2d::backward(const Tensor& grad_out, const NamedTensorSet& state, const TapeNode& tape,
                        NamedTensorSet& grads) const {
  const Tensor& cols = tape.saved.at(0);
  const Shape& hw = tape.saved.at(1).shape;
  kernels::ConvGeometry g{static_cast<int>(grad_out.dim(0)), in_, static_cast<int>(hw[0]), static_cast<int>(hw[1]),
                          kernel_, stride_, pad_};
  const std::int64_t plane = static_cast<std::int64_t>(g.out_height()) * g.out_width();
  const std::int64_t ncols = g.columns();

  std::vector<float> dtmp(static_cast<std::size_t>(out_ * ncols));
  for (int n = 0; n < g.batch; ++n) {
    for (int o = 0; o < out_; ++o) {
      const float* src = grad_out.ptr() + (static_cast<std::int64_t>(n) * out_ + o) * plane;
      std::copy(src, src + plane, dtmp.data() + o * ncols + n * plane);
    }
  }
  kernels::gemm_nt(out_, g.patch(), static_cast<int>(ncols), dtmp.data(), cols.ptr(),
                   grads.at(param("weight")).ptr());
  if (bias_) {
    float* db = grads.at(param("bias")).ptr();
    for (int o = 0; o < out_; ++o) {
      double s = 0.0;
      for (std::int64_t j = 0; j < ncols; ++j) s += dtmp[o * ncols + j];
      db[o] += static_cast<float>(s);
    }
  }

  Tensor dcols({g.patch(), ncols});
  kernels::gemm_tn(g.patch(), static_cast<int>(ncols), out_, state.at(param("weight")).ptr(), dtmp.data(),
                   dcols.ptr());
  Tensor dx({g.batch, in_, g.height, g.width});
  kernels::col2im(g, dcols.ptr(), dx.ptr());
  return dx;
}

// ---------------------------------------------------------------- BatchNorm2d

BatchNorm2d::BatchNorm2d(std::string name, int channels, float eps)
    : Layer(std::move(name)), channels_(channels), eps_(eps) {}

void BatchNorm2d::declare(NamedTensorSet& state, std::mt19937_64&) const {
  state.add(param("weight"), TensorRole::NormScale, Tensor({channels_}, 1.0f));
  state.add(param("bias"), TensorRole::NormShift, Tensor({channels_}, 0.0f));
  state.add(param("running_mean"), TensorRole::NormRunningMean, Tensor({channels_}, 0.0f));
  state.add(param("running_var"), TensorRole::NormRunningVar, Tensor({channels_}, 1.0f));
}

Tensor BatchNorm2d::forward(const Tensor& x, const NamedTensorSet& state, Mode mode, TapeNode* tape) const {
  check_rank(x, 4, name());
  const int n = static_cast<int>(x.dim(0));
  const std::int64_t plane = x.dim(2) * x.dim(3);
  const float* gamma = state.at(param("weight")).ptr();
  const float* beta = state.at(param("bias")).ptr();
  Tensor y(x.shape);

  if (mode == Mode::Eval) {
    const float* rm = state.at(param("running_mean")).ptr();
    const float* rv = state.at(param("running_var")).ptr();
    for (int c = 0; c < channels_; ++c) {
      const float scale = gamma[c] / std::sqrt(rv[c] + eps_);
      const float shift = beta[c] - rm[c] * scale;
      for (int b = 0; b < n; ++b) {
        const std::int64_t off = (static_cast<std::int64_t>(b) * channels_ + c) * plane;
        for (std::int64_t p = 0; p < plane; ++p) y.data[off + p] = x.data[off + p] * scale + shift;
      }
    }
    return y;
  }

  const double count = static_cast<double>(n) * plane;
  Tensor xhat(x.shape);
  Tensor stats({channels_, 3});  // inv_std, batch mean, unbiased batch variance
#pragma omp parallel for schedule(static)
  for (int c = 0; c < channels_; ++c) {
    double sum = 0.0;
    for (int b = 0; b < n; ++b) {
      const float* src = x.ptr() + (static_cast<std::int64_t>(b) * channels_ + c) * plane;
      for (std::int64_t p = 0; p < plane; ++p) sum += src[p];
    }
    const double mean = sum / count;
    double sq = 0.0;
    for (int b = 0; b < n; ++b) {
      const float* src = x.ptr() + (static_cast<std::int64_t>(b) * channels_ + c) * plane;
      for (std::int64_t p = 0; p < plane; ++p) {
        const double d = src[p] - mean;
        sq += d * d;
      }
    }
    const double var = sq / count;
    const float inv_std = static_cast<float>(1.0 / std::sqrt(var + eps_));
    const float fmean = static_cast<float>(mean);
    for (int b = 0; b < n; ++b) {
      const std::int64_t off = (static_cast<std::int64_t>(b) * channels_ + c) * plane;
      for (std::int64_t p = 0; p < plane; ++p) {
        const float h = (x.data[off + p] - fmean) * inv_std;
        xhat.data[off + p] = h;
        y.data[off + p] = gamma[c] * h + beta[c];
      }
    }
    stats.data[c * 3 + 0] = inv_std;
    stats.data[c * 3 + 1] = fmean;
    stats.data[c * 3 + 2] = static_cast<float>(count > 1 ? sq / (count - 1) : var);
  }
  if (tape) {
    tape->saved.clear();
    tape->saved.push_back(std::move(xhat));
    tape->saved.push_back(std::move(stats));
  }
  return y;
}

Tensor BatchNorm2d::backward(const Tensor& grad_out, const NamedTensorSet& state, const TapeNode& tape,
                             NamedTensorSet& grads) const {
  const Tensor& xhat = tape.saved.at(0);
  const Tensor& stats = tape.saved.at(1);
  const int n = static_cast<int>(grad_out.dim(0));
  const std::int64_t plane = grad_out.dim(2) * grad_out.dim(3);
  const double count = static_cast<double>(n) * plane;
  const float* gamma = state.at(param("weight")).ptr();
  float* dgamma = grads.at(param("weight")).ptr();
  float* dbeta = grads.at(param("bias")).ptr();
  Tensor dx(grad_out.shape);
#pragma omp parallel for schedule(static)
  for (int c = 0; c < channels_; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int b = 0; b < n; ++b) {
      const std::int64_t off = (static_cast<std::int64_t>(b) * channels_ + c) * plane;
      for (std::int64_t p = 0; p < plane; ++p) {
        sum_dy += grad_out.data[off + p];
        sum_dy_xhat += static_cast<double>(grad_out.data[off + p]) * xhat.data[off + p];
      }
    }
    dgamma[c] += static_cast<float>(sum_dy_xhat);
    dbeta[c] += static_cast<float>(sum_dy);
    const float k = static_cast<float>(gamma[c] * stats.data[c * 3] / count);
    const float mean_dy = static_cast<float>(sum_dy);
    const float mean_dyx = static_cast<float>(sum_dy_xhat);
    const float fcount = static_cast<float>(count);
    for (int b = 0; b < n; ++b) {
      const std::int64_t off = (static_cast<std::int64_t>(b) * channels_ + c) * plane;
      for (std::int64_t p = 0; p < plane; ++p) {
        dx.data[off + p] = k * (fcount * grad_out.data[off + p] - mean_dy - xhat.data[off + p] * mean_dyx);
      }
    }
  }
  return dx;
}

void BatchNorm2d::update_running_stats(const TapeNode& tape, NamedTensorSet& state, float momentum) const {
  const Tensor& stats = tape.saved.at(1);
  float* rm = state.at(param("running_mean")).ptr();
  float* rv = state.at(param("running_var")).ptr();
  for (int c = 0; c < channels_; ++c) {
    rm[c] = (1.0f - momentum) * rm[c] + momentum * stats.data[c * 3 + 1];
    rv[c] = (1.0f - momentum) * rv[c] + momentum * stats.data[c * 3 + 2];
  }
}

// ---------------------------------------------------------------- ReLU

Tensor ReLU::forward(const Tensor& x, const NamedTensorSet&, Mode, TapeNode* tape) const {
  Tensor y(x.shape);
  for (std::size_t i = 0; i < x.data.size(); ++i) y.data[i] = x.data[i] > 0.0f ? x.data[i] : 0.0f;
  if (tape) tape->saved = {y};
  return y;
}

Tensor ReLU::backward(const Tensor& grad_out, const NamedTensorSet&, const TapeNode& tape, NamedTensorSet&) const {
  const Tensor& y = tape.saved.at(0);
  Tensor dx(grad_out.shape);
  for (std::size_t i = 0; i < dx.data.size(); ++i) dx.data[i] = y.data[i] > 0.0f ? grad_out.data[i] : 0.0f;
  return dx;
}

// ---------------------------------------------------------------- GlobalAvgPool

Tensor GlobalAvgPool::forward(const Tensor& x, const NamedTensorSet&, Mode, TapeNode* tape) const {
  check_rank(x, 4, name());
  const std::int64_t n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  Tensor y({n, c});
  for (std::int64_t i = 0; i < n * c; ++i) {
    double s = 0.0;
    for (std::int64_t p = 0; p < plane; ++p) s += x.data[i * plane + p];
    y.data[i] = static_cast<float>(s / static_cast<double>(plane));
  }
  if (tape) tape->saved = {Tensor(x.shape)};  // shape carrier only
  return y;
}

Tensor GlobalAvgPool::backward(const Tensor& grad_out, const NamedTensorSet&, const TapeNode& tape,
                               NamedTensorSet&) const {
  const Shape& in = tape.saved.at(0).shape;
  const std::int64_t plane = in[2] * in[3];
  Tensor dx(in);
  const float inv = 1.0f / static_cast<float>(plane);
  for (std::int64_t i = 0; i < in[0] * in[1]; ++i) {
    const float g = grad_out.data[i] * inv;
    for (std::int64_t p = 0; p < plane; ++p) dx.data[i * plane + p] = g;
  }
  return dx;
}

// ---------------------------------------------------------------- Linear

Linear::Linear(std::string name, int in_features, int out_features)
    : Layer(std::move(name)), in_(in_features), out_(out_features) {
  if (in_ <= 0 || out_ <= 0) throw DomainError(this->name() + ": invalid linear geometry");
}

Shape Linear::output_shape(const Shape& input) const {
  if (input.size() != 1 || input[0] != in_) throw DomainError(name() + ": expected " + std::to_string(in_) + " features");
  return {out_};
}

void Linear::declare(NamedTensorSet& state, std::mt19937_64& rng) const {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_));
  Tensor w({out_, in_});
  for (auto& v : w.data) v = static_cast<float>((2.0 * uniform01(rng) - 1.0) * bound);
  Tensor b({out_});
  for (auto& v : b.data) v = static_cast<float>((2.0 * uniform01(rng) - 1.0) * bound);
  state.add(param("weight"), TensorRole::LinearWeight, std::move(w));
  state.add(param("bias"), TensorRole::Bias, std::move(b));
}

Tensor Linear::forward(const Tensor& x, const NamedTensorSet& state, Mode, TapeNode* tape) const {
  check_rank(x, 2, name());
  const int n = static_cast<int>(x.dim(0));
  const Tensor& w = state.at(param("weight"));
  const Tensor& b = state.at(param("bias"));
  Tensor y({n, out_});
  for (int i = 0; i < n; ++i) {
    for (int o = 0; o < out_; ++o) y.data[i * out_ + o] = b.data[o];
  }
  kernels::gemm_nt(n, out_, in_, x.ptr(), w.ptr(), y.ptr());
  if (tape) tape->saved = {x};
  return y;
}

Tensor Linear::backward(const Tensor& grad_out, const NamedTensorSet& state, const TapeNode& tape,
                        NamedTensorSet& grads) const {
  const Tensor& x = tape.saved.at(0);
  const int n = static_cast<int>(x.dim(0));
  // dW[out, in] += dy^T[out, n] * x[n, in]
  kernels::gemm_tn(out_, in_, n, grad_out.ptr(), x.ptr(), grads.at(param("weight")).ptr());
  float* db = grads.at(param("bias")).ptr();
  for (int o = 0; o < out_; ++o) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += grad_out.data[i * out_ + o];
    db[o] += static_cast<float>(s);
  }
  Tensor dx({n, in_});
  kernels::gemm_nn(n, in_, out_, grad_out.ptr(), state.at(param("weight")).ptr(), dx.ptr());
  return dx;
}

// ---------------------------------------------------------------- BasicBlock

BasicBlock::BasicBlock(std::string name, int in_channels, int out_channels, int stride)
    : Layer(name),
      conv1_(name + ".conv1", in_channels, out_channels, 3, stride, 1, false),
      bn1_(name + ".bn1", out_channels),
      conv2_(name + ".conv2", out_channels, out_channels, 3, 1, 1, false),
      bn2_(name + ".bn2", out_channels) {
  if (stride != 1 || in_channels != out_channels) {
    proj_conv_ = std::make_unique<Conv2d>(name + ".shortcut.conv", in_channels, out_channels, 1, stride, 0, false);
    proj_bn_ = std::make_unique<BatchNorm2d>(name + ".shortcut.bn", out_channels);
  }
}

Shape BasicBlock::output_shape(const Shape& input) const { return conv2_.output_shape(conv1_.output_shape(input)); }

void BasicBlock::declare(NamedTensorSet& state, std::mt19937_64& rng) const {
  conv1_.declare(state, rng);
  bn1_.declare(state, rng);
  conv2_.declare(state, rng);
  bn2_.declare(state, rng);
  if (proj_conv_) {
    proj_conv_->declare(state, rng);
    proj_bn_->declare(state, rng);
  }
}

Tensor BasicBlock::forward(const Tensor& x, const NamedTensorSet& state, Mode mode, TapeNode* tape) const {
  TapeNode* t = nullptr;
  if (tape) {
    tape->children.assign(proj_conv_ ? 6 : 4, TapeNode{});
    t = tape->children.data();
  }
  Tensor h = conv1_.forward(x, state, mode, t ? &t[0] : nullptr);
  h = bn1_.forward(h, state, mode, t ? &t[1] : nullptr);
  for (auto& v : h.data) v = v > 0.0f ? v : 0.0f;
  Tensor mid = h;
  h = conv2_.forward(h, state, mode, t ? &t[2] : nullptr);
  h = bn2_.forward(h, state, mode, t ? &t[3] : nullptr);
  if (proj_conv_) {
    Tensor s = proj_conv_->forward(x, state, mode, t ? &t[4] : nullptr);
    s = proj_bn_->forward(s, state, mode, t ? &t[5] : nullptr);
    add_into(h, s);
  } else {
    add_into(h, x);
  }
  for (auto& v : h.data) v = v > 0.0f ? v : 0.0f;
  if (tape) tape->saved = {std::move(mid), h};
  return h;
}

Tensor BasicBlock::backward(const Tensor& grad_out, const NamedTensorSet& state, const TapeNode& tape,
                            NamedTensorSet& grads) const {
  const Tensor& mid = tape.saved.at(0);
  const Tensor& out = tape.saved.at(1);
  const auto& t = tape.children;
  Tensor g(grad_out.shape);
  for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] = out.data[i] > 0.0f ? grad_out.data[i] : 0.0f;

  Tensor gm = bn2_.backward(g, state, t[3], grads);
  gm = conv2_.backward(gm, state, t[2], grads);
  for (std::size_t i = 0; i < gm.data.size(); ++i) {
    if (!(mid.data[i] > 0.0f)) gm.data[i] = 0.0f;
  }
  gm = bn1_.backward(gm, state, t[1], grads);
  Tensor dx = conv1_.backward(gm, state, t[0], grads);

  if (proj_conv_) {
    Tensor gs = proj_bn_->backward(g, state, t[5], grads);
    gs = proj_conv_->backward(gs, state, t[4], grads);
    add_into(dx, gs);
  } else {
    add_into(dx, g);
  }
  return dx;
}

void BasicBlock::update_running_stats(const TapeNode& tape, NamedTensorSet& state, float momentum) const {
  bn1_.update_running_stats(tape.children.at(1), state, momentum);
  bn2_.update_running_stats(tape.children.at(3), state, momentum);
  if (proj_bn_) proj_bn_->update_running_stats(tape.children.at(5), state, momentum);
}

}  // namespace prunescope
