#include "slowsem/nn.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "slowsem/rng.hpp"

namespace slowsem {

void fill_uniform(Matrix& m, double bound, std::uint64_t seed, const std::string& name) {
  Rng rng(seed, name);
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = rng.uniform(-bound, bound);
}

// ---------------------------------------------------------------------------

Linear::Linear(int in_features, int out_features)
    : weight_(Matrix::Zero(out_features, in_features)),
      bias_(Matrix::Zero(out_features, 1)),
      grad_weight_(Matrix::Zero(out_features, in_features)),
      grad_bias_(Matrix::Zero(out_features, 1)) {}

Matrix Linear::forward(const Matrix& x, bool) {
  if (x.rows() != weight_.cols())
    throw std::invalid_argument("Linear: expected " + std::to_string(weight_.cols()) +
                                " input features, got " + std::to_string(x.rows()));
  input_ = x;
  Matrix y = weight_ * x;
  y.colwise() += bias_.col(0);
  return y;
}

Matrix Linear::backward(const Matrix& grad_out) {
  grad_weight_.noalias() += grad_out * input_.transpose();
  grad_bias_ += grad_out.rowwise().sum();
  return weight_.transpose() * grad_out;
}

void Linear::collect(const std::string& prefix, ParamSet& out) {
  out.params.push_back({prefix + ".weight", &weight_, &grad_weight_});
  out.params.push_back({prefix + ".bias", &bias_, &grad_bias_});
}

void Linear::init(const std::string& prefix, std::uint64_t seed) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(weight_.cols()));
  fill_uniform(weight_, bound, seed, prefix + ".weight");
  fill_uniform(bias_, bound, seed, prefix + ".bias");
}

// ---------------------------------------------------------------------------

Conv2d::Conv2d(SpatialShape input, int out_channels, int kernel, int stride, int padding, bool bias)
    : in_(input), kernel_(kernel), stride_(stride), padding_(padding), has_bias_(bias) {
  out_.channels = out_channels;
  out_.height = (input.height + 2 * padding - kernel) / stride + 1;
  out_.width = (input.width + 2 * padding - kernel) / stride + 1;
  if (out_.height < 1 || out_.width < 1) throw std::invalid_argument("Conv2d: input too small");
  weight_ = Matrix::Zero(out_channels, kernel * kernel * input.channels);
  grad_weight_ = Matrix::Zero(weight_.rows(), weight_.cols());
  if (has_bias_) {
    bias_ = Matrix::Zero(out_channels, 1);
    grad_bias_ = Matrix::Zero(out_channels, 1);
  }
}

Matrix Conv2d::im2col(const Matrix& x, int batch) const {
  const int C = in_.channels, H = in_.height, W = in_.width;
  const int Ho = out_.height, Wo = out_.width, K = kernel_;
  Matrix cols = Matrix::Zero(static_cast<Eigen::Index>(K) * K * C, static_cast<Eigen::Index>(batch) * Ho * Wo);
  for (int b = 0; b < batch; ++b)
    for (int oy = 0; oy < Ho; ++oy)
      for (int ox = 0; ox < Wo; ++ox) {
        const Eigen::Index j = (static_cast<Eigen::Index>(b) * Ho + oy) * Wo + ox;
        for (int ky = 0; ky < K; ++ky) {
          const int iy = oy * stride_ - padding_ + ky;
          if (iy < 0 || iy >= H) continue;
          for (int kx = 0; kx < K; ++kx) {
            const int ix = ox * stride_ - padding_ + kx;
            if (ix < 0 || ix >= W) continue;
            const Eigen::Index pix = (static_cast<Eigen::Index>(b) * H + iy) * W + ix;
            cols.col(j).segment((ky * K + kx) * C, C) = x.col(pix);
          }
        }
      }
  return cols;
}

Matrix Conv2d::forward(const Matrix& x, bool) {
  if (x.rows() != in_.channels || x.cols() % in_.pixels() != 0)
    throw std::invalid_argument("Conv2d: input shape mismatch");
  batch_ = static_cast<int>(x.cols() / in_.pixels());
  cols_ = im2col(x, batch_);
  Matrix y = weight_ * cols_;
  if (has_bias_) y.colwise() += bias_.col(0);
  return y;
}

Matrix Conv2d::backward(const Matrix& grad_out) {
  grad_weight_.noalias() += grad_out * cols_.transpose();
  if (has_bias_) grad_bias_ += grad_out.rowwise().sum();
  const Matrix dcols = weight_.transpose() * grad_out;
  const int C = in_.channels, H = in_.height, W = in_.width;
  const int Ho = out_.height, Wo = out_.width, K = kernel_;
  Matrix dx = Matrix::Zero(C, static_cast<Eigen::Index>(batch_) * H * W);
  for (int b = 0; b < batch_; ++b)
    for (int oy = 0; oy < Ho; ++oy)
      for (int ox = 0; ox < Wo; ++ox) {
        const Eigen::Index j = (static_cast<Eigen::Index>(b) * Ho + oy) * Wo + ox;
        for (int ky = 0; ky < K; ++ky) {
          const int iy = oy * stride_ - padding_ + ky;
          if (iy < 0 || iy >= H) continue;
          for (int kx = 0; kx < K; ++kx) {
            const int ix = ox * stride_ - padding_ + kx;
            if (ix < 0 || ix >= W) continue;
            const Eigen::Index pix = (static_cast<Eigen::Index>(b) * H + iy) * W + ix;
            dx.col(pix) += dcols.col(j).segment((ky * K + kx) * C, C);
          }
        }
      }
  cols_.resize(0, 0);
  return dx;
}

void Conv2d::collect(const std::string& prefix, ParamSet& out) {
  out.params.push_back({prefix + ".weight", &weight_, &grad_weight_});
  if (has_bias_) out.params.push_back({prefix + ".bias", &bias_, &grad_bias_});
}

void Conv2d::init(const std::string& prefix, std::uint64_t seed) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(weight_.cols()));
  fill_uniform(weight_, bound, seed, prefix + ".weight");
  if (has_bias_) fill_uniform(bias_, bound, seed, prefix + ".bias");
}

// ---------------------------------------------------------------------------

BatchNorm::BatchNorm(int features, double momentum, double eps)
    : momentum_(momentum),
      eps_(eps),
      gamma_(Matrix::Ones(features, 1)),
      beta_(Matrix::Zero(features, 1)),
      grad_gamma_(Matrix::Zero(features, 1)),
      grad_beta_(Matrix::Zero(features, 1)),
      running_mean_(Matrix::Zero(features, 1)),
      running_var_(Matrix::Ones(features, 1)) {}

Matrix BatchNorm::forward(const Matrix& x, bool train) {
  if (x.rows() != gamma_.rows()) throw std::invalid_argument("BatchNorm: feature count mismatch");
  const auto n = static_cast<double>(x.cols());
  Vector mean, var;
  used_batch_stats_ = train;
  if (train) {
    if (x.cols() < 2) throw std::invalid_argument("BatchNorm: training needs at least 2 columns");
    mean = x.rowwise().mean();
    var = (x.colwise() - mean).array().square().rowwise().mean();
    running_mean_.col(0) = (1.0 - momentum_) * running_mean_.col(0) + momentum_ * mean;
    running_var_.col(0) = (1.0 - momentum_) * running_var_.col(0) + momentum_ * var * (n / (n - 1.0));
  } else {
    mean = running_mean_.col(0);
    var = running_var_.col(0);
  }
  inv_std_ = (var.array() + eps_).rsqrt().matrix();
  x_hat_ = (x.colwise() - mean).array().colwise() * inv_std_.array();
  Matrix y = x_hat_.array().colwise() * gamma_.col(0).array();
  y.colwise() += beta_.col(0);
  return y;
}

Matrix BatchNorm::backward(const Matrix& grad_out) {
  grad_gamma_.col(0) += (grad_out.array() * x_hat_.array()).rowwise().sum().matrix();
  grad_beta_.col(0) += grad_out.rowwise().sum();
  const Matrix dx_hat = grad_out.array().colwise() * gamma_.col(0).array();
  if (!used_batch_stats_) return dx_hat.array().colwise() * inv_std_.array();
  const auto n = static_cast<double>(grad_out.cols());
  const Vector sum_dx_hat = dx_hat.rowwise().sum();
  const Vector sum_dx_hat_xhat = (dx_hat.array() * x_hat_.array()).rowwise().sum();
  Matrix dx = (dx_hat * n).colwise() - sum_dx_hat;
  dx -= (x_hat_.array().colwise() * sum_dx_hat_xhat.array()).matrix();
  return dx.array().colwise() * (inv_std_.array() / n);
}

void BatchNorm::collect(const std::string& prefix, ParamSet& out) {
  out.params.push_back({prefix + ".gamma", &gamma_, &grad_gamma_});
  out.params.push_back({prefix + ".beta", &beta_, &grad_beta_});
  out.buffers.push_back({prefix + ".running_mean", &running_mean_});
  out.buffers.push_back({prefix + ".running_var", &running_var_});
}

void BatchNorm::init(const std::string&, std::uint64_t) {
  gamma_.setOnes();
  beta_.setZero();
  running_mean_.setZero();
  running_var_.setOnes();
}

// ---------------------------------------------------------------------------

Matrix ReLU::forward(const Matrix& x, bool) {
  mask_ = (x.array() > 0.0).cast<double>();
  return x.cwiseMax(0.0);
}

Matrix ReLU::backward(const Matrix& grad_out) { return grad_out.cwiseProduct(mask_); }

// ---------------------------------------------------------------------------

Matrix GlobalAvgPool::forward(const Matrix& x, bool) {
  const Eigen::Index P = in_.pixels();
  if (x.rows() != in_.channels || x.cols() % P != 0)
    throw std::invalid_argument("GlobalAvgPool: input shape mismatch");
  const Eigen::Index batch = x.cols() / P;
  Matrix y(x.rows(), batch);
  for (Eigen::Index b = 0; b < batch; ++b) y.col(b) = x.middleCols(b * P, P).rowwise().mean();
  return y;
}

Matrix GlobalAvgPool::backward(const Matrix& grad_out) {
  const Eigen::Index P = in_.pixels();
  Matrix dx(grad_out.rows(), grad_out.cols() * P);
  const double scale = 1.0 / static_cast<double>(P);
  for (Eigen::Index b = 0; b < grad_out.cols(); ++b)
    dx.middleCols(b * P, P).colwise() = grad_out.col(b) * scale;
  return dx;
}

// ---------------------------------------------------------------------------

MaxPool2d::MaxPool2d(SpatialShape input, int kernel, int stride, int padding)
    : in_(input), kernel_(kernel), stride_(stride), padding_(padding) {
  out_.channels = input.channels;
  out_.height = (input.height + 2 * padding - kernel) / stride + 1;
  out_.width = (input.width + 2 * padding - kernel) / stride + 1;
}

Matrix MaxPool2d::forward(const Matrix& x, bool) {
  const int C = in_.channels, H = in_.height, W = in_.width, Ho = out_.height, Wo = out_.width;
  const Eigen::Index batch = x.cols() / in_.pixels();
  input_cols_ = x.cols();
  Matrix y(C, batch * Ho * Wo);
  argmax_.assign(static_cast<std::size_t>(y.size()), -1);
  for (Eigen::Index b = 0; b < batch; ++b)
    for (int oy = 0; oy < Ho; ++oy)
      for (int ox = 0; ox < Wo; ++ox) {
        const Eigen::Index j = (b * Ho + oy) * Wo + ox;
        for (int c = 0; c < C; ++c) {
          double best = -std::numeric_limits<double>::infinity();
          Eigen::Index best_idx = -1;
          for (int ky = 0; ky < kernel_; ++ky) {
            const int iy = oy * stride_ - padding_ + ky;
            if (iy < 0 || iy >= H) continue;
            for (int kx = 0; kx < kernel_; ++kx) {
              const int ix = ox * stride_ - padding_ + kx;
              if (ix < 0 || ix >= W) continue;
              const Eigen::Index pix = (b * H + iy) * W + ix;
              if (x(c, pix) > best) {
                best = x(c, pix);
                best_idx = pix * C + c;
              }
            }
          }
          y(c, j) = best;
          argmax_[static_cast<std::size_t>(j * C + c)] = best_idx;
        }
      }
  return y;
}

Matrix MaxPool2d::backward(const Matrix& grad_out) {
  Matrix dx = Matrix::Zero(in_.channels, input_cols_);
  double* d = dx.data();
  const double* g = grad_out.data();
  for (std::size_t k = 0; k < argmax_.size(); ++k)
    if (argmax_[k] >= 0) d[argmax_[k]] += g[k];
  return dx;
}

// ---------------------------------------------------------------------------

Layer& Sequential::add(std::unique_ptr<Layer> layer, std::string name) {
  if (name.empty()) name = std::to_string(layers_.size());
  names_.push_back(std::move(name));
  layers_.push_back(std::move(layer));
  return *layers_.back();
}

Matrix Sequential::forward(const Matrix& x, bool train) {
  tap_outputs_.clear();
  Matrix h = x;
  std::size_t next_tap = 0;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = layers_[i]->forward(h, train);
    if (next_tap < taps_.size() && taps_[next_tap] == i) {
      tap_outputs_.push_back(h);
      ++next_tap;
    }
  }
  return h;
}

Matrix Sequential::backward(const Matrix& grad_out) {
  Matrix g = grad_out;
  for (std::size_t i = layers_.size(); i-- > 0;) g = layers_[i]->backward(g);
  return g;
}

void Sequential::collect(const std::string& prefix, ParamSet& out) {
  for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i]->collect(prefix + "." + names_[i], out);
}

void Sequential::init(const std::string& prefix, std::uint64_t seed) {
  for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i]->init(prefix + "." + names_[i], seed);
}

// ---------------------------------------------------------------------------

ResidualBlock::ResidualBlock(std::unique_ptr<Sequential> main, std::unique_ptr<Sequential> shortcut)
    : main_(std::move(main)), shortcut_(std::move(shortcut)) {}

Matrix ResidualBlock::forward(const Matrix& x, bool train) {
  Matrix y = main_->forward(x, train);
  if (shortcut_)
    y += shortcut_->forward(x, train);
  else
    y += x;
  return relu_.forward(y, train);
}

Matrix ResidualBlock::backward(const Matrix& grad_out) {
  const Matrix g = relu_.backward(grad_out);
  Matrix dx = main_->backward(g);
  if (shortcut_)
    dx += shortcut_->backward(g);
  else
    dx += g;
  return dx;
}

void ResidualBlock::collect(const std::string& prefix, ParamSet& out) {
  main_->collect(prefix + ".main", out);
  if (shortcut_) shortcut_->collect(prefix + ".shortcut", out);
}

void ResidualBlock::init(const std::string& prefix, std::uint64_t seed) {
  main_->init(prefix + ".main", seed);
  if (shortcut_) shortcut_->init(prefix + ".shortcut", seed);
}

}  // namespace slowsem
