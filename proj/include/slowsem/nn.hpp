#pragma once

// Minimal layer library with hand-written backward passes.
//
// Activations are Eigen matrices with one column per sample. Spatial
// activations are stored as channels x (batch * height * width) with column
// index b*H*W + y*W + x, so per-channel batch-norm over a feature map is the
// same row-wise operation as for dense features.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace slowsem {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct ParamRef {
  std::string name;
  Matrix* value;
  Matrix* grad;
};

struct BufferRef {
  std::string name;
  Matrix* value;
};

struct ParamSet {
  std::vector<ParamRef> params;
  std::vector<BufferRef> buffers;
};

class Layer {
 public:
  virtual ~Layer() = default;
  // Caches whatever backward() needs; a layer is used at most once per step.
  virtual Matrix forward(const Matrix& x, bool train) = 0;
  // Accumulates parameter gradients and returns the gradient w.r.t. the input.
  virtual Matrix backward(const Matrix& grad_out) = 0;
  virtual void collect(const std::string& /*prefix*/, ParamSet& /*out*/) {}
  // Fan-in-scaled uniform initialization drawn from streams keyed by parameter name.
  virtual void init(const std::string& /*prefix*/, std::uint64_t /*seed*/) {}
};

class Linear : public Layer {
 public:
  Linear(int in_features, int out_features);
  Matrix forward(const Matrix& x, bool train) override;
  Matrix backward(const Matrix& grad_out) override;
  void collect(const std::string& prefix, ParamSet& out) override;
  void init(const std::string& prefix, std::uint64_t seed) override;

 private:
  Matrix weight_, bias_, grad_weight_, grad_bias_, input_;
};

struct SpatialShape {
  int channels = 0;
  int height = 0;
  int width = 0;
  int pixels() const { return height * width; }
};

// k x k convolution with stride and zero padding, implemented as im2col + GEMM.
class Conv2d : public Layer {
 public:
  Conv2d(SpatialShape input, int out_channels, int kernel, int stride, int padding, bool bias = false);
  Matrix forward(const Matrix& x, bool train) override;
  Matrix backward(const Matrix& grad_out) override;
  void collect(const std::string& prefix, ParamSet& out) override;
  void init(const std::string& prefix, std::uint64_t seed) override;
  SpatialShape output_shape() const { return out_; }

 private:
  Matrix im2col(const Matrix& x, int batch) const;
  SpatialShape in_, out_;
  int kernel_, stride_, padding_;
  bool has_bias_;
  Matrix weight_, bias_, grad_weight_, grad_bias_, cols_;
  int batch_ = 0;
};

// Per-row normalization over all columns. Running statistics use momentum 0.1
// and the unbiased batch variance, matching the usual framework convention.
class BatchNorm : public Layer {
 public:
  explicit BatchNorm(int features, double momentum = 0.1, double eps = 1e-5);
  Matrix forward(const Matrix& x, bool train) override;
  Matrix backward(const Matrix& grad_out) override;
  void collect(const std::string& prefix, ParamSet& out) override;
  void init(const std::string& prefix, std::uint64_t seed) override;

 private:
  double momentum_, eps_;
  Matrix gamma_, beta_, grad_gamma_, grad_beta_, running_mean_, running_var_;
  Matrix x_hat_;
  Vector inv_std_;
  bool used_batch_stats_ = false;
};

class ReLU : public Layer {
 public:
  Matrix forward(const Matrix& x, bool train) override;
  Matrix backward(const Matrix& grad_out) override;

 private:
  Matrix mask_;
};

// channels x (batch*H*W) -> channels x batch
class GlobalAvgPool : public Layer {
 public:
  explicit GlobalAvgPool(SpatialShape input) : in_(input) {}
  Matrix forward(const Matrix& x, bool train) override;
  Matrix backward(const Matrix& grad_out) override;

 private:
  SpatialShape in_;
};

class MaxPool2d : public Layer {
 public:
  MaxPool2d(SpatialShape input, int kernel, int stride, int padding);
  Matrix forward(const Matrix& x, bool train) override;
  Matrix backward(const Matrix& grad_out) override;
  SpatialShape output_shape() const { return out_; }

 private:
  SpatialShape in_, out_;
  int kernel_, stride_, padding_;
  std::vector<Eigen::Index> argmax_;
  Eigen::Index input_cols_ = 0;
};

class Sequential : public Layer {
 public:
  Sequential() = default;
  Layer& add(std::unique_ptr<Layer> layer, std::string name = {});
  template <typename L, typename... Args>
  L& emplace(std::string name, Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    add(std::move(layer), std::move(name));
    return ref;
  }
  // Marks the output of the most recently added layer as a tap.
  void mark_tap() { taps_.push_back(layers_.size() - 1); }

  Matrix forward(const Matrix& x, bool train) override;
  Matrix backward(const Matrix& grad_out) override;
  void collect(const std::string& prefix, ParamSet& out) override;
  void init(const std::string& prefix, std::uint64_t seed) override;

  // Outputs of the marked layers from the last forward call.
  const std::vector<Matrix>& tap_outputs() const { return tap_outputs_; }
  std::size_t size() const { return layers_.size(); }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
  std::vector<std::string> names_;
  std::vector<std::size_t> taps_;
  std::vector<Matrix> tap_outputs_;
};

// relu(main(x) + shortcut(x)); an empty shortcut is the identity.
class ResidualBlock : public Layer {
 public:
  ResidualBlock(std::unique_ptr<Sequential> main, std::unique_ptr<Sequential> shortcut);
  Matrix forward(const Matrix& x, bool train) override;
  Matrix backward(const Matrix& grad_out) override;
  void collect(const std::string& prefix, ParamSet& out) override;
  void init(const std::string& prefix, std::uint64_t seed) override;

 private:
  std::unique_ptr<Sequential> main_, shortcut_;
  ReLU relu_;
};

// Fills m with U(-bound, bound) from a stream keyed by (seed, name).
void fill_uniform(Matrix& m, double bound, std::uint64_t seed, const std::string& name);

}  // namespace slowsem
