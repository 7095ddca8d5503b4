#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace riskadapt {

/// Dense row-major matrix. Batches are stored feature-major: one row per
/// feature, one column per sample.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  std::vector<double> column(std::size_t c) const;
  void set_column(std::size_t c, std::span<const double> values);
  /// Columns [first, first + count) copied out; `index` selects arbitrary columns.
  Matrix gather_columns(std::span<const std::size_t> index) const;

  static Matrix from_column(std::span<const double> values);
};

/// Activations recorded by a forward pass: the input, each hidden layer
/// after tanh, and the linear output.
struct MlpCache {
  std::vector<Matrix> activations;
};

struct MlpGradients {
  std::vector<double> params;  ///< same layout as Mlp::params()
  Matrix input;                ///< d loss / d input
};

/// Feed-forward network with tanh hidden layers and a linear output.
///
/// Parameters live in one flat buffer laid out per layer as the row-major
/// weight matrix (out x in) followed by the bias, which is also the
/// checkpoint order. Each output element accumulates its dot product in
/// ascending input order, so a sample gives bitwise-identical results
/// whether it is evaluated alone or inside a batch.
class Mlp {
 public:
  Mlp() = default;
  /// All parameters zero.
  explicit Mlp(std::vector<std::size_t> layer_dims);

  /// Orthogonal init with gain sqrt(2) on hidden layers and `output_gain` on
  /// the last layer; biases zero.
  static Mlp orthogonal(std::vector<std::size_t> layer_dims, double output_gain, std::mt19937_64& rng);

  const std::vector<std::size_t>& layer_dims() const noexcept { return dims_; }
  std::size_t num_layers() const noexcept { return dims_.empty() ? 0 : dims_.size() - 1; }
  std::size_t input_dim() const { return dims_.front(); }
  std::size_t output_dim() const { return dims_.back(); }
  std::size_t num_params() const noexcept { return params_.size(); }

  std::span<double> params() noexcept { return params_; }
  std::span<const double> params() const noexcept { return params_; }

  /// Row-major (out x in) weights of layer l, and its bias.
  std::span<double> weights(std::size_t l);
  std::span<const double> weights(std::size_t l) const;
  std::span<double> bias(std::size_t l);
  std::span<const double> bias(std::size_t l) const;

  Matrix forward(const Matrix& input, MlpCache& cache) const;
  Matrix forward(const Matrix& input) const;
  std::vector<double> forward(std::span<const double> input) const;

  /// Exact gradients for the computation recorded in `cache`.
  MlpGradients backward(const MlpCache& cache, const Matrix& output_grad) const;

 private:
  std::size_t offset(std::size_t l) const { return offsets_[l]; }

  std::vector<std::size_t> dims_;
  std::vector<std::size_t> offsets_;
  std::vector<double> params_;
};

}  // namespace riskadapt
