#include "riskadapt/mlp.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>

#include "riskadapt/errors.hpp"

namespace riskadapt {

std::vector<double> Matrix::column(std::size_t c) const {
  std::vector<double> out(rows);
  for (std::size_t r = 0; r < rows; ++r) out[r] = data[r * cols + c];
  return out;
}

void Matrix::set_column(std::size_t c, std::span<const double> values) {
  if (values.size() != rows) throw DimensionError("Matrix::set_column: length mismatch");
  for (std::size_t r = 0; r < rows; ++r) data[r * cols + c] = values[r];
}

Matrix Matrix::gather_columns(std::span<const std::size_t> index) const {
  Matrix out(rows, index.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* src = data.data() + r * cols;
    double* dst = out.data.data() + r * out.cols;
    for (std::size_t k = 0; k < index.size(); ++k) dst[k] = src[index[k]];
  }
  return out;
}

Matrix Matrix::from_column(std::span<const double> values) {
  Matrix out(values.size(), 1);
  std::copy(values.begin(), values.end(), out.data.begin());
  return out;
}

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<const RowMatrix>;
using RowMapMut = Eigen::Map<RowMatrix>;

// y(o, :) = b[o] + sum_i w(o, i) x(i, :), accumulated in ascending i.
void affine_forward(std::span<const double> w, std::span<const double> b, const Matrix& x, Matrix& y) {
  const std::size_t out = y.rows;
  const std::size_t in = x.rows;
  const std::size_t batch = x.cols;
  std::size_t o = 0;
  for (; o + 4 <= out; o += 4) {
    double* __restrict y0 = y.data.data() + (o + 0) * batch;
    double* __restrict y1 = y.data.data() + (o + 1) * batch;
    double* __restrict y2 = y.data.data() + (o + 2) * batch;
    double* __restrict y3 = y.data.data() + (o + 3) * batch;
    std::fill(y0, y0 + batch, b[o + 0]);
    std::fill(y1, y1 + batch, b[o + 1]);
    std::fill(y2, y2 + batch, b[o + 2]);
    std::fill(y3, y3 + batch, b[o + 3]);
    for (std::size_t i = 0; i < in; ++i) {
      const double w0 = w[(o + 0) * in + i];
      const double w1 = w[(o + 1) * in + i];
      const double w2 = w[(o + 2) * in + i];
      const double w3 = w[(o + 3) * in + i];
      const double* __restrict xi = x.data.data() + i * batch;
      for (std::size_t k = 0; k < batch; ++k) {
        const double xv = xi[k];
        y0[k] += w0 * xv;
        y1[k] += w1 * xv;
        y2[k] += w2 * xv;
        y3[k] += w3 * xv;
      }
    }
  }
  for (; o < out; ++o) {
    double* __restrict yo = y.data.data() + o * batch;
    std::fill(yo, yo + batch, b[o]);
    for (std::size_t i = 0; i < in; ++i) {
      const double wo = w[o * in + i];
      const double* __restrict xi = x.data.data() + i * batch;
      for (std::size_t k = 0; k < batch; ++k) yo[k] += wo * xi[k];
    }
  }
}

}  // namespace

Mlp::Mlp(std::vector<std::size_t> layer_dims) : dims_(std::move(layer_dims)) {
  if (dims_.size() < 2) throw DimensionError("Mlp needs at least an input and an output dimension");
  std::size_t total = 0;
  for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
    if (dims_[l] == 0 || dims_[l + 1] == 0) throw DimensionError("Mlp layer dimensions must be positive");
    offsets_.push_back(total);
    total += dims_[l + 1] * dims_[l] + dims_[l + 1];
  }
  params_.assign(total, 0.0);
}

Mlp Mlp::orthogonal(std::vector<std::size_t> layer_dims, double output_gain, std::mt19937_64& rng) {
  Mlp net(std::move(layer_dims));
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const auto out = static_cast<Eigen::Index>(net.dims_[l + 1]);
    const auto in = static_cast<Eigen::Index>(net.dims_[l]);
    const Eigen::Index big = std::max(out, in);
    const Eigen::Index small = std::min(out, in);
    Eigen::MatrixXd gauss(big, small);
    for (Eigen::Index c = 0; c < small; ++c)
      for (Eigen::Index r = 0; r < big; ++r) gauss(r, c) = normal(rng);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(gauss);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(big, small);
    // Sign fix so the distribution is uniform over orthogonal matrices.
    const Eigen::MatrixXd r = qr.matrixQR().topRows(small).triangularView<Eigen::Upper>();
    for (Eigen::Index c = 0; c < small; ++c)
      if (r(c, c) < 0.0) q.col(c) *= -1.0;
    const double gain = l + 1 == net.num_layers() ? output_gain : std::sqrt(2.0);
    auto w = net.weights(l);
    for (Eigen::Index o = 0; o < out; ++o)
      for (Eigen::Index i = 0; i < in; ++i)
        w[static_cast<std::size_t>(o * in + i)] = gain * (out >= in ? q(o, i) : q(i, o));
  }
  return net;
}

std::span<double> Mlp::weights(std::size_t l) {
  return {params_.data() + offsets_.at(l), dims_[l + 1] * dims_[l]};
}
std::span<const double> Mlp::weights(std::size_t l) const {
  return {params_.data() + offsets_.at(l), dims_[l + 1] * dims_[l]};
}
std::span<double> Mlp::bias(std::size_t l) {
  return {params_.data() + offsets_.at(l) + dims_[l + 1] * dims_[l], dims_[l + 1]};
}
std::span<const double> Mlp::bias(std::size_t l) const {
  return {params_.data() + offsets_.at(l) + dims_[l + 1] * dims_[l], dims_[l + 1]};
}

Matrix Mlp::forward(const Matrix& input, MlpCache& cache) const {
  if (dims_.empty()) throw DimensionError("Mlp::forward on an empty network");
  if (input.rows != dims_.front()) {
    throw DimensionError("Mlp::forward: expected input dimension " + std::to_string(dims_.front()) +
                         ", got " + std::to_string(input.rows));
  }
  cache.activations.clear();
  cache.activations.reserve(dims_.size());
  cache.activations.push_back(input);
  for (std::size_t l = 0; l < num_layers(); ++l) {
    Matrix z(dims_[l + 1], input.cols);
    affine_forward(weights(l), bias(l), cache.activations.back(), z);
    if (l + 1 < num_layers()) {
      for (double& v : z.data) v = std::tanh(v);
    }
    cache.activations.push_back(std::move(z));
  }
  return cache.activations.back();
}

Matrix Mlp::forward(const Matrix& input) const {
  MlpCache cache;
  return forward(input, cache);
}

std::vector<double> Mlp::forward(std::span<const double> input) const {
  return forward(Matrix::from_column(input)).data;
}

MlpGradients Mlp::backward(const MlpCache& cache, const Matrix& output_grad) const {
  if (cache.activations.size() != dims_.size()) throw DimensionError("Mlp::backward: stale cache (layer count)");
  const std::size_t batch = cache.activations.front().cols;
  for (std::size_t l = 0; l < dims_.size(); ++l) {
    const Matrix& a = cache.activations[l];
    if (a.rows != dims_[l] || a.cols != batch) throw DimensionError("Mlp::backward: stale cache (shape)");
  }
  if (output_grad.rows != dims_.back() || output_grad.cols != batch) {
    throw DimensionError("Mlp::backward: output gradient shape mismatch");
  }

  MlpGradients grads;
  grads.params.assign(params_.size(), 0.0);
  Matrix delta = output_grad;
  for (std::size_t l = num_layers(); l-- > 0;) {
    const Matrix& a_in = cache.activations[l];
    const std::size_t out = dims_[l + 1];
    const std::size_t in = dims_[l];
    double* gw = grads.params.data() + offset(l);
    double* gb = gw + out * in;
    // Backward has no batch-invariance requirement, so use Eigen's GEMM.
    const RowMap d(delta.data.data(), out, batch);
    const RowMap a(a_in.data.data(), in, batch);
    const RowMap w(weights(l).data(), out, in);
    RowMapMut(gw, out, in).noalias() = d * a.transpose();
    Eigen::Map<Eigen::VectorXd>(gb, out) = d.rowwise().sum();

    Matrix d_in(in, batch);
    RowMapMut(d_in.data.data(), in, batch).noalias() = w.transpose() * d;
    if (l > 0) {
      for (std::size_t k = 0; k < d_in.data.size(); ++k) {
        const double act = a_in.data[k];
        d_in.data[k] *= 1.0 - act * act;
      }
    }
    delta = std::move(d_in);
  }
  grads.input = std::move(delta);
  return grads;
}

}  // namespace riskadapt
