// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rsed/errors.hpp"

namespace rsed {

using Vector = std::vector<double>;

/// Dense row-major f64 matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    require(data_.size() == rows_ * cols_, "Matrix: data length != rows*cols");
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  Matrix transposed() const {
    Matrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    return t;
  }

  void fill(double value) { std::fill(data_.begin(), data_.end(), value); }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Logistic function in the branch form that never evaluates exp of a
// positive argument.
inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// out += W x
inline void mul_add(const Matrix& W, std::span<const double> x, std::span<double> out) {
  require(W.cols() == x.size() && W.rows() == out.size(), "mul_add: dimension mismatch");
  for (std::size_t i = 0; i < W.rows(); ++i) {
    const auto row = W.row(i);
    double s = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) s += row[j] * x[j];
    out[i] += s;
  }
}

/// out += W^T g
inline void mul_transpose_add(const Matrix& W, std::span<const double> g,
                              std::span<double> out) {
  require(W.rows() == g.size() && W.cols() == out.size(),
          "mul_transpose_add: dimension mismatch");
  for (std::size_t i = 0; i < W.rows(); ++i) {
    const double gi = g[i];
    if (gi == 0.0) continue;
    const auto row = W.row(i);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += row[j] * gi;
  }
}

/// G += g x^T
inline void outer_add(Matrix& G, std::span<const double> g, std::span<const double> x) {
  require(G.rows() == g.size() && G.cols() == x.size(), "outer_add: dimension mismatch");
  for (std::size_t i = 0; i < G.rows(); ++i) {
    const double gi = g[i];
    if (gi == 0.0) continue;
    auto row = G.row(i);
    for (std::size_t j = 0; j < x.size(); ++j) row[j] += gi * x[j];
  }
}

inline void add_to(std::span<double> dst, std::span<const double> src) {
  require(dst.size() == src.size(), "add_to: length mismatch");
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

/// W x + b
inline Vector affine(const Matrix& W, std::span<const double> x, std::span<const double> b) {
  require(W.cols() == x.size(), "affine: W.cols != dim(x)");
  require(W.rows() == b.size(), "affine: W.rows != dim(b)");
  Vector out(b.begin(), b.end());
  mul_add(W, x, out);
  return out;
}

inline bool all_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

// Parameter containers expose their storage through an ADL-visible
// `for_each_block(params, fn)` that calls fn(std::span<[const] double>) on
// every tensor in a fixed order. flatten/unflatten are defined on top.

template <class Params>
Vector flatten(const Params& params) {
  Vector out;
  for_each_block(params, [&](std::span<const double> block) {
    out.insert(out.end(), block.begin(), block.end());
  });
  return out;
}

template <class Params>
std::size_t parameter_count(const Params& params) {
  std::size_t n = 0;
  for_each_block(params, [&](std::span<const double> block) { n += block.size(); });
  return n;
}

template <class Params>
void unflatten(std::span<const double> flat, Params& params) {
  require(flat.size() == parameter_count(params), "unflatten: length mismatch");
  std::size_t offset = 0;
  for_each_block(params, [&](std::span<double> block) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), block.size(), block.begin());
    offset += block.size();
  });
}

template <class Params>
void set_zero(Params& params) {
  for_each_block(params, [](std::span<double> block) { std::fill(block.begin(), block.end(), 0.0); });
}

struct AdamConfig {
  double stepsize = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  Vector m;
  Vector v;
  std::uint64_t t = 0;
  AdamConfig config;

  static AdamState fresh(std::size_t n, AdamConfig config = {}) {
    return AdamState{Vector(n, 0.0), Vector(n, 0.0), 0, config};
  }
};

struct AdamResult {
  Vector params;
  AdamState state;
};

/// One bias-corrected ADAM update. Pure: inputs are not modified.
inline AdamResult adam_step(std::span<const double> params, std::span<const double> grads,
                            const AdamState& state) {
  require(params.size() == grads.size(), "adam_step: params/grads length mismatch");
  require(state.m.size() == params.size() && state.v.size() == params.size(),
          "adam_step: state length mismatch");
  const AdamConfig& c = state.config;
  AdamResult out{Vector(params.begin(), params.end()), state};
  out.state.t = state.t + 1;
  const double t = static_cast<double>(out.state.t);
  const double m_corr = 1.0 - std::pow(c.beta1, t);
  const double v_corr = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    double& m = out.state.m[i];
    double& v = out.state.v[i];
    m = c.beta1 * m + (1.0 - c.beta1) * g;
    v = c.beta2 * v + (1.0 - c.beta2) * g * g;
    const double m_hat = m / m_corr;
    const double v_hat = v / v_corr;
    out.params[i] -= c.stepsize * m_hat / (std::sqrt(v_hat) + c.epsilon);
  }
  return out;
}

}  // namespace rsed
