#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <string>
#include <utility>
#include <vector>

#include "tactfl/errors.hpp"

namespace tactfl {

inline std::string shape_str(const std::vector<std::size_t>& shape) {
  if (shape.empty()) return "scalar";
  std::string s;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += 'x';
    s += std::to_string(shape[i]);
  }
  return s;
}

inline std::size_t shape_count(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

// Dense row-major tensor of doubles. Shape is explicit so flattened
// parameter vectors round-trip losslessly.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> s)
      : shape(std::move(s)), data(shape_count(shape), 0.0) {}

  Tensor(std::vector<std::size_t> s, std::vector<double> d)
      : shape(std::move(s)), data(std::move(d)) {
    if (shape_count(shape) != data.size()) {
      throw shape_error("tensor: shape " + shape_str(shape) + " expects " +
                        std::to_string(shape_count(shape)) + " values, got " +
                        std::to_string(data.size()));
    }
  }

  static Tensor zeros(std::vector<std::size_t> s) { return Tensor(std::move(s)); }

  static Tensor identity(std::size_t n) {
    Tensor t({n, n});
    for (std::size_t i = 0; i < n; ++i) t.data[i * n + i] = 1.0;
    return t;
  }

  std::size_t size() const { return data.size(); }
  std::size_t ndim() const { return shape.size(); }

  std::size_t rows() const {
    assert(shape.size() == 2);
    return shape[0];
  }
  std::size_t cols() const {
    assert(shape.size() == 2);
    return shape[1];
  }

  double& operator()(std::size_t i) {
    assert(i < data.size());
    return data[i];
  }
  double operator()(std::size_t i) const {
    assert(i < data.size());
    return data[i];
  }
  double& operator()(std::size_t i, std::size_t j) {
    assert(shape.size() == 2 && i < shape[0] && j < shape[1]);
    return data[i * shape[1] + j];
  }
  double operator()(std::size_t i, std::size_t j) const {
    assert(shape.size() == 2 && i < shape[0] && j < shape[1]);
    return data[i * shape[1] + j];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (double v : data) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }
};

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.cols() != b.rows()) {
    throw shape_error("matmul: incompatible shapes " + shape_str(a.shape) +
                      " and " + shape_str(b.shape));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a.data[i * k + p];
      if (aip == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) {
        out.data[i * n + j] += aip * b.data[p * n + j];
      }
    }
  }
  return out;
}

inline double dot(const Tensor& u, const Tensor& v) {
  if (u.size() != v.size()) {
    throw shape_error("dot: size mismatch " + shape_str(u.shape) + " vs " +
                      shape_str(v.shape));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += u.data[i] * v.data[i];
  return s;
}

inline double norm(const Tensor& u) { return std::sqrt(dot(u, u)); }

// Cosine similarity with the defined-zero convention: a zero-norm side
// yields 0 (degenerate embedding, not an error). Result clipped to [-1, 1].
inline double cosine(const Tensor& u, const Tensor& v) {
  if (u.size() != v.size() || u.size() == 0) {
    throw shape_error("cosine: size mismatch " + shape_str(u.shape) + " vs " +
                      shape_str(v.shape));
  }
  double uu = 0.0, vv = 0.0, uv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    uu += u.data[i] * u.data[i];
    vv += v.data[i] * v.data[i];
    uv += u.data[i] * v.data[i];
  }
  if (uu == 0.0 || vv == 0.0) return 0.0;
  // sqrt of the product, not the product of sqrts: for bitwise-equal inputs
  // uu == vv == uv and sqrt(fl(s*s)) == s exactly, so cosine(x, x) == 1.0.
  double denom = std::sqrt(uu * vv);
  if (!std::isfinite(denom) || denom == 0.0) denom = std::sqrt(uu) * std::sqrt(vv);
  double c = uv / denom;
  if (c > 1.0) c = 1.0;
  if (c < -1.0) c = -1.0;
  return c;
}

// Row-wise temperature softmax with max subtraction.
inline Tensor row_softmax(const Tensor& logits, double tau) {
  if (tau <= 0.0) {
    throw parameter_error("row_softmax: tau must be > 0, got " +
                          std::to_string(tau));
  }
  if (logits.ndim() != 2) {
    throw shape_error("row_softmax: expected 2-d tensor, got " +
                      shape_str(logits.shape));
  }
  const std::size_t m = logits.rows(), n = logits.cols();
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    double mx = logits(i, 0);
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, logits(i, j));
    double denom = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      double e = std::exp((logits(i, j) - mx) / tau);
      out(i, j) = e;
      denom += e;
    }
    for (std::size_t j = 0; j < n; ++j) out(i, j) /= denom;
  }
  return out;
}

// Max over coordinates of the relative disagreement between an analytic
// gradient and a central finite difference of f at x.
inline double check_gradient(const std::function<double(const Tensor&)>& f,
                             const Tensor& x, const Tensor& analytic,
                             double eps) {
  if (!x.same_shape(analytic)) {
    throw shape_error("check_gradient: x is " + shape_str(x.shape) +
                      " but gradient is " + shape_str(analytic.shape));
  }
  Tensor probe = x;
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = x.data[i];
    probe.data[i] = xi + eps;
    double fp = f(probe);
    probe.data[i] = xi - eps;
    double fm = f(probe);
    probe.data[i] = xi;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw numeric_error("check_gradient: non-finite objective at coordinate " +
                          std::to_string(i));
    }
    double numeric = (fp - fm) / (2.0 * eps);
    double denom = std::max(1e-8, std::abs(analytic.data[i]) + std::abs(numeric));
    worst = std::max(worst, std::abs(analytic.data[i] - numeric) / denom);
  }
  return worst;
}

}  // namespace tactfl
