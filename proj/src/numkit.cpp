/*
 * Copyright 2026 The fcilsim Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "fcil/numkit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace fcil {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  require(data_.size() == rows_ * cols_, ErrorCode::kShapeMismatch,
          "matrix data length " + std::to_string(data_.size()) + " does not match shape " +
              shape_string());
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    require(row.size() == c, ErrorCode::kShapeMismatch, "ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Matrix(r, c, std::move(data));
}

Matrix Matrix::transpose() const {
  Matrix t(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
  return t;
}

Matrix& Matrix::operator+=(const Matrix& other) {
  require(same_shape(other), ErrorCode::kShapeMismatch,
          "cannot add " + other.shape_string() + " to " + shape_string());
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
  require(same_shape(other), ErrorCode::kShapeMismatch,
          "cannot subtract " + other.shape_string() + " from " + shape_string());
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Matrix& Matrix::operator*=(double scale) {
  for (double& v : data_) v *= scale;
  return *this;
}

std::string Matrix::shape_string() const {
  return std::to_string(rows_) + "x" + std::to_string(cols_);
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(Matrix a, double s) { return a *= s; }

Matrix matmul(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.rows(), ErrorCode::kShapeMismatch,
          "matmul shape mismatch: " + a.shape_string() + " x " + b.shape_string());
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t p = 0; p < a.cols(); ++p) {
      const double aip = a(i, p);
      if (aip == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aip * b(p, j);
    }
  }
  return out;
}

Vector matvec(const Matrix& a, std::span<const double> x) {
  require(a.cols() == x.size(), ErrorCode::kShapeMismatch,
          "matvec shape mismatch: " + a.shape_string() + " x " + std::to_string(x.size()));
  Vector y(a.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) s += a(i, j) * x[j];
    y[i] = s;
  }
  return y;
}

Vector matvec_transposed(const Matrix& a, std::span<const double> y) {
  require(a.rows() == y.size(), ErrorCode::kShapeMismatch,
          "transposed matvec shape mismatch: " + a.shape_string() + "^T x " +
              std::to_string(y.size()));
  Vector x(a.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double yi = y[i];
    if (yi == 0.0) continue;
    for (std::size_t j = 0; j < a.cols(); ++j) x[j] += a(i, j) * yi;
  }
  return x;
}

void add_outer(Matrix& out, std::span<const double> u, std::span<const double> v,
               double scale) {
  require(out.rows() == u.size() && out.cols() == v.size(), ErrorCode::kShapeMismatch,
          "outer product " + std::to_string(u.size()) + "x" + std::to_string(v.size()) +
              " does not fit " + out.shape_string());
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double su = scale * u[i];
    if (su == 0.0) continue;
    for (std::size_t j = 0; j < v.size(); ++j) out(i, j) += su * v[j];
  }
}

void check_same_dim(std::span<const double> u, std::span<const double> v,
                    std::string_view what) {
  if (u.size() != v.size()) {
    fail(ErrorCode::kShapeMismatch, std::string(what) + ": dimension mismatch " +
                                        std::to_string(u.size()) + " vs " +
                                        std::to_string(v.size()));
  }
}

double sq_dist(std::span<const double> u, std::span<const double> v) {
  check_same_dim(u, v, "sq_dist");
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double d = u[i] - v[i];
    s += d * d;
  }
  return s;
}

double dot(std::span<const double> u, std::span<const double> v) {
  check_same_dim(u, v, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * v[i];
  return s;
}

double norm(std::span<const double> u) { return std::sqrt(dot(u, u)); }

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  require(x.size() == y.size(), ErrorCode::kShapeMismatch, "axpy: dimension mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

Vector softmax_temp(std::span<const double> values, double temp) {
  require(!values.empty(), ErrorCode::kInvalidArgument, "softmax_temp: empty input");
  require(std::isfinite(temp), ErrorCode::kInvalidArgument, "softmax_temp: non-finite temperature");
  double top = -std::numeric_limits<double>::infinity();
  for (double v : values) top = std::max(top, temp * v);
  Vector out(values.size());
  double total = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    out[i] = std::exp(temp * values[i] - top);
    total += out[i];
  }
  for (double& o : out) o /= total;
  return out;
}

Vector minmax_normalize(std::span<const double> values) {
  require(!values.empty(), ErrorCode::kInvalidArgument, "minmax_normalize: empty input");
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  Vector out(values.size(), 0.0);
  if (!(hi > lo)) return out;
  const double span = hi - lo;
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - lo) / span;
  return out;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

namespace {

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

RngStream::RngStream(std::uint64_t seed) : seed_(seed), engine_(splitmix64(seed)) {}

RngStream RngStream::derive(std::string_view purpose, std::uint64_t index) const {
  return RngStream(splitmix64(seed_ ^ fnv1a(purpose)) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

std::uint64_t RngStream::next_u64() { return engine_(); }

double RngStream::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

std::uint64_t RngStream::uniform_index(std::uint64_t n) {
  require(n > 0, ErrorCode::kInvalidArgument, "uniform_index: empty range");
  // Rejection sampling keeps the result exactly uniform.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x = next_u64();
  while (x >= limit) x = next_u64();
  return x % n;
}

double RngStream::normal(double mean, double stddev) {
  double z;
  if (has_spare_) {
    has_spare_ = false;
    z = spare_;
  } else {
    // Marsaglia polar method.
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    z = u * f;
  }
  return mean + stddev * z;
}

double RngStream::log_gamma_draw(double shape) {
  require(shape > 0.0, ErrorCode::kInvalidArgument, "gamma shape must be positive");
  if (shape < 1.0) {
    // Gamma(a) = Gamma(a + 1) * U^(1/a), kept in log space for tiny a.
    double u = uniform();
    while (u == 0.0) u = uniform();
    return log_gamma_draw(shape + 1.0) + std::log(u) / shape;
  }
  // Marsaglia & Tsang.
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return std::log(d * v);
    if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return std::log(d * v);
  }
}

Matrix gaussian_matrix(std::size_t rows, std::size_t cols, double mean, double stddev,
                       RngStream& rng) {
  require(stddev >= 0.0, ErrorCode::kInvalidArgument, "gaussian_matrix: negative stddev");
  Matrix m(rows, cols);
  for (double& v : m.data()) v = stddev == 0.0 ? mean : rng.normal(mean, stddev);
  return m;
}

Vector gaussian_vector(std::size_t dim, double mean, double stddev, RngStream& rng) {
  require(stddev >= 0.0, ErrorCode::kInvalidArgument, "gaussian_vector: negative stddev");
  Vector v(dim);
  for (double& x : v) x = stddev == 0.0 ? mean : rng.normal(mean, stddev);
  return v;
}

Vector dirichlet_sample(double beta, std::size_t k, RngStream& rng) {
  require(beta > 0.0 && std::isfinite(beta), ErrorCode::kInvalidArgument,
          "dirichlet_sample: beta must be positive, got " + std::to_string(beta));
  require(k >= 1, ErrorCode::kInvalidArgument, "dirichlet_sample: k must be at least 1");
  if (k == 1) return {1.0};
  Vector logs(k);
  for (double& l : logs) l = rng.log_gamma_draw(beta);
  // Normalizing in log space avoids all-zero draws when beta is small.
  const double top = *std::max_element(logs.begin(), logs.end());
  Vector out(k);
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    out[i] = std::exp(logs[i] - top);
    total += out[i];
  }
  for (double& o : out) o /= total;
  return out;
}

}  // namespace fcil
