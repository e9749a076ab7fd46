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

#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fcil/error.hpp"

namespace fcil {

using Vector = std::vector<double>;

// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix identity(std::size_t n);
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  Matrix transpose() const;
  Matrix& operator+=(const Matrix& other);
  Matrix& operator-=(const Matrix& other);
  Matrix& operator*=(double scale);

  bool same_shape(const Matrix& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  std::string shape_string() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(Matrix a, double s);

Matrix matmul(const Matrix& a, const Matrix& b);
// a * x for a column vector x.
Vector matvec(const Matrix& a, std::span<const double> x);
// a^T * y without materializing the transpose.
Vector matvec_transposed(const Matrix& a, std::span<const double> y);
// Accumulates scale * u v^T into out.
void add_outer(Matrix& out, std::span<const double> u, std::span<const double> v,
               double scale = 1.0);

double sq_dist(std::span<const double> u, std::span<const double> v);
double dot(std::span<const double> u, std::span<const double> v);
double norm(std::span<const double> u);

// exp(temp * v_i - max) / sum, max-shifted for stability.
Vector softmax_temp(std::span<const double> values, double temp);

// Min-max rescale onto [0, 1]; a constant input maps to all zeros.
Vector minmax_normalize(std::span<const double> values);

void axpy(double alpha, std::span<const double> x, std::span<double> y);

// Seeded random stream.
//
// Bits come from std::mt19937_64, whose output sequence is fixed by the C++
// standard. Every transform on top of it (uniform reals, integers, normals,
// gammas, shuffles) is implemented here because the std:: distributions are
// implementation-defined. `derive` builds an independent stream from this
// stream's seed (not its position), so consuming draws in one pipeline stage
// never perturbs another stage's draws.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed = 0);

  std::uint64_t seed() const noexcept { return seed_; }
  RngStream derive(std::string_view purpose, std::uint64_t index = 0) const;

  std::uint64_t next_u64();
  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  // Uniform integer on [0, n); n must be positive.
  std::uint64_t uniform_index(std::uint64_t n);
  double normal(double mean = 0.0, double stddev = 1.0);
  // log of a Gamma(shape, 1) draw; stays finite for tiny shapes.
  double log_gamma_draw(double shape);

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(uniform_index(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

Matrix gaussian_matrix(std::size_t rows, std::size_t cols, double mean, double stddev,
                       RngStream& rng);
Vector gaussian_vector(std::size_t dim, double mean, double stddev, RngStream& rng);
Vector dirichlet_sample(double beta, std::size_t k, RngStream& rng);

// Throws kShapeMismatch naming both shapes.
void check_same_dim(std::span<const double> u, std::span<const double> v,
                    std::string_view what);

}  // namespace fcil
