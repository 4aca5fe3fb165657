#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace vidq {

using Vector = std::vector<double>;

// Row-major dense matrix. Codebooks store one codeword per row.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return values_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {values_.data() + r * cols_, cols_}; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t num_params = 0;
  std::size_t worst_param_index = 0;
};

// Seeded generator shared by every stochastic component so runs are
// reproducible from a single integer.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }
  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  std::size_t uniform_index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

double dot(std::span<const double> x, std::span<const double> y);
double l2_norm(std::span<const double> x);
double squared_distance(std::span<const double> x, std::span<const double> y);

// xᵀy / (‖x‖‖y‖). Throws InvalidArgument on dim mismatch or a zero-norm input.
double cosine_similarity(std::span<const double> x, std::span<const double> y);

// Softmax with max-subtraction. Throws on empty or non-finite input.
Vector stable_softmax(std::span<const double> logits);

Vector sgd_step(std::span<const double> params, std::span<const double> grads, double lr);
// In-place variant used by the training loops.
void sgd_update(std::span<double> params, std::span<const double> grads, double lr);

// y = W x
Vector matvec(const Matrix& w, std::span<const double> x);
// y = Wᵀ x
Vector matvec_transposed(const Matrix& w, std::span<const double> x);

void axpy(double alpha, std::span<const double> x, std::span<double> y);

bool all_finite(std::span<const double> values);
// Throws NumericError naming the tensor when any entry is NaN/Inf.
void require_finite(std::span<const double> values, std::string_view tensor_name);

// Parameter containers expose for_each_tensor(fn) visiting spans in a fixed
// order; these helpers view such a container as one flat vector.
template <typename Params>
Vector flatten(const Params& params) {
  Vector out;
  params.for_each_tensor([&](std::span<const double> t) { out.insert(out.end(), t.begin(), t.end()); });
  return out;
}

template <typename Params>
void assign_flat(Params& params, std::span<const double> flat) {
  std::size_t offset = 0;
  params.for_each_tensor([&](std::span<double> t) {
    for (double& v : t) v = flat[offset++];
  });
}

template <typename Params>
void apply_sgd(Params& params, const Params& grads, double lr) {
  const Vector g = flatten(grads);
  std::size_t offset = 0;
  params.for_each_tensor([&](std::span<double> t) {
    sgd_update(t, std::span<const double>(g.data() + offset, t.size()), lr);
    offset += t.size();
  });
}

using LossFn = std::function<double(std::span<const double>)>;

// Central-difference gradient check. Per-coordinate error is
// |a - n| / max(1e-12, |a| + |n|).
GradCheckReport finite_diff_check(const LossFn& loss_fn, std::span<const double> params,
                                  std::span<const double> analytic_grads, double eps);

}  // namespace vidq
