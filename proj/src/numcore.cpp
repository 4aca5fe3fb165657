#include "vidq/numcore.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "vidq/error.hpp"

namespace vidq {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows * cols) {
    throw InvalidArgument("matrix value count " + std::to_string(values_.size()) +
                          " does not match shape " + std::to_string(rows) + "x" +
                          std::to_string(cols));
  }
}

namespace {

void require_same_dim(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw InvalidArgument(std::string(what) + ": dimension mismatch (" + std::to_string(a) +
                          " vs " + std::to_string(b) + ")");
  }
}

}  // namespace

double dot(std::span<const double> x, std::span<const double> y) {
  require_same_dim(x.size(), y.size(), "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * y[i];
  return acc;
}

double l2_norm(std::span<const double> x) {
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return std::sqrt(acc);
}

double squared_distance(std::span<const double> x, std::span<const double> y) {
  require_same_dim(x.size(), y.size(), "squared_distance");
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double diff = x[i] - y[i];
    acc += diff * diff;
  }
  return acc;
}

double cosine_similarity(std::span<const double> x, std::span<const double> y) {
  require_same_dim(x.size(), y.size(), "cosine_similarity");
  const double nx = l2_norm(x);
  const double ny = l2_norm(y);
  if (nx == 0.0 || ny == 0.0) {
    throw InvalidArgument("cosine_similarity: zero-norm input");
  }
  return std::clamp(dot(x, y) / (nx * ny), -1.0, 1.0);
}

Vector stable_softmax(std::span<const double> logits) {
  if (logits.empty()) throw InvalidArgument("stable_softmax: empty input");
  if (!all_finite(logits)) throw InvalidArgument("stable_softmax: non-finite logit");
  const double max_logit = *std::max_element(logits.begin(), logits.end());
  Vector out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - max_logit);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

Vector sgd_step(std::span<const double> params, std::span<const double> grads, double lr) {
  Vector out(params.begin(), params.end());
  sgd_update(out, grads, lr);
  return out;
}

void sgd_update(std::span<double> params, std::span<const double> grads, double lr) {
  require_same_dim(params.size(), grads.size(), "sgd_step");
  for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * grads[i];
}

Vector matvec(const Matrix& w, std::span<const double> x) {
  require_same_dim(w.cols(), x.size(), "matvec");
  Vector y(w.rows(), 0.0);
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const auto row = w.row(r);
    double acc = 0.0;
    for (std::size_t c = 0; c < row.size(); ++c) acc += row[c] * x[c];
    y[r] = acc;
  }
  return y;
}

Vector matvec_transposed(const Matrix& w, std::span<const double> x) {
  require_same_dim(w.rows(), x.size(), "matvec_transposed");
  Vector y(w.cols(), 0.0);
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const auto row = w.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) y[c] += row[c] * x[r];
  }
  return y;
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  require_same_dim(x.size(), y.size(), "axpy");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

void require_finite(std::span<const double> values, std::string_view tensor_name) {
  if (!all_finite(values)) {
    throw NumericError("non-finite value detected in " + std::string(tensor_name));
  }
}

GradCheckReport finite_diff_check(const LossFn& loss_fn, std::span<const double> params,
                                  std::span<const double> analytic_grads, double eps) {
  require_same_dim(params.size(), analytic_grads.size(), "finite_diff_check");
  if (!(eps > 0.0)) throw InvalidArgument("finite_diff_check: eps must be positive");

  GradCheckReport report;
  report.num_params = params.size();
  Vector probe(params.begin(), params.end());
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double saved = probe[i];
    probe[i] = saved + eps;
    const double up = loss_fn(probe);
    probe[i] = saved - eps;
    const double down = loss_fn(probe);
    probe[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("finite_diff_check: non-finite loss at parameter " + std::to_string(i));
    }
    const double numeric = (up - down) / (2.0 * eps);
    const double analytic = analytic_grads[i];
    const double rel =
        std::abs(analytic - numeric) / std::max(1e-12, std::abs(analytic) + std::abs(numeric));
    if (rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_param_index = i;
    }
  }
  return report;
}

}  // namespace vidq
