#include "vidq/quantizer.hpp"

#include <cmath>
#include <string>

#include "vidq/error.hpp"

namespace vidq {

void QuantizerConfig::validate() const {
  if (dim == 0) throw InvalidArgument("quantizer: feature dim must be positive");
  if (coarse_size == 0) throw InvalidArgument("quantizer: coarse codebook size must be positive");
  if (use_residual) {
    if (num_segments == 0) throw InvalidArgument("quantizer: residual mode needs K >= 1");
    if (segment_size == 0) throw InvalidArgument("quantizer: segment codebook size must be positive");
    if (dim % num_segments != 0) {
      throw InvalidArgument("quantizer: d=" + std::to_string(dim) + " is not divisible by K=" +
                            std::to_string(num_segments));
    }
  }
  if (!(beta_start > 0.0) || !(beta_end > 0.0) || beta_start > beta_end) {
    throw InvalidArgument("quantizer: need 0 < beta_start <= beta_end");
  }
}

CodebookSet::CodebookSet(Matrix coarse, std::vector<Matrix> segments)
    : coarse_(std::move(coarse)), segments_(std::move(segments)) {
  if (coarse_.rows() == 0 || coarse_.cols() == 0) {
    throw InvalidArgument("codebooks: coarse book must have at least one codeword");
  }
  if (!segments_.empty()) {
    const std::size_t k = segments_.size();
    if (dim() % k != 0) {
      throw InvalidArgument("codebooks: d=" + std::to_string(dim()) +
                            " is not divisible by K=" + std::to_string(k));
    }
    for (std::size_t s = 0; s < k; ++s) {
      if (segments_[s].rows() == 0) {
        throw InvalidArgument("codebooks: segment book " + std::to_string(s) + " is empty");
      }
      if (segments_[s].cols() != dim() / k) {
        throw InvalidArgument("codebooks: segment book " + std::to_string(s) + " has dim " +
                              std::to_string(segments_[s].cols()) + ", expected " +
                              std::to_string(dim() / k));
      }
    }
  }
}

CodebookSet CodebookSet::random(const QuantizerConfig& cfg, Rng& rng) {
  cfg.validate();
  const double stddev = 1.0 / std::sqrt(static_cast<double>(cfg.dim));
  Matrix coarse(cfg.coarse_size, cfg.dim);
  for (double& v : coarse.values()) v = rng.normal(0.0, stddev);
  std::vector<Matrix> segments;
  if (cfg.use_residual) {
    for (std::size_t k = 0; k < cfg.num_segments; ++k) {
      Matrix book(cfg.segment_size, cfg.dim / cfg.num_segments);
      for (double& v : book.values()) v = rng.normal(0.0, stddev);
      segments.push_back(std::move(book));
    }
  }
  return CodebookSet(std::move(coarse), std::move(segments));
}

CodebookSet CodebookSet::zeros_like() const {
  std::vector<Matrix> segments;
  for (const auto& s : segments_) segments.emplace_back(s.rows(), s.cols());
  return CodebookSet(Matrix(coarse_.rows(), coarse_.cols()), std::move(segments));
}

std::size_t CodebookSet::stored_reals() const {
  std::size_t total = coarse_.values().size();
  for (const auto& s : segments_) total += s.values().size();
  return total;
}

double CodebookSet::cell_count() const {
  double cells = static_cast<double>(coarse_.rows());
  for (const auto& s : segments_) cells *= static_cast<double>(s.rows());
  return cells;
}

SoftAssignResult soft_assign(std::span<const double> x, const Matrix& codewords, double beta) {
  if (codewords.rows() == 0) throw InvalidArgument("soft_assign: empty codebook");
  if (codewords.cols() != x.size()) {
    throw InvalidArgument("soft_assign: codeword dim " + std::to_string(codewords.cols()) +
                          " does not match input dim " + std::to_string(x.size()));
  }
  if (!(beta > 0.0)) throw InvalidArgument("soft_assign: beta must be positive");

  const std::size_t n = codewords.rows();
  SoftAssignResult out;
  out.distances.resize(n);
  Vector logits(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.distances[i] = std::sqrt(squared_distance(x, codewords.row(i)) + kDistanceEpsilon);
    logits[i] = -beta * out.distances[i];
  }
  require_finite(logits, "soft-assignment logits");
  out.weights = stable_softmax(logits);
  out.mapped.assign(x.size(), 0.0);
  for (std::size_t i = 0; i < n; ++i) axpy(out.weights[i], codewords.row(i), out.mapped);
  return out;
}

SoftAssignGrad soft_assign_backward(std::span<const double> x, const Matrix& codewords,
                                    double beta, const SoftAssignResult& forward,
                                    std::span<const double> upstream) {
  const std::size_t n = codewords.rows();
  const std::size_t dim = x.size();
  if (upstream.size() != dim) throw InvalidArgument("soft_assign_backward: upstream dim mismatch");

  // dL/dw_i = <g, c_i>; through the softmax dL/dlogit_i = w_i (a_i - sum_j w_j a_j).
  Vector align(n);
  double mean_align = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    align[i] = dot(upstream, codewords.row(i));
    mean_align += forward.weights[i] * align[i];
  }

  SoftAssignGrad grad{Vector(dim, 0.0), Matrix(n, dim)};
  for (std::size_t i = 0; i < n; ++i) {
    const double w = forward.weights[i];
    const double grad_logit = w * (align[i] - mean_align);
    // logit = -beta * dist, d dist / dx = (x - c) / dist.
    const double scale = -beta * grad_logit / forward.distances[i];
    auto gc = grad.grad_codewords.row(i);
    const auto c = codewords.row(i);
    for (std::size_t j = 0; j < dim; ++j) {
      const double diff = x[j] - c[j];
      grad.grad_x[j] += scale * diff;
      gc[j] = w * upstream[j] - scale * diff;
    }
  }
  return grad;
}

namespace {

void require_input_dim(std::span<const double> x, const CodebookSet& books) {
  if (x.size() != books.dim()) {
    throw InvalidArgument("quantizer: input dim " + std::to_string(x.size()) +
                          " does not match codebook dim " + std::to_string(books.dim()));
  }
}

void require_mode(const CodebookSet& books, bool use_residual) {
  if (use_residual && books.num_segments() == 0) {
    throw InvalidArgument("soft_quantize: residual mode requested but codebooks have K=0");
  }
}

}  // namespace

SoftQuantizeResult soft_quantize(std::span<const double> x, const CodebookSet& books, double beta,
                                 bool use_residual) {
  require_input_dim(x, books);
  require_mode(books, use_residual);

  SoftQuantizeResult out;
  SoftAssignResult coarse = soft_assign(x, books.coarse(), beta);
  out.coarse_weights = std::move(coarse.weights);
  out.coarse_mapped = std::move(coarse.mapped);

  if (!use_residual) {
    out.recovered = out.coarse_mapped;
    out.residual.assign(x.size(), 0.0);
    for (const auto& book : books.segments()) {
      out.segment_weights.emplace_back(book.rows(), 1.0 / static_cast<double>(book.rows()));
    }
    return out;
  }

  out.residual.resize(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) out.residual[j] = x[j] - out.coarse_mapped[j];

  out.recovered = out.coarse_mapped;
  const std::size_t seg = books.segment_dim();
  for (std::size_t k = 0; k < books.num_segments(); ++k) {
    const std::span<const double> slice(out.residual.data() + k * seg, seg);
    SoftAssignResult part = soft_assign(slice, books.segments()[k], beta);
    for (std::size_t j = 0; j < seg; ++j) out.recovered[k * seg + j] += part.mapped[j];
    out.segment_weights.push_back(std::move(part.weights));
  }
  return out;
}

SoftQuantizeGrad soft_quantize_backward(std::span<const double> x, const CodebookSet& books,
                                        double beta, bool use_residual,
                                        std::span<const double> upstream) {
  require_input_dim(x, books);
  require_mode(books, use_residual);
  if (upstream.size() != x.size()) {
    throw InvalidArgument("soft_quantize_backward: upstream dim mismatch");
  }

  SoftQuantizeGrad out{Vector(x.size(), 0.0), books.zeros_like()};
  const SoftAssignResult coarse = soft_assign(x, books.coarse(), beta);

  // recovered = xbar + concat_k q_k(x - xbar): xbar receives g - dL/dr, x receives dL/dr.
  Vector coarse_upstream(upstream.begin(), upstream.end());
  if (use_residual) {
    Vector residual(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) residual[j] = x[j] - coarse.mapped[j];
    const std::size_t seg = books.segment_dim();
    for (std::size_t k = 0; k < books.num_segments(); ++k) {
      const std::span<const double> slice(residual.data() + k * seg, seg);
      const std::span<const double> seg_upstream(upstream.data() + k * seg, seg);
      const SoftAssignResult part = soft_assign(slice, books.segments()[k], beta);
      SoftAssignGrad g = soft_assign_backward(slice, books.segments()[k], beta, part, seg_upstream);
      for (std::size_t j = 0; j < seg; ++j) {
        out.grad_x[k * seg + j] += g.grad_x[j];
        coarse_upstream[k * seg + j] -= g.grad_x[j];
      }
      out.grad_books.segments()[k] = std::move(g.grad_codewords);
    }
  }

  SoftAssignGrad cg = soft_assign_backward(x, books.coarse(), beta, coarse, coarse_upstream);
  axpy(1.0, cg.grad_x, out.grad_x);
  out.grad_books.coarse() = std::move(cg.grad_codewords);
  return out;
}

std::size_t nearest_row(std::span<const double> x, const Matrix& rows) {
  if (rows.rows() == 0) throw InvalidArgument("nearest_row: empty codebook");
  std::size_t best = 0;
  double best_dist = squared_distance(x, rows.row(0));
  for (std::size_t i = 1; i < rows.rows(); ++i) {
    const double d = squared_distance(x, rows.row(i));
    if (d < best_dist) {
      best_dist = d;
      best = i;
    }
  }
  return best;
}

VisualId hard_visual_id(std::span<const double> x, const CodebookSet& books) {
  require_input_dim(x, books);
  VisualId id;
  id.coarse = static_cast<std::uint32_t>(nearest_row(x, books.coarse()));
  if (books.num_segments() == 0) return id;

  const auto centre = books.coarse().row(id.coarse);
  Vector residual(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) residual[j] = x[j] - centre[j];
  const std::size_t seg = books.segment_dim();
  id.segments.reserve(books.num_segments());
  for (std::size_t k = 0; k < books.num_segments(); ++k) {
    const std::span<const double> slice(residual.data() + k * seg, seg);
    id.segments.push_back(static_cast<std::uint32_t>(nearest_row(slice, books.segments()[k])));
  }
  return id;
}

Vector decode_visual_id(const VisualId& id, const CodebookSet& books) {
  if (id.segments.size() != books.num_segments()) {
    throw InvalidArgument("decode_visual_id: id has " + std::to_string(id.size()) +
                          " entries, codebooks expect " + std::to_string(books.num_segments() + 1));
  }
  if (id.coarse >= books.coarse().rows()) throw InvalidArgument("decode_visual_id: coarse id out of range");
  const auto centre = books.coarse().row(id.coarse);
  Vector out(centre.begin(), centre.end());
  const std::size_t seg = books.segment_dim();
  for (std::size_t k = 0; k < books.num_segments(); ++k) {
    const Matrix& book = books.segments()[k];
    if (id.segments[k] >= book.rows()) {
      throw InvalidArgument("decode_visual_id: segment " + std::to_string(k) + " id out of range");
    }
    const auto word = book.row(id.segments[k]);
    for (std::size_t j = 0; j < seg; ++j) out[k * seg + j] += word[j];
  }
  return out;
}

double beta_at(std::size_t epoch, std::size_t total_epochs, const QuantizerConfig& cfg) {
  if (epoch >= total_epochs) {
    throw InvalidArgument("beta_at: epoch " + std::to_string(epoch) + " outside [0, " +
                          std::to_string(total_epochs) + ")");
  }
  const double span = static_cast<double>(total_epochs > 1 ? total_epochs - 1 : 1);
  return cfg.beta_start + (cfg.beta_end - cfg.beta_start) * static_cast<double>(epoch) / span;
}

}  // namespace vidq
