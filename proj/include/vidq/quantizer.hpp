#pragma once

#include <compare>
#include <cstdint>
#include <span>
#include <vector>

#include "vidq/numcore.hpp"

namespace vidq {

struct QuantizerConfig {
  std::size_t dim = 16;
  std::size_t num_segments = 4;     // K
  std::size_t coarse_size = 64;     // N0
  std::size_t segment_size = 256;   // N_k, shared by all segment books
  double beta_start = 1.0;
  double beta_end = 10.0;
  bool use_residual = true;

  // Throws InvalidArgument on any violated invariant.
  void validate() const;
};

// One coarse codebook over the full feature space plus K segment codebooks over
// the d/K-dimensional slices of the residual. Codewords are matrix rows. A set
// with zero segment books is a single-level quantizer.
class CodebookSet {
 public:
  CodebookSet(Matrix coarse, std::vector<Matrix> segments);

  // Gaussian init with std 1/sqrt(d).
  static CodebookSet random(const QuantizerConfig& cfg, Rng& rng);

  CodebookSet zeros_like() const;

  std::size_t dim() const { return coarse_.cols(); }
  std::size_t num_segments() const { return segments_.size(); }
  std::size_t segment_dim() const { return segments_.empty() ? 0 : dim() / segments_.size(); }

  const Matrix& coarse() const { return coarse_; }
  Matrix& coarse() { return coarse_; }
  const std::vector<Matrix>& segments() const { return segments_; }
  std::vector<Matrix>& segments() { return segments_; }

  // d*N0 + sum_k (d/K)*N_k.
  std::size_t stored_reals() const;
  // N0 * prod_k N_k, as a double because it overflows quickly.
  double cell_count() const;

  // Visits the coarse book then each segment book in order.
  template <typename Fn>
  void for_each_tensor(Fn&& fn) {
    fn(coarse_.values());
    for (auto& s : segments_) fn(s.values());
  }
  template <typename Fn>
  void for_each_tensor(Fn&& fn) const {
    fn(coarse_.values());
    for (const auto& s : segments_) fn(s.values());
  }

  friend bool operator==(const CodebookSet&, const CodebookSet&) = default;

 private:
  Matrix coarse_;
  std::vector<Matrix> segments_;
};

struct VisualId {
  std::uint32_t coarse = 0;
  std::vector<std::uint32_t> segments;

  std::size_t size() const { return segments.size() + 1; }
  friend auto operator<=>(const VisualId&, const VisualId&) = default;
};

struct SoftAssignResult {
  Vector weights;
  Vector mapped;
  Vector distances;
};

struct SoftAssignGrad {
  Vector grad_x;
  Matrix grad_codewords;
};

struct SoftQuantizeResult {
  Vector recovered;
  Vector coarse_weights;
  std::vector<Vector> segment_weights;
  Vector residual;
  Vector coarse_mapped;
};

struct SoftQuantizeGrad {
  Vector grad_x;
  CodebookSet grad_books;
};

// Added under the square root of every distance so the gradient exists at 0.
inline constexpr double kDistanceEpsilon = 1e-12;

// weights_i = softmax_i(-beta * ||x - c_i||), mapped = sum_i weights_i c_i.
SoftAssignResult soft_assign(std::span<const double> x, const Matrix& codewords, double beta);

SoftAssignGrad soft_assign_backward(std::span<const double> x, const Matrix& codewords,
                                    double beta, const SoftAssignResult& forward,
                                    std::span<const double> upstream);

SoftQuantizeResult soft_quantize(std::span<const double> x, const CodebookSet& books, double beta,
                                 bool use_residual);

// Gradient of <upstream, recovered> with respect to x and every codeword.
SoftQuantizeGrad soft_quantize_backward(std::span<const double> x, const CodebookSet& books,
                                        double beta, bool use_residual,
                                        std::span<const double> upstream);

// Nearest coarse codeword, then nearest segment codeword for each slice of the
// hard residual x - c0[id0]. Ties go to the lowest index.
VisualId hard_visual_id(std::span<const double> x, const CodebookSet& books);

// c0[id0] plus the concatenation of the selected segment codewords.
Vector decode_visual_id(const VisualId& id, const CodebookSet& books);

// Linear schedule from beta_start at epoch 0 to beta_end at the last epoch.
double beta_at(std::size_t epoch, std::size_t total_epochs, const QuantizerConfig& cfg);

// Index of the row nearest to x (squared L2), lowest index on ties.
std::size_t nearest_row(std::span<const double> x, const Matrix& rows);

}  // namespace vidq
