#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vidq/encoder.hpp"
#include "vidq/numcore.hpp"
#include "vidq/quantizer.hpp"

namespace vidq {

// Pair i is the only positive for image i; every other text in the batch is a
// negative.
struct PairBatch {
  std::vector<Vector> image_raw;
  std::vector<Vector> text_raw;
  std::vector<std::string> pair_ids;

  std::size_t size() const { return image_raw.size(); }
};

struct TrainState {
  MlpEncoder img_encoder;
  MlpEncoder txt_encoder;
  CodebookSet books;
  std::size_t epoch = 0;
  std::vector<double> loss_history;
};

struct ContrastiveOptions {
  QuantizerConfig quantizer;
  double lr = 0.05;
  std::size_t total_epochs = 30;
  // false trains the encoders on raw features (first stage of the two-stage
  // baseline); codebooks are left untouched.
  bool quantize = true;
};

struct ContrastiveLoss {
  double loss = 0.0;
  std::vector<Vector> grad_xhat;
  std::vector<Vector> grad_y;
};

// Symmetric in-batch loss over cosine similarities S_ij = sim(xhat_i, y_j):
//   -1/B sum_i [ log softmax_j(S_ji)|_{j=i} + log softmax_j(S_ij)|_{j=i} ]
ContrastiveLoss contrastive_loss(std::span<const Vector> xhat, std::span<const Vector> y);

struct BatchGrads {
  double loss = 0.0;
  MlpEncoder img_encoder;
  MlpEncoder txt_encoder;
  CodebookSet books;
  std::vector<Vector> grad_image_raw;
  std::vector<Vector> grad_text_raw;
};

// Forward and backward through encoders, quantizer and loss for one batch.
BatchGrads batch_loss_and_grads(const TrainState& state, const PairBatch& batch, double beta,
                                const ContrastiveOptions& opts);

// One pass over `batches` with beta = beta_at(state.epoch). Appends the mean
// batch loss to loss_history and increments epoch. Throws NumericError naming
// the offending tensor if anything becomes non-finite.
TrainState train_epoch(TrainState state, std::span<const PairBatch> batches,
                       const ContrastiveOptions& opts);

// Splits pairs into consecutive batches of `batch_size` (last one may be
// short). With a shuffle seed the order is permuted first.
std::vector<PairBatch> make_batches(const PairBatch& all, std::size_t batch_size,
                                    std::optional<std::uint64_t> shuffle_seed = std::nullopt);

TrainState init_train_state(std::size_t img_raw_dim, std::size_t txt_raw_dim,
                            std::size_t hidden_dim, const QuantizerConfig& cfg,
                            std::uint64_t seed);

}  // namespace vidq
