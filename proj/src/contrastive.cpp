#include "vidq/contrastive.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "vidq/error.hpp"

namespace vidq {

ContrastiveLoss contrastive_loss(std::span<const Vector> xhat, std::span<const Vector> y) {
  const std::size_t b = xhat.size();
  if (b == 0 || y.size() != b) throw InvalidArgument("contrastive_loss: batch sizes must match and be >= 1");

  Vector xnorm(b), ynorm(b);
  for (std::size_t i = 0; i < b; ++i) {
    xnorm[i] = l2_norm(xhat[i]);
    ynorm[i] = l2_norm(y[i]);
    if (xnorm[i] == 0.0 || ynorm[i] == 0.0) {
      throw InvalidArgument("contrastive_loss: zero-norm vector at batch index " + std::to_string(i));
    }
  }

  Matrix sim(b, b);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < b; ++j) sim(i, j) = dot(xhat[i], y[j]) / (xnorm[i] * ynorm[j]);
  }

  // row_p(i, j): softmax over texts j for image i; col_p(i, j): softmax over
  // images i for text j.
  Matrix row_p(b, b), col_p(b, b);
  Vector buf(b);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < b; ++j) buf[j] = sim(i, j);
    const Vector p = stable_softmax(buf);
    for (std::size_t j = 0; j < b; ++j) row_p(i, j) = p[j];
  }
  for (std::size_t j = 0; j < b; ++j) {
    for (std::size_t i = 0; i < b; ++i) buf[i] = sim(i, j);
    const Vector p = stable_softmax(buf);
    for (std::size_t i = 0; i < b; ++i) col_p(i, j) = p[i];
  }

  ContrastiveLoss out;
  const double inv_b = 1.0 / static_cast<double>(b);
  for (std::size_t i = 0; i < b; ++i) out.loss -= inv_b * (std::log(col_p(i, i)) + std::log(row_p(i, i)));

  out.grad_xhat.assign(b, Vector(xhat[0].size(), 0.0));
  out.grad_y.assign(b, Vector(y[0].size(), 0.0));
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < b; ++j) {
      const double delta = i == j ? 1.0 : 0.0;
      const double g = inv_b * (col_p(i, j) - delta + row_p(i, j) - delta);
      if (g == 0.0) continue;
      const double inv_xy = 1.0 / (xnorm[i] * ynorm[j]);
      const double s = sim(i, j);
      auto& gx = out.grad_xhat[i];
      auto& gy = out.grad_y[j];
      const double x2 = xnorm[i] * xnorm[i];
      const double y2 = ynorm[j] * ynorm[j];
      for (std::size_t t = 0; t < gx.size(); ++t) {
        gx[t] += g * (y[j][t] * inv_xy - s * xhat[i][t] / x2);
        gy[t] += g * (xhat[i][t] * inv_xy - s * y[j][t] / y2);
      }
    }
  }
  return out;
}

BatchGrads batch_loss_and_grads(const TrainState& state, const PairBatch& batch, double beta,
                                const ContrastiveOptions& opts) {
  const std::size_t b = batch.size();
  if (b == 0 || batch.text_raw.size() != b) throw InvalidArgument("batch: image/text counts differ or empty");

  std::vector<Vector> x(b), xhat(b), y(b);
  for (std::size_t i = 0; i < b; ++i) {
    x[i] = encode(state.img_encoder, batch.image_raw[i]);
    y[i] = encode(state.txt_encoder, batch.text_raw[i]);
    require_finite(x[i], "image embedding");
    require_finite(y[i], "text embedding");
    xhat[i] = opts.quantize
                  ? soft_quantize(x[i], state.books, beta, opts.quantizer.use_residual).recovered
                  : x[i];
  }

  const ContrastiveLoss cl = contrastive_loss(xhat, y);
  BatchGrads out{cl.loss,
                 state.img_encoder.zeros_like(),
                 state.txt_encoder.zeros_like(),
                 state.books.zeros_like(),
                 {},
                 {}};
  out.grad_image_raw.resize(b);
  out.grad_text_raw.resize(b);
  for (std::size_t i = 0; i < b; ++i) {
    Vector grad_x = cl.grad_xhat[i];
    if (opts.quantize) {
      SoftQuantizeGrad qg = soft_quantize_backward(x[i], state.books, beta,
                                                   opts.quantizer.use_residual, cl.grad_xhat[i]);
      grad_x = std::move(qg.grad_x);
      const Vector flat = flatten(qg.grad_books);
      std::size_t offset = 0;
      out.books.for_each_tensor([&](std::span<double> t) {
        for (double& v : t) v += flat[offset++];
      });
    }
    out.grad_image_raw[i] =
        encode_backward_accumulate(state.img_encoder, batch.image_raw[i], grad_x, out.img_encoder);
    out.grad_text_raw[i] =
        encode_backward_accumulate(state.txt_encoder, batch.text_raw[i], cl.grad_y[i], out.txt_encoder);
  }
  return out;
}

TrainState train_epoch(TrainState state, std::span<const PairBatch> batches,
                       const ContrastiveOptions& opts) {
  if (opts.lr < 0.0) throw InvalidArgument("train_epoch: learning rate must be non-negative");
  if (batches.empty()) throw InvalidArgument("train_epoch: no batches");
  const double beta = beta_at(state.epoch, opts.total_epochs, opts.quantizer);

  double loss_sum = 0.0;
  for (const PairBatch& batch : batches) {
    BatchGrads g = batch_loss_and_grads(state, batch, beta, opts);
    if (!std::isfinite(g.loss)) throw NumericError("non-finite value detected in contrastive loss");
    loss_sum += g.loss;
    apply_sgd(state.img_encoder, g.img_encoder, opts.lr);
    apply_sgd(state.txt_encoder, g.txt_encoder, opts.lr);
    if (opts.quantize) apply_sgd(state.books, g.books, opts.lr);
  }

  require_finite(flatten(state.img_encoder), "image encoder weights");
  require_finite(flatten(state.txt_encoder), "text encoder weights");
  require_finite(flatten(state.books), "codebooks");

  state.loss_history.push_back(loss_sum / static_cast<double>(batches.size()));
  ++state.epoch;
  return state;
}

std::vector<PairBatch> make_batches(const PairBatch& all, std::size_t batch_size,
                                    std::optional<std::uint64_t> shuffle_seed) {
  if (batch_size == 0) throw InvalidArgument("make_batches: batch size must be positive");
  std::vector<std::size_t> order(all.size());
  std::iota(order.begin(), order.end(), 0);
  if (shuffle_seed) {
    Rng rng(*shuffle_seed);
    std::shuffle(order.begin(), order.end(), rng.engine());
  }
  std::vector<PairBatch> out;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    PairBatch b;
    const std::size_t end = std::min(order.size(), start + batch_size);
    for (std::size_t i = start; i < end; ++i) {
      b.image_raw.push_back(all.image_raw[order[i]]);
      b.text_raw.push_back(all.text_raw[order[i]]);
      if (!all.pair_ids.empty()) b.pair_ids.push_back(all.pair_ids[order[i]]);
    }
    out.push_back(std::move(b));
  }
  return out;
}

TrainState init_train_state(std::size_t img_raw_dim, std::size_t txt_raw_dim,
                            std::size_t hidden_dim, const QuantizerConfig& cfg,
                            std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  const std::size_t img_dims[] = {img_raw_dim, hidden_dim, cfg.dim};
  const std::size_t txt_dims[] = {txt_raw_dim, hidden_dim, cfg.dim};
  MlpEncoder img = MlpEncoder::random(img_dims, rng);
  MlpEncoder txt = MlpEncoder::random(txt_dims, rng);
  CodebookSet books = CodebookSet::random(cfg, rng);
  return TrainState{std::move(img), std::move(txt), std::move(books), 0, {}};
}

}  // namespace vidq
