#include "vidq/pipeline.hpp"

#include <algorithm>

#include "vidq/error.hpp"
#include "vidq/kmeans.hpp"

namespace vidq {

PairBatch to_batch(std::span<const PairFileRecord> pairs) {
  PairBatch all;
  for (const auto& p : pairs) {
    all.image_raw.push_back(p.image_raw);
    all.text_raw.push_back(p.text_raw);
    all.pair_ids.push_back(p.pair_id);
  }
  return all;
}

QuantizerRun train_quantizer(std::span<const PairFileRecord> pairs, const QuantizerTrainOptions& opts,
                             const EpochHook& on_epoch) {
  if (pairs.empty()) throw DataError("no training pairs");
  opts.quantizer.validate();
  if (opts.two_stage && !opts.quantizer.use_residual) {
    throw InvalidArgument("two-stage baseline requires residual quantization");
  }

  TrainState state = init_train_state(pairs.front().image_raw.size(), pairs.front().text_raw.size(),
                                      opts.hidden_dim, opts.quantizer, opts.seed);
  ContrastiveOptions copts;
  copts.quantizer = opts.quantizer;
  copts.lr = opts.lr;
  copts.total_epochs = opts.epochs;
  copts.quantize = !opts.two_stage;

  const PairBatch all = to_batch(pairs);
  std::vector<PairBatch> batches = make_batches(all, opts.batch_size);
  for (std::size_t e = 0; e < opts.epochs; ++e) {
    if (opts.shuffle) batches = make_batches(all, opts.batch_size, opts.seed + e);
    state = train_epoch(std::move(state), batches, copts);
    if (on_epoch) on_epoch(state);
  }

  QuantizerRun run{{state.img_encoder, state.txt_encoder, state.books, static_cast<std::uint32_t>(state.epoch)},
                   state.loss_history};
  if (opts.two_stage) {
    run.checkpoint.books = two_stage_fit(image_features(run.checkpoint, pairs), opts.quantizer, opts.seed);
  }
  return run;
}

std::vector<Vector> image_features(const QuantizerCheckpoint& ckpt, std::span<const PairFileRecord> pairs) {
  std::vector<Vector> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(encode(ckpt.img_encoder, p.image_raw));
  return out;
}

AdVisualMap generate_visual_map(const QuantizerCheckpoint& ckpt, std::span<const PairFileRecord> pairs) {
  if (!pairs.empty() && pairs.front().image_raw.size() != ckpt.img_encoder.input_dim()) {
    throw DataError("pairs have image dim " + std::to_string(pairs.front().image_raw.size()) +
                    " but the checkpoint encoder expects " + std::to_string(ckpt.img_encoder.input_dim()));
  }
  AdVisualMap out;
  for (const auto& p : pairs) out[p.pair_id] = hard_visual_id(encode(ckpt.img_encoder, p.image_raw), ckpt.books);
  return out;
}

CodebookSet prefix_segment_books(const CodebookSet& books, std::size_t n) {
  std::vector<Matrix> segs;
  for (const auto& b : books.segments()) {
    if (n == 0 || n > b.rows()) {
      throw InvalidArgument("cannot take " + std::to_string(n) + " codewords from a book of " +
                            std::to_string(b.rows()));
    }
    Matrix m(n, b.cols());
    std::copy_n(b.values().begin(), n * b.cols(), m.values().begin());
    segs.push_back(std::move(m));
  }
  return CodebookSet(books.coarse(), std::move(segs));
}

VisualTableShape visual_shape(const CodebookSet& books) {
  VisualTableShape s;
  s.coarse_entries = books.coarse().rows();
  for (const auto& b : books.segments()) s.segment_entries.push_back(b.rows());
  return s;
}

VisualTableShape visual_shape(const AdVisualMap& map) {
  if (map.empty()) throw DataError("visual id map is empty");
  VisualTableShape s;
  s.segment_entries.assign(map.begin()->second.segments.size(), 0);
  for (const auto& [ad, id] : map) {
    s.coarse_entries = std::max<std::size_t>(s.coarse_entries, id.coarse + 1);
    for (std::size_t k = 0; k < id.segments.size(); ++k) {
      s.segment_entries[k] = std::max<std::size_t>(s.segment_entries[k], id.segments[k] + 1);
    }
  }
  return s;
}

}  // namespace vidq
