#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "vidq/contrastive.hpp"
#include "vidq/ctr_model.hpp"
#include "vidq/evalkit.hpp"
#include "vidq/io.hpp"
#include "vidq/quantizer.hpp"

namespace vidq {

struct QuantizerTrainOptions {
  QuantizerConfig quantizer;
  std::size_t hidden_dim = 64;
  std::size_t epochs = 30;
  double lr = 0.05;
  std::size_t batch_size = 2;
  std::uint64_t seed = 7;
  // Reshuffle pairs every epoch with seed + epoch when set.
  bool shuffle = false;
  // Contrastive training without quantization, then k-means codebooks.
  bool two_stage = false;
};

struct QuantizerRun {
  QuantizerCheckpoint checkpoint;
  std::vector<double> loss_history;
};

PairBatch to_batch(std::span<const PairFileRecord> pairs);

// Called after each epoch with the state so far (checkpointing hook).
using EpochHook = std::function<void(const TrainState&)>;

QuantizerRun train_quantizer(std::span<const PairFileRecord> pairs, const QuantizerTrainOptions& opts,
                             const EpochHook& on_epoch = {});

std::vector<Vector> image_features(const QuantizerCheckpoint& ckpt, std::span<const PairFileRecord> pairs);

// Hard visual ids keyed by pair id.
AdVisualMap generate_visual_map(const QuantizerCheckpoint& ckpt, std::span<const PairFileRecord> pairs);

// Keeps the first n codewords of every segment book. The result's books are
// subsets of the input's, so its quantization error can only be larger.
CodebookSet prefix_segment_books(const CodebookSet& books, std::size_t n);

VisualTableShape visual_shape(const CodebookSet& books);
// Inferred from the widest ids in the map (max id + 1 per position).
VisualTableShape visual_shape(const AdVisualMap& map);

}  // namespace vidq
