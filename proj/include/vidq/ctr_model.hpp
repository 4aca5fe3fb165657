#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "vidq/encoder.hpp"
#include "vidq/numcore.hpp"
#include "vidq/quantizer.hpp"

namespace vidq {

struct ClickRecord {
  std::string user_id;
  std::string ad_id;
  int label = 0;

  friend bool operator==(const ClickRecord&, const ClickRecord&) = default;
};

using AdVisualMap = std::map<std::string, VisualId>;

struct EmbeddingTable {
  Matrix rows;

  EmbeddingTable() = default;
  EmbeddingTable(std::size_t num_entries, std::size_t dim) : rows(num_entries, dim) {}

  std::size_t num_entries() const { return rows.rows(); }
  std::size_t dim() const { return rows.cols(); }
  // Throws InvalidArgument when index is out of range.
  std::span<const double> lookup(std::size_t index) const;

  friend bool operator==(const EmbeddingTable&, const EmbeddingTable&) = default;
};

// String id -> table row. Row 0 is reserved for ids never seen in training.
class Vocabulary {
 public:
  static constexpr std::size_t kOovRow = 0;

  // Returns the existing row or assigns the next one.
  std::size_t add(const std::string& id);
  std::size_t row(const std::string& id) const;
  std::size_t num_rows() const { return ids_.size() + 1; }
  // Ids in row order, starting at row 1.
  const std::vector<std::string>& ids() const { return ids_; }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.ids_ == b.ids_; }

 private:
  std::vector<std::string> ids_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct CtrConfig {
  std::size_t user_dim = 16;
  std::size_t ad_dim = 16;
  std::size_t visual_dim = 16;    // D_v
  std::size_t tower_hidden = 16;
  std::size_t tower_out = 16;     // D
  double init_stddev = 0.01;
};

// Numeric parameters. A model without visual tables is the behavior-ID-only
// baseline. With zero segment tables the visual embedding is the coarse row.
struct CtrModelParams {
  EmbeddingTable user_table;
  EmbeddingTable ad_table;
  std::optional<EmbeddingTable> visual0;
  std::vector<EmbeddingTable> visual_segments;
  MlpEncoder user_tower;
  MlpEncoder ad_tower;
  Vector head_w;
  double head_b = 0.0;

  bool has_visual() const { return visual0.has_value(); }
  std::size_t visual_dim() const { return visual0 ? visual0->dim() : 0; }
  CtrModelParams zeros_like() const;
  void validate() const;

  template <typename Fn>
  void for_each_tensor(Fn&& fn) {
    fn(user_table.rows.values());
    fn(ad_table.rows.values());
    if (visual0) fn(visual0->rows.values());
    for (auto& t : visual_segments) fn(t.rows.values());
    user_tower.for_each_tensor(fn);
    ad_tower.for_each_tensor(fn);
    fn(std::span<double>(head_w));
    fn(std::span<double>(&head_b, 1));
  }
  template <typename Fn>
  void for_each_tensor(Fn&& fn) const {
    fn(user_table.rows.values());
    fn(ad_table.rows.values());
    if (visual0) fn(visual0->rows.values());
    for (const auto& t : visual_segments) fn(t.rows.values());
    user_tower.for_each_tensor(fn);
    ad_tower.for_each_tensor(fn);
    fn(std::span<const double>(head_w));
    fn(std::span<const double>(&head_b, 1));
  }

  friend bool operator==(const CtrModelParams&, const CtrModelParams&) = default;
};

struct CtrModel {
  Vocabulary users;
  Vocabulary ads;
  CtrModelParams params;

  friend bool operator==(const CtrModel&, const CtrModel&) = default;
};

// Shape of the visual tables: N0 and one N_k per segment. nullopt builds the
// ID-only baseline.
struct VisualTableShape {
  std::size_t coarse_entries = 0;
  std::vector<std::size_t> segment_entries;
};

// Builds vocabularies from the training records (first-appearance order) and
// draws Gaussian parameters.
CtrModel init_ctr_model(std::span<const ClickRecord> train_records, const CtrConfig& cfg,
                        const std::optional<VisualTableShape>& visual, std::uint64_t seed);

// x = visual0[id0], r = concat_k seg_k[id_k], v = x + r.
Vector visual_embedding(const VisualId& ids, const CtrModelParams& params);

// A record resolved to table rows.
struct CtrExample {
  std::size_t user_row = 0;
  std::size_t ad_row = 0;
  std::optional<VisualId> visual;
  double label = 0.0;
};

double sigmoid(double z);

// Logit [u_hat, a_hat] . w + b for resolved rows.
double predict_logit(const CtrModelParams& params, const CtrExample& ex);

// Unknown users/ads fall back to the OOV row; a visual model throws DataError
// when the ad has no entry in the visual map. Output is clamped into
// [1e-12, 1 - 1e-12].
double predict_ctr(const std::string& user_id, const std::string& ad_id, const CtrModel& model,
                   const AdVisualMap& visual_map);

inline constexpr double kBceClamp = 1e-7;

// -[y log yhat + (1 - y) log(1 - yhat)] with yhat clamped to [1e-7, 1 - 1e-7].
double bce_loss(double yhat, int label);

struct CtrLossAndGrad {
  double loss = 0.0;  // mean BCE over the batch
  CtrModelParams grads;
};

CtrLossAndGrad ctr_batch_loss_and_grad(const CtrModelParams& params,
                                       std::span<const CtrExample> batch);

CtrExample resolve_example(const ClickRecord& rec, const CtrModel& model,
                           const AdVisualMap& visual_map);

struct CtrTrainOptions {
  std::size_t epochs = 20;
  double lr = 0.05;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
};

// Minibatch SGD on mean BCE. Records are shuffled per epoch from `seed`.
// `on_epoch`, when set, is called after every epoch with the epoch index.
CtrModel train_ctr(std::span<const ClickRecord> records, const AdVisualMap& visual_map,
                   CtrModel model, const CtrTrainOptions& opts,
                   const std::function<void(std::size_t, const CtrModel&)>& on_epoch = {});

}  // namespace vidq
