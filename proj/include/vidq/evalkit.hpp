#pragma once

#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vidq/ctr_model.hpp"
#include "vidq/numcore.hpp"
#include "vidq/quantizer.hpp"

namespace vidq {

// Mann-Whitney AUC: (#concordant + 0.5 #tied) / (#pos #neg), computed by
// sorting. Throws InvalidArgument unless both classes are present.
double auc(std::span<const double> scores, std::span<const int> labels);

// Mean squared L2 distance between each feature and the decode of its hard
// visual id.
double quantization_error(std::span<const Vector> features, const CodebookSet& books);

struct EvalReport {
  double auc = 0.0;
  std::optional<double> auc_new_ads;  // nullopt: cohort empty or single-class
  std::optional<double> auc_old_ads;
  std::size_t n_new = 0;
  std::size_t n_old = 0;
  double mean_quant_error = 0.0;
  bool baseline = false;
};

// Scores every record, then reports AUC overall and separately for records
// whose ad is in `new_ad_ids` and for the rest.
EvalReport cohort_report(const CtrModel& model, std::span<const ClickRecord> records,
                         const AdVisualMap& visual_map, const std::set<std::string>& new_ad_ids,
                         double mean_quant_error = 0.0);

// Ads appearing in `eval` but never in `train`.
std::set<std::string> unseen_ads(std::span<const ClickRecord> train, std::span<const ClickRecord> eval);

struct Coherence {
  double within = 0.0;  // mean cosine over pairs sharing the full visual id
  double global = 0.0;  // mean cosine over all pairs
  std::size_t within_pairs = 0;
};

// Throws InvalidArgument when no visual id is shared by two features.
Coherence same_id_coherence(std::span<const Vector> features, std::span<const VisualId> ids);

// Key/value lines for a report, in a fixed order.
std::vector<std::pair<std::string, std::string>> report_metrics(const EvalReport& report);

// Elementwise model minus baseline; both curves indexed by epoch.
std::vector<double> auc_delta_curve(std::span<const double> model_curve,
                                    std::span<const double> baseline_curve);

}  // namespace vidq
