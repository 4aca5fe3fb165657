#include "vidq/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>

#include "vidq/error.hpp"
#include "vidq/io.hpp"

namespace vidq {

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw InvalidArgument("auc: scores and labels differ in length");
  if (!all_finite(scores)) throw InvalidArgument("auc: non-finite score");
  std::uint64_t pos = 0;
  for (int l : labels) pos += l != 0 ? 1 : 0;
  const std::uint64_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) throw InvalidArgument("auc: need at least one positive and one negative label");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Doubled numerator keeps the half credit for ties integral.
  std::uint64_t twice_credit = 0;
  std::uint64_t neg_below = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::uint64_t p = 0, q = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] != 0 ? p : q) += 1;
      ++j;
    }
    twice_credit += 2 * p * neg_below + p * q;
    neg_below += q;
    i = j;
  }
  return static_cast<double>(twice_credit) / static_cast<double>(2 * pos * neg);
}

double quantization_error(std::span<const Vector> features, const CodebookSet& books) {
  if (features.empty()) return 0.0;
  double total = 0.0;
  for (const auto& x : features) total += squared_distance(x, decode_visual_id(hard_visual_id(x, books), books));
  return total / static_cast<double>(features.size());
}

namespace {

std::optional<double> auc_or_undefined(const std::vector<double>& scores, const std::vector<int>& labels) {
  const bool has_pos = std::any_of(labels.begin(), labels.end(), [](int l) { return l != 0; });
  const bool has_neg = std::any_of(labels.begin(), labels.end(), [](int l) { return l == 0; });
  if (!has_pos || !has_neg) return std::nullopt;
  return auc(scores, labels);
}

}  // namespace

EvalReport cohort_report(const CtrModel& model, std::span<const ClickRecord> records,
                         const AdVisualMap& visual_map, const std::set<std::string>& new_ad_ids,
                         double mean_quant_error) {
  std::vector<double> all_s, new_s, old_s;
  std::vector<int> all_l, new_l, old_l;
  for (const auto& r : records) {
    const double s = predict_logit(model.params, resolve_example(r, model, visual_map));
    all_s.push_back(s);
    all_l.push_back(r.label);
    if (new_ad_ids.contains(r.ad_id)) {
      new_s.push_back(s);
      new_l.push_back(r.label);
    } else {
      old_s.push_back(s);
      old_l.push_back(r.label);
    }
  }
  EvalReport rep;
  rep.auc = auc(all_s, all_l);
  rep.auc_new_ads = auc_or_undefined(new_s, new_l);
  rep.auc_old_ads = auc_or_undefined(old_s, old_l);
  rep.n_new = new_s.size();
  rep.n_old = old_s.size();
  rep.mean_quant_error = mean_quant_error;
  rep.baseline = !model.params.has_visual();
  return rep;
}

std::set<std::string> unseen_ads(std::span<const ClickRecord> train, std::span<const ClickRecord> eval) {
  std::set<std::string> seen;
  for (const auto& r : train) seen.insert(r.ad_id);
  std::set<std::string> out;
  for (const auto& r : eval) {
    if (!seen.contains(r.ad_id)) out.insert(r.ad_id);
  }
  return out;
}

Coherence same_id_coherence(std::span<const Vector> features, std::span<const VisualId> ids) {
  if (features.size() != ids.size()) throw InvalidArgument("same_id_coherence: features and ids differ in length");
  std::map<VisualId, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < ids.size(); ++i) groups[ids[i]].push_back(i);

  Coherence out;
  double within_sum = 0.0;
  for (const auto& [id, members] : groups) {
    for (std::size_t a = 0; a < members.size(); ++a) {
      for (std::size_t b = a + 1; b < members.size(); ++b) {
        within_sum += cosine_similarity(features[members[a]], features[members[b]]);
        ++out.within_pairs;
      }
    }
  }
  if (out.within_pairs == 0) throw InvalidArgument("same_id_coherence: no visual id is shared by two features");

  double global_sum = 0.0;
  std::size_t global_pairs = 0;
  for (std::size_t a = 0; a < features.size(); ++a) {
    for (std::size_t b = a + 1; b < features.size(); ++b) {
      global_sum += cosine_similarity(features[a], features[b]);
      ++global_pairs;
    }
  }
  out.within = within_sum / static_cast<double>(out.within_pairs);
  out.global = global_sum / static_cast<double>(global_pairs);
  return out;
}

std::vector<std::pair<std::string, std::string>> report_metrics(const EvalReport& report) {
  const auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string("undefined"); };
  return {
      {"baseline", report.baseline ? "true" : "false"},
      {"auc", format_double(report.auc)},
      {"auc_new_ads", opt(report.auc_new_ads)},
      {"auc_old_ads", opt(report.auc_old_ads)},
      {"n_new", std::to_string(report.n_new)},
      {"n_old", std::to_string(report.n_old)},
      {"n_total", std::to_string(report.n_new + report.n_old)},
      {"mean_quant_error", format_double(report.mean_quant_error)},
  };
}

std::vector<double> auc_delta_curve(std::span<const double> model_curve,
                                    std::span<const double> baseline_curve) {
  if (model_curve.size() != baseline_curve.size()) throw InvalidArgument("auc_delta_curve: curves differ in length");
  std::vector<double> out(model_curve.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = model_curve[i] - baseline_curve[i];
  return out;
}

}  // namespace vidq
