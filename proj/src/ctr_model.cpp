#include "vidq/ctr_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "vidq/error.hpp"

namespace vidq {

std::span<const double> EmbeddingTable::lookup(std::size_t index) const {
  if (index >= num_entries()) {
    throw InvalidArgument("embedding lookup: index " + std::to_string(index) + " outside [0, " +
                          std::to_string(num_entries()) + ")");
  }
  return rows.row(index);
}

std::size_t Vocabulary::add(const std::string& id) {
  auto [it, inserted] = index_.try_emplace(id, ids_.size() + 1);
  if (inserted) ids_.push_back(id);
  return it->second;
}

std::size_t Vocabulary::row(const std::string& id) const {
  const auto it = index_.find(id);
  return it == index_.end() ? kOovRow : it->second;
}

CtrModelParams CtrModelParams::zeros_like() const {
  CtrModelParams out;
  out.user_table = EmbeddingTable(user_table.num_entries(), user_table.dim());
  out.ad_table = EmbeddingTable(ad_table.num_entries(), ad_table.dim());
  if (visual0) out.visual0 = EmbeddingTable(visual0->num_entries(), visual0->dim());
  for (const auto& t : visual_segments) out.visual_segments.emplace_back(t.num_entries(), t.dim());
  out.user_tower = user_tower.zeros_like();
  out.ad_tower = ad_tower.zeros_like();
  out.head_w.assign(head_w.size(), 0.0);
  out.head_b = 0.0;
  return out;
}

void CtrModelParams::validate() const {
  user_tower.validate();
  ad_tower.validate();
  if (user_tower.input_dim() != user_table.dim()) throw InvalidArgument("ctr model: user tower input dim mismatch");
  if (ad_tower.input_dim() != ad_table.dim() + visual_dim()) {
    throw InvalidArgument("ctr model: ad tower input dim mismatch");
  }
  if (user_tower.output_dim() != ad_tower.output_dim()) throw InvalidArgument("ctr model: tower output dims differ");
  if (head_w.size() != 2 * user_tower.output_dim()) throw InvalidArgument("ctr model: head weight dim must be 2D");
  if (!visual_segments.empty()) {
    if (!visual0) throw InvalidArgument("ctr model: segment tables without a coarse visual table");
    const std::size_t k = visual_segments.size();
    if (visual_dim() % k != 0) throw InvalidArgument("ctr model: D_v not divisible by K");
    for (const auto& t : visual_segments) {
      if (t.dim() != visual_dim() / k) throw InvalidArgument("ctr model: segment table dim must be D_v/K");
    }
  }
}

namespace {

void fill_gaussian(Matrix& m, double stddev, Rng& rng) {
  for (double& v : m.values()) v = rng.normal(0.0, stddev);
}

}  // namespace

CtrModel init_ctr_model(std::span<const ClickRecord> train_records, const CtrConfig& cfg,
                        const std::optional<VisualTableShape>& visual, std::uint64_t seed) {
  CtrModel model;
  for (const auto& r : train_records) {
    model.users.add(r.user_id);
    model.ads.add(r.ad_id);
  }
  Rng rng(seed);
  auto& p = model.params;
  p.user_table = EmbeddingTable(model.users.num_rows(), cfg.user_dim);
  p.ad_table = EmbeddingTable(model.ads.num_rows(), cfg.ad_dim);
  fill_gaussian(p.user_table.rows, cfg.init_stddev, rng);
  fill_gaussian(p.ad_table.rows, cfg.init_stddev, rng);

  std::size_t ad_input = cfg.ad_dim;
  if (visual) {
    if (visual->coarse_entries == 0) throw InvalidArgument("ctr model: visual table needs N0 >= 1");
    const std::size_t k = visual->segment_entries.size();
    if (k > 0 && cfg.visual_dim % k != 0) {
      throw InvalidArgument("ctr model: D_v=" + std::to_string(cfg.visual_dim) +
                            " not divisible by K=" + std::to_string(k));
    }
    p.visual0 = EmbeddingTable(visual->coarse_entries, cfg.visual_dim);
    fill_gaussian(p.visual0->rows, cfg.init_stddev, rng);
    for (std::size_t n : visual->segment_entries) {
      EmbeddingTable t(n, cfg.visual_dim / k);
      fill_gaussian(t.rows, cfg.init_stddev, rng);
      p.visual_segments.push_back(std::move(t));
    }
    ad_input += cfg.visual_dim;
  }

  const std::size_t user_dims[] = {cfg.user_dim, cfg.tower_hidden, cfg.tower_out};
  const std::size_t ad_dims[] = {ad_input, cfg.tower_hidden, cfg.tower_out};
  p.user_tower = MlpEncoder::random(user_dims, rng);
  p.ad_tower = MlpEncoder::random(ad_dims, rng);
  p.head_w.resize(2 * cfg.tower_out);
  const double head_std = 1.0 / std::sqrt(static_cast<double>(2 * cfg.tower_out));
  for (double& w : p.head_w) w = rng.normal(0.0, head_std);
  p.head_b = 0.0;
  p.validate();
  return model;
}

Vector visual_embedding(const VisualId& ids, const CtrModelParams& params) {
  if (!params.visual0) throw InvalidArgument("visual_embedding: model has no visual tables");
  if (ids.segments.size() != params.visual_segments.size()) {
    throw InvalidArgument("visual_embedding: got " + std::to_string(ids.size()) + " ids, model expects " +
                          std::to_string(params.visual_segments.size() + 1));
  }
  const auto x = params.visual0->lookup(ids.coarse);
  Vector v(x.begin(), x.end());
  const std::size_t seg = params.visual_segments.empty() ? 0 : v.size() / params.visual_segments.size();
  for (std::size_t k = 0; k < params.visual_segments.size(); ++k) {
    const auto r = params.visual_segments[k].lookup(ids.segments[k]);
    for (std::size_t j = 0; j < seg; ++j) v[k * seg + j] += r[j];
  }
  return v;
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

namespace {

Vector ad_tower_input(const CtrModelParams& params, const CtrExample& ex) {
  const auto a = params.ad_table.lookup(ex.ad_row);
  Vector in(a.begin(), a.end());
  if (params.has_visual()) {
    if (!ex.visual) throw InvalidArgument("ctr model: visual model needs visual ids");
    const Vector v = visual_embedding(*ex.visual, params);
    in.insert(in.end(), v.begin(), v.end());
  }
  return in;
}

}  // namespace

double predict_logit(const CtrModelParams& params, const CtrExample& ex) {
  const Vector u_hat = encode(params.user_tower, params.user_table.lookup(ex.user_row));
  const Vector a_hat = encode(params.ad_tower, ad_tower_input(params, ex));
  const std::size_t d = u_hat.size();
  double z = params.head_b;
  for (std::size_t j = 0; j < d; ++j) z += params.head_w[j] * u_hat[j] + params.head_w[d + j] * a_hat[j];
  return z;
}

CtrExample resolve_example(const ClickRecord& rec, const CtrModel& model,
                           const AdVisualMap& visual_map) {
  CtrExample ex;
  ex.user_row = model.users.row(rec.user_id);
  ex.ad_row = model.ads.row(rec.ad_id);
  ex.label = static_cast<double>(rec.label);
  if (model.params.has_visual()) {
    const auto it = visual_map.find(rec.ad_id);
    if (it == visual_map.end()) throw DataError("no visual ids for ad '" + rec.ad_id + "'");
    ex.visual = it->second;
  }
  return ex;
}

double predict_ctr(const std::string& user_id, const std::string& ad_id, const CtrModel& model,
                   const AdVisualMap& visual_map) {
  const CtrExample ex = resolve_example({user_id, ad_id, 0}, model, visual_map);
  return std::clamp(sigmoid(predict_logit(model.params, ex)), 1e-12, 1.0 - 1e-12);
}

double bce_loss(double yhat, int label) {
  const double p = std::clamp(yhat, kBceClamp, 1.0 - kBceClamp);
  return label != 0 ? -std::log(p) : -std::log(1.0 - p);
}

CtrLossAndGrad ctr_batch_loss_and_grad(const CtrModelParams& params,
                                       std::span<const CtrExample> batch) {
  if (batch.empty()) throw InvalidArgument("ctr batch is empty");
  CtrLossAndGrad out{0.0, params.zeros_like()};
  auto& g = out.grads;
  const double scale = 1.0 / static_cast<double>(batch.size());
  const std::size_t d = params.user_tower.output_dim();
  const std::size_t ad_dim = params.ad_table.dim();

  for (const CtrExample& ex : batch) {
    const auto u = params.user_table.lookup(ex.user_row);
    const Vector ad_in = ad_tower_input(params, ex);
    const Vector u_hat = encode(params.user_tower, u);
    const Vector a_hat = encode(params.ad_tower, ad_in);
    double z = params.head_b;
    for (std::size_t j = 0; j < d; ++j) z += params.head_w[j] * u_hat[j] + params.head_w[d + j] * a_hat[j];
    const double yhat = sigmoid(z);
    out.loss += scale * bce_loss(yhat, ex.label != 0.0 ? 1 : 0);

    // Inside the clamp the BCE derivative w.r.t. the logit is yhat - y.
    const bool clamped = yhat < kBceClamp || yhat > 1.0 - kBceClamp;
    const double dz = clamped ? 0.0 : scale * (yhat - ex.label);
    if (dz == 0.0) continue;

    Vector g_u(d), g_a(d);
    for (std::size_t j = 0; j < d; ++j) {
      g.head_w[j] += dz * u_hat[j];
      g.head_w[d + j] += dz * a_hat[j];
      g_u[j] = dz * params.head_w[j];
      g_a[j] = dz * params.head_w[d + j];
    }
    g.head_b += dz;

    const Vector g_user = encode_backward_accumulate(params.user_tower, u, g_u, g.user_tower);
    axpy(1.0, g_user, g.user_table.rows.row(ex.user_row));
    const Vector g_in = encode_backward_accumulate(params.ad_tower, ad_in, g_a, g.ad_tower);
    axpy(1.0, std::span<const double>(g_in.data(), ad_dim), g.ad_table.rows.row(ex.ad_row));
    if (params.has_visual()) {
      const std::span<const double> g_v(g_in.data() + ad_dim, params.visual_dim());
      axpy(1.0, g_v, g.visual0->rows.row(ex.visual->coarse));
      const std::size_t k_count = params.visual_segments.size();
      for (std::size_t k = 0; k < k_count; ++k) {
        const std::size_t seg = params.visual_dim() / k_count;
        axpy(1.0, g_v.subspan(k * seg, seg), g.visual_segments[k].rows.row(ex.visual->segments[k]));
      }
    }
  }
  return out;
}

CtrModel train_ctr(std::span<const ClickRecord> records, const AdVisualMap& visual_map,
                   CtrModel model, const CtrTrainOptions& opts,
                   const std::function<void(std::size_t, const CtrModel&)>& on_epoch) {
  if (records.empty()) throw InvalidArgument("train_ctr: no records");
  if (opts.lr < 0.0) throw InvalidArgument("train_ctr: learning rate must be non-negative");
  if (opts.batch_size == 0) throw InvalidArgument("train_ctr: batch size must be positive");

  std::vector<CtrExample> examples;
  examples.reserve(records.size());
  for (const auto& r : records) examples.push_back(resolve_example(r, model, visual_map));

  Rng rng(opts.seed);
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<CtrExample> batch;
  for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng.engine());
    for (std::size_t start = 0; start < order.size(); start += opts.batch_size) {
      batch.clear();
      const std::size_t end = std::min(order.size(), start + opts.batch_size);
      for (std::size_t i = start; i < end; ++i) batch.push_back(examples[order[i]]);
      const CtrLossAndGrad lg = ctr_batch_loss_and_grad(model.params, batch);
      if (!std::isfinite(lg.loss)) throw NumericError("non-finite value detected in ctr loss");
      apply_sgd(model.params, lg.grads, opts.lr);
    }
    require_finite(flatten(model.params), "ctr model parameters");
    if (on_epoch) on_epoch(epoch, model);
  }
  return model;
}

}  // namespace vidq
