#include "vidq/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "vidq/error.hpp"

namespace vidq {

void SynthConfig::validate() const {
  if (num_clusters == 0 || latent_dim == 0 || d_img_raw == 0 || d_txt_raw == 0 || num_pairs == 0 ||
      num_users == 0 || num_ads == 0 || num_clicks == 0) {
    throw InvalidArgument("synth: all counts must be positive");
  }
  if (num_ads > num_pairs) throw InvalidArgument("synth: num_ads cannot exceed num_pairs");
  if (!(noise_sigma >= 0.0)) throw InvalidArgument("synth: noise_sigma must be >= 0");
  if (!(view_noise_ratio >= 0.0)) throw InvalidArgument("synth: view_noise_ratio must be >= 0");
  if (!(cold_start_fraction >= 0.0 && cold_start_fraction < 1.0)) {
    throw InvalidArgument("synth: cold_start_fraction must be in [0, 1)");
  }
  if (!(eval_fraction >= 0.0 && eval_fraction < 1.0)) throw InvalidArgument("synth: eval_fraction must be in [0, 1)");
}

namespace {

std::string numbered(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%05zu", prefix, i);
  return buf;
}

Matrix gaussian_matrix(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
  Matrix m(rows, cols);
  for (double& v : m.values()) v = rng.normal(0.0, stddev);
  return m;
}

Vector noisy_view(const Matrix& map, const Vector& latent, double sigma, Rng& rng) {
  Vector v = matvec(map, latent);
  for (double& x : v) x += sigma * rng.normal();
  return v;
}

}  // namespace

std::vector<SynthPair> generate_pairs(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const Matrix centers = gaussian_matrix(cfg.num_clusters, cfg.latent_dim, 1.0, rng);
  const double map_std = 1.0 / std::sqrt(static_cast<double>(cfg.latent_dim));
  const Matrix img_map = gaussian_matrix(cfg.d_img_raw, cfg.latent_dim, map_std, rng);
  const Matrix txt_map = gaussian_matrix(cfg.d_txt_raw, cfg.latent_dim, map_std, rng);
  Vector appeal_dir(cfg.latent_dim);
  for (double& v : appeal_dir) v = rng.normal();
  const double dir_norm = l2_norm(appeal_dir);
  for (double& v : appeal_dir) v /= dir_norm;

  std::vector<SynthPair> out;
  out.reserve(cfg.num_pairs);
  for (std::size_t i = 0; i < cfg.num_pairs; ++i) {
    const std::size_t cluster = rng.uniform_index(cfg.num_clusters);
    const auto c = centers.row(cluster);
    Vector offset(cfg.latent_dim);
    for (double& v : offset) v = rng.normal();
    Vector latent(c.begin(), c.end());
    axpy(cfg.noise_sigma, offset, latent);
    SynthPair p;
    p.cluster = cluster;
    p.appeal = dot(appeal_dir, offset);
    p.record.pair_id = numbered("ad", i);
    const double view_sigma = cfg.noise_sigma * cfg.view_noise_ratio;
    p.record.image_raw = noisy_view(img_map, latent, view_sigma, rng);
    p.record.text_raw = noisy_view(txt_map, latent, view_sigma, rng);
    out.push_back(std::move(p));
  }
  return out;
}

std::map<std::string, std::size_t> ad_clusters(const SynthConfig& cfg, const std::vector<SynthPair>& pairs) {
  std::map<std::string, std::size_t> out;
  for (std::size_t i = 0; i < std::min(cfg.num_ads, pairs.size()); ++i) out[pairs[i].record.pair_id] = pairs[i].cluster;
  return out;
}

std::map<std::string, double> ad_appeal(const SynthConfig& cfg, const std::vector<SynthPair>& pairs) {
  std::map<std::string, double> out;
  for (std::size_t i = 0; i < std::min(cfg.num_ads, pairs.size()); ++i) out[pairs[i].record.pair_id] = pairs[i].appeal;
  return out;
}

ClickData generate_clicks(const SynthConfig& cfg, const std::vector<SynthPair>& pairs) {
  return generate_clicks(cfg, ad_clusters(cfg, pairs), ad_appeal(cfg, pairs));
}

ClickData generate_clicks(const SynthConfig& cfg, const std::map<std::string, std::size_t>& ad_cluster,
                          const std::map<std::string, double>& appeal) {
  cfg.validate();
  if (ad_cluster.empty()) throw InvalidArgument("synth: no ads to click on");
  // Separate stream from generate_pairs so the two can be regenerated independently.
  Rng rng(cfg.seed * 0x9E3779B97F4A7C15ull + 0x632BE59BD9B4E019ull);

  Vector popularity(cfg.num_clusters);
  for (double& p : popularity) p = cfg.cluster_effect * rng.normal();
  Matrix affinity(cfg.num_users, cfg.num_clusters);
  Vector user_bias(cfg.num_users);
  for (std::size_t u = 0; u < cfg.num_users; ++u) {
    for (std::size_t g = 0; g < cfg.num_clusters; ++g) {
      affinity(u, g) = popularity[g] + cfg.user_affinity_sigma * rng.normal();
    }
    user_bias[u] = cfg.user_bias_sigma * rng.normal();
  }

  std::vector<std::pair<std::string, std::size_t>> ads(ad_cluster.begin(), ad_cluster.end());
  Vector ad_shift(ads.size(), 0.0);
  for (std::size_t i = 0; i < ads.size(); ++i) {
    const auto& [id, g] = ads[i];
    if (g >= cfg.num_clusters) throw InvalidArgument("synth: ad '" + id + "' has cluster out of range");
    if (auto it = appeal.find(id); it != appeal.end()) ad_shift[i] = cfg.appeal_effect * it->second;
  }

  ClickData data;
  std::vector<std::size_t> order(ads.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng.engine());
  const auto n_new = static_cast<std::size_t>(std::llround(cfg.cold_start_fraction * static_cast<double>(ads.size())));
  std::vector<bool> is_new(ads.size(), false);
  for (std::size_t i = 0; i < std::min(n_new, ads.size()); ++i) {
    is_new[order[i]] = true;
    data.new_ad_ids.insert(ads[order[i]].first);
  }

  for (std::size_t c = 0; c < cfg.num_clicks; ++c) {
    const std::size_t u = rng.uniform_index(cfg.num_users);
    const std::size_t a = rng.uniform_index(ads.size());
    const double p = sigmoid(affinity(u, ads[a].second) + ad_shift[a] + user_bias[u] + cfg.logit_offset);
    ClickRecord rec{numbered("u", u), ads[a].first, rng.uniform() < p ? 1 : 0};
    const bool to_eval = is_new[a] || rng.uniform() < cfg.eval_fraction;
    (to_eval ? data.eval : data.train).push_back(std::move(rec));
  }
  return data;
}

}  // namespace vidq
