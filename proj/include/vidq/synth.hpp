#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "vidq/ctr_model.hpp"
#include "vidq/io.hpp"
#include "vidq/numcore.hpp"

namespace vidq {

// Planted-structure corpus. Every pair belongs to one of G clusters; its image
// and text vectors are two fixed random linear views of a shared latent point
// near the cluster center. Ads are the first num_ads pairs, and click
// probability depends on the ad's cluster plus an "appeal" score read off
// the pair's offset from its center, so visual content carries signal at
// both coarse and fine scale.
struct SynthConfig {
  std::size_t num_clusters = 4;
  std::size_t latent_dim = 16;
  std::size_t d_img_raw = 32;
  std::size_t d_txt_raw = 32;
  std::size_t num_pairs = 400;
  std::size_t num_users = 500;
  std::size_t num_ads = 400;
  std::size_t num_clicks = 50000;
  // Spread of each pair's latent point around its cluster center.
  double noise_sigma = 0.7;
  // Independent noise on each view, as a multiple of noise_sigma.
  double view_noise_ratio = 0.3;
  double cold_start_fraction = 0.1;
  // Share of old-ad clicks held out for evaluation.
  double eval_fraction = 0.2;
  // Per-cluster popularity spread and per-user deviation from it.
  double cluster_effect = 2.0;
  double user_affinity_sigma = 0.5;
  double user_bias_sigma = 1.0;
  // Weight of the within-cluster appeal score (a unit-variance projection of
  // the latent offset) in the click logit.
  double appeal_effect = 1.0;
  // Added to every click logit.
  double logit_offset = 0.0;
  std::uint64_t seed = 7;

  void validate() const;
};

struct SynthPair {
  PairFileRecord record;
  std::size_t cluster = 0;
  double appeal = 0.0;
};

std::vector<SynthPair> generate_pairs(const SynthConfig& cfg);

struct ClickData {
  std::vector<ClickRecord> train;
  std::vector<ClickRecord> eval;
  std::set<std::string> new_ad_ids;
};

// Ads missing from appeal get zero appeal.
ClickData generate_clicks(const SynthConfig& cfg, const std::map<std::string, std::size_t>& ad_cluster,
                          const std::map<std::string, double>& appeal = {});
// Ads are the first num_ads pairs.
ClickData generate_clicks(const SynthConfig& cfg, const std::vector<SynthPair>& pairs);

// Ad -> cluster map for the first num_ads pairs.
std::map<std::string, std::size_t> ad_clusters(const SynthConfig& cfg, const std::vector<SynthPair>& pairs);
std::map<std::string, double> ad_appeal(const SynthConfig& cfg, const std::vector<SynthPair>& pairs);

}  // namespace vidq
