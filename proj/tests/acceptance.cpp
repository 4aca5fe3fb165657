// Acceptance suite: one PASS/FAIL line per criterion. Exit status is nonzero
// when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "vidq/cli.hpp"
#include "vidq/contrastive.hpp"
#include "vidq/ctr_model.hpp"
#include "vidq/encoder.hpp"
#include "vidq/error.hpp"
#include "vidq/evalkit.hpp"
#include "vidq/io.hpp"
#include "vidq/kmeans.hpp"
#include "vidq/pipeline.hpp"
#include "vidq/quantizer.hpp"
#include "vidq/synth.hpp"

using namespace vidq;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kFrozenSeed = 7;
const std::vector<std::uint64_t> kSeeds{7, 8, 9, 10, 11};

int g_failures = 0;

void report(const char* id, bool pass, const std::string& detail) {
  std::printf("%s %s %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Vector concat(const std::vector<Vector>& vs) {
  Vector out;
  for (const auto& v : vs) out.insert(out.end(), v.begin(), v.end());
  return out;
}

std::vector<Vector> split(std::span<const double> flat, std::size_t n, std::size_t d) {
  std::vector<Vector> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i].assign(flat.begin() + i * d, flat.begin() + (i + 1) * d);
  return out;
}

std::vector<PairFileRecord> records_of(const std::vector<SynthPair>& pairs) {
  std::vector<PairFileRecord> out;
  for (const auto& p : pairs) out.push_back(p.record);
  return out;
}

// ---------------------------------------------------------------------------

void ac1_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(1);
  double worst = 0.0;
  auto track = [&](const GradCheckReport& r) { worst = std::max(worst, r.max_rel_error); };

  // soft_assign
  {
    const Matrix c = oracle::random_matrix(rng, 5, 4);
    const Vector x = oracle::random_vector(rng, 4);
    const Vector g = oracle::random_vector(rng, 4);
    const double beta = 1.5;
    const auto grad = soft_assign_backward(x, c, beta, soft_assign(x, c, beta), g);
    Vector params = x;
    params.insert(params.end(), c.values().begin(), c.values().end());
    Vector analytic = grad.grad_x;
    analytic.insert(analytic.end(), grad.grad_codewords.values().begin(), grad.grad_codewords.values().end());
    track(finite_diff_check(
        [&](std::span<const double> p) {
          return dot(g, soft_assign(p.first(4), Matrix(5, 4, Vector(p.begin() + 4, p.end())), beta).mapped);
        },
        params, analytic, 1e-5));
  }
  // soft_quantize, K=2, d=4
  for (bool residual : {true, false}) {
    const CodebookSet books =
        residual ? CodebookSet(oracle::random_matrix(rng, 3, 4),
                               {oracle::random_matrix(rng, 3, 2), oracle::random_matrix(rng, 3, 2)})
                 : CodebookSet(oracle::random_matrix(rng, 3, 4), {});
    const Vector x = oracle::random_vector(rng, 4);
    const Vector g = oracle::random_vector(rng, 4);
    const double beta = 2.0;
    const auto grad = soft_quantize_backward(x, books, beta, residual, g);
    Vector params = x;
    const Vector fb = flatten(books);
    params.insert(params.end(), fb.begin(), fb.end());
    Vector analytic = grad.grad_x;
    const Vector gb = flatten(grad.grad_books);
    analytic.insert(analytic.end(), gb.begin(), gb.end());
    track(finite_diff_check(
        [&](std::span<const double> p) {
          CodebookSet b = books;
          assign_flat(b, p.subspan(4));
          return dot(g, soft_quantize(p.first(4), b, beta, residual).recovered);
        },
        params, analytic, 1e-5));
  }
  // contrastive_loss, B=3
  {
    std::vector<Vector> x, y;
    for (int i = 0; i < 3; ++i) {
      x.push_back(oracle::random_vector(rng, 5));
      y.push_back(oracle::random_vector(rng, 5));
    }
    const auto l = contrastive_loss(x, y);
    Vector params = concat(x);
    const Vector fy = concat(y);
    params.insert(params.end(), fy.begin(), fy.end());
    Vector analytic = concat(l.grad_xhat);
    const Vector gy = concat(l.grad_y);
    analytic.insert(analytic.end(), gy.begin(), gy.end());
    track(finite_diff_check(
        [&](std::span<const double> p) {
          return contrastive_loss(split(p.first(15), 3, 5), split(p.subspan(15), 3, 5)).loss;
        },
        params, analytic, 1e-5));
  }
  // encoder layers
  {
    const std::vector<std::size_t> dims{4, 6, 3};
    MlpEncoder e = MlpEncoder::random(dims, rng);
    for (auto& layer : e.layers) {
      for (double& b : layer.bias) b = rng.normal(0.0, 0.3);
    }
    const Vector raw = oracle::random_vector(rng, 4);
    const Vector up = oracle::random_vector(rng, 3);
    const auto g = encode_backward(e, raw, up);
    Vector params = raw;
    const Vector fe = flatten(e);
    params.insert(params.end(), fe.begin(), fe.end());
    Vector analytic = g.grad_raw;
    const Vector ge = flatten(g.grad_params);
    analytic.insert(analytic.end(), ge.begin(), ge.end());
    track(finite_diff_check(
        [&](std::span<const double> p) {
          MlpEncoder q = e;
          assign_flat(q, p.subspan(4));
          return dot(up, encode(q, p.first(4)));
        },
        params, analytic, 1e-5));
  }
  // full CTR objective on a tiny model
  {
    const std::vector<ClickRecord> recs{{"u1", "a1", 1}, {"u2", "a1", 0}, {"u1", "a2", 0}, {"u3", "a2", 1}};
    const AdVisualMap map{{"a1", {0, {1, 0}}}, {"a2", {1, {0, 1}}}, {"a3", {1, {1, 1}}}};
    CtrModel m = init_ctr_model(recs, CtrConfig{2, 2, 2, 3, 2, 0.5}, VisualTableShape{2, {2, 2}}, 3);
    m.params.head_b = 0.2;
    std::vector<CtrExample> batch;
    for (const auto& r : recs) batch.push_back(resolve_example(r, m, map));
    batch.push_back(resolve_example({"u9", "a3", 1}, m, map));
    const auto lg = ctr_batch_loss_and_grad(m.params, batch);
    track(finite_diff_check(
        [&](std::span<const double> p) {
          CtrModelParams q = m.params;
          assign_flat(q, p);
          return ctr_batch_loss_and_grad(q, batch).loss;
        },
        flatten(m.params), flatten(lg.grads), 1e-5));
  }
  const double secs = seconds_since(t0);
  report("AC1", worst < 1e-4 && secs < 30.0,
         fmt("gradient checks: worst max_rel_error %.3g (need < 1e-4), %.2f s (need < 30 s)", worst, secs));
}

// ---------------------------------------------------------------------------

void ac2_soft_to_hard() {
  Rng rng(2);
  int instances = 0, close = 0, monotone = 0;
  double worst_ratio = 0.0;
  while (instances < 500) {
    const Matrix c = oracle::random_matrix(rng, 8, 4);
    const Vector x = oracle::random_vector(rng, 4);
    const std::size_t j = oracle::argmin_row(x, c);
    double second = INFINITY;
    for (std::size_t i = 0; i < c.rows(); ++i) {
      if (i != j) second = std::min(second, oracle::l2(x, c.row(i)));
    }
    // Instances whose nearest neighbor wins by a visible margin.
    if (second - oracle::l2(x, c.row(j)) < 1e-2) continue;
    ++instances;
    double prev = INFINITY;
    bool mono = true;
    double last = 0.0;
    for (double beta : {10.0, 100.0, 1000.0}) {
      last = oracle::l2(soft_assign(x, c, beta).mapped, c.row(j));
      mono = mono && last <= prev;
      prev = last;
    }
    const double ratio = last / l2_norm(x);
    worst_ratio = std::max(worst_ratio, ratio);
    close += ratio < 1e-3 ? 1 : 0;
    monotone += mono ? 1 : 0;
  }
  report("AC2", close == 500 && monotone == 500,
         fmt("soft->hard: %d/500 within 1e-3*|x| at beta=1000 (worst %.3g), %d/500 nonincreasing over beta", close,
             worst_ratio, monotone));
}

// ---------------------------------------------------------------------------

void ac3_oracles() {
  Rng rng(3);
  int auc_ok = 0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 2 + rng.uniform_index(499);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = std::round(rng.normal() * 3.0) / 3.0;
      y[i] = rng.uniform() < 0.4 ? 1 : 0;
    }
    y[0] = 1;
    y[1] = 0;
    auc_ok += auc(s, y) == oracle::pairwise_auc(s, y) ? 1 : 0;
  }
  int id_ok = 0;
  for (int t = 0; t < 1000; ++t) {
    const CodebookSet books(oracle::random_matrix(rng, 6, 4),
                            {oracle::random_matrix(rng, 5, 2), oracle::random_matrix(rng, 5, 2)});
    const Vector x = oracle::random_vector(rng, 4);
    id_ok += hard_visual_id(x, books) == oracle::enumerate_visual_id(x, books) ? 1 : 0;
  }
  const std::vector<Vector> pts{{0}, {1}, {10}, {11}};
  const double inertia = kmeans(pts, 2, 100, kFrozenSeed).inertia;
  report("AC3", auc_ok == 100 && id_ok == 1000 && inertia == 1.0,
         fmt("oracles: auc exact %d/100, hard id %d/1000, kmeans fixture inertia %.17g", auc_ok, id_ok, inertia));
}

// ---------------------------------------------------------------------------

struct Gap {
  bool defined = false;
  double within = 0.0;
  double global = 0.0;
  double gap() const { return within - global; }
};

Gap coherence_gap(const std::vector<PairFileRecord>& recs, const AdVisualMap& map) {
  std::vector<Vector> feats;
  std::vector<VisualId> ids;
  for (const auto& r : recs) {
    feats.push_back(r.image_raw);
    ids.push_back(map.at(r.pair_id));
  }
  try {
    const Coherence c = same_id_coherence(feats, ids);
    return {true, c.within, c.global};
  } catch (const InvalidArgument&) {
    return {};
  }
}

std::string gap_str(const Gap& g) { return g.defined ? fmt("%+.4f", g.gap()) : std::string("undefined"); }

// Default quantizer on the frozen-seed corpus; reused by the monotonicity check.
std::optional<QuantizerRun> g_frozen_run;
std::vector<PairFileRecord> g_frozen_pairs;

void ac4_contrastive() {
  const auto t0 = std::chrono::steady_clock::now();
  SynthConfig sc;
  sc.seed = kFrozenSeed;
  g_frozen_pairs = records_of(generate_pairs(sc));
  QuantizerTrainOptions o;
  o.seed = kFrozenSeed;
  g_frozen_run = train_quantizer(g_frozen_pairs, o);
  const auto& h = g_frozen_run->loss_history;
  const double ratio = h.back() / h.front();
  const Gap g = coherence_gap(g_frozen_pairs, generate_visual_map(g_frozen_run->checkpoint, g_frozen_pairs));
  const double secs = seconds_since(t0);
  report("AC4", h.size() == 30 && ratio < 0.5 && g.defined && g.within > g.global && secs < 300.0,
         fmt("contrastive training: %zu epochs, loss %.4f -> %.4f (ratio %.3f, need < 0.5); coherence within %.4f "
             "vs global %.4f; %.1f s",
             h.size(), h.front(), h.back(), ratio, g.within, g.global, secs));
}

// ---------------------------------------------------------------------------

struct SeedResult {
  EvalReport baseline;
  EvalReport residual;
  EvalReport no_residual;
  Gap gap_e2e;
  Gap gap_two_stage;
};

SeedResult run_seed(std::uint64_t seed) {
  SynthConfig sc;
  sc.seed = seed;
  const auto pairs = generate_pairs(sc);
  const auto recs = records_of(pairs);
  const ClickData clicks = generate_clicks(sc, pairs);
  CtrTrainOptions to;
  to.seed = seed;
  const CtrConfig cc;

  SeedResult out;
  const CtrModel base = train_ctr(clicks.train, {}, init_ctr_model(clicks.train, cc, std::nullopt, seed), to);
  out.baseline = cohort_report(base, clicks.eval, {}, clicks.new_ad_ids);

  auto visual = [&](const QuantizerTrainOptions& o, Gap* gap) {
    const QuantizerRun run = train_quantizer(recs, o);
    const AdVisualMap map = generate_visual_map(run.checkpoint, recs);
    if (gap) *gap = coherence_gap(recs, map);
    const CtrModel m =
        train_ctr(clicks.train, map, init_ctr_model(clicks.train, cc, visual_shape(run.checkpoint.books), seed), to);
    return cohort_report(m, clicks.eval, map, clicks.new_ad_ids);
  };
  QuantizerTrainOptions o;
  o.seed = seed;
  out.residual = visual(o, &out.gap_e2e);
  QuantizerTrainOptions nr = o;
  nr.quantizer.use_residual = false;
  out.no_residual = visual(nr, nullptr);
  QuantizerTrainOptions ts = o;
  ts.two_stage = true;
  const QuantizerRun two = train_quantizer(recs, ts);
  out.gap_two_stage = coherence_gap(recs, generate_visual_map(two.checkpoint, recs));
  return out;
}

void ac5_to_ac7() {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<SeedResult> rs;
  for (auto s : kSeeds) rs.push_back(run_seed(s));
  const double secs = seconds_since(t0);

  int lift = 0, residual_wins = 0, e2e_wins = 0;
  std::string d5, d6, d7;
  for (std::size_t i = 0; i < rs.size(); ++i) {
    const auto& r = rs[i];
    const double d_all = r.residual.auc - r.baseline.auc;
    const double d_new = r.residual.auc_new_ads.value_or(NAN) - r.baseline.auc_new_ads.value_or(NAN);
    const double d_old = r.residual.auc_old_ads.value_or(NAN) - r.baseline.auc_old_ads.value_or(NAN);
    const bool ok5 = d_all > 0.0 && d_new > d_old;
    lift += ok5 ? 1 : 0;
    d5 += fmt(" [seed %llu d_all %+.4f d_new %+.4f d_old %+.4f %s]", static_cast<unsigned long long>(kSeeds[i]), d_all,
              d_new, d_old, ok5 ? "ok" : "no");

    const bool ok6 = r.residual.auc >= r.no_residual.auc;
    residual_wins += ok6 ? 1 : 0;
    d6 += fmt(" [seed %llu %.4f vs %.4f %s]", static_cast<unsigned long long>(kSeeds[i]), r.residual.auc,
              r.no_residual.auc, ok6 ? "ok" : "no");

    const bool ok7 = r.gap_e2e.defined && r.gap_two_stage.defined && r.gap_e2e.gap() >= r.gap_two_stage.gap();
    e2e_wins += ok7 ? 1 : 0;
    d7 += " [seed " + std::to_string(kSeeds[i]) + " " + gap_str(r.gap_e2e) + " vs " + gap_str(r.gap_two_stage) +
          (ok7 ? " ok]" : " no]");
  }
  report("AC5", lift >= 4 && secs < 600.0,
         fmt("cold-start lift on %d/5 seeds (need >= 4), %.1f s for all seeds;", lift, secs) + d5);
  report("AC6", residual_wins >= 4,
         fmt("residual AUC >= no-residual AUC on %d/5 seeds (need >= 4);", residual_wins) + d6);
  report("AC7", e2e_wins >= 4,
         fmt("end-to-end coherence gap >= two-stage gap on %d/5 seeds (need >= 4);", e2e_wins) + d7);
}

// ---------------------------------------------------------------------------

void ac8_monotonicity() {
  const auto feats = image_features(g_frozen_run->checkpoint, g_frozen_pairs);
  const CodebookSet& full = g_frozen_run->checkpoint.books;
  const double e256 = quantization_error(feats, full);
  const double e64 = quantization_error(feats, prefix_segment_books(full, 64));

  // Matched budget: one book of 1024 codewords vs four of 256.
  QuantizerTrainOptions k1;
  k1.seed = kFrozenSeed;
  k1.quantizer.num_segments = 1;
  k1.quantizer.segment_size = 1024;
  const QuantizerRun r1 = train_quantizer(g_frozen_pairs, k1);
  const double ek1 = quantization_error(image_features(r1.checkpoint, g_frozen_pairs), r1.checkpoint.books);
  report("AC8", full.segments()[0].rows() == 256 && e256 <= e64 && e256 <= ek1,
         fmt("quantization error: N_k=256 %.6g <= N_k=64 prefix %.6g; K=4xN_k=256 %.6g <= K=1xN_k=1024 %.6g", e256,
             e64, e256, ek1));
}

// ---------------------------------------------------------------------------

int cli(std::vector<std::string> args) {
  std::ostringstream o, e;
  const int code = run_cli(args, o, e);
  if (code != 0) std::fprintf(stderr, "vidq %s failed: %s", args[0].c_str(), e.str().c_str());
  return code;
}

bool run_pipeline(const fs::path& d) {
  fs::remove_all(d);
  fs::create_directories(d / "data");
  fs::create_directories(d / "ablate");
  const auto p = [&](const char* n) { return (d / n).string(); };
  const std::string seed = std::to_string(kFrozenSeed);
  const std::vector<std::vector<std::string>> steps{
      {"gen-data", "--out-dir", p("data"), "--seed", seed},
      {"train-quantizer", "--pairs", p("data/pairs.tsv"), "--out", p("q.bin"), "--metrics", p("q.tsv"),
       "--checkpoint-every", "10", "--seed", seed},
      {"train-quantizer", "--pairs", p("data/pairs.tsv"), "--out", p("q_nr.bin"), "--no-residual", "--seed", seed},
      {"train-quantizer", "--pairs", p("data/pairs.tsv"), "--out", p("q_ts.bin"), "--two-stage", "--seed", seed},
      {"gen-ids", "--checkpoint", p("q.bin"), "--pairs", p("data/pairs.tsv"), "--out", p("ids.tsv"), "--metrics",
       p("ids_metrics.tsv")},
      {"train-ctr", "--train", p("data/clicks_train.tsv"), "--ids", p("ids.tsv"), "--out", p("ctr.bin"), "--eval",
       p("data/clicks_eval.tsv"), "--curve", p("curve.tsv"), "--seed", seed},
      {"train-ctr", "--train", p("data/clicks_train.tsv"), "--no-visual", "--out", p("base.bin"), "--seed", seed},
      {"eval", "--model", p("ctr.bin"), "--train", p("data/clicks_train.tsv"), "--eval", p("data/clicks_eval.tsv"),
       "--ids", p("ids.tsv"), "--checkpoint", p("q.bin"), "--pairs", p("data/pairs.tsv"), "--out", p("report.tsv")},
      {"eval", "--model", p("base.bin"), "--train", p("data/clicks_train.tsv"), "--eval", p("data/clicks_eval.tsv"),
       "--out", p("base_report.tsv")},
      {"ablate", "--pairs", p("data/pairs.tsv"), "--train", p("data/clicks_train.tsv"), "--eval",
       p("data/clicks_eval.tsv"), "--out-dir", p("ablate"), "--seed", seed},
  };
  for (const auto& s : steps) {
    if (cli(s) != 0) return false;
  }
  return true;
}

std::vector<fs::path> files_under(const fs::path& d) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(d)) {
    if (e.is_regular_file()) out.push_back(fs::relative(e.path(), d));
  }
  std::sort(out.begin(), out.end());
  return out;
}

template <class T>
double max_dev(const T& a, const T& b) {
  const Vector fa = flatten(a), fb = flatten(b);
  if (fa.size() != fb.size()) return INFINITY;
  double m = 0.0;
  for (std::size_t i = 0; i < fa.size(); ++i) m = std::max(m, std::abs(fa[i] - fb[i]));
  return m;
}

void ac9_reproducibility() {
  const fs::path root = fs::temp_directory_path() / "vidq_acceptance";
  const bool ran = run_pipeline(root / "a") && run_pipeline(root / "b");
  std::size_t identical = 0, total = 0;
  if (ran) {
    const auto fa = files_under(root / "a");
    const auto fb = files_under(root / "b");
    total = std::max(fa.size(), fb.size());
    if (fa == fb) {
      for (const auto& f : fa) identical += read_bytes(root / "a" / f) == read_bytes(root / "b" / f) ? 1 : 0;
    }
  }

  // Round trips from the double-precision originals.
  Rng rng(9);
  double worst = 0.0;
  const CodebookSet books = g_frozen_run->checkpoint.books;
  worst = std::max(worst, max_dev(books, deserialize_codebooks(serialize_codebooks(books))));
  const MlpEncoder& enc = g_frozen_run->checkpoint.img_encoder;
  worst = std::max(worst, max_dev(enc, deserialize_encoder(serialize_encoder(enc))));
  const QuantizerCheckpoint back = deserialize_checkpoint(serialize_checkpoint(g_frozen_run->checkpoint));
  worst = std::max(worst, max_dev(g_frozen_run->checkpoint.txt_encoder, back.txt_encoder));
  worst = std::max(worst, max_dev(g_frozen_run->checkpoint.books, back.books));
  const std::vector<ClickRecord> recs{{"u1", "a1", 1}, {"u2", "a2", 0}};
  for (bool visual : {true, false}) {
    const std::optional<VisualTableShape> shape =
        visual ? std::optional<VisualTableShape>(VisualTableShape{64, {256, 256, 256, 256}}) : std::nullopt;
    const CtrModel m = init_ctr_model(recs, CtrConfig{}, shape, 9);
    const CtrModel r = deserialize_ctr_model(serialize_ctr_model(m));
    worst = std::max(worst, max_dev(m.params, r.params));
    if (r.users.ids() != m.users.ids() || r.ads.ids() != m.ads.ids()) worst = INFINITY;
  }
  const bool ok = ran && total > 0 && identical == total && worst < 1e-6;
  report("AC9", ok,
         fmt("reproducibility: %zu/%zu pipeline files byte-identical across two runs%s; round-trip max deviation "
             "%.3g (need < 1e-6)",
             identical, total, ran ? "" : " (a pipeline step failed)", worst));
  if (ok) fs::remove_all(root);
}

}  // namespace

int main() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<std::function<void()>> checks{ac1_gradients, ac2_soft_to_hard, ac3_oracles,
                                                  ac4_contrastive, ac5_to_ac7,       ac8_monotonicity,
                                                  ac9_reproducibility};
  for (const auto& c : checks) {
    try {
      c();
    } catch (const std::exception& e) {
      std::printf("ERROR unexpected exception: %s\n", e.what());
      ++g_failures;
    }
  }
  std::printf("acceptance: %d failing, %.1f s\n", g_failures, seconds_since(t0));
  return g_failures == 0 ? 0 : 1;
}
