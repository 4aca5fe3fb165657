#include "vidq/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <set>

#include "vidq/error.hpp"
#include "vidq/io.hpp"
#include "vidq/pipeline.hpp"
#include "vidq/synth.hpp"

namespace vidq {
namespace {

namespace fs = std::filesystem;

void require_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("output directory does not exist: " + dir.string());
}

void require_parent(const fs::path& file) {
  const fs::path parent = file.parent_path();
  if (!parent.empty()) require_dir(parent);
}

std::string epoch_key(const char* prefix, std::size_t e) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%s%03zu", prefix, e);
  return buf;
}

std::vector<Vector> pair_image_features(const QuantizerCheckpoint& ckpt, std::span<const PairFileRecord> pairs) {
  if (!pairs.empty() && pairs.front().image_raw.size() != ckpt.img_encoder.input_dim()) {
    throw DataError("pairs have image dim " + std::to_string(pairs.front().image_raw.size()) +
                    " but the checkpoint encoder expects " + std::to_string(ckpt.img_encoder.input_dim()));
  }
  return image_features(ckpt, pairs);
}

// ---------------------------------------------------------------------------

struct GenDataFlags {
  std::string out_dir;
  SynthConfig synth;
  std::optional<std::size_t> ads;

  void attach(CLI::App* app) {
    app->add_option("--out-dir", out_dir, "Directory for pairs.tsv, clicks_train.tsv, clicks_eval.tsv")->required();
    app->add_option("--seed", synth.seed)->capture_default_str();
    app->add_option("--pairs", synth.num_pairs)->capture_default_str();
    app->add_option("--clusters", synth.num_clusters)->capture_default_str();
    app->add_option("--ads", ads, "Ads are the first N pairs (default: all pairs)");
    app->add_option("--users", synth.num_users)->capture_default_str();
    app->add_option("--clicks", synth.num_clicks)->capture_default_str();
    app->add_option("--latent-dim", synth.latent_dim)->capture_default_str();
    app->add_option("--img-dim", synth.d_img_raw)->capture_default_str();
    app->add_option("--txt-dim", synth.d_txt_raw)->capture_default_str();
    app->add_option("--noise", synth.noise_sigma)->capture_default_str();
    app->add_option("--view-noise-ratio", synth.view_noise_ratio)->capture_default_str();
    app->add_option("--cold-start", synth.cold_start_fraction)->capture_default_str();
    app->add_option("--eval-fraction", synth.eval_fraction)->capture_default_str();
    app->add_option("--cluster-effect", synth.cluster_effect)->capture_default_str();
    app->add_option("--user-affinity", synth.user_affinity_sigma)->capture_default_str();
    app->add_option("--user-bias", synth.user_bias_sigma)->capture_default_str();
    app->add_option("--appeal-effect", synth.appeal_effect)->capture_default_str();
    app->add_option("--logit-offset", synth.logit_offset)->capture_default_str();
  }
};

int cmd_gen_data(GenDataFlags f, std::ostream& out) {
  f.synth.num_ads = f.ads.value_or(f.synth.num_pairs);
  f.synth.validate();
  const fs::path dir = f.out_dir;
  require_dir(dir);

  const auto pairs = generate_pairs(f.synth);
  const ClickData clicks = generate_clicks(f.synth, pairs);
  std::vector<PairFileRecord> records;
  records.reserve(pairs.size());
  for (const auto& p : pairs) records.push_back(p.record);
  write_pairs(dir / "pairs.tsv", records);
  write_clicks(dir / "clicks_train.tsv", clicks.train);
  write_clicks(dir / "clicks_eval.tsv", clicks.eval);
  out << "wrote " << records.size() << " pairs, " << clicks.train.size() << " train and " << clicks.eval.size()
      << " eval clicks (" << clicks.new_ad_ids.size() << " new ads) to " << dir.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct QuantizerFlags {
  QuantizerTrainOptions opts;

  void attach(CLI::App* app, bool shape_flags = true) {
    app->add_option("--seed", opts.seed)->capture_default_str();
    app->add_option("--epochs", opts.epochs)->capture_default_str();
    app->add_option("--lr", opts.lr)->capture_default_str();
    app->add_option("--batch-size", opts.batch_size)->capture_default_str();
    app->add_option("--hidden", opts.hidden_dim)->capture_default_str();
    app->add_option("--dim", opts.quantizer.dim)->capture_default_str();
    app->add_option("--coarse-size", opts.quantizer.coarse_size)->capture_default_str();
    if (shape_flags) {
      app->add_option("--segments", opts.quantizer.num_segments)->capture_default_str();
      app->add_option("--segment-size", opts.quantizer.segment_size)->capture_default_str();
    }
    app->add_option("--beta-start", opts.quantizer.beta_start)->capture_default_str();
    app->add_option("--beta-end", opts.quantizer.beta_end)->capture_default_str();
    app->add_flag("--shuffle", opts.shuffle, "Reshuffle batches every epoch");
  }

  void validate() const {
    opts.quantizer.validate();
    if (opts.batch_size == 0) throw InvalidArgument("--batch-size must be positive");
    if (opts.hidden_dim == 0) throw InvalidArgument("--hidden must be positive");
    if (!(opts.lr >= 0.0)) throw InvalidArgument("--lr must be >= 0");
  }
};

struct TrainQuantizerFlags {
  std::string pairs;
  std::string out;
  std::string metrics;
  std::size_t checkpoint_every = 0;
  bool no_residual = false;
  bool two_stage = false;
  QuantizerFlags q;

  void attach(CLI::App* app) {
    app->add_option("--pairs", pairs)->required();
    app->add_option("--out", out, "Checkpoint path")->required();
    app->add_option("--metrics", metrics, "Loss curve and summary");
    app->add_option("--checkpoint-every", checkpoint_every, "Also write <out>.epochNNN every N epochs");
    app->add_flag("--no-residual", no_residual, "Single-level quantizer");
    app->add_flag("--two-stage", two_stage, "Train without quantization, then k-means codebooks");
    q.attach(app);
  }
};

Metrics loss_metrics(const QuantizerRun& run, double quant_error) {
  Metrics m;
  m.emplace_back("epochs", std::to_string(run.loss_history.size()));
  if (!run.loss_history.empty()) {
    const double first = run.loss_history.front();
    const double last = run.loss_history.back();
    m.emplace_back("initial_loss", format_double(first));
    m.emplace_back("final_loss", format_double(last));
    m.emplace_back("loss_ratio", format_double(last / first));
  }
  m.emplace_back("mean_quant_error", format_double(quant_error));
  for (std::size_t e = 0; e < run.loss_history.size(); ++e) {
    m.emplace_back(epoch_key("loss_epoch_", e + 1), format_double(run.loss_history[e]));
  }
  return m;
}

int cmd_train_quantizer(TrainQuantizerFlags f, std::ostream& out) {
  if (f.no_residual && f.two_stage) throw InvalidArgument("--no-residual and --two-stage cannot be combined");
  if (f.no_residual) f.q.opts.quantizer.use_residual = false;
  f.q.opts.two_stage = f.two_stage;
  f.q.validate();
  require_parent(f.out);
  if (!f.metrics.empty()) require_parent(f.metrics);

  const auto pairs = read_pairs(f.pairs);
  if (pairs.empty()) throw DataError(f.pairs + ": no pairs");

  EpochHook hook;
  if (f.checkpoint_every > 0) {
    hook = [&](const TrainState& s) {
      if (s.epoch % f.checkpoint_every != 0) return;
      QuantizerCheckpoint c{s.img_encoder, s.txt_encoder, s.books, static_cast<std::uint32_t>(s.epoch)};
      save_checkpoint(f.out + epoch_key(".epoch", s.epoch), c);
    };
  }
  const QuantizerRun run = train_quantizer(pairs, f.q.opts, hook);
  save_checkpoint(f.out, run.checkpoint);
  const double qerr = quantization_error(image_features(run.checkpoint, pairs), run.checkpoint.books);
  const Metrics m = loss_metrics(run, qerr);
  if (!f.metrics.empty()) write_metrics(f.metrics, m);
  for (const auto& [k, v] : m) {
    if (k.rfind("loss_epoch_", 0) != 0) out << k << "\t" << v << "\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct GenIdsFlags {
  std::string checkpoint;
  std::string pairs;
  std::string out;
  std::string metrics;

  void attach(CLI::App* app) {
    app->add_option("--checkpoint", checkpoint)->required();
    app->add_option("--pairs", pairs)->required();
    app->add_option("--out", out, "Ad visual-id map")->required();
    app->add_option("--metrics", metrics, "Quantization error and id counts");
  }
};

int cmd_gen_ids(const GenIdsFlags& f, std::ostream& out) {
  require_parent(f.out);
  if (!f.metrics.empty()) require_parent(f.metrics);
  const QuantizerCheckpoint ckpt = load_checkpoint(f.checkpoint);
  const auto pairs = read_pairs(f.pairs);
  const auto features = pair_image_features(ckpt, pairs);
  const AdVisualMap map = generate_visual_map(ckpt, pairs);
  write_visual_map(f.out, map);

  std::set<VisualId> distinct;
  std::set<std::uint32_t> coarse;
  for (const auto& [ad, id] : map) {
    distinct.insert(id);
    coarse.insert(id.coarse);
  }
  const Metrics m{{"ads", std::to_string(map.size())},
                  {"distinct_ids", std::to_string(distinct.size())},
                  {"distinct_coarse_ids", std::to_string(coarse.size())},
                  {"mean_quant_error", format_double(features.empty() ? 0.0 : quantization_error(features, ckpt.books))}};
  if (!f.metrics.empty()) write_metrics(f.metrics, m);
  for (const auto& [k, v] : m) out << k << "\t" << v << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct CtrFlags {
  CtrConfig model;
  CtrTrainOptions train;
  std::size_t embed_dim = 16;

  CtrFlags() { train.seed = 7; }

  void attach(CLI::App* app, const char* seed_flag = "--seed") {
    app->add_option(seed_flag, train.seed)->capture_default_str();
    app->add_option("--ctr-epochs", train.epochs)->capture_default_str();
    app->add_option("--ctr-lr", train.lr)->capture_default_str();
    app->add_option("--ctr-batch-size", train.batch_size)->capture_default_str();
    app->add_option("--embed-dim", embed_dim, "User and ad embedding width")->capture_default_str();
    app->add_option("--visual-dim", model.visual_dim)->capture_default_str();
    app->add_option("--tower-hidden", model.tower_hidden)->capture_default_str();
    app->add_option("--tower-out", model.tower_out)->capture_default_str();
    app->add_option("--init-std", model.init_stddev)->capture_default_str();
  }

  void finalize() {
    model.user_dim = embed_dim;
    model.ad_dim = embed_dim;
    if (embed_dim == 0 || model.visual_dim == 0 || model.tower_hidden == 0 || model.tower_out == 0) {
      throw InvalidArgument("ctr dimensions must be positive");
    }
    if (train.batch_size == 0) throw InvalidArgument("--ctr-batch-size must be positive");
    if (!(train.lr >= 0.0)) throw InvalidArgument("--ctr-lr must be >= 0");
    if (!(model.init_stddev >= 0.0)) throw InvalidArgument("--init-std must be >= 0");
  }
};

std::optional<double> eval_auc(const CtrModel& model, std::span<const ClickRecord> records, const AdVisualMap& map) {
  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto& r : records) {
    scores.push_back(predict_logit(model.params, resolve_example(r, model, map)));
    labels.push_back(r.label);
  }
  try {
    return auc(scores, labels);
  } catch (const InvalidArgument&) {
    return std::nullopt;
  }
}

CtrModel fit_ctr(std::span<const ClickRecord> train, const AdVisualMap& map, const std::optional<VisualTableShape>& shape,
                 const CtrFlags& f, std::span<const ClickRecord> eval_records, Metrics* curve) {
  CtrModel model = init_ctr_model(train, f.model, shape, f.train.seed);
  std::function<void(std::size_t, const CtrModel&)> hook;
  if (curve) {
    hook = [&](std::size_t epoch, const CtrModel& m) {
      const auto a = eval_auc(m, eval_records, map);
      curve->emplace_back(epoch_key("auc_epoch_", epoch + 1), a ? format_double(*a) : "undefined");
    };
  }
  return train_ctr(train, map, std::move(model), f.train, hook);
}

struct TrainCtrFlags {
  std::string train;
  std::string ids;
  std::string out;
  std::string eval;
  std::string curve;
  bool no_visual = false;
  CtrFlags ctr;

  void attach(CLI::App* app) {
    app->add_option("--train", train, "Training clicks")->required();
    app->add_option("--ids", ids, "Ad visual-id map");
    app->add_option("--out", out, "Model path")->required();
    app->add_option("--eval", eval, "Clicks scored after every epoch for --curve");
    app->add_option("--curve", curve, "Per-epoch eval AUC");
    app->add_flag("--no-visual", no_visual, "Behavior-ID-only baseline");
    ctr.attach(app);
  }
};

int cmd_train_ctr(TrainCtrFlags f, std::ostream& out) {
  if (f.no_visual && !f.ids.empty()) throw InvalidArgument("--no-visual cannot be combined with --ids");
  if (!f.no_visual && f.ids.empty()) throw InvalidArgument("--ids is required unless --no-visual is given");
  if (f.curve.empty() != f.eval.empty()) throw InvalidArgument("--curve and --eval must be given together");
  f.ctr.finalize();
  require_parent(f.out);
  if (!f.curve.empty()) require_parent(f.curve);

  const auto train = read_clicks(f.train);
  if (train.empty()) throw DataError(f.train + ": no click records");
  const AdVisualMap map = f.no_visual ? AdVisualMap{} : read_visual_map(f.ids);
  std::optional<VisualTableShape> shape;
  if (!f.no_visual) shape = visual_shape(map);
  const auto eval = f.eval.empty() ? std::vector<ClickRecord>{} : read_clicks(f.eval);

  Metrics curve;
  const CtrModel model = fit_ctr(train, map, shape, f.ctr, eval, f.curve.empty() ? nullptr : &curve);
  save_ctr_model(f.out, model);
  if (!f.curve.empty()) write_metrics(f.curve, curve);
  out << "trained " << (f.no_visual ? "baseline" : "visual") << " model on " << train.size() << " clicks, "
      << model.users.num_rows() - 1 << " users, " << model.ads.num_rows() - 1 << " ads\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct EvalFlags {
  std::string model;
  std::string train;
  std::string eval;
  std::string ids;
  std::string checkpoint;
  std::string pairs;
  std::string out;

  void attach(CLI::App* app) {
    app->add_option("--model", model)->required();
    app->add_option("--train", train, "Training clicks; ads absent from it form the new-ad cohort")->required();
    app->add_option("--eval", eval, "Clicks to score")->required();
    app->add_option("--ids", ids, "Ad visual-id map (visual models)");
    app->add_option("--checkpoint", checkpoint, "Quantizer checkpoint for mean_quant_error");
    app->add_option("--pairs", pairs, "Pairs whose image features enter mean_quant_error");
    app->add_option("--out", out, "Report path");
  }
};

int cmd_eval(const EvalFlags& f, std::ostream& out) {
  if (f.checkpoint.empty() != f.pairs.empty()) throw InvalidArgument("--checkpoint and --pairs must be given together");
  if (!f.out.empty()) require_parent(f.out);
  const CtrModel model = load_ctr_model(f.model);
  const bool visual = model.params.visual0.has_value();
  if (visual && f.ids.empty()) throw InvalidArgument("model has visual tables; --ids is required");
  if (!visual && !f.ids.empty()) throw InvalidArgument("baseline model takes no --ids");

  const auto train = read_clicks(f.train);
  const auto eval = read_clicks(f.eval);
  const AdVisualMap map = visual ? read_visual_map(f.ids) : AdVisualMap{};
  double qerr = 0.0;
  if (!f.checkpoint.empty()) {
    const QuantizerCheckpoint ckpt = load_checkpoint(f.checkpoint);
    const auto pairs = read_pairs(f.pairs);
    if (!pairs.empty()) qerr = quantization_error(pair_image_features(ckpt, pairs), ckpt.books);
  }
  EvalReport report = cohort_report(model, eval, map, unseen_ads(train, eval), qerr);
  report.baseline = !visual;
  const auto m = report_metrics(report);
  if (!f.out.empty()) write_metrics(f.out, m);
  for (const auto& [k, v] : m) out << k << "\t" << v << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct AblateFlags {
  std::string pairs;
  std::string train;
  std::string eval;
  std::string out_dir;
  QuantizerFlags q;
  CtrFlags ctr;

  void attach(CLI::App* app) {
    app->add_option("--pairs", pairs)->required();
    app->add_option("--train", train)->required();
    app->add_option("--eval", eval)->required();
    app->add_option("--out-dir", out_dir, "Per-cell metrics and summary.tsv")->required();
    q.attach(app, false);
    ctr.attach(app, "--ctr-seed");
  }
};

struct CellResult {
  std::string name;
  std::size_t k = 0;
  std::size_t n = 0;
  EvalReport report;
};

std::string opt_str(const std::optional<double>& v) { return v ? format_double(*v) : "undefined"; }

int cmd_ablate(AblateFlags f, std::ostream& out) {
  f.q.opts.quantizer.num_segments = 4;
  f.q.opts.quantizer.segment_size = 1024;
  f.q.validate();
  for (std::size_t k : {1, 2, 4}) {
    if (f.q.opts.quantizer.dim % k != 0) throw InvalidArgument("--dim must be divisible by 1, 2 and 4");
    if (f.ctr.model.visual_dim % k != 0) throw InvalidArgument("--visual-dim must be divisible by 1, 2 and 4");
  }
  f.ctr.finalize();
  const fs::path dir = f.out_dir;
  require_dir(dir);

  const auto pairs = read_pairs(f.pairs);
  const auto train = read_clicks(f.train);
  const auto eval = read_clicks(f.eval);
  if (pairs.empty() || train.empty() || eval.empty()) throw DataError("ablate needs non-empty pairs, train and eval files");
  const std::set<std::string> new_ads = unseen_ads(train, eval);

  const CtrModel base_model = fit_ctr(train, {}, std::nullopt, f.ctr, {}, nullptr);
  EvalReport base = cohort_report(base_model, eval, {}, new_ads);
  base.baseline = true;

  auto run_cell = [&](const std::string& name, std::size_t k, std::size_t n, const QuantizerCheckpoint& ckpt) {
    const AdVisualMap map = generate_visual_map(ckpt, pairs);
    const CtrModel model = fit_ctr(train, map, visual_shape(ckpt.books), f.ctr, {}, nullptr);
    const double qerr = quantization_error(image_features(ckpt, pairs), ckpt.books);
    CellResult cell{name, k, n, cohort_report(model, eval, map, new_ads, qerr)};
    Metrics m{{"cell", name}, {"K", std::to_string(k)}, {"N", std::to_string(n)}};
    for (auto& kv : report_metrics(cell.report)) m.push_back(std::move(kv));
    write_metrics(dir / ("ablate_" + name + ".tsv"), m);
    return cell;
  };

  std::vector<CellResult> cells;
  // N grid: one K=4 run at the largest size; smaller books are prefixes of it.
  {
    const QuantizerRun run = train_quantizer(pairs, f.q.opts);
    for (std::size_t n : {64, 256, 1024}) {
      QuantizerCheckpoint ckpt = run.checkpoint;
      ckpt.books = prefix_segment_books(run.checkpoint.books, n);
      cells.push_back(run_cell("N" + std::to_string(n), 4, n, ckpt));
    }
  }
  // K grid at N=256.
  for (std::size_t k : {1, 2, 4}) {
    QuantizerTrainOptions o = f.q.opts;
    o.quantizer.num_segments = k;
    o.quantizer.segment_size = 256;
    cells.push_back(run_cell("K" + std::to_string(k), k, 256, train_quantizer(pairs, o).checkpoint));
  }

  std::string table = "cell\tK\tN\tauc\tauc_new_ads\tauc_old_ads\tmean_quant_error\n";
  table += "baseline\t-\t-\t" + format_double(base.auc) + "\t" + opt_str(base.auc_new_ads) + "\t" +
           opt_str(base.auc_old_ads) + "\t-\n";
  for (const auto& c : cells) {
    table += c.name + "\t" + std::to_string(c.k) + "\t" + std::to_string(c.n) + "\t" + format_double(c.report.auc) +
             "\t" + opt_str(c.report.auc_new_ads) + "\t" + opt_str(c.report.auc_old_ads) + "\t" +
             format_double(c.report.mean_quant_error) + "\n";
  }
  std::FILE* fp = std::fopen((dir / "summary.tsv").string().c_str(), "wb");
  if (!fp) throw DataError("cannot open " + (dir / "summary.tsv").string() + " for writing");
  std::fwrite(table.data(), 1, table.size(), fp);
  std::fclose(fp);
  out << table;
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Visual-id quantizer and CTR pipeline", "vidq"};
  app.require_subcommand(1);

  GenDataFlags gen_data;
  gen_data.attach(app.add_subcommand("gen-data", "Write a synthetic pair corpus and click logs"));
  TrainQuantizerFlags train_q;
  train_q.attach(app.add_subcommand("train-quantizer", "Contrastive training of encoders and codebooks"));
  GenIdsFlags gen_ids;
  gen_ids.attach(app.add_subcommand("gen-ids", "Assign hard visual ids to every pair"));
  TrainCtrFlags train_ctr_flags;
  train_ctr_flags.attach(app.add_subcommand("train-ctr", "Train the two-tower CTR model"));
  EvalFlags eval_flags;
  eval_flags.attach(app.add_subcommand("eval", "Overall and new/old-ad cohort AUC"));
  AblateFlags ablate;
  ablate.attach(app.add_subcommand("ablate", "Codebook size and segment count grids"));

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    const std::string name = app.get_subcommands().front()->get_name();
    if (name == "gen-data") return cmd_gen_data(gen_data, out);
    if (name == "train-quantizer") return cmd_train_quantizer(train_q, out);
    if (name == "gen-ids") return cmd_gen_ids(gen_ids, out);
    if (name == "train-ctr") return cmd_train_ctr(train_ctr_flags, out);
    if (name == "eval") return cmd_eval(eval_flags, out);
    if (name == "ablate") return cmd_ablate(ablate, out);
    err << "error: unknown subcommand " << name << "\n";
    return kExitUsage;
  } catch (const NumericError& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
}

}  // namespace vidq
