#include "sts/cli.hpp"

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>

#include "sts/checkpoint.hpp"
#include "sts/config.hpp"
#include "sts/data_io.hpp"
#include "sts/errors.hpp"
#include "sts/model.hpp"
#include "sts/region_graph.hpp"
#include "sts/trainer.hpp"

namespace sts::cli {

namespace fs = std::filesystem;

namespace {

constexpr std::size_t kGradcheckMaxRegions = 6;
constexpr std::size_t kGradcheckMaxSlots = 6;
constexpr double kGradcheckTolerance = 1e-4;

struct Options {
  std::string config;
  std::string events;
  std::string graph;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string checkpoint;
  std::string baseline;
  std::string split = "test";
  std::string format = "text";
  std::vector<std::size_t> factors{1, 2};
};

struct Dataset {
  AnomalyTensor x;
  RegionGraph g;
  std::vector<std::pair<std::string, std::string>> inputs;  // (path, sha256)
};

class Manifest {
 public:
  Manifest(std::string command, const RunConfig& cfg) : command_(std::move(command)), config_(cfg) {}

  void input(const std::string& path, const std::string& digest) { inputs_.emplace_back(path, digest); }
  void inputs(const std::vector<std::pair<std::string, std::string>>& in) {
    for (const auto& [p, d] : in) input(p, d);
  }
  void artifact(const std::string& name) { artifacts_.push_back(name); }

  void write(const fs::path& dir) const {
    std::ostringstream s;
    s << "# sts " << kVersion << "\n";
    s << "# command: " << command_ << "\n";
    s << "# seed: " << config_.train.seed << "\n";
    for (const auto& [p, d] : inputs_) s << "# input " << p << " sha256=" << d << "\n";
    for (const auto& a : artifacts_) s << "# artifact " << a << "\n";
    s << config_.format();
    write_file(dir / "manifest.txt", s.str());
  }

  static void write_file(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write " + path.string());
    f << text;
    if (!f) throw DataError("failed writing " + path.string());
  }

 private:
  std::string command_;
  RunConfig config_;
  std::vector<std::pair<std::string, std::string>> inputs_;
  std::vector<std::string> artifacts_;
};

fs::path prepare_out(const std::string& out) {
  if (out.empty()) throw ConfigError("--out is required");
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out)) throw DataError("cannot create output directory " + out);
  return fs::path(out);
}

RunConfig load_config(const Options& o, bool seed_is_data_seed = false) {
  RunConfig cfg = o.config.empty() ? RunConfig{} : RunConfig::load(o.config);
  if (o.seed) {
    if (seed_is_data_seed) {
      cfg.synth.seed = *o.seed;
    } else {
      cfg.train.seed = *o.seed;
    }
  }
  cfg.validate();
  return cfg;
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "validation") return Split::kValidation;
  if (s == "test") return Split::kTest;
  throw ConfigError("unknown split `" + s + "` (expected train, validation or test)");
}

Dataset load_dataset(const RunConfig& cfg, const Options& o, std::ostream& err) {
  Dataset ds;
  if (!o.graph.empty()) {
    ds.g = load_graph_spec(o.graph, cfg.data.grid_neighborhood);
    ds.inputs.emplace_back(o.graph, sha256_file(o.graph));
  } else {
    ds.g = build_grid_graph(cfg.synth.grid_rows, cfg.synth.grid_cols, cfg.data.grid_neighborhood);
  }

  if (!o.events.empty()) {
    std::ifstream in(o.events);
    if (!in) throw DataError("cannot open events file " + o.events);
    IngestOptions io;
    io.categories = cfg.data.category_names(cfg.synth.n_categories);
    io.t0 = parse_timestamp(cfg.data.start_time).seconds;
    io.slot_seconds = cfg.data.slot_seconds;
    io.n_slots = cfg.synth.n_slots;
    IngestResult r = ingest_events(in, ds.g, io);
    err << "ingested " << r.records << " records from " << o.events << "; " << r.dropped_out_of_range
        << " outside the time range, " << r.errors.size() << " invalid\n";
    for (const auto& e : r.errors) err << "  " << e << "\n";
    ds.x = std::move(r.data);
    ds.inputs.emplace_back(o.events, sha256_file(o.events));
  } else {
    if (ds.g.size() != cfg.synth.grid_rows * cfg.synth.grid_cols) {
      throw ConfigError("synthetic data needs a graph of grid_rows * grid_cols regions; pass --events with --graph");
    }
    GenerateResult gen = generate(cfg.synth, ds.g, cfg.data);
    if (gen.warning) err << "warning: " << *gen.warning << "\n";
    ds.x = std::move(gen.data);
  }
  return ds;
}

Model fresh_model(const RunConfig& cfg, const Dataset& data) {
  return Model(ModelSpec::from(cfg.train, data.g.size(), data.x.n_categories), data.g,
               derive_seed(cfg.train.seed, "init"));
}

struct TrainedRun {
  WindowedDataset windows;
  Model model;
  TrainResult result;
};

TrainedRun train_run(const RunConfig& cfg, const Dataset& data, std::ostream& err, const std::string& tag) {
  WindowedDataset windows = make_windows(data.x, cfg.train);
  Model model = fresh_model(cfg, data);
  char buf[160];
  TrainResult result = train(model, windows, cfg.train, [&](const EpochLog& e) {
    std::snprintf(buf, sizeof buf, "%sepoch %zu lr=%.6g loss=%.6f", tag.c_str(), e.epoch, e.lr, e.train_loss);
    err << buf;
    if (e.val_mae) {
      std::snprintf(buf, sizeof buf, " val_mae=%.4f val_rmse=%.4f", *e.val_mae, *e.val_rmse);
      err << buf;
    }
    if (e.clipped_steps > 0) err << " (gradient clipped in " << e.clipped_steps << " steps)";
    err << "\n";
  });
  return {std::move(windows), std::move(model), std::move(result)};
}

std::string metric_or_na(const std::optional<double>& v) {
  if (!v) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", *v);
  return buf;
}

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

// ---- commands ---------------------------------------------------------------

int cmd_generate(const Options& o, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = load_config(o, true);
  const fs::path dir = prepare_out(o.out);
  const RegionGraph g = build_grid_graph(cfg.synth.grid_rows, cfg.synth.grid_cols, cfg.data.grid_neighborhood);
  GenerateResult gen = generate(cfg.synth, g, cfg.data);
  if (gen.warning) err << "warning: " << *gen.warning << "\n";

  {
    std::ofstream f(dir / "events.csv", std::ios::binary);
    if (!f) throw DataError("cannot write " + (dir / "events.csv").string());
    export_events(f, gen.data);
  }
  Manifest::write_file(dir / "graph.txt", format_graph_spec(g));
  Manifest m("generate", cfg);
  m.artifact("events.csv");
  m.artifact("graph.txt");
  m.write(dir);

  out << "regions=" << gen.data.n_regions << "\n";
  out << "slots=" << gen.data.n_slots << "\n";
  out << "categories=" << gen.data.n_categories << "\n";
  out << "zero_ratio=" << fixed4(gen.achieved_zero_ratio) << "\n";
  out << "instances=" << count_events(gen.data) << "\n";
  return kOk;
}

int cmd_train(const Options& o, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = load_config(o);
  const fs::path dir = prepare_out(o.out);
  const Dataset data = load_dataset(cfg, o, err);
  TrainedRun run = train_run(cfg, data, err, "");

  const Checkpoint ck = Checkpoint::capture(run.model, cfg, run.windows.stats, data.x.category_names,
                                            run.result.best_epoch, run.result.best_val_mae);
  ck.save(dir / "checkpoint.bin");
  {
    std::ostringstream log;
    write_epoch_log(log, run.result.log);
    Manifest::write_file(dir / "epoch_log.csv", log.str());
  }
  Manifest m("train", cfg);
  m.inputs(data.inputs);
  m.artifact("checkpoint.bin");
  m.artifact("epoch_log.csv");

  out << "best_epoch=" << run.result.best_epoch << "\n";
  out << "best_val_mae=" << metric_or_na(run.result.best_val_mae) << "\n";
  if (run.windows.count(Split::kTest) > 0) {
    const MetricsReport test = evaluate(run.model, run.windows, Split::kTest, cfg.train.loss);
    Manifest::write_file(dir / "metrics.txt", test.to_text());
    m.artifact("metrics.txt");
    out << test.to_text();
  }
  m.write(dir);
  return kOk;
}

struct LoadedCheckpoint {
  Checkpoint ck;
  RunConfig data_cfg;
  Dataset data;
};

LoadedCheckpoint load_for_eval(const Options& o, std::ostream& err) {
  if (o.checkpoint.empty()) throw ConfigError("--checkpoint is required");
  LoadedCheckpoint lc{Checkpoint::load(o.checkpoint), {}, {}};
  const TrainConfig& trained = lc.ck.config.train;
  if (!o.config.empty()) {
    lc.data_cfg = load_config(o);
    const TrainConfig& asked = lc.data_cfg.train;
    auto check = [](const char* field, std::size_t ck_value, std::size_t cfg_value) {
      if (ck_value != cfg_value) {
        throw ConfigError(std::string(field) + " mismatch: checkpoint has " + std::to_string(ck_value) +
                          ", config has " + std::to_string(cfg_value));
      }
    };
    check("d", trained.d, asked.d);
    check("layers", trained.layers, asked.layers);
    check("heads", trained.heads, asked.heads);
    check("t_window", trained.t_window, asked.t_window);
    if (trained.ablation != asked.ablation) {
      throw ConfigError("ablation mismatch: checkpoint has " + to_string(trained.ablation) + ", config has " +
                        to_string(asked.ablation));
    }
  } else {
    lc.data_cfg = lc.ck.config;
  }
  lc.data = load_dataset(lc.data_cfg, o, err);
  if (lc.data.g.size() != lc.ck.n_regions) {
    throw ConfigError("N mismatch: checkpoint was trained on " + std::to_string(lc.ck.n_regions) +
                      " regions, data has " + std::to_string(lc.data.g.size()));
  }
  if (lc.data.x.n_categories != lc.ck.categories.size()) {
    throw ConfigError("C mismatch: checkpoint was trained on " + std::to_string(lc.ck.categories.size()) +
                      " categories, data has " + std::to_string(lc.data.x.n_categories));
  }
  return lc;
}

int cmd_eval(const Options& o, std::ostream& out, std::ostream& err) {
  LoadedCheckpoint lc = load_for_eval(o, err);
  const Split split = parse_split(o.split);
  if (!o.baseline.empty() && o.baseline != "zero") throw ConfigError("unknown baseline `" + o.baseline + "`");
  if (o.format != "text" && o.format != "csv") throw ConfigError("unknown format `" + o.format + "`");

  const WindowedDataset windows = make_windows(lc.data.x, lc.ck.config.train, lc.ck.stats);
  if (windows.count(split) == 0) throw DataError("the " + to_string(split) + " split has no windows");
  MetricsReport report;
  if (o.baseline == "zero") {
    report = evaluate_zero_baseline(windows, split);
  } else {
    const Model model = lc.ck.restore(lc.data.g);
    report = evaluate(model, windows, split, lc.ck.config.train.loss);
  }
  const std::string text = o.format == "csv" ? MetricsReport::csv_header() + "\n" + report.csv_row() + "\n"
                                             : report.to_text();
  out << text;
  if (!o.out.empty()) {
    const fs::path dir = prepare_out(o.out);
    Manifest::write_file(dir / "metrics.txt", text);
    Manifest m("eval", lc.data_cfg);
    m.input(o.checkpoint, sha256_file(o.checkpoint));
    m.inputs(lc.data.inputs);
    m.artifact("metrics.txt");
    m.write(dir);
  }
  return kOk;
}

int cmd_export_attention(const Options& o, std::ostream& out, std::ostream& err) {
  LoadedCheckpoint lc = load_for_eval(o, err);
  const Split split = parse_split(o.split);
  const fs::path dir = prepare_out(o.out);
  const WindowedDataset windows = make_windows(lc.data.x, lc.ck.config.train, lc.ck.stats);
  const auto idx = windows.indices(split);
  if (idx.empty()) throw DataError("the " + to_string(split) + " split has no windows");
  const Model model = lc.ck.restore(lc.data.g);

  stc::AttentionTrace trace;
  {
    NoGradGuard guard;
    model.forward(windows.windows[idx.back()].input, lc.ck.config.train.loss, &trace);
  }
  {
    std::ofstream f(dir / "attention.csv", std::ios::binary);
    if (!f) throw DataError("cannot write " + (dir / "attention.csv").string());
    trace.write_csv(f);
  }
  Manifest m("export-attention", lc.data_cfg);
  m.input(o.checkpoint, sha256_file(o.checkpoint));
  m.inputs(lc.data.inputs);
  m.artifact("attention.csv");
  m.write(dir);
  out << "window_target_slot=" << windows.windows[idx.back()].target_slot << "\n";
  out << "rows=" << trace.rows().size() << "\n";
  return kOk;
}

int cmd_ablate(const Options& o, std::ostream& out, std::ostream& err) {
  const RunConfig base = load_config(o);
  const Dataset data = load_dataset(base, o, err);
  std::ostringstream table;
  table << "variant,mae,rmse,mae_star,rmse_star\n";
  for (Ablation a : {Ablation::kNone, Ablation::kNoMsa, Ablation::kNoTrr, Ablation::kNoDsa, Ablation::kNoMtp}) {
    RunConfig cfg = base;
    cfg.train.ablation = a;
    TrainedRun run = train_run(cfg, data, err, "[" + to_string(a) + "] ");
    const MetricsReport r = evaluate(run.model, run.windows, Split::kTest, cfg.train.loss);
    table << to_string(a) << ',' << fixed4(r.mae) << ',' << fixed4(r.rmse) << ',' << metric_or_na(r.mae_star) << ','
          << metric_or_na(r.rmse_star) << '\n';
  }
  out << table.str();
  if (!o.out.empty()) {
    const fs::path dir = prepare_out(o.out);
    Manifest::write_file(dir / "ablation.csv", table.str());
    Manifest m("ablate", base);
    m.inputs(data.inputs);
    m.artifact("ablation.csv");
    m.write(dir);
  }
  return kOk;
}

int cmd_sparsity(const Options& o, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = load_config(o);
  if (o.factors.empty()) throw ConfigError("--factors needs at least one value");
  for (std::size_t f : o.factors)
    if (f == 0) throw ConfigError("rebin factors must be >= 1");
  const Dataset data = load_dataset(cfg, o, err);
  std::ostringstream table;
  table << "factor,slot_seconds,zero_ratio,mae,rmse,mae_star,rmse_star\n";
  for (std::size_t f : o.factors) {
    RebinResult rb = rebin(data.x, f);
    if (rb.dropped_slots > 0) err << "factor " << f << ": dropped " << rb.dropped_slots << " trailing slots\n";
    Dataset coarse{std::move(rb.data), data.g, data.inputs};
    TrainedRun run = train_run(cfg, coarse, err, "[x" + std::to_string(f) + "] ");
    const MetricsReport r = evaluate(run.model, run.windows, Split::kTest, cfg.train.loss);
    table << f << ',' << coarse.x.slot_seconds << ',' << fixed4(coarse.x.zero_ratio()) << ',' << fixed4(r.mae) << ','
          << fixed4(r.rmse) << ',' << metric_or_na(r.mae_star) << ',' << metric_or_na(r.rmse_star) << '\n';
  }
  out << table.str();
  if (!o.out.empty()) {
    const fs::path dir = prepare_out(o.out);
    Manifest::write_file(dir / "sparsity.csv", table.str());
    Manifest m("sparsity", cfg);
    m.inputs(data.inputs);
    m.artifact("sparsity.csv");
    m.write(dir);
  }
  return kOk;
}

int cmd_gradcheck(const Options& o, std::ostream& out, std::ostream& err) {
  (void)err;
  const RunConfig cfg = load_config(o);
  const RegionGraph g = o.graph.empty()
                            ? build_grid_graph(cfg.synth.grid_rows, cfg.synth.grid_cols, cfg.data.grid_neighborhood)
                            : load_graph_spec(o.graph, cfg.data.grid_neighborhood);
  const std::size_t N = g.size(), T = cfg.train.t_window, C = cfg.synth.n_categories;
  if (N > kGradcheckMaxRegions || T > kGradcheckMaxSlots) {
    throw ConfigError("gradcheck is limited to toy sizes (at most " + std::to_string(kGradcheckMaxRegions) +
                      " regions and t_window <= " + std::to_string(kGradcheckMaxSlots) + ")");
  }

  std::mt19937_64 rng(derive_seed(cfg.train.seed, "gradcheck"));
  auto uniform = [&] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
  Window w;
  std::vector<double> input(N * T * C), target(N * C);
  for (double& v : input) v = uniform();
  w.truth.resize(N * C);
  for (std::size_t i = 0; i < N * C; ++i) {
    w.truth[i] = uniform() < 0.5 ? 0.0 : std::floor(1.0 + 4.0 * uniform());
    target[i] = w.truth[i] / 4.0;
  }
  w.input = Tensor::from({N, T, C}, std::move(input));
  w.target = Tensor::from({N, C}, std::move(target));

  const Model model(ModelSpec::from(cfg.train, N, C), g, derive_seed(cfg.train.seed, "init"));
  const auto groups = gradcheck_model(model, w, cfg.train);
  double worst = 0.0;
  char buf[200];
  for (const auto& grp : groups) {
    std::snprintf(buf, sizeof buf, "%-24s size=%-4zu max_rel_error=%.3e %s\n", grp.name.c_str(), grp.size,
                  grp.max_error, grp.max_error < kGradcheckTolerance ? "ok" : "FAIL");
    out << buf;
    worst = std::max(worst, grp.max_error);
  }
  std::snprintf(buf, sizeof buf, "max_rel_error=%.3e\n", worst);
  out << buf;
  if (!o.out.empty()) {
    const fs::path dir = prepare_out(o.out);
    Manifest m("gradcheck", cfg);
    if (!o.graph.empty()) m.input(o.graph, sha256_file(o.graph));
    m.write(dir);
  }
  if (!(worst < kGradcheckTolerance)) {
    err << "error: gradient check failed (tolerance " << kGradcheckTolerance << ")\n";
    return kNumericError;
  }
  return kOk;
}

}  // namespace

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
    EVP_MD_CTX_free(ctx);
    throw DataError("sha256 unavailable");
  }
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return hex.str();
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Zero-inflated urban anomaly forecaster"};
  app.name(args.empty() ? "sts" : fs::path(args[0]).filename().string());
  app.footer("\n" + config_reference() + "\nExit codes: 0 ok, 1 data error, 2 config error, 3 numeric failure.");
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  Options o;
  std::uint64_t seed = 0;
  auto common = [&](CLI::App* sub, bool data_inputs) {
    sub->add_option("--config", o.config, "flat key = value config file (defaults apply when omitted)");
    sub->add_option("--seed", seed, "override the run seed (generate: the generator seed)");
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--graph", o.graph, "region graph spec; defaults to the configured grid");
    if (data_inputs) sub->add_option("--events", o.events, "event CSV; synthetic data is generated when omitted");
  };

  auto* gen = app.add_subcommand("generate", "write a synthetic event log and its graph");
  gen->add_option("--config", o.config, "config file");
  gen->add_option("--seed", seed, "generator seed (overrides synth_seed)");
  gen->add_option("--out", o.out, "output directory")->required();
  auto* trn = app.add_subcommand("train", "train a model and write a checkpoint");
  common(trn, true);
  auto* evl = app.add_subcommand("eval", "evaluate a checkpoint");
  common(evl, true);
  evl->add_option("--checkpoint", o.checkpoint, "checkpoint file")->required();
  evl->add_option("--baseline", o.baseline, "`zero` evaluates the all-zero predictor instead");
  evl->add_option("--split", o.split, "train, validation or test (default test)");
  evl->add_option("--format", o.format, "text or csv");
  auto* abl = app.add_subcommand("ablate", "train and compare none, -MSA, -TRR, -DSA and -MTP");
  common(abl, true);
  auto* spa = app.add_subcommand("sparsity", "rebin, retrain and evaluate per time-aggregation factor");
  common(spa, true);
  spa->add_option("--factors", o.factors, "comma-separated rebin factors (default 1,2)")->delimiter(',');
  auto* gck = app.add_subcommand("gradcheck", "compare backprop against finite differences on a toy model");
  common(gck, false);
  auto* exp = app.add_subcommand("export-attention", "write attention weights for the last window of a split");
  common(exp, true);
  exp->add_option("--checkpoint", o.checkpoint, "checkpoint file")->required();
  exp->add_option("--split", o.split, "train, validation or test (default test)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << "\n";
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kConfigError;
  }
  for (auto* sub : app.get_subcommands())
    if (sub->count("--seed")) o.seed = seed;

  try {
    if (gen->parsed()) return cmd_generate(o, out, err);
    if (trn->parsed()) return cmd_train(o, out, err);
    if (evl->parsed()) return cmd_eval(o, out, err);
    if (abl->parsed()) return cmd_ablate(o, out, err);
    if (spa->parsed()) return cmd_sparsity(o, out, err);
    if (gck->parsed()) return cmd_gradcheck(o, out, err);
    if (exp->parsed()) return cmd_export_attention(o, out, err);
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kNumericError;
  } catch (const DomainError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kNumericError;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const ArgumentError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  }
  return kConfigError;
}

}  // namespace sts::cli
