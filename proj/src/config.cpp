#include "sts/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "sts/errors.hpp"

namespace sts {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

std::string fmt_double(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string fmt_list(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ", ";
    out += fmt_double(v[i]);
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("key `" + key + "`: expected a number, got `" + v + "`");
  }
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("key `" + key + "`: expected a non-negative integer, got `" + v + "`");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "on" || v == "1") return true;
  if (v == "false" || v == "off" || v == "0") return false;
  throw ConfigError("key `" + key + "`: expected true/false, got `" + v + "`");
}

std::vector<double> to_doubles(const std::string& key, const std::string& v) {
  std::vector<double> out;
  for (const auto& item : split_list(v)) out.push_back(to_double(key, item));
  if (out.empty()) throw ConfigError("key `" + key + "`: empty list");
  return out;
}

struct Binding {
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
  std::string help;
};

// Declaration order is the canonical output order.
const std::vector<std::pair<std::string, Binding>>& bindings() {
  static const std::vector<std::pair<std::string, Binding>> table = [] {
    std::vector<std::pair<std::string, Binding>> b;
#define STS_SIZE(NAME, FIELD, HELP)                                                                     \
  b.push_back({NAME,                                                                                    \
               {[](RunConfig& c, const std::string& k, const std::string& v) { c.FIELD = to_uint(k, v); }, \
                [](const RunConfig& c) { return std::to_string(c.FIELD); }, HELP}})
#define STS_DOUBLE(NAME, FIELD, HELP)                                                                     \
  b.push_back({NAME,                                                                                      \
               {[](RunConfig& c, const std::string& k, const std::string& v) { c.FIELD = to_double(k, v); }, \
                [](const RunConfig& c) { return fmt_double(c.FIELD); }, HELP}})

    STS_SIZE("grid_rows", synth.grid_rows, "synthetic grid rows");
    STS_SIZE("grid_cols", synth.grid_cols, "synthetic grid columns");
    b.push_back({"grid_neighborhood",
                 {[](RunConfig& c, const std::string& k, const std::string& v) {
                    const auto n = to_uint(k, v);
                    if (n != 4 && n != 8) throw ConfigError("key `grid_neighborhood`: expected 4 or 8");
                    c.data.grid_neighborhood = n == 4 ? GridNeighborhood::kEdge : GridNeighborhood::kEdgeAndCorner;
                  },
                  [](const RunConfig& c) { return std::to_string(static_cast<int>(c.data.grid_neighborhood)); },
                  "4 = shared edge, 8 = edge or corner"}});
    STS_SIZE("n_categories", synth.n_categories, "number of anomaly categories C");
    STS_SIZE("n_slots", synth.n_slots, "number of time slots in the data");
    b.push_back({"categories",
                 {[](RunConfig& c, const std::string&, const std::string& v) { c.data.categories = split_list(v); },
                  [](const RunConfig& c) {
                    std::string out;
                    for (std::size_t i = 0; i < c.data.categories.size(); ++i) {
                      if (i) out += ", ";
                      out += c.data.categories[i];
                    }
                    return out;
                  },
                  "comma-separated category names (default c0, c1, ...)"}});
    b.push_back({"start_time",
                 {[](RunConfig& c, const std::string&, const std::string& v) { c.data.start_time = v; },
                  [](const RunConfig& c) { return c.data.start_time; }, "ISO-8601 start of slot 0"}});
    b.push_back({"slot_seconds",
                 {[](RunConfig& c, const std::string& k, const std::string& v) {
                    c.data.slot_seconds = static_cast<std::int64_t>(to_uint(k, v));
                  },
                  [](const RunConfig& c) { return std::to_string(c.data.slot_seconds); }, "slot length in seconds"}});
    b.push_back({"base_rate",
                 {[](RunConfig& c, const std::string& k, const std::string& v) { c.synth.base_rate = to_doubles(k, v); },
                  [](const RunConfig& c) { return fmt_list(c.synth.base_rate); },
                  "Poisson base rate, one value or one per category"}});
    STS_DOUBLE("autoregression", synth.autoregression, "weight of a cell's own previous count");
    STS_DOUBLE("spatial_diffusion", synth.spatial_diffusion, "weight of each neighbour's previous count");
    b.push_back({"semantic_coupling",
                 {[](RunConfig& c, const std::string& k, const std::string& v) {
                    c.synth.semantic_coupling = to_doubles(k, v);
                  },
                  [](const RunConfig& c) { return fmt_list(c.synth.semantic_coupling); },
                  "cross-category weight: one off-diagonal value or a C*C row-major matrix"}});
    STS_DOUBLE("region_heterogeneity", synth.region_heterogeneity, "log-sd of per-region exposure propensity");
    STS_DOUBLE("target_zero_ratio", synth.target_zero_ratio, "fraction of zero cells the generator aims for");
    STS_SIZE("synth_seed", synth.seed, "seed of the synthetic generator");

    STS_SIZE("t_window", train.t_window, "history length T");
    STS_SIZE("d", train.d, "hidden size d");
    STS_SIZE("layers", train.layers, "number of stacked layers L");
    STS_SIZE("heads", train.heads, "attention heads H (must divide d)");
    STS_DOUBLE("lr", train.lr0, "initial learning rate");
    STS_DOUBLE("lr_decay", train.decay, "per-epoch learning-rate multiplier");
    STS_SIZE("epochs", train.epochs, "training epochs");
    b.push_back({"batch_size",
                 {[](RunConfig& c, const std::string& k, const std::string& v) {
                    if (v == "full") {
                      c.train.batch_size = 0;
                      return;
                    }
                    const auto n = to_uint(k, v);
                    if (n == 0) throw ConfigError("key `batch_size`: must be >= 1 or `full`");
                    c.train.batch_size = n;
                  },
                  [](const RunConfig& c) {
                    return c.train.batch_size == 0 ? std::string("full") : std::to_string(c.train.batch_size);
                  },
                  "windows per optimiser step or `full` for the whole training split; sparse data wants large "
                  "batches so each step sees a meaningful share of non-zero cells"}});
    b.push_back({"split",
                 {[](RunConfig& c, const std::string& k, const std::string& v) {
                    const auto colon = v.find(':');
                    if (colon == std::string::npos) throw ConfigError("key `split`: expected TRAIN:TEST, e.g. 7:1");
                    c.train.split_train = to_uint(k, trim(v.substr(0, colon)));
                    c.train.split_test = to_uint(k, trim(v.substr(colon + 1)));
                  },
                  [](const RunConfig& c) {
                    return std::to_string(c.train.split_train) + ":" + std::to_string(c.train.split_test);
                  },
                  "chronological train:test ratio over windows"}});
    STS_SIZE("val_slots", train.val_slots, "trailing training windows held out for validation");
    STS_SIZE("seed", train.seed, "run seed (parameter init, shuffling)");
    b.push_back({"eta",
                 {[](RunConfig& c, const std::string& k, const std::string& v) {
                    const auto w = to_doubles(k, v);
                    if (w.size() != 4) throw ConfigError("key `eta`: expected four weights for {0,1,2,>=3}");
                    std::copy(w.begin(), w.end(), c.train.loss.eta.begin());
                  },
                  [](const RunConfig& c) {
                    return fmt_list({c.train.loss.eta.begin(), c.train.loss.eta.end()});
                  },
                  "regression weights for truth buckets {0,1,2,>=3}"}});
    STS_DOUBLE("lambda_c", train.loss.lambda_c, "weight of the exposure classification loss");
    STS_DOUBLE("lambda_reg", train.loss.lambda_reg, "L2 weight");
    STS_DOUBLE("tau", train.loss.tau, "exposure threshold");
    b.push_back({"norm",
                 {[](RunConfig& c, const std::string&, const std::string& v) { c.train.norm = parse_norm_kind(v); },
                  [](const RunConfig& c) { return to_string(c.train.norm); }, "zscore or minmax"}});
    b.push_back({"dsa_self_loop",
                 {[](RunConfig& c, const std::string& k, const std::string& v) { c.train.dsa_self_loop = to_bool(k, v); },
                  [](const RunConfig& c) { return std::string(c.train.dsa_self_loop ? "true" : "false"); },
                  "include the target region in its own aggregation"}});
    b.push_back({"dsa_activation",
                 {[](RunConfig& c, const std::string&, const std::string& v) {
                    c.train.dsa_activation = stc::parse_activation(v);
                  },
                  [](const RunConfig& c) { return stc::to_string(c.train.dsa_activation); },
                  "sigmoid, tanh or identity"}});
    b.push_back({"mask_mode",
                 {[](RunConfig& c, const std::string&, const std::string& v) { c.train.mask_mode = parse_mask_mode(v); },
                  [](const RunConfig& c) { return to_string(c.train.mask_mode); },
                  "training mask: predicted (thresholded P) or teacher (truth > 0)"}});
    b.push_back({"ablation",
                 {[](RunConfig& c, const std::string&, const std::string& v) { c.train.ablation = parse_ablation(v); },
                  [](const RunConfig& c) { return to_string(c.train.ablation); }, "none, -MSA, -TRR, -DSA or -MTP"}});
    STS_DOUBLE("grad_clip", train.grad_clip, "max global gradient norm, 0 disables clipping");
#undef STS_SIZE
#undef STS_DOUBLE
    return b;
  }();
  return table;
}

}  // namespace

Ablation parse_ablation(const std::string& text) {
  if (text == "none") return Ablation::kNone;
  if (text == "-MSA") return Ablation::kNoMsa;
  if (text == "-TRR") return Ablation::kNoTrr;
  if (text == "-DSA") return Ablation::kNoDsa;
  if (text == "-MTP") return Ablation::kNoMtp;
  throw ConfigError("unknown ablation `" + text + "` (expected none, -MSA, -TRR, -DSA or -MTP)");
}

std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::kNone:
      return "none";
    case Ablation::kNoMsa:
      return "-MSA";
    case Ablation::kNoTrr:
      return "-TRR";
    case Ablation::kNoDsa:
      return "-DSA";
    case Ablation::kNoMtp:
      return "-MTP";
  }
  return "none";
}

MaskMode parse_mask_mode(const std::string& text) {
  if (text == "predicted") return MaskMode::kPredicted;
  if (text == "teacher") return MaskMode::kTeacher;
  throw ConfigError("unknown mask_mode `" + text + "` (expected predicted or teacher)");
}

std::string to_string(MaskMode m) { return m == MaskMode::kPredicted ? "predicted" : "teacher"; }

void TrainConfig::validate() const {
  if (t_window < 1) throw ConfigError("t_window must be >= 1");
  if (d < 2 || d % 2 != 0) throw ConfigError("d must be even and >= 2 (positional encoding)");
  if (layers < 1) throw ConfigError("layers must be >= 1");
  if (heads < 1 || d % heads != 0) throw ConfigError("heads must divide d");
  if (!(lr0 > 0.0)) throw ConfigError("lr must be positive");
  if (!(decay > 0.0 && decay <= 1.0)) throw ConfigError("lr_decay must lie in (0, 1]");
  if (split_train == 0) throw ConfigError("split must give the training side a positive share");
  if (!(grad_clip >= 0.0)) throw ConfigError("grad_clip must be non-negative");
  loss.validate();
}

double SynthConfig::coupling(std::size_t to, std::size_t from) const {
  if (to == from) return 0.0;
  if (semantic_coupling.size() == 1) return semantic_coupling[0];
  return semantic_coupling[to * n_categories + from];
}

void SynthConfig::validate() const {
  if (grid_rows == 0 || grid_cols == 0) throw ConfigError("grid dimensions must be positive");
  if (n_categories == 0 || n_slots == 0) throw ConfigError("n_categories and n_slots must be positive");
  if (base_rate.size() != 1 && base_rate.size() != n_categories) {
    throw ConfigError("base_rate needs one value or one per category");
  }
  for (double r : base_rate)
    if (!(r >= 0.0)) throw ConfigError("base_rate must be non-negative");
  if (semantic_coupling.size() != 1 && semantic_coupling.size() != n_categories * n_categories) {
    throw ConfigError("semantic_coupling needs one value or C*C values");
  }
  for (double v : semantic_coupling)
    if (!(v >= 0.0)) throw ConfigError("semantic_coupling must be non-negative");
  if (!(autoregression >= 0.0) || !(spatial_diffusion >= 0.0) || !(region_heterogeneity >= 0.0)) {
    throw ConfigError("generator coefficients must be non-negative");
  }
  if (!(target_zero_ratio > 0.0 && target_zero_ratio < 1.0)) {
    throw ConfigError("target_zero_ratio must lie in (0, 1)");
  }
}

std::vector<std::string> DataConfig::category_names(std::size_t n_categories) const {
  for (const auto& name : categories) {
    if (name.empty() || name.find_first_of(" \t,") != std::string::npos) {
      throw ConfigError("category names must be non-empty and free of spaces and commas, got `" + name + "`");
    }
  }
  if (!categories.empty()) {
    if (categories.size() != n_categories) {
      throw ConfigError("categories lists " + std::to_string(categories.size()) + " names but n_categories is " +
                        std::to_string(n_categories));
    }
    return categories;
  }
  std::vector<std::string> names;
  for (std::size_t c = 0; c < n_categories; ++c) names.push_back("c" + std::to_string(c));
  return names;
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig cfg;
  std::map<std::string, const Binding*> index;
  for (const auto& [name, binding] : bindings()) index[name] = &binding;

  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string body = trim(line);
    if (body.empty() || body[0] == '#') continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected `key = value`");
    }
    const std::string key = trim(body.substr(0, eq));
    const std::string value = trim(body.substr(eq + 1));
    const auto it = index.find(key);
    if (it == index.end()) throw ConfigError("config line " + std::to_string(line_no) + ": unknown key `" + key + "`");
    try {
      it->second->set(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

std::string RunConfig::format() const {
  std::string out;
  for (const auto& [name, binding] : bindings()) out += name + " = " + binding.get(*this) + "\n";
  return out;
}

void RunConfig::validate() const {
  synth.validate();
  train.validate();
  (void)data.category_names(synth.n_categories);
  if (data.slot_seconds <= 0) throw ConfigError("slot_seconds must be positive");
}

std::string config_reference() {
  std::string out = "Config keys (flat `key = value`, '#' comments, unknown keys rejected):\n";
  const RunConfig defaults;
  for (const auto& [name, binding] : bindings()) {
    out += "  " + name + " (default " + binding.get(defaults) + "): " + binding.help + "\n";
  }
  return out;
}

std::uint64_t derive_seed(std::uint64_t seed, const std::string& purpose) {
  // FNV-1a over the purpose, then a splitmix64 finaliser.
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : purpose) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  std::uint64_t z = seed ^ h;
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace sts
