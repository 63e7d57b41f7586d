#include "sts/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "sts/errors.hpp"

namespace sts {

namespace {

constexpr const char* kMagic = "sts-checkpoint";

std::string hex_double(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

double parse_hex_double(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') throw DataError("checkpoint: bad number `" + s + "`");
  return v;
}

void put_double(std::string& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<char>(bits & 0xffu));
    bits >>= 8;
  }
}

double get_double(const std::string& in, std::size_t offset) {
  std::uint64_t bits = 0;
  for (int i = 7; i >= 0; --i) bits = (bits << 8) | static_cast<unsigned char>(in[offset + static_cast<std::size_t>(i)]);
  return std::bit_cast<double>(bits);
}

struct Entry {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

std::vector<Entry> norm_entries(const NormStats& s) {
  const std::size_t C = s.categories();
  return {{"norm.mu", {C}, s.mu}, {"norm.sigma", {C}, s.sigma}, {"norm.min", {C}, s.min}, {"norm.max", {C}, s.max}};
}

std::string expect_line(std::istringstream& in, const char* what) {
  std::string line;
  if (!std::getline(in, line)) throw DataError(std::string("checkpoint: truncated header, missing ") + what);
  return line;
}

Checkpoint parse_checkpoint(const std::string& bytes);

}  // namespace

Checkpoint Checkpoint::capture(const Model& model, const RunConfig& config, const NormStats& stats,
                               const std::vector<std::string>& categories, std::size_t best_epoch,
                               std::optional<double> best_val_mae) {
  Checkpoint ck;
  ck.config = config;
  ck.n_regions = model.spec().n_regions;
  ck.categories = categories;
  ck.best_epoch = best_epoch;
  ck.best_val_mae = best_val_mae;
  ck.stats = stats;
  for (const auto& p : model.params()) ck.params.push_back({p.name, p.value.detach()});
  return ck;
}

Model Checkpoint::restore(const RegionGraph& graph) const {
  const ModelSpec spec = ModelSpec::from(config.train, n_regions, categories.size());
  Model model(spec, graph, 0);
  const auto& target = model.params();
  if (target.size() != params.size()) {
    throw ConfigError("checkpoint holds " + std::to_string(params.size()) + " parameters, the configured model has " +
                      std::to_string(target.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (target[i].name != params[i].name || target[i].value.shape() != params[i].value.shape()) {
      throw ConfigError("checkpoint parameter `" + params[i].name + "` does not match the model's `" +
                        target[i].name + "`");
    }
    Tensor t = target[i].value;
    const auto src = params[i].value.data();
    std::copy(src.begin(), src.end(), t.mutable_data().begin());
  }
  return model;
}

std::string Checkpoint::serialize() const {
  std::vector<Entry> entries = norm_entries(stats);
  for (const auto& p : params) entries.push_back({p.name, p.value.shape(), p.value.to_vector()});

  std::string out;
  out += std::string(kMagic) + " " + std::to_string(kFormatVersion) + "\n";
  out += "regions " + std::to_string(n_regions) + "\n";
  out += "categories";
  for (const auto& c : categories) out += " " + c;
  out += "\n";
  out += "best_epoch " + std::to_string(best_epoch) + "\n";
  out += "best_val_mae " + (best_val_mae ? hex_double(*best_val_mae) : std::string("none")) + "\n";
  const std::string cfg = config.format();
  out += "config " + std::to_string(std::count(cfg.begin(), cfg.end(), '\n')) + "\n";
  out += cfg;
  out += "norm " + to_string(stats.kind) + "\n";
  for (const auto& e : entries) {
    out += "tensor " + e.name + " " + std::to_string(e.shape.size());
    for (std::size_t x : e.shape) out += " " + std::to_string(x);
    out += "\n";
  }
  out += "end\n";
  for (const auto& e : entries)
    for (double v : e.values) put_double(out, v);
  return out;
}

Checkpoint Checkpoint::deserialize(const std::string& bytes) {
  try {
    return parse_checkpoint(bytes);
  } catch (const std::invalid_argument&) {
    throw DataError("checkpoint: malformed header number");
  } catch (const std::out_of_range&) {
    throw DataError("checkpoint: header number out of range");
  }
}

namespace {

Checkpoint parse_checkpoint(const std::string& bytes) {
  const auto end_pos = bytes.find("\nend\n");
  if (end_pos == std::string::npos) throw DataError("checkpoint: header terminator not found");
  const std::size_t payload_start = end_pos + 5;
  std::istringstream in(bytes.substr(0, payload_start));

  Checkpoint ck;
  {
    std::istringstream ls(expect_line(in, "magic"));
    std::string magic;
    int version = 0;
    ls >> magic >> version;
    if (magic != kMagic) throw DataError("not a checkpoint file");
    if (version != Checkpoint::kFormatVersion) {
      throw DataError("checkpoint format version " + std::to_string(version) + " is not supported");
    }
  }
  auto keyed = [&](const char* key) {
    const std::string line = expect_line(in, key);
    const std::string prefix = std::string(key);
    if (line.rfind(prefix, 0) != 0) throw DataError("checkpoint: expected `" + prefix + "`, got `" + line + "`");
    return line.size() > prefix.size() ? line.substr(prefix.size() + 1) : std::string();
  };
  ck.n_regions = std::stoul(keyed("regions"));
  {
    std::istringstream ls(keyed("categories"));
    std::string c;
    while (ls >> c) ck.categories.push_back(c);
  }
  ck.best_epoch = std::stoul(keyed("best_epoch"));
  {
    const std::string v = keyed("best_val_mae");
    if (v != "none") ck.best_val_mae = parse_hex_double(v);
  }
  const std::size_t cfg_lines = std::stoul(keyed("config"));
  std::string cfg_text;
  for (std::size_t i = 0; i < cfg_lines; ++i) cfg_text += expect_line(in, "config line") + "\n";
  try {
    ck.config = RunConfig::parse(cfg_text);
  } catch (const ConfigError& e) {
    throw DataError(std::string("checkpoint: stored config is invalid: ") + e.what());
  }
  ck.stats.kind = parse_norm_kind(keyed("norm"));

  std::vector<Entry> entries;
  for (;;) {
    const std::string line = expect_line(in, "end");
    if (line == "end") break;
    std::istringstream ls(line);
    std::string tag;
    Entry e;
    std::size_t rank = 0;
    ls >> tag >> e.name >> rank;
    if (tag != "tensor" || !ls) throw DataError("checkpoint: bad manifest line `" + line + "`");
    for (std::size_t k = 0; k < rank; ++k) {
      std::size_t x = 0;
      if (!(ls >> x)) throw DataError("checkpoint: bad shape in `" + line + "`");
      e.shape.push_back(x);
    }
    entries.push_back(std::move(e));
  }

  std::size_t offset = payload_start;
  for (auto& e : entries) {
    const std::size_t n = sts::numel(e.shape);
    if (offset + 8 * n > bytes.size()) throw DataError("checkpoint: payload truncated at `" + e.name + "`");
    e.values.resize(n);
    for (std::size_t k = 0; k < n; ++k) e.values[k] = get_double(bytes, offset + 8 * k);
    offset += 8 * n;
  }
  if (offset != bytes.size()) throw DataError("checkpoint: trailing bytes after payload");

  for (auto& e : entries) {
    if (e.name == "norm.mu") {
      ck.stats.mu = e.values;
    } else if (e.name == "norm.sigma") {
      ck.stats.sigma = e.values;
    } else if (e.name == "norm.min") {
      ck.stats.min = e.values;
    } else if (e.name == "norm.max") {
      ck.stats.max = e.values;
    } else {
      ck.params.push_back({e.name, Tensor::from(e.shape, std::move(e.values))});
    }
  }
  if (ck.stats.mu.size() != ck.categories.size()) throw DataError("checkpoint: normalisation entries missing");
  return ck;
}

}  // namespace

void Checkpoint::save(const std::filesystem::path& path) const {
  const std::string bytes = serialize();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize(buf.str());
}

}  // namespace sts
