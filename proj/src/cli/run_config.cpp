#include "cli/run_config.hpp"

#include <charconv>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "fmhca/binary_io.hpp"

namespace fmhca::cli {
namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const std::string& expected) {
  throw Error(ErrorCode::InvalidArgument, "config key '" + key + "': '" + value + "' is not " + expected);
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  std::uint64_t out = 0;
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end || value.empty()) bad_value(key, value, "a nonnegative integer");
  return out;
}

double parse_double(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(value, &used);
  } catch (const std::exception&) {
    bad_value(key, value, "a number");
  }
  if (used != value.size()) bad_value(key, value, "a number");
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  bad_value(key, value, "a boolean");
}

std::array<double, 3> parse_triple(const std::string& key, const std::string& value) {
  std::array<double, 3> out{};
  std::stringstream in(value);
  std::string item;
  std::size_t i = 0;
  while (std::getline(in, item, ',')) {
    if (i == 3) bad_value(key, value, "three comma-separated numbers");
    out[i++] = parse_double(key, trim(item));
  }
  if (i != 3) bad_value(key, value, "three comma-separated numbers");
  return out;
}

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string format_triple(const std::array<double, 3>& v) {
  return format_double(v[0]) + "," + format_double(v[1]) + "," + format_double(v[2]);
}

struct Binding {
  ConfigKey key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename Field>
Binding size_binding(std::string name, KeyGroup group, std::string help, Field field) {
  return {{name, group, std::move(help)},
          [name, field](RunConfig& c, const std::string& v) { field(c) = parse_u64(name, v); },
          [field](const RunConfig& c) { return std::to_string(field(c)); }};
}

template <typename Field>
Binding double_binding(std::string name, KeyGroup group, std::string help, Field field) {
  return {{name, group, std::move(help)},
          [name, field](RunConfig& c, const std::string& v) { field(c) = parse_double(name, v); },
          [field](const RunConfig& c) { return format_double(field(c)); }};
}

template <typename Field>
Binding bool_binding(std::string name, KeyGroup group, std::string help, Field field) {
  return {{name, group, std::move(help)},
          [name, field](RunConfig& c, const std::string& v) { field(c) = parse_bool(name, v); },
          [field](const RunConfig& c) { return field(c) ? "true" : "false"; }};
}

const std::vector<Binding>& bindings() {
  using G = KeyGroup;
  static const std::vector<Binding> table = [] {
    std::vector<Binding> t;
    t.push_back(size_binding("companies", G::Data, "number of companies", [](auto& c) -> auto& { return c.data.companies; }));
    t.push_back(size_binding("d_emb", G::Data, "embedding width", [](auto& c) -> auto& { return c.data.d_emb; }));
    t.push_back(size_binding("timely_min", G::Data, "fewest timely opinions", [](auto& c) -> auto& { return c.data.timely_min; }));
    t.push_back(size_binding("timely_max", G::Data, "most timely opinions", [](auto& c) -> auto& { return c.data.timely_max; }));
    t.push_back(size_binding("trending_min", G::Data, "fewest trending opinions", [](auto& c) -> auto& { return c.data.trending_min; }));
    t.push_back(size_binding("trending_max", G::Data, "most trending opinions", [](auto& c) -> auto& { return c.data.trending_max; }));
    t.push_back({{"priors", G::Data, "negative,neutral,positive class priors"},
                 [](RunConfig& c, const std::string& v) { c.data.priors = parse_triple("priors", v); },
                 [](const RunConfig& c) { return format_triple(c.data.priors); }});
    t.push_back({{"task", G::Data, "separable | interaction"},
                 [](RunConfig& c, const std::string& v) { c.data.task = parse_task(v); },
                 [](const RunConfig& c) { return to_string(c.data.task); }});
    t.push_back(double_binding("noise", G::Data, "per-row Gaussian noise sigma", [](auto& c) -> auto& { return c.data.noise_sigma; }));
    t.push_back(size_binding("latent_dim", G::Data, "interaction task latent width", [](auto& c) -> auto& { return c.data.latent_dim; }));
    t.push_back(size_binding("data_seed", G::Data, "generator seed", [](auto& c) -> auto& { return c.data.seed; }));

    t.push_back({{"variant", G::Model, "full | no_cross_attention | no_fusion | mlp_baseline"},
                 [](RunConfig& c, const std::string& v) { c.model.variant = parse_variant(v); },
                 [](const RunConfig& c) { return to_string(c.model.variant); }});
    t.push_back(size_binding("d_model", G::Model, "model width", [](auto& c) -> auto& { return c.model.d_model; }));
    t.push_back(size_binding("heads", G::Model, "attention heads", [](auto& c) -> auto& { return c.model.heads; }));
    t.push_back(size_binding("factors", G::Model, "MFB factor count K", [](auto& c) -> auto& { return c.model.mfb_factors; }));
    t.push_back(size_binding("d_mfb", G::Model, "MFB output width", [](auto& c) -> auto& { return c.model.d_mfb; }));
    t.push_back(size_binding("d_ff", G::Model, "feed-forward width", [](auto& c) -> auto& { return c.model.d_ff; }));
    t.push_back(size_binding("layers", G::Model, "transformer layers per branch", [](auto& c) -> auto& { return c.model.n_layers; }));
    t.push_back(size_binding("mlp_hidden", G::Model, "MLP baseline hidden width", [](auto& c) -> auto& { return c.model.mlp_hidden; }));
    t.push_back(double_binding("dropout", G::Model, "dropout rate", [](auto& c) -> auto& { return c.model.dropout; }));
    t.push_back(bool_binding("projection_dropout", G::Model, "dropout on projected opinions", [](auto& c) -> auto& { return c.model.dropout_on_projection; }));
    t.push_back(bool_binding("share_fmhca", G::Model, "one parameter set for both FMHCA stages", [](auto& c) -> auto& { return c.model.share_fmhca; }));

    t.push_back(size_binding("epochs", G::Train, "training epochs", [](auto& c) -> auto& { return c.train.epochs; }));
    t.push_back(size_binding("batch_size", G::Train, "mini-batch size", [](auto& c) -> auto& { return c.train.batch_size; }));
    t.push_back(double_binding("lr", G::Train, "Adam learning rate", [](auto& c) -> auto& { return c.train.lr; }));
    t.push_back({{"seed", G::Train, "initialization, shuffling and dropout seed"},
                 [](RunConfig& c, const std::string& v) { c.train.seed = c.model.seed = parse_u64("seed", v); },
                 [](const RunConfig& c) { return std::to_string(c.train.seed); }});
    t.push_back(bool_binding("class_weighted", G::Train, "inverse-frequency class weights in the loss", [](auto& c) -> auto& { return c.train.class_weighted; }));
    t.push_back({{"split", G::Train, "train,val,test ratios"},
                 [](RunConfig& c, const std::string& v) { c.split_ratios = parse_triple("split", v); },
                 [](const RunConfig& c) { return format_triple(c.split_ratios); }});
    t.push_back(size_binding("split_seed", G::Train, "split shuffle seed", [](auto& c) -> auto& { return c.split_seed; }));
    return t;
  }();
  return table;
}

const Binding& binding(const std::string& key) {
  for (const auto& b : bindings())
    if (b.key.name == key) return b;
  throw Error(ErrorCode::InvalidArgument, "unknown config key '" + key + "'");
}

}  // namespace

RunConfig::RunConfig() {
  model.d_emb_in = data.d_emb;
}

void RunConfig::set(const std::string& key, const std::string& value) { binding(key).set(*this, trim(value)); }

std::string RunConfig::get(const std::string& key) const { return binding(key).get(*this); }

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> out;
    for (const auto& b : bindings()) out.push_back(b.key);
    return out;
  }();
  return keys;
}

std::vector<std::pair<std::string, std::string>> parse_config_text(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::set<std::string> seen;
  std::stringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::InvalidArgument, "config line " + std::to_string(line_no) + ": expected key = value");
    }
    auto key = trim(line.substr(0, eq));
    auto value = trim(line.substr(eq + 1));
    binding(key);
    if (!seen.insert(key).second) {
      throw Error(ErrorCode::InvalidArgument, "config key '" + key + "' given twice");
    }
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

void apply_config_file(RunConfig& config, const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  for (const auto& [key, value] : parse_config_text(std::string(bytes.begin(), bytes.end()))) config.set(key, value);
}

std::string describe(const RunConfig& config, const std::vector<KeyGroup>& groups) {
  std::string out;
  for (const auto& b : bindings()) {
    if (std::find(groups.begin(), groups.end(), b.key.group) == groups.end()) continue;
    out += b.key.name + " = " + b.get(config) + "\n";
  }
  return out;
}

}  // namespace fmhca::cli
