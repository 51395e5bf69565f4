#include "cli/commands.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "cli/experiments.hpp"
#include "fmhca/checkpoint.hpp"
#include "fmhca/ops.hpp"

namespace fmhca::cli {
namespace {

using nlohmann::json;

std::string dashed(std::string name) {
  std::replace(name.begin(), name.end(), '_', '-');
  return name;
}

// String-valued options bound to config keys; applied after any --config file.
class KeyOptions {
 public:
  void add(CLI::App& app, const std::vector<KeyGroup>& groups) {
    for (const auto& key : config_keys()) {
      if (std::find(groups.begin(), groups.end(), key.group) == groups.end()) continue;
      add_key(app, key.name, "--" + dashed(key.name), key.help);
    }
  }
  void add_key(CLI::App& app, const std::string& key, const std::string& flag, const std::string& help) {
    auto& slot = values_[key];
    options_.emplace_back(key, app.add_option(flag, slot, help));
  }
  void apply(RunConfig& config) const {
    for (const auto& [key, option] : options_)
      if (option->count() > 0) config.set(key, values_.at(key));
  }

 private:
  std::map<std::string, std::string> values_;
  std::vector<std::pair<std::string, CLI::Option*>> options_;
};

json metrics_json(const MetricsReport& m) {
  json confusion = json::array();
  for (const auto& row : m.confusion.counts) confusion.push_back(row);
  return {{"accuracy", m.accuracy},
          {"weighted_precision", m.weighted_precision},
          {"weighted_recall", m.weighted_recall},
          {"weighted_f1", m.weighted_f1},
          {"precision", m.precision},
          {"recall", m.recall},
          {"f1", m.f1},
          {"support", m.support},
          {"labels", {-1, 0, 1}},
          {"confusion_matrix", confusion}};
}

json attention_json(const AttentionMap& map) {
  json rows = json::array();
  for (std::size_t r = 0; r < map.rows; ++r)
    rows.push_back(std::vector<double>(map.values.begin() + static_cast<std::ptrdiff_t>(r * map.cols),
                                       map.values.begin() + static_cast<std::ptrdiff_t>((r + 1) * map.cols)));
  return {{"rows", map.rows}, {"cols", map.cols}, {"values", rows}};
}

void print_metrics_table(std::ostream& out, const MetricsReport& m) {
  static const char* names[] = {"negative", "neutral", "positive"};
  out << std::fixed << std::setprecision(4);
  out << "class       precision  recall     f1         support\n";
  for (std::size_t c = 0; c < 3; ++c) {
    out << std::left << std::setw(12) << names[c] << std::setw(11) << m.precision[c] << std::setw(11)
        << m.recall[c] << std::setw(11) << m.f1[c] << m.support[c] << "\n";
  }
  out << std::left << std::setw(12) << "weighted" << std::setw(11) << m.weighted_precision << std::setw(11)
      << m.weighted_recall << std::setw(11) << m.weighted_f1 << m.confusion.total() << "\n";
  out << "accuracy " << m.accuracy << "\n";
  out << "confusion (rows true, cols predicted; -1 0 +1)\n";
  for (const auto& row : m.confusion.counts) out << "  " << row[0] << " " << row[1] << " " << row[2] << "\n";
  out.unsetf(std::ios::floatfield);
  out << std::setprecision(6) << std::right;
}

void echo_config(std::ostream& err, const RunConfig& config, const std::vector<KeyGroup>& groups,
                 std::optional<Precision> precision = std::nullopt) {
  err << "# resolved config\n" << describe(config, groups);
  if (precision) err << "precision = " << to_string(*precision) << "\n";
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    RunConfig scratch;
    scratch.set("split_seed", item);
    seeds.push_back(scratch.split_seed);
  }
  if (seeds.empty()) throw Error(ErrorCode::InvalidArgument, "--seeds needs at least one seed");
  return seeds;
}

std::vector<Variant> parse_variants(const std::string& text) {
  std::vector<Variant> variants;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) variants.push_back(parse_variant(item));
  if (variants.empty()) throw Error(ErrorCode::InvalidArgument, "--variants needs at least one variant");
  return variants;
}

std::span<const OpinionPairSample> select_subset(const std::string& subset, const Dataset& data,
                                                 const DataSplit& parts) {
  if (subset == "all") return data.samples;
  if (subset == "train") return parts.train;
  if (subset == "val") return parts.val;
  if (subset == "test") return parts.test;
  throw Error(ErrorCode::InvalidArgument, "--subset must be all, train, val or test");
}

struct Commands {
  std::ostream& out;
  std::ostream& err;
  RunConfig config;
  std::string config_path;
  std::string data_path, out_path, history_path, checkpoint_path;
  std::string subset = "all";
  std::string seeds = "42,43,44";
  std::string variants = "full,no_cross_attention,no_fusion,mlp_baseline";
  std::string sample_id;
  bool full_scale = false;
  bool inject_fault = false;
  std::uint64_t check_seed = 1;
  double tolerance = 1e-4;
  KeyOptions keys;

  void resolve() {
    if (!config_path.empty()) apply_config_file(config, config_path);
    keys.apply(config);
  }

  int gen_data() {
    resolve();
    if (full_scale) config.data.use_full_scale_lengths();
    echo_config(err, config, {KeyGroup::Data});
    const auto data = generate_synthetic(config.data);
    write_dataset(data, out_path);
    out << json{{"out", out_path}, {"samples", data.samples.size()}, {"d_emb", data.d_emb}}.dump() << "\n";
    return exit_code::ok;
  }

  int train_cmd() {
    resolve();
    const auto precision = precision_from_env();
    const auto data = read_dataset(data_path);
    config.model.d_emb_in = data.d_emb;
    echo_config(err, config, {KeyGroup::Model, KeyGroup::Train}, precision);
    const auto parts = split(data.samples, config.split_ratios, config.split_seed);

    std::ofstream history;
    if (!history_path.empty()) {
      history.open(history_path, std::ios::trunc);
      if (!history) throw Error(ErrorCode::Io, "cannot write " + history_path);
    }
    const auto outcome = train_and_test(config.model, parts, config.train, precision, [&](const EpochRecord& r) {
      const json line{{"epoch", r.epoch},
                      {"train_loss", r.train_loss},
                      {"val_loss", r.val_loss},
                      {"val_accuracy", r.val_accuracy},
                      {"seconds", r.seconds}};
      if (history.is_open()) history << line.dump() << "\n" << std::flush;
      err << line.dump() << "\n";
    });
    save_checkpoint(outcome.params, out_path);
    out << json{{"checkpoint", out_path},
                {"variant", to_string(config.model.variant)},
                {"precision", to_string(precision)},
                {"epochs", outcome.history.epochs.size()},
                {"best_epoch", outcome.history.best_epoch},
                {"best_val_accuracy", outcome.history.best_val_accuracy},
                {"test", metrics_json(outcome.test)},
                {"seconds", outcome.seconds}}
               .dump()
        << "\n";
    return exit_code::ok;
  }

  int eval() {
    resolve();
    const auto precision = precision_from_env();
    const auto params = load_checkpoint<float>(checkpoint_path);
    const auto data = read_dataset(data_path);
    const auto cfg = infer_config(params);
    if (cfg.d_emb_in != data.d_emb) {
      throw Error(ErrorCode::ShapeMismatch, "checkpoint expects d_emb " + std::to_string(cfg.d_emb_in) +
                                                ", data has " + std::to_string(data.d_emb));
    }
    const auto parts = split(data.samples, config.split_ratios, config.split_seed);
    const auto subset_data = select_subset(subset, data, parts);
    const auto report = evaluate_params(params, cfg, subset_data, precision);
    out << "variant " << to_string(cfg.variant) << ", subset " << subset << ", " << subset_data.size()
        << " samples\n";
    print_metrics_table(out, report);
    out << json{{"variant", to_string(cfg.variant)}, {"subset", subset}, {"metrics", metrics_json(report)}}.dump()
        << "\n";
    return exit_code::ok;
  }

  int ablate() {
    resolve();
    const auto precision = precision_from_env();
    const auto data = read_dataset(data_path);
    config.model.d_emb_in = data.d_emb;
    const auto seed_list = parse_seeds(seeds);
    const auto variant_list = parse_variants(variants);
    echo_config(err, config, {KeyGroup::Model, KeyGroup::Train}, precision);
    const auto rows = run_ablation(data, config, variant_list, seed_list, precision,
                                   [&](Variant v, std::uint64_t seed, const RunOutcome& o) {
                                     err << to_string(v) << " seed " << seed << ": test accuracy "
                                         << o.test.accuracy << " (" << o.seconds << " s)\n";
                                   });
    out << std::left << std::setw(22) << "variant" << std::setw(12) << "accuracy" << "weighted_f1\n"
        << std::fixed << std::setprecision(4);
    for (const auto& row : rows) {
      out << std::setw(22) << to_string(row.variant) << std::setw(12) << row.mean_accuracy()
          << row.mean_weighted_f1() << "\n";
    }
    out.unsetf(std::ios::floatfield);
    out << std::setprecision(6) << std::right;
    for (const auto& row : rows) {
      out << json{{"variant", to_string(row.variant)},
                  {"seeds", row.seeds},
                  {"test_accuracy", row.test_accuracy},
                  {"test_weighted_f1", row.test_weighted_f1},
                  {"mean_accuracy", row.mean_accuracy()},
                  {"mean_weighted_f1", row.mean_weighted_f1()}}
                 .dump()
          << "\n";
    }
    return exit_code::ok;
  }

  int grad_check() {
    fault::set_matmul_grad_fault(inject_fault);
    std::vector<GradCheckLine> lines;
    try {
      lines = run_grad_check_suite(check_seed, tolerance);
    } catch (...) {
      fault::set_matmul_grad_fault(false);
      throw;
    }
    fault::set_matmul_grad_fault(false);
    std::size_t failures = 0;
    for (const auto& line : lines) {
      failures += line.passed() ? 0 : 1;
      out << (line.passed() ? "PASS " : "FAIL ") << std::left << std::setw(30) << line.name << std::right
          << std::scientific << std::setprecision(3) << line.max_relative_error << " (tol " << line.tolerance
          << ")";
      if (!line.passed()) out << " worst " << line.worst;
      out << "\n";
    }
    out.unsetf(std::ios::floatfield);
    out << std::setprecision(6);
    out << lines.size() - failures << "/" << lines.size() << " checks passed\n";
    return failures == 0 ? exit_code::ok : exit_code::failure;
  }

  int inspect() {
    const auto params = load_checkpoint<float>(checkpoint_path);
    const auto data = read_dataset(data_path);
    const auto dump = inspect_attention(params, data, sample_id);
    out << json{{"company_id", dump.company_id}, {"s1", attention_json(dump.s1)}, {"s2", attention_json(dump.s2)}}
               .dump()
        << "\n";
    return exit_code::ok;
  }
};

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Opinion-pair sentiment classification with two-stage cross-attention", "fmhca"};
  app.require_subcommand(1);
  Commands c{out, err, RunConfig{}, {}, {}, {}, {}, {}, "all", "42,43,44",
             "full,no_cross_attention,no_fusion,mlp_baseline", {}, false, false, 1, 1e-4, KeyOptions{}};

  auto* gen = app.add_subcommand("gen-data", "write a synthetic FOPD dataset");
  gen->add_option("--out", c.out_path, "output .fopd path")->required();
  gen->add_option("--config", c.config_path, "key = value config file");
  gen->add_flag("--full-scale", c.full_scale, "150..300 opinions per modality");
  c.keys.add(*gen, {KeyGroup::Data});
  c.keys.add_key(*gen, "data_seed", "--seed", "generator seed (same as --data-seed)");

  auto* train = app.add_subcommand("train", "train one model and save the best-validation checkpoint");
  train->add_option("--data", c.data_path, "input .fopd")->required();
  train->add_option("--out", c.out_path, "output .fckp")->required();
  train->add_option("--history", c.history_path, "per-epoch JSON lines");
  train->add_option("--config", c.config_path, "key = value config file");
  c.keys.add(*train, {KeyGroup::Model, KeyGroup::Train});

  auto* eval = app.add_subcommand("eval", "score a checkpoint on a dataset");
  eval->add_option("--checkpoint", c.checkpoint_path, "input .fckp")->required();
  eval->add_option("--data", c.data_path, "input .fopd")->required();
  eval->add_option("--subset", c.subset, "all | train | val | test");
  eval->add_option("--config", c.config_path, "key = value config file");
  c.keys.add_key(*eval, "split", "--split", "train,val,test ratios");
  c.keys.add_key(*eval, "split_seed", "--split-seed", "split shuffle seed");

  auto* ablate = app.add_subcommand("ablate", "train every variant over several seeds");
  ablate->add_option("--data", c.data_path, "input .fopd")->required();
  ablate->add_option("--config", c.config_path, "key = value config file");
  ablate->add_option("--seeds", c.seeds, "comma-separated seeds");
  ablate->add_option("--variants", c.variants, "comma-separated variants");
  c.keys.add(*ablate, {KeyGroup::Model, KeyGroup::Train});

  auto* grad = app.add_subcommand("grad-check", "finite-difference check of every differentiable block");
  grad->add_option("--seed", c.check_seed, "input seed");
  grad->add_option("--tolerance", c.tolerance, "maximum relative error");
  grad->add_flag("--inject-fault", c.inject_fault, "corrupt the matmul gradient (negative control)");

  auto* inspect = app.add_subcommand("inspect-attention", "dump the cross-attention maps for one sample");
  inspect->add_option("--checkpoint", c.checkpoint_path, "input .fckp")->required();
  inspect->add_option("--data", c.data_path, "input .fopd")->required();
  inspect->add_option("--sample", c.sample_id, "company id")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? exit_code::ok : exit_code::usage;
  }

  try {
    if (gen->parsed()) return c.gen_data();
    if (train->parsed()) return c.train_cmd();
    if (eval->parsed()) return c.eval();
    if (ablate->parsed()) return c.ablate();
    if (grad->parsed()) return c.grad_check();
    if (inspect->parsed()) return c.inspect();
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.code() == ErrorCode::NonFiniteLoss ? exit_code::failure : exit_code::usage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_code::usage;
  }
  return exit_code::usage;
}

}  // namespace fmhca::cli
