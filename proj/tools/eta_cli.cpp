// eta: data generation, training, evaluation, fingerprint precompute and
// benchmarks for the hashing-based long-sequence CTR model.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "eta/auc.hpp"
#include "eta/bench.hpp"
#include "eta/checkpoint.hpp"
#include "eta/config.hpp"
#include "eta/data.hpp"
#include "eta/error.hpp"
#include "eta/model.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Common {
  std::string config;
  std::string data;
  std::string out;
  std::string checkpoint;
  std::string fingerprints;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> variant;
  std::optional<std::size_t> k, bits, rounds, candidates;
  std::vector<std::size_t> long_len;
};

eta::ConfigFile load_config(const Common& o) {
  eta::ConfigFile f = o.config.empty() ? eta::ConfigFile{} : eta::ConfigFile::load(o.config);
  if (o.seed) f.set("model.seed", std::to_string(*o.seed));
  if (o.variant) f.set("model.variant", *o.variant);
  if (o.k) f.set("model.k", std::to_string(*o.k));
  if (o.bits) f.set("model.bits", std::to_string(*o.bits));
  if (o.rounds) f.set("model.rounds", std::to_string(*o.rounds));
  if (o.long_len.size() == 1) f.set("model.long_len", std::to_string(o.long_len.front()));
  return f;
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw eta::InvalidArgument(std::string("missing required flag ") + flag);
}

fs::path prepare_out(const std::string& out) {
  require(out, "--out");
  fs::create_directories(out);
  return out;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream f(path);
  if (!f) throw eta::IoError("cannot write " + path.string());
  return f;
}

void trim_splits(eta::DatasetSplits& data, const eta::ModelConfig& c) {
  for (auto* split : {&data.train, &data.valid, &data.test})
    for (auto& s : *split) s = eta::trim_sample(s, c.short_len, c.long_len);
}

std::vector<int> labels_of(const std::vector<eta::Sample>& samples) {
  std::vector<int> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.label);
  return out;
}

double auc_or_nan(const std::vector<double>& scores, const std::vector<eta::Sample>& samples) {
  try {
    return eta::auc(scores, labels_of(samples));
  } catch (const eta::InvalidArgument&) {
    return std::nan("");
  }
}

json metric(double v) { return std::isnan(v) ? json(nullptr) : json(v); }

void cmd_gen_data(const Common& o, const std::string& log_path) {
  const auto file = load_config(o);
  const fs::path out = prepare_out(o.out);
  auto data_cfg = eta::data_config_from(file);
  if (o.long_len.size() == 1) data_cfg.long_len = o.long_len.front();
  eta::BehaviorLog log;
  if (!log_path.empty()) {
    log = eta::load_behavior_log(log_path);
    std::cerr << "loaded " << log.rows << " rows, " << log.malformed << " malformed\n";
  } else {
    auto spec = eta::synthetic_spec_from(file);
    if (o.seed) spec.seed = *o.seed;
    auto syn = eta::generate_synthetic(spec);
    auto f = open_out(out / "interests.tsv");
    f << "user\tcategories\n";
    for (const auto& [user, cats] : syn.interests) {
      f << user << '\t';
      for (std::size_t i = 0; i < cats.size(); ++i) f << (i ? "," : "") << cats[i];
      f << '\n';
    }
    log = std::move(syn.log);
  }
  eta::write_behavior_log(log, out / "events.csv");
  const auto built = eta::build_dataset(log, data_cfg.short_len, data_cfg.long_len,
                                        data_cfg.negatives_per_positive, data_cfg.seed);
  eta::write_dataset(built.splits, built.ids, built.stats, out);
  std::cout << "wrote " << out.string() << ": train " << built.splits.train.size() << ", valid "
            << built.splits.valid.size() << ", test " << built.splits.test.size() << " samples ("
            << built.stats.users_skipped << " users skipped, " << built.stats.fallback_negatives
            << " fallback negatives)\n";
}

void cmd_train(const Common& o) {
  require(o.data, "--data");
  const auto file = load_config(o);
  const auto config = eta::model_config_from(file);
  config.validate();
  const fs::path out = prepare_out(o.out);
  auto data = eta::read_dataset(o.data);
  trim_splits(data, config);
  const auto result = eta::train(data, config);

  eta::save_checkpoint(config, result.params, out / "model.ckpt");
  // Report test metrics for the parameters as stored, so eval reproduces them.
  const auto params = eta::round_trip_f32(config, result.params);
  {
    auto f = open_out(out / "metrics.csv");
    f << "epoch,train_loss,train_auc,valid_auc\n";
    for (const auto& m : result.metrics) {
      f << m.epoch << ',' << m.train_loss << ',' << m.train_auc << ',' << m.valid_auc << '\n';
    }
  }
  const double test_auc = auc_or_nan(eta::predict(data.test, params, config), data.test);
  json summary;
  summary["variant"] = std::string(eta::variant_name(config.variant));
  summary["label"] = eta::variant_label(config);
  summary["best_epoch"] = result.best_epoch;
  summary["epochs"] = result.metrics.size();
  summary["valid_auc"] = result.best_epoch ? metric(result.metrics[result.best_epoch - 1].valid_auc) : json(nullptr);
  summary["test_auc"] = metric(test_auc);
  summary["test_samples"] = data.test.size();
  summary["parameters"] = result.params.weights.parameter_count();
  summary["config"] = eta::model_config_text(config);
  open_out(out / "summary.json") << summary.dump(2) << '\n';
  std::cout << summary.dump(2) << '\n';
}

eta::Checkpoint load_model(const Common& o) {
  require(o.checkpoint, "--checkpoint");
  return eta::load_checkpoint(o.checkpoint);
}

std::optional<eta::FingerprintTable> load_table(const Common& o, const eta::Checkpoint& ck) {
  if (o.fingerprints.empty()) return std::nullopt;
  auto table = eta::deserialize_fingerprints(o.fingerprints);
  eta::verify_fingerprint_table(table, ck.params, ck.config);
  return table;
}

void cmd_eval(const Common& o) {
  require(o.data, "--data");
  const auto ck = load_model(o);
  const auto table = load_table(o, ck);
  auto data = eta::read_dataset(o.data);
  trim_splits(data, ck.config);
  if (data.vocab != ck.params.vocab) throw eta::InvalidArgument("dataset vocabulary does not match the checkpoint");
  const auto scores = eta::predict(data.test, ck.params, ck.config, table ? &*table : nullptr);
  const double test_auc = auc_or_nan(scores, data.test);
  json summary;
  summary["variant"] = std::string(eta::variant_name(ck.config.variant));
  summary["label"] = eta::variant_label(ck.config);
  summary["test_auc"] = metric(test_auc);
  summary["test_samples"] = data.test.size();
  summary["precomputed_fingerprints"] = table.has_value();
  if (!o.out.empty()) {
    const fs::path out = prepare_out(o.out);
    auto f = open_out(out / "scores.csv");
    f << "index,user,item,label,score\n";
    char buf[32];
    for (std::size_t i = 0; i < scores.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", scores[i]);
      const auto& s = data.test[i];
      f << i << ',' << s.user << ',' << s.target_item << ',' << s.label << ',' << buf << '\n';
    }
    open_out(out / "eval.json") << summary.dump(2) << '\n';
  }
  std::cout << summary.dump(2) << '\n';
}

void cmd_precompute(const Common& o) {
  const auto ck = load_model(o);
  require(o.out, "--out");
  const auto table = eta::precompute_item_fingerprints(ck.params, ck.config);
  eta::serialize_fingerprints(table, o.out);
  std::cout << "wrote " << table.size() << " fingerprints (" << table.rounds() << " x " << table.bits_per_round()
            << " bits) to " << o.out << '\n';
}

eta::TimingOptions timing_from(const eta::ConfigFile& f) {
  eta::TimingOptions t;
  t.requests = f.get_count("bench.requests", t.requests);
  t.warmup = f.get_count("bench.warmup", t.warmup);
  return t;
}

void cmd_bench_ablation(const Common& o) {
  const auto file = load_config(o);
  const auto base = eta::model_config_from(file);
  const fs::path out = prepare_out(o.out);
  std::vector<std::string> variants = file.get_strings("bench.variants", {std::string(eta::variant_name(base.variant))});
  if (o.variant) variants = {*o.variant};
  auto lens = file.get_counts("bench.long_len", {base.long_len});
  if (!o.long_len.empty()) lens = o.long_len;
  auto ks = file.get_counts("bench.k", {base.k});
  if (o.k) ks = {*o.k};
  auto bits = file.get_counts("bench.bits", {base.bits});
  if (o.bits) bits = {*o.bits};
  const std::size_t nc = o.candidates.value_or(file.get_count("bench.candidates", 128));

  std::vector<eta::BenchCell> cells;
  for (const auto& v : variants)
    for (auto L : lens)
      for (auto k : ks)
        for (auto m : bits) {
          eta::BenchCell cell;
          cell.config = base;
          cell.config.variant = eta::parse_variant(v);
          cell.config.long_len = L;
          cell.config.k = std::min(k, L);
          cell.config.bits = m;
          cell.candidates = nc;
          cells.push_back(cell);
        }
  std::optional<eta::DatasetSplits> data;
  if (!o.data.empty()) data = eta::read_dataset(o.data);
  const auto report = eta::run_ablation(cells, data ? &*data : nullptr, timing_from(file),
                                        file.get_u64("bench.request_seed", 99));
  auto csv = open_out(out / "ablation.csv");
  eta::write_report_csv(report, csv);
  auto js = open_out(out / "ablation.json");
  eta::write_report_json(report, js);
  eta::write_report_csv(report, std::cout);
  for (const auto& r : report.records)
    if (!r.error.empty()) std::cerr << "cell " << r.label << " failed: " << r.error << '\n';
}

void cmd_bench_scaling(const Common& o) {
  const auto file = load_config(o);
  auto base = eta::model_config_from(file);
  const fs::path out = prepare_out(o.out);
  auto lens = file.get_counts("bench.long_len", {256, 512, 1024, 2048});
  if (!o.long_len.empty()) lens = o.long_len;
  auto ncs = file.get_counts("bench.candidates", {128});
  if (o.candidates) ncs = {*o.candidates};
  const eta::Vocab vocab{1000, 100000, 1000, 24};
  const auto rows = eta::run_scaling(base, vocab, lens, ncs, timing_from(file), file.get_u64("bench.request_seed", 99));
  auto csv = open_out(out / "scaling.csv");
  eta::write_scaling_csv(rows, base, csv);
  eta::write_scaling_csv(rows, base, std::cout);
}

void cmd_retrieve(const Common& o, std::size_t index) {
  require(o.data, "--data");
  const auto ck = load_model(o);
  const auto table = load_table(o, ck);
  auto data = eta::read_dataset(o.data);
  trim_splits(data, ck.config);
  if (index >= data.test.size()) throw eta::InvalidArgument("--index beyond the test split");
  const auto& s = data.test[index];
  const auto tr = eta::forward_trace(s, ck.params, ck.config, table ? &*table : nullptr);
  std::cout << "sample " << index << ": user " << s.user << ", target item " << s.target_item << " (category "
            << s.target_category << "), label " << s.label << ", score " << tr.probability << '\n';
  std::cout << "rank,position,item,category,timestamp,score\n";
  for (std::size_t r = 0; r < tr.selection.indices.size(); ++r) {
    const auto pos = tr.selection.indices[r];
    const auto& b = s.long_seq[pos];
    std::cout << r + 1 << ',' << pos << ',' << b.item << ',' << b.category << ',' << b.timestamp << ','
              << tr.selection.scores[r] << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hashing-based efficient target attention: data, training and benchmarks"};
  app.require_subcommand(1);
  Common o;
  std::string log_path;
  std::size_t index = 0;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "key = value config file");
    sub->add_option("--seed", o.seed, "overrides model.seed (synthetic.seed for gen-data)");
    sub->add_option("--out", o.out, "output directory or file");
  };
  auto model_flags = [&](CLI::App* sub) {
    sub->add_option("--variant", o.variant, "POOLING, DIN_SHORT, DIN_LONG_AVG, ETA, FULL_TA, SIM_HARD, ETA_DOT");
    sub->add_option("--k", o.k, "retrieved behaviors K");
    sub->add_option("--long-len", o.long_len, "long sequence capacity (comma list for bench commands)")->delimiter(',');
    sub->add_option("--bits", o.bits, "bits per hash round m");
    sub->add_option("--rounds", o.rounds, "hash rounds n_r");
  };

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic log (or ingest --log) and build samples");
  common(gen);
  gen->add_option("--log", log_path, "existing behavior log to ingest instead of generating");
  gen->add_option("--long-len", o.long_len, "long sequence length stored in samples");

  auto* tr = app.add_subcommand("train", "train a model; writes model.ckpt, metrics.csv, summary.json");
  common(tr);
  model_flags(tr);
  tr->add_option("--data", o.data, "dataset directory")->required();

  auto* ev = app.add_subcommand("eval", "score the test split of a dataset with a checkpoint");
  common(ev);
  ev->add_option("--data", o.data, "dataset directory")->required();
  ev->add_option("--checkpoint", o.checkpoint, "model checkpoint")->required();
  ev->add_option("--fingerprints", o.fingerprints, "precomputed fingerprint table");

  auto* pre = app.add_subcommand("precompute", "write per-item fingerprints for a checkpoint");
  pre->add_option("--checkpoint", o.checkpoint, "model checkpoint")->required();
  pre->add_option("--out", o.out, "fingerprint table path")->required();

  auto* abl = app.add_subcommand("bench-ablation", "AUC and scoring latency over a grid of variants and shapes");
  common(abl);
  model_flags(abl);
  abl->add_option("--data", o.data, "dataset directory; without it only latency is measured");
  abl->add_option("--candidates", o.candidates, "candidates per request N_c");

  auto* sc = app.add_subcommand("bench-scaling", "stage latencies over L and N_c");
  common(sc);
  model_flags(sc);
  sc->add_option("--candidates", o.candidates, "candidates per request N_c");

  auto* ret = app.add_subcommand("retrieve", "print the retrieved long-sequence behaviors for one test sample");
  ret->add_option("--checkpoint", o.checkpoint, "model checkpoint")->required();
  ret->add_option("--data", o.data, "dataset directory")->required();
  ret->add_option("--fingerprints", o.fingerprints, "precomputed fingerprint table");
  ret->add_option("--index", index, "test sample index");

  CLI11_PARSE(app, argc, argv);
  try {
    if (gen->parsed()) cmd_gen_data(o, log_path);
    else if (tr->parsed()) cmd_train(o);
    else if (ev->parsed()) cmd_eval(o);
    else if (pre->parsed()) cmd_precompute(o);
    else if (abl->parsed()) cmd_bench_ablation(o);
    else if (sc->parsed()) cmd_bench_scaling(o);
    else if (ret->parsed()) cmd_retrieve(o, index);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
