#include "eta/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <memory>
#include <ostream>

#include <json.hpp>

#include "eta/auc.hpp"
#include "eta/data.hpp"
#include "eta/error.hpp"
#include "eta/rng.hpp"

namespace eta {

namespace {

using Clock = std::chrono::steady_clock;

double micros(Clock::duration d) { return std::chrono::duration<double, std::micro>(d).count(); }

// Keeps the optimizer from discarding work whose result is otherwise unused.
volatile double g_sink = 0.0;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

void check_options(const TimingOptions& o, std::size_t available) {
  if (o.requests == 0) throw InvalidArgument("bench: need at least one timed request");
  if (available == 0) throw InvalidArgument("bench: no simulated requests");
}

const SimulatedRequest& pick(const std::vector<SimulatedRequest>& reqs, std::size_t i) {
  return reqs[i % reqs.size()];
}

struct StageSamples {
  std::vector<double> prep, query, retrieval, attention, head, total;

  StageLatency summarize() {
    return {summarize_latencies(std::move(prep)),      summarize_latencies(std::move(query)),
            summarize_latencies(std::move(retrieval)), summarize_latencies(std::move(attention)),
            summarize_latencies(std::move(head)),      summarize_latencies(std::move(total))};
  }
};

// Times requests first .. first+count-1 (cycling through the pool); a null
// `out` runs them as warm-up.
void time_stages(const std::vector<SimulatedRequest>& reqs, const ModelParams& params, const ModelConfig& config,
                 const FingerprintTable* item_fps, std::size_t first, std::size_t count, StageSamples* out) {
  for (std::size_t i = first; i < first + count; ++i) {
    const auto& r = pick(reqs, i);
    double tq = 0, tr = 0, ta = 0, th = 0, acc = 0;
    const auto t0 = Clock::now();
    const RequestScorer scorer(r.request, params, config, item_fps);
    const auto t1 = Clock::now();
    for (const auto& c : r.candidates) {
      const auto a = Clock::now();
      const auto q = scorer.query(c);
      const auto b = Clock::now();
      const auto sel = scorer.select(q);
      const auto e = Clock::now();
      const auto rep = scorer.long_representation(q, sel);
      const auto f = Clock::now();
      acc += scorer.head(q, rep);
      const auto g = Clock::now();
      tq += micros(b - a);
      tr += micros(e - b);
      ta += micros(f - e);
      th += micros(g - f);
    }
    const auto t2 = Clock::now();
    g_sink = g_sink + acc;
    if (!out) continue;
    out->prep.push_back(micros(t1 - t0));
    out->query.push_back(tq);
    out->retrieval.push_back(tr);
    out->attention.push_back(ta);
    out->head.push_back(th);
    out->total.push_back(micros(t2 - t0));
  }
}

std::vector<double> test_scores(const std::vector<Sample>& test, const ModelParams& params, const ModelConfig& config) {
  std::vector<Sample> trimmed;
  trimmed.reserve(test.size());
  for (const auto& s : test) trimmed.push_back(trim_sample(s, config.short_len, config.long_len));
  return predict(trimmed, params, config);
}

}  // namespace

LatencyStats summarize_latencies(std::vector<double> us) {
  LatencyStats s;
  s.iterations = us.size();
  if (us.empty()) return s;
  double sum = 0.0;
  for (double v : us) sum += v;
  s.mean_us = sum / static_cast<double>(us.size());
  std::sort(us.begin(), us.end());
  auto rank = [&](double q) {
    const auto r = static_cast<std::size_t>(std::ceil(q * static_cast<double>(us.size())));
    return us[std::clamp<std::size_t>(r, 1, us.size()) - 1];
  };
  s.p50_us = rank(0.50);
  s.p95_us = rank(0.95);
  return s;
}

std::vector<std::int64_t> round_robin_categories(const Vocab& vocab) {
  if (vocab.categories == 0) throw InvalidArgument("round_robin_categories: no categories");
  std::vector<std::int64_t> cats(vocab.items + 1, 0);
  for (std::size_t i = 1; i <= vocab.items; ++i) cats[i] = static_cast<std::int64_t>((i - 1) % vocab.categories + 1);
  return cats;
}

std::vector<SimulatedRequest> simulate_requests(const ModelParams& params, std::size_t count,
                                                std::size_t short_len, std::size_t long_len,
                                                std::size_t candidates, std::uint64_t seed) {
  const auto& v = params.vocab;
  if (v.items == 0 || v.users == 0 || v.contexts == 0) throw InvalidArgument("simulate_requests: empty vocabulary");
  if (candidates == 0) throw InvalidArgument("simulate_requests: need at least one candidate");
  Rng rng(seed);
  auto item = [&] { return static_cast<std::int64_t>(rng.below(v.items) + 1); };
  std::vector<SimulatedRequest> out(count);
  for (auto& r : out) {
    r.request.user = static_cast<std::int64_t>(rng.below(v.users) + 1);
    r.request.context = static_cast<std::int64_t>(rng.below(v.contexts) + 1);
    r.request.timestamp = 1'600'000'000;
    auto fill = [&](std::vector<Behavior>& seq, std::size_t n) {
      seq.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        const auto it = item();
        seq[i] = {it, params.item_category[static_cast<std::size_t>(it)],
                  r.request.timestamp - static_cast<std::int64_t>((n - i) * 3600)};
      }
    };
    fill(r.request.long_seq, long_len);
    fill(r.request.short_seq, std::min(short_len, long_len));
    r.candidates.resize(candidates);
    for (auto& c : r.candidates) {
      c.item = item();
      c.category = params.item_category[static_cast<std::size_t>(c.item)];
    }
  }
  return out;
}

LatencyStats measure_request_latency(const std::vector<SimulatedRequest>& reqs, const ModelParams& params,
                                     const ModelConfig& config, const TimingOptions& options,
                                     const FingerprintTable* item_fps) {
  check_options(options, reqs.size());
  auto run = [&](const SimulatedRequest& r) {
    const RequestScorer scorer(r.request, params, config, item_fps);
    double acc = 0.0;
    for (const auto& c : r.candidates) acc += scorer.score(c);
    return acc;
  };
  for (std::size_t i = 0; i < options.warmup; ++i) g_sink = g_sink + run(pick(reqs, i));
  std::vector<double> samples;
  samples.reserve(options.requests);
  for (std::size_t i = 0; i < options.requests; ++i) {
    const auto& r = pick(reqs, options.warmup + i);
    const auto t0 = Clock::now();
    const double acc = run(r);
    const auto t1 = Clock::now();
    g_sink = g_sink + acc;
    samples.push_back(micros(t1 - t0));
  }
  return summarize_latencies(std::move(samples));
}

StageLatency measure_stage_latency(const std::vector<SimulatedRequest>& reqs, const ModelParams& params,
                                   const ModelConfig& config, const TimingOptions& options,
                                   const FingerprintTable* item_fps) {
  check_options(options, reqs.size());
  time_stages(reqs, params, config, item_fps, 0, options.warmup, nullptr);
  StageSamples samples;
  time_stages(reqs, params, config, item_fps, options.warmup, options.requests, &samples);
  return samples.summarize();
}

std::string environment_note() {
  std::string note;
#if defined(__clang__)
  note += "clang " __clang_version__;
#elif defined(__GNUC__)
  note += "gcc " + std::to_string(__GNUC__) + "." + std::to_string(__GNUC_MINOR__) + "." +
          std::to_string(__GNUC_PATCHLEVEL__);
#else
  note += "unknown compiler";
#endif
#ifdef NDEBUG
  note += ", optimized build";
#else
  note += ", debug build";
#endif
  note += ", single-threaded scoring, steady_clock";
  return note;
}

void write_report_csv(const BenchReport& report, std::ostream& out) {
  out << "label,variant,auc,mean_us,p50_us,p95_us,requests,warmup,L,K,N_c,d,m,n_r,error\n";
  for (const auto& r : report.records) {
    out << csv_escape(r.label) << ',' << r.variant << ',' << (r.auc ? fmt(*r.auc) : "") << ','
        << fmt(r.latency.mean_us) << ',' << fmt(r.latency.p50_us) << ',' << fmt(r.latency.p95_us) << ','
        << r.latency.iterations << ',' << r.warmup << ',' << r.long_len << ',' << r.k << ',' << r.candidates
        << ',' << r.d << ',' << r.bits << ',' << r.rounds << ',' << csv_escape(r.error) << '\n';
  }
}

void write_report_json(const BenchReport& report, std::ostream& out) {
  nlohmann::json doc;
  doc["environment"] = report.environment;
  doc["records"] = nlohmann::json::array();
  for (const auto& r : report.records) {
    nlohmann::json j;
    j["label"] = r.label;
    j["variant"] = r.variant;
    j["auc"] = r.auc ? nlohmann::json(*r.auc) : nlohmann::json(nullptr);
    j["latency_us"] = {{"mean", r.latency.mean_us}, {"p50", r.latency.p50_us}, {"p95", r.latency.p95_us}};
    j["requests"] = r.latency.iterations;
    j["warmup"] = r.warmup;
    j["shape"] = {{"L", r.long_len}, {"K", r.k}, {"N_c", r.candidates},
                  {"d", r.d},        {"m", r.bits}, {"n_r", r.rounds}};
    if (!r.error.empty()) j["error"] = r.error;
    doc["records"].push_back(std::move(j));
  }
  out << doc.dump(2) << '\n';
}

BenchReport run_ablation(const std::vector<BenchCell>& cells, const DatasetSplits* data,
                         const TimingOptions& options, std::uint64_t request_seed) {
  BenchReport report;
  report.environment = environment_note();
  for (const auto& cell : cells) {
    const auto& c = cell.config;
    BenchRecord rec;
    rec.label = variant_label(c);
    rec.variant = std::string(variant_name(c.variant));
    rec.long_len = c.long_len;
    rec.k = c.k;
    rec.candidates = cell.candidates;
    rec.d = c.d;
    rec.bits = c.bits;
    rec.rounds = c.rounds;
    rec.warmup = options.warmup;
    try {
      ModelParams params;
      if (data != nullptr) {
        DatasetSplits trimmed = *data;
        for (auto* split : {&trimmed.train, &trimmed.valid})
          for (auto& s : *split) s = trim_sample(s, c.short_len, c.long_len);
        params = train(trimmed, c).params;
        std::vector<int> labels;
        for (const auto& s : data->test) labels.push_back(s.label);
        rec.auc = auc(test_scores(data->test, params, c), labels);
      } else {
        Vocab vocab{1000, 100000, 1000, 24};
        params = init_params(c, vocab, round_robin_categories(vocab));
      }
      const std::size_t pool = std::min<std::size_t>(options.warmup + options.requests, 256);
      const auto reqs = simulate_requests(params, pool, c.short_len, c.long_len, cell.candidates, request_seed);
      rec.latency = measure_request_latency(reqs, params, c, options);
    } catch (const std::exception& e) {
      rec.error = e.what();
    }
    report.records.push_back(std::move(rec));
  }
  return report;
}

std::vector<ScalingRow> run_scaling(const ModelConfig& base, const Vocab& vocab,
                                    const std::vector<std::size_t>& long_lens,
                                    const std::vector<std::size_t>& candidates,
                                    const TimingOptions& options, std::uint64_t seed) {
  if (long_lens.empty() || candidates.empty()) throw InvalidArgument("bench-scaling: empty L or N_c list");
  if (options.requests == 0) throw InvalidArgument("bench: need at least one timed request");
  struct Cell {
    std::size_t long_len, candidates;
    ModelConfig config;
    std::shared_ptr<const ModelParams> params;
    std::vector<SimulatedRequest> reqs;
    StageSamples samples;
  };
  std::vector<Cell> cells;
  for (auto L : long_lens) {
    ModelConfig c = base;
    c.long_len = L;
    c.k = std::min(base.k, L);
    const auto params = std::make_shared<const ModelParams>(init_params(c, vocab, round_robin_categories(vocab)));
    for (auto nc : candidates) {
      const std::size_t pool = std::min<std::size_t>(options.warmup + options.requests, 128);
      cells.push_back({L, nc, c, params, simulate_requests(*params, pool, c.short_len, L, nc, seed), {}});
    }
  }
  // Cells take turns in short slices so slow drift in machine speed lands
  // on every (L, N_c) alike instead of on whichever ran last.
  for (auto& cell : cells) time_stages(cell.reqs, *cell.params, cell.config, nullptr, 0, options.warmup, nullptr);
  constexpr std::size_t kSlices = 10;
  const std::size_t slice = (options.requests + kSlices - 1) / kSlices;
  for (std::size_t done = 0; done < options.requests; done += slice) {
    const std::size_t n = std::min(slice, options.requests - done);
    for (auto& cell : cells) {
      time_stages(cell.reqs, *cell.params, cell.config, nullptr, options.warmup + done, n, &cell.samples);
    }
  }
  std::vector<ScalingRow> rows;
  for (auto& cell : cells) rows.push_back({cell.long_len, cell.candidates, cell.samples.summarize()});
  return rows;
}

void write_scaling_csv(const std::vector<ScalingRow>& rows, const ModelConfig& base, std::ostream& out) {
  out << "variant,L,K,N_c,d,m,n_r,requests,prep_us,query_us,retrieval_us,attention_us,head_us,total_us,"
         "total_p50_us,total_p95_us\n";
  for (const auto& r : rows) {
    const auto& s = r.stages;
    out << variant_name(base.variant) << ',' << r.long_len << ',' << std::min(base.k, r.long_len) << ','
        << r.candidates << ',' << base.d << ',' << base.bits << ',' << base.rounds << ',' << s.total.iterations
        << ',' << fmt(s.prep.mean_us) << ',' << fmt(s.query.mean_us) << ',' << fmt(s.retrieval.mean_us) << ','
        << fmt(s.attention.mean_us) << ',' << fmt(s.head.mean_us) << ',' << fmt(s.total.mean_us) << ','
        << fmt(s.total.p50_us) << ',' << fmt(s.total.p95_us) << '\n';
  }
}

}  // namespace eta
