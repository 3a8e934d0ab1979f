#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "eta/model.hpp"

namespace eta {

struct LatencyStats {
  double mean_us = 0.0;
  double p50_us = 0.0;
  double p95_us = 0.0;
  std::size_t iterations = 0;
};

/// Nearest-rank percentiles over microsecond samples.
LatencyStats summarize_latencies(std::vector<double> micros);

/// Random requests over the model's vocabulary: `long_len` and `short_len`
/// behaviors each, plus `candidates` candidate items per request.
struct SimulatedRequest {
  UserRequest request;
  std::vector<Candidate> candidates;
};
std::vector<SimulatedRequest> simulate_requests(const ModelParams& params, std::size_t count,
                                                std::size_t short_len, std::size_t long_len,
                                                std::size_t candidates, std::uint64_t seed);

struct TimingOptions {
  std::size_t warmup = 100;
  std::size_t requests = 1000;
};

/// Wall time of scoring every candidate of a request (RequestScorer
/// construction included), one sample per request.
LatencyStats measure_request_latency(const std::vector<SimulatedRequest>& requests,
                                     const ModelParams& params, const ModelConfig& config,
                                     const TimingOptions& options,
                                     const FingerprintTable* item_fps = nullptr);

/// Per-request stage times. `prep` is the per-request sequence work
/// (embedding lookup, key/value projection, key hashing); the others are
/// summed over the request's candidates.
struct StageLatency {
  LatencyStats prep, query, retrieval, attention, head, total;
};
StageLatency measure_stage_latency(const std::vector<SimulatedRequest>& requests, const ModelParams& params,
                                   const ModelConfig& config, const TimingOptions& options,
                                   const FingerprintTable* item_fps = nullptr);

/// One row of an ablation or sweep report.
struct BenchRecord {
  std::string label;  ///< technique/retrieval/L/K
  std::string variant;
  std::optional<double> auc;  ///< test AUC when the cell was trained
  LatencyStats latency;
  std::size_t long_len = 0, k = 0, candidates = 0, d = 0, bits = 0, rounds = 0;
  std::size_t warmup = 0;
  std::string error;  ///< non-empty when the cell failed
};

struct BenchReport {
  std::vector<BenchRecord> records;
  std::string environment;
};

/// Compiler, build type and thread count.
std::string environment_note();

void write_report_csv(const BenchReport& report, std::ostream& out);
void write_report_json(const BenchReport& report, std::ostream& out);

/// One cell of an ablation grid.
struct BenchCell {
  ModelConfig config;
  std::size_t candidates = 128;
};

/// Trains each cell on `data` when given (test AUC), then times scoring on
/// simulated requests. A failing cell is recorded and the rest continue.
BenchReport run_ablation(const std::vector<BenchCell>& cells, const DatasetSplits* data,
                         const TimingOptions& options, std::uint64_t request_seed);

struct ScalingRow {
  std::size_t long_len = 0, candidates = 0;
  StageLatency stages;
};

/// ETA stage latencies for every (L, N_c) pair with an untrained model.
std::vector<ScalingRow> run_scaling(const ModelConfig& base, const Vocab& vocab,
                                    const std::vector<std::size_t>& long_lens,
                                    const std::vector<std::size_t>& candidates,
                                    const TimingOptions& options, std::uint64_t seed);

void write_scaling_csv(const std::vector<ScalingRow>& rows, const ModelConfig& base, std::ostream& out);

/// Round-robin item -> category map for latency-only runs.
std::vector<std::int64_t> round_robin_categories(const Vocab& vocab);

}  // namespace eta
