#include <gtest/gtest.h>

#include <algorithm>
#include <json.hpp>
#include <set>
#include <sstream>

#include "eta/bench.hpp"

namespace {

eta::ModelConfig small_config() {
  eta::ModelConfig c;
  c.d = 8;
  c.short_len = 4;
  c.long_len = 32;
  c.k = 4;
  c.bits = 16;
  c.mlp_widths = {8};
  return c;
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST(Latency, NearestRankPercentiles) {
  std::vector<double> v;
  for (int i = 100; i >= 1; --i) v.push_back(i);
  const auto s = eta::summarize_latencies(v);
  EXPECT_EQ(s.iterations, 100u);
  EXPECT_DOUBLE_EQ(s.mean_us, 50.5);
  EXPECT_DOUBLE_EQ(s.p50_us, 50.0);
  EXPECT_DOUBLE_EQ(s.p95_us, 95.0);
}

TEST(Latency, SingleAndEmptySamples) {
  const auto one = eta::summarize_latencies({7.5});
  EXPECT_DOUBLE_EQ(one.mean_us, 7.5);
  EXPECT_DOUBLE_EQ(one.p50_us, 7.5);
  EXPECT_DOUBLE_EQ(one.p95_us, 7.5);
  EXPECT_EQ(eta::summarize_latencies({}).iterations, 0u);
}

TEST(SimulatedRequests, ShapeAndVocabulary) {
  const auto c = small_config();
  const eta::Vocab v{10, 200, 7, 24};
  const auto p = eta::init_params(c, v, eta::round_robin_categories(v));
  const auto reqs = eta::simulate_requests(p, 5, 4, 32, 9, 3);
  ASSERT_EQ(reqs.size(), 5u);
  for (const auto& r : reqs) {
    EXPECT_EQ(r.request.short_seq.size(), 4u);
    EXPECT_EQ(r.request.long_seq.size(), 32u);
    EXPECT_EQ(r.candidates.size(), 9u);
    for (const auto& c : r.candidates) {
      EXPECT_GE(c.item, 1);
      EXPECT_LE(c.item, 200);
      EXPECT_EQ(c.category, p.item_category[static_cast<std::size_t>(c.item)]);
    }
    for (const auto& b : r.request.long_seq) EXPECT_LT(b.timestamp, r.request.timestamp);
  }
  EXPECT_THROW(eta::simulate_requests(p, 1, 4, 32, 0, 3), eta::InvalidArgument);
}

TEST(Ablation, LatencyOnlyCellAndFailingCell) {
  eta::BenchCell good{small_config(), 8};
  eta::BenchCell bad{small_config(), 8};
  bad.config.heads = 3;  // d = 8 does not split into 3 heads
  const auto report = eta::run_ablation({good, bad}, nullptr, {.warmup = 2, .requests = 5}, 1);
  ASSERT_EQ(report.records.size(), 2u);
  const auto& r = report.records[0];
  EXPECT_EQ(r.label, "TA/HASH/32/4");
  EXPECT_FALSE(r.auc.has_value());
  EXPECT_TRUE(r.error.empty());
  EXPECT_EQ(r.latency.iterations, 5u);
  EXPECT_GT(r.latency.mean_us, 0.0);
  EXPECT_FALSE(report.records[1].error.empty());

  std::ostringstream csv;
  eta::write_report_csv(report, csv);
  EXPECT_EQ(count_lines(csv.str()), 3u);
  EXPECT_EQ(csv.str().rfind("label,variant,auc,", 0), 0u);

  std::ostringstream js;
  eta::write_report_json(report, js);
  const auto doc = nlohmann::json::parse(js.str());
  ASSERT_EQ(doc["records"].size(), 2u);
  EXPECT_TRUE(doc["records"][0]["auc"].is_null());
  EXPECT_EQ(doc["records"][0]["shape"]["K"], 4);
  EXPECT_TRUE(doc["records"][1].contains("error"));
  EXPECT_FALSE(doc["environment"].get<std::string>().empty());
}

TEST(Scaling, SinglePointGivesOneRow) {
  const auto c = small_config();
  const eta::Vocab v{10, 500, 10, 24};
  const auto rows = eta::run_scaling(c, v, {16}, {4}, {.warmup = 1, .requests = 3}, 2);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].long_len, 16u);
  EXPECT_EQ(rows[0].candidates, 4u);
  EXPECT_EQ(rows[0].stages.total.iterations, 3u);
  std::ostringstream csv;
  eta::write_scaling_csv(rows, c, csv);
  EXPECT_EQ(count_lines(csv.str()), 2u);
  // K is clamped to L.
  EXPECT_NE(csv.str().find("ETA,16,4,4,"), std::string::npos);
  EXPECT_THROW(eta::run_scaling(c, v, {}, {4}, {}, 2), eta::InvalidArgument);
}

TEST(Scaling, GridRowsCoverEveryPair) {
  const auto c = small_config();
  const eta::Vocab v{10, 500, 10, 24};
  const auto rows = eta::run_scaling(c, v, {8, 64}, {2, 4, 8}, {.warmup = 1, .requests = 2}, 2);
  ASSERT_EQ(rows.size(), 6u);
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (const auto& r : rows) seen.insert({r.long_len, r.candidates});
  EXPECT_EQ(seen.size(), 6u);
}
