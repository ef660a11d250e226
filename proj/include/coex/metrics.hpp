#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace coex {

// One row per actor step. Column order is part of the CSV contract:
// step,success_rate,mean_actions,search_ms_mean,search_ms_p99,cache_hit_rate,
// bank_size,extractor_updates,dropped_distillations
struct MetricsRecord {
  int64_t step = 0;
  double success_rate = 0.0;
  double mean_actions = 0.0;
  double search_ms_mean = 0.0;
  double search_ms_p99 = 0.0;
  double cache_hit_rate = 0.0;
  uint64_t bank_size = 0;
  uint64_t extractor_updates = 0;
  uint64_t dropped_distillations = 0;
};

std::string metrics_csv_header();
std::string metrics_csv_row(const MetricsRecord& r);
void write_metrics_csv(const std::string& path, std::span<const MetricsRecord> records);
// Throws std::runtime_error naming the file when it is missing, empty, or has
// no data rows.
std::vector<MetricsRecord> read_metrics_csv(const std::string& path);

// p in [0,1]; nearest-rank percentile of an unsorted sample.
double percentile(std::vector<double> samples, double p);
double mean(std::span<const double> samples);

}  // namespace coex
