#include "coex/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace coex {

std::string metrics_csv_header() {
  return "step,success_rate,mean_actions,search_ms_mean,search_ms_p99,cache_hit_rate,"
         "bank_size,extractor_updates,dropped_distillations";
}

std::string metrics_csv_row(const MetricsRecord& r) {
  char buf[320];
  std::snprintf(buf, sizeof(buf), "%lld,%.9g,%.9g,%.9g,%.9g,%.9g,%llu,%llu,%llu",
                static_cast<long long>(r.step), r.success_rate, r.mean_actions,
                r.search_ms_mean, r.search_ms_p99, r.cache_hit_rate,
                static_cast<unsigned long long>(r.bank_size),
                static_cast<unsigned long long>(r.extractor_updates),
                static_cast<unsigned long long>(r.dropped_distillations));
  return buf;
}

void write_metrics_csv(const std::string& path, std::span<const MetricsRecord> records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open metrics file for writing: " + path);
  out << metrics_csv_header() << '\n';
  for (const auto& r : records) out << metrics_csv_row(r) << '\n';
}

std::vector<MetricsRecord> read_metrics_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open metrics file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty metrics file: " + path);
  std::vector<MetricsRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    MetricsRecord r;
    long long step = 0;
    unsigned long long bank = 0, updates = 0, dropped = 0;
    const int n = std::sscanf(line.c_str(), "%lld,%lf,%lf,%lf,%lf,%lf,%llu,%llu,%llu", &step,
                              &r.success_rate, &r.mean_actions, &r.search_ms_mean,
                              &r.search_ms_p99, &r.cache_hit_rate, &bank, &updates, &dropped);
    if (n != 9) throw std::runtime_error("malformed metrics row in " + path + ": " + line);
    r.step = step;
    r.bank_size = bank;
    r.extractor_updates = updates;
    r.dropped_distillations = dropped;
    out.push_back(r);
  }
  if (out.empty()) throw std::runtime_error("empty metrics file: " + path);
  return out;
}

double percentile(std::vector<double> samples, double p) {
  if (samples.empty()) return 0.0;
  std::sort(samples.begin(), samples.end());
  const double rank = p * static_cast<double>(samples.size() - 1);
  const size_t lo = static_cast<size_t>(std::floor(rank));
  const size_t hi = std::min(lo + 1, samples.size() - 1);
  const double frac = rank - static_cast<double>(lo);
  return samples[lo] * (1.0 - frac) + samples[hi] * frac;
}

double mean(std::span<const double> samples) {
  if (samples.empty()) return 0.0;
  double s = 0.0;
  for (double x : samples) s += x;
  return s / static_cast<double>(samples.size());
}

}  // namespace coex
