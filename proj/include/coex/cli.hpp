#pragma once

#include <string>
#include <vector>

namespace coex {

// Operator entry point. Exit codes: 0 completed, 1 runtime abort (step number
// printed), 2 bad configuration (offending key printed).
int run_cli(int argc, const char* const* argv);

// Character-grid chart fallback; one column block per series.
std::string ascii_chart(const std::string& title,
                        const std::vector<std::pair<std::string, std::vector<double>>>& series,
                        int width = 64, int height = 16);

// Minimal standalone SVG line chart (no raster backend required).
std::string svg_chart(const std::string& title,
                      const std::vector<std::pair<std::string, std::vector<double>>>& series,
                      int width = 640, int height = 320);

}  // namespace coex
