#include "coex/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "coex/bank.hpp"
#include "coex/config.hpp"
#include "coex/trainer.hpp"

namespace coex {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

int cmd_train(const std::string& config_path, int64_t seed_override, const std::string& arm_str,
              const std::string& out_dir) {
  TrainerConfig cfg;
  Arm arm;
  try {
    cfg = parse_config_file(config_path);
    arm = arm_from_string(arm_str);
  } catch (const ConfigError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }
  if (seed_override >= 0) cfg.seed = static_cast<uint64_t>(seed_override);

  fs::create_directories(out_dir);
  write_text(fs::path(out_dir) / "resolved_config.ini", render_config(cfg));

  RunResult res;
  try {
    res = run_trainer(cfg, arm);
  } catch (const std::exception& e) {
    std::cerr << "run aborted: " << e.what() << "\n";
    return 1;
  }
  if (res.aborted_at_step >= 0) {
    std::cerr << "run aborted at step " << res.aborted_at_step << ": " << res.abort_reason
              << "\n";
    return 1;
  }

  write_metrics_csv((fs::path(out_dir) / "metrics.csv").string(), res.metrics);
  write_text(fs::path(out_dir) / "actor_params.json", res.actor_snapshot);
  write_text(fs::path(out_dir) / "extractor_params.json", res.extractor_snapshot);

  if (arm != Arm::baseline) {
    auto embedder = std::make_shared<HashedBagEmbedder>(cfg.embedding_dim);
    ExperienceBank::from_snapshot(res.bank, embedder)
        .persist((fs::path(out_dir) / "bank.jsonl").string());
  }

  json eval{{"episodes", res.final_eval.episodes},
            {"success_with_exp", res.final_eval.success_with_exp},
            {"success_without_exp", res.final_eval.success_without_exp},
            {"mean_actions_solved_with", res.final_eval.mean_actions_solved_with},
            {"mean_actions_solved_without", res.final_eval.mean_actions_solved_without},
            {"arm", arm_to_string(arm)},
            {"extractor_updates", res.extractor_update_count},
            {"episodes_run", res.episodes_run},
            {"distill_submitted", res.distill_submitted}};
  write_text(fs::path(out_dir) / "eval_summary.json", eval.dump(2));

  std::cout << "completed " << res.metrics.size() << " steps (arm " << arm_to_string(arm)
            << "); eval success w/ exp " << res.final_eval.success_with_exp << ", w/o exp "
            << res.final_eval.success_without_exp << "\n";
  return 0;
}

int cmd_bench_latency(const std::string& config_path, std::vector<int> batches, int64_t steps,
                      const std::string& out_path) {
  TrainerConfig cfg;
  try {
    cfg = parse_config_file(config_path);
  } catch (const ConfigError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }
  if (batches.empty()) batches = {16, 64, 128};

  auto rows = bench_latency(cfg, batches, steps);
  std::ostringstream out;
  out << "rollout_batch,on_mean_ms,on_p99_ms,off_mean_ms,off_p99_ms,search_mean_ms,"
         "search_p99_ms,overhead\n";
  for (const auto& r : rows) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%d,%.3f,%.3f,%.3f,%.3f,%.3f,%.3f,%.4f\n", r.rollout_batch,
                  r.on_mean_ms, r.on_p99_ms, r.off_mean_ms, r.off_p99_ms, r.search_mean_ms,
                  r.search_p99_ms, r.overhead);
    out << buf;
  }
  if (out_path.empty()) {
    std::cout << out.str();
  } else {
    write_text(out_path, out.str());
    std::cout << "wrote " << out_path << "\n";
  }
  return 0;
}

int cmd_plot(const std::vector<std::string>& csv_paths, const std::string& out_path) {
  std::vector<std::pair<std::string, std::vector<MetricsRecord>>> runs;
  try {
    for (const auto& p : csv_paths) runs.emplace_back(fs::path(p).stem().string(),
                                                      read_metrics_csv(p));
  } catch (const std::exception& e) {
    std::cerr << "plot error: " << e.what() << "\n";
    return 2;
  }

  std::vector<std::pair<std::string, std::vector<double>>> success, actions;
  for (const auto& [name, records] : runs) {
    std::vector<double> s, a;
    for (const auto& r : records) {
      s.push_back(r.success_rate);
      a.push_back(r.mean_actions);
    }
    success.emplace_back(name, std::move(s));
    actions.emplace_back(name, std::move(a));
  }

  const bool svg = out_path.size() > 4 && out_path.substr(out_path.size() - 4) == ".svg";
  std::string rendered;
  if (svg) {
    rendered = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"660\" height=\"680\">"
               "<g transform=\"translate(10,10)\">" +
               svg_chart("success_rate", success, 640, 320) +
               "</g><g transform=\"translate(10,350)\">" +
               svg_chart("mean_actions", actions, 640, 320) + "</g></svg>";
  } else {
    rendered = ascii_chart("success_rate", success) + "\n" +
               ascii_chart("mean_actions", actions);
  }
  if (out_path.empty()) {
    std::cout << rendered << "\n";
  } else {
    write_text(out_path, rendered);
    std::cout << "wrote " << out_path << "\n";
  }
  return 0;
}

}  // namespace

std::string ascii_chart(const std::string& title,
                        const std::vector<std::pair<std::string, std::vector<double>>>& series,
                        int width, int height) {
  double lo = 0.0, hi = 1e-12;
  size_t max_len = 0;
  for (const auto& [name, ys] : series) {
    for (double y : ys) {
      lo = std::min(lo, y);
      hi = std::max(hi, y);
    }
    max_len = std::max(max_len, ys.size());
  }
  std::ostringstream out;
  out << title << " (y " << lo << ".." << hi << ", x 1.." << max_len << ")\n";
  if (max_len == 0) return out.str();

  std::vector<std::string> grid(height, std::string(width, ' '));
  const char marks[] = "abcdefgh";
  for (size_t s = 0; s < series.size(); ++s) {
    const auto& ys = series[s].second;
    for (size_t i = 0; i < ys.size(); ++i) {
      const int x = max_len <= 1
                        ? 0
                        : static_cast<int>(std::round(static_cast<double>(i) * (width - 1) /
                                                      (max_len - 1)));
      const double t = (ys[i] - lo) / (hi - lo);
      const int y = height - 1 - static_cast<int>(std::round(t * (height - 1)));
      grid[std::clamp(y, 0, height - 1)][std::clamp(x, 0, width - 1)] =
          marks[s % (sizeof(marks) - 1)];
    }
  }
  for (const auto& row : grid) out << "|" << row << "|\n";
  for (size_t s = 0; s < series.size(); ++s)
    out << "  " << marks[s % (sizeof(marks) - 1)] << " = " << series[s].first << "\n";
  return out.str();
}

std::string svg_chart(const std::string& title,
                      const std::vector<std::pair<std::string, std::vector<double>>>& series,
                      int width, int height) {
  double lo = 0.0, hi = 1e-12;
  size_t max_len = 0;
  for (const auto& [name, ys] : series) {
    for (double y : ys) {
      lo = std::min(lo, y);
      hi = std::max(hi, y);
    }
    max_len = std::max(max_len, ys.size());
  }
  const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
  std::ostringstream out;
  out << "<g><text x=\"8\" y=\"16\" font-size=\"14\">" << title << "</text>";
  out << "<rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height
      << "\" fill=\"none\" stroke=\"#888\"/>";
  for (size_t s = 0; s < series.size(); ++s) {
    const auto& ys = series[s].second;
    if (ys.empty()) continue;
    out << "<polyline fill=\"none\" stroke=\"" << colors[s % 5] << "\" points=\"";
    for (size_t i = 0; i < ys.size(); ++i) {
      const double x = max_len <= 1 ? 0.0
                                    : static_cast<double>(i) * (width - 20) / (max_len - 1) + 10;
      const double t = (ys[i] - lo) / (hi - lo);
      const double y = height - 20 - t * (height - 40);
      out << x << "," << y << " ";
    }
    out << "\"/>";
    out << "<text x=\"" << 10 + 120 * s << "\" y=\"" << height - 4 << "\" font-size=\"12\" fill=\""
        << colors[s % 5] << "\">" << series[s].first << "</text>";
  }
  out << "</g>";
  return out.str();
}

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"co-evolving experience-driven RL trainer"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "run_out", arm = "full", bench_out, plot_out;
  int64_t seed_override = -1, bench_steps = 5;
  std::vector<int> batches;
  std::vector<std::string> csvs;

  auto* train = app.add_subcommand("train", "run a training arm");
  train->add_option("config", config_path, "run configuration file")->required();
  train->add_option("--seed", seed_override, "override the root seed");
  train->add_option("--arm", arm, "full | baseline | static_online_exp | exp_only");
  train->add_option("--out-dir", out_dir, "output directory");

  auto* bench = app.add_subcommand("bench-latency", "rollout latency with the manager on/off");
  bench->add_option("config", config_path, "run configuration file")->required();
  bench->add_option("--rollout-batches", batches, "group counts to benchmark");
  bench->add_option("--steps", bench_steps, "steps per arm");
  bench->add_option("--out", bench_out, "write the report here instead of stdout");

  auto* plot = app.add_subcommand("plot", "render metric curves from metrics.csv files");
  plot->add_option("csv", csvs, "metrics.csv paths")->required();
  plot->add_option("--out", plot_out, ".svg for vector output, anything else for text");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (train->parsed()) return cmd_train(config_path, seed_override, arm, out_dir);
    if (bench->parsed()) return cmd_bench_latency(config_path, batches, bench_steps, bench_out);
    if (plot->parsed()) return cmd_plot(csvs, plot_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace coex
