#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace coex {

struct GridPos {
  int x = 0;
  int y = 0;
  bool operator==(const GridPos&) const = default;
};

struct Observation {
  std::string text;  // rendered symbolic grid with legend (and error notes)
  int step_index = 0;
  std::string goal;  // task string g
  // Structured context mirrored from the rendering, consumed by the tabular
  // policy's state digest.
  GridPos agent;
  std::string local_mask;  // 3x3 wall pattern around the agent, row-major
  std::string extra;       // environment-specific digest payload
};

struct EpisodeOutcome {
  double reward = 0.0;
  bool success = false;
  int steps_taken = 0;
  std::vector<std::string> actions;
};

struct StepResult {
  Observation observation;
  bool done = false;
  std::optional<EpisodeOutcome> outcome;  // present exactly once, when done
};

class Environment {
 public:
  virtual ~Environment() = default;
  virtual Observation reset(uint64_t seed) = 0;
  virtual StepResult step(const std::string& action) = 0;
  virtual const std::vector<std::string>& legal_actions() const = 0;
  virtual std::string name() const = 0;
  virtual int step_cap() const = 0;
  virtual std::string goal() const = 0;
};

struct EnvOptions {
  int width = 5;   // interior size
  int height = 5;
  int step_cap = 30;
};

// Fog-of-war room: reach the staircase. Only cells adjacent to the agent are
// revealed; revealed cells stay visible. Rewards in {0, 1}. Every seeded
// layout is connected from start to goal by construction.
class GridRoomEnv : public Environment {
 public:
  explicit GridRoomEnv(EnvOptions opts = {});

  Observation reset(uint64_t seed) override;
  StepResult step(const std::string& action) override;
  const std::vector<std::string>& legal_actions() const override;
  std::string name() const override { return "gridworld"; }
  int step_cap() const override { return opts_.step_cap; }
  std::string goal() const override { return goal_; }

  // Introspection for oracles and scripted policies.
  bool is_wall(int x, int y) const;
  GridPos agent_pos() const { return agent_; }
  GridPos goal_pos() const { return goal_pos_; }
  int width() const { return w_; }
  int height() const { return h_; }

 private:
  Observation observe(const std::string& note) const;
  void reveal();
  void finish(StepResult& res, bool success);

  EnvOptions opts_;
  int w_ = 0, h_ = 0;  // including border walls
  std::vector<std::vector<bool>> wall_;
  std::vector<std::vector<bool>> seen_;
  GridPos agent_, start_, goal_pos_;
  std::string goal_;
  int step_index_ = 0;
  bool active_ = false;
  std::vector<std::string> actions_;
};

// Two boxes, two targets, push-only. Layouts are generated by reverse play
// from the solved position, so every episode is solvable. Pushing a box into
// a non-target corner ends the episode immediately with reward 0.
class SokobanLiteEnv : public Environment {
 public:
  explicit SokobanLiteEnv(EnvOptions opts = EnvOptions{6, 6, 30});

  Observation reset(uint64_t seed) override;
  StepResult step(const std::string& action) override;
  const std::vector<std::string>& legal_actions() const override;
  std::string name() const override { return "sokoban"; }
  int step_cap() const override { return opts_.step_cap; }
  std::string goal() const override { return goal_; }

  const std::vector<GridPos>& boxes() const { return boxes_; }
  const std::vector<GridPos>& targets() const { return targets_; }
  GridPos agent_pos() const { return agent_; }

 private:
  Observation observe(const std::string& note) const;
  void finish(StepResult& res, bool success);
  bool solved() const;
  bool is_wall(int x, int y) const;
  bool box_at(GridPos p) const;
  bool deadlocked(GridPos box) const;

  EnvOptions opts_;
  int w_ = 0, h_ = 0;
  GridPos agent_;
  std::vector<GridPos> boxes_;
  std::vector<GridPos> targets_;
  std::string goal_;
  int step_index_ = 0;
  bool active_ = false;
  std::vector<std::string> actions_;
};

using EnvFactory = std::function<std::unique_ptr<Environment>()>;

// name: "gridworld" or "sokoban".
EnvFactory make_env_factory(const std::string& name, EnvOptions opts);

}  // namespace coex
