#include "coex/env.hpp"

#include <algorithm>
#include <cassert>
#include <deque>
#include <random>
#include <sstream>
#include <stdexcept>

#include "coex/rng.hpp"

namespace coex {

namespace {

const std::vector<std::string> kMoves = {"north", "south", "east", "west"};

std::optional<GridPos> move_delta(const std::string& action) {
  if (action == "north") return GridPos{0, -1};
  if (action == "south") return GridPos{0, 1};
  if (action == "east") return GridPos{1, 0};
  if (action == "west") return GridPos{-1, 0};
  return std::nullopt;
}

std::string layout_tag(uint64_t h) {
  static const char* hex = "0123456789abcdef";
  std::string s(4, '0');
  for (int i = 0; i < 4; ++i) s[i] = hex[(h >> (i * 4)) & 0xf];
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// GridRoomEnv
// ---------------------------------------------------------------------------

GridRoomEnv::GridRoomEnv(EnvOptions opts) : opts_(opts) {
  if (opts_.width < 2 || opts_.height < 2) throw std::invalid_argument("grid too small");
  w_ = opts_.width + 2;
  h_ = opts_.height + 2;
}

bool GridRoomEnv::is_wall(int x, int y) const {
  if (x < 0 || y < 0 || x >= w_ || y >= h_) return true;
  return wall_[y][x];
}

Observation GridRoomEnv::reset(uint64_t seed) {
  std::mt19937_64 rng(mix64(seed ^ 0x60a1ull));
  const int iw = opts_.width, ih = opts_.height;
  std::uniform_int_distribution<int> dx(1, iw), dy(1, ih);

  // Rejection-sample layouts until start and goal are connected. The empty
  // room always is, so the fallback terminates.
  for (int attempt = 0;; ++attempt) {
    wall_.assign(h_, std::vector<bool>(w_, false));
    for (int x = 0; x < w_; ++x) wall_[0][x] = wall_[h_ - 1][x] = true;
    for (int y = 0; y < h_; ++y) wall_[y][0] = wall_[y][w_ - 1] = true;

    const int max_obstacles = attempt > 50 ? 0 : (iw * ih) / 6;
    std::uniform_int_distribution<int> dn(0, max_obstacles);
    const int obstacles = dn(rng);
    for (int i = 0; i < obstacles; ++i) wall_[dy(rng)][dx(rng)] = true;

    start_ = {dx(rng), dy(rng)};
    goal_pos_ = {dx(rng), dy(rng)};
    if (start_ == goal_pos_ || wall_[start_.y][start_.x] || wall_[goal_pos_.y][goal_pos_.x])
      continue;

    // BFS connectivity
    std::vector<std::vector<bool>> vis(h_, std::vector<bool>(w_, false));
    std::deque<GridPos> q{start_};
    vis[start_.y][start_.x] = true;
    while (!q.empty()) {
      GridPos p = q.front();
      q.pop_front();
      for (auto [ddx, ddy] : {std::pair{0, -1}, {0, 1}, {1, 0}, {-1, 0}}) {
        GridPos np{p.x + ddx, p.y + ddy};
        if (is_wall(np.x, np.y) || vis[np.y][np.x]) continue;
        vis[np.y][np.x] = true;
        q.push_back(np);
      }
    }
    if (vis[goal_pos_.y][goal_pos_.x]) break;
  }

  uint64_t tag = 0;
  for (int y = 0; y < h_; ++y)
    for (int x = 0; x < w_; ++x) tag = fnv1a64(static_cast<uint64_t>(wall_[y][x]), tag + 1);

  std::ostringstream g;
  g << "gridworld-" << iw << "x" << ih << " seed-" << seed << ": reach the stairs > at ("
    << goal_pos_.x << "," << goal_pos_.y << ") from (" << start_.x << "," << start_.y
    << "); layout " << layout_tag(tag);
  goal_ = g.str();

  agent_ = start_;
  seen_.assign(h_, std::vector<bool>(w_, false));
  step_index_ = 0;
  active_ = true;
  actions_.clear();
  reveal();
  return observe("");
}

void GridRoomEnv::reveal() {
  for (int dy2 = -1; dy2 <= 1; ++dy2)
    for (int dx2 = -1; dx2 <= 1; ++dx2) {
      int x = agent_.x + dx2, y = agent_.y + dy2;
      if (x >= 0 && y >= 0 && x < w_ && y < h_) seen_[y][x] = true;
    }
}

Observation GridRoomEnv::observe(const std::string& note) const {
  Observation obs;
  obs.step_index = step_index_;
  obs.goal = goal_;
  obs.agent = agent_;
  std::ostringstream t;
  t << goal_ << "\n";
  t << "legend: @=you >=stairs #=wall .=floor ?=unseen\n";
  for (int y = 0; y < h_; ++y) {
    for (int x = 0; x < w_; ++x) {
      char c;
      if (agent_.x == x && agent_.y == y) c = '@';
      else if (!seen_[y][x]) c = '?';
      else if (wall_[y][x]) c = '#';
      else if (goal_pos_.x == x && goal_pos_.y == y) c = '>';
      else c = '.';
      t << c;
    }
    t << "\n";
  }
  t << "pos (" << agent_.x << "," << agent_.y << ") step " << step_index_;
  if (!note.empty()) t << "\nnote: " << note;
  obs.text = t.str();

  obs.local_mask.reserve(9);
  for (int dy2 = -1; dy2 <= 1; ++dy2)
    for (int dx2 = -1; dx2 <= 1; ++dx2)
      obs.local_mask.push_back(is_wall(agent_.x + dx2, agent_.y + dy2) ? '1' : '0');
  obs.extra = "goal:" + std::to_string(goal_pos_.x) + "," + std::to_string(goal_pos_.y);
  return obs;
}

void GridRoomEnv::finish(StepResult& res, bool success) {
  active_ = false;
  EpisodeOutcome out;
  out.reward = success ? 1.0 : 0.0;
  out.success = success;
  out.steps_taken = step_index_;
  out.actions = actions_;
  res.done = true;
  res.outcome = std::move(out);
}

StepResult GridRoomEnv::step(const std::string& action) {
  if (!active_) throw std::logic_error("step on finished episode");
  StepResult res;
  actions_.push_back(action);
  ++step_index_;

  std::string note;
  if (auto d = move_delta(action)) {
    GridPos np{agent_.x + d->x, agent_.y + d->y};
    if (!is_wall(np.x, np.y)) agent_ = np;  // wall bumps consume the step
    reveal();
  } else {
    note = "could not parse action '" + action + "'";
  }

  if (agent_ == goal_pos_) {
    res.observation = observe(note);
    finish(res, true);
    return res;
  }
  if (step_index_ >= opts_.step_cap) {
    res.observation = observe(note);
    finish(res, false);
    return res;
  }
  res.observation = observe(note);
  return res;
}

const std::vector<std::string>& GridRoomEnv::legal_actions() const { return kMoves; }

// ---------------------------------------------------------------------------
// SokobanLiteEnv
// ---------------------------------------------------------------------------

SokobanLiteEnv::SokobanLiteEnv(EnvOptions opts) : opts_(opts) {
  w_ = opts_.width + 2;
  h_ = opts_.height + 2;
}

bool SokobanLiteEnv::is_wall(int x, int y) const {
  return x <= 0 || y <= 0 || x >= w_ - 1 || y >= h_ - 1;
}

bool SokobanLiteEnv::box_at(GridPos p) const {
  return std::find(boxes_.begin(), boxes_.end(), p) != boxes_.end();
}

bool SokobanLiteEnv::solved() const {
  for (const GridPos& b : boxes_)
    if (std::find(targets_.begin(), targets_.end(), b) == targets_.end()) return false;
  return true;
}

bool SokobanLiteEnv::deadlocked(GridPos box) const {
  if (std::find(targets_.begin(), targets_.end(), box) != targets_.end()) return false;
  const bool n = is_wall(box.x, box.y - 1), s = is_wall(box.x, box.y + 1);
  const bool e = is_wall(box.x + 1, box.y), w = is_wall(box.x - 1, box.y);
  return (n || s) && (e || w);
}

Observation SokobanLiteEnv::reset(uint64_t seed) {
  std::mt19937_64 rng(mix64(seed ^ 0x50c0ull));
  std::uniform_int_distribution<int> dx(1, w_ - 2), dy(1, h_ - 2);
  std::uniform_int_distribution<int> dmove(0, 3);
  const GridPos deltas[4] = {{0, -1}, {0, 1}, {1, 0}, {-1, 0}};

  // Reverse play from the solved position: every reverse step is the exact
  // inverse of a legal push or walk, so the recorded layout stays solvable.
  while (true) {
    targets_.clear();
    while (targets_.size() < 2) {
      GridPos t{dx(rng), dy(rng)};
      if (std::find(targets_.begin(), targets_.end(), t) == targets_.end())
        targets_.push_back(t);
    }
    boxes_ = targets_;
    do {
      agent_ = {dx(rng), dy(rng)};
    } while (box_at(agent_));

    int pulls = 0;
    const int moves = 8 + static_cast<int>(rng() % 10);
    for (int m = 0; m < moves; ++m) {
      const GridPos d = deltas[dmove(rng)];
      const GridPos fwd{agent_.x + d.x, agent_.y + d.y};
      const GridPos back{agent_.x - d.x, agent_.y - d.y};
      if (box_at(fwd) && !is_wall(back.x, back.y) && !box_at(back)) {
        // reverse-pull: box follows the agent one cell backward
        auto it = std::find(boxes_.begin(), boxes_.end(), fwd);
        *it = agent_;
        agent_ = back;
        ++pulls;
      } else if (!is_wall(fwd.x, fwd.y) && !box_at(fwd)) {
        agent_ = fwd;
      }
    }
    if (pulls > 0 && !solved()) break;
  }

  uint64_t tag = fnv1a64(static_cast<uint64_t>(agent_.x * 31 + agent_.y), 7);
  for (const auto& b : boxes_) tag = fnv1a64(static_cast<uint64_t>(b.x * 31 + b.y), tag);
  for (const auto& t : targets_) tag = fnv1a64(static_cast<uint64_t>(t.x * 31 + t.y), tag);

  std::ostringstream g;
  g << "sokoban-" << opts_.width << "x" << opts_.height << " seed-" << seed
    << ": push 2 boxes A onto targets C; layout " << layout_tag(tag);
  goal_ = g.str();

  step_index_ = 0;
  active_ = true;
  actions_.clear();
  return observe("");
}

Observation SokobanLiteEnv::observe(const std::string& note) const {
  Observation obs;
  obs.step_index = step_index_;
  obs.goal = goal_;
  obs.agent = agent_;
  std::ostringstream t;
  t << goal_ << "\n";
  t << "legend: @=you A=box C=target *=box-on-target +=you-on-target W=wall .=empty\n";
  for (int y = 0; y < h_; ++y) {
    for (int x = 0; x < w_; ++x) {
      GridPos p{x, y};
      const bool target = std::find(targets_.begin(), targets_.end(), p) != targets_.end();
      char c;
      if (is_wall(x, y)) c = 'W';
      else if (agent_ == p) c = target ? '+' : '@';
      else if (box_at(p)) c = target ? '*' : 'A';
      else if (target) c = 'C';
      else c = '.';
      t << c;
    }
    t << "\n";
  }
  t << "pos (" << agent_.x << "," << agent_.y << ") step " << step_index_;
  if (!note.empty()) t << "\nnote: " << note;
  obs.text = t.str();

  obs.local_mask.reserve(9);
  for (int dy2 = -1; dy2 <= 1; ++dy2)
    for (int dx2 = -1; dx2 <= 1; ++dx2)
      obs.local_mask.push_back(is_wall(agent_.x + dx2, agent_.y + dy2) ? '1' : '0');

  std::ostringstream extra;
  extra << "boxes:";
  std::vector<GridPos> sorted_boxes = boxes_;
  std::sort(sorted_boxes.begin(), sorted_boxes.end(), [](GridPos a, GridPos b) {
    return a.y != b.y ? a.y < b.y : a.x < b.x;
  });
  for (const auto& b : sorted_boxes) extra << b.x << "," << b.y << ";";
  extra << "targets:";
  for (const auto& t2 : targets_) extra << t2.x << "," << t2.y << ";";
  obs.extra = extra.str();
  return obs;
}

void SokobanLiteEnv::finish(StepResult& res, bool success) {
  active_ = false;
  EpisodeOutcome out;
  out.reward = success ? 1.0 : 0.0;
  out.success = success;
  out.steps_taken = step_index_;
  out.actions = actions_;
  res.done = true;
  res.outcome = std::move(out);
}

StepResult SokobanLiteEnv::step(const std::string& action) {
  if (!active_) throw std::logic_error("step on finished episode");
  StepResult res;
  actions_.push_back(action);
  ++step_index_;

  std::string note;
  bool deadlock = false;
  if (auto d = move_delta(action)) {
    const GridPos np{agent_.x + d->x, agent_.y + d->y};
    if (!is_wall(np.x, np.y)) {
      if (box_at(np)) {
        const GridPos bp{np.x + d->x, np.y + d->y};
        if (!is_wall(bp.x, bp.y) && !box_at(bp)) {
          auto it = std::find(boxes_.begin(), boxes_.end(), np);
          *it = bp;
          agent_ = np;
          deadlock = deadlocked(bp);
        }
        // blocked push consumes the step without movement
      } else {
        agent_ = np;
      }
    }
  } else {
    note = "could not parse action '" + action + "'";
  }

  if (solved()) {
    res.observation = observe(note);
    finish(res, true);
    return res;
  }
  if (deadlock || step_index_ >= opts_.step_cap) {
    res.observation = observe(note);
    finish(res, false);
    return res;
  }
  res.observation = observe(note);
  return res;
}

const std::vector<std::string>& SokobanLiteEnv::legal_actions() const { return kMoves; }

EnvFactory make_env_factory(const std::string& name, EnvOptions opts) {
  if (name == "gridworld") {
    return [opts] { return std::make_unique<GridRoomEnv>(opts); };
  }
  if (name == "sokoban") {
    return [opts] { return std::make_unique<SokobanLiteEnv>(opts); };
  }
  throw std::invalid_argument("unknown environment: " + name);
}

}  // namespace coex
