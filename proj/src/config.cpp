#include "coex/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

namespace coex {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

int64_t to_i64(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    int64_t x = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing");
    return x;
  } catch (...) {
    throw ConfigError(key, "config error at " + key + ": expected integer, got '" + v + "'");
  }
}

double to_f64(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing");
    return x;
  } catch (...) {
    throw ConfigError(key, "config error at " + key + ": expected number, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key, "config error at " + key + ": expected true/false, got '" + v + "'");
}

struct KeyDef {
  std::string section;
  std::string key;
  std::function<void(TrainerConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const TrainerConfig&)> get;
};

const std::vector<KeyDef>& key_defs() {
  static const std::vector<KeyDef> defs = {
      // environment
      {"environment", "name",
       [](TrainerConfig& c, const std::string& k, const std::string& v) {
         if (v != "gridworld" && v != "sokoban")
           throw ConfigError(k, "config error at " + k + ": unknown environment '" + v + "'");
         c.env_name = v;
       },
       [](const TrainerConfig& c) { return c.env_name; }},
      {"environment", "width",
       [](TrainerConfig& c, const std::string& k, const std::string& v) {
         c.env_opts.width = static_cast<int>(to_i64(k, v));
       },
       [](const TrainerConfig& c) { return std::to_string(c.env_opts.width); }},
      {"environment", "height",
       [](TrainerConfig& c, const std::string& k, const std::string& v) {
         c.env_opts.height = static_cast<int>(to_i64(k, v));
       },
       [](const TrainerConfig& c) { return std::to_string(c.env_opts.height); }},
      {"environment", "step_cap",
       [](TrainerConfig& c, const std::string& k, const std::string& v) {
         c.env_opts.step_cap = static_cast<int>(to_i64(k, v));
       },
       [](const TrainerConfig& c) { return std::to_string(c.env_opts.step_cap); }},
      // actor
      {"actor", "learning_rate",
       [](TrainerConfig& c, const std::string& k, const std::string& v) {
         c.actor_lr = to_f64(k, v);
       },
       [](const TrainerConfig& c) { return fmt_double(c.actor_lr); }},
      {"actor", "clip_epsilon",
       [](TrainerConfig& c, const std::string& k, const std::string& v) {
         c.clip_epsilon = to_f64(k, v);
       },
       [](const TrainerConfig& c) { return fmt_double(c.clip_epsilon); }},
      {"actor", "sigma_floor",
       [](TrainerConfig& c, const std::string& k, const std::string& v) {
         c.sigma_floor = to_f64(k, v);
       },
       [](const TrainerConfig& c) { return fmt_double(c.sigma_floor); }},
      {"actor", "ask_budget",
       [](TrainerConfig& c, const std::string& k, const std::string& v) {
         c.ask_budget = static_cast<int>(to_i64(k, v));
       },
       [](const TrainerConfig& c) { return std::to_string(c.ask_budget); }},
      {"actor", "exp_hash_buckets",
       [](TrainerConfig& c, const std::string& k, const std::string& v) {
         c.exp_hash_buckets = static_cast<int>(to_i64(k, v));
       },
       [](const TrainerConfig& c) { return std::to_string(c.exp_hash_buckets); }},
      // extractor
      {"extractor", "learning_rate",
       [](TrainerConfig& c, const std::string& k, const std::string& v) {
         c.extractor_lr = to_f64(k, v);
       },
       [](const TrainerConfig& c) { return fmt_double(c.extractor_lr); }},
      {"extractor", "eps_is_low",
       [](TrainerConfig& c, const std::string& k, const std::string& v) {
         c.cispo.eps_is_low = to_f64(k, v);
       },
       [](const TrainerConfig& c) { return fmt_double(c.cispo.eps_is_low); }},
      {"extractor", "eps_is_high",
       [](TrainerConfig& c, const std::string& k, const std::string& v) {
         c.cispo.eps_is_high = to_f64(k, v);
       },
       [](const TrainerConfig& c) { return fmt_double(c.cispo.eps_is_high); }},
      {"extractor", "buffer_trigger",
       [](TrainerConfig& c, const std::string& k, const std::string& v) {
         c.buffer_trigger = static_cast<size_t>(to_i64(k, v));
       },
       [](const TrainerConfig& c) { return std::to_string(c.buffer_trigger); }},
      {"extractor", "cooldown_delta",
       [](TrainerConfig& c, const std::string& k, const std::string& v) {
         c.cooldown_delta = to_i64(k, v);
       },
       [](const TrainerConfig& c) { return std::to_string(c.cooldown_delta); }},
      {"extractor", "decay_alpha",
       [](TrainerConfig& c, const std::string& k, const std::string& v) {
         c.decay_alpha = to_f64(k, v);
       },
       [](const TrainerConfig& c) { return fmt_double(c.decay_alpha); }},
      {"extractor", "merge_threshold",
       [](TrainerConfig& c, const std::string& k, const std::string& v) {
         c.merge_threshold = to_f64(k, v);
       },
       [](const TrainerConfig& c) { return fmt_double(c.merge_threshold); }},
      {"extractor", "refine_mode",
       [](TrainerConfig& c, const std::string& k, const std::string& v) {
         if (v == "header") c.refine_mode = RefineConfig::Mode::header;
         else if (v == "identity") c.refine_mode = RefineConfig::Mode::identity;
         else throw ConfigError(k, "config error at " + k + ": expected header|identity");
       },
       [](const TrainerConfig& c) {
         return c.refine_mode == RefineConfig::Mode::header ? "header" : "identity";
       }},
      // manager
      {"manager", "batch_size",
       [](TrainerConfig& c, const std::string& k, const std::string& v) {
         c.manager.batch_size = static_cast<size_t>(to_i64(k, v));
       },
       [](const TrainerConfig& c) { return std::to_string(c.manager.batch_size); }},
      {"manager", "t_max_wait_s",
       [](TrainerConfig& c, const std::string& k, const std::string& v) {
         c.manager.max_wait_s = to_f64(k, v);
       },
       [](const TrainerConfig& c) { return fmt_double(c.manager.max_wait_s); }},
      {"manager", "search_workers",
       [](TrainerConfig& c, const std::string& k, const std::string& v) {
         c.manager.search_workers = static_cast<size_t>(to_i64(k, v));
       },
       [](const TrainerConfig& c) { return std::to_string(c.manager.search_workers); }},
      {"manager", "candidate_sets",
       [](TrainerConfig& c, const std::string& k, const std::string& v) {
         c.manager.candidate_sets = static_cast<size_t>(to_i64(k, v));
       },
       [](const TrainerConfig& c) { return std::to_string(c.manager.candidate_sets); }},
      {"manager", "candidates_per_set",
       [](TrainerConfig& c, const std::string& k, const std::string& v) {
         c.manager.candidates_per_set = static_cast<size_t>(to_i64(k, v));
       },
       [](const TrainerConfig& c) { return std::to_string(c.manager.candidates_per_set); }},
      {"manager", "lambda",
       [](TrainerConfig& c, const std::string& k, const std::string& v) {
         c.manager.lambda = to_f64(k, v);
       },
       [](const TrainerConfig& c) { return fmt_double(c.manager.lambda); }},
      {"manager", "recency_window",
       [](TrainerConfig& c, const std::string& k, const std::string& v) {
         c.manager.recency_window = to_i64(k, v);
       },
       [](const TrainerConfig& c) { return std::to_string(c.manager.recency_window); }},
      {"manager", "acceptance_floor",
       [](TrainerConfig& c, const std::string& k, const std::string& v) {
         if (v == "none") c.manager.acceptance_floor.reset();
         else c.manager.acceptance_floor = to_f64(k, v);
       },
       [](const TrainerConfig& c) {
         return c.manager.acceptance_floor ? fmt_double(*c.manager.acceptance_floor)
                                           : std::string("none");
       }},
      {"manager", "queue_capacity",
       [](TrainerConfig& c, const std::string& k, const std::string& v) {
         c.manager.queue_capacity = static_cast<size_t>(to_i64(k, v));
       },
       [](const TrainerConfig& c) { return std::to_string(c.manager.queue_capacity); }},
      {"manager", "cache_capacity",
       [](TrainerConfig& c, const std::string& k, const std::string& v) {
         c.manager.cache_capacity = static_cast<size_t>(to_i64(k, v));
       },
       [](const TrainerConfig& c) { return std::to_string(c.manager.cache_capacity); }},
      {"manager", "merge_chunk_size",
       [](TrainerConfig& c, const std::string& k, const std::string& v) {
         c.manager.merge_chunk_size = static_cast<size_t>(to_i64(k, v));
       },
       [](const TrainerConfig& c) { return std::to_string(c.manager.merge_chunk_size); }},
      {"manager", "merge_text_cap",
       [](TrainerConfig& c, const std::string& k, const std::string& v) {
         c.manager.merge_text_cap = static_cast<size_t>(to_i64(k, v));
       },
       [](const TrainerConfig& c) { return std::to_string(c.manager.merge_text_cap); }},
      {"manager", "embedding_dim",
       [](TrainerConfig& c, const std::string& k, const std::string& v) {
         c.embedding_dim = static_cast<size_t>(to_i64(k, v));
       },
       [](const TrainerConfig& c) { return std::to_string(c.embedding_dim); }},
      // trainer
      {"trainer", "rollout_batch",
       [](TrainerConfig& c, const std::string& k, const std::string& v) {
         c.rollout_batch = static_cast<int>(to_i64(k, v));
       },
       [](const TrainerConfig& c) { return std::to_string(c.rollout_batch); }},
      {"trainer", "group_size",
       [](TrainerConfig& c, const std::string& k, const std::string& v) {
         c.group_size = static_cast<int>(to_i64(k, v));
       },
       [](const TrainerConfig& c) { return std::to_string(c.group_size); }},
      {"trainer", "steps",
       [](TrainerConfig& c, const std::string& k, const std::string& v) {
         c.steps = to_i64(k, v);
       },
       [](const TrainerConfig& c) { return std::to_string(c.steps); }},
      {"trainer", "merge_interval",
       [](TrainerConfig& c, const std::string& k, const std::string& v) {
         c.merge_interval = to_i64(k, v);
       },
       [](const TrainerConfig& c) { return std::to_string(c.merge_interval); }},
      {"trainer", "seed",
       [](TrainerConfig& c, const std::string& k, const std::string& v) {
         c.seed = static_cast<uint64_t>(to_i64(k, v));
       },
       [](const TrainerConfig& c) { return std::to_string(c.seed); }},
      {"trainer", "eval_episodes",
       [](TrainerConfig& c, const std::string& k, const std::string& v) {
         c.eval_episodes = static_cast<int>(to_i64(k, v));
       },
       [](const TrainerConfig& c) { return std::to_string(c.eval_episodes); }},
      {"trainer", "warmup_iters",
       [](TrainerConfig& c, const std::string& k, const std::string& v) {
         c.warmup_iters = to_i64(k, v);
       },
       [](const TrainerConfig& c) { return std::to_string(c.warmup_iters); }},
      {"trainer", "debug_single_worker",
       [](TrainerConfig& c, const std::string& k, const std::string& v) {
         c.debug_single_worker = to_bool(k, v);
       },
       [](const TrainerConfig& c) { return c.debug_single_worker ? "true" : "false"; }},
      {"trainer", "episode_threads",
       [](TrainerConfig& c, const std::string& k, const std::string& v) {
         c.episode_threads = static_cast<int>(to_i64(k, v));
       },
       [](const TrainerConfig& c) { return std::to_string(c.episode_threads); }},
  };
  return defs;
}

}  // namespace

TrainerConfig parse_config_text(const std::string& text) {
  TrainerConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t comment = line.find_first_of("#;");
    if (comment != std::string::npos) line = line.substr(0, comment);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError(line, "config error: malformed section header '" + line + "'");
      section = trim(line.substr(1, line.size() - 2));
      bool known = false;
      for (const auto& d : key_defs())
        if (d.section == section) known = true;
      if (!known) throw ConfigError(section, "config error: unknown section [" + section + "]");
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(line, "config error: expected key = value, got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const std::string qualified = section.empty() ? key : section + "." + key;
    const KeyDef* def = nullptr;
    for (const auto& d : key_defs())
      if (d.section == section && d.key == key) def = &d;
    if (!def) throw ConfigError(qualified, "config error: unknown key " + qualified);
    def->set(cfg, qualified, value);
  }
  return cfg;
}

TrainerConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, "config error: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

std::string render_config(const TrainerConfig& config) {
  std::ostringstream out;
  std::string section;
  for (const auto& d : key_defs()) {
    if (d.section != section) {
      if (!section.empty()) out << "\n";
      section = d.section;
      out << "[" << section << "]\n";
    }
    out << d.key << " = " << d.get(config) << "\n";
  }
  return out.str();
}

}  // namespace coex
