#pragma once

#include <stdexcept>
#include <string>

#include "coex/trainer.hpp"

namespace coex {

// Raised for unknown keys/sections or unparseable values; `key` names the
// offender as "section.key".
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& what)
      : std::runtime_error(what), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

// Flat sectioned key-value text with INI semantics. Sections: environment,
// actor, extractor, manager, trainer. Missing keys take their defaults;
// unknown keys are rejected.
TrainerConfig parse_config_text(const std::string& text);
TrainerConfig parse_config_file(const std::string& path);

// Fully resolved echo; itself a valid config that reproduces the run.
std::string render_config(const TrainerConfig& config);

}  // namespace coex
