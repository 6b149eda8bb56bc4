#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include "lgslam/floor_detector.hpp"
#include "lgslam/graph_builder.hpp"
#include "lgslam/loop_detector.hpp"
#include "lgslam/prefilter.hpp"
#include "lgslam/pretracker.hpp"
#include "lgslam/tracker.hpp"

namespace lgslam {

enum class FloorModeSetting { Planar, Rough, None };

struct SlamConfig {
  PrefiltererConfig prefilter;
  PretrackerConfig pretracker;
  TrackerConfig tracker;
  FloorModeSetting floor_mode = FloorModeSetting::Planar;
  FloorConfig floor;
  LoopConfig loop;
  GraphConfig graph;

  void validate() const;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Flat `key = value` text; '#' starts a comment. Unknown keys, duplicate
/// keys and malformed values are errors. `source` names the text in messages.
SlamConfig parse_config(const std::string& text, const std::string& source = "<config>");
SlamConfig load_config(const std::filesystem::path& path);

/// Every supported key with its current value, parseable by parse_config.
std::string format_config(const SlamConfig& cfg);

}  // namespace lgslam
