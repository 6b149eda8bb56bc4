#include "lgslam/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace lgslam {

void SlamConfig::validate() const {
  prefilter.validate();
  pretracker.validate();
  tracker.validate();
  floor.validate();
  loop.validate();
  graph.validate();
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw std::invalid_argument("not a number");
  return out;
}

long long to_int(const std::string& v) {
  long long out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw std::invalid_argument("not an integer");
  return out;
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("not a boolean");
}

using Setter = std::function<void(SlamConfig&, const std::string&)>;
using Getter = std::function<std::string(const SlamConfig&)>;

struct Key {
  Setter set;
  Getter get;
};

std::string num(double v) {
  std::ostringstream ss;
  ss.precision(12);
  ss << v;
  return ss.str();
}

const char* method_name(RegistrationMethod m) {
  switch (m) {
    case RegistrationMethod::IcpPointToPoint: return "ICP_P2P";
    case RegistrationMethod::IcpPointToPlane: return "ICP_P2PLANE";
    case RegistrationMethod::Gicp: return "GICP";
  }
  return "GICP";
}

const std::map<std::string, Key>& keys() {
  static const std::map<std::string, Key> table = [] {
    std::map<std::string, Key> k;
    auto real = [&](const char* name, auto member) {
      k[name] = {[member](SlamConfig& c, const std::string& v) { member(c) = to_double(v); },
                 [member](const SlamConfig& c) {
                   return num(member(const_cast<SlamConfig&>(c)));
                 }};
    };
    auto integer = [&](const char* name, auto member) {
      k[name] = {[member](SlamConfig& c, const std::string& v) {
                   const long long x = to_int(v);
                   if (x < 0) throw std::invalid_argument("must be non-negative");
                   member(c) = static_cast<std::remove_reference_t<decltype(member(c))>>(x);
                 },
                 [member](const SlamConfig& c) {
                   return std::to_string(member(const_cast<SlamConfig&>(c)));
                 }};
    };

    k["downsample_method"] = {
        [](SlamConfig& c, const std::string& v) {
          if (v == "VOXELGRID") c.prefilter.downsample_method = DownsampleMethod::VoxelGrid;
          else if (v == "NONE") c.prefilter.downsample_method = DownsampleMethod::None;
          else throw std::invalid_argument("expected VOXELGRID or NONE");
        },
        [](const SlamConfig& c) {
          return std::string(c.prefilter.downsample_method == DownsampleMethod::VoxelGrid
                                 ? "VOXELGRID" : "NONE");
        }};
    real("downsample_resolution", [](SlamConfig& c) -> double& { return c.prefilter.downsample_resolution; });
    k["outlier_removal_method"] = {
        [](SlamConfig& c, const std::string& v) {
          if (v == "RADIUS") c.prefilter.outlier_method = OutlierMethod::Radius;
          else if (v == "NONE") c.prefilter.outlier_method = OutlierMethod::None;
          else throw std::invalid_argument("expected RADIUS or NONE");
        },
        [](const SlamConfig& c) {
          return std::string(c.prefilter.outlier_method == OutlierMethod::Radius ? "RADIUS" : "NONE");
        }};
    real("radius", [](SlamConfig& c) -> double& { return c.prefilter.radius; });
    integer("min_neighbors", [](SlamConfig& c) -> std::size_t& { return c.prefilter.min_neighbors; });

    k["registration_method"] = {
        [](SlamConfig& c, const std::string& v) {
          RegistrationMethod m;
          if (v == "ICP_P2P") m = RegistrationMethod::IcpPointToPoint;
          else if (v == "ICP_P2PLANE") m = RegistrationMethod::IcpPointToPlane;
          else if (v == "GICP" || v == "FAST_GICP") m = RegistrationMethod::Gicp;
          else throw std::invalid_argument("expected ICP_P2P, ICP_P2PLANE or GICP");
          c.tracker.registration.method = m;
          c.loop.registration.method = m;
        },
        [](const SlamConfig& c) { return std::string(method_name(c.tracker.registration.method)); }};
    k["max_iterations"] = {
        [](SlamConfig& c, const std::string& v) {
          const long long x = to_int(v);
          if (x < 1) throw std::invalid_argument("must be >= 1");
          c.tracker.registration.max_iterations = static_cast<int>(x);
          c.loop.registration.max_iterations = static_cast<int>(x);
        },
        [](const SlamConfig& c) { return std::to_string(c.tracker.registration.max_iterations); }};
    k["transformation_epsilon"] = {
        [](SlamConfig& c, const std::string& v) {
          c.tracker.registration.transformation_epsilon = to_double(v);
          c.loop.registration.transformation_epsilon = to_double(v);
        },
        [](const SlamConfig& c) { return num(c.tracker.registration.transformation_epsilon); }};
    k["max_correspondence_distance"] = {
        [](SlamConfig& c, const std::string& v) {
          c.tracker.registration.max_correspondence_distance = to_double(v);
          c.loop.registration.max_correspondence_distance = to_double(v);
        },
        [](const SlamConfig& c) { return num(c.tracker.registration.max_correspondence_distance); }};

    k["pretracker_enabled"] = {
        [](SlamConfig& c, const std::string& v) { c.pretracker.enabled = to_bool(v); },
        [](const SlamConfig& c) { return std::string(c.pretracker.enabled ? "true" : "false"); }};
    real("phase1_keep_fraction", [](SlamConfig& c) -> double& { return c.pretracker.phase1_keep_fraction; });
    real("phase2_keep_fraction", [](SlamConfig& c) -> double& { return c.pretracker.phase2_keep_fraction; });
    integer("large_cloud_threshold", [](SlamConfig& c) -> std::size_t& { return c.pretracker.large_cloud_threshold; });

    real("keyframe_delta_trans", [](SlamConfig& c) -> double& { return c.tracker.criteria.delta_trans; });
    real("keyframe_delta_angle", [](SlamConfig& c) -> double& { return c.tracker.criteria.delta_angle; });
    real("keyframe_delta_time", [](SlamConfig& c) -> double& { return c.tracker.criteria.delta_time; });

    k["floor_mode"] = {
        [](SlamConfig& c, const std::string& v) {
          if (v == "PLANAR") c.floor_mode = FloorModeSetting::Planar;
          else if (v == "ROUGH") c.floor_mode = FloorModeSetting::Rough;
          else if (v == "NONE") c.floor_mode = FloorModeSetting::None;
          else throw std::invalid_argument("expected PLANAR, ROUGH or NONE");
        },
        [](const SlamConfig& c) {
          switch (c.floor_mode) {
            case FloorModeSetting::Planar: return std::string("PLANAR");
            case FloorModeSetting::Rough: return std::string("ROUGH");
            case FloorModeSetting::None: return std::string("NONE");
          }
          return std::string("PLANAR");
        }};
    real("floor_clip_min_z", [](SlamConfig& c) -> double& { return c.floor.clip_min_z; });
    real("floor_clip_max_z", [](SlamConfig& c) -> double& { return c.floor.clip_max_z; });
    k["floor_normal_max_angle"] = {
        [](SlamConfig& c, const std::string& v) {
          c.floor.normal_vertical_max_angle = to_double(v) * M_PI / 180.0;
        },
        [](const SlamConfig& c) { return num(c.floor.normal_vertical_max_angle * 180.0 / M_PI); }};
    real("floor_ransac_threshold", [](SlamConfig& c) -> double& { return c.floor.ransac_inlier_threshold; });
    real("floor_min_inlier_fraction", [](SlamConfig& c) -> double& { return c.floor.min_inlier_fraction; });
    real("floor_rough_clip_radius", [](SlamConfig& c) -> double& { return c.floor.rough_clip_radius; });
    k["floor_ransac_iterations"] = {
        [](SlamConfig& c, const std::string& v) {
          const long long x = to_int(v);
          if (x < 1) throw std::invalid_argument("must be >= 1");
          c.floor.ransac_iterations = static_cast<int>(x);
        },
        [](const SlamConfig& c) { return std::to_string(c.floor.ransac_iterations); }};
    integer("floor_ransac_seed", [](SlamConfig& c) -> std::uint64_t& { return c.floor.seed; });

    real("loop_search_radius", [](SlamConfig& c) -> double& { return c.loop.search_radius; });
    real("loop_min_accum_distance", [](SlamConfig& c) -> double& { return c.loop.min_accumulated_distance; });
    integer("loop_top_k", [](SlamConfig& c) -> int& { return c.loop.top_k; });
    real("loop_fitness_threshold", [](SlamConfig& c) -> double& { return c.loop.fitness_accept_threshold; });
    k["sc_rings"] = {
        [](SlamConfig& c, const std::string& v) {
          c.loop.scan_context.rings = c.graph.scan_context.rings = static_cast<int>(to_int(v));
        },
        [](const SlamConfig& c) { return std::to_string(c.graph.scan_context.rings); }};
    k["sc_sectors"] = {
        [](SlamConfig& c, const std::string& v) {
          c.loop.scan_context.sectors = c.graph.scan_context.sectors = static_cast<int>(to_int(v));
        },
        [](const SlamConfig& c) { return std::to_string(c.graph.scan_context.sectors); }};
    k["sc_max_range"] = {
        [](SlamConfig& c, const std::string& v) {
          c.loop.scan_context.max_range = c.graph.scan_context.max_range = to_double(v);
        },
        [](const SlamConfig& c) { return num(c.graph.scan_context.max_range); }};

    integer("optimize_every_n_keyframes", [](SlamConfig& c) -> int& { return c.graph.optimize_every_n_keyframes; });
    real("incline_threshold_deg", [](SlamConfig& c) -> double& { return c.graph.incline_threshold_deg; });
    real("odometry_information_translation", [](SlamConfig& c) -> double& { return c.graph.odometry_information_translation; });
    real("odometry_information_rotation", [](SlamConfig& c) -> double& { return c.graph.odometry_information_rotation; });
    real("loop_information_cap", [](SlamConfig& c) -> double& { return c.graph.loop_information_cap; });
    real("floor_information_angle", [](SlamConfig& c) -> double& { return c.graph.floor_information_angle; });
    real("floor_information_offset", [](SlamConfig& c) -> double& { return c.graph.floor_information_offset; });
    return k;
  }();
  return table;
}

}  // namespace

SlamConfig parse_config(const std::string& text, const std::string& source) {
  SlamConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::set<std::string> seen;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(lineno) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected `key = value`");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = keys().find(key);
    if (it == keys().end()) throw ConfigError(where + "unknown key `" + key + "`");
    if (!seen.insert(key).second) throw ConfigError(where + "duplicate key `" + key + "`");
    if (value.empty()) throw ConfigError(where + "missing value for `" + key + "`");
    try {
      it->second.set(cfg, value);
    } catch (const std::exception& e) {
      throw ConfigError(where + "bad value `" + value + "` for `" + key + "`: " + e.what());
    }
  }
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(source + ": " + e.what());
  }
  return cfg;
}

SlamConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.string());
}

std::string format_config(const SlamConfig& cfg) {
  std::string out;
  for (const auto& [name, key] : keys()) out += name + " = " + key.get(cfg) + "\n";
  return out;
}

}  // namespace lgslam
