#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "lgslam/point_cloud.hpp"

namespace lgslam {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TimedPose {
  double timestamp = 0.0;
  Pose pose;
};

/// KITTI velodyne scan: N x (x, y, z, intensity) little-endian float32.
/// Intensity is discarded and non-finite points are dropped.
PointCloud load_kitti_scan(const std::filesystem::path& path);
void write_kitti_scan(const std::filesystem::path& path, const PointCloud& cloud);

/// 12 values per line, row-major 3x4.
std::vector<Pose> read_kitti_poses(const std::filesystem::path& path);
void write_kitti_poses(const std::filesystem::path& path, std::span<const Pose> poses);
/// The velodyne-to-camera "Tr:" entry of a KITTI calib.txt, if present.
std::optional<Pose> read_kitti_velo_to_cam(const std::filesystem::path& path);

std::vector<double> read_timestamps(const std::filesystem::path& path);

/// TUM trajectory lines: `timestamp tx ty tz qx qy qz qw`; '#' comments allowed.
std::vector<TimedPose> read_tum(const std::filesystem::path& path);
void write_tum(const std::filesystem::path& path, std::span<const TimedPose> poses);

/// Binary little-endian PLY with float x, y, z vertices.
void write_ply(const std::filesystem::path& path, const PointCloud& cloud);
PointCloud read_ply(const std::filesystem::path& path);

/// One GPS/IMU fix from a KITTI raw oxts record (degrees, metres, radians).
struct OxtsFix {
  double lat = 0, lon = 0, alt = 0;
  double roll = 0, pitch = 0, yaw = 0;
};
/// Poses on a local east-north-up tangent plane anchored at the first fix.
std::vector<Pose> oxts_to_poses(std::span<const OxtsFix> fixes);
OxtsFix read_oxts_fix(const std::filesystem::path& path);

struct DatasetSequence {
  std::filesystem::path root;
  std::vector<std::filesystem::path> scan_paths;
  std::vector<double> timestamps;
  std::optional<std::vector<TimedPose>> ground_truth;  ///< velodyne frame
  std::string ground_truth_source;  ///< "none", "poses.txt", "poses.txt+calib", "oxts-enu"

  void validate() const;
};

/// Opens a KITTI-style sequence directory:
///   velodyne/*.bin (sorted by name), times.txt (optional, else 10 Hz),
///   poses.txt (optional; mapped to the velodyne frame via calib.txt Tr),
///   or oxts/data/*.txt (optional; tangent-plane projection).
DatasetSequence open_kitti_sequence(const std::filesystem::path& dir);

/// Writes scans, times.txt and (when given) poses.txt in the velodyne frame.
void write_kitti_sequence(const std::filesystem::path& dir, std::span<const PointCloud> scans,
                          std::span<const double> timestamps, std::span<const Pose> poses);

}  // namespace lgslam
