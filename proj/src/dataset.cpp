#include "lgslam/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <spdlog/spdlog.h>

namespace lgslam {

namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little, "binary I/O assumes a little-endian host");

namespace {

std::ifstream open_in(const fs::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

bool blank_or_comment(const std::string& line) {
  const auto pos = line.find_first_not_of(" \t\r");
  return pos == std::string::npos || line[pos] == '#';
}

Pose pose_from_rows(const double* v) {
  Mat3 r;
  r << v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10];
  return Pose(r, Vec3(v[3], v[7], v[11])).orthonormalized();
}

}  // namespace

PointCloud load_kitti_scan(const fs::path& path) {
  auto in = open_in(path, std::ios::binary);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() % 16 != 0) {
    throw FormatError(path.string() + ": size " + std::to_string(bytes.size()) +
                      " is not a multiple of 16 bytes");
  }
  const std::size_t n = bytes.size() / 16;
  PointCloud cloud;
  cloud.points.reserve(n);
  std::size_t dropped = 0;
  for (std::size_t i = 0; i < n; ++i) {
    float v[4];
    std::memcpy(v, bytes.data() + 16 * i, sizeof v);
    if (!std::isfinite(v[0]) || !std::isfinite(v[1]) || !std::isfinite(v[2])) {
      ++dropped;
      continue;
    }
    cloud.points.emplace_back(v[0], v[1], v[2]);
  }
  if (dropped) spdlog::warn("{}: dropped {} non-finite points", path.string(), dropped);
  cloud.frame_id = "velodyne";
  return cloud;
}

void write_kitti_scan(const fs::path& path, const PointCloud& cloud) {
  auto out = open_out(path, std::ios::binary);
  std::vector<float> buf;
  buf.reserve(cloud.size() * 4);
  for (const auto& p : cloud.points) {
    buf.insert(buf.end(), {static_cast<float>(p.x()), static_cast<float>(p.y()),
                           static_cast<float>(p.z()), 0.0f});
  }
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
}

std::vector<Pose> read_kitti_poses(const fs::path& path) {
  auto in = open_in(path);
  std::vector<Pose> poses;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank_or_comment(line)) continue;
    std::istringstream ss(line);
    double v[12];
    for (double& x : v) {
      if (!(ss >> x)) throw FormatError(path.string() + ":" + std::to_string(lineno) +
                                        ": expected 12 values");
    }
    poses.push_back(pose_from_rows(v));
  }
  return poses;
}

void write_kitti_poses(const fs::path& path, std::span<const Pose> poses) {
  auto out = open_out(path);
  out << std::setprecision(12);
  for (const auto& p : poses) {
    const Mat3& r = p.rotation();
    const Vec3& t = p.translation();
    for (int i = 0; i < 3; ++i) {
      out << r(i, 0) << ' ' << r(i, 1) << ' ' << r(i, 2) << ' ' << t[i] << (i < 2 ? ' ' : '\n');
    }
  }
}

std::optional<Pose> read_kitti_velo_to_cam(const fs::path& path) {
  auto in = open_in(path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("Tr:", 0) != 0 && line.rfind("Tr_velo_to_cam:", 0) != 0) continue;
    std::istringstream ss(line.substr(line.find(':') + 1));
    double v[12];
    for (double& x : v) {
      if (!(ss >> x)) throw FormatError(path.string() + ": malformed Tr entry");
    }
    return pose_from_rows(v);
  }
  return std::nullopt;
}

std::vector<double> read_timestamps(const fs::path& path) {
  auto in = open_in(path);
  std::vector<double> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank_or_comment(line)) continue;
    std::istringstream ss(line);
    double t;
    if (!(ss >> t)) throw FormatError(path.string() + ":" + std::to_string(lineno) +
                                      ": expected a timestamp");
    out.push_back(t);
  }
  return out;
}

std::vector<TimedPose> read_tum(const fs::path& path) {
  auto in = open_in(path);
  std::vector<TimedPose> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank_or_comment(line)) continue;
    std::istringstream ss(line);
    double t, x, y, z, qx, qy, qz, qw;
    if (!(ss >> t >> x >> y >> z >> qx >> qy >> qz >> qw)) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) +
                        ": expected `timestamp tx ty tz qx qy qz qw`");
    }
    out.push_back({t, Pose::from_quaternion(Eigen::Quaterniond(qw, qx, qy, qz), Vec3(x, y, z))});
  }
  return out;
}

void write_tum(const fs::path& path, std::span<const TimedPose> poses) {
  auto out = open_out(path);
  out << std::fixed;
  for (const auto& p : poses) {
    const Vec3& t = p.pose.translation();
    const Eigen::Quaterniond q = p.pose.quaternion();
    out << std::setprecision(6) << p.timestamp << std::setprecision(9) << ' ' << t.x() << ' '
        << t.y() << ' ' << t.z() << ' ' << q.x() << ' ' << q.y() << ' ' << q.z() << ' ' << q.w()
        << '\n';
  }
}

void write_ply(const fs::path& path, const PointCloud& cloud) {
  auto out = open_out(path, std::ios::binary);
  out << "ply\nformat binary_little_endian 1.0\nelement vertex " << cloud.size()
      << "\nproperty float x\nproperty float y\nproperty float z\nend_header\n";
  std::vector<float> buf;
  buf.reserve(cloud.size() * 3);
  for (const auto& p : cloud.points) {
    buf.insert(buf.end(),
               {static_cast<float>(p.x()), static_cast<float>(p.y()), static_cast<float>(p.z())});
  }
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
}

PointCloud read_ply(const fs::path& path) {
  auto in = open_in(path, std::ios::binary);
  std::string line;
  std::size_t count = 0;
  bool binary = false;
  int properties = 0;
  while (std::getline(in, line)) {
    if (line.rfind("format binary_little_endian", 0) == 0) binary = true;
    if (line.rfind("element vertex", 0) == 0) count = std::stoull(line.substr(15));
    if (line.rfind("property float", 0) == 0) ++properties;
    if (line == "end_header") break;
  }
  if (!binary || properties != 3) throw FormatError(path.string() + ": unsupported PLY layout");
  std::vector<float> buf(count * 3);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
  if (static_cast<std::size_t>(in.gcount()) != buf.size() * 4) {
    throw FormatError(path.string() + ": truncated vertex data");
  }
  PointCloud cloud;
  for (std::size_t i = 0; i < count; ++i) {
    cloud.points.emplace_back(buf[3 * i], buf[3 * i + 1], buf[3 * i + 2]);
  }
  return cloud;
}

std::vector<Pose> oxts_to_poses(std::span<const OxtsFix> fixes) {
  std::vector<Pose> out;
  if (fixes.empty()) return out;
  // WGS84 radii of curvature at the anchor latitude.
  constexpr double a = 6378137.0;
  constexpr double e2 = 6.69437999014e-3;
  const double lat0 = fixes[0].lat * M_PI / 180.0;
  const double lon0 = fixes[0].lon * M_PI / 180.0;
  const double s = std::sin(lat0);
  const double meridian = a * (1 - e2) / std::pow(1 - e2 * s * s, 1.5);
  const double normal = a / std::sqrt(1 - e2 * s * s);
  for (const auto& f : fixes) {
    const double east = (f.lon * M_PI / 180.0 - lon0) * (normal + fixes[0].alt) * std::cos(lat0);
    const double north = (f.lat * M_PI / 180.0 - lat0) * (meridian + fixes[0].alt);
    const Mat3 r = (Eigen::AngleAxisd(f.yaw, Vec3::UnitZ()) *
                    Eigen::AngleAxisd(f.pitch, Vec3::UnitY()) *
                    Eigen::AngleAxisd(f.roll, Vec3::UnitX()))
                       .toRotationMatrix();
    out.emplace_back(r, Vec3(east, north, f.alt - fixes[0].alt));
  }
  // Express relative to the first pose so the trajectory starts at identity.
  const Pose first_inv = out.front().inverse();
  for (auto& p : out) p = first_inv * p;
  return out;
}

OxtsFix read_oxts_fix(const fs::path& path) {
  auto in = open_in(path);
  OxtsFix f;
  if (!(in >> f.lat >> f.lon >> f.alt >> f.roll >> f.pitch >> f.yaw)) {
    throw FormatError(path.string() + ": expected lat lon alt roll pitch yaw");
  }
  return f;
}

void DatasetSequence::validate() const {
  if (scan_paths.size() != timestamps.size()) {
    throw FormatError("scan count and timestamp count differ in " + root.string());
  }
  for (std::size_t i = 1; i < timestamps.size(); ++i) {
    if (!(timestamps[i] > timestamps[i - 1])) {
      throw FormatError("timestamps are not strictly increasing in " + root.string());
    }
  }
}

DatasetSequence open_kitti_sequence(const fs::path& dir) {
  DatasetSequence seq;
  seq.root = dir;
  const fs::path velo = dir / "velodyne";
  if (!fs::is_directory(velo)) {
    throw std::runtime_error("dataset " + dir.string() + " has no velodyne/ directory");
  }
  for (const auto& entry : fs::directory_iterator(velo)) {
    if (entry.path().extension() == ".bin") seq.scan_paths.push_back(entry.path());
  }
  std::sort(seq.scan_paths.begin(), seq.scan_paths.end());
  if (seq.scan_paths.empty()) throw std::runtime_error("no .bin scans in " + velo.string());

  if (fs::exists(dir / "times.txt")) {
    seq.timestamps = read_timestamps(dir / "times.txt");
    if (seq.timestamps.size() < seq.scan_paths.size()) {
      throw FormatError(dir.string() + "/times.txt has fewer entries than scans");
    }
    seq.timestamps.resize(seq.scan_paths.size());
  } else {
    for (std::size_t i = 0; i < seq.scan_paths.size(); ++i) seq.timestamps.push_back(0.1 * i);
  }

  seq.ground_truth_source = "none";
  if (fs::exists(dir / "poses.txt")) {
    auto poses = read_kitti_poses(dir / "poses.txt");
    std::optional<Pose> tr;
    if (fs::exists(dir / "calib.txt")) tr = read_kitti_velo_to_cam(dir / "calib.txt");
    std::vector<TimedPose> truth;
    for (std::size_t i = 0; i < poses.size() && i < seq.timestamps.size(); ++i) {
      const Pose p = tr ? tr->inverse() * poses[i] * *tr : poses[i];
      truth.push_back({seq.timestamps[i], p});
    }
    seq.ground_truth = std::move(truth);
    seq.ground_truth_source = tr ? "poses.txt+calib" : "poses.txt";
  } else if (fs::is_directory(dir / "oxts" / "data")) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir / "oxts" / "data")) {
      if (entry.path().extension() == ".txt") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<OxtsFix> fixes;
    for (const auto& f : files) fixes.push_back(read_oxts_fix(f));
    const auto poses = oxts_to_poses(fixes);
    std::vector<TimedPose> truth;
    for (std::size_t i = 0; i < poses.size() && i < seq.timestamps.size(); ++i) {
      truth.push_back({seq.timestamps[i], poses[i]});
    }
    seq.ground_truth = std::move(truth);
    seq.ground_truth_source = "oxts-enu";
  }
  seq.validate();
  return seq;
}

void write_kitti_sequence(const fs::path& dir, std::span<const PointCloud> scans,
                          std::span<const double> timestamps, std::span<const Pose> poses) {
  if (scans.size() != timestamps.size()) throw std::invalid_argument("scan/timestamp mismatch");
  fs::create_directories(dir / "velodyne");
  for (std::size_t i = 0; i < scans.size(); ++i) {
    std::ostringstream name;
    name << std::setw(6) << std::setfill('0') << i << ".bin";
    write_kitti_scan(dir / "velodyne" / name.str(), scans[i]);
  }
  auto times = open_out(dir / "times.txt");
  times << std::setprecision(12);
  for (double t : timestamps) times << t << '\n';
  if (!poses.empty()) write_kitti_poses(dir / "poses.txt", poses);
}

}  // namespace lgslam
