#pragma once

// Demonstration keypoint tracks: knees and feet relative to the pelvis, one
// frame per control step, replayed cyclically.
//
// File format (CSV, UTF-8):
//   # optional comment lines; "# frames_per_half_step=N" sets the cadence
//   frame,part,x,y
//   0,r_knee,0.12,-0.41
//   ...
// `part` is one of r_knee, l_knee, r_foot, l_foot; four rows per frame.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "pbrs/biped_sim.hpp"
#include "pbrs/error.hpp"

namespace pbrs {

inline constexpr int kDemoParts = 4;
inline constexpr std::array<const char*, kDemoParts> kDemoPartNames = {"r_knee", "l_knee",
                                                                       "r_foot", "l_foot"};
inline constexpr std::size_t kMinDemoFrames = 8;

struct DemoFrame {
  std::int64_t frame_index = 0;
  // Indexed like kDemoPartNames.
  std::array<Vec2, kDemoParts> parts{Vec2::Zero(), Vec2::Zero(), Vec2::Zero(), Vec2::Zero()};

  const Vec2& r_knee() const { return parts[0]; }
  const Vec2& l_knee() const { return parts[1]; }
  const Vec2& r_foot() const { return parts[2]; }
  const Vec2& l_foot() const { return parts[3]; }

  bool operator==(const DemoFrame&) const = default;
};

struct DemoTrack {
  std::vector<DemoFrame> frames;
  int frames_per_half_step = 4;
  double scale = 1.0;  // meters per demo unit
  bool cyclic = true;
  std::vector<std::string> comments;

  bool operator==(const DemoTrack&) const = default;
};

/// Pelvis-relative knee/foot positions of a simulator keypoint set, as a demo frame.
inline DemoFrame to_demo_frame(const KeypointSet& k, std::int64_t frame_index) {
  DemoFrame f;
  f.frame_index = frame_index;
  f.parts = {k.r_knee - k.pelvis, k.l_knee - k.pelvis, k.r_foot - k.pelvis, k.l_foot - k.pelvis};
  return f;
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline std::optional<int> part_index(const std::string& name) {
  for (int p = 0; p < kDemoParts; ++p)
    if (name == kDemoPartNames[p]) return p;
  return std::nullopt;
}

inline double parse_number(const std::string& text, std::size_t row, const std::string& column) {
  if (text.empty())
    throw DataError("row " + std::to_string(row) + ": empty value in column '" + column + "'");
  const char* begin = text.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0')
    throw DataError("row " + std::to_string(row) + ": cannot parse '" + text + "' in column '" +
                    column + "'");
  return v;
}

}  // namespace detail

/// Parses a demo CSV stream. `row` numbers in error messages count physical
/// lines from 1, including the header.
inline DemoTrack parse_demo(std::istream& in) {
  DemoTrack track;
  std::string line;
  std::size_t row = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++row;
    const std::string t = detail::trim(line);
    if (t.empty()) continue;
    if (t[0] == '#') {
      track.comments.push_back(detail::trim(t.substr(1)));
      // Cadence note, e.g. "# frames_per_half_step=12".
      const std::string key = "frames_per_half_step=";
      const std::string& c = track.comments.back();
      if (c.rfind(key, 0) == 0) {
        const double v = detail::parse_number(detail::trim(c.substr(key.size())), row, "comment");
        if (!(v >= 1.0) || v != std::floor(v) || v > 1e6)
          throw DataError("row " + std::to_string(row) + ": frames_per_half_step must be a positive integer");
        track.frames_per_half_step = static_cast<int>(v);
      }
      continue;
    }
    header = detail::split_csv(t);
    break;
  }
  if (header.empty()) throw SchemaError("demo file has no header row");

  std::array<int, 4> col{-1, -1, -1, -1};
  const std::array<const char*, 4> required = {"frame", "part", "x", "y"};
  for (int c = 0; c < 4; ++c) {
    const auto it = std::find(header.begin(), header.end(), required[c]);
    if (it == header.end())
      throw SchemaError(std::string("demo file is missing column '") + required[c] + "'");
    col[c] = static_cast<int>(it - header.begin());
  }
  const int width = static_cast<int>(header.size());

  struct Partial {
    std::array<bool, kDemoParts> seen{};
    DemoFrame frame;
  };
  std::map<std::int64_t, Partial> frames;
  while (std::getline(in, line)) {
    ++row;
    const std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto cells = detail::split_csv(t);
    if (static_cast<int>(cells.size()) != width)
      throw DataError("row " + std::to_string(row) + ": expected " + std::to_string(width) +
                      " columns, found " + std::to_string(cells.size()));
    const double frame_value = detail::parse_number(cells[col[0]], row, "frame");
    if (frame_value != std::floor(frame_value) || std::abs(frame_value) > 9.0e15)
      throw DataError("row " + std::to_string(row) + ": frame must be an integer");
    const auto frame = static_cast<std::int64_t>(frame_value);
    const std::string& part_name = cells[col[1]];
    const auto part = detail::part_index(part_name);
    if (!part)
      throw DataError("row " + std::to_string(row) + ": unknown part '" + part_name + "'");
    const double x = detail::parse_number(cells[col[2]], row, part_name + "_x");
    const double y = detail::parse_number(cells[col[3]], row, part_name + "_y");
    if (!std::isfinite(x))
      throw DataError("row " + std::to_string(row) + ": non-finite value in column " +
                      part_name + "_x");
    if (!std::isfinite(y))
      throw DataError("row " + std::to_string(row) + ": non-finite value in column " +
                      part_name + "_y");
    Partial& p = frames[frame];
    if (p.seen[*part])
      throw DataError("row " + std::to_string(row) + ": duplicate frame_index " +
                      std::to_string(frame) + " for part " + part_name);
    p.seen[*part] = true;
    p.frame.frame_index = frame;
    p.frame.parts[*part] = {x, y};
  }

  track.frames.reserve(frames.size());
  for (auto& [index, p] : frames) {
    for (int k = 0; k < kDemoParts; ++k)
      if (!p.seen[k])
        throw DataError("frame " + std::to_string(index) + ": missing part " + kDemoPartNames[k]);
    track.frames.push_back(p.frame);
  }
  if (track.frames.size() < kMinDemoFrames)
    throw InsufficientDataError("demo track has " + std::to_string(track.frames.size()) +
                                " frames; at least " + std::to_string(kMinDemoFrames) +
                                " are required");
  return track;
}

inline DemoTrack load_demo(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open demo file '" + path + "'");
  try {
    return parse_demo(in);
  } catch (const InsufficientDataError& e) {
    throw InsufficientDataError(path + ": " + e.what());
  } catch (const SchemaError& e) {
    throw SchemaError(path + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

/// Writes `track` in the demo CSV format with round-trip precision.
inline void write_demo(const DemoTrack& track, std::ostream& os) {
  bool has_cadence = false;
  for (const auto& c : track.comments) {
    os << "# " << c << '\n';
    has_cadence = has_cadence || c.rfind("frames_per_half_step=", 0) == 0;
  }
  if (!has_cadence && track.frames_per_half_step != 4)
    os << "# frames_per_half_step=" << track.frames_per_half_step << '\n';
  os << "frame,part,x,y\n" << std::setprecision(17);
  for (const DemoFrame& f : track.frames)
    for (int p = 0; p < kDemoParts; ++p)
      os << f.frame_index << ',' << kDemoPartNames[p] << ',' << f.parts[p].x() << ','
         << f.parts[p].y() << '\n';
}

inline void save_demo(const DemoTrack& track, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write demo file '" + path + "'");
  write_demo(track, os);
  if (!os) throw std::runtime_error("failed writing demo file '" + path + "'");
}

/// Largest pelvis-to-foot distance over the track, in track units.
inline double max_foot_distance(const DemoTrack& track) {
  double best = 0.0;
  for (const DemoFrame& f : track.frames)
    best = std::max({best, f.r_foot().norm(), f.l_foot().norm()});
  return best;
}

/// Rescales the track so its maximum pelvis-to-foot distance equals `leg_length`.
inline DemoTrack normalize(const DemoTrack& track, double leg_length) {
  if (!(leg_length > 0.0) || !std::isfinite(leg_length))
    throw ConfigError("normalize: leg_length must be > 0");
  const double reach = max_foot_distance(track);
  if (!(reach > 0.0)) throw DataError("normalize: degenerate track (maximum foot distance is 0)");

  DemoTrack out = track;
  // Already at scale: leave the coordinates untouched so normalization is idempotent.
  if (std::abs(reach - leg_length) <= 8.0 * std::numeric_limits<double>::epsilon() * leg_length)
    return out;

  const double scale = leg_length / reach;
  out.scale = track.scale * scale;
  for (DemoFrame& f : out.frames)
    for (Vec2& p : f.parts) {
      p *= scale;
      if (std::abs(p.x()) > 2.0 || std::abs(p.y()) > 2.0)
        throw DataError("normalize: frame " + std::to_string(f.frame_index) +
                        " has a coordinate outside [-2, 2] m after scaling");
    }
  return out;
}

inline const DemoFrame& phase_lookup(const DemoTrack& track, std::int64_t control_step) {
  const auto n = static_cast<std::int64_t>(track.frames.size());
  std::int64_t i = control_step % n;
  if (i < 0) i += n;
  return track.frames[static_cast<std::size_t>(i)];
}

}  // namespace pbrs
