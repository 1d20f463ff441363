#pragma once

#include <algorithm>
#include <charconv>
#include <climits>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "tcmp/errors.hpp"
#include "tcmp/geometry.hpp"
#include "tcmp/scenario.hpp"
#include "tcmp/tracker.hpp"

namespace tcmp {

// One MOTChallenge CSV line: frame,id,x,y,w,h,conf,-1,-1,-1.
struct MotRecord {
  int frame = 0;
  int id = 0;
  double x = 0, y = 0, w = 0, h = 0;
  double conf = 0;

  BoundingBox box() const { return {x, y, w, h}; }

  friend bool operator==(const MotRecord&, const MotRecord&) = default;
};

namespace detail {

inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s, long line) {
  double v = 0;
  const char* b = s.data();
  const char* e = s.data() + s.size();
  while (b < e && *b == ' ') ++b;
  const auto res = std::from_chars(b, e, v);
  if (res.ec != std::errc{} || res.ptr != e) {
    throw ParseError("bad numeric field '" + s + "'", line);
  }
  return v;
}

}  // namespace detail

inline std::vector<MotRecord> read_mot(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("read_mot: cannot open " + path.string());
  std::vector<MotRecord> records;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    size_t start = 0;
    while (true) {
      const size_t comma = line.find(',', start);
      fields.push_back(line.substr(start, comma == std::string::npos ? std::string::npos
                                                                     : comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (fields.size() != 10) {
      throw ParseError("expected 10 comma-separated fields, got " + std::to_string(fields.size()),
                       line_no);
    }
    MotRecord r;
    r.frame = static_cast<int>(detail::parse_double(fields[0], line_no));
    r.id = static_cast<int>(detail::parse_double(fields[1], line_no));
    r.x = detail::parse_double(fields[2], line_no);
    r.y = detail::parse_double(fields[3], line_no);
    r.w = detail::parse_double(fields[4], line_no);
    r.h = detail::parse_double(fields[5], line_no);
    r.conf = detail::parse_double(fields[6], line_no);
    detail::parse_double(fields[7], line_no);
    detail::parse_double(fields[8], line_no);
    detail::parse_double(fields[9], line_no);
    records.push_back(r);
  }
  return records;
}

// Writes records sorted by (frame, id); doubles use shortest round-trip
// formatting so read_mot(write_mot(r)) == r exactly.
inline void write_mot(std::vector<MotRecord> records, const std::filesystem::path& path) {
  std::stable_sort(records.begin(), records.end(), [](const MotRecord& a, const MotRecord& b) {
    return a.frame != b.frame ? a.frame < b.frame : a.id < b.id;
  });
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("write_mot: cannot open " + path.string());
  for (const MotRecord& r : records) {
    out << r.frame << ',' << r.id << ',' << detail::format_double(r.x) << ','
        << detail::format_double(r.y) << ',' << detail::format_double(r.w) << ','
        << detail::format_double(r.h) << ',' << detail::format_double(r.conf) << ",-1,-1,-1\n";
  }
  if (!out) throw Error("write_mot: write failed for " + path.string());
}

inline std::vector<MotRecord> gt_to_records(const GroundTruthSet& gt) {
  std::vector<MotRecord> records;
  for (const GtObject& obj : gt.objects) {
    for (size_t i = 0; i < obj.boxes.size(); ++i) {
      const BoundingBox& b = obj.boxes[i];
      records.push_back({obj.first_frame + static_cast<int>(i), obj.id, b.x, b.y, b.w, b.h, 1.0});
    }
  }
  return records;
}

inline std::vector<MotRecord> detections_to_records(
    const std::vector<std::vector<Detection>>& frames) {
  std::vector<MotRecord> records;
  for (const auto& dets : frames) {
    for (const Detection& d : dets) {
      records.push_back({d.frame, -1, d.box.x, d.box.y, d.box.w, d.box.h, d.score});
    }
  }
  return records;
}

// Frame-indexed detections from a det file; frames without records yield
// empty lists so the tracker still ticks through them.
inline std::vector<std::vector<Detection>> records_to_detections(
    const std::vector<MotRecord>& records, int& first_frame) {
  if (records.empty()) {
    first_frame = 1;
    return {};
  }
  int lo = records.front().frame, hi = records.front().frame;
  for (const MotRecord& r : records) {
    lo = std::min(lo, r.frame);
    hi = std::max(hi, r.frame);
  }
  first_frame = lo;
  std::vector<std::vector<Detection>> frames(static_cast<size_t>(hi - lo + 1));
  for (const MotRecord& r : records) {
    frames[static_cast<size_t>(r.frame - lo)].push_back({r.box(), r.conf, r.frame});
  }
  return frames;
}

// Per-identity trajectories from ground-truth records, split at frame gaps
// (a per-frame motion is undefined across a gap).
inline std::vector<Trajectory> records_to_trajectories(const std::vector<MotRecord>& records,
                                                       const ImageGeometry& geom) {
  std::map<int, std::vector<MotRecord>> by_id;
  for (const MotRecord& r : records) by_id[r.id].push_back(r);
  std::vector<Trajectory> out;
  for (auto& [id, recs] : by_id) {
    std::stable_sort(recs.begin(), recs.end(),
                     [](const MotRecord& a, const MotRecord& b) { return a.frame < b.frame; });
    Trajectory current{{}, geom};
    int prev_frame = INT_MIN;
    for (const MotRecord& r : recs) {
      if (prev_frame != INT_MIN && r.frame != prev_frame + 1) {
        if (current.boxes.size() >= 2) out.push_back(current);
        current.boxes.clear();
      }
      current.boxes.push_back(r.box());
      prev_frame = r.frame;
    }
    if (current.boxes.size() >= 2) out.push_back(current);
  }
  return out;
}

}  // namespace tcmp
