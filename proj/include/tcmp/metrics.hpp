#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "tcmp/errors.hpp"
#include "tcmp/geometry.hpp"
#include "tcmp/hungarian.hpp"
#include "tcmp/mot_io.hpp"

namespace tcmp {

struct EvalOptions {
  double iou_gate = 0.5;
  // When set, ground-truth records with conf <= 0 are dropped before
  // matching; by default the gt confidence field is ignored.
  bool use_gt_conf = false;
};

// Per-frame gt-to-hypothesis correspondences plus the counts every CLEAR
// metric derives from.
struct Correspondences {
  int first_frame = 0, last_frame = -1;
  std::vector<std::vector<std::pair<int, int>>> frame_matches;  // (gt id, hyp id)
  long gt_total = 0, hyp_total = 0, matched_total = 0;
  long id_switches = 0;

  long false_negatives() const { return gt_total - matched_total; }
  long false_positives() const { return hyp_total - matched_total; }
};

namespace detail {

inline std::map<int, std::vector<std::pair<int, BoundingBox>>> index_by_frame(
    const std::vector<MotRecord>& records, bool use_conf) {
  std::map<int, std::vector<std::pair<int, BoundingBox>>> out;
  for (const MotRecord& r : records) {
    if (use_conf && r.conf <= 0) continue;
    out[r.frame].emplace_back(r.id, r.box());
  }
  for (auto& [frame, list] : out) {
    std::stable_sort(list.begin(), list.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
  }
  return out;
}

constexpr double kForbidden = 1e6;

}  // namespace detail

// CLEAR matching protocol over the ground-truth frame range: pairs matched
// in an earlier frame are kept while still above the gate, then the
// remainder is solved by Hungarian on 1 - IoU with sub-gate pairs forbidden
// (maximum matches first, minimum total distance second). Identity switches
// are counted against each gt identity's most recent previous match.
inline Correspondences per_frame_match(const std::vector<MotRecord>& gt,
                                       const std::vector<MotRecord>& hyp,
                                       const EvalOptions& options = {}) {
  const auto gt_frames = detail::index_by_frame(gt, options.use_gt_conf);
  const auto hyp_frames = detail::index_by_frame(hyp, false);

  Correspondences out;
  if (gt_frames.empty()) {
    for (const auto& [frame, list] : hyp_frames) out.hyp_total += static_cast<long>(list.size());
    return out;
  }
  out.first_frame = gt_frames.begin()->first;
  out.last_frame = gt_frames.rbegin()->first;

  std::map<int, int> last_match;  // gt id -> most recent hyp id
  for (int frame = out.first_frame; frame <= out.last_frame; ++frame) {
    const auto git = gt_frames.find(frame);
    const auto hit = hyp_frames.find(frame);
    static const std::vector<std::pair<int, BoundingBox>> kEmpty;
    const auto& gts = git != gt_frames.end() ? git->second : kEmpty;
    const auto& hyps = hit != hyp_frames.end() ? hit->second : kEmpty;
    out.gt_total += static_cast<long>(gts.size());
    out.hyp_total += static_cast<long>(hyps.size());

    std::vector<std::pair<int, int>> matches;
    std::vector<char> gt_used(gts.size(), 0), hyp_used(hyps.size(), 0);

    // Continuity: keep still-valid previous pairs before matching anew.
    for (size_t g = 0; g < gts.size(); ++g) {
      const auto prev = last_match.find(gts[g].first);
      if (prev == last_match.end()) continue;
      for (size_t h = 0; h < hyps.size(); ++h) {
        if (hyp_used[h] || hyps[h].first != prev->second) continue;
        if (iou(gts[g].second, hyps[h].second) >= options.iou_gate) {
          gt_used[g] = 1;
          hyp_used[h] = 1;
          matches.emplace_back(gts[g].first, hyps[h].first);
        }
        break;
      }
    }

    std::vector<size_t> free_gt, free_hyp;
    for (size_t g = 0; g < gts.size(); ++g) {
      if (!gt_used[g]) free_gt.push_back(g);
    }
    for (size_t h = 0; h < hyps.size(); ++h) {
      if (!hyp_used[h]) free_hyp.push_back(h);
    }
    if (!free_gt.empty() && !free_hyp.empty()) {
      std::vector<std::vector<double>> cost(free_gt.size(),
                                            std::vector<double>(free_hyp.size(), 0.0));
      for (size_t r = 0; r < free_gt.size(); ++r) {
        for (size_t c = 0; c < free_hyp.size(); ++c) {
          const double overlap = iou(gts[free_gt[r]].second, hyps[free_hyp[c]].second);
          cost[r][c] = overlap >= options.iou_gate ? 1.0 - overlap : detail::kForbidden;
        }
      }
      const Assignment a = hungarian(cost);
      for (auto [r, c] : a.matched) {
        if (cost[static_cast<size_t>(r)][static_cast<size_t>(c)] >= detail::kForbidden) continue;
        matches.emplace_back(gts[free_gt[static_cast<size_t>(r)]].first,
                             hyps[free_hyp[static_cast<size_t>(c)]].first);
      }
    }

    std::sort(matches.begin(), matches.end());
    for (auto [gid, hid] : matches) {
      const auto prev = last_match.find(gid);
      if (prev != last_match.end() && prev->second != hid) out.id_switches += 1;
      last_match[gid] = hid;
    }
    out.matched_total += static_cast<long>(matches.size());
    out.frame_matches.push_back(std::move(matches));
  }
  return out;
}

// MOTA = 1 - (FN + FP + IDSW) / GT. At most 1; negative values possible.
inline double mota(const Correspondences& c) {
  if (c.gt_total == 0) throw UndefinedMetric("mota: no ground-truth boxes");
  return 1.0 - static_cast<double>(c.false_negatives() + c.false_positives() + c.id_switches) /
                   static_cast<double>(c.gt_total);
}

// Frames where a gt identity's matched hypothesis id differs from its most
// recent previous match. Recomputed from the stored correspondences.
inline long id_switch_count(const Correspondences& c) {
  std::map<int, int> last;
  long switches = 0;
  for (const auto& frame : c.frame_matches) {
    for (auto [gid, hid] : frame) {
      const auto prev = last.find(gid);
      if (prev != last.end() && prev->second != hid) ++switches;
      last[gid] = hid;
    }
  }
  return switches;
}

struct IdfCounts {
  long idtp = 0, idfp = 0, idfn = 0;
  double idf1 = 0;
};

// Global identity assignment: per-frame (gt id, hyp id) overlaps (IoU above
// the gate) are summed per id pair, and the gt-to-hyp assignment maximizing
// total overlap is solved by Hungarian. IDF1 = 2*IDTP / (2*IDTP+IDFP+IDFN).
inline IdfCounts idf1_counts(const std::vector<MotRecord>& gt, const std::vector<MotRecord>& hyp,
                             const EvalOptions& options = {}) {
  const auto gt_frames = detail::index_by_frame(gt, options.use_gt_conf);
  auto hyp_frames = detail::index_by_frame(hyp, false);
  if (gt_frames.empty()) throw UndefinedMetric("idf1: no ground-truth boxes");
  // Evaluation is bounded by the ground-truth frame range, consistent with
  // per_frame_match.
  const int lo = gt_frames.begin()->first;
  const int hi = gt_frames.rbegin()->first;
  std::erase_if(hyp_frames, [&](const auto& kv) { return kv.first < lo || kv.first > hi; });

  long gt_total = 0, hyp_total = 0;
  std::map<int, int> gt_ids, hyp_ids;  // id -> dense index
  for (const auto& [frame, list] : gt_frames) {
    gt_total += static_cast<long>(list.size());
    for (const auto& [id, box] : list) gt_ids.emplace(id, 0);
  }
  for (const auto& [frame, list] : hyp_frames) {
    hyp_total += static_cast<long>(list.size());
    for (const auto& [id, box] : list) hyp_ids.emplace(id, 0);
  }
  if (gt_total == 0) throw UndefinedMetric("idf1: no ground-truth boxes");
  int next = 0;
  for (auto& [id, idx] : gt_ids) idx = next++;
  next = 0;
  for (auto& [id, idx] : hyp_ids) idx = next++;

  std::vector<std::vector<long>> overlap(gt_ids.size(), std::vector<long>(hyp_ids.size(), 0));
  for (const auto& [frame, gts] : gt_frames) {
    const auto hit = hyp_frames.find(frame);
    if (hit == hyp_frames.end()) continue;
    for (const auto& [gid, gbox] : gts) {
      for (const auto& [hid, hbox] : hit->second) {
        if (iou(gbox, hbox) >= options.iou_gate) {
          overlap[static_cast<size_t>(gt_ids[gid])][static_cast<size_t>(hyp_ids[hid])] += 1;
        }
      }
    }
  }

  long idtp = 0;
  if (!hyp_ids.empty()) {
    long max_ov = 0;
    for (const auto& row : overlap) {
      for (long v : row) max_ov = std::max(max_ov, v);
    }
    std::vector<std::vector<double>> cost(overlap.size(), std::vector<double>(hyp_ids.size(), 0.0));
    for (size_t r = 0; r < overlap.size(); ++r) {
      for (size_t c = 0; c < overlap[r].size(); ++c) {
        cost[r][c] = static_cast<double>(max_ov - overlap[r][c]);
      }
    }
    const Assignment a = hungarian(cost);
    for (auto [r, c] : a.matched) idtp += overlap[static_cast<size_t>(r)][static_cast<size_t>(c)];
  }

  IdfCounts out;
  out.idtp = idtp;
  out.idfn = gt_total - idtp;
  out.idfp = hyp_total - idtp;
  out.idf1 = 2.0 * static_cast<double>(idtp) /
             static_cast<double>(2 * idtp + out.idfp + out.idfn);
  return out;
}

inline double idf1(const std::vector<MotRecord>& gt, const std::vector<MotRecord>& hyp,
                   const EvalOptions& options = {}) {
  return idf1_counts(gt, hyp, options).idf1;
}

struct SequenceMetrics {
  std::string name;
  double mota = 0, idf1 = 0;
  long id_switches = 0, false_positives = 0, false_negatives = 0;
  long idtp = 0, idfp = 0, idfn = 0;
  long gt_total = 0, hyp_total = 0, matched = 0;
};

inline SequenceMetrics evaluate_sequence(const std::vector<MotRecord>& gt,
                                         const std::vector<MotRecord>& hyp,
                                         const std::string& name = "seq",
                                         const EvalOptions& options = {}) {
  const Correspondences c = per_frame_match(gt, hyp, options);
  const IdfCounts idc = idf1_counts(gt, hyp, options);
  SequenceMetrics m;
  m.name = name;
  m.mota = mota(c);
  m.idf1 = idc.idf1;
  m.id_switches = c.id_switches;
  m.false_positives = c.false_positives();
  m.false_negatives = c.false_negatives();
  m.idtp = idc.idtp;
  m.idfp = idc.idfp;
  m.idfn = idc.idfn;
  m.gt_total = c.gt_total;
  m.hyp_total = c.hyp_total;
  m.matched = c.matched_total;
  return m;
}

// Aggregate across sequences: counts are summed and the rates recomputed
// from the summed counts (the MOTChallenge convention).
inline SequenceMetrics aggregate_metrics(const std::vector<SequenceMetrics>& seqs,
                                         const std::string& name = "aggregate") {
  SequenceMetrics agg;
  agg.name = name;
  for (const SequenceMetrics& m : seqs) {
    agg.id_switches += m.id_switches;
    agg.false_positives += m.false_positives;
    agg.false_negatives += m.false_negatives;
    agg.idtp += m.idtp;
    agg.idfp += m.idfp;
    agg.idfn += m.idfn;
    agg.gt_total += m.gt_total;
    agg.hyp_total += m.hyp_total;
    agg.matched += m.matched;
  }
  if (agg.gt_total == 0) throw UndefinedMetric("aggregate_metrics: no ground-truth boxes");
  agg.mota = 1.0 - static_cast<double>(agg.false_negatives + agg.false_positives +
                                       agg.id_switches) /
                       static_cast<double>(agg.gt_total);
  agg.idf1 = 2.0 * static_cast<double>(agg.idtp) /
             static_cast<double>(2 * agg.idtp + agg.idfp + agg.idfn);
  return agg;
}

// True when the results contain frames outside the ground truth's range.
inline bool frame_range_mismatch(const std::vector<MotRecord>& gt,
                                 const std::vector<MotRecord>& hyp) {
  if (gt.empty()) return !hyp.empty();
  int lo = gt.front().frame, hi = gt.front().frame;
  for (const MotRecord& r : gt) {
    lo = std::min(lo, r.frame);
    hi = std::max(hi, r.frame);
  }
  for (const MotRecord& r : hyp) {
    if (r.frame < lo || r.frame > hi) return true;
  }
  return false;
}

}  // namespace tcmp
