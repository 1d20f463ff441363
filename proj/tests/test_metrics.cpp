#include "tcmp/metrics.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "oracles.hpp"
#include "tcmp/rng.hpp"

using namespace tcmp;
namespace fs = std::filesystem;

namespace {

MotRecord rec(int frame, int id, double x, double y, double w, double h, double conf = 1.0) {
  return {frame, id, x, y, w, h, conf};
}

std::vector<MotRecord> perfect_track(int frames, int id, double x0, double y0, double vx,
                                     double vy, double w = 30, double h = 60) {
  std::vector<MotRecord> out;
  for (int f = 1; f <= frames; ++f) {
    out.push_back(rec(f, id, x0 + vx * (f - 1), y0 + vy * (f - 1), w, h));
  }
  return out;
}

}  // namespace

TEST(ReadWriteMot, RoundTripEquality) {
  const fs::path path = fs::temp_directory_path() / "tcmp_mot_roundtrip.txt";
  std::vector<MotRecord> records{rec(1, 3, 10.25, 20.5, 30.125, 40, 0.9),
                                 rec(2, 1, 5.0625, 6, 7, 8, 0.75),
                                 rec(1, 1, 1.1, 2.2, 3.3, 4.4, 1.0)};
  write_mot(records, path);
  const auto back = read_mot(path);
  ASSERT_EQ(back.size(), 3u);
  // Sorted by (frame, id) on write.
  EXPECT_EQ(back[0], records[2]);
  EXPECT_EQ(back[1], records[0]);
  EXPECT_EQ(back[2], records[1]);
  fs::remove(path);
}

TEST(ReadWriteMot, ParsesTheDocumentedLine) {
  const fs::path path = fs::temp_directory_path() / "tcmp_mot_line.txt";
  {
    std::ofstream out(path);
    out << "1,3,10,20,30,40,0.9,-1,-1,-1\n";
  }
  const auto records = read_mot(path);
  ASSERT_EQ(records.size(), 1u);
  EXPECT_EQ(records[0].frame, 1);
  EXPECT_EQ(records[0].id, 3);
  EXPECT_DOUBLE_EQ(records[0].x, 10);
  EXPECT_DOUBLE_EQ(records[0].y, 20);
  EXPECT_DOUBLE_EQ(records[0].w, 30);
  EXPECT_DOUBLE_EQ(records[0].h, 40);
  EXPECT_DOUBLE_EQ(records[0].conf, 0.9);
  fs::remove(path);
}

TEST(ReadWriteMot, WrongFieldCountIsAParseErrorWithLineNumber) {
  const fs::path path = fs::temp_directory_path() / "tcmp_mot_bad.txt";
  {
    std::ofstream out(path);
    out << "1,3,10,20,30,40,0.9,-1,-1,-1\n";
    out << "1,3,10,20\n";
  }
  try {
    read_mot(path);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line, 2);
  }
  fs::remove(path);
}

TEST(ReadWriteMot, NonNumericFieldIsAParseError) {
  const fs::path path = fs::temp_directory_path() / "tcmp_mot_nan.txt";
  {
    std::ofstream out(path);
    out << "1,3,ten,20,30,40,0.9,-1,-1,-1\n";
  }
  EXPECT_THROW(read_mot(path), ParseError);
  fs::remove(path);
}

TEST(PerFrameMatch, IdenticalFilesMatchEverything) {
  const auto gt = perfect_track(10, 1, 50, 50, 2, 1);
  const Correspondences c = per_frame_match(gt, gt);
  EXPECT_EQ(c.gt_total, 10);
  EXPECT_EQ(c.matched_total, 10);
  EXPECT_EQ(c.false_positives(), 0);
  EXPECT_EQ(c.false_negatives(), 0);
  EXPECT_EQ(c.id_switches, 0);
}

TEST(PerFrameMatch, EmptyResultsAreAllFalseNegatives) {
  const auto gt = perfect_track(10, 1, 50, 50, 2, 1);
  const Correspondences c = per_frame_match(gt, {});
  EXPECT_EQ(c.false_negatives(), 10);
  EXPECT_EQ(c.false_positives(), 0);
  EXPECT_EQ(c.matched_total, 0);
}

TEST(PerFrameMatch, HandBuiltMismatchCase) {
  // Three frames, two objects. Frame 2 swaps the hypothesis boxes; frame 3
  // drops one object and adds a far-away false positive.
  std::vector<MotRecord> gt{rec(1, 1, 0, 0, 10, 10),    rec(1, 2, 100, 0, 10, 10),
                            rec(2, 1, 0, 10, 10, 10),   rec(2, 2, 100, 10, 10, 10),
                            rec(3, 1, 0, 20, 10, 10),   rec(3, 2, 100, 20, 10, 10)};
  std::vector<MotRecord> hyp{rec(1, 7, 0, 0, 10, 10),    rec(1, 8, 100, 0, 10, 10),
                             rec(2, 8, 0, 10, 10, 10),   rec(2, 7, 100, 10, 10, 10),
                             rec(3, 7, 0, 20, 10, 10),   rec(3, 9, 300, 300, 10, 10)};
  const Correspondences c = per_frame_match(gt, hyp);
  // Hand-derived: frame 1 matches (1,7), (2,8). Frame 2 the boxes force
  // (1,8), (2,7): two switches. Frame 3 matches (1,7): third switch; gt 2
  // unmatched (FN), hyp 9 unmatched (FP).
  EXPECT_EQ(c.gt_total, 6);
  EXPECT_EQ(c.hyp_total, 6);
  EXPECT_EQ(c.matched_total, 5);
  EXPECT_EQ(c.false_negatives(), 1);
  EXPECT_EQ(c.false_positives(), 1);
  EXPECT_EQ(c.id_switches, 3);
  ASSERT_EQ(c.frame_matches.size(), 3u);
  EXPECT_EQ(c.frame_matches[0],
            (std::vector<std::pair<int, int>>{{1, 7}, {2, 8}}));
  EXPECT_EQ(c.frame_matches[1],
            (std::vector<std::pair<int, int>>{{1, 8}, {2, 7}}));
  EXPECT_EQ(c.frame_matches[2], (std::vector<std::pair<int, int>>{{1, 7}}));
}

TEST(PerFrameMatch, ContinuityBeatsGreedyCost) {
  // The previous-frame pair is kept even when a new hypothesis overlaps
  // slightly better.
  std::vector<MotRecord> gt{rec(1, 1, 0, 0, 10, 10), rec(2, 1, 0, 0, 10, 10)};
  std::vector<MotRecord> hyp{rec(1, 5, 1, 0, 10, 10), rec(2, 5, 2, 0, 10, 10),
                             rec(2, 6, 0, 0, 10, 10)};
  const Correspondences c = per_frame_match(gt, hyp);
  EXPECT_EQ(c.id_switches, 0);
  EXPECT_EQ(c.frame_matches[1], (std::vector<std::pair<int, int>>{{1, 5}}));
}

TEST(Mota, PerfectTrackingIsOne) {
  const auto gt = perfect_track(20, 1, 10, 10, 1, 0);
  EXPECT_DOUBLE_EQ(mota(per_frame_match(gt, gt)), 1.0);
}

TEST(Mota, EmptyResultsGiveZero) {
  const auto gt = perfect_track(20, 1, 10, 10, 1, 0);
  EXPECT_DOUBLE_EQ(mota(per_frame_match(gt, {})), 0.0);
}

TEST(Mota, SingleSwitchOverHundredBoxes) {
  auto gt = perfect_track(100, 1, 10, 10, 1, 0);
  std::vector<MotRecord> hyp;
  for (int f = 1; f <= 100; ++f) {
    MotRecord r = gt[static_cast<size_t>(f - 1)];
    r.id = f <= 50 ? 21 : 22;
    hyp.push_back(r);
  }
  const Correspondences c = per_frame_match(gt, hyp);
  EXPECT_EQ(c.id_switches, 1);
  EXPECT_DOUBLE_EQ(mota(c), 0.99);
}

TEST(Mota, ZeroGtThrows) {
  EXPECT_THROW(mota(per_frame_match({}, perfect_track(3, 1, 0, 0, 1, 0))), UndefinedMetric);
}

TEST(IdSwitchCount, ConsistentIdsGiveZero) {
  const auto gt = perfect_track(10, 1, 10, 10, 1, 0);
  EXPECT_EQ(id_switch_count(per_frame_match(gt, gt)), 0);
}

TEST(IdSwitchCount, AlternatingIdsEveryFrame) {
  const auto gt = perfect_track(10, 1, 10, 10, 1, 0);
  std::vector<MotRecord> hyp;
  for (int f = 1; f <= 10; ++f) {
    MotRecord r = gt[static_cast<size_t>(f - 1)];
    r.id = f % 2 == 0 ? 31 : 32;
    hyp.push_back(r);
  }
  const Correspondences c = per_frame_match(gt, hyp);
  EXPECT_EQ(id_switch_count(c), 9);
  EXPECT_EQ(c.id_switches, 9);
}

TEST(Idf1, PerfectTrackingIsOne) {
  const auto gt = perfect_track(20, 1, 10, 10, 1, 0);
  EXPECT_DOUBLE_EQ(idf1(gt, gt), 1.0);
}

TEST(Idf1, SwitchAtHalfGivesHalf) {
  const int frames = 20;
  auto gt = perfect_track(frames, 1, 10, 10, 1, 0);
  std::vector<MotRecord> hyp;
  for (int f = 1; f <= frames; ++f) {
    MotRecord r = gt[static_cast<size_t>(f - 1)];
    r.id = f <= frames / 2 ? 41 : 42;
    hyp.push_back(r);
  }
  EXPECT_DOUBLE_EQ(idf1(gt, hyp), 0.5);
}

TEST(Idf1, NoOverlapGivesZero) {
  const auto gt = perfect_track(10, 1, 10, 10, 1, 0);
  auto hyp = perfect_track(10, 2, 400, 400, 1, 0);
  EXPECT_DOUBLE_EQ(idf1(gt, hyp), 0.0);
}

TEST(Idf1, ZeroGtThrows) {
  EXPECT_THROW(idf1({}, perfect_track(3, 1, 0, 0, 1, 0)), UndefinedMetric);
}

TEST(Metrics, InvariantUnderHypothesisIdRelabeling) {
  Rng rng(5);
  auto gt = perfect_track(12, 1, 10, 10, 2, 0);
  auto more = perfect_track(12, 2, 200, 10, -1, 1);
  gt.insert(gt.end(), more.begin(), more.end());
  std::vector<MotRecord> hyp = gt;
  for (auto& r : hyp) {
    r.x += rng.uniform(-2, 2);
    r.id += 100;
  }
  const SequenceMetrics a = evaluate_sequence(gt, hyp);
  std::vector<MotRecord> relabeled = hyp;
  for (auto& r : relabeled) r.id = r.id == 101 ? 777 : 555;
  const SequenceMetrics b = evaluate_sequence(gt, relabeled);
  EXPECT_DOUBLE_EQ(a.mota, b.mota);
  EXPECT_DOUBLE_EQ(a.idf1, b.idf1);
  EXPECT_EQ(a.id_switches, b.id_switches);
}

TEST(Metrics, MatchBruteForceOnRandomMicroScenarios) {
  // 20 randomized micro-scenarios (<= 3 objects, <= 10 frames): MOTA, IDF1
  // and IDSW agree exactly with the exhaustive reference.
  Rng rng(77);
  for (int scenario = 0; scenario < 20; ++scenario) {
    const int objects = static_cast<int>(rng.uniform_int(1, 3));
    const int frames = static_cast<int>(rng.uniform_int(2, 10));
    std::vector<MotRecord> gt, hyp;
    for (int o = 1; o <= objects; ++o) {
      const double x0 = rng.uniform(0, 200);
      const double y0 = rng.uniform(0, 200);
      const double vx = rng.uniform(-3, 3);
      const double vy = rng.uniform(-3, 3);
      for (int f = 1; f <= frames; ++f) {
        if (rng.uniform() < 0.1) continue;  // gt gap
        gt.push_back(rec(f, o, x0 + vx * f, y0 + vy * f, 30, 30));
      }
      // Hypothesis: jittered boxes, occasional drops, id block per object
      // with random switch points.
      int hyp_id = o * 10;
      for (int f = 1; f <= frames; ++f) {
        if (rng.uniform() < 0.2) continue;  // missed
        if (rng.uniform() < 0.15) hyp_id += 1;
        hyp.push_back(rec(f, hyp_id, x0 + vx * f + rng.uniform(-4, 4),
                          y0 + vy * f + rng.uniform(-4, 4), 30, 30));
      }
    }
    // Clutter.
    for (int f = 1; f <= frames; ++f) {
      if (rng.uniform() < 0.25) {
        hyp.push_back(rec(f, 999, rng.uniform(300, 500), rng.uniform(300, 500), 30, 30));
      }
    }
    if (gt.empty()) continue;

    const tcmp::oracles::ClearReference ref = tcmp::oracles::clear_reference(gt, hyp);
    const Correspondences c = per_frame_match(gt, hyp);
    const IdfCounts idc = idf1_counts(gt, hyp);
    EXPECT_EQ(c.matched_total, ref.matched) << "scenario " << scenario;
    EXPECT_EQ(c.id_switches, ref.idsw) << "scenario " << scenario;
    EXPECT_DOUBLE_EQ(mota(c), ref.mota) << "scenario " << scenario;
    EXPECT_EQ(idc.idtp, ref.idtp) << "scenario " << scenario;
    EXPECT_DOUBLE_EQ(idc.idf1, ref.idf1) << "scenario " << scenario;
  }
}

TEST(Metrics, AggregateSumsCountsAndRecomputesRates) {
  const auto gt1 = perfect_track(10, 1, 10, 10, 1, 0);
  const auto gt2 = perfect_track(20, 1, 10, 10, 1, 0);
  const SequenceMetrics a = evaluate_sequence(gt1, gt1, "a");
  const SequenceMetrics b = evaluate_sequence(gt2, {}, "b");
  const SequenceMetrics agg = aggregate_metrics({a, b});
  EXPECT_EQ(agg.gt_total, 30);
  EXPECT_EQ(agg.false_negatives, 20);
  EXPECT_DOUBLE_EQ(agg.mota, 1.0 - 20.0 / 30.0);
}

TEST(FrameRangeMismatch, DetectsResultsOutsideGtRange) {
  const auto gt = perfect_track(10, 1, 10, 10, 1, 0);
  auto hyp = perfect_track(10, 1, 10, 10, 1, 0);
  EXPECT_FALSE(frame_range_mismatch(gt, hyp));
  hyp.push_back(rec(11, 1, 20, 10, 30, 60));
  EXPECT_TRUE(frame_range_mismatch(gt, hyp));
}
