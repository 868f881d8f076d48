#pragma once

// Hand-rolled random generators for property tests. Every generator takes
// the test's Rng so a failing case can be replayed from its seed.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "sotif/annotation_io.hpp"
#include "sotif/core.hpp"
#include "sotif/detection_metrics.hpp"
#include "sotif/protocol.hpp"

namespace gen {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(engine_() % n); }
  bool coin(double p = 0.5) { return uniform() < p; }
  /// Six-decimal value, the precision every file format carries.
  double q6(double lo, double hi) { return std::round(uniform(lo, hi) * 1e6) / 1e6; }

 private:
  std::mt19937_64 engine_;
};

inline sotif::BoundingBox box(Rng& r, double extent = 100.0) {
  return sotif::BoundingBox(r.uniform(0, extent), r.uniform(0, extent), r.uniform(1, extent / 2),
                            r.uniform(1, extent / 2));
}

/// A box overlapping `base` heavily (shifted and scaled by at most `jitter`).
inline sotif::BoundingBox near(Rng& r, const sotif::BoundingBox& base, double jitter = 0.1) {
  return sotif::BoundingBox(base.x() + r.uniform(-jitter, jitter) * base.w(),
                            base.y() + r.uniform(-jitter, jitter) * base.h(),
                            base.w() * (1 + r.uniform(-jitter, jitter)), base.h() * (1 + r.uniform(-jitter, jitter)));
}

inline std::vector<double> probs(Rng& r, std::size_t C) {
  std::vector<double> p(C);
  for (auto& v : p) {
    const double u = r.uniform();
    // Mix exact endpoints in so the 0 log 0 paths are exercised.
    v = u < 0.05 ? 0.0 : (u > 0.97 ? 1.0 : r.uniform());
  }
  return p;
}

/// Detections for one model, all with a distinct winning label drawn from few classes.
inline std::vector<sotif::Detection> detections(Rng& r, std::size_t model, std::size_t n, std::size_t C,
                                                const std::vector<sotif::BoundingBox>& anchors) {
  std::vector<sotif::Detection> out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& a = anchors[r.index(anchors.size())];
    std::vector<double> p(C, 0.0);
    for (auto& v : p) v = r.uniform(0, 0.2);
    p[r.index(std::min<std::size_t>(C, 3))] = r.uniform(0.3, 1.0);
    out.push_back({near(r, a, 0.2), std::move(p), r.uniform(0.5, 1.0), model, i});
  }
  return out;
}

inline sotif::SubsetTag subset(Rng& r) {
  static const char* kTags[] = {"environment/rain/natural",   "environment/snow/handcraft",
                                "environment/illumination/natural", "object/common/appearance",
                                "object/common/posture",      "object/uncommon"};
  return sotif::SubsetTag::parse(kTags[r.index(6)]);
}

inline std::vector<sotif::eval::EvaluatedObject> rows(Rng& r, std::size_t n) {
  using namespace sotif::eval;
  std::vector<EvaluatedObject> out;
  for (std::size_t i = 0; i < n; ++i) {
    EvaluatedObject row;
    const double u = r.uniform();
    row.origin = u < 0.6 ? Origin::matched : (u < 0.8 ? Origin::ghost : Origin::missed_gt);
    row.subset = subset(r);
    if (row.origin == Origin::matched) {
      row.difficulty = r.coin() ? Difficulty::hard : Difficulty::easy;
      row.accurate = r.coin(0.7);
      row.entropy = std::round(r.uniform(0, 3) * 10) / 10;  // lands on grid points sometimes
      if (r.coin(0.5)) row.entropy = r.uniform(0, 3);
    } else if (row.origin == Origin::ghost) {
      row.difficulty = Difficulty::not_applicable;
      row.accurate = false;
      row.entropy = r.uniform(0, 3);
    } else {
      row.difficulty = r.coin() ? Difficulty::hard : Difficulty::easy;
      row.accurate = false;
    }
    out.push_back(row);
  }
  return out;
}

/// A frame for AP tests: GT boxes plus detections that are near GT, shifted or random.
inline sotif::metrics::FrameEval frame_eval(Rng& r, std::size_t C, std::size_t max_gt, std::size_t max_det) {
  sotif::metrics::FrameEval f;
  const std::size_t ng = r.index(max_gt + 1);
  for (std::size_t i = 0; i < ng; ++i) f.ground_truth.push_back({r.index(C), box(r), r.coin()});
  const std::size_t nd = r.index(max_det + 1);
  for (std::size_t i = 0; i < nd; ++i) {
    sotif::metrics::ScoredBox d{box(r), r.index(C), r.q6(0, 1)};
    if (!f.ground_truth.empty() && r.coin(0.7)) {
      const auto& g = f.ground_truth[r.index(f.ground_truth.size())];
      d.box = near(r, g.box, 0.15);
      if (r.coin(0.8)) d.category = g.category;
    }
    f.detections.push_back(d);
  }
  f.subset = subset(r);
  return f;
}

/// A dataset with absolute boxes on the six-decimal grid, which the COCO
/// writer reproduces exactly.
inline sotif::io::Dataset dataset(Rng& r, std::size_t frames, std::size_t max_objects) {
  sotif::io::Dataset ds;
  for (std::size_t f = 0; f < frames; ++f) {
    sotif::Frame fr;
    fr.frame_id = "f" + std::to_string(1000 + f);
    fr.image = {static_cast<int>(200 + r.index(1800)), static_cast<int>(200 + r.index(1000))};
    fr.subset = subset(r);
    const std::size_t n = r.index(max_objects + 1);
    for (std::size_t k = 0; k < n; ++k) {
      const double w = r.q6(2, fr.image.width / 3.0);
      const double h = r.q6(2, fr.image.height / 3.0);
      const double x = r.q6(0, fr.image.width - w);
      const double y = r.q6(0, fr.image.height - h);
      fr.ground_truth.push_back({r.index(ds.categories.size()), sotif::BoundingBox(x, y, w, h), r.coin()});
    }
    ds.frames.push_back(std::move(fr));
  }
  return ds;
}

}  // namespace gen
