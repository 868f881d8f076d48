#include "sotif/detection_metrics.hpp"

#include <algorithm>
#include <numeric>

#include "sotif/json_writer.hpp"

namespace sotif::metrics {

void MetricConfig::validate() const {
  for (const auto* grid : {&iou_thresholds_50, &iou_thresholds_50_95}) {
    if (grid->empty()) throw InvariantError("IoU threshold list must be non-empty");
    for (std::size_t i = 0; i < grid->size(); ++i) {
      const double t = (*grid)[i];
      if (!(t > 0.0 && t <= 1.0)) throw InvariantError("IoU thresholds must lie in (0,1]");
      if (i > 0 && !(t > (*grid)[i - 1])) throw InvariantError("IoU thresholds must be strictly increasing");
    }
  }
  if (max_detections == 0) throw InvariantError("max detections must be positive");
  if (recall_points < 2) throw InvariantError("need at least two recall points");
}

ApResult average_precision(std::span<const FrameEval> frames, std::size_t category, double iou_threshold,
                           const MetricConfig& config) {
  struct Ranked {
    double score;
    bool tp;
  };
  std::vector<Ranked> ranked;
  std::size_t npos = 0;

  for (const auto& f : frames) {
    std::vector<const GroundTruthObject*> gts;
    for (const auto& g : f.ground_truth) {
      if (g.category == category) gts.push_back(&g);
    }
    npos += gts.size();

    std::vector<const ScoredBox*> dets;
    for (const auto& d : f.detections) {
      if (d.category == category) dets.push_back(&d);
    }
    std::stable_sort(dets.begin(), dets.end(),
                     [](const ScoredBox* a, const ScoredBox* b) { return a->score > b->score; });
    if (dets.size() > config.max_detections) dets.resize(config.max_detections);

    std::vector<bool> taken(gts.size(), false);
    for (const ScoredBox* d : dets) {
      std::size_t best = gts.size();
      double best_iou = -1.0;
      for (std::size_t g = 0; g < gts.size(); ++g) {
        if (taken[g]) continue;
        const double v = iou(d->box, gts[g]->box);
        if (v >= iou_threshold && v > best_iou) {
          best_iou = v;
          best = g;
        }
      }
      const bool tp = best < gts.size();
      if (tp) taken[best] = true;
      ranked.push_back({d->score, tp});
    }
  }

  ApResult out;
  out.ground_truth = npos;
  if (npos == 0 || ranked.empty()) return out;

  std::stable_sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) { return a.score > b.score; });

  const std::size_t n = ranked.size();
  std::vector<std::size_t> tp_cum(n);
  std::vector<double> precision(n);
  std::size_t tp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    tp += ranked[i].tp ? 1 : 0;
    tp_cum[i] = tp;
    precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
  }
  // Precision envelope: best precision at any deeper rank.
  for (std::size_t i = n - 1; i > 0; --i) precision[i - 1] = std::max(precision[i - 1], precision[i]);

  // Recall thresholds r_k = k / (points - 1), compared in integers:
  // tp / npos >= k / K  <=>  tp * K >= k * npos.
  const std::size_t K = config.recall_points - 1;
  double sum = 0.0;
  std::size_t i = 0;
  for (std::size_t k = 0; k <= K; ++k) {
    while (i < n && tp_cum[i] * K < k * npos) ++i;
    if (i == n) break;
    sum += precision[i];
  }
  out.ap = sum / static_cast<double>(config.recall_points);
  out.recall = static_cast<double>(tp) / static_cast<double>(npos);
  return out;
}

MetricsSummary summarize(std::span<const FrameEval> frames, std::size_t num_categories, const MetricConfig& config,
                         std::string group) {
  config.validate();
  MetricsSummary s;
  s.group = std::move(group);
  for (std::size_t c = 0; c < num_categories; ++c) {
    CategoryMetrics m;
    m.category = c;
    double ap50 = 0.0, ar50 = 0.0;
    for (double t : config.iou_thresholds_50) {
      const auto r = average_precision(frames, c, t, config);
      m.ground_truth = r.ground_truth;
      ap50 += r.ap;
      ar50 += r.recall;
    }
    if (m.ground_truth == 0) {
      s.excluded_categories.push_back(c);
      continue;
    }
    m.ap50 = ap50 / static_cast<double>(config.iou_thresholds_50.size());
    m.ar50 = ar50 / static_cast<double>(config.iou_thresholds_50.size());
    double ap = 0.0;
    for (double t : config.iou_thresholds_50_95) ap += average_precision(frames, c, t, config).ap;
    m.ap50_95 = ap / static_cast<double>(config.iou_thresholds_50_95.size());
    s.per_category.push_back(m);
  }
  if (!s.per_category.empty()) {
    const auto n = static_cast<double>(s.per_category.size());
    for (const auto& m : s.per_category) {
      s.map50 += m.ap50;
      s.mar50 += m.ar50;
      s.map50_95 += m.ap50_95;
    }
    s.map50 /= n;
    s.mar50 /= n;
    s.map50_95 /= n;
  }
  return s;
}

std::vector<MetricsSummary> summarize_by_subset(std::span<const FrameEval> frames, std::size_t num_categories,
                                                const MetricConfig& config) {
  std::vector<MetricsSummary> out;
  out.push_back(summarize(frames, num_categories, config, "total"));
  for (const auto& g : subset_groups()) {
    std::vector<FrameEval> subset;
    for (const auto& f : frames) {
      if (f.subset && g.contains(*f.subset)) subset.push_back(f);
    }
    out.push_back(summarize(subset, num_categories, config, std::string(g.name)));
  }
  return out;
}

std::string metrics_csv(std::span<const MetricsSummary> summaries, const CategorySet& categories) {
  std::string out = "group,category,ap50,ar50,ap5095\n";
  for (const auto& s : summaries) {
    for (const auto& m : s.per_category) {
      out += s.group + "," + categories.name(m.category) + "," + format_fixed(m.ap50) + "," + format_fixed(m.ar50) +
             "," + format_fixed(m.ap50_95) + "\n";
    }
    out += s.group + ",mean," + format_fixed(s.map50) + "," + format_fixed(s.mar50) + "," +
           format_fixed(s.map50_95) + "\n";
  }
  return out;
}

}  // namespace sotif::metrics
