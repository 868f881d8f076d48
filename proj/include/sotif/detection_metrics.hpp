#pragma once

// Per-category average precision / recall in the COCO style: greedy
// score-ordered matching per frame, 101-point interpolated precision.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sotif/core.hpp"

namespace sotif::metrics {

struct MetricConfig {
  std::vector<double> iou_thresholds_50 = {0.5};
  std::vector<double> iou_thresholds_50_95 = {0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95};
  std::size_t max_detections = 100;  // per frame and category
  std::size_t recall_points = 101;

  void validate() const;
};

struct ScoredBox {
  BoundingBox box;
  std::size_t category = 0;
  double score = 0.0;
};

struct FrameEval {
  std::vector<ScoredBox> detections;
  std::vector<GroundTruthObject> ground_truth;
  std::optional<SubsetTag> subset;
};

struct ApResult {
  double ap = 0.0;
  double recall = 0.0;
  std::size_t ground_truth = 0;
};

ApResult average_precision(std::span<const FrameEval> frames, std::size_t category, double iou_threshold,
                           const MetricConfig& config = {});

struct CategoryMetrics {
  std::size_t category = 0;
  std::size_t ground_truth = 0;
  double ap50 = 0.0;
  double ar50 = 0.0;
  double ap50_95 = 0.0;
};

struct MetricsSummary {
  std::string group = "total";
  double map50 = 0.0;
  double mar50 = 0.0;
  double map50_95 = 0.0;
  std::vector<CategoryMetrics> per_category;       // categories with ground truth
  std::vector<std::size_t> excluded_categories;    // no ground truth: left out of the means
};

MetricsSummary summarize(std::span<const FrameEval> frames, std::size_t num_categories,
                         const MetricConfig& config = {}, std::string group = "total");

/// total, environment, object, natural, handcraft.
std::vector<MetricsSummary> summarize_by_subset(std::span<const FrameEval> frames, std::size_t num_categories,
                                                const MetricConfig& config = {});

/// group,category,ap50,ar50,ap5095 with one "mean" row per group.
std::string metrics_csv(std::span<const MetricsSummary> summaries, const CategorySet& categories);

}  // namespace sotif::metrics
