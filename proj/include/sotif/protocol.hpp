#pragma once

// Three-dimensional evaluation protocol: every evaluated object is easy or
// hard (annotator flag), accurate or inaccurate (against ground truth), and
// certain or uncertain (entropy against theta_w). ACR, FAR, CQS and UQS are
// counted over those rows.

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sotif/core.hpp"
#include "sotif/entropy.hpp"

namespace sotif::eval {

enum class Origin { matched, missed_gt, ghost };
enum class Difficulty { easy, hard, not_applicable };

/// Which rows count as "should be warned" for ACR / FAR.
enum class ShouldWarnPolicy { hard_or_inaccurate, hard_only, inaccurate_only };

std::string_view to_string(Origin o) noexcept;
std::string_view to_string(Difficulty d) noexcept;
std::string_view to_string(ShouldWarnPolicy p) noexcept;
ShouldWarnPolicy parse_should_warn_policy(std::string_view text);

struct ProtocolConfig {
  double match_iou = 0.5;
  ShouldWarnPolicy policy = ShouldWarnPolicy::hard_or_inaccurate;
  double sweep_min = 0.0;
  double sweep_max = 3.0;
  double sweep_step = 0.1;

  void validate() const;
};

struct EvaluatedObject {
  Origin origin = Origin::matched;
  Difficulty difficulty = Difficulty::easy;
  bool accurate = false;
  std::optional<double> entropy;  // absent for missed ground truth
  bool warned = false;
  std::string frame_id;
  std::optional<SubsetTag> subset;
};

/// Greedy class-agnostic matching in descending fused confidence. Rows come
/// out in input order for merged objects (matched or ghost), followed by
/// the missed ground-truth objects in annotation order.
std::vector<EvaluatedObject> match_frame(std::span<const entropy::QuantifiedObject> objects,
                                         std::span<const GroundTruthObject> ground_truth,
                                         const ProtocolConfig& config, double theta_w,
                                         const std::string& frame_id = {},
                                         const std::optional<SubsetTag>& subset = std::nullopt);

bool should_warn(const EvaluatedObject& row, ShouldWarnPolicy policy) noexcept;

/// cells[difficulty][accurate][warned]
using CellCounts = std::array<std::array<std::array<std::size_t, 2>, 2>, 3>;

struct ProtocolReport {
  std::string group = "total";
  double theta_w = 1.0;
  double acr = 1.0;
  double far = 0.0;
  double cqs = 0.0;
  double uqs = 0.0;  // may be +inf

  std::size_t rows = 0;
  std::size_t matched = 0;
  std::size_t missed_gt = 0;
  std::size_t ghosts = 0;
  std::size_t should_warn = 0;       // |S|
  std::size_t warned = 0;            // |W|
  std::size_t warned_should = 0;     // |W ∩ S|
  std::size_t with_entropy = 0;      // rows carrying H
  std::size_t consistent = 0;        // accurate&certain + inaccurate&uncertain
  std::size_t accurate = 0;          // among rows with H
  std::size_t accurate_warned = 0;
  std::size_t inaccurate = 0;        // among rows with H
  std::size_t inaccurate_warned = 0;
  CellCounts cells{};
};

/// warned is recomputed from each row's stored H against theta_w.
ProtocolReport compute_metrics(std::span<const EvaluatedObject> rows, double theta_w, ShouldWarnPolicy policy,
                               std::string group = "total");

/// theta_min, theta_min + step, ..., theta_max (inclusive).
std::vector<double> threshold_grid(double theta_min, double theta_max, double step);

std::vector<ProtocolReport> sweep_thresholds(std::span<const EvaluatedObject> rows, const ProtocolConfig& config);

/// Interior FAR minimum over the sweep (restricted to points with at least one
/// warning) such that FAR is strictly higher both at some larger and at some
/// smaller threshold. Returns that threshold, or nothing when FAR is monotone.
std::optional<double> far_turning_point(std::span<const ProtocolReport> sweep);

/// Reports for total, environment, object, natural and handcraft, in that order.
std::vector<ProtocolReport> group_by_subset(std::span<const EvaluatedObject> rows, double theta_w,
                                            ShouldWarnPolicy policy);

}  // namespace sotif::eval
