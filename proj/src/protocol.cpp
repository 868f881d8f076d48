#include "sotif/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace sotif::eval {

std::string_view to_string(Origin o) noexcept {
  switch (o) {
    case Origin::matched: return "matched";
    case Origin::missed_gt: return "missed-gt";
    case Origin::ghost: return "ghost";
  }
  return "";
}

std::string_view to_string(Difficulty d) noexcept {
  switch (d) {
    case Difficulty::easy: return "easy";
    case Difficulty::hard: return "hard";
    case Difficulty::not_applicable: return "n/a-ghost";
  }
  return "";
}

std::string_view to_string(ShouldWarnPolicy p) noexcept {
  switch (p) {
    case ShouldWarnPolicy::hard_or_inaccurate: return "hard-or-inaccurate";
    case ShouldWarnPolicy::hard_only: return "hard-only";
    case ShouldWarnPolicy::inaccurate_only: return "inaccurate-only";
  }
  return "";
}

ShouldWarnPolicy parse_should_warn_policy(std::string_view text) {
  for (auto p : {ShouldWarnPolicy::hard_or_inaccurate, ShouldWarnPolicy::hard_only,
                 ShouldWarnPolicy::inaccurate_only}) {
    if (to_string(p) == text) return p;
  }
  throw InvariantError("unknown should-warn policy '" + std::string(text) + "'");
}

void ProtocolConfig::validate() const {
  if (!(match_iou >= 0.0 && match_iou <= 1.0)) throw InvariantError("match_iou must lie in [0,1]");
  if (!(sweep_step > 0.0)) throw InvariantError("sweep graduation must be positive");
  if (!(sweep_min <= sweep_max)) throw InvariantError("sweep range requires min <= max");
  if (sweep_min < 0.0) throw InvariantError("sweep thresholds must be non-negative");
}

// ----------------------------------------------------------------------------
// Matching
// ----------------------------------------------------------------------------

std::vector<EvaluatedObject> match_frame(std::span<const entropy::QuantifiedObject> objects,
                                         std::span<const GroundTruthObject> ground_truth,
                                         const ProtocolConfig& config, double theta_w,
                                         const std::string& frame_id, const std::optional<SubsetTag>& subset) {
  std::vector<std::size_t> order(objects.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> conf(objects.size());
  for (std::size_t i = 0; i < objects.size(); ++i) conf[i] = objects[i].confidence();
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return conf[a] > conf[b]; });

  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> match_of_object(objects.size(), kNone);
  std::vector<bool> gt_taken(ground_truth.size(), false);
  for (std::size_t i : order) {
    std::size_t best = kNone;
    double best_iou = -1.0;
    for (std::size_t g = 0; g < ground_truth.size(); ++g) {
      if (gt_taken[g]) continue;
      const double v = iou(objects[i].box, ground_truth[g].box);
      if (v >= config.match_iou && v > best_iou) {
        best_iou = v;
        best = g;
      }
    }
    if (best != kNone) {
      gt_taken[best] = true;
      match_of_object[i] = best;
    }
  }

  std::vector<EvaluatedObject> rows;
  rows.reserve(objects.size() + ground_truth.size());
  for (std::size_t i = 0; i < objects.size(); ++i) {
    EvaluatedObject row;
    row.entropy = objects[i].entropy.h;
    row.warned = entropy::is_warned(objects[i].entropy.h, theta_w);
    row.frame_id = frame_id;
    row.subset = subset;
    if (match_of_object[i] == kNone) {
      row.origin = Origin::ghost;
      row.difficulty = Difficulty::not_applicable;
      row.accurate = false;
    } else {
      const auto& gt = ground_truth[match_of_object[i]];
      row.origin = Origin::matched;
      row.difficulty = gt.hard ? Difficulty::hard : Difficulty::easy;
      row.accurate = objects[i].winning_label == gt.category;
    }
    rows.push_back(std::move(row));
  }
  for (std::size_t g = 0; g < ground_truth.size(); ++g) {
    if (gt_taken[g]) continue;
    EvaluatedObject row;
    row.origin = Origin::missed_gt;
    row.difficulty = ground_truth[g].hard ? Difficulty::hard : Difficulty::easy;
    row.accurate = false;
    row.warned = false;
    row.frame_id = frame_id;
    row.subset = subset;
    rows.push_back(std::move(row));
  }
  return rows;
}

// ----------------------------------------------------------------------------
// Metrics
// ----------------------------------------------------------------------------

bool should_warn(const EvaluatedObject& row, ShouldWarnPolicy policy) noexcept {
  const bool hard = row.difficulty == Difficulty::hard;
  switch (policy) {
    case ShouldWarnPolicy::hard_or_inaccurate: return hard || !row.accurate;
    case ShouldWarnPolicy::hard_only: return hard;
    case ShouldWarnPolicy::inaccurate_only: return !row.accurate;
  }
  return false;
}

namespace {

double ratio(std::size_t num, std::size_t den) {
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

ProtocolReport compute_metrics(std::span<const EvaluatedObject> rows, double theta_w, ShouldWarnPolicy policy,
                               std::string group) {
  ProtocolReport r;
  r.group = std::move(group);
  r.theta_w = theta_w;
  for (const auto& row : rows) {
    const bool warned = row.entropy && entropy::is_warned(*row.entropy, theta_w);
    const bool should = should_warn(row, policy);
    ++r.rows;
    switch (row.origin) {
      case Origin::matched: ++r.matched; break;
      case Origin::missed_gt: ++r.missed_gt; break;
      case Origin::ghost: ++r.ghosts; break;
    }
    ++r.cells[static_cast<std::size_t>(row.difficulty)][row.accurate ? 1 : 0][warned ? 1 : 0];
    r.should_warn += should ? 1 : 0;
    r.warned += warned ? 1 : 0;
    r.warned_should += (warned && should) ? 1 : 0;
    if (row.entropy) {
      ++r.with_entropy;
      if (row.accurate) {
        ++r.accurate;
        r.accurate_warned += warned ? 1 : 0;
        r.consistent += warned ? 0 : 1;
      } else {
        ++r.inaccurate;
        r.inaccurate_warned += warned ? 1 : 0;
        r.consistent += warned ? 1 : 0;
      }
    }
  }

  r.acr = r.should_warn == 0 ? 1.0 : ratio(r.warned_should, r.should_warn);
  r.far = r.warned == 0 ? 0.0 : ratio(r.warned - r.warned_should, r.warned);
  r.cqs = r.with_entropy == 0 ? 0.0 : ratio(r.consistent, r.with_entropy);

  const double p_inacc = r.inaccurate == 0 ? 0.0 : ratio(r.inaccurate_warned, r.inaccurate);
  const double p_acc = r.accurate == 0 ? 0.0 : ratio(r.accurate_warned, r.accurate);
  if (p_acc > 0.0) {
    r.uqs = p_inacc / p_acc;
  } else {
    r.uqs = p_inacc > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
  }
  return r;
}

std::vector<double> threshold_grid(double theta_min, double theta_max, double step) {
  if (!(step > 0.0) || !(theta_min <= theta_max)) throw InvariantError("invalid threshold grid");
  // Tolerance absorbs binary representation error in (max - min) / step.
  const auto n = static_cast<std::size_t>(std::floor((theta_max - theta_min) / step + 1e-9));
  std::vector<double> grid;
  grid.reserve(n + 1);
  for (std::size_t k = 0; k <= n; ++k) {
    const double v = theta_min + static_cast<double>(k) * step;
    // Snap 0.30000000000000004 back to the double nearest 0.3.
    grid.push_back(std::round(v * 1e12) / 1e12);
  }
  return grid;
}

std::vector<ProtocolReport> sweep_thresholds(std::span<const EvaluatedObject> rows, const ProtocolConfig& config) {
  config.validate();
  std::vector<ProtocolReport> out;
  for (double theta : threshold_grid(config.sweep_min, config.sweep_max, config.sweep_step)) {
    out.push_back(compute_metrics(rows, theta, config.policy, "sweep"));
  }
  return out;
}

std::optional<double> far_turning_point(std::span<const ProtocolReport> sweep) {
  std::vector<const ProtocolReport*> active;
  for (const auto& r : sweep) {
    if (r.warned > 0) active.push_back(&r);
  }
  if (active.size() < 3) return std::nullopt;
  std::size_t best = 0;
  for (std::size_t i = 1; i < active.size(); ++i) {
    if (active[i]->far < active[best]->far) best = i;
  }
  const double lo = active[best]->far;
  const bool higher_before = std::any_of(active.begin(), active.begin() + static_cast<std::ptrdiff_t>(best),
                                         [&](const ProtocolReport* r) { return r->far > lo; });
  const bool higher_after = std::any_of(active.begin() + static_cast<std::ptrdiff_t>(best) + 1, active.end(),
                                        [&](const ProtocolReport* r) { return r->far > lo; });
  if (!higher_before || !higher_after) return std::nullopt;
  return active[best]->theta_w;
}

std::vector<ProtocolReport> group_by_subset(std::span<const EvaluatedObject> rows, double theta_w,
                                            ShouldWarnPolicy policy) {

  std::vector<ProtocolReport> out;
  out.push_back(compute_metrics(rows, theta_w, policy, "total"));
  for (const auto& g : subset_groups()) {
    std::vector<EvaluatedObject> subset_rows;
    for (const auto& r : rows) {
      if (r.subset && g.contains(*r.subset)) subset_rows.push_back(r);
    }
    out.push_back(compute_metrics(subset_rows, theta_w, policy, std::string(g.name)));
  }
  return out;
}

}  // namespace sotif::eval
