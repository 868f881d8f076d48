#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <limits>
#include <set>
#include <tuple>

namespace oracle {

using sotif::BoundingBox;
using sotif::Detection;
using sotif::eval::Difficulty;
using sotif::eval::EvaluatedObject;
using sotif::eval::ShouldWarnPolicy;

long double naive_h_star(std::span<const double> p, bool base_two) {
  long double sum = 0.0L;
  for (double v : p) {
    const long double q = v;
    if (q > 0.0L && q < 1.0L) sum -= q * std::log(q) + (1.0L - q) * std::log(1.0L - q);
  }
  return base_two ? sum / std::log(2.0L) : sum;
}

ProtocolCounts protocol_by_sets(std::span<const EvaluatedObject> rows, double theta_w, ShouldWarnPolicy policy) {
  std::set<std::size_t> S, W, with_h, accurate, inaccurate;
  ProtocolCounts out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    const bool hard = r.difficulty == Difficulty::hard;
    bool should = false;
    if (policy == ShouldWarnPolicy::hard_or_inaccurate) should = hard || !r.accurate;
    if (policy == ShouldWarnPolicy::hard_only) should = hard;
    if (policy == ShouldWarnPolicy::inaccurate_only) should = !r.accurate;
    const bool warned = r.entropy.has_value() && *r.entropy > theta_w;
    if (should) S.insert(i);
    if (warned) W.insert(i);
    if (r.entropy) {
      with_h.insert(i);
      (r.accurate ? accurate : inaccurate).insert(i);
    }
    out.cells[static_cast<int>(r.difficulty)][r.accurate ? 1 : 0][warned ? 1 : 0] += 1;
  }
  auto intersect = [](const std::set<std::size_t>& a, const std::set<std::size_t>& b) {
    std::set<std::size_t> c;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::inserter(c, c.begin()));
    return c;
  };
  auto minus = [](const std::set<std::size_t>& a, const std::set<std::size_t>& b) {
    std::set<std::size_t> c;
    std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::inserter(c, c.begin()));
    return c;
  };
  auto frac = [](std::size_t a, std::size_t b) { return static_cast<double>(a) / static_cast<double>(b); };

  out.acr = S.empty() ? 1.0 : frac(intersect(W, S).size(), S.size());
  out.far = W.empty() ? 0.0 : frac(minus(W, S).size(), W.size());
  const std::size_t consistent = minus(accurate, W).size() + intersect(inaccurate, W).size();
  out.cqs = with_h.empty() ? 0.0 : frac(consistent, with_h.size());
  const double p_inacc = inaccurate.empty() ? 0.0 : frac(intersect(inaccurate, W).size(), inaccurate.size());
  const double p_acc = accurate.empty() ? 0.0 : frac(intersect(accurate, W).size(), accurate.size());
  if (p_acc == 0.0) {
    out.uqs = p_inacc > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
  } else {
    out.uqs = p_inacc / p_acc;
  }
  return out;
}

namespace {

struct Cut {
  std::size_t tp = 0;
  std::size_t k = 0;
};

std::vector<Cut> rank_cuts(std::span<const sotif::metrics::FrameEval> frames, std::size_t category,
                           double iou_threshold, std::size_t max_detections, std::size_t& npos) {
  // (score, frame, rank within frame) for every capped detection of the category.
  std::vector<std::vector<const sotif::metrics::ScoredBox*>> per_frame(frames.size());
  std::vector<std::tuple<double, std::size_t, std::size_t>> order;
  npos = 0;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    for (const auto& g : frames[f].ground_truth) npos += g.category == category ? 1 : 0;
    auto& dets = per_frame[f];
    for (const auto& d : frames[f].detections) {
      if (d.category == category) dets.push_back(&d);
    }
    std::stable_sort(dets.begin(), dets.end(), [](auto* a, auto* b) { return a->score > b->score; });
    if (dets.size() > max_detections) dets.resize(max_detections);
    for (std::size_t r = 0; r < dets.size(); ++r) order.emplace_back(dets[r]->score, f, r);
  }
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) > std::get<0>(b);
    return std::make_pair(std::get<1>(a), std::get<2>(a)) < std::make_pair(std::get<1>(b), std::get<2>(b));
  });

  std::vector<Cut> cuts;
  for (std::size_t k = 1; k <= order.size(); ++k) {
    // Which detections of each frame are inside the prefix.
    std::vector<std::vector<std::size_t>> inside(frames.size());
    for (std::size_t j = 0; j < k; ++j) inside[std::get<1>(order[j])].push_back(std::get<2>(order[j]));
    std::size_t tp = 0;
    for (std::size_t f = 0; f < frames.size(); ++f) {
      auto ranks = inside[f];
      std::sort(ranks.begin(), ranks.end());
      std::vector<const sotif::GroundTruthObject*> gts;
      for (const auto& g : frames[f].ground_truth) {
        if (g.category == category) gts.push_back(&g);
      }
      std::vector<bool> used(gts.size(), false);
      for (std::size_t r : ranks) {
        int best = -1;
        double best_iou = 0.0;
        for (std::size_t g = 0; g < gts.size(); ++g) {
          if (used[g]) continue;
          const double v = sotif::iou(per_frame[f][r]->box, gts[g]->box);
          if (v >= iou_threshold && (best < 0 || v > best_iou)) {
            best = static_cast<int>(g);
            best_iou = v;
          }
        }
        if (best >= 0) {
          used[static_cast<std::size_t>(best)] = true;
          ++tp;
        }
      }
    }
    cuts.push_back({tp, k});
  }
  return cuts;
}

}  // namespace

double ap_by_rank_cuts(std::span<const sotif::metrics::FrameEval> frames, std::size_t category, double iou_threshold,
                       std::size_t recall_points, std::size_t max_detections) {
  std::size_t npos = 0;
  const auto cuts = rank_cuts(frames, category, iou_threshold, max_detections, npos);
  if (npos == 0) return 0.0;
  const std::size_t K = recall_points - 1;
  double sum = 0.0;
  for (std::size_t j = 0; j <= K; ++j) {
    double best = 0.0;
    for (const auto& c : cuts) {
      // recall >= j / K, exactly
      if (c.tp * K >= j * npos) best = std::max(best, static_cast<double>(c.tp) / static_cast<double>(c.k));
    }
    sum += best;
  }
  return sum / static_cast<double>(recall_points);
}

double recall_by_rank_cuts(std::span<const sotif::metrics::FrameEval> frames, std::size_t category,
                           double iou_threshold, std::size_t max_detections) {
  std::size_t npos = 0;
  const auto cuts = rank_cuts(frames, category, iou_threshold, max_detections, npos);
  if (npos == 0 || cuts.empty()) return 0.0;
  return static_cast<double>(cuts.back().tp) / static_cast<double>(npos);
}

std::vector<std::vector<Detection>> bsas_reference(std::vector<Detection> detections, double cluster_iou) {
  auto label = [](const Detection& d) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < d.class_probs.size(); ++c) {
      if (d.class_probs[c] > d.class_probs[best]) best = c;
    }
    return best;
  };
  auto score = [](const Detection& d) {
    return d.objectness * *std::max_element(d.class_probs.begin(), d.class_probs.end());
  };
  std::sort(detections.begin(), detections.end(), [&](const Detection& a, const Detection& b) {
    if (a.model_index != b.model_index) return a.model_index < b.model_index;
    if (score(a) != score(b)) return score(a) > score(b);
    return a.source_order < b.source_order;
  });

  std::vector<std::vector<Detection>> clusters;
  for (const auto& d : detections) {
    int chosen = -1;
    double chosen_iou = 0.0;
    for (std::size_t c = 0; c < clusters.size(); ++c) {
      const auto& members = clusters[c];
      if (label(members.front()) != label(d)) continue;
      bool same_model = false;
      for (const auto& m : members) same_model = same_model || m.model_index == d.model_index;
      if (same_model) continue;
      double sx = 0, sy = 0, sw = 0, sh = 0;
      for (const auto& m : members) {
        sx += m.box.x();
        sy += m.box.y();
        sw += m.box.w();
        sh += m.box.h();
      }
      const double n = static_cast<double>(members.size());
      const BoundingBox rep(sx / n, sy / n, sw / n, sh / n);
      const double v = sotif::iou(rep, d.box);
      if (v >= cluster_iou && (chosen < 0 || v > chosen_iou)) {
        chosen = static_cast<int>(c);
        chosen_iou = v;
      }
    }
    if (chosen < 0) {
      clusters.push_back({d});
    } else {
      clusters[static_cast<std::size_t>(chosen)].push_back(d);
    }
  }
  return clusters;
}

}  // namespace oracle
