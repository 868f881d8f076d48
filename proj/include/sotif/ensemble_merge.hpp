#pragma once

// Per-model NMS followed by sequential clustering of the ensemble's
// detections with intra-sample exclusivity (BSASexcl).

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sotif/core.hpp"

namespace sotif::merge {

struct MergeConfig {
  double nms_confidence = 0.25;
  double nms_iou = 0.45;
  double cluster_iou = 0.5;
  std::size_t models = 5;  // T
  bool class_agnostic_nms = false;

  /// Throws InvariantError when a threshold leaves [0,1] or T = 0.
  void validate() const;
};

/// A BSASexcl cluster. At most one member per model, all sharing one
/// winning label; the representative box is the running mean of members.
class Cluster {
 public:
  explicit Cluster(Detection founder);

  const std::vector<Detection>& members() const noexcept { return members_; }
  std::size_t winning_label() const noexcept { return winning_label_; }
  const BoundingBox& representative() const noexcept { return representative_; }
  std::size_t support() const noexcept { return members_.size(); }

  bool has_model(std::size_t model_index) const noexcept;
  /// Same winning label and no member from this detection's model.
  bool admits(const Detection& d) const;
  void add(Detection d);

 private:
  std::vector<Detection> members_;
  std::size_t winning_label_;
  BoundingBox representative_;
  double sum_[4];
};

/// Consensus of one cluster, ready for probability fusion.
struct MergedObject {
  BoundingBox box;
  std::size_t winning_label = 0;
  std::size_t support = 0;  // d
  std::vector<std::size_t> member_models;
  std::vector<std::vector<double>> member_probs;

  bool operator==(const MergedObject&) const = default;
};

/// Greedy NMS on one model's detections: drops score < nms_confidence,
/// sorts by score, suppresses same-label boxes with IoU > nms_iou.
std::vector<Detection> nms_per_model(std::span<const Detection> detections, const MergeConfig& config);

/// Canonical BSASexcl input order: model ascending, score descending, source_order ascending.
void canonical_sort(std::vector<Detection>& detections);

/// Sequential clustering. Each detection joins the admitting cluster with the
/// highest IoU to its representative (IoU >= cluster_iou, earliest cluster on
/// ties) or founds a new one.
std::vector<Cluster> bsas_excl(std::vector<Detection> detections, const MergeConfig& config);

MergedObject merge_cluster(const Cluster& cluster, std::size_t models);

/// NMS per model, BSASexcl across models, then consensus per cluster.
std::vector<MergedObject> merge_frame(std::span<const std::vector<Detection>> per_model,
                                      const MergeConfig& config);

// merged/<frame_id>.json: {"header":{...},"objects":[{bbox, winning_label, d, member_probs}, ...]}
std::string write_merged_document(std::span<const MergedObject> objects, const MergeConfig& config,
                                  std::size_t num_categories);

struct MergedDocument {
  std::size_t models = 0;
  std::size_t num_categories = 0;
  std::vector<MergedObject> objects;
};

MergedDocument parse_merged_document(std::string_view document, const std::string& file = "<merged>");

}  // namespace sotif::merge
