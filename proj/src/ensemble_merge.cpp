#include "sotif/ensemble_merge.hpp"

#include <algorithm>
#include <numeric>

#include "json.hpp"
#include "sotif/json_writer.hpp"

namespace sotif::merge {

void MergeConfig::validate() const {
  auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!unit(nms_confidence) || !unit(nms_iou) || !unit(cluster_iou)) {
    throw InvariantError("merge thresholds must lie in [0,1]");
  }
  if (models == 0) throw InvariantError("ensemble size T must be positive");
}

// ----------------------------------------------------------------------------
// Cluster
// ----------------------------------------------------------------------------

Cluster::Cluster(Detection founder)
    : winning_label_(founder.winning_label()),
      representative_(founder.box),
      sum_{founder.box.x(), founder.box.y(), founder.box.w(), founder.box.h()} {
  members_.push_back(std::move(founder));
}

bool Cluster::has_model(std::size_t model_index) const noexcept {
  return std::any_of(members_.begin(), members_.end(),
                     [&](const Detection& m) { return m.model_index == model_index; });
}

bool Cluster::admits(const Detection& d) const {
  return d.winning_label() == winning_label_ && !has_model(d.model_index);
}

void Cluster::add(Detection d) {
  if (!admits(d)) throw InvariantError("detection violates cluster exclusivity or label purity");
  sum_[0] += d.box.x();
  sum_[1] += d.box.y();
  sum_[2] += d.box.w();
  sum_[3] += d.box.h();
  members_.push_back(std::move(d));
  const auto n = static_cast<double>(members_.size());
  representative_ = BoundingBox(sum_[0] / n, sum_[1] / n, sum_[2] / n, sum_[3] / n);
}

// ----------------------------------------------------------------------------
// NMS
// ----------------------------------------------------------------------------

std::vector<Detection> nms_per_model(std::span<const Detection> detections, const MergeConfig& config) {
  struct Candidate {
    const Detection* det;
    double score;
    std::size_t label;
  };
  std::vector<Candidate> kept;
  kept.reserve(detections.size());
  for (const auto& d : detections) {
    const double s = d.score();
    if (s >= config.nms_confidence) kept.push_back({&d, s, d.winning_label()});
  }
  std::stable_sort(kept.begin(), kept.end(), [](const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.det->source_order < b.det->source_order;
  });

  std::vector<Detection> out;
  std::vector<const Candidate*> selected;
  for (const auto& c : kept) {
    bool suppressed = false;
    for (const Candidate* s : selected) {
      if (!config.class_agnostic_nms && s->label != c.label) continue;
      if (iou(s->det->box, c.det->box) > config.nms_iou) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) {
      selected.push_back(&c);
      out.push_back(*c.det);
    }
  }
  return out;
}

// ----------------------------------------------------------------------------
// BSASexcl
// ----------------------------------------------------------------------------

void canonical_sort(std::vector<Detection>& detections) {
  std::vector<double> scores(detections.size());
  std::vector<std::size_t> order(detections.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = 0; i < detections.size(); ++i) scores[i] = detections[i].score();
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& da = detections[a];
    const auto& db = detections[b];
    if (da.model_index != db.model_index) return da.model_index < db.model_index;
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    if (da.source_order != db.source_order) return da.source_order < db.source_order;
    return a < b;
  });
  std::vector<Detection> sorted;
  sorted.reserve(detections.size());
  for (auto i : order) sorted.push_back(std::move(detections[i]));
  detections = std::move(sorted);
}

std::vector<Cluster> bsas_excl(std::vector<Detection> detections, const MergeConfig& config) {
  canonical_sort(detections);
  std::vector<Cluster> clusters;
  for (auto& d : detections) {
    const std::size_t label = d.winning_label();
    std::size_t best = clusters.size();
    double best_iou = -1.0;
    for (std::size_t k = 0; k < clusters.size(); ++k) {
      const auto& c = clusters[k];
      if (c.winning_label() != label || c.has_model(d.model_index)) continue;
      const double v = iou(c.representative(), d.box);
      if (v >= config.cluster_iou && v > best_iou) {
        best_iou = v;
        best = k;
      }
    }
    if (best == clusters.size()) {
      clusters.emplace_back(std::move(d));
    } else {
      clusters[best].add(std::move(d));
    }
  }
  return clusters;
}

MergedObject merge_cluster(const Cluster& cluster, std::size_t models) {
  if (cluster.support() > models) throw InvariantError("cluster support exceeds ensemble size");
  MergedObject out{cluster.representative(), cluster.winning_label(), cluster.support(), {}, {}};
  out.member_models.reserve(cluster.support());
  out.member_probs.reserve(cluster.support());
  for (const auto& m : cluster.members()) {
    out.member_models.push_back(m.model_index);
    out.member_probs.push_back(m.class_probs);
  }
  return out;
}

std::vector<MergedObject> merge_frame(std::span<const std::vector<Detection>> per_model,
                                      const MergeConfig& config) {
  std::vector<Detection> all;
  for (std::size_t t = 0; t < per_model.size(); ++t) {
    auto kept = nms_per_model(per_model[t], config);
    for (auto& d : kept) {
      if (d.model_index >= config.models) throw InvariantError("detection model index >= T");
      all.push_back(std::move(d));
    }
  }
  const auto clusters = bsas_excl(std::move(all), config);
  std::vector<MergedObject> out;
  out.reserve(clusters.size());
  for (const auto& c : clusters) out.push_back(merge_cluster(c, config.models));
  return out;
}

// ----------------------------------------------------------------------------
// Serialization
// ----------------------------------------------------------------------------

std::string write_merged_document(std::span<const MergedObject> objects, const MergeConfig& config,
                                  std::size_t num_categories) {
  JsonWriter w(0);
  w.begin_object();
  w.key("header").begin_object();
  w.field("T", config.models);
  w.field("C", num_categories);
  w.field("nms_confidence", config.nms_confidence);
  w.field("nms_iou", config.nms_iou);
  w.field("cluster_iou", config.cluster_iou);
  w.field("class_agnostic_nms", config.class_agnostic_nms);
  w.end_object();
  w.key("objects").begin_array();
  for (const auto& o : objects) {
    w.begin_object();
    const double bbox[4] = {o.box.x(), o.box.y(), o.box.w(), o.box.h()};
    w.key("bbox").array(bbox);
    w.field("winning_label", o.winning_label);
    w.field("d", o.support);
    w.key("models").begin_array();
    for (auto m : o.member_models) w.value(m);
    w.end_array();
    w.key("member_probs").begin_array();
    for (const auto& p : o.member_probs) w.array(p);
    w.end_array();
    w.end_object();
  }
  w.end_array();
  w.end_object();
  return w.str();
}

MergedDocument parse_merged_document(std::string_view document, const std::string& file) {
  using nlohmann::json;
  json doc;
  try {
    doc = json::parse(document.begin(), document.end());
  } catch (const json::parse_error& e) {
    throw ParseError(file, "byte " + std::to_string(e.byte), "malformed JSON");
  }
  if (!doc.is_object() || !doc.contains("header") || !doc.contains("objects") || !doc["objects"].is_array()) {
    throw ParseError(file, "root", "merged file needs \"header\" and \"objects\"");
  }
  MergedDocument out;
  try {
    out.models = doc["header"].at("T").get<std::size_t>();
    out.num_categories = doc["header"].at("C").get<std::size_t>();
  } catch (const json::exception&) {
    throw ParseError(file, "header", "header needs integer T and C");
  }
  if (out.models == 0 || out.num_categories == 0) throw ParseError(file, "header", "T and C must be positive");

  const auto& objs = doc["objects"];
  for (std::size_t i = 0; i < objs.size(); ++i) {
    const std::string loc = "object " + std::to_string(i);
    try {
      const auto& o = objs[i];
      const auto b = o.at("bbox").get<std::vector<double>>();
      if (b.size() != 4 || b[2] <= 0.0 || b[3] <= 0.0) throw ParseError(file, loc, "bbox must be [x,y,w,h] with w,h > 0");
      MergedObject m{BoundingBox(b[0], b[1], b[2], b[3]), o.at("winning_label").get<std::size_t>(),
                     o.at("d").get<std::size_t>(), {}, o.at("member_probs").get<std::vector<std::vector<double>>>()};
      if (o.contains("models")) m.member_models = o["models"].get<std::vector<std::size_t>>();
      if (m.support < 1 || m.support > out.models) throw ParseError(file, loc, "d must lie in [1,T]");
      if (m.member_probs.size() != m.support) throw ParseError(file, loc, "member_probs count differs from d");
      if (m.winning_label >= out.num_categories) throw ParseError(file, loc, "winning_label >= C");
      for (const auto& p : m.member_probs) {
        if (p.size() != out.num_categories) throw ParseError(file, loc, "member_probs length differs from C");
        for (double v : p) {
          if (!(v >= 0.0 && v <= 1.0)) throw ParseError(file, loc, "probability outside [0,1]");
        }
      }
      out.objects.push_back(std::move(m));
    } catch (const json::exception& e) {
      throw ParseError(file, loc, std::string("malformed merged object: ") + e.what());
    }
  }
  return out;
}

}  // namespace sotif::merge
