#include <doctest.h>

#include <algorithm>
#include <map>
#include <random>
#include <set>
#include <utility>

#include "generators.hpp"
#include "oracles.hpp"
#include "sotif/ensemble_merge.hpp"

using namespace sotif;
using namespace sotif::merge;

namespace {

std::vector<double> one_hot(std::size_t label, double p, std::size_t C = 11) {
  std::vector<double> v(C, 0.0);
  v[label] = p;
  return v;
}

Detection det(BoundingBox b, std::size_t label, double p, std::size_t model = 0, std::size_t order = 0) {
  return Detection{b, one_hot(label, p), 1.0, model, order};
}

using Key = std::pair<std::size_t, std::size_t>;  // (model, source_order)

std::vector<std::vector<Key>> keys(const std::vector<Cluster>& clusters) {
  std::vector<std::vector<Key>> out;
  for (const auto& c : clusters) {
    std::vector<Key> k;
    for (const auto& m : c.members()) k.emplace_back(m.model_index, m.source_order);
    out.push_back(k);
  }
  return out;
}

std::vector<std::vector<Key>> keys(const std::vector<std::vector<Detection>>& clusters) {
  std::vector<std::vector<Key>> out;
  for (const auto& c : clusters) {
    std::vector<Key> k;
    for (const auto& m : c) k.emplace_back(m.model_index, m.source_order);
    out.push_back(k);
  }
  return out;
}

/// A random ensemble: a few anchors, each model scattering same-label boxes around them.
std::vector<Detection> ensemble(gen::Rng& r, std::size_t T) {
  std::vector<BoundingBox> anchors;
  const std::size_t na = 1 + r.index(4);
  for (std::size_t i = 0; i < na; ++i) anchors.push_back(gen::box(r, 400));
  std::vector<Detection> all;
  for (std::size_t t = 0; t < T; ++t) {
    auto d = gen::detections(r, t, r.index(6), 11, anchors);
    all.insert(all.end(), d.begin(), d.end());
  }
  return all;
}

}  // namespace

TEST_CASE("config validation") {
  MergeConfig c;
  CHECK_NOTHROW(c.validate());
  c.nms_iou = 1.5;
  CHECK_THROWS_AS(c.validate(), InvariantError);
  c = {};
  c.models = 0;
  CHECK_THROWS_AS(c.validate(), InvariantError);
}

TEST_CASE("nms examples") {
  MergeConfig c;
  const BoundingBox b(10, 10, 50, 50);
  SUBCASE("identical same-label boxes keep the higher score") {
    const std::vector<Detection> in = {det(b, 0, 0.8, 0, 0), det(b, 0, 0.9, 0, 1)};
    const auto out = nms_per_model(in, c);
    REQUIRE(out.size() == 1);
    CHECK(out[0].source_order == 1);
  }
  SUBCASE("different labels both survive") {
    const std::vector<Detection> in = {det(b, 0, 0.9, 0, 0), det(b, 6, 0.8, 0, 1)};
    CHECK(nms_per_model(in, c).size() == 2);
    c.class_agnostic_nms = true;
    CHECK(nms_per_model(in, c).size() == 1);
  }
  SUBCASE("below the confidence threshold") {
    const std::vector<Detection> in = {det(b, 0, 0.2, 0, 0)};
    CHECK(nms_per_model(in, c).empty());
  }
  SUBCASE("overlap exactly at the threshold is kept") {
    // IoU of these two is 0.45 only approximately, so use a clean 1/3 with nms_iou = 1/3.
    c.nms_iou = 50.0 / 150.0;
    const std::vector<Detection> in = {det(BoundingBox(0, 0, 10, 10), 0, 0.9, 0, 0),
                                       det(BoundingBox(5, 0, 10, 10), 0, 0.8, 0, 1)};
    CHECK(nms_per_model(in, c).size() == 2);
  }
}

TEST_CASE("bsas examples") {
  MergeConfig c;
  SUBCASE("two models agreeing at IoU 0.8 form one cluster") {
    // (0,0,10,10) vs (0,0,10,8): IoU 80/100
    const std::vector<Detection> in = {det(BoundingBox(0, 0, 10, 10), 0, 0.9, 0),
                                       det(BoundingBox(0, 0, 10, 8), 0, 0.9, 1)};
    const auto cl = bsas_excl(in, c);
    REQUIRE(cl.size() == 1);
    CHECK(cl[0].support() == 2);
  }
  SUBCASE("same model never shares a cluster") {
    const std::vector<Detection> in = {det(BoundingBox(0, 0, 10, 10), 0, 0.9, 0, 0),
                                       det(BoundingBox(0, 0, 10, 9), 0, 0.8, 0, 1)};
    CHECK(bsas_excl(in, c).size() == 2);
  }
  SUBCASE("different winning labels never share a cluster") {
    const std::vector<Detection> in = {det(BoundingBox(0, 0, 10, 10), 0, 0.9, 0),
                                       det(BoundingBox(0, 0, 10, 9), 6, 0.9, 1)};
    CHECK(bsas_excl(in, c).size() == 2);
  }
  SUBCASE("equal affinity goes to the earlier cluster") {
    // Model 0 founds two clusters; model 1's box overlaps both equally.
    const std::vector<Detection> in = {det(BoundingBox(0, 0, 10, 10), 0, 0.9, 0, 0),
                                       det(BoundingBox(4, 0, 10, 10), 0, 0.8, 0, 1),
                                       det(BoundingBox(2, 0, 10, 10), 0, 0.9, 1, 0)};
    c.cluster_iou = 0.5;
    const auto cl = bsas_excl(in, c);
    REQUIRE(cl.size() == 2);
    CHECK(cl[0].support() == 2);
    CHECK(cl[1].support() == 1);
  }
}

TEST_CASE("merge_cluster examples") {
  Cluster one(det(BoundingBox(3, 4, 5, 6), 2, 0.7, 1));
  auto m = merge_cluster(one, 5);
  CHECK(m.box == BoundingBox(3, 4, 5, 6));
  CHECK(m.support == 1);
  CHECK(m.winning_label == 2);

  Cluster two(det(BoundingBox(0, 0, 10, 10), 0, 0.9, 0));
  two.add(det(BoundingBox(2, 2, 10, 10), 0, 0.8, 1));
  m = merge_cluster(two, 5);
  CHECK(m.box == BoundingBox(1, 1, 10, 10));
  CHECK(m.support == 2);
  CHECK(m.member_models == std::vector<std::size_t>{0, 1});
  CHECK(m.member_probs[1] == one_hot(0, 0.8));

  Cluster five(det(BoundingBox(7, 7, 3, 3), 4, 0.9, 0));
  for (std::size_t t = 1; t < 5; ++t) five.add(det(BoundingBox(7, 7, 3, 3), 4, 0.9, t));
  m = merge_cluster(five, 5);
  CHECK(m.box == BoundingBox(7, 7, 3, 3));
  CHECK(m.support == 5);
}

TEST_CASE("cluster rejects a second member from one model or another label") {
  Cluster c(det(BoundingBox(0, 0, 10, 10), 0, 0.9, 0));
  CHECK_FALSE(c.admits(det(BoundingBox(0, 0, 10, 10), 0, 0.9, 0)));
  CHECK_FALSE(c.admits(det(BoundingBox(0, 0, 10, 10), 1, 0.9, 1)));
  CHECK(c.admits(det(BoundingBox(0, 0, 10, 10), 0, 0.9, 1)));
  CHECK_THROWS_AS(c.add(det(BoundingBox(0, 0, 10, 10), 0, 0.9, 0)), InvariantError);
}

TEST_CASE("bsas properties over random ensembles") {
  gen::Rng r(31);
  MergeConfig c;
  for (int iter = 0; iter < 1500; ++iter) {
    const std::size_t T = 1 + r.index(6);
    c.models = T;
    c.cluster_iou = r.coin(0.2) ? r.uniform(0, 1) : 0.5;
    auto all = ensemble(r, T);
    const auto clusters = bsas_excl(all, c);

    std::set<Key> seen;
    std::size_t total = 0;
    for (const auto& cl : clusters) {
      std::set<std::size_t> models;
      for (const auto& m : cl.members()) {
        CHECK(models.insert(m.model_index).second);   // exclusivity
        CHECK(m.winning_label() == cl.winning_label()); // label purity
        CHECK(seen.insert({m.model_index, m.source_order}).second);
        ++total;
      }
      CHECK(cl.support() >= 1);
      CHECK(cl.support() <= T);
    }
    CHECK(total == all.size());  // conservation

    CHECK(keys(clusters) == keys(oracle::bsas_reference(all, c.cluster_iou)));

    auto shuffled = all;
    std::shuffle(shuffled.begin(), shuffled.end(), std::mt19937_64(iter));
    CHECK(keys(bsas_excl(shuffled, c)) == keys(clusters));  // input-order determinism
  }
}

TEST_CASE("cluster_iou extremes") {
  gen::Rng r(32);
  MergeConfig c;
  for (int iter = 0; iter < 500; ++iter) {
    const std::size_t T = 2 + r.index(4);
    c.models = T;
    const auto all = ensemble(r, T);

    // Threshold 0: a detection only founds a cluster when every same-label cluster already holds its model.
    c.cluster_iou = 0.0;
    std::map<std::size_t, std::map<std::size_t, std::size_t>> per_label_model;
    for (const auto& d : all) ++per_label_model[d.winning_label()][d.model_index];
    std::size_t expected = 0;
    for (const auto& [label, counts] : per_label_model) {
      std::size_t most = 0;
      for (const auto& [m, n] : counts) most = std::max(most, n);
      expected += most;
    }
    CHECK(bsas_excl(all, c).size() == expected);

    // Threshold 1 with boxes that never coincide exactly: every detection stands alone.
    c.cluster_iou = 1.0;
    CHECK(bsas_excl(all, c).size() == all.size());
  }
}

TEST_CASE("merge_frame and the merged document round trip") {
  gen::Rng r(33);
  MergeConfig c;
  for (int iter = 0; iter < 200; ++iter) {
    std::vector<std::vector<Detection>> per_model(c.models);
    auto all = ensemble(r, c.models);
    for (auto& d : all) per_model[d.model_index].push_back(d);
    const auto merged = merge_frame(per_model, c);
    for (const auto& m : merged) {
      CHECK(m.support == m.member_models.size());
      CHECK(m.support == m.member_probs.size());
    }
    const auto text = write_merged_document(merged, c, 11);
    const auto doc = parse_merged_document(text);
    CHECK(doc.models == c.models);
    CHECK(doc.num_categories == 11);
    REQUIRE(doc.objects.size() == merged.size());
    CHECK(write_merged_document(doc.objects, c, 11) == text);
  }
}
