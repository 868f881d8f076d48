#include "sotif/synthetic.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <random>
#include <set>

#include "json.hpp"
#include "sotif/json_writer.hpp"

namespace sotif::sim {

namespace {

/// Uniform doubles in [0,1) from the raw 64-bit engine output. The engine's
/// sequence is fixed by the standard; std distributions are not, so they are avoided.
class Stream {
 public:
  explicit Stream(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  bool bernoulli(double p) { return uniform() < p; }
  std::size_t index(std::size_t n) {
    return std::min(n - 1, static_cast<std::size_t>(uniform() * static_cast<double>(n)));
  }
  std::size_t poisson(double mean) {
    if (mean <= 0.0) return 0;
    const double limit = std::exp(-mean);
    std::size_t k = 0;
    double p = uniform();
    while (p > limit) {
      ++k;
      p *= uniform();
    }
    return k;
  }

 private:
  std::mt19937_64 engine_;
};

/// Value as it will read back from a six-decimal file.
double quantize(double v) {
  const std::string s = format_fixed(v);
  double out = 0.0;
  std::from_chars(s.data(), s.data() + s.size(), out);
  return out;
}

BoundingBox quantize(const BoundingBox& b) {
  return BoundingBox(quantize(b.x()), quantize(b.y()), quantize(b.w()), quantize(b.h()));
}

std::string frame_name(std::size_t i) {
  std::string digits = std::to_string(i);
  return "frame_" + std::string(digits.size() < 6 ? 6 - digits.size() : 0, '0') + digits;
}

}  // namespace

void SimConfig::validate() const {
  auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!unit(hard_fraction) || !unit(detect_prob_easy) || !unit(detect_prob_hard) || !unit(confusion_rate)) {
    throw InvariantError("simulation probabilities must lie in [0,1]");
  }
  for (const auto& s : subsets) {
    if (!unit(s.hard_fraction) || !(s.weight > 0.0)) throw InvariantError("subset weight must be > 0, hard fraction in [0,1]");
  }
  if (!(ghost_rate >= 0.0)) throw InvariantError("ghost rate must be >= 0");
  if (!(box_jitter >= 0.0 && box_jitter <= 0.5)) throw InvariantError("box jitter must lie in [0,0.5]");
  if (objects_min > objects_max) throw InvariantError("objects_min exceeds objects_max");
  if (!unit(max_overlap)) throw InvariantError("max_overlap must lie in [0,1]");
  if (!(size_min > 0.0 && size_min <= size_max && size_max <= 1.0)) throw InvariantError("need 0 < size_min <= size_max <= 1");
  if (image.width <= 0 || image.height <= 0) throw InvariantError("image size must be positive");
  if (models == 0) throw InvariantError("T must be positive");
  if (confusable_a >= categories.size() || confusable_b >= categories.size() || confusable_a == confusable_b) {
    throw InvariantError("confusable pair must name two distinct categories");
  }
  for (auto [lo, hi] : {std::pair{easy_confidence_min, easy_confidence_max},
                        std::pair{hard_confidence_min, hard_confidence_max},
                        std::pair{ghost_confidence_min, ghost_confidence_max},
                        std::pair{ambiguous_confidence_min, ambiguous_confidence_max}}) {
    if (!(unit(lo) && unit(hi) && lo <= hi)) throw InvariantError("confidence ranges must be ordered within [0,1]");
    if (!(lo > background_prob_max)) throw InvariantError("confidence must exceed the background probability");
  }
  if (!(rival_easy >= 0.0 && rival_easy < 1.0 && rival_hard >= 0.0 && rival_hard < 1.0)) {
    throw InvariantError("rival fractions must lie in [0,1)");
  }
  if (!unit(model_spread)) throw InvariantError("model_spread must lie in [0,1]");
  if (!unit(ambiguous_rate)) throw InvariantError("ambiguous_rate must lie in [0,1]");
  if (!unit(background_prob_max) || !unit(objectness_min)) throw InvariantError("background/objectness must lie in [0,1]");
}

SimConfig parse_sim_config(std::string_view json_document, const std::string& file) {
  using nlohmann::json;
  json doc;
  try {
    doc = json::parse(json_document.begin(), json_document.end());
  } catch (const json::parse_error& e) {
    throw ParseError(file, "byte " + std::to_string(e.byte), "malformed JSON");
  }
  if (!doc.is_object()) throw ParseError(file, "root", "config must be a JSON object");

  SimConfig c;
  static const std::set<std::string> kKnown = {
      "seed", "frames", "objects_min", "objects_max", "image", "size_min", "size_max", "hard_fraction",
      "subsets", "detect_prob_easy", "detect_prob_hard", "box_jitter", "confusion_rate", "confusable_pair",
      "ghost_rate", "rival_easy", "rival_hard", "model_spread", "ambiguous_rate", "ambiguous_confidence", "easy_confidence", "hard_confidence", "ghost_confidence", "background_prob_max",
      "objectness_min", "max_overlap", "T", "categories"};
  for (const auto& [k, _] : doc.items()) {
    if (!kKnown.count(k)) throw ParseError(file, "key '" + k + "'", "unknown configuration key");
  }
  try {
    auto num = [&](const char* key, double& out) {
      if (doc.contains(key)) out = doc[key].get<double>();
    };
    auto count = [&](const char* key, std::size_t& out) {
      if (doc.contains(key)) out = doc[key].get<std::size_t>();
    };
    auto range = [&](const char* key, double& lo, double& hi) {
      if (!doc.contains(key)) return;
      const auto v = doc[key].get<std::vector<double>>();
      if (v.size() != 2) throw ParseError(file, std::string("key '") + key + "'", "range must be [min, max]");
      lo = v[0];
      hi = v[1];
    };
    if (doc.contains("seed")) c.seed = doc["seed"].get<std::uint64_t>();
    if (doc.contains("categories")) c.categories = CategorySet(doc["categories"].get<std::vector<std::string>>());
    count("frames", c.frames);
    count("objects_min", c.objects_min);
    count("objects_max", c.objects_max);
    count("T", c.models);
    if (doc.contains("image")) {
      c.image.width = doc["image"].at("w").get<int>();
      c.image.height = doc["image"].at("h").get<int>();
    }
    num("size_min", c.size_min);
    num("size_max", c.size_max);
    num("hard_fraction", c.hard_fraction);
    num("detect_prob_easy", c.detect_prob_easy);
    num("detect_prob_hard", c.detect_prob_hard);
    num("box_jitter", c.box_jitter);
    num("confusion_rate", c.confusion_rate);
    num("ghost_rate", c.ghost_rate);
    num("rival_easy", c.rival_easy);
    num("rival_hard", c.rival_hard);
    num("model_spread", c.model_spread);
    num("ambiguous_rate", c.ambiguous_rate);
    range("ambiguous_confidence", c.ambiguous_confidence_min, c.ambiguous_confidence_max);
    num("background_prob_max", c.background_prob_max);
    num("objectness_min", c.objectness_min);
    num("max_overlap", c.max_overlap);
    range("easy_confidence", c.easy_confidence_min, c.easy_confidence_max);
    range("hard_confidence", c.hard_confidence_min, c.hard_confidence_max);
    range("ghost_confidence", c.ghost_confidence_min, c.ghost_confidence_max);
    if (doc.contains("confusable_pair")) {
      const auto pair = doc["confusable_pair"].get<std::vector<std::string>>();
      if (pair.size() != 2) throw ParseError(file, "key 'confusable_pair'", "pair must name two categories");
      auto a = c.categories.index_of(pair[0]);
      auto b = c.categories.index_of(pair[1]);
      if (!a || !b) throw ParseError(file, "key 'confusable_pair'", "unknown category in confusable pair");
      c.confusable_a = *a;
      c.confusable_b = *b;
    }
    if (doc.contains("subsets")) {
      for (const auto& s : doc["subsets"]) {
        SubsetSpec spec{SubsetTag::parse(s.at("tag").get<std::string>()), s.value("weight", 1.0),
                        s.value("hard_fraction", c.hard_fraction)};
        c.subsets.push_back(spec);
      }
    }
  } catch (const json::exception& e) {
    throw ParseError(file, "root", std::string("malformed configuration: ") + e.what());
  } catch (const InvariantError& e) {
    throw ParseError(file, "root", e.what());
  }
  try {
    c.validate();
  } catch (const InvariantError& e) {
    throw ParseError(file, "root", e.what());
  }
  return c;
}

SimOutput generate(const SimConfig& config) {
  config.validate();
  Stream rng(config.seed);
  const std::size_t C = config.categories.size();
  const double W = config.image.width;
  const double H = config.image.height;

  std::vector<SubsetSpec> subsets = config.subsets;
  if (subsets.empty()) {
    subsets.push_back({SubsetTag(PrimaryLabel::environment, SecondaryLabel::rain, TertiaryLabel::natural), 1.0,
                       config.hard_fraction});
  }
  double total_weight = 0.0;
  for (const auto& s : subsets) total_weight += s.weight;

  auto draw_box = [&]() {
    const double w = rng.uniform(config.size_min, config.size_max) * W;
    const double h = rng.uniform(config.size_min, config.size_max) * H;
    const double x = rng.uniform() * (W - w);
    const double y = rng.uniform() * (H - h);
    return BoundingBox(x, y, w, h);
  };

  SimOutput out;
  out.dataset.categories = config.categories;
  for (std::size_t f = 0; f < config.frames; ++f) {
    // Subset choice.
    double pick = rng.uniform() * total_weight;
    std::size_t si = 0;
    while (si + 1 < subsets.size() && pick >= subsets[si].weight) {
      pick -= subsets[si].weight;
      ++si;
    }
    const auto& subset = subsets[si];

    // Ground truth, normalized through the YOLO text form so memory equals disk.
    const std::size_t n = config.objects_min + rng.index(config.objects_max - config.objects_min + 1);
    std::vector<GroundTruthObject> gt;
    std::vector<std::size_t> lookalike;  // the class every model mistakes this object for
    std::vector<double> object_conf, object_rival;
    std::vector<bool> object_ambiguous;
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t category = rng.index(C);
      const std::size_t other = rng.index(C - 1);
      if (category == config.confusable_a) {
        lookalike.push_back(config.confusable_b);
      } else if (category == config.confusable_b) {
        lookalike.push_back(config.confusable_a);
      } else {
        lookalike.push_back(other >= category ? other + 1 : other);
      }
      const bool hard = rng.bernoulli(subset.hard_fraction);
      // Ensemble members agree on how difficult an object is; they differ by model_spread.
      double conf = hard ? rng.uniform(config.hard_confidence_min, config.hard_confidence_max)
                         : rng.uniform(config.easy_confidence_min, config.easy_confidence_max);
      double rival = rng.uniform() * (hard ? config.rival_hard : config.rival_easy);
      // Annotated easy, yet every model splits its vote with the lookalike.
      const bool ambiguous = rng.bernoulli(config.ambiguous_rate);
      const double ambiguous_conf = rng.uniform(config.ambiguous_confidence_min, config.ambiguous_confidence_max);
      const double ambiguous_rival = rng.uniform(0.8, 0.95);
      if (!hard && ambiguous) {
        conf = ambiguous_conf;
        rival = ambiguous_rival;
      }
      object_conf.push_back(conf);
      object_rival.push_back(rival);
      object_ambiguous.push_back(!hard && ambiguous);
      BoundingBox box = draw_box();
      for (int attempt = 0; attempt < 50; ++attempt) {
        const bool clear = std::all_of(gt.begin(), gt.end(),
                                       [&](const GroundTruthObject& o) { return iou(o.box, box) <= config.max_overlap; });
        if (clear) break;
        box = draw_box();
      }
      gt.push_back({category, box, hard});
    }
    gt = io::parse_yolo_ext(io::write_yolo_ext(gt, config.image), config.image, config.categories);

    Frame frame{frame_name(f), config.image, subset.tag, gt};
    io::EnsembleDetections ens{frame.frame_id, std::vector<std::vector<Detection>>(config.models)};
    std::vector<std::vector<int>> origin(config.models);

    for (std::size_t t = 0; t < config.models; ++t) {
      auto emit = [&](BoundingBox box, std::size_t label, double confidence, std::vector<double> background,
                      double objectness, int source) {
        std::vector<double> probs = std::move(background);
        probs[label] = confidence;
        for (auto& p : probs) p = quantize(p);
        ens.per_model[t].push_back(
            Detection{quantize(box), std::move(probs), quantize(objectness), t, ens.per_model[t].size()});
        origin[t].push_back(source);
      };

      for (std::size_t k = 0; k < gt.size(); ++k) {
        const auto& g = gt[k];
        // Fixed draw count per (frame, object, model) whatever the outcomes.
        const bool detected = rng.bernoulli(g.hard ? config.detect_prob_hard : config.detect_prob_easy);
        double jitter[4];
        for (double& j : jitter) j = rng.uniform(-config.box_jitter, config.box_jitter);
        const bool confused = g.hard && rng.bernoulli(config.confusion_rate);
        double lo = g.hard ? config.hard_confidence_min : config.easy_confidence_min;
        double hi = g.hard ? config.hard_confidence_max : config.easy_confidence_max;
        if (object_ambiguous[k]) {
          lo = config.ambiguous_confidence_min;
          hi = config.ambiguous_confidence_max;
        }
        const double conf =
            std::clamp(object_conf[k] + rng.uniform(-config.model_spread, config.model_spread), lo, hi);
        std::vector<double> background(C);
        for (auto& b : background) b = rng.uniform() * config.background_prob_max;
        const double objectness = rng.uniform(config.objectness_min, 1.0);
        const double rival = object_rival[k];
        if (!detected) continue;

        const std::size_t label = confused ? lookalike[k] : g.category;
        // The runner-up class: the true one when confused, else the lookalike.
        const std::size_t runner_up = confused ? g.category : lookalike[k];
        background[runner_up] = std::max(background[runner_up], quantize(rival * conf));
        const BoundingBox box(g.box.x() + jitter[0] * g.box.w(), g.box.y() + jitter[1] * g.box.h(),
                              g.box.w() * (1.0 + jitter[2]), g.box.h() * (1.0 + jitter[3]));
        emit(box, label, conf, std::move(background), objectness, static_cast<int>(k));
      }

      const std::size_t ghosts = rng.poisson(config.ghost_rate);
      for (std::size_t k = 0; k < ghosts; ++k) {
        const BoundingBox box = draw_box();
        const std::size_t label = rng.index(C);
        const double conf = rng.uniform(config.ghost_confidence_min, config.ghost_confidence_max);
        std::vector<double> background(C);
        for (auto& b : background) b = rng.uniform() * config.background_prob_max;
        const double objectness = rng.uniform(config.objectness_min, 1.0);
        emit(box, label, conf, std::move(background), objectness, -1);
      }
    }

    out.dataset.frames.push_back(std::move(frame));
    out.detections.push_back(std::move(ens));
    out.origin.push_back(std::move(origin));
  }
  return out;
}

void write_simulation(const SimOutput& output, const std::filesystem::path& dir) {
  io::save_yolo_dataset(output.dataset, dir);
  for (const auto& ens : output.detections) {
    for (std::size_t t = 0; t < ens.models(); ++t) {
      io::write_file(io::detection_path(dir / "detections", t, ens.frame_id),
                     io::write_detection_document(ens.per_model[t]));
    }
  }
}

}  // namespace sotif::sim
