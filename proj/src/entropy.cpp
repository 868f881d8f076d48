#include "sotif/entropy.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "json.hpp"
#include "sotif/json_writer.hpp"

namespace sotif::entropy {

std::string_view to_string(LogBase b) noexcept { return b == LogBase::two ? "2" : "e"; }

std::string_view to_string(MissingSamplePolicy p) noexcept {
  return p == MissingSamplePolicy::zero_fill ? "zero-fill" : "contributing-only";
}

LogBase parse_log_base(std::string_view text) {
  if (text == "2") return LogBase::two;
  if (text == "e") return LogBase::e;
  throw InvariantError("log base must be '2' or 'e'");
}

MissingSamplePolicy parse_policy(std::string_view text) {
  if (text == "zero-fill") return MissingSamplePolicy::zero_fill;
  if (text == "contributing-only") return MissingSamplePolicy::contributing_only;
  throw InvariantError("missing-sample policy must be 'zero-fill' or 'contributing-only'");
}

void EntropyConfig::validate() const {
  if (!(penalty_factor >= 0.0) || !std::isfinite(penalty_factor)) throw InvariantError("f_p must be >= 0");
  if (!(theta_w >= 0.0) || !std::isfinite(theta_w)) throw InvariantError("theta_w must be >= 0");
}

FusedProbabilities fuse_probabilities(std::span<const std::vector<double>> member_probs, std::size_t models,
                                      MissingSamplePolicy policy) {
  const std::size_t d = member_probs.size();
  if (d == 0) throw InvariantError("cannot fuse an empty cluster (d = 0)");
  if (d > models) throw InvariantError("support d exceeds ensemble size T");
  const std::size_t c = member_probs.front().size();
  FusedProbabilities out{std::vector<double>(c, 0.0)};
  for (const auto& m : member_probs) {
    if (m.size() != c) throw InvariantError("member probability vectors differ in length");
    for (std::size_t i = 0; i < c; ++i) out.p[i] += m[i];
  }
  const double denom = static_cast<double>(policy == MissingSamplePolicy::zero_fill ? models : d);
  for (auto& v : out.p) v = std::clamp(v / denom, 0.0, 1.0);
  return out;
}

namespace {

// x log x with the 0 log 0 = 0 convention.
inline double xlogx(double x) noexcept { return x > 0.0 ? x * std::log(x) : 0.0; }

}  // namespace

double binary_entropy(double p, LogBase base) noexcept {
  p = std::clamp(p, 0.0, 1.0);
  const double nats = -(xlogx(p) + xlogx(1.0 - p));
  return base == LogBase::two ? nats / std::numbers::ln2 : nats;
}

double entropy_h_star(const FusedProbabilities& fused, LogBase base) noexcept {
  double sum = 0.0;
  for (double p : fused.p) sum += binary_entropy(p, base);
  return sum;
}

double entropy_h(double h_star, std::size_t support, std::size_t models, double penalty_factor) {
  if (support < 1 || support > models) throw InvariantError("support d must lie in [1, T]");
  if (h_star < 0.0) throw InvariantError("H* must be non-negative");
  if (penalty_factor < 0.0) throw InvariantError("f_p must be non-negative");
  return h_star * (1.0 + penalty_factor * static_cast<double>(models - support));
}

double QuantifiedObject::confidence() const {
  return fused.empty() ? 0.0 : *std::max_element(fused.begin(), fused.end());
}

std::vector<QuantifiedObject> quantify_frame(std::span<const merge::MergedObject> objects, std::size_t models,
                                             const EntropyConfig& config) {
  std::vector<QuantifiedObject> out;
  out.reserve(objects.size());
  for (const auto& o : objects) {
    auto fused = fuse_probabilities(o.member_probs, models, config.policy);
    EntropyResult r;
    r.support = o.support;
    r.h_star = entropy_h_star(fused, config.log_base);
    r.h = entropy_h(r.h_star, o.support, models, config.penalty_factor);
    r.warned = is_warned(r.h, config.theta_w);
    out.push_back({o.box, o.winning_label, std::move(fused.p), r});
  }
  return out;
}

std::string write_entropy_document(std::span<const QuantifiedObject> objects, const EntropyHeader& header) {
  JsonWriter w(0);
  w.begin_object();
  w.key("header").begin_object();
  w.field("T", header.models);
  w.field("C", header.num_categories);
  w.field("f_p", header.config.penalty_factor);
  w.field("theta_w", header.config.theta_w);
  w.field("log_base", to_string(header.config.log_base));
  w.field("policy", to_string(header.config.policy));
  w.end_object();
  w.key("objects").begin_array();
  for (const auto& o : objects) {
    w.begin_object();
    const double bbox[4] = {o.box.x(), o.box.y(), o.box.w(), o.box.h()};
    w.key("bbox").array(bbox);
    w.field("winning_label", o.winning_label);
    w.field("d", o.entropy.support);
    w.key("p").array(o.fused);
    w.field("h_star", o.entropy.h_star);
    w.field("h", o.entropy.h);
    w.field("warned", o.entropy.warned);
    w.end_object();
  }
  w.end_array();
  w.end_object();
  return w.str();
}

EntropyDocument parse_entropy_document(std::string_view document, const std::string& file) {
  using nlohmann::json;
  json doc;
  try {
    doc = json::parse(document.begin(), document.end());
  } catch (const json::parse_error& e) {
    throw ParseError(file, "byte " + std::to_string(e.byte), "malformed JSON");
  }
  if (!doc.is_object() || !doc.contains("header") || !doc.contains("objects") || !doc["objects"].is_array()) {
    throw ParseError(file, "root", "entropy file needs \"header\" and \"objects\"");
  }
  EntropyDocument out;
  try {
    const auto& h = doc["header"];
    out.header.models = h.at("T").get<std::size_t>();
    out.header.num_categories = h.at("C").get<std::size_t>();
    out.header.config.penalty_factor = h.at("f_p").get<double>();
    out.header.config.theta_w = h.at("theta_w").get<double>();
    out.header.config.log_base = parse_log_base(h.at("log_base").get<std::string>());
    out.header.config.policy = parse_policy(h.at("policy").get<std::string>());
  } catch (const json::exception& e) {
    throw ParseError(file, "header", std::string("malformed header: ") + e.what());
  } catch (const InvariantError& e) {
    throw ParseError(file, "header", e.what());
  }
  const auto& objs = doc["objects"];
  for (std::size_t i = 0; i < objs.size(); ++i) {
    const std::string loc = "object " + std::to_string(i);
    try {
      const auto& o = objs[i];
      const auto b = o.at("bbox").get<std::vector<double>>();
      if (b.size() != 4 || b[2] <= 0.0 || b[3] <= 0.0) throw ParseError(file, loc, "bbox must be [x,y,w,h] with w,h > 0");
      QuantifiedObject q{BoundingBox(b[0], b[1], b[2], b[3]), o.at("winning_label").get<std::size_t>(),
                         o.at("p").get<std::vector<double>>(), {}};
      q.entropy.support = o.at("d").get<std::size_t>();
      q.entropy.h_star = o.at("h_star").get<double>();
      q.entropy.h = o.at("h").get<double>();
      q.entropy.warned = o.at("warned").get<bool>();
      if (q.fused.size() != out.header.num_categories) throw ParseError(file, loc, "p length differs from C");
      if (q.winning_label >= out.header.num_categories) throw ParseError(file, loc, "winning_label >= C");
      if (q.entropy.support < 1 || q.entropy.support > out.header.models) throw ParseError(file, loc, "d must lie in [1,T]");
      if (!(q.entropy.h >= 0.0) || !(q.entropy.h_star >= 0.0)) throw ParseError(file, loc, "entropy must be non-negative");
      out.objects.push_back(std::move(q));
    } catch (const json::exception& e) {
      throw ParseError(file, loc, std::string("malformed entropy object: ") + e.what());
    }
  }
  return out;
}

}  // namespace sotif::entropy
