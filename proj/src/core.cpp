#include "sotif/core.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <unordered_set>

namespace sotif {

ParseError::ParseError(std::string file, std::string location, std::string rule)
    : std::runtime_error(file + ": " + location + ": " + rule),
      file_(std::move(file)),
      location_(std::move(location)),
      rule_(std::move(rule)) {}

// ----------------------------------------------------------------------------
// CategorySet
// ----------------------------------------------------------------------------

CategorySet::CategorySet(std::vector<std::string> names) : names_(std::move(names)) {
  if (names_.empty()) throw InvariantError("category set must not be empty");
  std::unordered_set<std::string> seen;
  for (const auto& n : names_) {
    if (n.empty()) throw InvariantError("category labels must be non-empty");
    if (!seen.insert(n).second) throw InvariantError("duplicate category label '" + n + "'");
  }
}

const CategorySet& CategorySet::defaults() {
  static const CategorySet set({"car", "bus", "truck", "train", "bike", "motor", "person",
                                "rider", "traffic sign", "traffic light", "traffic cone"});
  return set;
}

const std::string& CategorySet::name(std::size_t index) const {
  if (index >= names_.size()) {
    throw InvariantError("category index " + std::to_string(index) + " out of range");
  }
  return names_[index];
}

std::optional<std::size_t> CategorySet::index_of(std::string_view name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - names_.begin());
}

// ----------------------------------------------------------------------------
// Geometry
// ----------------------------------------------------------------------------

BoundingBox::BoundingBox(double x, double y, double w, double h) : x_(x), y_(y), w_(w), h_(h) {
  if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(w) || !std::isfinite(h)) {
    throw InvariantError("bounding box coordinates must be finite");
  }
  if (w <= 0.0 || h <= 0.0) throw InvariantError("bounding box must have positive width and height");
}

double iou(const BoundingBox& a, const BoundingBox& b) noexcept {
  const double ix = std::min(a.right(), b.right()) - std::max(a.x(), b.x());
  const double iy = std::min(a.bottom(), b.bottom()) - std::max(a.y(), b.y());
  if (ix <= 0.0 || iy <= 0.0) return 0.0;
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

BoundingBox mean_box(std::span<const BoundingBox> boxes) {
  if (boxes.empty()) throw InvariantError("mean of an empty box set");
  double x = 0, y = 0, w = 0, h = 0;
  for (const auto& b : boxes) {
    x += b.x();
    y += b.y();
    w += b.w();
    h += b.h();
  }
  const auto n = static_cast<double>(boxes.size());
  return BoundingBox(x / n, y / n, w / n, h / n);
}

// ----------------------------------------------------------------------------
// Detection
// ----------------------------------------------------------------------------

std::size_t argmax(std::span<const double> values) {
  if (values.empty()) throw InvariantError("argmax of an empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

std::size_t Detection::winning_label() const { return argmax(class_probs); }

double Detection::score() const { return objectness * class_probs[winning_label()]; }

void validate_probabilities(std::span<const double> probs) {
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (!std::isfinite(probs[i]) || probs[i] < 0.0 || probs[i] > 1.0) {
      throw InvariantError("probability at index " + std::to_string(i) + " outside [0,1]");
    }
  }
}

// ----------------------------------------------------------------------------
// SubsetTag
// ----------------------------------------------------------------------------

namespace {

constexpr std::array<PrimaryLabel, 2> kPrimary{PrimaryLabel::environment, PrimaryLabel::object};
constexpr std::array<SecondaryLabel, 6> kSecondary{
    SecondaryLabel::rain,   SecondaryLabel::snow,   SecondaryLabel::particulate,
    SecondaryLabel::illumination, SecondaryLabel::common, SecondaryLabel::uncommon};
constexpr std::array<TertiaryLabel, 4> kTertiary{TertiaryLabel::natural, TertiaryLabel::handcraft,
                                                 TertiaryLabel::appearance, TertiaryLabel::posture};

template <typename Enum, std::size_t N>
std::optional<Enum> lookup(const std::array<Enum, N>& all, std::string_view text) {
  for (Enum e : all) {
    if (to_string(e) == text) return e;
  }
  return std::nullopt;
}

}  // namespace

std::string_view to_string(PrimaryLabel v) noexcept {
  return v == PrimaryLabel::environment ? "environment" : "object";
}

std::string_view to_string(SecondaryLabel v) noexcept {
  switch (v) {
    case SecondaryLabel::rain: return "rain";
    case SecondaryLabel::snow: return "snow";
    case SecondaryLabel::particulate: return "particulate";
    case SecondaryLabel::illumination: return "illumination";
    case SecondaryLabel::common: return "common";
    case SecondaryLabel::uncommon: return "uncommon";
  }
  return "";
}

std::string_view to_string(TertiaryLabel v) noexcept {
  switch (v) {
    case TertiaryLabel::natural: return "natural";
    case TertiaryLabel::handcraft: return "handcraft";
    case TertiaryLabel::appearance: return "appearance";
    case TertiaryLabel::posture: return "posture";
  }
  return "";
}

bool SubsetTag::is_valid(PrimaryLabel primary, SecondaryLabel secondary,
                         std::optional<TertiaryLabel> tertiary) noexcept {
  if (primary == PrimaryLabel::environment) {
    const bool env_secondary = secondary == SecondaryLabel::rain || secondary == SecondaryLabel::snow ||
                               secondary == SecondaryLabel::particulate ||
                               secondary == SecondaryLabel::illumination;
    return env_secondary && tertiary &&
           (*tertiary == TertiaryLabel::natural || *tertiary == TertiaryLabel::handcraft);
  }
  if (secondary == SecondaryLabel::common) {
    return tertiary && (*tertiary == TertiaryLabel::appearance || *tertiary == TertiaryLabel::posture);
  }
  return secondary == SecondaryLabel::uncommon && !tertiary;
}

SubsetTag::SubsetTag(PrimaryLabel primary, SecondaryLabel secondary,
                     std::optional<TertiaryLabel> tertiary)
    : primary_(primary), secondary_(secondary), tertiary_(tertiary) {
  if (!is_valid(primary, secondary, tertiary)) {
    std::string text = std::string(sotif::to_string(primary)) + "/" + std::string(sotif::to_string(secondary));
    if (tertiary) text += "/" + std::string(sotif::to_string(*tertiary));
    throw InvariantError("invalid subset tag '" + text + "'");
  }
}

SubsetTag SubsetTag::parse(std::string_view text) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto slash = text.find('/', start);
    parts.push_back(text.substr(start, slash == std::string_view::npos ? std::string_view::npos
                                                                       : slash - start));
    if (slash == std::string_view::npos) break;
    start = slash + 1;
  }
  const std::string quoted = "'" + std::string(text) + "'";
  if (parts.size() < 2 || parts.size() > 3) {
    throw InvariantError("subset tag " + quoted + " must have 2 or 3 '/'-separated levels");
  }
  auto primary = lookup(kPrimary, parts[0]);
  auto secondary = lookup(kSecondary, parts[1]);
  std::optional<TertiaryLabel> tertiary;
  if (parts.size() == 3) {
    tertiary = lookup(kTertiary, parts[2]);
    if (!tertiary) throw InvariantError("unknown tertiary label in subset tag " + quoted);
  }
  if (!primary) throw InvariantError("unknown primary label in subset tag " + quoted);
  if (!secondary) throw InvariantError("unknown secondary label in subset tag " + quoted);
  return SubsetTag(*primary, *secondary, tertiary);
}

std::string SubsetTag::to_string() const {
  std::string out(sotif::to_string(primary_));
  out += '/';
  out += sotif::to_string(secondary_);
  if (tertiary_) {
    out += '/';
    out += sotif::to_string(*tertiary_);
  }
  return out;
}

std::span<const SubsetGroup> subset_groups() noexcept {
  static constexpr SubsetGroup kGroups[] = {
      {"environment", [](const SubsetTag& t) { return t.primary() == PrimaryLabel::environment; }},
      {"object", [](const SubsetTag& t) { return t.primary() == PrimaryLabel::object; }},
      {"natural", [](const SubsetTag& t) { return t.tertiary() == TertiaryLabel::natural; }},
      {"handcraft", [](const SubsetTag& t) { return t.tertiary() == TertiaryLabel::handcraft; }},
  };
  return kGroups;
}

void validate_frame(const Frame& frame) {
  if (frame.frame_id.empty()) throw InvariantError("frame id must be non-empty");
  if (frame.image.width <= 0 || frame.image.height <= 0) {
    throw InvariantError("frame '" + frame.frame_id + "' has non-positive image size");
  }
}

}  // namespace sotif
