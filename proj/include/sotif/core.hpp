#pragma once

// Shared domain types: category taxonomy, box geometry, detections,
// ground truth and the trigger-condition subset tags.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sotif/errors.hpp"

namespace sotif {

// ----------------------------------------------------------------------------
// CategorySet
// ----------------------------------------------------------------------------

/// Ordered, duplicate-free list of category labels. Index order is the
/// contract every file format refers to.
class CategorySet {
 public:
  explicit CategorySet(std::vector<std::string> names);

  /// The 11 road-user categories: car, bus, truck, train, bike, motor,
  /// person, rider, traffic sign, traffic light, traffic cone.
  static const CategorySet& defaults();

  std::size_t size() const noexcept { return names_.size(); }
  const std::string& name(std::size_t index) const;
  std::optional<std::size_t> index_of(std::string_view name) const;
  const std::vector<std::string>& names() const noexcept { return names_; }

  bool operator==(const CategorySet&) const = default;

 private:
  std::vector<std::string> names_;
};

// ----------------------------------------------------------------------------
// BoundingBox
// ----------------------------------------------------------------------------

/// Axis-aligned box in absolute pixels, top-left corner plus extent.
/// Degenerate boxes are rejected at construction.
class BoundingBox {
 public:
  BoundingBox(double x, double y, double w, double h);

  double x() const noexcept { return x_; }
  double y() const noexcept { return y_; }
  double w() const noexcept { return w_; }
  double h() const noexcept { return h_; }
  double right() const noexcept { return x_ + w_; }
  double bottom() const noexcept { return y_ + h_; }
  double area() const noexcept { return w_ * h_; }

  bool operator==(const BoundingBox&) const = default;

 private:
  double x_;
  double y_;
  double w_;
  double h_;
};

/// Intersection over union; symmetric, 0 for disjoint boxes, 1 for identical ones.
double iou(const BoundingBox& a, const BoundingBox& b) noexcept;

/// Componentwise arithmetic mean of a non-empty set of boxes.
BoundingBox mean_box(std::span<const BoundingBox> boxes);

// ----------------------------------------------------------------------------
// Detection / ground truth
// ----------------------------------------------------------------------------

/// One raw output of a single ensemble member. Class probabilities are
/// independent binary events, so they need not sum to one.
struct Detection {
  BoundingBox box;
  std::vector<double> class_probs;
  double objectness = 1.0;
  std::size_t model_index = 0;
  std::size_t source_order = 0;

  /// Argmax of class_probs; ties go to the lower index.
  std::size_t winning_label() const;
  /// objectness * max(class_probs)
  double score() const;

  bool operator==(const Detection&) const = default;
};

/// Throws InvariantError unless every probability is finite and in [0,1].
void validate_probabilities(std::span<const double> probs);

/// Index of the largest entry, lowest index on ties. Requires non-empty input.
std::size_t argmax(std::span<const double> values);

struct GroundTruthObject {
  std::size_t category = 0;
  BoundingBox box;
  bool hard = false;  // f_h

  bool operator==(const GroundTruthObject&) const = default;
};

// ----------------------------------------------------------------------------
// SubsetTag
// ----------------------------------------------------------------------------

enum class PrimaryLabel { environment, object };
enum class SecondaryLabel { rain, snow, particulate, illumination, common, uncommon };
enum class TertiaryLabel { natural, handcraft, appearance, posture };

/// Trigger-condition path such as "environment/rain/natural" or
/// "object/uncommon". Only the parent/child combinations of the
/// trigger-condition taxonomy are constructible.
class SubsetTag {
 public:
  SubsetTag(PrimaryLabel primary, SecondaryLabel secondary,
            std::optional<TertiaryLabel> tertiary);

  static SubsetTag parse(std::string_view text);
  static bool is_valid(PrimaryLabel primary, SecondaryLabel secondary,
                       std::optional<TertiaryLabel> tertiary) noexcept;

  PrimaryLabel primary() const noexcept { return primary_; }
  SecondaryLabel secondary() const noexcept { return secondary_; }
  std::optional<TertiaryLabel> tertiary() const noexcept { return tertiary_; }

  std::string to_string() const;

  bool operator==(const SubsetTag&) const = default;

 private:
  PrimaryLabel primary_;
  SecondaryLabel secondary_;
  std::optional<TertiaryLabel> tertiary_;
};

/// Aggregation rows of the subset breakdown (besides the total): the two
/// primary subsets and the two environment tertiary kinds.
struct SubsetGroup {
  std::string_view name;
  bool (*contains)(const SubsetTag&);
};
std::span<const SubsetGroup> subset_groups() noexcept;

std::string_view to_string(PrimaryLabel v) noexcept;
std::string_view to_string(SecondaryLabel v) noexcept;
std::string_view to_string(TertiaryLabel v) noexcept;

// ----------------------------------------------------------------------------
// Frame
// ----------------------------------------------------------------------------

struct ImageSize {
  int width = 0;
  int height = 0;

  bool operator==(const ImageSize&) const = default;
};

struct Frame {
  std::string frame_id;
  ImageSize image;
  std::optional<SubsetTag> subset;
  std::vector<GroundTruthObject> ground_truth;

  bool operator==(const Frame&) const = default;
};

/// Throws InvariantError on an empty id or non-positive image size.
void validate_frame(const Frame& frame);

}  // namespace sotif
