#pragma once

// Perception SOTIF entropy of merged ensemble detections.
//
//   p_c = (1/T) * sum_t p(y = c | x, W_t)                 fused probability
//   H*  = -sum_c [p_c log p_c + (1 - p_c) log(1 - p_c)]   binary-entropy sum
//   H   = H* * (1 + f_p * (T - d))                        miss/ghost penalty
//
// An object is warned when H > theta_w.

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sotif/core.hpp"
#include "sotif/ensemble_merge.hpp"

namespace sotif::entropy {

enum class LogBase { two, e };
enum class MissingSamplePolicy {
  zero_fill,          // divide by T: non-detecting models contribute 0
  contributing_only,  // divide by d
};

std::string_view to_string(LogBase b) noexcept;
std::string_view to_string(MissingSamplePolicy p) noexcept;
LogBase parse_log_base(std::string_view text);
MissingSamplePolicy parse_policy(std::string_view text);

struct EntropyConfig {
  double penalty_factor = 0.1;  // f_p
  double theta_w = 1.0;
  LogBase log_base = LogBase::two;
  MissingSamplePolicy policy = MissingSamplePolicy::zero_fill;

  void validate() const;
};

struct FusedProbabilities {
  std::vector<double> p;
};

struct EntropyResult {
  double h_star = 0.0;
  double h = 0.0;
  std::size_t support = 0;  // d
  bool warned = false;
};

/// Requires 1 <= d <= T where d = member_probs.size(); all members length C.
FusedProbabilities fuse_probabilities(std::span<const std::vector<double>> member_probs, std::size_t models,
                                      MissingSamplePolicy policy);

/// Entropy of the binary distribution [p, 1-p]; 0 log 0 = 0, p clamped to [0,1].
double binary_entropy(double p, LogBase base) noexcept;

double entropy_h_star(const FusedProbabilities& fused, LogBase base = LogBase::two) noexcept;

/// H = H* (1 + f_p (T - d)). Throws InvariantError unless 1 <= d <= T.
double entropy_h(double h_star, std::size_t support, std::size_t models, double penalty_factor);

/// Strict: a tie with the threshold is not a warning.
inline bool is_warned(double h, double theta_w) noexcept { return h > theta_w; }

struct QuantifiedObject {
  BoundingBox box;
  std::size_t winning_label = 0;
  std::vector<double> fused;  // p
  EntropyResult entropy;

  /// max_c p_c, used to rank objects for matching and AP.
  double confidence() const;
};

std::vector<QuantifiedObject> quantify_frame(std::span<const merge::MergedObject> objects, std::size_t models,
                                             const EntropyConfig& config);

// entropy/<frame_id>.json
struct EntropyHeader {
  std::size_t models = 5;
  std::size_t num_categories = 11;
  EntropyConfig config;
};

std::string write_entropy_document(std::span<const QuantifiedObject> objects, const EntropyHeader& header);

struct EntropyDocument {
  EntropyHeader header;
  std::vector<QuantifiedObject> objects;
};

EntropyDocument parse_entropy_document(std::string_view document, const std::string& file = "<entropy>");

}  // namespace sotif::entropy
