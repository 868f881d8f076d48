#pragma once

// Seeded generator of ground-truth scenes and T simulated noisy detectors.
// Output uses the same on-disk formats as real data, so every pipeline
// stage can be exercised end to end.

#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

#include "sotif/annotation_io.hpp"
#include "sotif/core.hpp"

namespace sotif::sim {

struct SubsetSpec {
  SubsetTag tag;
  double weight = 1.0;
  double hard_fraction = 0.5;
};

struct SimConfig {
  std::uint64_t seed = 1;
  std::size_t frames = 100;
  std::size_t objects_min = 1;
  std::size_t objects_max = 6;
  ImageSize image{1280, 720};
  double size_min = 0.05;  // box extent as a fraction of the image side
  double size_max = 0.25;
  double max_overlap = 0.3;  // ground-truth boxes are resampled above this mutual IoU

  double hard_fraction = 0.5;  // used when `subsets` is empty
  std::vector<SubsetSpec> subsets;

  double detect_prob_easy = 0.95;
  double detect_prob_hard = 0.6;
  double box_jitter = 0.05;      // max relative displacement of each box field
  double confusion_rate = 0.3;   // applies to hard objects only
  std::size_t confusable_a = 6;  // person
  std::size_t confusable_b = 10; // traffic cone
  double ghost_rate = 0.05;       // Poisson mean per model per frame
  // Probability on the runner-up class, as a uniform fraction in [0, rival) of the confidence.
  double rival_easy = 0.1;
  double rival_hard = 0.3;
  double model_spread = 0.05;  // per-model deviation from the object's confidence
  // Fraction of easy objects on which every model splits its vote with the lookalike class.
  double ambiguous_rate = 0.1;
  double ambiguous_confidence_min = 0.45;
  double ambiguous_confidence_max = 0.65;

  double easy_confidence_min = 0.85;
  double easy_confidence_max = 0.99;
  double hard_confidence_min = 0.5;
  double hard_confidence_max = 0.9;
  double ghost_confidence_min = 0.3;
  double ghost_confidence_max = 0.7;
  double background_prob_max = 0.005;
  double objectness_min = 0.9;

  std::size_t models = 5;
  CategorySet categories = CategorySet::defaults();

  void validate() const;
};

/// Missing keys keep their defaults; unknown keys are rejected.
SimConfig parse_sim_config(std::string_view json_document, const std::string& file = "<sim-config>");

struct SimOutput {
  io::Dataset dataset;
  std::vector<io::EnsembleDetections> detections;  // one per frame, same order
  /// origin[frame][model][k]: ground-truth index behind detection k, or -1 for a ghost.
  std::vector<std::vector<std::vector<int>>> origin;
};

SimOutput generate(const SimConfig& config);

/// Writes manifest.json, labels/ and detections/model_<t>/ under `dir`.
void write_simulation(const SimOutput& output, const std::filesystem::path& dir);

}  // namespace sotif::sim
