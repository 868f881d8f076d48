#pragma once

// Stage runners shared by the CLI and the tests. Each stage reads and writes
// plain files; run_pipeline chains them in memory through the same
// serialized form so its output matches the staged route byte for byte.

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sotif/annotation_io.hpp"
#include "sotif/core.hpp"
#include "sotif/detection_metrics.hpp"
#include "sotif/ensemble_merge.hpp"
#include "sotif/entropy.hpp"
#include "sotif/protocol.hpp"

namespace sotif::pipeline {

namespace fs = std::filesystem;

struct RunConfig {
  merge::MergeConfig merge;
  entropy::EntropyConfig entropy;
  eval::ProtocolConfig protocol;
  metrics::MetricConfig metrics;
  CategorySet categories = CategorySet::defaults();
  std::size_t threads = 1;

  void validate() const;
};

/// SOTIF_THREADS when set to a positive integer, else 1.
std::size_t default_threads();

/// Runs fn(0..n-1) on up to `threads` workers. If any call throws, the
/// exception from the lowest index is rethrown after all workers finish.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

struct StageSummary {
  std::size_t frames = 0;
  std::size_t objects = 0;
};

/// detections/model_<t>/<id>.json -> out/<id>.json
StageSummary run_merge(const fs::path& detections_dir, const fs::path& out_dir, const RunConfig& config);

/// merged/<id>.json -> out/<id>.json
StageSummary run_quantify(const fs::path& merged_dir, const fs::path& out_dir, const RunConfig& config);

/// Serialized merged and entropy documents of one frame.
struct FrameArtifacts {
  std::string merged;
  std::string entropy;
};

FrameArtifacts process_frame(const io::EnsembleDetections& detections, const RunConfig& config);

struct Evaluation {
  std::vector<eval::ProtocolReport> groups;  // total + subset groups at theta_w
  std::vector<eval::ProtocolReport> sweep;
  std::optional<double> far_turning_point;
  std::vector<metrics::MetricsSummary> metrics;
  entropy::EntropyHeader header;  // as recorded by the entropy files
  std::size_t frames = 0;

  std::string report_json(const RunConfig& config) const;
  std::string metrics_csv(const CategorySet& categories) const;
  std::string sweep_csv() const;
  std::string sweep_svg() const;
};

/// `entropy` is aligned with dataset.frames; a missing entry means the frame
/// has no merged objects.
Evaluation evaluate(const io::Dataset& dataset, const std::vector<std::optional<entropy::EntropyDocument>>& entropy,
                    const RunConfig& config);

/// Loads the dataset and entropy/<id>.json files. Entropy files whose frame is
/// not in the dataset are an error.
Evaluation evaluate_files(const fs::path& manifest, const fs::path& entropy_dir, const RunConfig& config);

/// report.json, metrics.csv, sweep.csv, sweep.svg
void write_evaluation(const Evaluation& evaluation, const fs::path& out_dir, const RunConfig& config);

/// sweep.csv and sweep.svg only.
void write_sweep(const Evaluation& evaluation, const fs::path& out_dir);

/// merge -> quantify -> evaluate. Writes merged/, entropy/ and the
/// evaluation files under out_dir.
Evaluation run_pipeline(const fs::path& manifest, const fs::path& detections_dir, const fs::path& out_dir,
                        const RunConfig& config);

}  // namespace sotif::pipeline
