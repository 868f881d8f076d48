#pragma once

// Readers and writers for the extended annotation formats (YOLO text with a
// trailing hard flag, COCO JSON with a per-annotation "hard" attribute), the
// dataset manifest, and per-model detection files.

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sotif/core.hpp"

namespace sotif::io {

namespace fs = std::filesystem;

struct ParseWarning {
  std::string file;
  std::string location;
  std::string message;
};

/// In-memory dataset: frames sorted by frame_id, one category set.
struct Dataset {
  CategorySet categories = CategorySet::defaults();
  std::vector<Frame> frames;

  bool operator==(const Dataset&) const = default;
};

// ----------------------------------------------------------------------------
// Extended YOLO
// ----------------------------------------------------------------------------

/// Parses `class_id x_c y_c w h f_h` lines. Normalized centre boxes become
/// absolute top-left boxes. Blank lines are skipped.
std::vector<GroundTruthObject> parse_yolo_ext(std::string_view contents, ImageSize image,
                                              const CategorySet& categories,
                                              const std::string& file = "<yolo>");

/// One line per object, six decimals for the normalized fields, LF endings.
std::string write_yolo_ext(std::span<const GroundTruthObject> objects, ImageSize image);

// ----------------------------------------------------------------------------
// Extended COCO
// ----------------------------------------------------------------------------

struct CocoParseResult {
  Dataset dataset;
  std::vector<ParseWarning> warnings;
};

/// frame_id is the image's "frame_id" key when present, else the stem of
/// "file_name". An image-level "subset" string carries the trigger tag.
CocoParseResult parse_coco_ext(std::string_view document, const CategorySet& categories,
                               const std::string& file = "<coco>");

std::string write_coco_ext(const Dataset& dataset);

// ----------------------------------------------------------------------------
// Manifest
// ----------------------------------------------------------------------------

struct ManifestEntry {
  std::string frame_id;
  ImageSize image;
  SubsetTag subset;
  std::string annotations;  // relative to the manifest root

  bool operator==(const ManifestEntry&) const = default;
};

struct DatasetManifest {
  fs::path root;
  std::vector<ManifestEntry> entries;  // sorted by frame_id
};

/// Parses manifest.json. When `check_files` is set every referenced
/// annotation file must exist under `root`.
DatasetManifest parse_manifest(std::string_view document, const fs::path& root,
                               const std::string& file = "manifest.json", bool check_files = true);
DatasetManifest load_manifest(const fs::path& manifest_path);
std::string write_manifest(const DatasetManifest& manifest);

struct LoadedDataset {
  Dataset dataset;
  std::vector<ParseWarning> warnings;
};

/// Reads every annotation file the manifest references. ".txt" files are
/// extended YOLO; ".json" files are extended COCO documents looked up by frame_id.
LoadedDataset load_dataset(const DatasetManifest& manifest, const CategorySet& categories);
LoadedDataset load_dataset(const fs::path& manifest_path, const CategorySet& categories);

/// Writes `labels/<frame_id>.txt` and `manifest.json` under `dir`. Every frame needs a subset.
void save_yolo_dataset(const Dataset& dataset, const fs::path& dir);

// ----------------------------------------------------------------------------
// Detections
// ----------------------------------------------------------------------------

struct EnsembleDetections {
  std::string frame_id;
  std::vector<std::vector<Detection>> per_model;  // size T

  std::size_t models() const noexcept { return per_model.size(); }
};

/// One JSON array of {"bbox":[x,y,w,h],"objectness":f,"class_probs":[...]}.
std::vector<Detection> parse_detection_document(std::string_view document, std::size_t model_index,
                                                std::size_t num_categories,
                                                const std::string& file = "<detections>");
std::string write_detection_document(std::span<const Detection> detections);

fs::path detection_path(const fs::path& detections_dir, std::size_t model_index,
                        const std::string& frame_id);

/// A model without a file for this frame contributes an empty list.
EnsembleDetections load_ensemble_frame(const fs::path& detections_dir, const std::string& frame_id,
                                       std::size_t models, std::size_t num_categories);

/// Sorted union of frame ids found under model_0 .. model_<T-1>.
std::vector<std::string> list_detection_frames(const fs::path& detections_dir, std::size_t models);

// ----------------------------------------------------------------------------
// Statistics
// ----------------------------------------------------------------------------

struct SubsetStats {
  std::string subset;
  std::size_t frames = 0;
  std::size_t key_objects = 0;
  std::size_t normal_objects = 0;
};

struct DatasetStats {
  std::size_t frames = 0;
  std::size_t key_objects = 0;     // f_h = 1
  std::size_t normal_objects = 0;  // f_h = 0
  double key_per_frame = 0.0;
  double normal_per_frame = 0.0;
  std::vector<SubsetStats> by_subset;  // sorted by tag string
};

DatasetStats dataset_stats(const Dataset& dataset);
std::string stats_to_json(const DatasetStats& stats);
std::string stats_to_text(const DatasetStats& stats);

// ----------------------------------------------------------------------------
// File helpers
// ----------------------------------------------------------------------------

std::string read_file(const fs::path& path);
/// Creates parent directories, truncates and writes. Throws on failure.
void write_file(const fs::path& path, std::string_view contents);

}  // namespace sotif::io
