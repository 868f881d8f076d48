#include "sotif/annotation_io.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include "json.hpp"
#include "sotif/json_writer.hpp"

namespace sotif::io {

using nlohmann::json;

namespace {

std::string line_loc(std::size_t line) { return "line " + std::to_string(line); }
std::string record_loc(const std::string& what, std::size_t index) {
  return what + " " + std::to_string(index);
}

bool parse_double(std::string_view tok, double& out) {
  auto res = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return res.ec == std::errc() && res.ptr == tok.data() + tok.size() && std::isfinite(out);
}

bool parse_int(std::string_view tok, long long& out) {
  auto res = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return res.ec == std::errc() && res.ptr == tok.data() + tok.size();
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    if (i >= line.size()) break;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
    out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

json parse_json(std::string_view document, const std::string& file) {
  try {
    return json::parse(document.begin(), document.end());
  } catch (const json::parse_error& e) {
    throw ParseError(file, "byte " + std::to_string(e.byte), "malformed JSON");
  }
}

/// Parses an object and rejects duplicate keys at depth 1.
json parse_json_unique_keys(std::string_view document, const std::string& file) {
  std::set<std::string> seen;
  std::string duplicate;
  json::parser_callback_t cb = [&](int depth, json::parse_event_t event, json& parsed) {
    if (event == json::parse_event_t::key && depth == 1) {
      const auto k = parsed.get<std::string>();
      if (!seen.insert(k).second && duplicate.empty()) duplicate = k;
    }
    return true;
  };
  json j;
  try {
    j = json::parse(document.begin(), document.end(), cb);
  } catch (const json::parse_error& e) {
    throw ParseError(file, "byte " + std::to_string(e.byte), "malformed JSON");
  }
  if (!duplicate.empty()) throw ParseError(file, "key '" + duplicate + "'", "duplicate frame id");
  return j;
}

double require_number(const json& j, const char* key, const std::string& file,
                      const std::string& loc) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_number()) {
    throw ParseError(file, loc, std::string("missing or non-numeric \"") + key + "\"");
  }
  return it->get<double>();
}

BoundingBox parse_bbox(const json& j, const std::string& file, const std::string& loc) {
  auto it = j.find("bbox");
  if (it == j.end() || !it->is_array() || it->size() != 4) {
    throw ParseError(file, loc, "\"bbox\" must be an array of 4 numbers");
  }
  double v[4];
  for (std::size_t i = 0; i < 4; ++i) {
    if (!(*it)[i].is_number()) throw ParseError(file, loc, "\"bbox\" must be an array of 4 numbers");
    v[i] = (*it)[i].get<double>();
    if (!std::isfinite(v[i])) throw ParseError(file, loc, "bbox values must be finite");
  }
  if (v[2] <= 0.0 || v[3] <= 0.0) throw ParseError(file, loc, "bbox must have positive width and height");
  return BoundingBox(v[0], v[1], v[2], v[3]);
}

std::string stem_of(const std::string& file_name) { return fs::path(file_name).stem().string(); }

}  // namespace

// ----------------------------------------------------------------------------
// Extended YOLO
// ----------------------------------------------------------------------------

std::vector<GroundTruthObject> parse_yolo_ext(std::string_view contents, ImageSize image,
                                              const CategorySet& categories, const std::string& file) {
  if (image.width <= 0 || image.height <= 0) {
    throw ParseError(file, "image", "image size must be positive");
  }
  std::vector<GroundTruthObject> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < contents.size()) {
    auto nl = contents.find('\n', pos);
    std::string_view line = contents.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? contents.size() : nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    const auto fields = split_ws(line);
    if (fields.empty()) continue;

    const auto loc = line_loc(line_no);
    if (fields.size() != 6) {
      throw ParseError(file, loc, "expected 6 fields, got " + std::to_string(fields.size()));
    }
    long long cls = 0;
    if (!parse_int(fields[0], cls) || cls < 0) throw ParseError(file, loc, "class_id must be a non-negative integer");
    if (static_cast<std::size_t>(cls) >= categories.size()) {
      throw ParseError(file, loc, "class_id " + std::to_string(cls) + " >= C=" + std::to_string(categories.size()));
    }
    double v[4];
    for (int i = 0; i < 4; ++i) {
      if (!parse_double(fields[1 + i], v[i])) throw ParseError(file, loc, "coordinate is not a number");
      if (v[i] < 0.0 || v[i] > 1.0) throw ParseError(file, loc, "coordinate outside [0,1]");
    }
    long long hard = 0;
    if (!parse_int(fields[5], hard) || (hard != 0 && hard != 1)) {
      throw ParseError(file, loc, "f_h must be 0 or 1");
    }
    if (v[2] <= 0.0 || v[3] <= 0.0) throw ParseError(file, loc, "box width and height must be positive");

    const double w = v[2] * image.width;
    const double h = v[3] * image.height;
    const double x = v[0] * image.width - w / 2.0;
    const double y = v[1] * image.height - h / 2.0;
    out.push_back({static_cast<std::size_t>(cls), BoundingBox(x, y, w, h), hard == 1});
  }
  return out;
}

std::string write_yolo_ext(std::span<const GroundTruthObject> objects, ImageSize image) {
  std::string out;
  const double iw = image.width;
  const double ih = image.height;
  for (const auto& o : objects) {
    out += std::to_string(o.category);
    for (double v : {(o.box.x() + o.box.w() / 2.0) / iw, (o.box.y() + o.box.h() / 2.0) / ih,
                     o.box.w() / iw, o.box.h() / ih}) {
      out += ' ';
      out += format_fixed(v);
    }
    out += o.hard ? " 1\n" : " 0\n";
  }
  return out;
}

// ----------------------------------------------------------------------------
// Extended COCO
// ----------------------------------------------------------------------------

CocoParseResult parse_coco_ext(std::string_view document, const CategorySet& categories,
                               const std::string& file) {
  const json doc = parse_json(document, file);
  if (!doc.is_object()) throw ParseError(file, "root", "COCO document must be a JSON object");
  for (const char* key : {"images", "annotations", "categories"}) {
    if (!doc.contains(key) || !doc[key].is_array()) {
      throw ParseError(file, "root", std::string("missing array \"") + key + "\"");
    }
  }

  CocoParseResult result;
  result.dataset.categories = categories;

  std::unordered_map<long long, std::size_t> category_map;
  for (std::size_t i = 0; i < doc["categories"].size(); ++i) {
    const auto& c = doc["categories"][i];
    const auto loc = record_loc("category", i);
    if (!c.is_object() || !c.contains("id") || !c["id"].is_number_integer() || !c.contains("name") ||
        !c["name"].is_string()) {
      throw ParseError(file, loc, "category needs integer \"id\" and string \"name\"");
    }
    const auto name = c["name"].get<std::string>();
    auto idx = categories.index_of(name);
    if (!idx) throw ParseError(file, loc, "category '" + name + "' not in the configured category set");
    if (!category_map.emplace(c["id"].get<long long>(), *idx).second) {
      throw ParseError(file, loc, "duplicate category id");
    }
  }

  std::unordered_map<long long, std::size_t> image_index;
  std::vector<Frame>& frames = result.dataset.frames;
  for (std::size_t i = 0; i < doc["images"].size(); ++i) {
    const auto& im = doc["images"][i];
    const auto loc = record_loc("image", i);
    if (!im.is_object() || !im.contains("id") || !im["id"].is_number_integer()) {
      throw ParseError(file, loc, "image is missing an integer \"id\"");
    }
    const auto id = im["id"].get<long long>();
    if (image_index.count(id)) throw ParseError(file, loc, "duplicate image id " + std::to_string(id));
    Frame frame;
    if (im.contains("frame_id") && im["frame_id"].is_string()) {
      frame.frame_id = im["frame_id"].get<std::string>();
    } else if (im.contains("file_name") && im["file_name"].is_string()) {
      frame.frame_id = stem_of(im["file_name"].get<std::string>());
    } else {
      throw ParseError(file, loc, "image needs \"file_name\" or \"frame_id\"");
    }
    if (frame.frame_id.empty()) throw ParseError(file, loc, "empty frame id");
    frame.image.width = static_cast<int>(require_number(im, "width", file, loc));
    frame.image.height = static_cast<int>(require_number(im, "height", file, loc));
    if (frame.image.width <= 0 || frame.image.height <= 0) {
      throw ParseError(file, loc, "image size must be positive");
    }
    if (im.contains("subset")) {
      if (!im["subset"].is_string()) throw ParseError(file, loc, "\"subset\" must be a string");
      try {
        frame.subset = SubsetTag::parse(im["subset"].get<std::string>());
      } catch (const InvariantError& e) {
        throw ParseError(file, loc, e.what());
      }
    }
    image_index.emplace(id, frames.size());
    frames.push_back(std::move(frame));
  }
  {
    std::set<std::string> ids;
    for (std::size_t i = 0; i < frames.size(); ++i) {
      if (!ids.insert(frames[i].frame_id).second) {
        throw ParseError(file, record_loc("image", i), "duplicate frame id '" + frames[i].frame_id + "'");
      }
    }
  }

  for (std::size_t i = 0; i < doc["annotations"].size(); ++i) {
    const auto& a = doc["annotations"][i];
    const auto loc = record_loc("annotation", i);
    if (!a.is_object()) throw ParseError(file, loc, "annotation must be an object");
    if (!a.contains("image_id") || !a["image_id"].is_number_integer()) {
      throw ParseError(file, loc, "missing integer \"image_id\"");
    }
    auto im = image_index.find(a["image_id"].get<long long>());
    if (im == image_index.end()) throw ParseError(file, loc, "image_id refers to no image");
    if (!a.contains("category_id") || !a["category_id"].is_number_integer()) {
      throw ParseError(file, loc, "missing integer \"category_id\"");
    }
    auto cat = category_map.find(a["category_id"].get<long long>());
    if (cat == category_map.end()) throw ParseError(file, loc, "category_id refers to no category");
    const BoundingBox box = parse_bbox(a, file, loc);
    bool hard = false;
    if (auto h = a.find("hard"); h == a.end()) {
      result.warnings.push_back({file, loc, "missing \"hard\"; defaulting to 0"});
    } else {
      if (!h->is_number_integer() || (h->get<long long>() != 0 && h->get<long long>() != 1)) {
        throw ParseError(file, loc, "f_h must be 0 or 1");
      }
      hard = h->get<long long>() == 1;
    }
    frames[im->second].ground_truth.push_back({cat->second, box, hard});
  }

  std::stable_sort(frames.begin(), frames.end(),
                   [](const Frame& a, const Frame& b) { return a.frame_id < b.frame_id; });
  return result;
}

std::string write_coco_ext(const Dataset& dataset) {
  JsonWriter w(2);
  w.begin_object();
  w.key("info").begin_object();
  w.field("description", "extended COCO annotations with per-object hard flag");
  w.field("hard_attribute", "hard");
  w.end_object();

  w.key("images").begin_array();
  for (std::size_t i = 0; i < dataset.frames.size(); ++i) {
    const auto& f = dataset.frames[i];
    w.begin_object();
    w.field("id", i + 1);
    w.field("file_name", f.frame_id + ".jpg");
    w.field("frame_id", f.frame_id);
    w.field("width", f.image.width);
    w.field("height", f.image.height);
    if (f.subset) w.field("subset", f.subset->to_string());
    w.end_object();
  }
  w.end_array();

  w.key("annotations").begin_array();
  std::size_t ann_id = 1;
  for (std::size_t i = 0; i < dataset.frames.size(); ++i) {
    for (const auto& o : dataset.frames[i].ground_truth) {
      w.begin_object();
      w.field("id", ann_id++);
      w.field("image_id", i + 1);
      w.field("category_id", o.category + 1);
      const double bbox[4] = {o.box.x(), o.box.y(), o.box.w(), o.box.h()};
      w.key("bbox").array(bbox);
      w.field("area", o.box.area());
      w.field("iscrowd", 0);
      w.field("hard", o.hard ? 1 : 0);
      w.end_object();
    }
  }
  w.end_array();

  w.key("categories").begin_array();
  for (std::size_t c = 0; c < dataset.categories.size(); ++c) {
    w.begin_object();
    w.field("id", c + 1);
    w.field("name", dataset.categories.name(c));
    w.end_object();
  }
  w.end_array();
  w.end_object();
  return w.str();
}

// ----------------------------------------------------------------------------
// Manifest
// ----------------------------------------------------------------------------

DatasetManifest parse_manifest(std::string_view document, const fs::path& root, const std::string& file,
                               bool check_files) {
  const json doc = parse_json_unique_keys(document, file);
  if (!doc.is_object()) throw ParseError(file, "root", "manifest must map frame_id to entries");
  DatasetManifest manifest;
  manifest.root = root;
  for (const auto& [frame_id, e] : doc.items()) {
    const std::string loc = "frame '" + frame_id + "'";
    if (frame_id.empty()) throw ParseError(file, loc, "empty frame id");
    if (!e.is_object()) throw ParseError(file, loc, "entry must be an object");
    if (!e.contains("image") || !e["image"].is_object()) throw ParseError(file, loc, "missing \"image\" object");
    const ImageSize image{static_cast<int>(require_number(e["image"], "w", file, loc)),
                          static_cast<int>(require_number(e["image"], "h", file, loc))};
    if (image.width <= 0 || image.height <= 0) throw ParseError(file, loc, "image size must be positive");
    if (!e.contains("subset") || !e["subset"].is_string()) throw ParseError(file, loc, "missing \"subset\" string");
    std::optional<SubsetTag> subset;
    try {
      subset = SubsetTag::parse(e["subset"].get<std::string>());
    } catch (const InvariantError& err) {
      throw ParseError(file, loc, err.what());
    }
    if (!e.contains("annotations") || !e["annotations"].is_string()) {
      throw ParseError(file, loc, "missing \"annotations\" path");
    }
    ManifestEntry entry{frame_id, image, *subset, {}};
    entry.annotations = e["annotations"].get<std::string>();
    if (check_files && !fs::exists(root / entry.annotations)) {
      throw ParseError(file, loc, "annotation file '" + entry.annotations + "' does not exist");
    }
    manifest.entries.push_back(std::move(entry));
  }
  // nlohmann objects iterate in key order, so entries are already sorted.
  return manifest;
}

DatasetManifest load_manifest(const fs::path& manifest_path) {
  return parse_manifest(read_file(manifest_path), manifest_path.parent_path(), manifest_path.string());
}

std::string write_manifest(const DatasetManifest& manifest) {
  auto entries = manifest.entries;
  std::sort(entries.begin(), entries.end(),
            [](const ManifestEntry& a, const ManifestEntry& b) { return a.frame_id < b.frame_id; });
  JsonWriter w(2);
  w.begin_object();
  for (const auto& e : entries) {
    w.key(e.frame_id).begin_object();
    w.key("image").begin_object().field("w", e.image.width).field("h", e.image.height).end_object();
    w.field("subset", e.subset.to_string());
    w.field("annotations", e.annotations);
    w.end_object();
  }
  w.end_object();
  return w.str();
}

LoadedDataset load_dataset(const DatasetManifest& manifest, const CategorySet& categories) {
  LoadedDataset out;
  out.dataset.categories = categories;
  std::map<std::string, CocoParseResult> coco_cache;
  for (const auto& e : manifest.entries) {
    const fs::path path = manifest.root / e.annotations;
    Frame frame{e.frame_id, e.image, e.subset, {}};
    if (path.extension() == ".json") {
      auto it = coco_cache.find(path.string());
      if (it == coco_cache.end()) {
        it = coco_cache.emplace(path.string(), parse_coco_ext(read_file(path), categories, path.string())).first;
        out.warnings.insert(out.warnings.end(), it->second.warnings.begin(), it->second.warnings.end());
      }
      const auto& frames = it->second.dataset.frames;
      auto f = std::find_if(frames.begin(), frames.end(), [&](const Frame& x) { return x.frame_id == e.frame_id; });
      if (f == frames.end()) throw ParseError(path.string(), "frame '" + e.frame_id + "'", "frame not in COCO document");
      frame.ground_truth = f->ground_truth;
    } else {
      frame.ground_truth = parse_yolo_ext(read_file(path), e.image, categories, path.string());
    }
    out.dataset.frames.push_back(std::move(frame));
  }
  return out;
}

LoadedDataset load_dataset(const fs::path& manifest_path, const CategorySet& categories) {
  return load_dataset(load_manifest(manifest_path), categories);
}

void save_yolo_dataset(const Dataset& dataset, const fs::path& dir) {
  fs::create_directories(dir / "labels");
  DatasetManifest manifest;
  manifest.root = dir;
  for (const auto& f : dataset.frames) {
    if (!f.subset) throw InvariantError("frame '" + f.frame_id + "' has no subset tag; YOLO manifests require one");
    const std::string rel = "labels/" + f.frame_id + ".txt";
    write_file(dir / rel, write_yolo_ext(f.ground_truth, f.image));
    manifest.entries.push_back({f.frame_id, f.image, *f.subset, rel});
  }
  write_file(dir / "manifest.json", write_manifest(manifest));
}

// ----------------------------------------------------------------------------
// Detections
// ----------------------------------------------------------------------------

std::vector<Detection> parse_detection_document(std::string_view document, std::size_t model_index,
                                                std::size_t num_categories, const std::string& file) {
  const json doc = parse_json(document, file);
  if (!doc.is_array()) throw ParseError(file, "root", "detection file must be a JSON array");
  const std::string model = "model " + std::to_string(model_index);
  std::vector<Detection> out;
  out.reserve(doc.size());
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& r = doc[i];
    const auto loc = model + ", " + record_loc("record", i);
    if (!r.is_object()) throw ParseError(file, loc, "record must be an object");
    const BoundingBox box = parse_bbox(r, file, loc);
    const double objectness = require_number(r, "objectness", file, loc);
    if (!(objectness >= 0.0 && objectness <= 1.0)) throw ParseError(file, loc, "objectness outside [0,1]");
    auto cp = r.find("class_probs");
    if (cp == r.end() || !cp->is_array()) throw ParseError(file, loc, "missing \"class_probs\" array");
    if (cp->size() != num_categories) {
      throw ParseError(file, loc, "class_probs length " + std::to_string(cp->size()) +
                                      " \xE2\x89\xA0 C=" + std::to_string(num_categories));
    }
    std::vector<double> probs;
    probs.reserve(num_categories);
    for (const auto& p : *cp) {
      if (!p.is_number()) throw ParseError(file, loc, "class_probs entries must be numbers");
      const double v = p.get<double>();
      if (!(v >= 0.0 && v <= 1.0)) throw ParseError(file, loc, "probability outside [0,1]");
      probs.push_back(v);
    }
    out.push_back(Detection{box, std::move(probs), objectness, model_index, i});
  }
  return out;
}

std::string write_detection_document(std::span<const Detection> detections) {
  JsonWriter w(0);
  w.begin_array();
  for (const auto& d : detections) {
    w.begin_object();
    const double bbox[4] = {d.box.x(), d.box.y(), d.box.w(), d.box.h()};
    w.key("bbox").array(bbox);
    w.field("objectness", d.objectness);
    w.key("class_probs").array(d.class_probs);
    w.end_object();
  }
  w.end_array();
  return w.str();
}

fs::path detection_path(const fs::path& detections_dir, std::size_t model_index, const std::string& frame_id) {
  return detections_dir / ("model_" + std::to_string(model_index)) / (frame_id + ".json");
}

EnsembleDetections load_ensemble_frame(const fs::path& detections_dir, const std::string& frame_id,
                                       std::size_t models, std::size_t num_categories) {
  EnsembleDetections out{frame_id, std::vector<std::vector<Detection>>(models)};
  for (std::size_t t = 0; t < models; ++t) {
    const auto path = detection_path(detections_dir, t, frame_id);
    std::ifstream in(path, std::ios::binary);
    if (!in) continue;  // no file: this model detected nothing
    std::ostringstream ss;
    ss << in.rdbuf();
    out.per_model[t] = parse_detection_document(ss.str(), t, num_categories, path.string());
  }
  return out;
}

std::vector<std::string> list_detection_frames(const fs::path& detections_dir, std::size_t models) {
  if (!fs::is_directory(detections_dir)) {
    throw ParseError(detections_dir.string(), "directory", "detections directory does not exist");
  }
  std::set<std::string> ids;
  for (std::size_t t = 0; t < models; ++t) {
    const auto dir = detections_dir / ("model_" + std::to_string(t));
    if (!fs::is_directory(dir)) continue;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_regular_file() && entry.path().extension() == ".json") ids.insert(entry.path().stem().string());
    }
  }
  return {ids.begin(), ids.end()};
}

// ----------------------------------------------------------------------------
// Statistics
// ----------------------------------------------------------------------------

DatasetStats dataset_stats(const Dataset& dataset) {
  DatasetStats s;
  std::map<std::string, SubsetStats> groups;
  for (const auto& f : dataset.frames) {
    std::size_t key = 0;
    for (const auto& o : f.ground_truth) key += o.hard ? 1 : 0;
    const std::size_t normal = f.ground_truth.size() - key;
    s.frames += 1;
    s.key_objects += key;
    s.normal_objects += normal;
    const std::string tag = f.subset ? f.subset->to_string() : "untagged";
    auto& g = groups[tag];
    g.subset = tag;
    g.frames += 1;
    g.key_objects += key;
    g.normal_objects += normal;
  }
  if (s.frames > 0) {
    s.key_per_frame = static_cast<double>(s.key_objects) / static_cast<double>(s.frames);
    s.normal_per_frame = static_cast<double>(s.normal_objects) / static_cast<double>(s.frames);
  }
  for (auto& [_, g] : groups) s.by_subset.push_back(g);
  return s;
}

std::string stats_to_json(const DatasetStats& s) {
  JsonWriter w(2);
  w.begin_object();
  w.field("frames", s.frames);
  w.field("key_objects", s.key_objects);
  w.field("normal_objects", s.normal_objects);
  w.field("key_per_frame", s.key_per_frame);
  w.field("normal_per_frame", s.normal_per_frame);
  w.key("by_subset").begin_array();
  for (const auto& g : s.by_subset) {
    w.begin_object();
    w.field("subset", g.subset);
    w.field("frames", g.frames);
    w.field("key_objects", g.key_objects);
    w.field("normal_objects", g.normal_objects);
    w.end_object();
  }
  w.end_array();
  w.end_object();
  return w.str();
}

std::string stats_to_text(const DatasetStats& s) {
  std::ostringstream out;
  out << "frames:           " << s.frames << "\n"
      << "key objects:      " << s.key_objects << " (" << format_fixed(s.key_per_frame, 2) << " per frame)\n"
      << "normal objects:   " << s.normal_objects << " (" << format_fixed(s.normal_per_frame, 2)
      << " per frame)\n";
  for (const auto& g : s.by_subset) {
    out << "  " << g.subset << ": frames=" << g.frames << " key=" << g.key_objects
        << " normal=" << g.normal_objects << "\n";
  }
  return out.str();
}

// ----------------------------------------------------------------------------
// Files
// ----------------------------------------------------------------------------

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path.string(), "file", "cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, std::string_view contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace sotif::io
