#include "sotif/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <map>
#include <set>
#include <thread>

#include "sotif/errors.hpp"
#include "sotif/json_writer.hpp"
#include "sotif/svg_plot.hpp"

namespace sotif::pipeline {

void RunConfig::validate() const {
  merge.validate();
  entropy.validate();
  protocol.validate();
  metrics.validate();
  if (threads == 0) throw InvariantError("threads must be at least 1");
}

std::size_t default_threads() {
  const char* env = std::getenv("SOTIF_THREADS");
  if (env == nullptr || *env == '\0') return 1;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 1) return 1;
  return static_cast<std::size_t>(v);
}

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  const std::size_t workers = std::min(std::max<std::size_t>(threads, 1), n);
  std::vector<std::exception_ptr> errors(n);
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
        break;
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    auto work = [&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n || failed.load()) return;
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
          failed.store(true);
        }
      }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (std::size_t t = 1; t < workers; ++t) pool.emplace_back(work);
    work();
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

// ----------------------------------------------------------------------------
// Merge and quantify
// ----------------------------------------------------------------------------

namespace {

std::string quantify_document(const merge::MergedDocument& merged, const entropy::EntropyConfig& config) {
  const auto objects = entropy::quantify_frame(merged.objects, merged.models, config);
  return entropy::write_entropy_document(objects, {merged.models, merged.num_categories, config});
}

std::vector<fs::path> json_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ParseError(dir.string(), "directory", "directory does not exist");
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

FrameArtifacts process_frame(const io::EnsembleDetections& detections, const RunConfig& config) {
  FrameArtifacts out;
  const auto merged = merge::merge_frame(detections.per_model, config.merge);
  out.merged = merge::write_merged_document(merged, config.merge, config.categories.size());
  const auto parsed = merge::parse_merged_document(out.merged, detections.frame_id);
  out.entropy = quantify_document(parsed, config.entropy);
  return out;
}

StageSummary run_merge(const fs::path& detections_dir, const fs::path& out_dir, const RunConfig& config) {
  config.validate();
  const auto frames = io::list_detection_frames(detections_dir, config.merge.models);
  std::vector<std::size_t> counts(frames.size(), 0);
  parallel_for(frames.size(), config.threads, [&](std::size_t i) {
    const auto det =
        io::load_ensemble_frame(detections_dir, frames[i], config.merge.models, config.categories.size());
    const auto merged = merge::merge_frame(det.per_model, config.merge);
    counts[i] = merged.size();
    io::write_file(out_dir / (frames[i] + ".json"),
                   merge::write_merged_document(merged, config.merge, config.categories.size()));
  });
  StageSummary s;
  s.frames = frames.size();
  for (auto c : counts) s.objects += c;
  return s;
}

StageSummary run_quantify(const fs::path& merged_dir, const fs::path& out_dir, const RunConfig& config) {
  config.validate();
  const auto files = json_files(merged_dir);
  std::vector<std::size_t> counts(files.size(), 0);
  parallel_for(files.size(), config.threads, [&](std::size_t i) {
    const auto doc = merge::parse_merged_document(io::read_file(files[i]), files[i].string());
    if (doc.num_categories != config.categories.size()) {
      throw ParseError(files[i].string(), "header",
                       "C=" + std::to_string(doc.num_categories) + " does not match the category set size " +
                           std::to_string(config.categories.size()));
    }
    counts[i] = doc.objects.size();
    io::write_file(out_dir / files[i].filename(), quantify_document(doc, config.entropy));
  });
  StageSummary s;
  s.frames = files.size();
  for (auto c : counts) s.objects += c;
  return s;
}

// ----------------------------------------------------------------------------
// Evaluation
// ----------------------------------------------------------------------------

namespace {

bool same_header(const entropy::EntropyHeader& a, const entropy::EntropyHeader& b) {
  return a.models == b.models && a.num_categories == b.num_categories &&
         a.config.penalty_factor == b.config.penalty_factor && a.config.log_base == b.config.log_base &&
         a.config.policy == b.config.policy;
}

}  // namespace

Evaluation evaluate(const io::Dataset& dataset, const std::vector<std::optional<entropy::EntropyDocument>>& entropy,
                    const RunConfig& config) {
  config.validate();
  if (entropy.size() != dataset.frames.size()) throw InvariantError("entropy documents must align with frames");
  if (!(dataset.categories == config.categories)) throw InvariantError("dataset categories differ from the run's");

  Evaluation ev;
  ev.frames = dataset.frames.size();
  ev.header = {config.merge.models, config.categories.size(), config.entropy};
  bool have_header = false;
  for (std::size_t i = 0; i < entropy.size(); ++i) {
    if (!entropy[i]) continue;
    const auto& h = entropy[i]->header;
    if (h.num_categories != config.categories.size()) {
      throw ParseError(dataset.frames[i].frame_id, "header",
                       "C=" + std::to_string(h.num_categories) + " does not match the category set size " +
                           std::to_string(config.categories.size()));
    }
    if (!have_header) {
      ev.header = h;
      have_header = true;
    } else if (!same_header(ev.header, h)) {
      throw ParseError(dataset.frames[i].frame_id, "header", "entropy header differs from earlier frames");
    }
  }
  ev.header.config.theta_w = config.entropy.theta_w;
  const double theta = config.entropy.theta_w;

  const std::size_t n = dataset.frames.size();
  std::vector<std::vector<eval::EvaluatedObject>> frame_rows(n);
  std::vector<metrics::FrameEval> frame_evals(n);
  const std::vector<entropy::QuantifiedObject> none;
  parallel_for(n, config.threads, [&](std::size_t i) {
    const auto& f = dataset.frames[i];
    const auto& objects = entropy[i] ? entropy[i]->objects : none;
    frame_rows[i] = eval::match_frame(objects, f.ground_truth, config.protocol, theta, f.frame_id, f.subset);
    auto& fe = frame_evals[i];
    fe.ground_truth = f.ground_truth;
    fe.subset = f.subset;
    fe.detections.reserve(objects.size());
    for (const auto& o : objects) fe.detections.push_back({o.box, o.winning_label, o.fused[o.winning_label]});
  });

  std::vector<eval::EvaluatedObject> rows;
  for (auto& fr : frame_rows) {
    for (auto& r : fr) rows.push_back(std::move(r));
  }
  ev.groups = eval::group_by_subset(rows, theta, config.protocol.policy);
  ev.sweep = eval::sweep_thresholds(rows, config.protocol);
  ev.far_turning_point = eval::far_turning_point(ev.sweep);
  ev.metrics = metrics::summarize_by_subset(frame_evals, config.categories.size(), config.metrics);
  return ev;
}

Evaluation evaluate_files(const fs::path& manifest, const fs::path& entropy_dir, const RunConfig& config) {
  const auto loaded = io::load_dataset(manifest, config.categories);
  const auto& frames = loaded.dataset.frames;
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < frames.size(); ++i) index.emplace(frames[i].frame_id, i);

  const auto files = json_files(entropy_dir);
  std::vector<std::optional<entropy::EntropyDocument>> docs(frames.size());
  std::vector<std::size_t> slot(files.size());
  for (std::size_t k = 0; k < files.size(); ++k) {
    const auto it = index.find(files[k].stem().string());
    if (it == index.end()) {
      throw ParseError(files[k].string(), "file name", "frame is not in the dataset manifest");
    }
    slot[k] = it->second;
  }
  parallel_for(files.size(), config.threads, [&](std::size_t k) {
    docs[slot[k]] = entropy::parse_entropy_document(io::read_file(files[k]), files[k].string());
  });
  return evaluate(loaded.dataset, docs, config);
}

// ----------------------------------------------------------------------------
// Output
// ----------------------------------------------------------------------------

namespace {

void write_protocol(JsonWriter& w, const eval::ProtocolReport& r) {
  w.begin_object();
  w.field("group", r.group);
  w.field("theta_w", r.theta_w);
  w.field("acr", r.acr);
  w.field("far", r.far);
  w.field("cqs", r.cqs);
  w.key("uqs").value_or_inf(r.uqs);
  w.key("counts").begin_object();
  w.field("rows", r.rows);
  w.field("matched", r.matched);
  w.field("missed_gt", r.missed_gt);
  w.field("ghosts", r.ghosts);
  w.field("should_warn", r.should_warn);
  w.field("warned", r.warned);
  w.field("warned_should", r.warned_should);
  w.field("with_entropy", r.with_entropy);
  w.field("consistent", r.consistent);
  w.field("accurate", r.accurate);
  w.field("accurate_warned", r.accurate_warned);
  w.field("inaccurate", r.inaccurate);
  w.field("inaccurate_warned", r.inaccurate_warned);
  w.end_object();
  w.key("cells").begin_array();
  for (auto d : {eval::Difficulty::easy, eval::Difficulty::hard, eval::Difficulty::not_applicable}) {
    for (int acc = 1; acc >= 0; --acc) {
      for (int warned = 0; warned <= 1; ++warned) {
        w.begin_object();
        w.field("difficulty", eval::to_string(d));
        w.field("accurate", acc == 1);
        w.field("warned", warned == 1);
        w.field("count", r.cells[static_cast<std::size_t>(d)][acc][warned]);
        w.end_object();
      }
    }
  }
  w.end_array();
  w.end_object();
}

}  // namespace

std::string Evaluation::report_json(const RunConfig& config) const {
  JsonWriter w(2);
  w.begin_object();
  w.key("header").begin_object();
  w.field("frames", frames);
  w.field("T", header.models);
  w.field("C", header.num_categories);
  w.key("categories").begin_array();
  for (const auto& name : config.categories.names()) w.value(name);
  w.end_array();
  w.field("f_p", header.config.penalty_factor);
  w.field("theta_w", header.config.theta_w);
  w.field("log_base", entropy::to_string(header.config.log_base));
  w.field("policy", entropy::to_string(header.config.policy));
  w.field("should_warn", eval::to_string(config.protocol.policy));
  w.field("match_iou", config.protocol.match_iou);
  w.key("sweep").begin_object();
  w.field("min", config.protocol.sweep_min);
  w.field("max", config.protocol.sweep_max);
  w.field("step", config.protocol.sweep_step);
  w.end_object();
  w.key("metrics").begin_object();
  w.key("iou_thresholds_50").array(config.metrics.iou_thresholds_50);
  w.key("iou_thresholds_50_95").array(config.metrics.iou_thresholds_50_95);
  w.field("max_detections", config.metrics.max_detections);
  w.field("recall_points", config.metrics.recall_points);
  w.field("mar50", "category-mean recall at IoU 0.5 under the per-frame detection cap");
  w.end_object();
  w.end_object();

  w.key("protocol").begin_array();
  for (const auto& r : groups) write_protocol(w, r);
  w.end_array();

  w.key("sweep").begin_object();
  w.key("far_turning_point");
  if (far_turning_point) {
    w.value(*far_turning_point);
  } else {
    w.null();
  }
  w.key("points").begin_array();
  for (const auto& r : sweep) write_protocol(w, r);
  w.end_array();
  w.end_object();

  w.key("metrics").begin_array();
  for (const auto& m : metrics) {
    w.begin_object();
    w.field("group", m.group);
    w.field("map50", m.map50);
    w.field("mar50", m.mar50);
    w.field("map50_95", m.map50_95);
    w.key("per_category").begin_array();
    for (const auto& c : m.per_category) {
      w.begin_object();
      w.field("category", config.categories.name(c.category));
      w.field("ground_truth", c.ground_truth);
      w.field("ap50", c.ap50);
      w.field("ar50", c.ar50);
      w.field("ap50_95", c.ap50_95);
      w.end_object();
    }
    w.end_array();
    w.key("excluded_categories").begin_array();
    for (auto c : m.excluded_categories) w.value(config.categories.name(c));
    w.end_array();
    w.end_object();
  }
  w.end_array();
  w.end_object();
  return w.str();
}

std::string Evaluation::metrics_csv(const CategorySet& categories) const {
  return metrics::metrics_csv(metrics, categories);
}

std::string Evaluation::sweep_csv() const {
  std::string out = "theta_w,acr,far,cqs,uqs\n";
  for (const auto& r : sweep) {
    out += format_fixed(r.theta_w) + "," + format_fixed(r.acr) + "," + format_fixed(r.far) + "," +
           format_fixed(r.cqs) + "," + format_fixed(r.uqs) + "\n";
  }
  return out;
}

std::string Evaluation::sweep_svg() const { return plot::sweep_svg(sweep); }

void write_evaluation(const Evaluation& evaluation, const fs::path& out_dir, const RunConfig& config) {
  io::write_file(out_dir / "report.json", evaluation.report_json(config));
  io::write_file(out_dir / "metrics.csv", evaluation.metrics_csv(config.categories));
  write_sweep(evaluation, out_dir);
}

void write_sweep(const Evaluation& evaluation, const fs::path& out_dir) {
  io::write_file(out_dir / "sweep.csv", evaluation.sweep_csv());
  io::write_file(out_dir / "sweep.svg", evaluation.sweep_svg());
}

Evaluation run_pipeline(const fs::path& manifest, const fs::path& detections_dir, const fs::path& out_dir,
                        const RunConfig& config) {
  config.validate();
  const auto loaded = io::load_dataset(manifest, config.categories);
  const auto& frames = loaded.dataset.frames;

  // Detection files for frames outside the manifest would be silently dropped.
  std::set<std::string> known;
  for (const auto& f : frames) known.insert(f.frame_id);
  for (const auto& id : io::list_detection_frames(detections_dir, config.merge.models)) {
    if (!known.count(id)) throw ParseError(id, "file name", "detections for a frame not in the dataset manifest");
  }

  std::vector<std::optional<entropy::EntropyDocument>> docs(frames.size());
  parallel_for(frames.size(), config.threads, [&](std::size_t i) {
    const auto& id = frames[i].frame_id;
    const auto det = io::load_ensemble_frame(detections_dir, id, config.merge.models, config.categories.size());
    const auto art = process_frame(det, config);
    io::write_file(out_dir / "merged" / (id + ".json"), art.merged);
    io::write_file(out_dir / "entropy" / (id + ".json"), art.entropy);
    docs[i] = entropy::parse_entropy_document(art.entropy, id);
  });
  auto ev = evaluate(loaded.dataset, docs, config);
  write_evaluation(ev, out_dir, config);
  return ev;
}

}  // namespace sotif::pipeline
