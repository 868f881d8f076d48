// sotif: command-line front end for entropy quantification and evaluation.
//
// Exit codes: 0 ok, 1 usage, 2 parse/input error, 3 invariant violation.
// Every failure prints exactly one "error: ..." line on stderr.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "sotif/annotation_io.hpp"
#include "sotif/errors.hpp"
#include "sotif/json_writer.hpp"
#include "sotif/pipeline.hpp"
#include "sotif/synthetic.hpp"

namespace fs = std::filesystem;
using namespace sotif;

namespace {

struct Options {
  pipeline::RunConfig run;
  std::string log_base = "2";
  std::string policy = "zero-fill";
  std::string should_warn = "hard-or-inaccurate";
  std::string categories_file;
};

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--threads", o.run.threads, "Worker threads (default: SOTIF_THREADS or 1)")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--categories", o.categories_file, "JSON array of category names (default: the 11 built-in)");
}

void add_merge(CLI::App* cmd, Options& o) {
  cmd->add_option("--models", o.run.merge.models, "Ensemble size T");
  cmd->add_option("--nms-conf", o.run.merge.nms_confidence, "Per-model score threshold");
  cmd->add_option("--nms-iou", o.run.merge.nms_iou, "Per-model NMS IoU");
  cmd->add_option("--cluster-iou", o.run.merge.cluster_iou, "BSASexcl admission IoU");
  cmd->add_flag("--class-agnostic", o.run.merge.class_agnostic_nms, "Suppress across labels in NMS");
}

void add_entropy(CLI::App* cmd, Options& o) {
  cmd->add_option("--fp", o.run.entropy.penalty_factor, "Miss/ghost penalty factor f_p");
  cmd->add_option("--log-base", o.log_base, "Entropy log base")->check(CLI::IsMember({"2", "e"}));
  cmd->add_option("--policy", o.policy, "Missing-sample policy")
      ->check(CLI::IsMember({"zero-fill", "contributing-only"}));
}

void add_protocol(CLI::App* cmd, Options& o) {
  cmd->add_option("--theta", o.run.entropy.theta_w, "Uncertainty threshold theta_w");
  cmd->add_option("--match-iou", o.run.protocol.match_iou, "IoU for matching objects to ground truth");
  cmd->add_option("--should-warn", o.should_warn, "Rows that should be warned")
      ->check(CLI::IsMember({"hard-or-inaccurate", "hard-only", "inaccurate-only"}));
  cmd->add_option("--min", o.run.protocol.sweep_min, "Sweep start");
  cmd->add_option("--max", o.run.protocol.sweep_max, "Sweep end (inclusive)");
  cmd->add_option("--step", o.run.protocol.sweep_step, "Sweep graduation");
}

void finalize(Options& o) {
  o.run.entropy.log_base = entropy::parse_log_base(o.log_base);
  o.run.entropy.policy = entropy::parse_policy(o.policy);
  o.run.protocol.policy = eval::parse_should_warn_policy(o.should_warn);
  if (!o.categories_file.empty()) {
    const auto text = io::read_file(o.categories_file);
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(o.categories_file, "byte " + std::to_string(e.byte), "malformed JSON");
    }
    if (!doc.is_array()) throw ParseError(o.categories_file, "root", "expected an array of category names");
    std::vector<std::string> names;
    for (const auto& n : doc) {
      if (!n.is_string()) throw ParseError(o.categories_file, "root", "category names must be strings");
      names.push_back(n.get<std::string>());
    }
    o.run.categories = CategorySet(std::move(names));
  }
  o.run.validate();
}

void print_summary(const pipeline::Evaluation& ev) {
  const auto& t = ev.groups.front();
  std::printf("frames %zu, rows %zu: ACR %.6f FAR %.6f CQS %.6f UQS %s, mAP50 %.6f\n", ev.frames, t.rows, t.acr,
              t.far, t.cqs, format_fixed(t.uqs).c_str(), ev.metrics.front().map50);
}

int fail(const std::string& message, int code) {
  std::cerr << "error: " << message << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Perception SOTIF entropy quantification and evaluation for ensemble detectors"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for all subcommands");

  Options o;
  o.run.threads = pipeline::default_threads();

  std::string from, to, input, out, dataset, detections, merged_dir, entropy_dir, sim_config;
  bool stats_json = false;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> sim_frames;

  auto* convert = app.add_subcommand("convert", "Convert annotations between extended YOLO and COCO");
  convert->add_option("--from", from, "Input format")->required()->check(CLI::IsMember({"yolo", "coco"}));
  convert->add_option("--to", to, "Output format")->required()->check(CLI::IsMember({"yolo", "coco"}));
  convert->add_option("--input", input, "YOLO manifest or COCO file")->required();
  convert->add_option("--out", out, "YOLO output directory or COCO output file")->required();
  add_common(convert, o);

  auto* validate = app.add_subcommand("validate", "Parse a dataset and optional detection/entropy files");
  validate->add_option("--dataset", dataset, "Dataset manifest")->required();
  validate->add_option("--detections", detections, "Per-model detection directory");
  validate->add_option("--entropy", entropy_dir, "Entropy directory");
  add_common(validate, o);
  add_merge(validate, o);

  auto* stats = app.add_subcommand("stats", "Key/normal object statistics of a dataset");
  stats->add_option("--dataset", dataset, "Dataset manifest")->required();
  stats->add_flag("--json", stats_json, "Print JSON instead of text");
  add_common(stats, o);

  auto* merge_cmd = app.add_subcommand("merge", "Per-model NMS and BSASexcl clustering");
  merge_cmd->add_option("--detections", detections, "Per-model detection directory")->required();
  merge_cmd->add_option("--out", out, "Output directory for merged/*.json")->required();
  add_common(merge_cmd, o);
  add_merge(merge_cmd, o);

  auto* quantify = app.add_subcommand("quantify", "Fuse probabilities and compute entropy");
  quantify->add_option("--merged", merged_dir, "Merged directory")->required();
  quantify->add_option("--out", out, "Output directory for entropy/*.json")->required();
  add_common(quantify, o);
  add_entropy(quantify, o);
  quantify->add_option("--theta", o.run.entropy.theta_w, "Uncertainty threshold theta_w");

  auto* evaluate = app.add_subcommand("evaluate", "Protocol report and detection metrics");
  evaluate->add_option("--dataset", dataset, "Dataset manifest")->required();
  evaluate->add_option("--entropy", entropy_dir, "Entropy directory")->required();
  evaluate->add_option("--out", out, "Output directory")->default_val(".");
  add_common(evaluate, o);
  add_protocol(evaluate, o);

  auto* sweep = app.add_subcommand("sweep", "Threshold sweep: sweep.csv and sweep.svg");
  sweep->add_option("--dataset", dataset, "Dataset manifest")->required();
  sweep->add_option("--entropy", entropy_dir, "Entropy directory")->required();
  sweep->add_option("--out", out, "Output directory")->default_val(".");
  add_common(sweep, o);
  add_protocol(sweep, o);

  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic dataset and ensemble detections");
  simulate->add_option("--config", sim_config, "Simulation config JSON");
  simulate->add_option("--out", out, "Output directory")->required();
  simulate->add_option("--seed", seed, "Override the config seed");
  simulate->add_option("--frames", sim_frames, "Override the frame count");
  add_common(simulate, o);

  auto* run = app.add_subcommand("pipeline", "merge, quantify and evaluate in one pass");
  run->add_option("--dataset", dataset, "Dataset manifest")->required();
  run->add_option("--detections", detections, "Per-model detection directory")->required();
  run->add_option("--out", out, "Output directory")->required();
  add_common(run, o);
  add_merge(run, o);
  add_entropy(run, o);
  add_protocol(run, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    if (msg.empty()) msg = e.get_name();
    return fail("usage: " + msg, 1);
  }

  try {
    finalize(o);
    const auto& cfg = o.run;

    if (convert->parsed()) {
      io::Dataset ds;
      if (from == "yolo") {
        auto loaded = io::load_dataset(fs::path(input), cfg.categories);
        for (const auto& w : loaded.warnings) std::cerr << "warning: " << w.file << ": " << w.location << ": " << w.message << "\n";
        ds = std::move(loaded.dataset);
      } else {
        auto parsed = io::parse_coco_ext(io::read_file(input), cfg.categories, input);
        for (const auto& w : parsed.warnings) std::cerr << "warning: " << w.file << ": " << w.location << ": " << w.message << "\n";
        ds = std::move(parsed.dataset);
      }
      if (to == "yolo") {
        io::save_yolo_dataset(ds, out);
      } else {
        io::write_file(out, io::write_coco_ext(ds));
      }
      std::printf("converted %zu frames\n", ds.frames.size());
    } else if (validate->parsed()) {
      const auto loaded = io::load_dataset(fs::path(dataset), cfg.categories);
      for (const auto& w : loaded.warnings) std::cerr << "warning: " << w.file << ": " << w.location << ": " << w.message << "\n";
      std::size_t objects = 0;
      for (const auto& f : loaded.dataset.frames) objects += f.ground_truth.size();
      std::size_t det_files = 0, ent_files = 0;
      if (!detections.empty()) {
        const auto ids = io::list_detection_frames(detections, cfg.merge.models);
        pipeline::parallel_for(ids.size(), cfg.threads, [&](std::size_t i) {
          io::load_ensemble_frame(detections, ids[i], cfg.merge.models, cfg.categories.size());
        });
        det_files = ids.size();
      }
      if (!entropy_dir.empty()) {
        ent_files = pipeline::evaluate_files(dataset, entropy_dir, cfg).frames;
      }
      std::printf("ok: %zu frames, %zu objects, %zu detection frames, %zu entropy-checked frames, %zu warnings\n",
                  loaded.dataset.frames.size(), objects, det_files, ent_files, loaded.warnings.size());
    } else if (stats->parsed()) {
      const auto loaded = io::load_dataset(fs::path(dataset), cfg.categories);
      const auto s = io::dataset_stats(loaded.dataset);
      std::cout << (stats_json ? io::stats_to_json(s) : io::stats_to_text(s));
    } else if (merge_cmd->parsed()) {
      const auto s = pipeline::run_merge(detections, out, cfg);
      std::printf("merged %zu frames, %zu objects\n", s.frames, s.objects);
    } else if (quantify->parsed()) {
      const auto s = pipeline::run_quantify(merged_dir, out, cfg);
      std::printf("quantified %zu frames, %zu objects\n", s.frames, s.objects);
    } else if (evaluate->parsed()) {
      const auto ev = pipeline::evaluate_files(dataset, entropy_dir, cfg);
      pipeline::write_evaluation(ev, out, cfg);
      print_summary(ev);
    } else if (sweep->parsed()) {
      const auto ev = pipeline::evaluate_files(dataset, entropy_dir, cfg);
      pipeline::write_sweep(ev, out);
      std::printf("%zu thresholds, FAR turning point %s\n", ev.sweep.size(),
                  ev.far_turning_point ? format_fixed(*ev.far_turning_point).c_str() : "none");
    } else if (simulate->parsed()) {
      sim::SimConfig sc;
      if (!sim_config.empty()) sc = sim::parse_sim_config(io::read_file(sim_config), sim_config);
      if (seed) sc.seed = *seed;
      if (sim_frames) sc.frames = *sim_frames;
      sc.validate();
      const auto output = sim::generate(sc);
      sim::write_simulation(output, out);
      std::printf("simulated %zu frames\n", output.dataset.frames.size());
    } else if (run->parsed()) {
      const auto ev = pipeline::run_pipeline(dataset, detections, out, cfg);
      print_summary(ev);
    }
  } catch (const ParseError& e) {
    return fail(e.what(), 2);
  } catch (const InvariantError& e) {
    return fail(e.what(), 3);
  } catch (const std::exception& e) {
    return fail(e.what(), 2);
  }
  return 0;
}
