#include "commands.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "lsed/checkpoint.hpp"
#include "lsed/errors.hpp"
#include "lsed/interpret.hpp"
#include "lsed/pipeline.hpp"

namespace lsed::cli {

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw DataError("failed writing '" + path.string() + "'");
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory '" + dir.string() + "': " + ec.message());
}

void require_file(const fs::path& path, const char* what) {
  if (!fs::is_regular_file(path)) throw DataError(std::string(what) + " '" + path.string() + "' does not exist");
}

/// Model plus the pipeline settings it was trained with.
struct LoadedModel {
  model::MultiBranchTCN model;
  RunConfig run;
  std::string task;
  nlohmann::json metadata;
};

LoadedModel load_model(const fs::path& path) {
  require_file(path, "checkpoint");
  auto ckpt = model::load_checkpoint(path);
  LoadedModel out{std::move(ckpt.model), default_run_config(), "inhalation", ckpt.metadata};
  if (out.metadata.contains("run_config")) {
    out.run = parse_run_config(out.metadata["run_config"].get<std::string>(), path.string() + " (embedded config)");
    finalize(out.run);
  }
  out.task = out.metadata.value("task", out.run.train.task);
  return out;
}

std::string echo_header(const std::string& command) { return "# lsed " + command + "\n"; }

std::vector<audio::AnnotatedRecording> load_manifest_recordings(const fs::path& path) {
  require_file(path, "manifest");
  return corpus::load_all(corpus::read_manifest(path));
}

std::string probabilities_jsonl(const std::string& id, const std::vector<pipeline::WindowPrediction>& preds) {
  std::string out;
  for (const auto& p : preds) {
    out += nlohmann::json{{"recording_id", id}, {"start_s", p.start_s}, {"prob", p.prob}}.dump() + "\n";
  }
  return out;
}

}  // namespace

corpus::Manifest cmd_synth(const SynthOptions& opt, std::ostream& log) {
  if (opt.count < 1) throw InvalidArgument("--count must be >= 1");
  const audio::WindowingParams windowing;
  if (!(opt.duration_s >= windowing.win_s)) {
    throw InvalidArgument("--duration " + std::to_string(opt.duration_s) + " s is shorter than one " +
                          std::to_string(windowing.win_s) + " s window");
  }
  auto manifest = corpus::generate_corpus(opt.out, opt.seed, opt.count, opt.duration_s, opt.prefix);
  std::ostringstream echo;
  echo << echo_header("synth") << "seed = " << opt.seed << "\ncount = " << opt.count
       << "\nduration = " << std::setprecision(17) << opt.duration_s << "\nprefix = " << opt.prefix << "\n";
  write_text(opt.out / "config.txt", echo.str());
  log << "wrote " << manifest.recordings.size() << " recordings to " << opt.out.string() << "\n";
  return manifest;
}

train::TrainResult cmd_train(const TrainOptions& opt, std::ostream& log) {
  RunConfig cfg = opt.config ? (require_file(*opt.config, "config"), load_run_config(*opt.config)) : default_run_config();
  for (const auto& o : opt.overrides) apply_override(cfg, o);
  if (opt.task) cfg.train.task = *opt.task;
  finalize(cfg);

  auto train_recs = load_manifest_recordings(opt.train_manifest);
  std::vector<audio::AnnotatedRecording> val_recs;
  if (opt.val_manifest) {
    val_recs = load_manifest_recordings(*opt.val_manifest);
  } else {
    if (cfg.val_holdout < 1 || cfg.val_holdout >= train_recs.size()) {
      throw InvalidArgument("val_holdout = " + std::to_string(cfg.val_holdout) + " leaves no training or validation " +
                            "recordings out of " + std::to_string(train_recs.size()));
    }
    val_recs.assign(std::make_move_iterator(train_recs.end() - static_cast<std::ptrdiff_t>(cfg.val_holdout)),
                    std::make_move_iterator(train_recs.end()));
    train_recs.resize(train_recs.size() - cfg.val_holdout);
  }

  const std::optional<fs::path> cache =
      cfg.feature_cache.empty() ? std::nullopt : std::optional<fs::path>(cfg.feature_cache);
  const auto train_set = pipeline::build_dataset(train_recs, cfg.train.task, cfg.pipeline, cfg.workers, cache);
  const auto val_set = pipeline::build_dataset(val_recs, cfg.train.task, cfg.pipeline, cfg.workers, cache);
  log << "task " << cfg.train.task << ": " << train_set.size() << " training windows (" << train_set.positives()
      << " positive), " << val_set.size() << " validation windows (" << val_set.positives() << " positive)\n";

  ensure_dir(opt.out);
  const std::string rendered = render(cfg);
  write_text(opt.out / "config.txt", echo_header("train") + rendered);

  auto result = train::train(train_set, val_set, cfg.model, cfg.train, [&](const train::EpochRecord& e) {
    log << "epoch " << e.epoch << "/" << cfg.train.epochs << std::setprecision(6) << " train_loss " << e.train_loss
        << " val_loss " << e.val_loss << " val_f1 " << e.val_f1 << "\n";
  });

  const nlohmann::json metadata{{"task", cfg.train.task},
                                {"run_config", rendered},
                                {"selected_epoch", result.history.selected_epoch},
                                {"epochs_run", result.history.epochs.size()}};
  model::save_checkpoint(opt.out / "model.ckpt", result.model, metadata);
  train::write_history_csv(opt.out / "history.csv", result.history);
  log << "kept epoch " << result.history.selected_epoch << "; wrote " << (opt.out / "model.ckpt").string() << "\n";
  return result;
}

void cmd_predict(const PredictOptions& opt, std::ostream& log) {
  if (opt.wav.has_value() == opt.manifest.has_value()) throw InvalidArgument("give exactly one of --wav or --manifest");
  const auto loaded = load_model(opt.model);

  std::vector<std::pair<std::string, audio::AudioClip>> inputs;
  if (opt.wav) {
    require_file(*opt.wav, "WAV file");
    inputs.emplace_back(opt.id.value_or(opt.wav->stem().string()), audio::read_wav(*opt.wav));
  } else {
    for (auto& rec : load_manifest_recordings(*opt.manifest)) inputs.emplace_back(rec.id, std::move(rec.clip));
  }

  std::string probs_text;
  corpus::AnnotationMap events;
  for (const auto& [id, clip] : inputs) {
    const auto preds = pipeline::predict_windows(loaded.model, clip, id, loaded.run.pipeline);
    probs_text += probabilities_jsonl(id, preds);
    const auto timeline = eval::assemble_timeline(preds, clip.duration_s(), loaded.run.pipeline.windowing.win_s);
    events[id] = eval::extract_events(timeline, loaded.task);
    log << id << ": " << preds.size() << " windows, " << events[id].size() << " " << loaded.task << " events\n";
  }
  ensure_dir(opt.out);
  write_text(opt.out / "probabilities.jsonl", probs_text);
  corpus::write_annotations(opt.out / "events.jsonl", events);
  write_text(opt.out / "config.txt", echo_header("predict") + "# model: " + opt.model.string() + "\n" +
                                         "task = " + loaded.task + "\n" + render(loaded.run));
}

eval::ScoreReport cmd_evaluate(const EvaluateOptions& opt, std::ostream& log) {
  require_file(opt.pred, "prediction file");
  require_file(opt.truth, "truth file");
  corpus::AnnotationMap truth;
  if (opt.truth.extension() == ".json") {
    for (auto& rec : load_manifest_recordings(opt.truth)) truth[rec.id] = std::move(rec.events);
  } else {
    truth = corpus::read_annotations(opt.truth);
  }
  const auto pred = corpus::read_annotations(opt.pred);
  const auto labels = opt.task ? audio::task_labels(*opt.task) : std::set<std::string>{};
  // Predicted events carry the task name as their label.
  auto pred_labels = labels;
  if (opt.task) pred_labels.insert(*opt.task);
  corpus::AnnotationMap pred_kept;
  for (const auto& [id, events] : pred) {
    for (const auto& e : events) {
      if (pred_labels.empty() || pred_labels.contains(e.label)) pred_kept[id].push_back(e);
    }
  }
  const auto report = eval::score(truth, pred_kept, labels);
  ensure_dir(opt.out);
  write_text(opt.out / "metrics.json", eval::to_json(report).dump(2) + "\n");
  write_text(opt.out / "metrics.csv", eval::to_csv(report));
  write_text(opt.out / "config.txt", echo_header("evaluate") + "pred = " + opt.pred.string() + "\ntruth = " +
                                         opt.truth.string() + "\ntask = " + opt.task.value_or("") + "\n");
  const auto& a = report.aggregate;
  log << std::setprecision(4) << "tp " << a.tp << " fp " << a.fp << " fn " << a.fn << " ppv " << a.ppv << " se "
      << a.se << " f1 " << a.f1 << "\n";
  return report;
}

std::vector<fs::path> cmd_interpret(const InterpretOptions& opt, std::ostream& log) {
  const auto loaded = load_model(opt.model);
  require_file(opt.wav, "WAV file");
  const std::string id = opt.id.value_or(opt.wav.stem().string());
  const auto windows = pipeline::featurize(audio::read_wav(opt.wav), id, loaded.run.pipeline);
  const auto report = interpret::interpretation_report(loaded.model, windows, id, opt.window, opt.p, opt.steps);
  auto written = interpret::write_report(opt.out, report);
  std::ostringstream echo;
  echo << echo_header("interpret") << "# model: " << opt.model.string() << "\n# wav: " << opt.wav.string()
       << "\nwindow = " << opt.window << "\np = " << std::setprecision(17) << opt.p << "\nsteps = " << opt.steps
       << "\n";
  write_text(opt.out / "config.txt", echo.str());
  if (report.near_zero) log << "warning: all attributions are ~0 (untrained or degenerate model)\n";
  log << "window " << opt.window << " p(" << loaded.task << ") = " << report.probability << "; wrote "
      << written.size() << " files to " << opt.out.string() << "\n";
  return written;
}

std::string cmd_info(const InfoOptions& opt) {
  const auto loaded = load_model(opt.model);
  const auto& c = loaded.model.config();
  std::vector<std::vector<int>> schedules;
  std::vector<int> radii;
  for (const auto& b : loaded.model.branches()) {
    schedules.push_back(model::dilation_schedule(b.base, c.layers_per_branch));
    radii.push_back(model::receptive_radius(b.base, c.layers_per_branch, c.kernel));
  }
  if (opt.json) {
    nlohmann::json j{{"config", c},
                     {"task", loaded.task},
                     {"param_count", loaded.model.param_count()},
                     {"dilation_schedules", schedules},
                     {"receptive_radius", radii},
                     {"metadata", loaded.metadata}};
    return j.dump(2) + "\n";
  }
  auto list = [](const std::vector<int>& v) {
    std::string s = "[";
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + std::to_string(v[i]);
    return s + "]";
  };
  std::ostringstream out;
  out << "checkpoint: " << opt.model.string() << "\n"
      << "task: " << loaded.task << "\n"
      << "branches: " << c.branches << "\n"
      << "layers_per_branch: " << c.layers_per_branch << "\n"
      << "filters: " << c.filters << "\n"
      << "kernel: " << c.kernel << "\n"
      << "input_dim: " << c.input_dim << "\n"
      << "fusion_mode: " << model::to_string(c.fusion) << "\n"
      << "classifier_hidden: " << list(c.classifier_hidden) << "\n";
  for (std::size_t b = 0; b < schedules.size(); ++b) {
    out << "branch " << b << ": base " << loaded.model.branches()[b].base << ", dilations " << list(schedules[b])
        << ", receptive radius " << radii[b] << " frames\n";
  }
  out << "param_count: " << loaded.model.param_count() << "\n";
  return out.str();
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Lung sound event detection with a multi-branch dilated TCN", "lsed"};
  app.require_subcommand(1);

  SynthOptions synth;
  auto* s = app.add_subcommand("synth", "Generate a seeded synthetic breathing corpus");
  s->add_option("--seed", synth.seed, "Base seed")->default_val(0);
  s->add_option("--count", synth.count, "Number of recordings")->default_val(10);
  s->add_option("--duration", synth.duration_s, "Seconds per recording")->default_val(20.0);
  s->add_option("--prefix", synth.prefix, "Recording id prefix")->default_val("rec");
  s->add_option("--out", synth.out, "Output directory")->required();

  TrainOptions tr;
  std::optional<std::uint64_t> train_seed;
  std::optional<unsigned> train_workers;
  auto* t = app.add_subcommand("train", "Train a detector for one task");
  t->add_option("--config", tr.config, "key = value configuration file");
  t->add_option("--task", tr.task, "inhalation|exhalation|cas|das|wheeze|crackle");
  t->add_option("--train-manifest", tr.train_manifest, "Training corpus manifest")->required();
  t->add_option("--val-manifest", tr.val_manifest, "Validation manifest (default: hold out val_holdout recordings)");
  t->add_option("--out", tr.out, "Output directory")->required();
  t->add_option("--override", tr.overrides, "key=value, repeatable");
  t->add_option("--seed", train_seed, "Shortcut for --override seed=N");
  t->add_option("--workers", train_workers, "Feature extraction threads");

  PredictOptions pr;
  auto* p = app.add_subcommand("predict", "Per-window probabilities and detected events");
  p->add_option("--model", pr.model, "Checkpoint")->required();
  p->add_option("--wav", pr.wav, "Single recording");
  p->add_option("--manifest", pr.manifest, "Corpus manifest (all recordings)");
  p->add_option("--id", pr.id, "Recording id for --wav (default: file stem)");
  p->add_option("--out", pr.out, "Output directory")->required();

  EvaluateOptions ev;
  auto* e = app.add_subcommand("evaluate", "Event-level Jaccard scoring");
  e->add_option("--pred", ev.pred, "Predicted events (JSONL)")->required();
  e->add_option("--truth", ev.truth, "Reference events (JSONL) or corpus manifest (.json)")->required();
  e->add_option("--task", ev.task, "Restrict reference events to this task's labels");
  e->add_option("--out", ev.out, "Output directory")->required();

  InterpretOptions in;
  auto* i = app.add_subcommand("interpret", "Attribution and per-branch conductance for one window");
  i->add_option("--model", in.model, "Checkpoint")->required();
  i->add_option("--wav", in.wav, "Recording")->required();
  i->add_option("--window", in.window, "Window index")->required();
  i->add_option("--id", in.id, "Recording id (default: file stem)");
  i->add_option("--p", in.p, "Salient fraction")->default_val(0.05);
  i->add_option("--steps", in.steps, "Integration steps")->default_val(128);
  i->add_option("--out", in.out, "Output directory")->required();

  InfoOptions info;
  auto* n = app.add_subcommand("info", "Architecture summary of a checkpoint");
  n->add_option("--model", info.model, "Checkpoint")->required();
  n->add_flag("--json", info.json, "Machine-readable output");

  try {
    app.parse(std::vector<std::string>(args.rbegin(), args.rend()));
  } catch (const CLI::ParseError& pe) {
    const int code = app.exit(pe, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (s->parsed()) {
      cmd_synth(synth, err);
    } else if (t->parsed()) {
      if (train_seed) tr.overrides.push_back("seed=" + std::to_string(*train_seed));
      if (train_workers) tr.overrides.push_back("workers=" + std::to_string(*train_workers));
      cmd_train(tr, err);
    } else if (p->parsed()) {
      cmd_predict(pr, err);
    } else if (e->parsed()) {
      cmd_evaluate(ev, out);
    } else if (i->parsed()) {
      cmd_interpret(in, err);
    } else if (n->parsed()) {
      out << cmd_info(info);
    }
  } catch (const InvalidArgument& ex) {
    err << "error: " << ex.what() << "\n";
    return kUsage;
  } catch (const NumericalError& ex) {
    err << "numerical failure: " << ex.what() << "\n";
    return kNumerical;
  } catch (const DataError& ex) {
    err << "data error: " << ex.what() << "\n";
    return kData;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return kData;
  }
  return kOk;
}

}  // namespace lsed::cli
