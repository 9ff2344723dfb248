// Copyright 2026 The prefnet Authors
// SPDX-License-Identifier: Apache-2.0

#include <pthread.h>

#include <chrono>
#include <csignal>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "prefnet/core/checkpoint.hpp"
#include "prefnet/core/error.hpp"
#include "prefnet/core/parallel.hpp"
#include "prefnet/data/folds.hpp"
#include "prefnet/data/synth.hpp"
#include "prefnet/service/server.hpp"
#include "prefnet/train/analysis.hpp"
#include "prefnet/train/cv.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace prefnet;

namespace {

constexpr const char* kVersion = "0.1.0";

std::string timestamp() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Long option names given on the command line, to tell flags from file values.
std::set<std::string> flags_on_command_line(int argc, char** argv) {
  std::set<std::string> out;
  for (int i = 1; i < argc; ++i) {
    std::string a = argv[i];
    if (!a.starts_with("--")) continue;
    a = a.substr(2);
    out.insert(a.substr(0, a.find('=')));
  }
  return out;
}

/// Resolved settings of one subcommand, each with where it came from.
json resolved_config(const CLI::App& sub, const std::set<std::string>& cli_flags) {
  json out = json::object();
  for (const CLI::Option* opt : sub.get_options()) {
    if (opt->get_lnames().empty()) continue;
    const auto& name = opt->get_lnames().front();
    if (name == "help" || name == "config") continue;
    json entry;
    if (opt->count() > 0) {
      const auto& r = opt->results();
      entry["value"] = r.size() == 1 ? json(r.front()) : json(r);
      entry["source"] = cli_flags.contains(name) ? "flag" : "file";
    } else {
      const bool flag = opt->get_expected_max() == 0;
      entry["value"] = flag && opt->get_default_str().empty() ? "false" : opt->get_default_str();
      entry["source"] = "default";
    }
    out[name] = entry;
  }
  return out;
}

/// One manifest per run, written next to the run's outputs.
class RunManifest {
 public:
  RunManifest(std::string command, json config, std::uint64_t seed)
      : j_{{"command", std::move(command)},
           {"config", std::move(config)},
           {"seed", seed},
           {"artifacts", json::array()},
           {"tool_version", kVersion},
           {"started_at", timestamp()}} {}
  void artifact(const fs::path& p) { j_["artifacts"].push_back(p.string()); }
  void set(const std::string& key, json value) { j_[key] = std::move(value); }
  void write(const fs::path& path) {
    j_["finished_at"] = timestamp();
    atomic_write_file(path, j_.dump(2) + "\n");
  }

 private:
  json j_;
};

fs::path with_suffix(const fs::path& p, const std::string& suffix) { return fs::path(p.string() + suffix); }

void require(bool ok, const std::string& what) {
  if (!ok) throw ValidationError(what);
}

// ---------------------------------------------------------------------------
// Shared option groups

struct ModelOptions {
  std::string variant = "ao";
  std::vector<std::size_t> widths{64, 128, 256, 512};
  std::size_t mlp_hidden = 512;
  std::size_t subject_hidden = 64;
  std::size_t parallel_dim = 8;
  std::string mask = "all";

  void add(CLI::App& app) {
    app.add_option("--model", variant, "Variant: ao, asl, ase, asp")->capture_default_str();
    app.add_option("--widths", widths, "Four encoder stage widths")->expected(4)->capture_default_str();
    app.add_option("--mlp-hidden", mlp_hidden, "Head hidden width")->capture_default_str();
    app.add_option("--subject-hidden", subject_hidden, "ASE/ASP subject-MLP hidden width")->capture_default_str();
    app.add_option("--parallel-dim", parallel_dim, "ASP parallel path width")->capture_default_str();
    app.add_option("--mask", mask, "Subject features: all, age_gender, all_specs, impd_sensit, freq_responses")
        ->capture_default_str();
  }
  model::ModelConfig config() const {
    model::ModelConfig c;
    c.variant = model::parse_variant(variant);
    require(widths.size() == 4, "--widths needs exactly four values");
    std::copy(widths.begin(), widths.end(), c.encoder.widths.begin());
    c.mlp_hidden = mlp_hidden;
    c.subject_hidden = subject_hidden;
    c.parallel_dim = parallel_dim;
    c.feature_mask = data::parse_feature_mask(mask);
    c.validate();
    return c;
  }
};

struct TrainOptions {
  train::TrainConfig cfg;
  bool no_augment = false;

  void add(CLI::App& app) {
    app.add_option("--lr0", cfg.lr0, "Initial learning rate")->capture_default_str();
    app.add_option("--lr-decay", cfg.lr_decay, "Learning-rate factor per epoch")->capture_default_str();
    app.add_option("--batch-size", cfg.batch_size, "Pairs per batch")->capture_default_str();
    app.add_option("--epochs", cfg.max_epochs, "Maximum epochs")->capture_default_str();
    app.add_option("--patience", cfg.patience, "Epochs without validation improvement before stopping")
        ->capture_default_str();
    app.add_flag("--no-augment", no_augment, "Disable SpecAugment");
  }
  train::TrainConfig config() const {
    auto c = cfg;
    c.augment.enabled = !no_augment;
    c.validate();
    return c;
  }
};

struct DataOptions {
  std::string corpus;
  std::string features;
  std::string audio_dir;
  std::size_t jobs = 1;

  void add(CLI::App& app, bool jobs_flag) {
    app.add_option("--corpus", corpus, "Corpus JSONL")->required();
    app.add_option("--features", features, "Feature cache directory (read, and filled from --audio-dir)");
    app.add_option("--audio-dir", audio_dir, "Directory of clip WAVs");
    if (jobs_flag) app.add_option("--jobs", jobs, "Worker threads")->capture_default_str();
  }
};

struct LoadedData {
  data::Corpus corpus;  // after exclusion filtering
  train::TrainingData data;
};

LoadedData load_data(const DataOptions& o, data::FeatureMask mask) {
  require(!o.features.empty() || !o.audio_dir.empty(), "give --features and/or --audio-dir");
  auto filtered = data::filter_corpus(data::read_corpus(o.corpus));
  const auto& r = filtered.report;
  std::fprintf(stderr,
               "corpus: %zu of %zu subjects kept (%zu excluded for missing specs); %zu of %zu records kept "
               "(%zu strong, %zu weak; dropped %zu of excluded subjects, %zu no-preference)\n",
               r.subjects_in - r.excluded_subjects.size(), r.subjects_in, r.excluded_subjects.size(), r.records_kept,
               r.records_in, r.kept_strong, r.kept_weak, r.records_of_excluded_subjects, r.records_no_preference);
  require(!filtered.corpus.records.empty(), "corpus has no usable records after filtering");
  auto bank = train::load_features(filtered.corpus.records, o.audio_dir, o.features, o.jobs);
  auto data = train::TrainingData::build(std::move(bank), filtered.corpus.subjects, mask);
  return {std::move(filtered.corpus), std::move(data)};
}

// ---------------------------------------------------------------------------
// Commands

struct SynthCmd {
  data::SynthConfig cfg;
  std::string mode = "personal";
  std::string out;
  bool force = false;

  void add(CLI::App& app) {
    app.add_option("--out", out, "Output directory")->required();
    app.add_option("--subjects", cfg.subjects, "Number of listeners")->capture_default_str();
    app.add_option("--songs", cfg.songs, "Number of songs")->capture_default_str();
    app.add_option("--devices", cfg.devices, "Devices per song (2..8)")->capture_default_str();
    app.add_option("--volumes", cfg.volumes, "Volume labels")->capture_default_str();
    app.add_option("--mode", mode, "personal or agnostic")->capture_default_str();
    app.add_option("--seed", cfg.seed, "Generator seed")->capture_default_str();
    app.add_option("--clip-seconds", cfg.clip_seconds, "Clip length")->capture_default_str();
    app.add_option("--sample-rate", cfg.sample_rate, "44100 or 32000")->capture_default_str();
    app.add_option("--label-noise", cfg.label_noise, "Probability of flipping an answer")->capture_default_str();
    app.add_flag("--force", force, "Replace an existing output directory");
  }

  void run(const json& config) {
    cfg.mode = data::parse_synth_mode(mode);
    cfg.validate();
    const fs::path dir(out);
    require(force || !fs::exists(dir), "output directory " + dir.string() + " exists (use --force to replace)");
    RunManifest manifest("synth", config, cfg.seed);
    const auto synth = data::synth_generate(cfg);

    // Build everything in a sibling directory and move it into place at the end.
    const fs::path staging = with_suffix(dir, ".partial");
    fs::remove_all(staging);
    data::write_synth(staging, synth, cfg.sample_rate);
    manifest.artifact(dir / "corpus.jsonl");
    manifest.artifact(dir / "audio");
    manifest.set("subjects", synth.corpus.subjects.size());
    manifest.set("records", synth.corpus.records.size());
    manifest.write(staging / "manifest.json");
    fs::remove_all(dir);
    fs::rename(staging, dir);
    std::cout << "wrote " << synth.corpus.subjects.size() << " subjects, " << synth.corpus.records.size()
              << " records, " << synth.clips.size() << " clips to " << dir.string() << "\n";
  }
};

struct FeaturizeCmd {
  std::string corpus;
  std::string audio_dir;
  std::string out;
  std::size_t jobs = 1;

  void add(CLI::App& app) {
    app.add_option("--audio-dir", audio_dir, "Directory of clip WAVs")->required();
    app.add_option("--out", out, "Feature cache directory")->required();
    app.add_option("--corpus", corpus, "Only clips referenced by this corpus (default: every clip in --audio-dir)");
    app.add_option("--jobs", jobs, "Worker threads")->capture_default_str();
  }

  void run(const json& config) {
    RunManifest manifest("featurize", config, 0);
    train::FeatureBank bank;
    if (!corpus.empty()) {
      bank = train::load_features(data::read_corpus(corpus).records, audio_dir, out, jobs);
    } else {
      std::vector<std::string> ids;
      for (const auto& g : data::catalog_from_directory(audio_dir)) ids.insert(ids.end(), g.clip_ids.begin(), g.clip_ids.end());
      require(!ids.empty(), "no clips named <song>__<device>__<volume>.wav in " + audio_dir);
      bank = train::load_features(ids, audio_dir, out, jobs);
    }
    manifest.artifact(out);
    manifest.set("clips", bank.size());
    manifest.write(fs::path(out) / "manifest.json");
    std::cout << "featurized " << bank.size() << " clips into " << out << "\n";
  }
};

struct TrainCmd {
  ModelOptions model;
  TrainOptions training;
  DataOptions data;
  int fold = 1;
  std::uint64_t seed = 1;
  std::string out;

  void add(CLI::App& app) {
    model.add(app);
    training.add(app);
    data.add(app, false);
    app.add_option("--fold", fold, "Test fold 1..7; validation uses the next fold")->capture_default_str();
    app.add_option("--seed", seed, "Seed for initialisation, shuffling and augmentation")->capture_default_str();
    app.add_option("--out", out, "Checkpoint path")->required();
  }

  void run(const json& config) {
    const auto mcfg = model.config();
    auto tcfg = training.config();
    tcfg.seed = seed;
    require(fold >= 1 && fold <= data::kNumFolds, "--fold must lie in 1..7");
    RunManifest manifest("train", config, seed);
    const auto loaded = load_data(data, mcfg.feature_mask);
    const auto rot = data::rotation(data::make_folds(loaded.corpus.subjects), fold - 1);
    train::check_disjoint(rot);
    const auto tr = loaded.data.examples(loaded.corpus.records, rot.train);
    const auto va = loaded.data.examples(loaded.corpus.records, rot.val);
    const auto te = loaded.data.examples(loaded.corpus.records, rot.test);

    model::PreferenceNet<float> net(mcfg, seed);
    const auto result = train::train_model(net, tcfg, loaded.data, tr, va, [](const train::EpochLog& e) {
      std::fprintf(stderr, "epoch %3zu  lr %.3e  train %.4f  val %.4f%s\n", e.epoch, e.lr, e.train_loss, e.val_loss,
                   e.improved ? "  *" : "");
    });
    const double test_acc = te.empty() ? -1.0 : train::evaluate_accuracy(net, loaded.data, te, tcfg.batch_size);

    json history = json::array();
    for (const auto& e : result.history) {
      history.push_back({{"epoch", e.epoch}, {"lr", e.lr}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}});
    }
    json summary = {{"fold", fold},
                    {"best_epoch", result.best_epoch},
                    {"best_val_loss", result.best_val_loss},
                    {"stopped_early", result.stopped_early},
                    {"test_pairs", te.size()},
                    {"test_accuracy", te.empty() ? json(nullptr) : json(test_acc)},
                    {"history", history}};
    const fs::path ckpt(out);
    if (ckpt.has_parent_path()) fs::create_directories(ckpt.parent_path());
    model::save_model(ckpt, net);
    atomic_write_file(with_suffix(ckpt, ".history.json"), summary.dump(2) + "\n");
    manifest.artifact(ckpt);
    manifest.artifact(with_suffix(ckpt, ".json"));
    manifest.artifact(with_suffix(ckpt, ".history.json"));
    manifest.write(with_suffix(ckpt, ".manifest.json"));
    std::cout << "best epoch " << result.best_epoch << ", val loss " << result.best_val_loss;
    if (!te.empty()) std::cout << ", test accuracy " << test_acc << " on " << te.size() << " pairs";
    std::cout << "\n";
  }
};

struct CvCmd {
  ModelOptions model;
  TrainOptions training;
  DataOptions data;
  train::CvConfig cv;
  std::vector<int> folds;
  std::string out;

  void add(CLI::App& app) {
    model.add(app);
    training.add(app);
    data.add(app, true);
    app.add_option("--runs", cv.runs, "Runs per fold")->capture_default_str();
    app.add_option("--base-seed", cv.base_seed, "Run r uses seed base*1000 + r")->capture_default_str();
    app.add_option("--folds", folds, "Test folds to run, 1..7 (default: all)");
    app.add_option("--out", out, "Report JSON")->required();
  }

  void run(const json& config) {
    const auto mcfg = model.config();
    const auto tcfg = training.config();
    cv.jobs = data.jobs;
    cv.folds.clear();
    for (int k : folds) cv.folds.push_back(k - 1);
    cv.validate();
    RunManifest manifest("cv", config, cv.base_seed);
    const auto loaded = load_data(data, mcfg.feature_mask);
    const auto report = train::run_cv(loaded.corpus, loaded.data, mcfg, tcfg, cv, [](const train::CellProgress& p) {
      std::fprintf(stderr, "[%zu/%zu] fold %d run %zu: accuracy %.4f (best epoch %zu)\n", p.done, p.total, p.fold + 1,
                   p.run, p.accuracy, p.best_epoch);
    });
    const fs::path path(out);
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    atomic_write_file(path, report.to_json().dump(2) + "\n");
    manifest.artifact(path);
    manifest.write(with_suffix(path, ".manifest.json"));
    std::printf("fold   #Q   mean    std\n");
    for (const auto& f : report.folds) std::printf("%4d %4zu  %.4f  %.4f\n", f.fold + 1, f.n_questions, f.mean, f.std);
    std::printf("overall    %.4f\n", report.overall);
  }
};

struct EvaluateCmd {
  DataOptions data;
  std::string checkpoint;
  int fold = 0;
  std::string out;

  void add(CLI::App& app) {
    data.add(app, false);
    app.add_option("--checkpoint", checkpoint, "Checkpoint written by train")->required();
    app.add_option("--fold", fold, "Evaluate on this test fold (1..7); 0 evaluates every record")
        ->capture_default_str();
    app.add_option("--out", out, "Also write the result JSON here");
  }

  void run(const json& config) {
    require(fold >= 0 && fold <= data::kNumFolds, "--fold must lie in 0..7");
    RunManifest manifest("evaluate", config, 0);
    auto net = model::load_model<float>(checkpoint);
    const auto loaded = load_data(data, net.config().feature_mask);
    std::vector<train::PairExample> examples;
    if (fold == 0) {
      examples = loaded.data.examples(loaded.corpus.records);
    } else {
      const auto rot = data::rotation(data::make_folds(loaded.corpus.subjects), fold - 1);
      examples = loaded.data.examples(loaded.corpus.records, rot.test);
    }
    require(!examples.empty(), "no pairs to evaluate");
    const double acc = train::evaluate_accuracy(net, loaded.data, examples);
    const json result = {{"checkpoint", checkpoint}, {"fold", fold}, {"pairs", examples.size()}, {"accuracy", acc}};
    std::cout << result.dump(2) << "\n";
    if (!out.empty()) {
      atomic_write_file(out, result.dump(2) + "\n");
      manifest.artifact(out);
      manifest.write(with_suffix(out, ".manifest.json"));
    }
  }
};

struct AnalyzeCmd {
  std::string checkpoint;
  std::string out;
  bool fold_bn = false;

  void add(CLI::App& app) {
    app.add_option("--checkpoint", checkpoint, "Checkpoint written by train")->required();
    app.add_option("--out", out, "CSV output")->required();
    app.add_flag("--fold-bn", fold_bn, "Scale the output layer by the batch-norm gain before multiplying");
  }

  void run(const json& config) {
    RunManifest manifest("analyze-weights", config, 0);
    const auto cfg = model::read_model_config(checkpoint);
    const auto analysis = train::analyze_last_mlp(read_checkpoint(checkpoint), cfg, fold_bn);
    atomic_write_file(out, train::influence_csv(analysis));
    manifest.artifact(out);
    manifest.write(with_suffix(out, ".manifest.json"));
    double audio = 0, subject = 0;
    for (std::size_t i = 0; i < analysis.influence.size(); ++i) {
      (i < analysis.audio_dim ? audio : subject) += analysis.influence[i];
    }
    const std::size_t n_subject = analysis.influence.size() - analysis.audio_dim;
    std::printf("%zu inputs: audio mean %.6g", analysis.influence.size(), audio / static_cast<double>(analysis.audio_dim));
    if (n_subject > 0) std::printf(", subject mean %.6g", subject / static_cast<double>(n_subject));
    std::printf("\n");
  }
};

struct StudyOptions {
  std::string audio_dir;
  std::string log = "answers.log";
  std::uint64_t pair_seed = 1;
  std::size_t devices = 5;

  void add(CLI::App& app) {
    app.add_option("--audio-dir", audio_dir, "Directory of clip WAVs")->required();
    app.add_option("--log", log, "Append-only answer log")->capture_default_str();
    app.add_option("--pair-seed", pair_seed, "Seed for pair order and questionnaire split")->capture_default_str();
    app.add_option("--devices", devices, "Recordings per song")->capture_default_str();
  }
  std::vector<data::PairSpec> pairs() const {
    return data::build_pairs(data::catalog_from_directory(audio_dir), pair_seed, devices);
  }
};

struct ServeCmd {
  StudyOptions study;
  std::string host = "127.0.0.1";
  int port = 8080;

  void add(CLI::App& app) {
    study.add(app);
    app.add_option("--host", host, "Address to listen on")->capture_default_str();
    app.add_option("--port", port, "Port (0 picks a free one)")->capture_default_str();
  }

  void run(const json& config) {
    RunManifest manifest("serve", config, study.pair_seed);
    // Handle SIGINT/SIGTERM on a dedicated thread so shutdown is orderly.
    sigset_t stop_signals;
    sigemptyset(&stop_signals);
    sigaddset(&stop_signals, SIGINT);
    sigaddset(&stop_signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &stop_signals, nullptr);

    service::ListeningStudy s(study.pairs(), study.log);
    service::StudyServer server(s, study.audio_dir);
    const int bound = server.bind(host, port);
    manifest.artifact(study.log);
    manifest.set("port", bound);
    manifest.set("sessions_replayed", s.session_count());
    manifest.write(with_suffix(study.log, ".manifest.json"));
    std::printf("listening on http://%s:%d (%zu sessions replayed)\n", host.c_str(), bound, s.session_count());
    std::fflush(stdout);

    std::thread waiter([&] {
      int sig = 0;
      sigwait(&stop_signals, &sig);
      server.stop();
    });
    server.run();
    // run() also returns when the server fails; wake the waiter either way.
    pthread_kill(waiter.native_handle(), SIGTERM);
    waiter.join();
  }
};

struct ExportCmd {
  StudyOptions study;
  std::string out;

  void add(CLI::App& app) {
    study.add(app);
    app.add_option("--out", out, "Corpus JSONL")->required();
  }

  void run(const json& config) {
    require(fs::exists(study.log), "no answer log at " + study.log);
    RunManifest manifest("export", config, study.pair_seed);
    service::ListeningStudy s(study.pairs(), study.log);
    const auto corpus = s.export_corpus();
    data::write_corpus(out, corpus);
    manifest.artifact(out);
    manifest.set("subjects", corpus.subjects.size());
    manifest.set("records", corpus.records.size());
    manifest.write(with_suffix(out, ".manifest.json"));
    std::cout << "exported " << corpus.subjects.size() << " subjects, " << corpus.records.size() << " records to "
              << out << "\n";
  }
};

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"prefnet: personalised audio preference models"};
  app.set_version_flag("--version", kVersion);
  app.set_config("--config", "", "TOML file; [<command>] sections hold option defaults, flags override them");
  app.require_subcommand(1);
  app.fallthrough();  // --config may follow the subcommand

  SynthCmd synth;
  FeaturizeCmd featurize;
  TrainCmd train_cmd;
  CvCmd cv;
  EvaluateCmd evaluate;
  AnalyzeCmd analyze;
  ServeCmd serve;
  ExportCmd export_cmd;

  struct Entry {
    CLI::App* app;
    std::function<void(const json&)> run;
  };
  std::vector<Entry> entries;
  auto add = [&](const char* name, const char* help, auto& cmd) {
    auto* sub = app.add_subcommand(name, help);
    cmd.add(*sub);
    entries.push_back({sub, [&cmd](const json& c) { cmd.run(c); }});
  };
  add("synth", "Generate a synthetic corpus with audio", synth);
  add("featurize", "Compute and cache log-mel features", featurize);
  add("train", "Train one model on one cross-validation rotation", train_cmd);
  add("cv", "Cross-validate a model over the seven folds", cv);
  add("evaluate", "Accuracy of a checkpoint", evaluate);
  add("analyze-weights", "Input influence through the head's two linear layers", analyze);
  add("serve", "Run the listening-test service", serve);
  add("export", "Export answers from a service log as a corpus", export_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  const auto cli_flags = flags_on_command_line(argc, argv);
  for (const auto& e : entries) {
    if (!e.app->parsed()) continue;
    try {
      e.run(resolved_config(*e.app, cli_flags));
      return 0;
    } catch (const ValidationError& err) {
      std::cerr << "error: " << err.what() << "\n";
      return 1;
    } catch (const std::exception& err) {
      std::cerr << "error: " << err.what() << "\n";
      return 2;
    }
  }
  return 1;
}
