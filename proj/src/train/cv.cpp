// Copyright 2026 The prefnet Authors
// SPDX-License-Identifier: Apache-2.0

#include "prefnet/train/cv.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <set>

#include "prefnet/core/error.hpp"
#include "prefnet/core/parallel.hpp"

namespace prefnet::train {

using nlohmann::json;

void CvConfig::validate() const {
  if (runs == 0) throw ValidationError("cv: runs must be positive");
  if (jobs == 0) throw ValidationError("cv: jobs must be positive");
  for (int k : folds) {
    if (k < 0 || k >= data::kNumFolds) throw ValidationError("cv: fold " + std::to_string(k) + " outside [0, 7)");
  }
}

json CvConfig::to_json() const {
  // Reported 1-based, like the fold entries of a report.
  json shown = json::array();
  for (int k : folds) shown.push_back(k + 1);
  return {{"runs", runs}, {"base_seed", base_seed}, {"folds", shown}};
}

std::uint64_t run_seed(std::uint64_t base_seed, std::size_t run) { return base_seed * 1000 + run; }

Summary summarize(std::span<const double> values) {
  if (values.empty()) throw ValidationError("summarize: no values");
  Summary s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  double ss = 0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(ss / static_cast<double>(values.size()));
  return s;
}

double weighted_overall(const std::vector<FoldResult>& folds) {
  double num = 0;
  double den = 0;
  for (const auto& f : folds) {
    num += f.mean * static_cast<double>(f.n_questions);
    den += static_cast<double>(f.n_questions);
  }
  if (den == 0) throw ValidationError("weighted_overall: no test questions");
  return num / den;
}

json ExperimentReport::to_json() const {
  json folds_json = json::array();
  for (const auto& f : folds) {
    folds_json.push_back({{"fold", f.fold + 1},
                          {"questions", f.n_questions},
                          {"mean", f.mean},
                          {"std", f.std},
                          {"accuracies", f.accuracies},
                          {"best_epochs", f.best_epochs}});
  }
  return {{"model", model.to_json()},
          {"train", train.to_json()},
          {"cv", cv.to_json()},
          {"folds", folds_json},
          {"overall", overall}};
}

void check_disjoint(const data::Rotation& rot) {
  const std::set<std::string> test(rot.test.begin(), rot.test.end());
  const std::set<std::string> val(rot.val.begin(), rot.val.end());
  for (const auto& id : rot.val) {
    if (test.contains(id)) throw Error("fold leakage: subject " + id + " in both test and validation");
  }
  for (const auto& id : rot.train) {
    if (test.contains(id)) throw Error("fold leakage: subject " + id + " in both train and test");
    if (val.contains(id)) throw Error("fold leakage: subject " + id + " in both train and validation");
  }
}

ExperimentReport run_cv(const data::Corpus& corpus, const TrainingData& data, const model::ModelConfig& model_cfg,
                        const TrainConfig& train_cfg, const CvConfig& cv, const CellCallback& on_cell) {
  cv.validate();
  train_cfg.validate();
  model_cfg.validate();
  const auto plan = data::make_folds(corpus.subjects);

  std::vector<int> folds = cv.folds;
  if (folds.empty()) {
    for (int k = 0; k < data::kNumFolds; ++k) folds.push_back(k);
  }
  std::sort(folds.begin(), folds.end());
  folds.erase(std::unique(folds.begin(), folds.end()), folds.end());

  struct FoldSets {
    std::vector<PairExample> train, val, test;
  };
  std::vector<FoldSets> sets;
  for (int k : folds) {
    const auto rot = data::rotation(plan, k);
    check_disjoint(rot);
    sets.push_back({data.examples(corpus.records, rot.train), data.examples(corpus.records, rot.val),
                    data.examples(corpus.records, rot.test)});
    if (sets.back().test.empty()) throw ValidationError("cv: fold " + std::to_string(k + 1) + " has no test pairs");
  }

  const std::size_t total = folds.size() * cv.runs;
  std::vector<double> accuracies(total);
  std::vector<std::size_t> best_epochs(total);
  std::size_t done = 0;
  std::mutex progress_mutex;
  parallel_for(total, cv.jobs, [&](std::size_t cell) {
    const std::size_t f = cell / cv.runs;
    const std::size_t run = cell % cv.runs;
    const std::uint64_t seed = run_seed(cv.base_seed, run);
    TrainConfig cfg = train_cfg;
    cfg.seed = seed;
    model::PreferenceNet<float> net(model_cfg, seed);
    const auto trained = train_model(net, cfg, data, sets[f].train, sets[f].val);
    accuracies[cell] = evaluate_accuracy(net, data, sets[f].test, cfg.batch_size);
    best_epochs[cell] = trained.best_epoch;
    std::lock_guard lock(progress_mutex);
    ++done;
    if (on_cell) on_cell({folds[f], run, accuracies[cell], best_epochs[cell], done, total});
  });

  ExperimentReport report{model_cfg, train_cfg, cv, {}, 0};
  for (std::size_t f = 0; f < folds.size(); ++f) {
    FoldResult r;
    r.fold = folds[f];
    r.n_questions = sets[f].test.size();
    r.accuracies.assign(accuracies.begin() + static_cast<std::ptrdiff_t>(f * cv.runs),
                        accuracies.begin() + static_cast<std::ptrdiff_t>((f + 1) * cv.runs));
    r.best_epochs.assign(best_epochs.begin() + static_cast<std::ptrdiff_t>(f * cv.runs),
                         best_epochs.begin() + static_cast<std::ptrdiff_t>((f + 1) * cv.runs));
    const auto s = summarize(r.accuracies);
    r.mean = s.mean;
    r.std = s.std;
    report.folds.push_back(std::move(r));
  }
  report.overall = weighted_overall(report.folds);
  return report;
}

}  // namespace prefnet::train
