// Copyright 2026 The prefnet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "prefnet/data/corpus.hpp"
#include "prefnet/data/folds.hpp"
#include "prefnet/model/model.hpp"
#include "prefnet/train/trainer.hpp"

namespace prefnet::train {

struct CvConfig {
  std::size_t runs = 21;
  std::uint64_t base_seed = 1;
  std::size_t jobs = 1;
  std::vector<int> folds;  // test folds to run; empty means all

  void validate() const;
  nlohmann::json to_json() const;
};

/// Seed of run `run` (0-based): base * 1000 + run. Controls initialization,
/// shuffling and augmentation.
std::uint64_t run_seed(std::uint64_t base_seed, std::size_t run);

struct Summary {
  double mean = 0;
  double std = 0;  // population standard deviation
};
Summary summarize(std::span<const double> values);

struct FoldResult {
  int fold = 0;                 // 0-based
  std::size_t n_questions = 0;  // test pairs in the fold
  std::vector<double> accuracies;
  std::vector<std::size_t> best_epochs;
  double mean = 0;
  double std = 0;
};

/// sum(mean_k * Q_k) / sum(Q_k).
double weighted_overall(const std::vector<FoldResult>& folds);

struct ExperimentReport {
  model::ModelConfig model;
  TrainConfig train;
  CvConfig cv;
  std::vector<FoldResult> folds;
  double overall = 0;

  nlohmann::json to_json() const;
};

/// Throws Error when any two of the rotation's subject sets intersect.
void check_disjoint(const data::Rotation& rot);

struct CellProgress {
  int fold = 0;
  std::size_t run = 0;
  double accuracy = 0;
  std::size_t best_epoch = 0;
  std::size_t done = 0;
  std::size_t total = 0;
};
using CellCallback = std::function<void(const CellProgress&)>;

/// For each requested test fold k: train on the remaining folds except the
/// validation fold (k+1) mod 7, early-stop on the validation fold, test on k,
/// `runs` times with run_seed(base, run). Cells run on `jobs` threads; the
/// report does not depend on the thread count.
ExperimentReport run_cv(const data::Corpus& corpus, const TrainingData& data, const model::ModelConfig& model_cfg,
                        const TrainConfig& train_cfg, const CvConfig& cv, const CellCallback& on_cell = {});

}  // namespace prefnet::train
