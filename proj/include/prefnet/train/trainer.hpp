// Copyright 2026 The prefnet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "json.hpp"
#include "prefnet/augment/spec_augment.hpp"
#include "prefnet/core/checkpoint.hpp"
#include "prefnet/model/model.hpp"
#include "prefnet/train/examples.hpp"

namespace prefnet::train {

struct TrainConfig {
  double lr0 = 5e-4;
  double lr_decay = 0.95;  // per epoch
  std::size_t batch_size = 64;
  std::size_t max_epochs = 50;
  std::size_t patience = 10;
  std::uint64_t seed = 1;
  augment::AugmentConfig augment;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

/// Learning rate used during epoch `epoch` (0-based): lr0 * lr_decay^epoch.
double learning_rate(const TrainConfig& cfg, std::size_t epoch);

/// Patience counter over validation losses. A loss counts as an improvement
/// only when strictly lower than every earlier one.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

  /// Records one epoch's validation loss; returns true when it is a new best.
  bool observe(double val_loss);
  bool should_stop() const { return stale_ >= patience_; }
  std::size_t best_epoch() const { return best_epoch_; }  // 0-based
  double best_loss() const { return best_; }
  std::size_t epochs() const { return seen_; }

 private:
  std::size_t patience_;
  std::size_t stale_ = 0;
  std::size_t seen_ = 0;
  std::size_t best_epoch_ = 0;
  double best_ = std::numeric_limits<double>::infinity();
};

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double lr = 0;
  double train_loss = 0;
  double val_loss = 0;
  bool improved = false;
};

struct TrainResult {
  std::vector<StoredTensor> best_parameters;
  std::size_t best_epoch = 0;  // 1-based
  double best_val_loss = 0;
  std::vector<EpochLog> history;
  bool stopped_early = false;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Seeded shuffling, batching, training-only augmentation, Adam with per-epoch
/// decay, validation loss after every epoch and early stopping. On return the
/// network holds the parameters of the best validation epoch.
TrainResult train_model(model::PreferenceNet<float>& net, const TrainConfig& cfg, const TrainingData& data,
                        const std::vector<PairExample>& train, const std::vector<PairExample>& val,
                        const EpochCallback& on_epoch = {});

/// Inference-mode pair probabilities, no augmentation.
std::vector<std::array<double, 2>> predict(model::PreferenceNet<float>& net, const TrainingData& data,
                                           const std::vector<PairExample>& examples, std::size_t batch_size = 64);

/// Mean negative log-likelihood of the labels in inference mode.
double mean_loss(model::PreferenceNet<float>& net, const TrainingData& data,
                 const std::vector<PairExample>& examples, std::size_t batch_size = 64);

/// A prediction is correct when the labelled side has strictly the larger
/// probability; exact ties count as incorrect.
bool prediction_correct(const std::array<double, 2>& probs, int label);
double accuracy(const std::vector<std::array<double, 2>>& probs, const std::vector<int>& labels);

double evaluate_accuracy(model::PreferenceNet<float>& net, const TrainingData& data,
                         const std::vector<PairExample>& examples, std::size_t batch_size = 64);

}  // namespace prefnet::train
