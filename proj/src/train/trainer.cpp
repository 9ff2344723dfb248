// Copyright 2026 The prefnet Authors
// SPDX-License-Identifier: Apache-2.0

#include "prefnet/train/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "prefnet/core/adam.hpp"
#include "prefnet/core/error.hpp"
#include "prefnet/core/ops.hpp"

namespace prefnet::train {

using nlohmann::json;

namespace {

std::mt19937_64 stream(std::uint64_t seed, std::uint32_t tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), tag};
  return std::mt19937_64(seq);
}

template <typename Fn>
void for_each_batch(std::size_t count, std::size_t batch_size, Fn&& fn) {
  for (std::size_t start = 0; start < count; start += batch_size) fn(start, std::min(batch_size, count - start));
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr0 > 0)) throw ValidationError("train: lr0 must be positive");
  if (!(lr_decay > 0 && lr_decay <= 1)) throw ValidationError("train: lr_decay must lie in (0, 1]");
  if (batch_size == 0) throw ValidationError("train: batch_size must be positive");
  if (max_epochs == 0) throw ValidationError("train: max_epochs must be positive");
  if (patience == 0) throw ValidationError("train: patience must be positive");
  augment.validate();
}

json TrainConfig::to_json() const {
  return {{"lr0", lr0},
          {"lr_decay", lr_decay},
          {"batch_size", batch_size},
          {"max_epochs", max_epochs},
          {"patience", patience},
          {"seed", seed},
          {"augment",
           {{"enabled", augment.enabled},
            {"stripes_per_axis", augment.stripes_per_axis},
            {"max_time_width", augment.max_time_width},
            {"max_freq_width", augment.max_freq_width},
            {"fill_value", augment.fill_value}}}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  try {
    TrainConfig c;
    c.lr0 = j.at("lr0").get<double>();
    c.lr_decay = j.at("lr_decay").get<double>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.max_epochs = j.at("max_epochs").get<std::size_t>();
    c.patience = j.at("patience").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    const auto& a = j.at("augment");
    c.augment.enabled = a.at("enabled").get<bool>();
    c.augment.stripes_per_axis = a.at("stripes_per_axis").get<int>();
    c.augment.max_time_width = a.at("max_time_width").get<int>();
    c.augment.max_freq_width = a.at("max_freq_width").get<int>();
    c.augment.fill_value = a.at("fill_value").get<double>();
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw FormatError(std::string("train config: ") + e.what());
  }
}

double learning_rate(const TrainConfig& cfg, std::size_t epoch) {
  return cfg.lr0 * std::pow(cfg.lr_decay, static_cast<double>(epoch));
}

bool EarlyStopping::observe(double val_loss) {
  const bool improved = val_loss < best_;
  if (improved) {
    best_ = val_loss;
    best_epoch_ = seen_;
    stale_ = 0;
  } else {
    ++stale_;
  }
  ++seen_;
  return improved;
}

TrainResult train_model(model::PreferenceNet<float>& net, const TrainConfig& cfg, const TrainingData& data,
                        const std::vector<PairExample>& train, const std::vector<PairExample>& val,
                        const EpochCallback& on_epoch) {
  cfg.validate();
  if (train.empty()) throw ValidationError("train_model: empty training set");
  if (val.empty()) throw ValidationError("train_model: empty validation set");

  const auto params = net.parameters();
  Adam<float> opt(params.params, AdamConfig{cfg.lr0});
  auto shuffle_rng = stream(cfg.seed, 1);
  auto augment_rng = stream(cfg.seed, 2);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  EarlyStopping stopper(cfg.patience);
  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    EpochLog log;
    log.epoch = epoch + 1;
    log.lr = learning_rate(cfg, epoch);
    opt.set_lr(log.lr);
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0;
    for_each_batch(order.size(), cfg.batch_size, [&](std::size_t start, std::size_t count) {
      const auto batch = make_batch(data, train, std::span(order).subspan(start, count), &cfg.augment, &augment_rng);
      opt.zero_grad();
      auto loss = nll_loss(net.pair_probabilities(batch.specs, batch.subjects, Mode::Training), batch.labels);
      loss.backward();
      opt.step();
      loss_sum += static_cast<double>(loss.item()) * static_cast<double>(count);
    });
    log.train_loss = loss_sum / static_cast<double>(order.size());
    log.val_loss = mean_loss(net, data, val, cfg.batch_size);
    log.improved = stopper.observe(log.val_loss);
    if (log.improved) {
      result.best_parameters = snapshot(params);
      result.best_epoch = log.epoch;
      result.best_val_loss = log.val_loss;
    }
    result.history.push_back(log);
    if (on_epoch) on_epoch(log);
    if (stopper.should_stop()) {
      result.stopped_early = epoch + 1 < cfg.max_epochs;
      break;
    }
  }
  if (result.best_parameters.empty()) {
    throw Error("train_model: validation loss was never finite");
  }
  restore(params, result.best_parameters);
  return result;
}

std::vector<std::array<double, 2>> predict(model::PreferenceNet<float>& net, const TrainingData& data,
                                           const std::vector<PairExample>& examples, std::size_t batch_size) {
  NoGradGuard no_grad;
  std::vector<std::array<double, 2>> out;
  out.reserve(examples.size());
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  for_each_batch(order.size(), std::max<std::size_t>(batch_size, 1), [&](std::size_t start, std::size_t count) {
    const auto batch = make_batch(data, examples, std::span(order).subspan(start, count));
    const auto probs = net.pair_probabilities(batch.specs, batch.subjects, Mode::Inference);
    const auto p = probs.data();
    for (std::size_t i = 0; i < count; ++i) out.push_back({p[2 * i], p[2 * i + 1]});
  });
  return out;
}

double mean_loss(model::PreferenceNet<float>& net, const TrainingData& data,
                 const std::vector<PairExample>& examples, std::size_t batch_size) {
  if (examples.empty()) throw ValidationError("mean_loss: empty example set");
  // Same clamp as nll_loss on float probabilities, so saturation stays finite.
  constexpr double kTiny = std::numeric_limits<float>::min();
  const auto probs = predict(net, data, examples, batch_size);
  double sum = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    sum -= std::log(std::max(probs[i][static_cast<std::size_t>(examples[i].label)], kTiny));
  }
  return sum / static_cast<double>(probs.size());
}

bool prediction_correct(const std::array<double, 2>& probs, int label) {
  const auto l = static_cast<std::size_t>(label);
  return probs[l] > probs[1 - l];
}

double accuracy(const std::vector<std::array<double, 2>>& probs, const std::vector<int>& labels) {
  if (probs.empty() || probs.size() != labels.size()) {
    throw ValidationError("accuracy: need equally many, and at least one, predictions and labels");
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) correct += prediction_correct(probs[i], labels[i]) ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(probs.size());
}

double evaluate_accuracy(model::PreferenceNet<float>& net, const TrainingData& data,
                         const std::vector<PairExample>& examples, std::size_t batch_size) {
  std::vector<int> labels;
  labels.reserve(examples.size());
  for (const auto& e : examples) labels.push_back(e.label);
  return accuracy(predict(net, data, examples, batch_size), labels);
}

}  // namespace prefnet::train
