// Copyright 2026 The prefnet Authors
// SPDX-License-Identifier: Apache-2.0

#include "prefnet/data/folds.hpp"

#include <algorithm>

#include "prefnet/core/error.hpp"

namespace prefnet::data {

std::vector<std::size_t> FoldPlan::sizes() const {
  std::vector<std::size_t> s;
  for (const auto& f : folds) s.push_back(f.size());
  return s;
}

FoldPlan make_folds(const std::vector<SubjectInfo>& subjects, int num_folds) {
  if (num_folds < 3) throw ValidationError("make_folds: need at least 3 folds");
  if (subjects.size() < static_cast<std::size_t>(num_folds) + 1) {
    throw ValidationError("make_folds: " + std::to_string(subjects.size()) + " subjects, need at least " +
                          std::to_string(num_folds + 1));
  }
  std::vector<const SubjectInfo*> sorted;
  for (const auto& s : subjects) sorted.push_back(&s);
  std::sort(sorted.begin(), sorted.end(), [](const SubjectInfo* a, const SubjectInfo* b) {
    if (a->age != b->age) return a->age < b->age;
    return a->subject_id < b->subject_id;
  });
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (sorted[i]->subject_id == sorted[i - 1]->subject_id) {
      throw ValidationError("make_folds: duplicate subject_id '" + sorted[i]->subject_id + "'");
    }
  }
  FoldPlan plan;
  plan.folds.resize(num_folds);
  const std::size_t n = sorted.size(), base = n / num_folds, extra = n % num_folds;
  std::size_t pos = 0;
  for (int k = 0; k < num_folds; ++k) {
    const std::size_t size = base + (static_cast<std::size_t>(k) < extra ? 1 : 0);
    for (std::size_t i = 0; i < size; ++i, ++pos) {
      const auto& id = sorted[pos]->subject_id;
      plan.order.push_back(id);
      plan.folds[k].push_back(id);
      plan.assignment[id] = k;
    }
  }
  return plan;
}

Rotation rotation(const FoldPlan& plan, int k) {
  const int n = static_cast<int>(plan.folds.size());
  if (k < 0 || k >= n) throw ValidationError("rotation: fold " + std::to_string(k) + " outside [0," + std::to_string(n) + ")");
  Rotation r;
  r.test_fold = k;
  r.val_fold = (k + 1) % n;
  r.test = plan.folds[r.test_fold];
  r.val = plan.folds[r.val_fold];
  for (int f = 0; f < n; ++f) {
    if (f == r.test_fold || f == r.val_fold) continue;
    r.train.insert(r.train.end(), plan.folds[f].begin(), plan.folds[f].end());
  }
  return r;
}

}  // namespace prefnet::data
