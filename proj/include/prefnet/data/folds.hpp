// Copyright 2026 The prefnet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <string>
#include <vector>

#include "prefnet/data/subject.hpp"

namespace prefnet::data {

inline constexpr int kNumFolds = 7;

/// Subjects sorted by (age, subject_id) and cut into contiguous folds whose
/// sizes differ by at most one, larger folds first.
struct FoldPlan {
  std::vector<std::string> order;                 // age-sorted subject ids
  std::vector<std::vector<std::string>> folds;    // folds[k] = ids in fold k
  std::map<std::string, int> assignment;          // id -> fold

  std::vector<std::size_t> sizes() const;
};

/// Test on fold k, validate on fold (k+1) mod 7, train on the rest.
struct Rotation {
  int test_fold = 0;
  int val_fold = 0;
  std::vector<std::string> test;
  std::vector<std::string> val;
  std::vector<std::string> train;
};

/// Requires at least 8 subjects so every training split is non-empty.
FoldPlan make_folds(const std::vector<SubjectInfo>& subjects, int num_folds = kNumFolds);
Rotation rotation(const FoldPlan& plan, int k);

}  // namespace prefnet::data
