// Copyright 2026 The prefnet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>

namespace prefnet {

/// Calls fn(i) for every i in [0, n) on up to `jobs` threads (the caller's
/// thread included). After the first exception no new indices start; that
/// exception is rethrown once all threads have joined.
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn);

/// Keeps large freed buffers inside the process heap (glibc) so the per-batch
/// activation tensors are recycled instead of being re-mapped and
/// page-faulted on every step. A no-op elsewhere. Call once from main().
void tune_allocator();

}  // namespace prefnet
