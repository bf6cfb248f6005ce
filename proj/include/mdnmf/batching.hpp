#pragma once

// Mini-batch schedules over several datasets of different sizes. A plan
// describes, per batch and per dataset, which contiguous column spans to
// visit. Strategies:
//   proportional - non-designated batch sizes are derived so every dataset
//                  finishes its pass in the same number of batches;
//   undersample  - the epoch ends with the dataset that has the fewest
//                  batches, larger datasets leave their tail unused;
//   oversample   - the epoch ends with the dataset that has the most
//                  batches, smaller datasets wrap around to their first
//                  columns;
//   iterative    - every dataset keeps its own cursor across epochs and
//                  reshuffles alone whenever its pass completes; an epoch
//                  is one pass of the designated dataset.
// A final short batch is kept as-is, never dropped.

#include <mdnmf/core.hpp>

#include <cmath>
#include <vector>

namespace mdnmf {

enum class BatchStrategy { kProportional, kUndersample, kOversample, kIterative };

/// Dataset column count and requested batch size (0 means full batch).
struct DatasetExtent {
  Index size = 0;
  Index batch = 0;
};

/// Contiguous run of dataset columns. `fresh_shuffle` marks spans that an
/// iterative plan draws from a newly reshuffled pass; the consumer must
/// reshuffle that dataset before reading the span.
struct ColumnSpan {
  Index begin = 0;
  Index count = 0;
  bool fresh_shuffle = false;
};

/// Cursor positions carried across epochs by the iterative strategy.
/// `pending_fresh[j]` remembers that dataset j finished a pass and must be
/// reshuffled before its next span is consumed.
struct PlanState {
  std::vector<Index> cursor;
  std::vector<char> pending_fresh;
};

/// slices[batch][dataset] lists the spans each batch visits.
struct EpochPlan {
  Index batches = 0;
  std::vector<std::vector<std::vector<ColumnSpan>>> slices;
};

inline EpochPlan batch_plan(const std::vector<DatasetExtent>& extents,
                            BatchStrategy strategy, Index designated = 0,
                            PlanState* state = nullptr) {
  const Index n = static_cast<Index>(extents.size());
  check_config(n >= 1, "batch_plan: need at least one dataset");
  check_config(designated >= 0 && designated < n,
               "batch_plan: designated dataset out of range");
  std::vector<Index> size(static_cast<size_t>(n));
  std::vector<Index> batch(static_cast<size_t>(n));
  for (Index j = 0; j < n; ++j) {
    const DatasetExtent& e = extents[static_cast<size_t>(j)];
    check_config(e.size >= 1, "batch_plan: datasets must be non-empty");
    check_config(e.batch >= 0, "batch_plan: batch sizes must be >= 0");
    size[static_cast<size_t>(j)] = e.size;
    batch[static_cast<size_t>(j)] = e.batch == 0 ? e.size : e.batch;
  }

  auto passes = [&](Index j) {
    return (size[static_cast<size_t>(j)] + batch[static_cast<size_t>(j)] - 1) /
           batch[static_cast<size_t>(j)];
  };

  if (strategy == BatchStrategy::kProportional) {
    const double ratio =
        static_cast<double>(batch[static_cast<size_t>(designated)]) /
        static_cast<double>(size[static_cast<size_t>(designated)]);
    for (Index j = 0; j < n; ++j) {
      if (j == designated) continue;
      batch[static_cast<size_t>(j)] = std::max<Index>(
          1, std::llround(ratio * static_cast<double>(size[static_cast<size_t>(j)])));
    }
  }

  Index batches = passes(designated);
  if (strategy == BatchStrategy::kUndersample) {
    for (Index j = 0; j < n; ++j) batches = std::min(batches, passes(j));
  } else if (strategy == BatchStrategy::kOversample) {
    for (Index j = 0; j < n; ++j) batches = std::max(batches, passes(j));
  }

  PlanState local;
  if (strategy == BatchStrategy::kIterative) {
    if (state == nullptr) state = &local;
    if (state->cursor.empty()) {
      state->cursor.assign(static_cast<size_t>(n), 0);
      state->pending_fresh.assign(static_cast<size_t>(n), 0);
    }
    check_config(static_cast<Index>(state->cursor.size()) == n &&
                     state->pending_fresh.size() == state->cursor.size(),
                 "batch_plan: cursor count mismatch");
    state->cursor[static_cast<size_t>(designated)] = 0;
    state->pending_fresh[static_cast<size_t>(designated)] = 0;
  }

  EpochPlan plan;
  plan.batches = batches;
  plan.slices.assign(static_cast<size_t>(batches), {});
  for (Index b = 0; b < batches; ++b) {
    auto& row = plan.slices[static_cast<size_t>(b)];
    row.assign(static_cast<size_t>(n), {});
    for (Index j = 0; j < n; ++j) {
      const Index sz = size[static_cast<size_t>(j)];
      const Index bs = batch[static_cast<size_t>(j)];
      auto& spans = row[static_cast<size_t>(j)];
      if (strategy == BatchStrategy::kIterative) {
        Index& cur = state->cursor[static_cast<size_t>(j)];
        char& pending = state->pending_fresh[static_cast<size_t>(j)];
        Index want = bs;
        if (j == designated) want = std::min(bs, sz - b * bs);
        while (want > 0) {
          const Index take = std::min(want, sz - cur);
          spans.push_back({cur, take, pending != 0});
          pending = 0;
          cur += take;
          want -= take;
          if (cur == sz) {
            cur = 0;
            pending = 1;
          }
        }
        continue;
      }
      const Index begin = b * bs;
      if (passes(j) >= batches || strategy == BatchStrategy::kUndersample ||
          strategy == BatchStrategy::kProportional) {
        // Linear pass with a clipped (possibly short or empty) final slice.
        if (begin < sz) spans.push_back({begin, std::min(bs, sz - begin), false});
      } else {
        // Oversample wrap: walk positions modulo the dataset size.
        Index start = begin % sz;
        Index want = bs;
        while (want > 0) {
          const Index take = std::min(want, sz - start);
          spans.push_back({start, take, false});
          want -= take;
          start = 0;
        }
      }
    }
  }
  return plan;
}

/// Total number of columns a plan visits for one dataset.
inline Index plan_coverage(const EpochPlan& plan, Index dataset) {
  Index total = 0;
  for (const auto& row : plan.slices)
    for (const ColumnSpan& s : row[static_cast<size_t>(dataset)]) total += s.count;
  return total;
}

}  // namespace mdnmf
