#pragma once

// Filtered ranking, MRR / Hits@k, and per-indegree breakdowns.

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "sacn/error.hpp"
#include "sacn/kg_data.hpp"
#include "sacn/tensor.hpp"

namespace sacn {

/// Rank of `gold` after removing every id in `filter` other than gold itself.
/// Ties take the mean position rounded half up: 1 + #greater + ⌈#equal / 2⌉.
template <typename T>
std::size_t filtered_rank(std::span<const T> scores, std::size_t gold, std::span<const EntityId> filter) {
  if (gold >= scores.size()) {
    throw ValidationError("gold id " + std::to_string(gold) + " out of range for " + std::to_string(scores.size()) +
                          " candidates");
  }
  const T g = scores[gold];
  if (!std::isfinite(static_cast<double>(g))) throw NumericError("non-finite gold score");
  std::size_t greater = 0, equal = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] > g) ++greater;
    else if (scores[i] == g && i != gold) ++equal;
  }
  std::vector<EntityId> sorted;
  if (!std::is_sorted(filter.begin(), filter.end())) {
    sorted.assign(filter.begin(), filter.end());
    std::sort(sorted.begin(), sorted.end());
    filter = sorted;
  }
  EntityId prev = std::numeric_limits<EntityId>::max();
  for (EntityId f : filter) {
    if (f == gold || f == prev || f >= scores.size()) continue;
    prev = f;
    if (scores[f] > g) --greater;
    else if (scores[f] == g) --equal;
  }
  return 1 + greater + (equal + 1) / 2;
}

struct MetricReport {
  double mrr = 0.0;
  double hits1 = 0.0;
  double hits3 = 0.0;
  double hits10 = 0.0;
  std::size_t count = 0;
  std::size_t hits1_count = 0;
  std::size_t hits3_count = 0;
  std::size_t hits10_count = 0;
  double reciprocal_sum = 0.0;
};

inline MetricReport summarize(std::span<const std::size_t> ranks) {
  MetricReport r;
  r.count = ranks.size();
  for (std::size_t rank : ranks) {
    if (rank == 0) throw ValidationError("rank must be >= 1");
    r.reciprocal_sum += 1.0 / static_cast<double>(rank);
    r.hits1_count += rank <= 1;
    r.hits3_count += rank <= 3;
    r.hits10_count += rank <= 10;
  }
  if (r.count > 0) {
    const double n = static_cast<double>(r.count);
    r.mrr = r.reciprocal_sum / n;
    r.hits1 = static_cast<double>(r.hits1_count) / n;
    r.hits3 = static_cast<double>(r.hits3_count) / n;
    r.hits10 = static_cast<double>(r.hits10_count) / n;
  }
  return r;
}

struct RankedQuery {
  Query query;
  EntityId gold = 0;
  std::size_t rank = 0;
  std::size_t candidates = 0;
};

/// Ranks every triple of `triples` as an object query. `scorer(span<const Query>)` must
/// return a B×N score matrix; queries are scored in chunks of `batch_size` and results
/// keep the input order.
template <typename Scorer>
std::vector<RankedQuery> rank_triples(std::span<const Triple> triples, const FilterIndex& filter, Scorer&& scorer,
                                      std::size_t batch_size = 256) {
  if (batch_size == 0) throw ValidationError("batch size must be >= 1");
  std::vector<RankedQuery> out;
  out.reserve(triples.size());
  std::vector<Query> batch;
  for (std::size_t start = 0; start < triples.size(); start += batch_size) {
    const std::size_t end = std::min(triples.size(), start + batch_size);
    batch.clear();
    for (std::size_t i = start; i < end; ++i) batch.push_back(Query{triples[i].s, triples[i].r});
    const auto scores = scorer(std::span<const Query>(batch));
    if (scores.rows() != batch.size()) throw ShapeError("scorer returned " + scores.shape());
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const Triple& t = triples[start + b];
      const auto filt = filter.objects(t.s, t.r);
      const std::size_t removed = filt.size() - (std::binary_search(filt.begin(), filt.end(), t.o) ? 1 : 0);
      out.push_back(RankedQuery{batch[b], t.o, filtered_rank(scores.row(b), t.o, filt), scores.cols() - removed});
    }
  }
  return out;
}

inline MetricReport summarize(std::span<const RankedQuery> ranked) {
  std::vector<std::size_t> ranks;
  ranks.reserve(ranked.size());
  for (const auto& r : ranked) ranks.push_back(r.rank);
  return summarize(ranks);
}

/// Metrics over one split of the store; reciprocal triples in the split cover head prediction.
template <typename Scorer>
MetricReport evaluate(const TripleStore& store, Split split, const FilterIndex& filter, Scorer&& scorer,
                      std::size_t batch_size = 256, std::vector<RankedQuery>* ranked_out = nullptr) {
  const auto triples = store.split(split);
  if (triples.empty()) throw ValidationError("split '" + std::string(to_string(split)) + "' is empty");
  auto ranked = rank_triples(std::span<const Triple>(triples), filter, scorer, batch_size);
  MetricReport r = summarize(std::span<const RankedQuery>(ranked));
  if (ranked_out) *ranked_out = std::move(ranked);
  return r;
}

// ---------------------------------------------------------------------------
// Indegree buckets

/// Half-open degree range [lo, hi).
struct Bucket {
  std::size_t lo = 0;
  std::size_t hi = 0;
};

struct BucketReport {
  Bucket bucket;
  MetricReport report;
};

/// [0,100), [100,200), …, [900,1000), [1000, max_degree + 1).
inline std::vector<Bucket> default_indegree_buckets(std::size_t max_degree) {
  std::vector<Bucket> b;
  for (std::size_t lo = 0; lo < 1000; lo += 100) b.push_back({lo, lo + 100});
  b.push_back({1000, std::max<std::size_t>(1001, max_degree + 1)});
  return b;
}

inline void validate_buckets(std::span<const Bucket> buckets) {
  std::vector<Bucket> sorted(buckets.begin(), buckets.end());
  std::sort(sorted.begin(), sorted.end(), [](const Bucket& a, const Bucket& b) { return a.lo < b.lo; });
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (sorted[i].hi <= sorted[i].lo) {
      throw ValidationError("empty bucket [" + std::to_string(sorted[i].lo) + "," + std::to_string(sorted[i].hi) + ")");
    }
    if (i > 0 && sorted[i].lo < sorted[i - 1].hi) {
      throw ValidationError("overlapping buckets [" + std::to_string(sorted[i - 1].lo) + "," +
                            std::to_string(sorted[i - 1].hi) + ") and [" + std::to_string(sorted[i].lo) + "," +
                            std::to_string(sorted[i].hi) + ")");
    }
  }
}

/// Groups ranked queries by the training-graph indegree of their gold entity.
/// Queries whose degree falls in no bucket are left out of every bucket.
inline std::vector<BucketReport> indegree_report(std::span<const RankedQuery> ranked,
                                                 std::span<const std::size_t> indegree,
                                                 std::span<const Bucket> buckets) {
  validate_buckets(buckets);
  std::vector<std::vector<std::size_t>> ranks(buckets.size());
  for (const auto& r : ranked) {
    if (r.gold >= indegree.size()) throw ValidationError("gold entity without indegree");
    const std::size_t d = indegree[r.gold];
    for (std::size_t b = 0; b < buckets.size(); ++b)
      if (d >= buckets[b].lo && d < buckets[b].hi) ranks[b].push_back(r.rank);
  }
  std::vector<BucketReport> out;
  for (std::size_t b = 0; b < buckets.size(); ++b) out.push_back({buckets[b], summarize(ranks[b])});
  return out;
}

inline void write_report_text(std::ostream& os, const MetricReport& global, std::span<const BucketReport> buckets = {}) {
  const auto flags = os.flags();
  os << std::fixed << std::setprecision(4);
  os << "queries  " << global.count << '\n'
     << "MRR      " << global.mrr << '\n'
     << "Hits@1   " << global.hits1 << '\n'
     << "Hits@3   " << global.hits3 << '\n'
     << "Hits@10  " << global.hits10 << '\n';
  if (!buckets.empty()) {
    os << '\n'
       << std::setw(16) << "indegree" << std::setw(8) << "n" << std::setw(9) << "@10" << std::setw(9) << "@3"
       << std::setw(9) << "@1" << std::setw(9) << "MRR" << '\n';
    for (const auto& b : buckets) {
      const std::string range = "[" + std::to_string(b.bucket.lo) + "," + std::to_string(b.bucket.hi) + ")";
      os << std::setw(16) << range << std::setw(8) << b.report.count << std::setw(9) << b.report.hits10
         << std::setw(9) << b.report.hits3 << std::setw(9) << b.report.hits1 << std::setw(9) << b.report.mrr << '\n';
    }
  }
  os.flags(flags);
}

inline void write_report_csv(std::ostream& os, std::span<const BucketReport> buckets) {
  const auto flags = os.flags();
  os << std::setprecision(10);
  os << "bucket_lo,bucket_hi,n,hits10,hits3,hits1,mrr\n";
  for (const auto& b : buckets) {
    os << b.bucket.lo << ',' << b.bucket.hi << ',' << b.report.count << ',' << b.report.hits10 << ','
       << b.report.hits3 << ',' << b.report.hits1 << ',' << b.report.mrr << '\n';
  }
  os.flags(flags);
}

}  // namespace sacn
