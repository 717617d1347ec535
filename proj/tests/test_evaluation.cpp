#include <gtest/gtest.h>

#include <sstream>

#include "support/toy_kg.hpp"

using namespace sacn;
using sacn::testing::brute_force_rank;
using sacn::testing::uniform;

namespace {

std::size_t rank_of(const std::vector<double>& scores, std::size_t gold, std::vector<EntityId> filter = {}) {
  std::sort(filter.begin(), filter.end());
  return filtered_rank<double>(scores, gold, filter);
}

/// Every length-n vector over {0, 1, 2}; small alphabet so ties are common.
std::vector<std::vector<double>> tie_heavy_vectors(std::size_t n) {
  std::vector<std::vector<double>> out;
  std::size_t total = 1;
  for (std::size_t i = 0; i < n; ++i) total *= 3;
  for (std::size_t code = 0; code < total; ++code) {
    std::vector<double> v(n);
    std::size_t c = code;
    for (auto& x : v) {
      x = static_cast<double>(c % 3);
      c /= 3;
    }
    out.push_back(v);
  }
  return out;
}

}  // namespace

TEST(FilteredRank, HandExamples) {
  EXPECT_EQ(rank_of({0.9, 0.5, 0.1}, 1), 2u);
  EXPECT_EQ(rank_of({0.9, 0.5, 0.1}, 1, {0}), 1u);
  EXPECT_EQ(rank_of({0.3, 0.3, 0.3, 0.3, 0.3}, 2), 3u);
  EXPECT_EQ(rank_of({0.3, 0.3, 0.3, 0.3}, 0), 3u);
  EXPECT_EQ(rank_of({0.9, 0.5, 0.1}, 1, {1}), 2u);
  EXPECT_EQ(rank_of({0.9, 0.5, 0.1}, 2, {0, 0, 1, 7}), 1u);
}

TEST(FilteredRank, Errors) {
  const std::vector<double> s{1.0, 2.0};
  EXPECT_THROW(filtered_rank<double>(s, 2, {}), ValidationError);
  const std::vector<double> nan{std::nan(""), 1.0};
  EXPECT_THROW(filtered_rank<double>(nan, 0, {}), NumericError);
}

TEST(FilteredRank, UnsortedFilterIsAccepted) {
  const std::vector<double> s{5, 4, 3, 2, 1};
  const std::vector<EntityId> f{3, 0, 1};
  EXPECT_EQ(filtered_rank<double>(s, 4, f), 2u);
}

TEST(FilteredRank, MatchesBruteForceOnAllSmallOrderings) {
  sacn::testing::Rng rng(1);
  for (std::size_t n = 1; n <= 6; ++n) {
    for (const auto& scores : tie_heavy_vectors(n)) {
      const std::size_t gold = uniform(rng, 0, n - 1);
      std::vector<EntityId> filter;
      for (std::size_t i = 0; i < n; ++i)
        if (uniform(rng, 0, 2) == 0) filter.push_back(static_cast<EntityId>(i));
      ASSERT_EQ(rank_of(scores, gold, filter), brute_force_rank(scores, gold, filter)) << "n=" << n;
      ASSERT_EQ(rank_of(scores, gold), brute_force_rank(scores, gold, {}));
    }
  }
}

TEST(FilteredRank, Properties) {
  sacn::testing::Rng rng(2);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = uniform(rng, 1, 30);
    std::vector<double> scores(n);
    for (auto& s : scores) s = std::round(u(rng) * 2) / 2;
    const std::size_t gold = uniform(rng, 0, n - 1);
    std::vector<EntityId> filter;
    for (std::size_t i = 0; i < n; ++i)
      if (uniform(rng, 0, 3) == 0) filter.push_back(static_cast<EntityId>(i));
    const auto filtered = rank_of(scores, gold, filter);
    const auto unfiltered = rank_of(scores, gold);
    EXPECT_LE(filtered, unfiltered);
    EXPECT_GE(filtered, 1u);
    std::size_t removed = 0;
    for (auto f : filter) removed += f != gold;
    EXPECT_LE(filtered, n - removed);

    std::vector<double> shifted = scores;
    for (auto& s : shifted) s += 7.25;
    EXPECT_EQ(rank_of(shifted, gold, filter), filtered);
  }
}

TEST(Summarize, HandExamples) {
  const std::vector<std::size_t> one{1};
  const auto a = summarize(std::span<const std::size_t>(one));
  EXPECT_DOUBLE_EQ(a.mrr, 1.0);
  EXPECT_DOUBLE_EQ(a.hits1, 1.0);
  EXPECT_DOUBLE_EQ(a.hits10, 1.0);
  const std::vector<std::size_t> two{1, 4};
  const auto b = summarize(std::span<const std::size_t>(two));
  EXPECT_DOUBLE_EQ(b.mrr, 0.625);
  EXPECT_DOUBLE_EQ(b.hits1, 0.5);
  EXPECT_DOUBLE_EQ(b.hits3, 0.5);
  EXPECT_DOUBLE_EQ(b.hits10, 1.0);
  const std::vector<std::size_t> bad{0};
  EXPECT_THROW(summarize(std::span<const std::size_t>(bad)), ValidationError);
  const auto empty = summarize(std::span<const std::size_t>());
  EXPECT_EQ(empty.count, 0u);
}

TEST(Summarize, HitsAreMonotone) {
  sacn::testing::Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::size_t> ranks(uniform(rng, 1, 40));
    for (auto& r : ranks) r = uniform(rng, 1, 20);
    const auto m = summarize(std::span<const std::size_t>(ranks));
    EXPECT_LE(m.hits1, m.hits3);
    EXPECT_LE(m.hits3, m.hits10);
    EXPECT_GT(m.mrr, 0.0);
    EXPECT_LE(m.mrr, 1.0);
  }
}

TEST(Evaluate, MatchesBruteForceWithHandCodedScorer) {
  const auto ds = add_reciprocal(assemble_dataset(
      sacn::testing::raw({{"a", "r", "b"}, {"a", "r", "c"}, {"b", "s", "d"}, {"c", "r", "e"}, {"e", "s", "a"}}),
      sacn::testing::raw({{"a", "r", "d"}, {"b", "s", "e"}}), sacn::testing::raw({{"d", "r", "a"}, {"c", "s", "b"}})));
  const auto filter = build_filter_index(ds);
  const std::size_t n = ds.vocab.num_entities();
  const auto score_of = [n](const Query& q, std::size_t o) { return static_cast<double>((q.s * 3 + q.r * 5 + o * 7) % 4); };
  const auto scorer = [&](std::span<const Query> qs) {
    Matrix<double> m(qs.size(), n);
    for (std::size_t b = 0; b < qs.size(); ++b)
      for (std::size_t o = 0; o < n; ++o) m(b, o) = score_of(qs[b], o);
    return m;
  };
  for (Split split : {Split::valid, Split::test}) {
    std::vector<RankedQuery> ranked;
    const auto report = evaluate(ds.store, split, filter, scorer, 3, &ranked);
    const auto triples = ds.store.split(split);
    ASSERT_EQ(ranked.size(), triples.size());
    double rr = 0;
    for (std::size_t i = 0; i < triples.size(); ++i) {
      const auto& t = triples[i];
      std::vector<double> scores(n);
      for (std::size_t o = 0; o < n; ++o) scores[o] = score_of(Query{t.s, t.r}, o);
      const auto objs = filter.objects(t.s, t.r);
      const auto ref = brute_force_rank(scores, t.o, {objs.begin(), objs.end()});
      EXPECT_EQ(ranked[i].rank, ref);
      EXPECT_EQ(ranked[i].gold, t.o);
      EXPECT_LE(ranked[i].rank, ranked[i].candidates);
      rr += 1.0 / static_cast<double>(ref);
    }
    EXPECT_NEAR(report.mrr, rr / static_cast<double>(triples.size()), 1e-15);
    EXPECT_EQ(report.count, 4u);
  }
}

TEST(Evaluate, ChunkSizeDoesNotChangeResults) {
  const auto ds = toy_dataset(9, 2, 20, 4);
  const auto filter = build_filter_index(ds);
  const auto scorer = [&](std::span<const Query> qs) {
    Matrix<double> m(qs.size(), 9);
    for (std::size_t b = 0; b < qs.size(); ++b)
      for (std::size_t o = 0; o < 9; ++o) m(b, o) = std::sin(double(qs[b].s * 11 + qs[b].r * 3 + o));
    return m;
  };
  std::vector<RankedQuery> r1, r7;
  evaluate(ds.store, Split::test, filter, scorer, 1, &r1);
  evaluate(ds.store, Split::test, filter, scorer, 7, &r7);
  ASSERT_EQ(r1.size(), r7.size());
  for (std::size_t i = 0; i < r1.size(); ++i) EXPECT_EQ(r1[i].rank, r7[i].rank);
  EXPECT_THROW(evaluate(ds.store, Split::test, filter, scorer, 0), ValidationError);
}

TEST(IndegreeReport, SingleBucketEqualsGlobal) {
  std::vector<RankedQuery> ranked;
  for (std::size_t i = 0; i < 5; ++i) ranked.push_back(RankedQuery{{0, 0}, static_cast<EntityId>(i), i + 1, 5});
  const std::vector<std::size_t> degree(5, 0);
  const std::vector<Bucket> one{{0, 100}};
  const auto rep = indegree_report(ranked, degree, one);
  const auto global = summarize(std::span<const RankedQuery>(ranked));
  ASSERT_EQ(rep.size(), 1u);
  EXPECT_EQ(rep[0].report.mrr, global.mrr);
  EXPECT_EQ(rep[0].report.hits10, global.hits10);
}

TEST(IndegreeReport, PartitionIdentity) {
  sacn::testing::Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t entities = uniform(rng, 1, 30);
    std::vector<std::size_t> degree(entities);
    for (auto& d : degree) d = uniform(rng, 0, 1200);
    std::vector<RankedQuery> ranked(uniform(rng, 1, 60));
    for (auto& r : ranked) {
      r.gold = static_cast<EntityId>(uniform(rng, 0, entities - 1));
      r.rank = uniform(rng, 1, 15);
    }
    const auto buckets = default_indegree_buckets(*std::max_element(degree.begin(), degree.end()));
    const auto rep = indegree_report(ranked, degree, buckets);
    const auto global = summarize(std::span<const RankedQuery>(ranked));
    std::size_t count = 0, h1 = 0, h3 = 0, h10 = 0;
    double rr = 0;
    for (const auto& b : rep) {
      count += b.report.count;
      h1 += b.report.hits1_count;
      h3 += b.report.hits3_count;
      h10 += b.report.hits10_count;
      rr += b.report.reciprocal_sum;
    }
    EXPECT_EQ(count, global.count);
    EXPECT_EQ(h1, global.hits1_count);
    EXPECT_EQ(h3, global.hits3_count);
    EXPECT_EQ(h10, global.hits10_count);
    EXPECT_NEAR(rr, global.reciprocal_sum, 1e-12);
    double weighted = 0;
    for (const auto& b : rep) weighted += b.report.hits10 * static_cast<double>(b.report.count);
    EXPECT_NEAR(weighted / static_cast<double>(global.count), global.hits10, 1e-15);
  }
}

TEST(IndegreeReport, BucketValidation) {
  const std::vector<Bucket> overlap{{0, 100}, {50, 150}};
  EXPECT_THROW(validate_buckets(overlap), ValidationError);
  const std::vector<Bucket> empty{{10, 10}};
  EXPECT_THROW(validate_buckets(empty), ValidationError);
  const std::vector<Bucket> adjacent{{100, 200}, {0, 100}};
  EXPECT_NO_THROW(validate_buckets(adjacent));
  const auto def = default_indegree_buckets(5000);
  ASSERT_EQ(def.size(), 11u);
  EXPECT_EQ(def.front().hi, 100u);
  EXPECT_EQ(def.back().lo, 1000u);
  EXPECT_EQ(def.back().hi, 5001u);
}

TEST(Reports, TextAndCsvLayout) {
  const std::vector<std::size_t> ranks{1, 2, 11};
  const auto m = summarize(std::span<const std::size_t>(ranks));
  std::vector<BucketReport> buckets{{{0, 100}, m}};
  std::ostringstream text, csv;
  write_report_text(text, m, buckets);
  write_report_csv(csv, buckets);
  EXPECT_NE(text.str().find("MRR      0.5303"), std::string::npos);
  EXPECT_NE(text.str().find("[0,100)"), std::string::npos);
  EXPECT_EQ(csv.str().substr(0, csv.str().find('\n')), "bucket_lo,bucket_hi,n,hits10,hits3,hits1,mrr");
}
