#include <gtest/gtest.h>

#include "support/toy_kg.hpp"

using namespace sacn;
using sacn::testing::random_matrix;
using sacn::testing::uniform;

namespace {

/// Explicit pad-then-slide reference for one kernel.
std::vector<double> slide(const std::vector<double>& es, const std::vector<double>& er, const std::vector<double>& w0,
                          const std::vector<double>& w1) {
  const std::size_t k = w0.size();
  const auto ps = pad<double>(es, k);
  const auto pr = pad<double>(er, k);
  std::vector<double> out(es.size());
  for (std::size_t n = 0; n < es.size(); ++n)
    for (std::size_t tau = 0; tau < k; ++tau) out[n] += w0[tau] * ps[n + tau] + w1[tau] * pr[n + tau];
  return out;
}

std::vector<double> to_vec(const Matrix<double>& m) { return {m.values().begin(), m.values().end()}; }

}  // namespace

TEST(Padding, WidthsForOddAndEvenKernels) {
  EXPECT_EQ(pad_left(1), 0u);
  EXPECT_EQ(pad_right(1), 0u);
  EXPECT_EQ(pad_left(2), 0u);
  EXPECT_EQ(pad_right(2), 1u);
  EXPECT_EQ(pad_left(3), 1u);
  EXPECT_EQ(pad_right(3), 1u);
  EXPECT_EQ(pad_left(5), 2u);
  EXPECT_EQ(pad_right(5), 2u);
  for (std::size_t k : {1u, 2u, 3u, 4u, 5u, 7u}) EXPECT_EQ(pad_left(k) + pad_right(k), k - 1);
  const std::vector<double> e{1, 2, 3};
  EXPECT_EQ(pad<double>(e, 3), (std::vector<double>{0, 1, 2, 3, 0}));
  EXPECT_EQ(pad<double>(e, 2), (std::vector<double>{1, 2, 3, 0}));
  EXPECT_THROW(pad<double>(e, 0), ValidationError);
}

TEST(ConvForward, OutputWidthEqualsInputWidth) {
  sacn::testing::Rng rng(1);
  for (std::size_t k : {1u, 2u, 3u, 5u}) {
    for (std::size_t f : {1u, 4u, 9u}) {
      const auto es = random_matrix<double>(rng, 1, f);
      const auto er = random_matrix<double>(rng, 1, f);
      const auto m = conv_forward<double>(es.row(0), er.row(0), random_matrix<double>(rng, 3, 2 * k), k);
      EXPECT_EQ(m.rows(), 3u);
      EXPECT_EQ(m.cols(), f);
    }
  }
}

TEST(ConvForward, HandExample) {
  const std::vector<double> es{1, 1, 1}, er{0, 0, 0};
  const Matrix<double> kernel{{1, 2, 3, 0, 0, 0}};
  const auto m = conv_forward<double>(es, er, kernel, 3);
  EXPECT_EQ(to_vec(m), (std::vector<double>{5, 6, 3}));
}

TEST(ConvForward, UnitKernelsAddEmbeddings) {
  sacn::testing::Rng rng(2);
  const auto es = random_matrix<double>(rng, 1, 6);
  const auto er = random_matrix<double>(rng, 1, 6);
  const Matrix<double> kernel{{1, 1}, {1, 1}};
  const auto m = conv_forward<double>(es.row(0), er.row(0), kernel, 1);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t n = 0; n < 6; ++n) EXPECT_DOUBLE_EQ(m(c, n), es[n] + er[n]);
}

TEST(ConvForward, MatchesPadAndSlideReference) {
  sacn::testing::Rng rng(3);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t f = uniform(rng, 1, 10), k = uniform(rng, 1, 6), c = uniform(rng, 1, 4);
    const auto es = to_vec(random_matrix<double>(rng, 1, f));
    const auto er = to_vec(random_matrix<double>(rng, 1, f));
    const auto w = random_matrix<double>(rng, c, 2 * k);
    const auto m = conv_forward<double>(es, er, w, k);
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::vector<double> w0(w.row(ch).begin(), w.row(ch).begin() + k);
      const std::vector<double> w1(w.row(ch).begin() + k, w.row(ch).end());
      const auto ref = slide(es, er, w0, w1);
      for (std::size_t n = 0; n < f; ++n) EXPECT_NEAR(m(ch, n), ref[n], 1e-14);
    }
  }
}

TEST(ConvForward, TranslationalDecompositionAndLinearity) {
  sacn::testing::Rng rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t f = uniform(rng, 1, 8), k = uniform(rng, 1, 5);
    const auto es = to_vec(random_matrix<double>(rng, 1, f));
    const auto er = to_vec(random_matrix<double>(rng, 1, f));
    const auto es2 = to_vec(random_matrix<double>(rng, 1, f));
    const std::vector<double> zero(f, 0.0);
    const auto w = random_matrix<double>(rng, 2, 2 * k);
    const auto full = conv_forward<double>(es, er, w, k);
    const auto split = conv_forward<double>(es, zero, w, k);
    const auto rel = conv_forward<double>(zero, er, w, k);
    for (std::size_t i = 0; i < full.size(); ++i) EXPECT_EQ(full[i], split[i] + rel[i]);

    std::vector<double> sum(f);
    for (std::size_t i = 0; i < f; ++i) sum[i] = es[i] + es2[i];
    const auto lhs = conv_forward<double>(sum, zero, w, k);
    const auto rhs = conv_forward<double>(es2, zero, w, k);
    for (std::size_t i = 0; i < lhs.size(); ++i) EXPECT_NEAR(lhs[i], split[i] + rhs[i], 1e-13);
    EXPECT_EQ(conv_forward<double>(zero, zero, w, k), Matrix<double>(2, f));
  }
}

TEST(ConvForward, RejectsBadShapes) {
  const std::vector<double> a{1, 2}, b{1, 2, 3};
  EXPECT_THROW(conv_forward<double>(a, b, Matrix<double>(1, 2), 1), ShapeError);
  EXPECT_THROW(conv_forward<double>(a, a, Matrix<double>(1, 3), 1), ShapeError);
  EXPECT_THROW(conv_forward<double>(a, a, Matrix<double>(1, 0), 0), ValidationError);
}

TEST(ConvTranseOp, BatchedMatchesRowwise) {
  sacn::testing::Rng rng(5);
  const auto s = random_matrix<double>(rng, 3, 5);
  const auto r = random_matrix<double>(rng, 3, 5);
  const auto w = random_matrix<double>(rng, 2, 6);
  nn::Tape<double> tape;
  const auto out = tape.value(conv_transe(tape, tape.constant(s), tape.constant(r), tape.constant(w), 3));
  ASSERT_EQ(out.cols(), 10u);
  for (std::size_t b = 0; b < 3; ++b) {
    const auto m = conv_forward<double>(s.row(b), r.row(b), w, 3);
    for (std::size_t i = 0; i < m.size(); ++i) EXPECT_DOUBLE_EQ(out(b, i), m[i]);
  }
}

TEST(ConvTranseOp, GradientsMatchFiniteDifferences) {
  sacn::testing::Rng rng(6);
  for (std::size_t k : {1u, 2u, 3u, 5u}) {
    nn::Parameter<double> s("s", 2, 6), r("r", 2, 6), w("w", 3, 2 * k);
    s.value = random_matrix<double>(rng, 2, 6);
    r.value = random_matrix<double>(rng, 2, 6);
    w.value = random_matrix<double>(rng, 3, 2 * k);
    const auto probe = random_matrix<double>(rng, 2, 18);
    const std::function<nn::Var(nn::Tape<double>&)> loss = [&](nn::Tape<double>& t) {
      return nn::weighted_sum(t, conv_transe(t, t.parameter(s), t.parameter(r), t.parameter(w), k), probe);
    };
    EXPECT_LT(nn::worst_rel_error(nn::grad_check<double>({&s, &r, &w}, loss)), 1e-4) << "K=" << k;
  }
}

TEST(DecoderBank, ParameterGroupsFollowOptions) {
  DecoderBank<double> plain(4, 6, DecoderOptions{3, 3, 0.0, false, false});
  EXPECT_EQ(plain.parameters().size(), 3u);
  EXPECT_EQ(plain.kernels.dims, (std::vector<std::size_t>{3, 2, 3}));
  EXPECT_EQ(plain.projection.value.rows(), 18u);
  DecoderBank<double> full(4, 6, DecoderOptions{3, 3, 0.0, true, true});
  EXPECT_EQ(full.parameters().size(), 13u);
  EXPECT_THROW(DecoderBank<double>(4, 6, DecoderOptions{3, 0, 0.0, false, false}), ValidationError);
}

TEST(DecoderBank, LogitsGradientsMatchFiniteDifferences) {
  sacn::testing::Rng rng(7);
  for (bool extras : {false, true}) {
    DecoderBank<double> bank(3, 4, DecoderOptions{2, 3, 0.0, extras, extras});
    nn::Rng init(1);
    bank.initialize(init, 0.5);
    nn::Parameter<double> ent("entities", 5, 4);
    ent.value = random_matrix<double>(rng, 5, 4);
    const Matrix<double> labels = random_matrix<double>(rng, 3, 5, 0.5);
    const std::function<nn::Var(nn::Tape<double>&)> loss = [&](nn::Tape<double>& t) {
      nn::Rng unused(0);
      auto logits = conv_transe_logits(t, bank, t.parameter(ent), {0, 2, 4}, {0, 1, 2}, nn::Mode::train, unused);
      return nn::weighted_sum(t, logits, labels);
    };
    auto params = bank.parameters();
    params.push_back(&ent);
    EXPECT_LT(nn::worst_rel_error(nn::grad_check<double>(params, loss)), 1e-4) << extras;
  }
}

TEST(ScoreAll, OneScorePerCandidateAndProbPreservesOrder) {
  sacn::testing::Rng rng(8);
  DecoderBank<double> bank(2, 5, DecoderOptions{3, 3, 0.0, false, false});
  nn::Rng init(2);
  bank.initialize(init, 0.5);
  const auto entities = random_matrix<double>(rng, 7, 5);
  const auto scores = score_all<double>(entities.row(1), bank.relation_embeddings.value.row(0), entities, bank);
  ASSERT_EQ(scores.size(), 7u);
  const auto p = prob<double>(scores);
  for (std::size_t i = 0; i < 7; ++i) {
    EXPECT_GT(p[i], 0.0);
    EXPECT_LT(p[i], 1.0);
    for (std::size_t j = 0; j < 7; ++j) {
      if (scores[i] < scores[j]) {
        EXPECT_LE(p[i], p[j]);
      }
    }
  }
  EXPECT_THROW(score_all<double>(entities.row(1), bank.relation_embeddings.value.row(0), Matrix<double>(3, 4), bank),
               ShapeError);
}

TEST(ScoreAll, HiddenVectorIsNonNegative) {
  sacn::testing::Rng rng(9);
  DecoderBank<double> bank(2, 6, DecoderOptions{4, 5, 0.0, false, false});
  nn::Rng init(3);
  bank.initialize(init, 1.0);
  const auto es = random_matrix<double>(rng, 3, 6);
  nn::Tape<double> tape;
  nn::Rng unused(0);
  const auto h = tape.value(conv_transe_hidden(tape, bank, tape.constant(es), tape.constant(es), nn::Mode::eval, unused));
  for (double v : h.values()) EXPECT_GE(v, 0.0);
}
