#include <gtest/gtest.h>

#include <numeric>

#include "support/toy_kg.hpp"

using namespace sacn;
using sacn::testing::random_edges;
using sacn::testing::random_matrix;
using sacn::testing::uniform;
using Edge = RelationAdjacency::Edge;

namespace {

WgcnLayer<double> random_layer(sacn::testing::Rng& rng, std::size_t in, std::size_t out, std::size_t types) {
  WgcnLayer<double> layer("layer", in, out, types);
  layer.weight.value = random_matrix<double>(rng, in, out);
  layer.alpha.value = random_matrix<double>(rng, 1, types, 2.0);
  return layer;
}

/// Formula-based parameters so the frozen tensor does not depend on library RNG streams.
WgcnStack<double> golden_stack() {
  WgcnStack<double> s(6, 3, {3, 4, 2}, WgcnOptions{});
  for (std::size_t i = 0; i < s.h1.value.size(); ++i) s.h1.value[i] = 0.5 * std::sin(1.0 + double(i));
  for (std::size_t l = 0; l < s.layers.size(); ++l) {
    auto& w = s.layers[l].weight.value;
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = 0.5 * std::cos(3.0 * double(i) + double(l));
    for (std::size_t t = 0; t < 3; ++t) s.layers[l].alpha.value[t] = 0.5 + 0.25 * double(t) + 0.1 * double(l);
  }
  return s;
}

}  // namespace

TEST(WgcnLayer, IdentityWeightsZeroAlphaReturnInput) {
  sacn::testing::Rng rng(1);
  RelationAdjacency adj(5, 2, random_edges(rng, 5, 2, 8));
  WgcnLayer<double> layer("l", 3, 3, 2);
  layer.weight.value = Matrix<double>::identity(3);
  layer.alpha.value.set_zero();
  const auto h = random_matrix<double>(rng, 5, 3);
  const WgcnOptions linear{0.0, Activation::identity, Activation::identity, false};
  EXPECT_EQ(layer_forward(h, adj, layer, linear), h);
}

TEST(WgcnLayer, TwoNodeHandExample) {
  const std::vector<Edge> edges{{0, 1, 0}};
  RelationAdjacency adj(2, 1, edges);
  WgcnLayer<double> layer("l", 1, 1, 1);
  layer.weight.value[0] = 1.0;
  const WgcnOptions linear{0.0, Activation::identity, Activation::identity, false};
  EXPECT_EQ(layer_forward(Matrix<double>{{1}, {0}}, adj, layer, linear), (Matrix<double>{{1}, {1}}));
}

TEST(WgcnLayer, NodewiseHandExamples) {
  const std::vector<Edge> edges{{0, 1, 0}, {0, 2, 1}};
  RelationAdjacency adj(4, 2, edges);
  WgcnLayer<double> layer("l", 1, 1, 2);
  layer.weight.value[0] = 2.0;
  layer.alpha.value = Matrix<double>{{0.5, 3.0}};
  const Matrix<double> h{{1}, {10}, {100}, {7}};
  const WgcnOptions linear{0.0, Activation::identity, Activation::identity, false};
  const auto out = nodewise_forward(h, adj, layer, linear);
  EXPECT_DOUBLE_EQ(out(0, 0), 0.5 * 20 + 3.0 * 200 + 2);
  EXPECT_DOUBLE_EQ(out(3, 0), 14.0);
  EXPECT_DOUBLE_EQ(out(1, 0), 0.5 * 2 + 20);
}

TEST(WgcnLayer, ShapeChecks) {
  RelationAdjacency adj(3, 2, std::vector<Edge>{});
  WgcnLayer<double> layer("l", 2, 2, 2);
  EXPECT_THROW(layer_forward(Matrix<double>(4, 2), adj, layer, {}), ShapeError);
  EXPECT_THROW(layer_forward(Matrix<double>(3, 3), adj, layer, {}), ShapeError);
  WgcnLayer<double> wrong_types("l", 2, 2, 3);
  EXPECT_THROW(layer_forward(Matrix<double>(3, 2), adj, wrong_types, {}), ShapeError);
}

TEST(WgcnLayer, MatrixFormEqualsNodewiseOnRandomGraphs) {
  sacn::testing::Rng rng(2);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t n = uniform(rng, 1, 20), types = uniform(rng, 1, 4);
    const std::size_t fin = uniform(rng, 1, 8), fout = uniform(rng, 1, 8);
    RelationAdjacency adj(n, types, random_edges(rng, n, types, uniform(rng, 0, 3 * n)));
    auto layer = random_layer(rng, fin, fout, types);
    const auto h = random_matrix<double>(rng, n, fin);
    for (bool normalize : {false, true})
      for (Activation act : {Activation::relu, Activation::identity}) {
        const WgcnOptions opts{0.0, act, act, normalize};
        EXPECT_LT(max_abs_diff(layer_forward(h, adj, layer, opts), nodewise_forward(h, adj, layer, opts)), 1e-12);
      }
  }
}

TEST(Encode, ZeroLayersReturnsEmbeddingTable) {
  sacn::testing::Rng rng(3);
  RelationAdjacency adj(4, 1, random_edges(rng, 4, 1, 4));
  WgcnStack<double> s(4, 1, {5}, {});
  nn::Rng init(1);
  s.initialize(init);
  EXPECT_EQ(encode(s, adj), s.h1.value);
  EXPECT_EQ(s.parameters().size(), 1u);
}

TEST(Encode, IdentityStackReturnsEmbeddingTable) {
  sacn::testing::Rng rng(4);
  RelationAdjacency adj(5, 2, random_edges(rng, 5, 2, 6));
  WgcnStack<double> s(5, 2, {3, 3, 3}, WgcnOptions{0.0, Activation::identity, Activation::identity, false});
  s.h1.value = random_matrix<double>(rng, 5, 3);
  for (auto& l : s.layers) {
    l.weight.value = Matrix<double>::identity(3);
    l.alpha.value.set_zero();
  }
  EXPECT_EQ(encode(s, adj), s.h1.value);
}

TEST(Encode, LastLayerActivationIsConfigurable) {
  sacn::testing::Rng rng(5);
  RelationAdjacency adj(6, 2, random_edges(rng, 6, 2, 8));
  WgcnStack<double> s(6, 2, {3, 4, 3}, WgcnOptions{});
  nn::Rng init(2);
  s.initialize(init);
  s.h1.value = random_matrix<double>(rng, 6, 3, 3.0);
  const auto linear_out = encode(s, adj);
  EXPECT_LT(*std::min_element(linear_out.values().begin(), linear_out.values().end()), 0.0);
  s.options.output_activation = Activation::relu;
  const auto relu_out = encode(s, adj);
  for (std::size_t i = 0; i < relu_out.size(); ++i) EXPECT_DOUBLE_EQ(relu_out[i], std::max(0.0, linear_out[i]));
}

TEST(Encode, MatchesFrozenGoldenTensor) {
  const std::vector<Edge> edges{{0, 1, 0}, {1, 2, 1}, {2, 3, 0}, {3, 4, 2}, {4, 5, 1}, {5, 0, 2}, {0, 3, 1}};
  RelationAdjacency adj(6, 3, edges);
  auto s = golden_stack();
  const std::vector<double> golden{
      0.83376712022728294,  -0.9195297112680092,  0.28045834616047416,  -0.30251553815894477,
      0.31825116344884108,  -0.35237303315977309, 0.78831484771729332,  -0.85773151406660519,
      0.74092769595938346,  -0.81896654571228367, 0.68190746763707577,  -0.7393107643252298,
  };
  const auto h = encode(s, adj);
  ASSERT_EQ(h.size(), golden.size());
  for (std::size_t i = 0; i < golden.size(); ++i) EXPECT_NEAR(h[i], golden[i], 1e-12) << i;
}

TEST(Encode, PermutationEquivariance) {
  sacn::testing::Rng rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = uniform(rng, 2, 12), types = uniform(rng, 1, 3);
    const auto edges = random_edges(rng, n, types, 2 * n);
    std::vector<Index> perm(n);
    std::iota(perm.begin(), perm.end(), Index{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<Edge> permuted;
    for (const auto& e : edges) permuted.push_back({perm[e.a], perm[e.b], e.type});

    WgcnStack<double> s(n, types, {3, 4, 2}, WgcnOptions{});
    nn::Rng init(trial);
    s.initialize(init);
    s.h1.value = random_matrix<double>(rng, n, 3);
    WgcnStack<double> p = s;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < 3; ++k) p.h1.value(perm[i], k) = s.h1.value(i, k);

    const auto out = encode(s, RelationAdjacency(n, types, edges));
    const auto out_p = encode(p, RelationAdjacency(n, types, permuted));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < out.cols(); ++k) EXPECT_NEAR(out_p(perm[i], k), out(i, k), 1e-12);
  }
}

TEST(Encode, LocalityBeyondLHops) {
  // Path 0-1-2-3-4-5-6; with L = 2 node 0 only sees nodes 0..2.
  std::vector<Edge> path;
  for (Index i = 0; i + 1 < 7; ++i) path.push_back({i, i + 1, 0});
  WgcnStack<double> s(7, 2, {3, 3, 3}, WgcnOptions{});
  nn::Rng init(3);
  s.initialize(init);
  const auto before = encode(s, RelationAdjacency(7, 2, path));
  auto edited = path;
  edited.push_back({4, 6, 1});
  edited.push_back({3, 5, 0});
  const auto after = encode(s, RelationAdjacency(7, 2, edited));
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_EQ(after(0, k), before(0, k));
    EXPECT_EQ(after(1, k), before(1, k));
  }
  bool changed = false;
  for (std::size_t k = 0; k < 3; ++k) changed = changed || after(4, k) != before(4, k);
  EXPECT_TRUE(changed);
}

TEST(Encode, GradientsReachEveryEncoderParameter) {
  sacn::testing::Rng rng(7);
  RelationAdjacency adj(6, 3, random_edges(rng, 6, 3, 12));
  WgcnStack<double> s(6, 3, {3, 4, 2}, WgcnOptions{});
  nn::Rng init(4);
  s.initialize(init, 0.5);
  const auto probe = random_matrix<double>(rng, 6, 2);
  const std::function<nn::Var(nn::Tape<double>&)> loss = [&](nn::Tape<double>& t) {
    nn::Rng unused(0);
    return nn::weighted_sum(t, encode(t, s, adj, nn::Mode::train, unused), probe);
  };
  const auto report = nn::grad_check<double>(s.parameters(), loss);
  EXPECT_EQ(report.size(), 5u);
  EXPECT_LT(nn::worst_rel_error(report), 1e-4);
}

TEST(Encode, DropoutOnlyInTrainMode) {
  sacn::testing::Rng rng(8);
  RelationAdjacency adj(5, 1, random_edges(rng, 5, 1, 6));
  WgcnStack<double> s(5, 1, {4, 4}, WgcnOptions{0.5, Activation::relu, Activation::identity, false});
  nn::Rng init(5);
  s.initialize(init);
  nn::Rng r1(1), r2(1);
  nn::Tape<double> t1, t2;
  const auto eval = t1.value(encode(t1, s, adj, nn::Mode::eval, r1));
  const auto train = t2.value(encode(t2, s, adj, nn::Mode::train, r2));
  EXPECT_EQ(eval, encode(s, adj));
  EXPECT_NE(eval, train);
}
