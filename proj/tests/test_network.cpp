#include <gtest/gtest.h>

#include "dnres/network.hpp"
#include "test_support.hpp"

using namespace dnres;

namespace {

Network grown(int blocks, std::uint64_t seed = 1) {
  Rng rng(seed);
  Network net = build_base<float>(rng);
  for (int i = 0; i < blocks; ++i) net = insert_resblock(net, rng);
  return net;
}

TensorF patch(std::uint64_t seed, std::size_t h = 33, std::size_t w = 33) {
  Rng rng(seed, 3);
  TensorF x(1, 1, h, w);
  for (float& v : x.data()) v = static_cast<float>(rng.uniform());
  return x;
}

}  // namespace

TEST(Network, BaseSkeleton) {
  const Network net = grown(0);
  const auto topo = net.topology();
  ASSERT_EQ(topo.size(), 5u);
  EXPECT_EQ(topo[0], (LayerNode{LayerKind::conv, "c1", 1, 64, 9, 0}));
  EXPECT_EQ(topo[1].kind, LayerKind::relu);
  EXPECT_EQ(topo[2], (LayerNode{LayerKind::conv, "c2", 64, 32, 5, 0}));
  EXPECT_EQ(topo[3].kind, LayerKind::relu);
  EXPECT_EQ(topo[4], (LayerNode{LayerKind::conv, "c_out", 32, 1, 5, 0}));
  EXPECT_EQ(net.layer_count(), 3);
  EXPECT_EQ(net.border(), 8);
  EXPECT_EQ(count_params(net, ParamCountMode::weights_only), 57184u);
  EXPECT_EQ(count_params(net, ParamCountMode::with_bias), 57281u);
}

TEST(Network, InitialisationStatistics) {
  const Network net = grown(1, 5);
  double s = 0, s2 = 0;
  std::size_t n = 0;
  const auto names = net.parameter_names();
  const auto params = net.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const bool bias = names[i].ends_with(".bias");
    for (float v : params[i]) {
      if (bias) {
        EXPECT_EQ(v, 0.0f);
      } else {
        s += v;
        s2 += static_cast<double>(v) * v;
        ++n;
      }
    }
  }
  const double mean = s / n;
  const double sd = std::sqrt(s2 / n - mean * mean);
  EXPECT_NEAR(mean, 0.0, 5 * kInitStddev / std::sqrt(n));
  EXPECT_NEAR(sd, kInitStddev, 0.02 * kInitStddev);
}

TEST(Network, WeightCountsPerDepth) {
  const std::uint64_t expected[] = {57184, 75616, 94048, 112480, 130912, 149344};
  for (int k = 0; k <= 5; ++k) {
    const Network net = grown(k);
    EXPECT_EQ(count_params(net, ParamCountMode::weights_only), expected[k]) << k << " blocks";
    EXPECT_EQ(count_params(dn_resnet_topology(k), ParamCountMode::weights_only), expected[k]);
    EXPECT_EQ(net.layer_count(), 3 + 2 * k);
    if (k > 0) EXPECT_EQ(expected[k] - expected[k - 1], 18432u);
  }
}

TEST(Network, EvolvedCounts) {
  EXPECT_EQ(count_params(dn_resnet_topology(5, 5), ParamCountMode::weights_only), 63744u);
  EXPECT_EQ(count_params(dn_resnet_topology(5, 1), ParamCountMode::weights_only), 132224u);
  Rng rng(2);
  Network net = grown(5);
  for (int t = 0; t < 5; ++t) net = evolve_block_to_ds(net, t, rng);
  EXPECT_EQ(count_params(net, ParamCountMode::weights_only), 63744u);
  EXPECT_EQ(net.topology(), dn_resnet_topology(5, 5));
}

TEST(Network, MacCounts) {
  const auto rb = dn_resnet_topology(1);
  const auto base = dn_resnet_topology(0);
  EXPECT_EQ(count_macs(rb, 480, 640) - count_macs(base, 480, 640), 5662310400u);
  const auto ds = dn_resnet_topology(1, 1);
  EXPECT_EQ(count_macs(ds, 480, 640) - count_macs(base, 480, 640), 403046400u);
  EXPECT_EQ(count_macs(dn_resnet_topology(5), 480, 640), 45878476800u);
  EXPECT_EQ(count_macs(dn_resnet_topology(5, 5), 480, 640), 19582156800u);
  // Linear in area for the full-resolution convention.
  EXPECT_EQ(count_macs(rb, 960, 640), 2 * count_macs(rb, 480, 640));
  // Valid convention: base convs shrink, so the total is strictly smaller.
  EXPECT_LT(count_macs(dn_resnet_topology(5), 480, 640, MacConvention::valid),
            count_macs(dn_resnet_topology(5), 480, 640));
}

TEST(Network, PatchShapeForEveryStageAndBlockType) {
  Rng rng(3);
  Network net = build_base<float>(rng);
  for (int k = 0; k <= 5; ++k) {
    if (k > 0) net = insert_resblock(net, rng);
    EXPECT_EQ(net.forward(patch(k)).shape(), (Shape{1, 1, 17, 17}));
  }
  for (int t = 0; t < 5; ++t) {
    net = evolve_block_to_ds(net, t, rng);
    EXPECT_EQ(net.forward(patch(t)).shape(), (Shape{1, 1, 17, 17}));
  }
}

TEST(Network, InsertionKeepsOldWeightsAndAppendsBeforeOutput) {
  Rng rng(4);
  const Network a = build_base<float>(rng);
  const Network b = insert_resblock(a, rng);
  const auto& la = a.layers();
  const auto& lb = b.layers();
  ASSERT_EQ(lb.size(), la.size() + 1);
  EXPECT_EQ(lb[4].node.name, "rb1");
  EXPECT_EQ(lb[5].node.name, "c_out");
  for (std::size_t i : {0u, 2u}) EXPECT_EQ(lb[i].conv.weights, la[i].conv.weights);
  EXPECT_EQ(lb[5].conv.weights, la[4].conv.weights);
  EXPECT_EQ(lb[5].conv.bias, la[4].conv.bias);
  EXPECT_EQ(b.stage_count(), 1);
  EXPECT_EQ(b.provenance().back(), (ProvenanceEntry{1, "insert", "rb1", ""}));
}

TEST(Network, ZeroedInsertionIsTransparent) {
  Rng rng(5);
  Network net = build_base<float>(rng);
  for (int k = 0; k < 3; ++k) {
    Network next = insert_resblock(net, rng);
    zero_parameters(next.mutable_layers()[next.block_indices().back()]);
    for (int i = 0; i < 5; ++i) {
      const TensorF x = patch(100 * k + i, 40, 37);
      EXPECT_EQ(next.forward(x), net.forward(x));
    }
    net = insert_resblock(net, rng);  // keep growing with real weights
  }
}

TEST(Network, ZeroedEvolutionIsTransparent) {
  // A zeroed block of either kind is the identity, so swapping a zeroed
  // ResBlock for a zeroed DS-ResBlock must not change the function.
  Rng rng(6);
  Network net = grown(3, 6);
  for (int t = 0; t < 3; ++t) {
    const auto idx = net.block_indices();
    const std::size_t at = idx[idx.size() - 1 - static_cast<std::size_t>(t)];
    zero_parameters(net.mutable_layers()[at]);
    Network next = evolve_block_to_ds(net, t, rng);
    zero_parameters(next.mutable_layers()[at]);
    ASSERT_EQ(next.layers()[at].node.kind, LayerKind::ds_resblock);
    for (int i = 0; i < 5; ++i) {
      const TensorF x = patch(10 * t + i);
      EXPECT_EQ(next.forward(x), net.forward(x));
    }
    net = evolve_block_to_ds(net, t, rng);
  }
}

TEST(Network, EvolutionIsTailFirstAndNamed) {
  Rng rng(7);
  Network net = grown(3, 7);
  net = evolve_block_to_ds(net, 0, rng);
  EXPECT_EQ(net.provenance().back(), (ProvenanceEntry{1, "evolve", "dsrb3", "rb3"}));
  net = evolve_block_to_ds(net, 1, rng);
  EXPECT_EQ(net.provenance().back(), (ProvenanceEntry{2, "evolve", "dsrb2", "rb2"}));
  const auto topo = net.topology();
  EXPECT_EQ(topo[4].name, "rb1");
  EXPECT_EQ(topo[5].name, "dsrb2");
  EXPECT_EQ(topo[6].name, "dsrb3");
  EXPECT_EQ(topo[7].name, "c_out");
}

TEST(Network, EvolutionErrors) {
  Rng rng(8);
  Network net = grown(2, 8);
  EXPECT_THROW(evolve_block_to_ds(net, 2, rng), TopologyError);
  EXPECT_THROW(evolve_block_to_ds(net, -1, rng), TopologyError);
  net = evolve_block_to_ds(net, 0, rng);
  EXPECT_THROW(evolve_block_to_ds(net, 0, rng), TopologyError);
  EXPECT_THROW(evolve_block_to_ds(grown(0), 0, rng), TopologyError);
}

TEST(Network, FullImageForwardShrinksByBorder) {
  const Network net = grown(2);
  EXPECT_EQ(net.forward(patch(1, 50, 64)).shape(), (Shape{1, 1, 34, 48}));
}

TEST(Network, BackwardMatchesFiniteDifferencesInDouble) {
  Rng rng(9);
  NetworkD net = build_base<double>(rng);
  net = insert_resblock(net, rng);
  for (auto p : net.parameters()) {
    for (double& v : p) v = 0.05 * rng.normal();
  }
  TensorD x = dnres::test::random_tensor({1, 1, 19, 18}, 10);
  ForwardCache<double> cache;
  const TensorD y = net.forward(x, cache);
  const TensorD r = dnres::test::random_tensor(y.shape(), 11);
  auto grads = net.make_gradients();
  const TensorD gx = net.backward(r, cache, grads);
  auto loss = [&] { return dnres::test::dot(r.data(), net.forward(x).data()); };
  auto params = net.parameters();
  // A few entries of each tensor; the gradcheck suite covers the rest.
  for (std::size_t t = 0; t < params.size(); ++t) {
    for (std::size_t i = 0; i < params[t].size(); i += params[t].size() / 3 + 1) {
      const double n = dnres::test::central_difference(loss, &params[t][i], 1e-6);
      EXPECT_LT(dnres::test::rel_error(grads[t][i], n, 1e-9), 1e-5) << net.parameter_names()[t] << "[" << i << "]";
    }
  }
  EXPECT_LT(dnres::test::rel_error(gx[40], dnres::test::central_difference(loss, &x[40], 1e-6), 1e-9), 1e-5);
}

TEST(Network, CastRoundTrip) {
  const Network net = grown(1);
  EXPECT_EQ(net.cast<double>().cast<float>(), net);
}

TEST(Network, DescribeListsEveryNode) {
  const std::string text = describe(dn_resnet_topology(2, 1));
  for (const char* name : {"c1", "c2", "rb1", "dsrb2", "c_out"}) EXPECT_NE(text.find(name), std::string::npos) << name;
}
