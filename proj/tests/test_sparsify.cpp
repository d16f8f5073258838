#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "ebgcn/detector.hpp"
#include "ebgcn/errors.hpp"
#include "ebgcn/sparsify.hpp"
#include "testing.hpp"

using namespace ebgcn;

namespace {

std::set<int> kept_set(const PruneMask& m) {
  std::set<int> s;
  for (size_t i = 0; i < m.size(); ++i) {
    if (m.bit(i)) s.insert(static_cast<int>(i));
  }
  return s;
}

}  // namespace

TEST_CASE("graph_loss: lambda 0 equals the masked cross-entropy") {
  Rng rng(1);
  auto ds = ebtest::random_small(rng, 8, 3, 3);
  const Vector values = ebtest::random_edge_values(rng, ds.num_edges());
  const auto a = normalize_adjacency(ds, values);
  const auto p = init_params(ds.num_features(), 3, ds.num_classes, 2);
  const auto c = gcn_forward(a, ds.features, p, false, 0.0, nullptr);
  const double ce = masked_cross_entropy(c.probs, ds.labels, ds.train_mask);
  CHECK(graph_loss(a, ds.features, p, ds.labels, ds.train_mask, values, 0.0) == ce);
}

TEST_CASE("graph_loss: all-zero values reduce the graph to self-loops, loss finite") {
  const auto ds = gen_synthetic(3, 2, 10, 0.5, 0.05, 4);
  const Vector zeros = Vector::Zero(ds.num_edges());
  const auto a = normalize_adjacency(ds, zeros);
  CHECK((a.to_dense() - Matrix::Identity(ds.num_nodes, ds.num_nodes))
            .cwiseAbs()
            .maxCoeff() == 0.0);
  const auto p = init_params(4, 3, 2, 5);
  const double loss = graph_loss(a, ds.features, p, ds.labels, ds.train_mask, zeros, 0.01);
  CHECK(std::isfinite(loss));
}

TEST_CASE("graph_loss: unit values contribute exactly lambda * M") {
  const auto ds = gen_synthetic(9, 2, 20, 0.4, 0.05, 6);
  const int m = ds.num_edges();
  const Vector ones = Vector::Ones(m);
  const auto a = normalize_adjacency(ds, ones);
  const auto p = init_params(6, 4, 2, 1);
  const double l0 = graph_loss(a, ds.features, p, ds.labels, ds.train_mask, ones, 0.0);
  const double l1 = graph_loss(a, ds.features, p, ds.labels, ds.train_mask, ones, 0.01);
  CHECK(l1 - l0 == doctest::Approx(0.01 * m).epsilon(1e-12));
}

TEST_CASE("grad_edge_values: finite differences over every edge, degree chain included") {
  Rng rng(777);
  double worst = 0.0;
  int checked_edges = 0;
  for (int trial = 0; trial < 60; ++trial) {
    auto ds = ebtest::random_small(rng, 10, 4, 4, 0.5);
    if (ds.num_edges() == 0) continue;
    Vector values = ebtest::random_edge_values(rng, ds.num_edges());
    const auto p = init_params(ds.num_features(), 1 + static_cast<int>(rng.index(4)),
                               ds.num_classes, 500 + trial);
    const double lambda = (trial % 2 == 0) ? 0.0 : 0.01;

    const auto a = normalize_adjacency(ds, values);
    const auto cache = gcn_forward(a, ds.features, p, false, 0.0, nullptr);
    const Vector grad = grad_edge_values(cache, a, ds.features, p, ds.labels,
                                         ds.train_mask, values, lambda);

    auto loss = [&] {
      const auto aa = normalize_adjacency(ds, values);
      return graph_loss(aa, ds.features, p, ds.labels, ds.train_mask, values, lambda);
    };
    const Vector fd = ebtest::fd_vector(values, loss, 1e-5);
    worst = std::max(worst, ebtest::rel_err_inf(grad, fd));
    checked_edges += ds.num_edges();
  }
  CHECK(checked_edges > 200);
  CHECK(worst < 1e-4);
}

TEST_CASE("grad_edge_values: edge outside the 2-layer receptive field has zero gradient") {
  GraphDataset ds;
  ds.name = "path7";
  ds.num_nodes = 7;
  ds.num_classes = 2;
  for (int i = 0; i + 1 < 7; ++i) ds.edges.emplace_back(i, i + 1);
  Rng rng(2);
  ds.features.resize(7, 3);
  for (Eigen::Index k = 0; k < ds.features.size(); ++k) {
    ds.features.data()[k] = rng.uniform(-1.0, 1.0);
  }
  ds.labels = {1, 0, 0, 0, 0, 0, 0};
  ds.train_mask = {1, 0, 0, 0, 0, 0, 0};
  ds.val_mask.assign(7, 0);
  ds.test_mask.assign(7, 0);

  Vector values = ebtest::random_edge_values(rng, 6);
  const auto p = init_params(3, 3, 2, 6);
  const auto a = normalize_adjacency(ds, values);
  const auto cache = gcn_forward(a, ds.features, p, false, 0.0, nullptr);
  const Vector grad = grad_edge_values(cache, a, ds.features, p, ds.labels,
                                       ds.train_mask, values, 0.0);
  // edge (5,6) is the last one; both endpoints are >= 3 hops from node 0
  CHECK(grad[5] == 0.0);
  CHECK(grad[4] == 0.0);  // (4,5): endpoints 4 and 5 hops away
  CHECK(grad[0] != 0.0);
}

TEST_CASE("grad_edge_values: pure l1 subgradient when the data term cannot see the edge") {
  GraphDataset ds;
  ds.name = "two-components";
  ds.num_nodes = 3;
  ds.num_classes = 2;
  ds.edges = {{1, 2}};  // component B; node 0 is isolated and labeled
  Rng rng(14);
  ds.features.resize(3, 2);
  for (Eigen::Index k = 0; k < ds.features.size(); ++k) {
    ds.features.data()[k] = rng.uniform(-1.0, 1.0);
  }
  ds.labels = {1, 0, 0};
  ds.train_mask = {1, 0, 0};
  ds.val_mask.assign(3, 0);
  ds.test_mask.assign(3, 0);

  Vector values(1);
  values[0] = 2.0;
  const auto p = init_params(2, 3, 2, 8);
  const auto a = normalize_adjacency(ds, values);
  const auto cache = gcn_forward(a, ds.features, p, false, 0.0, nullptr);
  const Vector grad = grad_edge_values(cache, a, ds.features, p, ds.labels,
                                       ds.train_mask, values, 0.01);
  CHECK(grad[0] == 0.01);
}

TEST_CASE("grad_edge_values: sign(0) = 0 for the l1 term") {
  GraphDataset ds;
  ds.name = "sign0";
  ds.num_nodes = 3;
  ds.num_classes = 2;
  ds.edges = {{1, 2}};
  ds.features = Matrix::Ones(3, 2);
  ds.labels = {1, 0, 0};
  ds.train_mask = {1, 0, 0};
  ds.val_mask.assign(3, 0);
  ds.test_mask.assign(3, 0);
  Vector values = Vector::Zero(1);
  const auto p = init_params(2, 2, 2, 3);
  const auto a = normalize_adjacency(ds, values);
  const auto cache = gcn_forward(a, ds.features, p, false, 0.0, nullptr);
  const Vector grad = grad_edge_values(cache, a, ds.features, p, ds.labels,
                                       ds.train_mask, values, 0.01);
  CHECK(grad[0] == 0.0);
}

TEST_CASE("grad_edge_values: degree-chain flag changes the gradient") {
  Rng rng(21);
  auto ds = ebtest::random_small(rng, 8, 3, 3, 0.6);
  REQUIRE(ds.num_edges() > 0);
  Vector values = ebtest::random_edge_values(rng, ds.num_edges());
  const auto p = init_params(ds.num_features(), 3, ds.num_classes, 77);
  const auto a = normalize_adjacency(ds, values);
  const auto cache = gcn_forward(a, ds.features, p, false, 0.0, nullptr);
  const Vector full = grad_edge_values(cache, a, ds.features, p, ds.labels,
                                       ds.train_mask, values, 0.0, true);
  const Vector frozen = grad_edge_values(cache, a, ds.features, p, ds.labels,
                                         ds.train_mask, values, 0.0, false);
  CHECK((full - frozen).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("derive_mask: p = 0 and p = 1 extremes") {
  Vector m(4);
  m << 0.5, 0.1, 0.9, 0.3;
  const auto all = derive_mask(m, 0.0);
  CHECK(all.popcount() == 4);
  const auto none = derive_mask(m, 1.0);
  CHECK(none.popcount() == 0);
}

TEST_CASE("derive_mask: frozen example [0.5,0.1,0.9,0.3] at p=0.5") {
  Vector m(4);
  m << 0.5, 0.1, 0.9, 0.3;
  const auto mask = derive_mask(m, 0.5);
  CHECK(mask.bit(0));
  CHECK(!mask.bit(1));
  CHECK(mask.bit(2));
  CHECK(!mask.bit(3));
}

TEST_CASE("derive_mask: popcount is exactly round((1-p)*len)") {
  Rng rng(55);
  for (int trial = 0; trial < 300; ++trial) {
    const int len = 1 + static_cast<int>(rng.index(100000));
    const double p = rng.uniform();
    Vector m(len);
    for (int i = 0; i < len; ++i) m[i] = rng.uniform(-1.0, 1.0);
    const auto mask = derive_mask(m, p);
    CHECK(mask.popcount() == static_cast<size_t>(std::llround((1.0 - p) * len)));
  }
}

TEST_CASE("derive_mask: agrees with a stable full-sort oracle, ties keep lower index") {
  Rng rng(66);
  for (int trial = 0; trial < 1000; ++trial) {
    const int len = 1 + static_cast<int>(rng.index(200));
    Vector m(len);
    for (int i = 0; i < len; ++i) {
      // coarse quantization forces plenty of ties
      m[i] = std::round(rng.uniform(-3.0, 3.0)) / 2.0;
    }
    const double p = rng.uniform();
    const auto mask = derive_mask(m, p);

    std::vector<int> order(len);
    for (int i = 0; i < len; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return std::abs(m[a]) > std::abs(m[b]);
    });
    const auto keep = static_cast<size_t>(std::llround((1.0 - p) * len));
    std::set<int> expect(order.begin(), order.begin() + static_cast<long>(keep));
    REQUIRE(kept_set(mask) == expect);
  }
}

TEST_CASE("derive_mask: nested tickets, kept(p2) subset of kept(p1) for p1 < p2") {
  Rng rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    const int len = 2 + static_cast<int>(rng.index(300));
    Vector m(len);
    for (int i = 0; i < len; ++i) m[i] = rng.uniform(-2.0, 2.0);
    double p1 = rng.uniform(), p2 = rng.uniform();
    if (p1 > p2) std::swap(p1, p2);
    const auto k1 = kept_set(derive_mask(m, p1));
    const auto k2 = kept_set(derive_mask(m, p2));
    REQUIRE(std::includes(k1.begin(), k1.end(), k2.begin(), k2.end()));
  }
}

TEST_CASE("derive_mask: rejects empty and non-finite input") {
  CHECK_THROWS_AS(derive_mask(Vector(0), 0.5), argument_error);
  Vector bad(2);
  bad << 1.0, std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(derive_mask(bad, 0.5), argument_error);
  Vector ok = Vector::Ones(2);
  CHECK_THROWS_AS(derive_mask(ok, 1.5), argument_error);
}

TEST_CASE("apply_graph_prune: all-ones mask is the identity") {
  Rng rng(5);
  Vector values = ebtest::random_edge_values(rng, 10);
  const auto mask = PruneMask::from_bits(std::vector<uint8_t>(10, 1));
  const auto out = apply_graph_prune(values, mask);
  CHECK(out.kept_edges.size() == 10);
  CHECK((out.kept_values - values).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("apply_graph_prune: all-zeros mask leaves only self-loops downstream") {
  const auto ds = gen_synthetic(4, 2, 8, 0.6, 0.05, 4);
  REQUIRE(ds.num_edges() > 0);
  const auto mask = PruneMask::from_bits(std::vector<uint8_t>(ds.num_edges(), 0));
  const auto a = normalize_adjacency(ds, unit_edge_values(ds), &mask);
  CHECK((a.to_dense() - Matrix::Identity(ds.num_nodes, ds.num_nodes))
            .cwiseAbs()
            .maxCoeff() == 0.0);
  const auto out = apply_graph_prune(unit_edge_values(ds), mask);
  CHECK(out.kept_edges.empty());
}

TEST_CASE("apply_graph_prune: survivor count at p=0.3 over 5429 edges is 3800") {
  Rng rng(9);
  Vector mags(5429);
  for (int i = 0; i < 5429; ++i) mags[i] = rng.uniform(-1.0, 1.0);
  const auto mask = derive_mask(mags, 0.3);
  CHECK(mask.popcount() == 3800);
  const auto out = apply_graph_prune(mags, mask);
  CHECK(out.kept_edges.size() == 3800);
}

TEST_CASE("apply_graph_prune: length mismatch is a contract error") {
  const auto mask = PruneMask::from_bits(std::vector<uint8_t>(5, 1));
  CHECK_THROWS_AS(apply_graph_prune(Vector::Ones(4), mask), contract_error);
}

TEST_CASE("apply_weight_prune: p_w = 0 leaves parameters unchanged") {
  auto p = init_params(6, 4, 3, 11);
  const Matrix w0 = p.w0, w1 = p.w1;
  apply_weight_prune(p, derive_weight_mask(p, 0.0));
  CHECK((p.w0.array() == w0.array()).all());
  CHECK((p.w1.array() == w1.array()).all());
}

TEST_CASE("apply_weight_prune: masked entries stay exactly 0 through training") {
  Rng rng(31);
  auto ds = ebtest::sbm_fixture(3);
  const auto a = normalize_adjacency(ds, unit_edge_values(ds));
  auto p = init_params(ds.num_features(), 8, ds.num_classes, 13);
  const auto mask = derive_weight_mask(p, 0.7);
  apply_weight_prune(p, mask);

  Rng drop(17);
  for (int step = 0; step < 10; ++step) {
    const auto c = gcn_forward(a, ds.features, p, true, 0.5, &drop);
    const auto g = gcn_backward_weights(c, a, ds.features, p, ds.labels,
                                        ds.train_mask, 5e-4);
    adam_step(p, g, 0.01);
  }
  size_t k = 0;
  for (Eigen::Index r = 0; r < p.w0.rows(); ++r) {
    for (Eigen::Index c2 = 0; c2 < p.w0.cols(); ++c2) {
      if (!mask.bit(k++)) REQUIRE(p.w0(r, c2) == 0.0);
    }
  }
  for (Eigen::Index r = 0; r < p.w1.rows(); ++r) {
    for (Eigen::Index c2 = 0; c2 < p.w1.cols(); ++c2) {
      if (!mask.bit(k++)) REQUIRE(p.w1(r, c2) == 0.0);
    }
  }
}

TEST_CASE("apply_weight_prune: frozen zeros persist for random step counts (property)") {
  Rng rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    auto ds = ebtest::random_small(rng, 8, 4, 3);
    const auto a = normalize_adjacency(ds, unit_edge_values(ds));
    auto p = init_params(ds.num_features(), 3, ds.num_classes, trial);
    const double pw = rng.uniform(0.2, 0.95);
    const auto mask = derive_weight_mask(p, pw);
    apply_weight_prune(p, mask);
    const int steps = 1 + static_cast<int>(rng.index(25));
    Rng drop(trial);
    for (int s = 0; s < steps; ++s) {
      const auto c = gcn_forward(a, ds.features, p, true, 0.3, &drop);
      const auto g = gcn_backward_weights(c, a, ds.features, p, ds.labels,
                                          ds.train_mask, 1e-3);
      adam_step(p, g, 0.05);
    }
    const Vector flat = flatten_weights(p);
    for (size_t i = 0; i < mask.size(); ++i) {
      if (!mask.bit(i)) REQUIRE(flat[static_cast<Eigen::Index>(i)] == 0.0);
    }
  }
}

TEST_CASE("apply_weight_prune: survivor count for Cora-shaped weights at p_w=0.9") {
  auto p = init_params(1433, 16, 7, 19);
  const auto mask = derive_weight_mask(p, 0.9);
  CHECK(mask.size() == 1433u * 16 + 16 * 7);
  CHECK(mask.popcount() == 2304);  // round(0.1 * 23040)
  apply_weight_prune(p, mask);
  int64_t nonzero = 0;
  const Vector flat = flatten_weights(p);
  for (Eigen::Index i = 0; i < flat.size(); ++i) nonzero += (flat[i] != 0.0);
  CHECK(nonzero <= 2304);
  CHECK(nonzero >= 2300);  // init can produce exact zeros only with measure zero
}

TEST_CASE("apply_weight_prune: mask length mismatch is a contract error") {
  auto p = init_params(4, 3, 2, 1);
  CHECK_THROWS_AS(apply_weight_prune(p, PruneMask::from_bits(std::vector<uint8_t>(5, 1))),
                  contract_error);
}

TEST_CASE("derive_weight_mask: per-layer ranking prunes each matrix at the ratio") {
  auto p = init_params(10, 4, 3, 23);
  const auto global = derive_weight_mask(p, 0.5, false);
  const auto layered = derive_weight_mask(p, 0.5, true);
  size_t k0 = 0;
  for (size_t i = 0; i < 40; ++i) k0 += layered.bit(i);
  CHECK(k0 == 20);  // round(0.5 * 40)
  size_t k1 = 0;
  for (size_t i = 40; i < layered.size(); ++i) k1 += layered.bit(i);
  CHECK(k1 == 6);  // round(0.5 * 12)
  CHECK(global.popcount() == 26);
}

TEST_CASE("mask serialization: 16-byte header blob round-trips") {
  Rng rng(91);
  Vector mags(257);
  for (int i = 0; i < 257; ++i) mags[i] = rng.uniform(-1.0, 1.0);
  const auto mask = derive_mask(mags, 0.37);
  const auto blob = mask_to_bytes(mask);
  CHECK(blob.size() == 16 + (257 + 7) / 8);
  const auto back = mask_from_bytes(blob);
  CHECK(back == mask);
  CHECK(back.target_ratio() == mask.target_ratio());

  ebtest::TempDir dir("mask");
  save_mask(mask, dir.str() + "/m.bin");
  CHECK(load_mask(dir.str() + "/m.bin") == mask);

  auto bad = blob;
  bad[0] = 'X';
  CHECK_THROWS_AS(mask_from_bytes(bad), format_error);
  bad = blob;
  bad.pop_back();
  CHECK_THROWS_AS(mask_from_bytes(bad), format_error);
}
