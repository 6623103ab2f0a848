#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "sparsediff/topology.hpp"

using namespace sparsediff;
using namespace sparsediff::topology;
namespace ad = sparsediff::ad;

namespace {

vq::VQAssignment assignment_from(const std::vector<int32_t>& ids, int64_t h,
                                 int64_t w) {
  vq::VQAssignment a;
  a.h = h;
  a.w = w;
  a.indices = ids;
  std::set<int32_t> distinct(ids.begin(), ids.end());
  a.hit_set.assign(distinct.begin(), distinct.end());
  return a;
}

// Independent O((h*w)^2) edge-weight reference: for every ordered cell pair
// (p, q) with p in region i, q != p and Chebyshev distance <= radius, add q
// to region i's neighbor set; count set members per region and row-normalize.
Eigen::MatrixXd edge_weights_oracle(const GoverningRegionMap& regions,
                                    int64_t radius) {
  const int64_t k = regions.k(), h = regions.h, w = regions.w;
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(k, k);
  for (int64_t i = 0; i < k; ++i) {
    std::set<int64_t> neighborhood;
    for (int64_t p = 0; p < h * w; ++p) {
      if (regions.cell_region[static_cast<size_t>(p)] != i) continue;
      for (int64_t q = 0; q < h * w; ++q) {
        if (q == p) continue;
        const int64_t dr = std::abs(p / w - q / w);
        const int64_t dc = std::abs(p % w - q % w);
        if (std::max(dr, dc) <= radius) neighborhood.insert(q);
      }
    }
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(k);
    for (int64_t q : neighborhood)
      counts[regions.cell_region[static_cast<size_t>(q)]] += 1.0;
    const double total = counts.sum();
    if (total > 0)
      out.row(i) = (counts / total).transpose();
    else
      out.row(i).setConstant(1.0 / static_cast<double>(k));
  }
  return out;
}

Tensor random_window(int64_t l, int64_t C, int64_t h, int64_t w, uint64_t seed) {
  Rng rng(seed);
  Tensor t({l, C, h, w});
  for (int64_t i = 0; i < t.numel(); ++i) t.vec()[i] = rng.uniform();
  return t;
}

}  // namespace

TEST_CASE("governing regions partition the grid") {
  Rng rng(3);
  std::vector<int32_t> ids(12 * 12);
  for (auto& v : ids) v = static_cast<int32_t>(rng.next_u64() % 7) * 2;  // sparse ids
  vq::VQAssignment a = assignment_from(ids, 12, 12);
  GoverningRegionMap m = governing_regions(a);

  CHECK(m.h == 12);
  CHECK(m.w == 12);
  CHECK(std::is_sorted(m.region_ids.begin(), m.region_ids.end()));
  CHECK(m.region_ids == a.hit_set);

  // every cell appears in exactly one region, consistent with cell_region
  std::vector<int> seen(12 * 12, 0);
  for (int64_t r = 0; r < m.k(); ++r)
    for (int64_t cell : m.cells[static_cast<size_t>(r)]) {
      ++seen[static_cast<size_t>(cell)];
      CHECK(m.cell_region[static_cast<size_t>(cell)] == r);
      CHECK(m.region_ids[static_cast<size_t>(r)] == ids[static_cast<size_t>(cell)]);
    }
  for (int v : seen) CHECK(v == 1);
}

TEST_CASE("edge weights match the quadratic reference on small grids") {
  for (uint64_t seed : {1ull, 2ull, 3ull}) {
    for (int64_t n : {8, 12, 16}) {
      Rng rng(seed);
      std::vector<int32_t> ids(n * n);
      for (auto& v : ids) v = static_cast<int32_t>(rng.next_u64() % 6);
      GoverningRegionMap m = governing_regions(assignment_from(ids, n, n));
      Tensor fast = edge_weights(m, 1);
      Eigen::MatrixXd slow = edge_weights_oracle(m, 1);
      REQUIRE(fast.dim(0) == m.k());
      for (int64_t i = 0; i < m.k(); ++i)
        for (int64_t j = 0; j < m.k(); ++j)
          CHECK(fast.vec()[i * m.k() + j] == slow(i, j));  // exact, same arithmetic
    }
  }
}

TEST_CASE("edge weight rows are stochastic; isolated rows fall back to uniform") {
  Rng rng(9);
  std::vector<int32_t> ids(16 * 16);
  for (auto& v : ids) v = static_cast<int32_t>(rng.next_u64() % 10);
  GoverningRegionMap m = governing_regions(assignment_from(ids, 16, 16));
  std::vector<bool> isolated;
  Tensor w = edge_weights(m, 1, &isolated);
  for (int64_t i = 0; i < m.k(); ++i) {
    double row = 0;
    for (int64_t j = 0; j < m.k(); ++j) row += w.vec()[i * m.k() + j];
    CHECK(std::abs(row - 1.0) < 1e-6);
    CHECK_FALSE(isolated[static_cast<size_t>(i)]);
  }

  // a single-region map has no neighbors outside itself but still normalizes
  std::vector<int32_t> mono(8 * 8, 5);
  GoverningRegionMap one = governing_regions(assignment_from(mono, 8, 8));
  Tensor w1 = edge_weights(one, 1, &isolated);
  CHECK(w1.vec()[0] == doctest::Approx(1.0));
}

TEST_CASE("probe selection is deterministic and lands in its region") {
  Rng rng(5);
  std::vector<int32_t> ids(10 * 10);
  for (auto& v : ids) v = static_cast<int32_t>(rng.next_u64() % 5);
  GoverningRegionMap m = governing_regions(assignment_from(ids, 10, 10));

  auto probes = select_probes(m, 42);
  auto again = select_probes(m, 42);
  auto other = select_probes(m, 43);
  CHECK(probes == again);
  CHECK(probes != other);
  REQUIRE(static_cast<int64_t>(probes.size()) == m.k());
  for (int64_t i = 0; i < m.k(); ++i) {
    const int64_t flat = probes[static_cast<size_t>(i)].first * 10 +
                         probes[static_cast<size_t>(i)].second;
    CHECK(m.cell_region[static_cast<size_t>(flat)] == i);
  }
}

TEST_CASE("probe states are region means at every timestep and channel") {
  // 2x4 grid, two regions split left/right
  std::vector<int32_t> ids = {0, 0, 7, 7, 0, 0, 7, 7};
  GoverningRegionMap m = governing_regions(assignment_from(ids, 2, 4));
  Tensor window({2, 1, 2, 4});
  for (int64_t i = 0; i < window.numel(); ++i) window.vec()[i] = i;
  Tensor states = aggregate_probe_states(window, m);
  REQUIRE(states.dim(0) == 2);  // k
  REQUIRE(states.dim(1) == 2);  // l
  REQUIRE(states.dim(2) == 1);  // C
  // region 0 cells {0,1,4,5}: frame 0 mean = (0+1+4+5)/4
  CHECK(states.vec()[0] == doctest::Approx(2.5));
  // region 7 cells {2,3,6,7}: frame 1 mean = (10+11+14+15)/4
  CHECK(states.vec()[3] == doctest::Approx(12.5));
}

TEST_CASE("probe graph assembles consistently") {
  Rng rng(13);
  std::vector<int32_t> ids(12 * 12);
  for (auto& v : ids) v = static_cast<int32_t>(rng.next_u64() % 8);
  vq::VQAssignment a = assignment_from(ids, 12, 12);
  Tensor window = random_window(3, 2, 12, 12, 77);
  ProbeGraph g = build_probe_graph(window, a, 11);

  CHECK(g.k() == g.region_map.k());
  CHECK(g.lookback() == 3);
  CHECK(g.channels() == 2);
  CHECK(g.probe_codeword == g.region_map.region_ids);
  CHECK(g.edge_weights.dim(0) == g.k());
}

TEST_CASE("ablation graphs: uniform, random, knn") {
  Tensor window = random_window(3, 1, 16, 16, 5);

  ProbeGraph uni = build_ablation_graph(window, AblationMode::kUniform, 16, 0.3, 1);
  CHECK(uni.k() == 16);
  // uniform probes form a grid: distinct rows and columns evenly spaced
  std::set<int64_t> rows;
  for (auto& rc : uni.probe_coords) rows.insert(rc.first);
  CHECK(rows.size() == 4);

  ProbeGraph rnd1 = build_ablation_graph(window, AblationMode::kRandom, 16, 0.3, 2);
  ProbeGraph rnd2 = build_ablation_graph(window, AblationMode::kRandom, 16, 0.3, 2);
  ProbeGraph rnd3 = build_ablation_graph(window, AblationMode::kRandom, 16, 0.3, 3);
  CHECK(rnd1.probe_coords == rnd2.probe_coords);
  CHECK(rnd1.probe_coords != rnd3.probe_coords);
  CHECK(rnd1.k() == 16);

  // all modes produce row-stochastic edge weights and region-mean states
  for (const ProbeGraph* g : {&uni, &rnd1}) {
    for (int64_t i = 0; i < g->k(); ++i) {
      double row = 0;
      for (int64_t j = 0; j < g->k(); ++j) row += g->edge_weights.vec()[i * g->k() + j];
      CHECK(std::abs(row - 1.0) < 1e-6);
    }
    // every cell belongs to some region (Voronoi partition)
    int64_t assigned = 0;
    for (auto& cells : g->region_map.cells) assigned += static_cast<int64_t>(cells.size());
    CHECK(assigned == 16 * 16);
  }
}

TEST_CASE("probe graph serialization round-trips") {
  Rng rng(21);
  std::vector<int32_t> ids(10 * 10);
  for (auto& v : ids) v = static_cast<int32_t>(rng.next_u64() % 6);
  Tensor window = random_window(4, 2, 10, 10, 9);
  ProbeGraph g = build_probe_graph(window, assignment_from(ids, 10, 10), 3);

  const std::string path = "topology_roundtrip.graph";
  save_probe_graph(path, g);
  ProbeGraph back = load_probe_graph(path);

  CHECK(back.probe_coords == g.probe_coords);
  CHECK(back.probe_codeword == g.probe_codeword);
  // numeric blocks are stored as float32
  REQUIRE(back.probe_states.numel() == g.probe_states.numel());
  for (int64_t i = 0; i < g.probe_states.numel(); ++i)
    CHECK(back.probe_states.vec()[i] ==
          static_cast<double>(static_cast<float>(g.probe_states.vec()[i])));
  for (int64_t i = 0; i < g.edge_weights.numel(); ++i)
    CHECK(back.edge_weights.vec()[i] ==
          static_cast<double>(static_cast<float>(g.edge_weights.vec()[i])));
  CHECK(back.region_map.cell_region == g.region_map.cell_region);
  std::remove(path.c_str());
}
