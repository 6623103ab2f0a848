#include "sparsediff/topology.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <set>
#include <stdexcept>

#include "sparsediff/rng.hpp"

namespace sparsediff::topology {

using nlohmann::json;

GoverningRegionMap governing_regions(const vq::VQAssignment& assignment) {
  GoverningRegionMap m;
  m.h = assignment.h;
  m.w = assignment.w;
  m.region_ids = assignment.hit_set;
  std::map<int32_t, int32_t> compact;
  for (size_t i = 0; i < m.region_ids.size(); ++i)
    compact[m.region_ids[i]] = static_cast<int32_t>(i);
  m.cells.resize(m.region_ids.size());
  m.cell_region.resize(static_cast<size_t>(m.h * m.w));
  for (int64_t p = 0; p < m.h * m.w; ++p) {
    int32_t r = compact.at(assignment.indices[static_cast<size_t>(p)]);
    m.cell_region[static_cast<size_t>(p)] = r;
    m.cells[static_cast<size_t>(r)].push_back(p);
  }
  return m;
}

std::vector<std::pair<int64_t, int64_t>> select_probes(
    const GoverningRegionMap& regions, uint64_t seed) {
  Rng rng(Rng::splitmix64(seed ^ Rng::fnv1a("probe-select")));
  std::vector<std::pair<int64_t, int64_t>> coords;
  coords.reserve(static_cast<size_t>(regions.k()));
  for (const auto& cells : regions.cells) {
    if (cells.empty()) throw std::invalid_argument("select_probes: empty region");
    int64_t pick = cells[static_cast<size_t>(
        rng.uniform_int(0, static_cast<int64_t>(cells.size()) - 1))];
    coords.emplace_back(pick / regions.w, pick % regions.w);
  }
  return coords;
}

Tensor aggregate_probe_states(const Tensor& window,
                              const GoverningRegionMap& regions) {
  if (window.rank() != 4) throw std::invalid_argument("window must be (l,C,h,w)");
  const int64_t l = window.dim(0), C = window.dim(1), h = window.dim(2),
                w = window.dim(3);
  if (h != regions.h || w != regions.w)
    throw std::invalid_argument("aggregate_probe_states: grid mismatch");
  const int64_t k = regions.k();
  Tensor states({k, l, C});
  for (int64_t r = 0; r < k; ++r) {
    const auto& cells = regions.cells[static_cast<size_t>(r)];
    double inv = 1.0 / static_cast<double>(cells.size());
    for (int64_t t = 0; t < l; ++t)
      for (int64_t c = 0; c < C; ++c) {
        const double* src = window.vec().data() + (t * C + c) * h * w;
        double acc = 0;
        for (int64_t p : cells) acc += src[p];
        states[(r * l + t) * C + c] = acc * inv;
      }
  }
  return states;
}

Tensor edge_weights(const GoverningRegionMap& regions, int64_t radius,
                    std::vector<bool>* isolated) {
  const int64_t k = regions.k(), h = regions.h, w = regions.w;
  Tensor weights({k, k});
  if (isolated) isolated->assign(static_cast<size_t>(k), false);
  std::vector<uint8_t> mask(static_cast<size_t>(h * w));
  for (int64_t i = 0; i < k; ++i) {
    // Union of Moore neighborhoods of region i's cells, centers excluded.
    std::fill(mask.begin(), mask.end(), 0);
    for (int64_t p : regions.cells[static_cast<size_t>(i)]) {
      int64_t pi = p / w, pj = p % w;
      for (int64_t di = -radius; di <= radius; ++di)
        for (int64_t dj = -radius; dj <= radius; ++dj) {
          if (di == 0 && dj == 0) continue;
          int64_t qi = pi + di, qj = pj + dj;
          if (qi < 0 || qi >= h || qj < 0 || qj >= w) continue;
          mask[static_cast<size_t>(qi * w + qj)] = 1;
        }
    }
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(k);
    for (int64_t p = 0; p < h * w; ++p)
      if (mask[static_cast<size_t>(p)])
        counts[regions.cell_region[static_cast<size_t>(p)]] += 1.0;
    double total = counts.sum();
    auto row = weights.mat(k, k).row(i);
    if (total > 0) {
      row = (counts / total).transpose();
    } else {
      row.setConstant(1.0 / static_cast<double>(k));
      if (isolated) (*isolated)[static_cast<size_t>(i)] = true;
    }
  }
  return weights;
}

ProbeGraph build_probe_graph(const Tensor& window,
                             const vq::VQAssignment& assignment, uint64_t seed,
                             int64_t neighborhood_radius) {
  ProbeGraph g;
  g.region_map = governing_regions(assignment);
  g.probe_coords = select_probes(g.region_map, seed);
  g.probe_codeword = g.region_map.region_ids;
  g.probe_states = aggregate_probe_states(window, g.region_map);
  g.edge_weights = edge_weights(g.region_map, neighborhood_radius);
  return g;
}

namespace {

GoverningRegionMap voronoi_regions(
    const std::vector<std::pair<int64_t, int64_t>>& probes, int64_t h, int64_t w) {
  GoverningRegionMap m;
  m.h = h;
  m.w = w;
  const int64_t k = static_cast<int64_t>(probes.size());
  for (int64_t i = 0; i < k; ++i) m.region_ids.push_back(static_cast<int32_t>(i));
  m.cells.resize(static_cast<size_t>(k));
  m.cell_region.resize(static_cast<size_t>(h * w));
  for (int64_t p = 0; p < h * w; ++p) {
    int64_t pi = p / w, pj = p % w;
    int32_t best = 0;
    int64_t best_d2 = std::numeric_limits<int64_t>::max();
    for (int64_t i = 0; i < k; ++i) {
      int64_t di = pi - probes[static_cast<size_t>(i)].first;
      int64_t dj = pj - probes[static_cast<size_t>(i)].second;
      int64_t d2 = di * di + dj * dj;
      if (d2 < best_d2) {
        best_d2 = d2;
        best = static_cast<int32_t>(i);
      }
    }
    m.cell_region[static_cast<size_t>(p)] = best;
    m.cells[static_cast<size_t>(best)].push_back(p);
  }
  return m;
}

Tensor knn_edge_weights(const std::vector<std::pair<int64_t, int64_t>>& probes,
                        double k_frac) {
  const int64_t k = static_cast<int64_t>(probes.size());
  int64_t nn = std::max<int64_t>(
      1, static_cast<int64_t>(std::ceil(k_frac * static_cast<double>(k))));
  nn = std::min(nn, k - 1 > 0 ? k - 1 : 1);
  Tensor weights({k, k});
  for (int64_t i = 0; i < k; ++i) {
    std::vector<std::pair<double, int64_t>> dist;
    for (int64_t j = 0; j < k; ++j) {
      if (j == i) continue;
      double di = static_cast<double>(probes[i].first - probes[j].first);
      double dj = static_cast<double>(probes[i].second - probes[j].second);
      dist.emplace_back(di * di + dj * dj, j);
    }
    std::sort(dist.begin(), dist.end());
    auto row = weights.mat(k, k).row(i);
    if (dist.empty()) {
      row[i] = 1.0;  // single probe
      continue;
    }
    for (int64_t m = 0; m < nn; ++m) row[dist[static_cast<size_t>(m)].second] = 1.0;
    row /= row.sum();
  }
  return weights;
}

}  // namespace

ProbeGraph build_ablation_graph(const Tensor& window, AblationMode mode,
                                int64_t n_probes, double k_frac, uint64_t seed,
                                const vq::VQAssignment* assignment,
                                int64_t neighborhood_radius) {
  const int64_t h = window.dim(2), w = window.dim(3);
  if (mode == AblationMode::kKnn) {
    if (!assignment)
      throw std::invalid_argument("knn ablation needs a codebook assignment");
    ProbeGraph g = build_probe_graph(window, *assignment, seed, neighborhood_radius);
    g.edge_weights = knn_edge_weights(g.probe_coords, k_frac);
    return g;
  }
  if (n_probes < 1 || n_probes > h * w)
    throw std::invalid_argument("build_ablation_graph: bad n_probes");

  std::vector<std::pair<int64_t, int64_t>> probes;
  if (mode == AblationMode::kUniform) {
    // Centered lattice: rows x cols covering n_probes.
    int64_t rows = std::max<int64_t>(
        1, static_cast<int64_t>(std::floor(std::sqrt(static_cast<double>(n_probes)))));
    int64_t cols = (n_probes + rows - 1) / rows;
    for (int64_t i = 0; i < rows && static_cast<int64_t>(probes.size()) < n_probes; ++i)
      for (int64_t j = 0; j < cols && static_cast<int64_t>(probes.size()) < n_probes; ++j)
        probes.emplace_back((2 * i + 1) * h / (2 * rows), (2 * j + 1) * w / (2 * cols));
  } else {
    Rng rng(Rng::splitmix64(seed ^ Rng::fnv1a("random-probes")));
    std::set<int64_t> taken;
    while (static_cast<int64_t>(taken.size()) < n_probes)
      taken.insert(rng.uniform_int(0, h * w - 1));  // duplicates re-drawn
    for (int64_t p : taken) probes.emplace_back(p / w, p % w);
  }

  ProbeGraph g;
  g.region_map = voronoi_regions(probes, h, w);
  g.probe_coords = probes;
  g.probe_codeword = g.region_map.region_ids;
  g.probe_states = aggregate_probe_states(window, g.region_map);
  g.edge_weights = edge_weights(g.region_map, neighborhood_radius);
  return g;
}

void save_probe_graph(const std::string& path, const ProbeGraph& g) {
  json hdr;
  hdr["format"] = "sparsediff-probe-graph-v1";
  hdr["k"] = g.k();
  hdr["lookback"] = g.probe_states.dim(1);
  hdr["channels"] = g.probe_states.dim(2);
  hdr["h"] = g.region_map.h;
  hdr["w"] = g.region_map.w;
  hdr["probe_coords"] = g.probe_coords;
  hdr["probe_codeword"] = g.probe_codeword;
  hdr["region_ids"] = g.region_map.region_ids;
  hdr["cell_region"] = g.region_map.cell_region;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write probe graph: " + path);
  std::string h = hdr.dump();
  out << h << "\n";
  auto write_block = [&](const Tensor& t) {
    std::vector<float> buf(static_cast<size_t>(t.numel()));
    for (int64_t i = 0; i < t.numel(); ++i) buf[static_cast<size_t>(i)] = static_cast<float>(t[i]);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
  };
  write_block(g.probe_states);
  write_block(g.edge_weights);
}

ProbeGraph load_probe_graph(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read probe graph: " + path);
  std::string line;
  std::getline(in, line);
  json hdr = json::parse(line);
  if (hdr.at("format") != "sparsediff-probe-graph-v1")
    throw std::runtime_error("unknown probe graph format");
  ProbeGraph g;
  int64_t k = hdr.at("k"), l = hdr.at("lookback"), c = hdr.at("channels");
  g.probe_coords = hdr.at("probe_coords").get<std::vector<std::pair<int64_t, int64_t>>>();
  g.probe_codeword = hdr.at("probe_codeword").get<std::vector<int32_t>>();
  g.region_map.h = hdr.at("h");
  g.region_map.w = hdr.at("w");
  g.region_map.region_ids = hdr.at("region_ids").get<std::vector<int32_t>>();
  g.region_map.cell_region = hdr.at("cell_region").get<std::vector<int32_t>>();
  g.region_map.cells.resize(static_cast<size_t>(k));
  for (int64_t p = 0; p < g.region_map.h * g.region_map.w; ++p)
    g.region_map.cells[static_cast<size_t>(g.region_map.cell_region[static_cast<size_t>(p)])]
        .push_back(p);
  auto read_block = [&](std::vector<int64_t> shape) {
    Tensor t(shape);
    std::vector<float> buf(static_cast<size_t>(t.numel()));
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = buf[static_cast<size_t>(i)];
    return t;
  };
  g.probe_states = read_block({k, l, c});
  g.edge_weights = read_block({k, k});
  return g;
}

}  // namespace sparsediff::topology
