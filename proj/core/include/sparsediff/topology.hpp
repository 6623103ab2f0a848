#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sparsediff/tensor.hpp"
#include "sparsediff/vq.hpp"

namespace sparsediff::topology {

/// Partition of the grid into per-codeword governing regions. `cell_region`
/// maps each cell to its compact region index (a position in `region_ids`).
struct GoverningRegionMap {
  int64_t h = 0, w = 0;
  std::vector<int32_t> region_ids;              // sorted distinct codeword ids
  std::vector<std::vector<int64_t>> cells;      // flat cell indices per region
  std::vector<int32_t> cell_region;             // h*w -> compact region index

  int64_t k() const { return static_cast<int64_t>(region_ids.size()); }
};

struct ProbeGraph {
  std::vector<std::pair<int64_t, int64_t>> probe_coords;  // (row, col)
  Tensor probe_states;                                    // (k, l, C)
  std::vector<int32_t> probe_codeword;
  Tensor edge_weights;                                    // (k, k) row-stochastic
  GoverningRegionMap region_map;

  int64_t k() const { return static_cast<int64_t>(probe_coords.size()); }
  int64_t lookback() const { return probe_states.dim(1); }
  int64_t channels() const { return probe_states.dim(2); }
};

GoverningRegionMap governing_regions(const vq::VQAssignment& assignment);

/// One coordinate per region, uniform over that region's cells.
std::vector<std::pair<int64_t, int64_t>> select_probes(
    const GoverningRegionMap& regions, uint64_t seed);

/// Per-region arithmetic mean of the window at each (timestep, channel).
Tensor aggregate_probe_states(const Tensor& window,
                              const GoverningRegionMap& regions);

/// Row-normalized neighborhood-overlap counts; Moore neighborhood of the
/// given radius, center excluded, non-periodic at grid edges. Rows with zero
/// counts fall back to uniform and are reported through `isolated`.
Tensor edge_weights(const GoverningRegionMap& regions, int64_t radius = 1,
                    std::vector<bool>* isolated = nullptr);

ProbeGraph build_probe_graph(const Tensor& window,
                             const vq::VQAssignment& assignment, uint64_t seed,
                             int64_t neighborhood_radius = 1);

enum class AblationMode { kUniform, kRandom, kKnn };

/// Probe-selection / edge ablations. Uniform and random modes build Voronoi
/// regions around their probes; knn keeps the codebook graph but replaces
/// edge weights with row-normalized kNN adjacency over probe coordinates
/// (k = ceil(k_frac * probe count)).
ProbeGraph build_ablation_graph(const Tensor& window, AblationMode mode,
                                int64_t n_probes, double k_frac, uint64_t seed,
                                const vq::VQAssignment* assignment = nullptr,
                                int64_t neighborhood_radius = 1);

/// JSON header + raw float32 blocks (states, edge weights).
void save_probe_graph(const std::string& path, const ProbeGraph& graph);
ProbeGraph load_probe_graph(const std::string& path);

}  // namespace sparsediff::topology
