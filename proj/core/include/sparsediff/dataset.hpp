#pragma once

#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "sparsediff/grid.hpp"

namespace sparsediff {

/// Dataset directory layout: meta.json + traj_NNNN.bin, one little-endian
/// float32 raw tensor per trajectory, shape recorded in the metadata.
struct DatasetMeta {
  std::string system;
  nlohmann::json params;
  GridSpec grid;
  double dt = 1.0;
  std::vector<std::string> channel_names;
  std::vector<int64_t> shape;  // (T, C, h, w), identical across trajectories
  std::vector<uint64_t> seeds;
  std::vector<NormStats> norm_stats;  // per trajectory
  std::string config_hash;
};

void save_dataset(const std::string& dir, const DatasetMeta& meta,
                  const std::vector<Trajectory>& trajectories);
bool dataset_exists(const std::string& dir);
DatasetMeta load_dataset_meta(const std::string& dir);
Trajectory load_trajectory(const std::string& dir, const DatasetMeta& meta,
                           int64_t index);
int64_t dataset_size(const DatasetMeta& meta);

/// Raw float32 tensor files used for rollout reports and plots as well.
void write_f32_tensor(const std::string& path, const Tensor& t);
Tensor read_f32_tensor(const std::string& path, const std::vector<int64_t>& shape);

}  // namespace sparsediff
