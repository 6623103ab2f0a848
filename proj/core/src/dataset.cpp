#include "sparsediff/dataset.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

namespace sparsediff {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string traj_filename(int64_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "traj_%04lld.bin", static_cast<long long>(index));
  return buf;
}

json norm_stats_to_json(const NormStats& s) {
  json j;
  j["min_max"] = s.min_max;
  j["constant_channel"] = std::vector<int>(s.constant_channel.begin(),
                                           s.constant_channel.end());
  return j;
}

NormStats norm_stats_from_json(const json& j) {
  NormStats s;
  s.min_max = j.at("min_max").get<std::vector<std::pair<double, double>>>();
  for (int v : j.at("constant_channel").get<std::vector<int>>())
    s.constant_channel.push_back(v != 0);
  return s;
}

}  // namespace

void write_f32_tensor(const std::string& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  std::vector<float> buf(static_cast<size_t>(t.numel()));
  for (int64_t i = 0; i < t.numel(); ++i) buf[static_cast<size_t>(i)] = static_cast<float>(t[i]);
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
}

Tensor read_f32_tensor(const std::string& path, const std::vector<int64_t>& shape) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for read: " + path);
  int64_t n = Tensor::numel_of(shape);
  std::vector<float> buf(static_cast<size_t>(n));
  in.read(reinterpret_cast<char*>(buf.data()),
          static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (in.gcount() != static_cast<std::streamsize>(buf.size() * sizeof(float)))
    throw std::runtime_error("short read: " + path);
  Tensor t(shape);
  for (int64_t i = 0; i < n; ++i) t[i] = buf[static_cast<size_t>(i)];
  return t;
}

void save_dataset(const std::string& dir, const DatasetMeta& meta,
                  const std::vector<Trajectory>& trajectories) {
  fs::create_directories(dir);
  json j;
  j["system"] = meta.system;
  j["params"] = meta.params;
  j["grid"] = {{"height", meta.grid.height},
               {"width", meta.grid.width},
               {"domain_length_x", meta.grid.domain_length_x},
               {"domain_length_y", meta.grid.domain_length_y},
               {"boundary", meta.grid.boundary == Boundary::kPeriodic
                                ? "periodic"
                                : "no-slip-obstacle"}};
  j["dt"] = meta.dt;
  j["channel_names"] = meta.channel_names;
  j["shape"] = meta.shape;
  j["seeds"] = meta.seeds;
  j["config_hash"] = meta.config_hash;
  j["n_trajectories"] = trajectories.size();
  json stats = json::array();
  for (const auto& s : meta.norm_stats) stats.push_back(norm_stats_to_json(s));
  j["norm_stats"] = stats;
  std::ofstream out(dir + "/meta.json");
  out << j.dump(2) << "\n";
  for (size_t i = 0; i < trajectories.size(); ++i)
    write_f32_tensor(dir + "/" + traj_filename(static_cast<int64_t>(i)),
                     trajectories[i].data);
}

bool dataset_exists(const std::string& dir) {
  return fs::exists(dir + "/meta.json");
}

DatasetMeta load_dataset_meta(const std::string& dir) {
  std::ifstream in(dir + "/meta.json");
  if (!in) throw std::runtime_error("dataset not found: " + dir);
  json j = json::parse(in);
  DatasetMeta m;
  m.system = j.at("system");
  m.params = j.at("params");
  m.grid.height = j.at("grid").at("height");
  m.grid.width = j.at("grid").at("width");
  m.grid.domain_length_x = j.at("grid").at("domain_length_x");
  m.grid.domain_length_y = j.at("grid").at("domain_length_y");
  m.grid.boundary = j.at("grid").at("boundary") == "periodic"
                        ? Boundary::kPeriodic
                        : Boundary::kNoSlipObstacle;
  m.dt = j.at("dt");
  m.channel_names = j.at("channel_names").get<std::vector<std::string>>();
  m.shape = j.at("shape").get<std::vector<int64_t>>();
  m.seeds = j.at("seeds").get<std::vector<uint64_t>>();
  m.config_hash = j.value("config_hash", "");
  for (const auto& s : j.at("norm_stats")) m.norm_stats.push_back(norm_stats_from_json(s));
  return m;
}

int64_t dataset_size(const DatasetMeta& meta) {
  return static_cast<int64_t>(meta.seeds.size());
}

Trajectory load_trajectory(const std::string& dir, const DatasetMeta& meta,
                           int64_t index) {
  Trajectory t;
  t.data = read_f32_tensor(dir + "/" + traj_filename(index), meta.shape);
  t.dt = meta.dt;
  t.channel_names = meta.channel_names;
  if (static_cast<size_t>(index) < meta.norm_stats.size())
    t.norm_stats = meta.norm_stats[static_cast<size_t>(index)];
  return t;
}

}  // namespace sparsediff
