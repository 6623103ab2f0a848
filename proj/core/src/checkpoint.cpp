#include "sparsediff/checkpoint.hpp"

#include <filesystem>
#include <fstream>

namespace sparsediff::checkpoint {

namespace {

constexpr const char* kMagic = "sparsediff-checkpoint-v1";

nlohmann::json read_header(std::istream& in, const std::string& path) {
  std::string magic, header;
  if (!std::getline(in, magic) || magic != kMagic)
    throw CheckpointError("not a checkpoint file (bad magic/version): " + path);
  if (!std::getline(in, header))
    throw CheckpointError("truncated checkpoint header: " + path);
  return nlohmann::json::parse(header);
}

CheckpointMeta meta_from_header(const nlohmann::json& h) {
  CheckpointMeta meta;
  meta.module_id = h.at("module").get<std::string>();
  meta.config_hash = h.at("config_hash").get<std::string>();
  meta.extra = h.value("extra", nlohmann::json::object());
  return meta;
}

}  // namespace

void save_checkpoint(const std::string& path, const CheckpointMeta& meta,
                     const std::vector<ad::Var>& params) {
  std::filesystem::create_directories(
      std::filesystem::path(path).parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write checkpoint: " + path);
  nlohmann::json header;
  header["module"] = meta.module_id;
  header["config_hash"] = meta.config_hash;
  header["extra"] = meta.extra;
  nlohmann::json shapes = nlohmann::json::array();
  for (const auto& p : params) shapes.push_back(p->value.shape());
  header["shapes"] = shapes;
  out << kMagic << "\n" << header.dump() << "\n";
  for (const auto& p : params) {
    const Tensor& t = p->value;
    std::vector<float> buf(static_cast<size_t>(t.numel()));
    for (int64_t i = 0; i < t.numel(); ++i)
      buf[static_cast<size_t>(i)] = static_cast<float>(t[i]);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  if (!out) throw CheckpointError("write failure on checkpoint: " + path);
}

CheckpointMeta load_checkpoint(const std::string& path,
                               const std::string& expect_module,
                               const std::string& expect_hash,
                               const std::vector<ad::Var>& params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint: " + path);
  nlohmann::json header = read_header(in, path);
  CheckpointMeta meta = meta_from_header(header);
  if (!expect_module.empty() && meta.module_id != expect_module)
    throw CheckpointError("checkpoint module mismatch: expected " +
                          expect_module + ", found " + meta.module_id);
  if (!expect_hash.empty() && meta.config_hash != expect_hash)
    throw CheckpointError(
        "checkpoint config hash mismatch (refusing to mix artifacts from "
        "different configurations): " + path);
  auto shapes = header.at("shapes").get<std::vector<std::vector<int64_t>>>();
  if (shapes.size() != params.size())
    throw CheckpointError("checkpoint parameter count mismatch: " + path);
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor& t = params[i]->value;
    if (shapes[i] != t.shape())
      throw CheckpointError("checkpoint parameter shape mismatch at index " +
                            std::to_string(i) + ": " + path);
    std::vector<float> buf(static_cast<size_t>(t.numel()));
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!in) throw CheckpointError("truncated checkpoint blob: " + path);
    for (int64_t j = 0; j < t.numel(); ++j)
      t[j] = static_cast<double>(buf[static_cast<size_t>(j)]);
  }
  return meta;
}

CheckpointMeta peek_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint: " + path);
  return meta_from_header(read_header(in, path));
}

bool checkpoint_exists(const std::string& path) {
  return std::filesystem::exists(path);
}

}  // namespace sparsediff::checkpoint
