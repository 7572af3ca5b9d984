#include "realgait/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace realgait {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'R', 'G', 'C', 'K', 'P', 'T', '0', '1'};

}  // namespace

void save_archive(const std::string& path, const Archive& archive) {
  json header;
  header["format_version"] = 1;
  header["meta"] = json::parse(archive.meta_json);
  json tensors = json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : archive.tensors) {
    tensors.push_back({{"name", name},
                       {"shape", t.shape},
                       {"offset", offset},
                       {"count", t.data.size()}});
    offset += t.data.size();
  }
  header["tensors"] = std::move(tensors);
  const std::string header_str = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out.write(kMagic, sizeof(kMagic));
  const std::uint64_t header_len = header_str.size();
  out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
  out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  for (const auto& [name, t] : archive.tensors)
    out.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  if (!out) throw std::runtime_error("error writing checkpoint: " + path);
}

Archive load_archive(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("not a checkpoint file: " + path);
  std::uint64_t header_len = 0;
  in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
  std::string header_str(header_len, '\0');
  in.read(header_str.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw std::runtime_error("truncated checkpoint header: " + path);
  const json header = json::parse(header_str);
  if (header.at("format_version").get<int>() != 1)
    throw std::runtime_error("unsupported checkpoint version in " + path);

  Archive archive;
  archive.meta_json = header.at("meta").dump();
  for (const auto& tj : header.at("tensors")) {
    NamedTensor t;
    t.shape = tj.at("shape").get<std::vector<int>>();
    t.data.resize(tj.at("count").get<std::size_t>());
    in.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    if (!in) throw std::runtime_error("truncated checkpoint data: " + path);
    archive.tensors.emplace(tj.at("name").get<std::string>(), std::move(t));
  }
  return archive;
}

Archive archive_model(nn::RealGaitNet<float>& model) {
  Archive archive;
  json meta;
  meta["model_config"] = json::parse(model.config().to_json());
  archive.meta_json = meta.dump();
  for (const auto& p : model.params()) {
    NamedTensor t;
    t.shape = p.value->shape();
    t.data.assign(p.value->data(), p.value->data() + p.value->numel());
    archive.tensors.emplace(p.name, std::move(t));
  }
  for (const auto& b : model.buffers()) {
    NamedTensor t;
    t.shape = b.value->shape();
    t.data.assign(b.value->data(), b.value->data() + b.value->numel());
    archive.tensors.emplace(b.name, std::move(t));
  }
  return archive;
}

void restore_model(nn::RealGaitNet<float>& model, const Archive& archive) {
  auto restore = [&](const std::string& name, nn::Tensor<float>* value) {
    auto it = archive.tensors.find(name);
    if (it == archive.tensors.end())
      throw std::runtime_error("checkpoint is missing tensor " + name);
    if (it->second.data.size() != value->numel())
      throw std::runtime_error("checkpoint tensor " + name + " has wrong size");
    std::copy(it->second.data.begin(), it->second.data.end(), value->data());
  };
  for (const auto& p : model.params()) restore(p.name, p.value);
  for (const auto& b : model.buffers()) restore(b.name, b.value);
}

ModelConfig archived_model_config(const Archive& archive) {
  const json meta = json::parse(archive.meta_json);
  return ModelConfig::from_json(meta.at("model_config").dump());
}

void save_model(const std::string& path, nn::RealGaitNet<float>& model) {
  save_archive(path, archive_model(model));
}

std::unique_ptr<nn::RealGaitNet<float>> load_model(const std::string& path) {
  const Archive archive = load_archive(path);
  auto model =
      std::make_unique<nn::RealGaitNet<float>>(archived_model_config(archive));
  restore_model(*model, archive);
  return model;
}

}  // namespace realgait
