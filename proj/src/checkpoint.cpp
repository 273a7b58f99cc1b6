#include <bit>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "stnet_json.hpp"
#include "thbench/error.hpp"
#include "thbench/hash.hpp"
#include "thbench/stnet.hpp"

namespace thbench::stnet {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint IO assumes a little-endian host");

constexpr char kMagic[8] = {'T', 'H', 'B', 'C', 'K', 'P', 'T', '1'};
constexpr const char* kFormat = "thbench-stnet-checkpoint/1";

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const STNet& net, Head head,
                     std::span<const std::string> labels, const std::string& manifest_json) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(manifest_json);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kInvalidArgument, std::string("checkpoint manifest is not JSON: ") + e.what());
  }

  nlohmann::json tensors = nlohmann::json::array();
  std::size_t offset = 0;
  Fnv1a digest;
  for (const auto& p : net.parameters()) {
    tensors.push_back({{"name", p.name}, {"shape", p.value.shape}, {"offset", offset}});
    offset += p.value.size();
    digest.update(p.value.ptr(), p.value.size() * sizeof(float));
  }
  nlohmann::json header = {{"format", kFormat},
                           {"config", net.config()},
                           {"head", to_string(head)},
                           {"labels", std::vector<std::string>(labels.begin(), labels.end())},
                           {"manifest", manifest},
                           {"tensors", tensors},
                           {"data_fnv1a", digest.hex()}};
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  // Write to a sibling file first so an interrupted save never leaves a
  // truncated checkpoint behind.
  const auto tmp = std::filesystem::path(path.string() + ".partial");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::kIo, "cannot write checkpoint " + tmp.string());
    const std::uint64_t len = text.size();
    out.write(kMagic, sizeof(kMagic));
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& p : net.parameters())
      out.write(reinterpret_cast<const char*>(p.value.ptr()),
                static_cast<std::streamsize>(p.value.size() * sizeof(float)));
    if (!out) fail(ErrorCode::kIo, "failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open checkpoint " + path.string());
  char magic[8];
  std::uint64_t len = 0;
  in.read(magic, sizeof(magic));
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    fail(ErrorCode::kIo, path.string() + " is not a thbench checkpoint");
  if (len > (std::uint64_t{1} << 30)) fail(ErrorCode::kIo, path.string() + ": corrupt header length");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) fail(ErrorCode::kIo, path.string() + ": truncated header");

  nlohmann::json header;
  STNetConfig cfg;
  try {
    header = nlohmann::json::parse(text);
    if (header.at("format").get<std::string>() != kFormat)
      fail(ErrorCode::kIo, path.string() + ": unsupported checkpoint format");
    cfg = header.at("config").get<STNetConfig>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kIo, path.string() + ": corrupt header: " + e.what());
  }

  Checkpoint ck{STNet(cfg, 0), head_from_string(header.value("head", std::string("softmax"))),
                header.value("labels", std::vector<std::string>{}), header.value("manifest", nlohmann::json::object()).dump()};
  Fnv1a digest;
  for (const auto& t : header.at("tensors")) {
    const auto name = t.at("name").get<std::string>();
    const auto shape = t.at("shape").get<std::vector<int>>();
    nn::Tensor<float> value(shape);
    in.read(reinterpret_cast<char*>(value.ptr()), static_cast<std::streamsize>(value.size() * sizeof(float)));
    if (!in) fail(ErrorCode::kIo, path.string() + ": truncated tensor data at " + name);
    digest.update(value.ptr(), value.size() * sizeof(float));
    if (name == "arc.weight") {
      require(shape == std::vector<int>{cfg.feature_dim, cfg.num_classes}, ErrorCode::kIo,
              path.string() + ": arc head has the wrong shape");
      Eigen::MatrixXd w(cfg.feature_dim, cfg.num_classes);
      for (int r = 0; r < cfg.feature_dim; ++r)
        for (int c = 0; c < cfg.num_classes; ++c)
          w(r, c) = value.data[static_cast<std::size_t>(r) * cfg.num_classes + c];
      ck.net.attach_arc_head(w);
      continue;
    }
    auto& p = ck.net.parameter(name);
    if (p.value.shape != shape)
      fail(ErrorCode::kIo, path.string() + ": tensor " + name + " has shape " + nn::shape_string(shape) +
                               ", expected " + nn::shape_string(p.value.shape));
    p.value = std::move(value);
  }
  if (digest.hex() != header.value("data_fnv1a", std::string()))
    fail(ErrorCode::kIo, path.string() + ": tensor data fingerprint mismatch");
  if (header.at("tensors").size() != ck.net.parameters().size())
    fail(ErrorCode::kIo, path.string() + ": checkpoint is missing tensors");
  return ck;
}

}  // namespace thbench::stnet
