#include "voc/nn/checkpoint.hpp"

#include "voc/error.hpp"
#include "voc/io.hpp"

namespace voc::nn {

namespace {
constexpr int kVersion = 1;

nlohmann::json parse_manifest(const std::string& text, const std::string& path) {
  nlohmann::json m = nlohmann::json::parse(text, nullptr, false);
  if (m.is_discarded()) throw IoError("corrupt checkpoint manifest: " + path);
  return m;
}

void check_kind(const nlohmann::json& m, const std::string& expected_kind,
                const std::string& path) {
  if (m.value("format", "") != "voc-checkpoint" || m.value("version", 0) != kVersion) {
    throw IoError("not a supported checkpoint file: " + path);
  }
  if (m.value("kind", "") != expected_kind) {
    throw IoError("checkpoint kind '" + m.value("kind", std::string("?")) + "' where '" +
                  expected_kind + "' was expected: " + path);
  }
}
}  // namespace

void save_checkpoint(const std::string& path, const std::string& kind,
                     const nlohmann::json& hyper, const std::vector<const Parameter*>& params) {
  nlohmann::json manifest;
  manifest["format"] = "voc-checkpoint";
  manifest["version"] = kVersion;
  manifest["kind"] = kind;
  manifest["hyper"] = hyper;
  nlohmann::json tensors = nlohmann::json::array();
  std::vector<uint8_t> blob;
  for (const Parameter* p : params) {
    nlohmann::json t;
    t["name"] = p->name;
    t["shape"] = p->shape;
    tensors.push_back(t);
    auto bytes = doubles_to_f64_le(p->data);
    blob.insert(blob.end(), bytes.begin(), bytes.end());
  }
  manifest["tensors"] = tensors;
  write_json_blob(path, manifest.dump(), blob);
}

nlohmann::json load_checkpoint(const std::string& path, const std::string& expected_kind,
                               const std::vector<Parameter*>& params) {
  auto [text, blob] = read_json_blob(path);
  nlohmann::json m = parse_manifest(text, path);
  check_kind(m, expected_kind, path);
  const auto& tensors = m.at("tensors");
  if (tensors.size() != params.size()) {
    throw IoError("checkpoint holds " + std::to_string(tensors.size()) + " tensors, model has " +
                  std::to_string(params.size()));
  }
  std::size_t offset = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& t = tensors[i];
    Parameter& p = *params[i];
    if (t.at("name").get<std::string>() != p.name) {
      throw IoError("checkpoint tensor '" + t.at("name").get<std::string>() +
                    "' does not match expected '" + p.name + "'");
    }
    if (t.at("shape").get<std::vector<int>>() != p.shape) {
      throw IoError("checkpoint tensor '" + p.name + "' has a different shape");
    }
    std::size_t nbytes = p.numel() * 8;
    if (offset + nbytes > blob.size()) throw IoError("checkpoint blob truncated: " + path);
    p.data = f64_le_to_doubles(std::span<const uint8_t>(blob.data() + offset, nbytes));
    p.zero_grad();
    offset += nbytes;
  }
  if (offset != blob.size()) throw IoError("checkpoint blob has trailing bytes: " + path);
  return m.at("hyper");
}

nlohmann::json peek_checkpoint(const std::string& path, const std::string& expected_kind) {
  auto [text, blob] = read_json_blob(path);
  nlohmann::json m = parse_manifest(text, path);
  check_kind(m, expected_kind, path);
  return m.at("hyper");
}

}  // namespace voc::nn
