#include "cortenc/checkpoint.hpp"

#include <fstream>
#include <set>

#include "cortenc/container.hpp"
#include "cortenc/errors.hpp"
#include "cortenc/hash.hpp"

namespace cortenc {

namespace fs = std::filesystem;

namespace {

std::string tensor_file(const std::string& param_name) {
  std::string f = param_name;
  for (char& c : f)
    if (c == '/' || c == '\\') c = '_';
  return f + ".t64";
}

}  // namespace

uint64_t params_fingerprint(const nn::ParamStore& ps) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : ps.all()) {
    h = fnv1a64(p->name.data(), p->name.size(), h);
    h = tensor_bits_hash(p->value, h);
  }
  return h;
}

void save_checkpoint(const fs::path& dir, const nn::ParamStore& ps, const nlohmann::json& extra) {
  fs::create_directories(dir);
  nlohmann::json manifest;
  manifest["format"] = "cortenc-checkpoint-v1";
  manifest["params"] = nlohmann::json::array();
  for (const auto& p : ps.all()) {
    const std::string file = tensor_file(p->name);
    write_tensor(dir / file, p->value, Dtype::f64);
    manifest["params"].push_back(
        {{"name", p->name}, {"file", file}, {"shape", p->value.shape()}});
  }
  manifest["params_fingerprint"] = hash_hex(params_fingerprint(ps));
  manifest["extra"] = extra;
  std::ofstream out(dir / "manifest.json", std::ios::binary);
  if (!out) throw IoError("save_checkpoint: cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << "\n";
}

nlohmann::json peek_manifest(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json", std::ios::binary);
  if (!in) throw IoError("checkpoint manifest not found at " + (dir / "manifest.json").string());
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("checkpoint manifest is not valid JSON: " + std::string(e.what()));
  }
  return manifest;
}

nlohmann::json load_checkpoint(const fs::path& dir, nn::ParamStore& ps) {
  nlohmann::json manifest = peek_manifest(dir);
  if (manifest.value("format", "") != "cortenc-checkpoint-v1")
    throw IoError("unrecognized checkpoint format in " + dir.string());
  std::set<std::string> seen;
  for (const auto& entry : manifest.at("params")) {
    const std::string name = entry.at("name").get<std::string>();
    if (!ps.contains(name))
      throw ConfigError("checkpoint parameter '" + name + "' does not exist in this model");
    nn::Parameter& p = ps.at(name);
    Tensor t = read_tensor(dir / entry.at("file").get<std::string>());
    if (!t.same_shape(p.value))
      throw ShapeError("checkpoint parameter '" + name + "' has shape " + t.shape_str() +
                       ", model expects " + p.value.shape_str());
    p.value = std::move(t);
    seen.insert(name);
  }
  for (const auto& p : ps.all())
    if (!seen.count(p->name))
      throw ConfigError("model parameter '" + p->name + "' missing from checkpoint " +
                        dir.string());
  const std::string want = manifest.value("params_fingerprint", "");
  if (!want.empty() && want != hash_hex(params_fingerprint(ps)))
    throw DataError("checkpoint " + dir.string() + " failed its parameter fingerprint check");
  return manifest;
}

}  // namespace cortenc
