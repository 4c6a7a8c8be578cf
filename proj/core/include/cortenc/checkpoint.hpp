#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "cortenc/nn.hpp"

namespace cortenc {

// One checkpoint = a directory of tensor containers, one per
// parameter, plus manifest.json describing them. extra carries
// caller metadata (config hash, iteration, seed) and is returned
// verbatim by load_checkpoint.
void save_checkpoint(const std::filesystem::path& dir, const nn::ParamStore& ps,
                     const nlohmann::json& extra);

// Loads into an already-built store: every stored parameter must exist
// with the same shape, and vice versa. Returns the manifest.
nlohmann::json load_checkpoint(const std::filesystem::path& dir, nn::ParamStore& ps);

nlohmann::json peek_manifest(const std::filesystem::path& dir);

// FNV fingerprint over every parameter's bytes, in store order.
uint64_t params_fingerprint(const nn::ParamStore& ps);

}  // namespace cortenc
