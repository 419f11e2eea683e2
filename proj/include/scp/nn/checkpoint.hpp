#pragma once

#include <filesystem>

#include <json.hpp>

#include "scp/nn/sgd.hpp"
#include "scp/nn/unet.hpp"

namespace scp::nn {

// Single-file archive: magic, JSON manifest, then raw little-endian float32 blocks for
// every parameter, batch-norm buffer and momentum buffer listed in the manifest.
// Caller-supplied manifest fields (iteration, RNG state, run config) are stored verbatim
// under "state".
void save_checkpoint(const std::filesystem::path& path, UNet<float>& model, const Sgd<float>* optimizer,
                     const nlohmann::json& state);

// Reads the manifest only.
nlohmann::json read_checkpoint_manifest(const std::filesystem::path& path);

// Restores weights (and optimizer state when given) into an already-constructed model whose
// architecture matches the manifest. Returns the stored "state" object.
nlohmann::json load_checkpoint(const std::filesystem::path& path, UNet<float>& model, Sgd<float>* optimizer);

nlohmann::json architecture_json(const UNetConfig& config);
UNetConfig architecture_from_json(const nlohmann::json& j);

}  // namespace scp::nn
