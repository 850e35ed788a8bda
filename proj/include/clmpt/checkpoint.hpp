#pragma once
// Self-describing JSON checkpoint container: named tensors plus free-form
// metadata. Serialization uses shortest round-trip doubles, so identical
// parameters produce byte-identical files.

#include <string>

#include <json.hpp>

#include "clmpt/optim.hpp"

namespace clmpt {

void save_checkpoint(const std::string& path, const ParamStore& store,
                     const nlohmann::json& metadata);

struct LoadedCheckpoint {
    ParamStore store;
    nlohmann::json metadata;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

} // namespace clmpt
