#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "oacl/adapters.hpp"
#include "oacl/backbone.hpp"

namespace oacl {

/// Binary model file: magic "OACL1", shape header, backbone weights, then one
/// column of adapters per task with their gate modes and freeze flags.
/// Doubles are stored as raw little-endian IEEE-754, so a round trip is exact.
struct Checkpoint {
    Backbone backbone;
    AdapterStack stack;
};

std::string serialize_checkpoint(const Backbone& backbone, const AdapterStack& stack);
/// Throws DataError on a bad magic string, truncation or trailing bytes.
Checkpoint deserialize_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const Backbone& backbone, const AdapterStack& stack);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Byte image of one adapter (all four params, gate mode, freeze flags).
std::string serialize_adapter(const OAAdapter& adapter);

} // namespace oacl
