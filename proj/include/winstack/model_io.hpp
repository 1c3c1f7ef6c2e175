#pragma once

#include <filesystem>
#include <memory>
#include <variant>

#include "winstack/meta_ann.hpp"
#include "winstack/meta_gbt.hpp"

namespace winstack {

// Model files are versioned JSON documents. Every double is hex-encoded
// (%a) so save/load round-trips bit-exactly.

void save_model(const std::filesystem::path& path, const AnnModel& model);
void save_model(const std::filesystem::path& path, const GbtModel& model);

using LoadedModel = std::variant<AnnModel, GbtModel>;

LoadedModel load_model(const std::filesystem::path& path);

}  // namespace winstack
