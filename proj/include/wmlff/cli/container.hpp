#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "wmlff/features/pipeline.hpp"
#include "wmlff/model/model.hpp"

namespace wmlff {

// Single self-describing model file:
//   8-byte magic "WMLFFMC1", u32 format version, u64 metadata length,
//   metadata JSON (pipeline, model config, provenance), u32 tensor count,
//   then per tensor: u32 name length, name, u32 ndim (= 2), u64 rows,
//   u64 cols, rows*cols little-endian f32.
inline constexpr char kContainerMagic[8] = {'W', 'M', 'L', 'F', 'F', 'M', 'C', '1'};
inline constexpr std::uint32_t kContainerVersion = 1;

struct Provenance {
  std::uint64_t seed = 0;
  std::string config_hash;
  std::string train_config;  // JSON text
};

struct ModelArtifact {
  FeaturePipeline pipeline;
  WMLFFModel model;
  Provenance provenance;
};

void save_container(const std::filesystem::path& path, const ModelArtifact& artifact);
ModelArtifact load_container(const std::filesystem::path& path);

// JSON manifest listing member containers (paths relative to the manifest).
void save_ensemble_manifest(const std::filesystem::path& path, const std::vector<std::string>& members,
                            const Provenance& provenance);
std::vector<std::filesystem::path> read_ensemble_manifest(const std::filesystem::path& path);

bool is_ensemble_manifest(const std::filesystem::path& path);

// A container or a manifest; every member shares the first member's pipeline.
struct LoadedModels {
  FeaturePipeline pipeline;
  std::vector<WMLFFModel> members;
};
LoadedModels load_models(const std::filesystem::path& path);

}  // namespace wmlff
