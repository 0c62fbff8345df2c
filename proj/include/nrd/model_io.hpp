#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "nrd/model.hpp"

namespace nrd {

// "RDMD" model container, little-endian:
//   "RDMD" u32 version, u32 n, u32 h, u32 diffusion mode,
//   f32 W0[n*h], f32 b0[h], f32 W1[h*n], f32 diffusion[n] (c or logits),
//   u64 target hash, u64 training steps, u32 crc32 of all preceding bytes.
inline constexpr std::uint32_t kModelVersion = 1;

struct ModelMetadata {
  std::uint64_t target_hash = 0;
  std::uint64_t training_steps = 0;
};

struct ModelFile {
  RDModel<float> model;
  ModelMetadata meta;
};

std::vector<std::uint8_t> encode_model(const RDModel<float>& model, const ModelMetadata& meta);
ModelFile decode_model(std::vector<std::uint8_t> bytes, const std::string& what = "model");

void save_model(const std::filesystem::path& path, const RDModel<float>& model, const ModelMetadata& meta = {});
ModelFile load_model(const std::filesystem::path& path);

// crc32 of the encoded parameters (metadata excluded); identifies a model
// independent of where it is used.
std::uint32_t model_checksum(const RDModel<float>& model);

}  // namespace nrd
