#pragma once

// Checkpoint layout:
//   "PDAGRNN1"                      8 magic bytes
//   u32 little-endian               header length in bytes
//   header                          key=value text: model config and a tensor
//                                   manifest "tensor.<name>=<rows>,<cols>,<byte offset>"
//   tensor data                     little-endian f32, row-major, manifest order
// Tensors are the model parameters followed by the normalizer (norm.mean, norm.std).

#include "pdagrnn/data.hpp"
#include "pdagrnn/model.hpp"

#include <filesystem>
#include <string>

namespace pdagrnn {

struct Checkpoint {
    ModelConfig config;
    ModelParams params;
    NormStats norm;
};

std::string encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace pdagrnn
