#pragma once

// Binary tensor container used for model checkpoints and dataset caches.
//
// Layout (little-endian):
//   magic "AMXM" | version u32 | spec-string length u32 + UTF-8 bytes |
//   repeated tensors until EOF: rank u32, dims u32 x rank, raw f32 payload.

#include <cstdint>
#include <string>
#include <vector>

#include "amx/tensor.hpp"

namespace amx {

struct TensorBlob {
  Shape shape;
  std::vector<float> data;
};

struct Container {
  std::string spec;
  std::vector<TensorBlob> tensors;
};

inline constexpr uint32_t kContainerVersion = 1;

void write_container(const std::string& path, const std::string& spec,
                     const std::vector<TensorBlob>& tensors);

Container read_container(const std::string& path);

}  // namespace amx
