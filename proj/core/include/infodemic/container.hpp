#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "infodemic/nn/tensor.hpp"

namespace infodemic {

/// Element encoding of a stored tensor.
enum class DType : std::uint8_t { f32 = 0, f64 = 1, i32 = 2 };

struct StoredTensor {
  std::string name;
  DType dtype = DType::f32;
  nn::Shape shape;
  std::vector<double> values;
};

/// Contents of an "IFDM" model file.
///
/// Layout (little-endian): magic "IFDM", u8 format version, then tagged
/// sections `tag[4] u64 length payload`:
///   ARCH  architecture / hyperparameters as UTF-8 JSON text
///   VHSH  u64 vocabulary hash
///   PHSH  u64 preprocessing-config hash
///   PARM  u32 count, then per tensor: u16 name length, name, u8 dtype,
///         u8 rank, u64 dims[rank], packed values
/// Unknown section tags are skipped on read.
struct ModelContainer {
  std::string architecture;
  std::uint64_t vocabulary_hash = 0;
  std::uint64_t pipeline_hash = 0;
  std::vector<StoredTensor> tensors;

  const StoredTensor& tensor(std::string_view name) const;
};

inline constexpr std::uint8_t kContainerVersion = 1;

std::string encode_container(const ModelContainer& container);
/// Throws Error on bad magic, unsupported version or truncated sections.
ModelContainer decode_container(std::string_view bytes);

void save_container(const std::string& path, const ModelContainer& container);
ModelContainer load_container(const std::string& path);

/// Throws Error explaining which hash differs from the active pipeline.
void verify_container_hashes(const ModelContainer& container, std::uint64_t vocabulary_hash,
                             std::uint64_t pipeline_hash);

}  // namespace infodemic
