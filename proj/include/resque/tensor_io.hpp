#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "resque/tensor.hpp"

namespace resque {

/// On-disk tensor container, little-endian, no padding:
///
///   offset  size        field
///   0       4           magic "RSQE"
///   4       4  u32      version (1)
///   8       1  u8       dtype (1 = f32)
///   9       1  u8       flags (bit0: labels present)
///   10      2  u16      reserved (0)
///   12      4  u32      ndim
///   16      8*ndim u64  dims
///   ...     4*prod f32  payload
///   [if labels] u64 count, count * u32 labels
inline constexpr std::uint32_t kTensorFileVersion = 1;
inline constexpr std::uint8_t kDtypeF32 = 1;
inline constexpr std::uint8_t kFlagLabels = 0x01;
inline constexpr std::size_t kTensorHeaderSize = 16;

struct TensorFile {
  Tensor tensor;
  std::optional<std::vector<int>> labels;
};

std::vector<std::uint8_t> encode_tensor(const Tensor& tensor,
                                        std::optional<std::span<const int>> labels = std::nullopt);
TensorFile decode_tensor(std::span<const std::uint8_t> bytes);

void write_tensor_file(const std::filesystem::path& path, const Tensor& tensor,
                       std::optional<std::span<const int>> labels = std::nullopt);
TensorFile read_tensor_file(const std::filesystem::path& path);

}  // namespace resque
