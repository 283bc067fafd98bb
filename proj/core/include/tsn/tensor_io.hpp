#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "tsn/tensor.hpp"

namespace tsn {

/// Payload encodings of the "TSNT" tensor file. The version byte doubles as
/// the encoding tag.
enum class Payload : std::uint8_t { F32 = 1, U8 = 2 };

// Layout: "TSNT", u8 version, u8 rank, rank x u32 LE dims, then the payload
// (f32 LE for version 1, raw bytes for version 2).
std::vector<std::uint8_t> encode_tensor(const Tensor& tensor, Payload payload = Payload::F32);
Tensor decode_tensor(std::span<const std::uint8_t> bytes);

void write_tensor(const std::filesystem::path& path, const Tensor& tensor,
                  Payload payload = Payload::F32);
Tensor read_tensor(const std::filesystem::path& path);

}  // namespace tsn
