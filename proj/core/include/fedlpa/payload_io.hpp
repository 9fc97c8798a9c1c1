#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "fedlpa/laplace.hpp"

namespace fedlpa {

// Little-endian client payload file:
//
//   "FLPA" | version u32 | client_id u64 | layer_count u32
//   per layer:  rows u32 | cols u32 | pi f64 | lambda f64
//   per layer:  M (rows*cols f64, row-major)
//               A upper triangle (cols*(cols+1)/2 f64, row-major, i <= j)
//               B upper triangle (rows*(rows+1)/2 f64)
//   sample_count u64
//
// Decoding reproduces the encoded payload bit for bit.
inline constexpr std::uint32_t kPayloadVersion = 1;

std::vector<std::uint8_t> encode_payload(const ClientPayload& payload);
// Throws FormatError with the byte offset of the first problem.
ClientPayload decode_payload(std::span<const std::uint8_t> bytes);

void save_payload(const std::filesystem::path& path, const ClientPayload& payload);
ClientPayload load_payload(const std::filesystem::path& path);

}  // namespace fedlpa
