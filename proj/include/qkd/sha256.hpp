#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>

namespace qkd {

// Minimal SHA-256 (FIPS 180-4) used for deriving key identifiers.
std::array<std::uint8_t, 32> sha256(std::span<const std::uint8_t> data);

std::string hex(std::span<const std::uint8_t> bytes);

} // namespace qkd
