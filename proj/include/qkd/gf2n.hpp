#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "qkd/rng.hpp"

namespace qkd {

// Arithmetic in GF(2^n) for n in {32, 64, 96, 128, 256}, with the reduction
// polynomial x^n + tail fixed per n as the lexicographically least irreducible
// of that degree.
class GfField {
public:
    // little-endian 64-bit words; high words zero beyond n bits
    using Elem = std::array<std::uint64_t, 4>;

    explicit GfField(int nbits); // throws std::invalid_argument for other sizes

    int bits() const { return n_; }
    std::uint64_t reduction_tail() const { return tail_; }

    static constexpr Elem zero() { return {0, 0, 0, 0}; }
    static constexpr Elem one() { return {1, 0, 0, 0}; }

    static Elem add(const Elem& a, const Elem& b) {
        return {a[0] ^ b[0], a[1] ^ b[1], a[2] ^ b[2], a[3] ^ b[3]};
    }
    Elem mul(const Elem& a, const Elem& b) const;
    Elem xtime(const Elem& a) const; // multiply by x
    Elem inverse(const Elem& a) const; // a^(2^n - 2); inverse(0) = 0

    Elem random(Rng& rng) const;
    Elem from_bytes(std::span<const std::uint8_t> bytes) const; // little-endian
    std::vector<std::uint8_t> to_bytes(const Elem& a) const;

    bool valid(const Elem& a) const; // no bits at or above n

    // Exhaustive search for the smallest odd tail making x^n + tail
    // irreducible over GF(2). Used to derive and verify the fixed constants.
    static std::uint64_t least_irreducible_tail(int nbits);
    static bool is_irreducible(int nbits, std::uint64_t tail);

private:
    int n_;
    int words_;
    std::uint64_t tail_;
};

// Precomputed multiply by a fixed operand (8-bit window tables); used for the
// per-message transcript hashing where the key is constant.
class GfMulTable {
public:
    GfMulTable(const GfField& f, const GfField::Elem& k);
    GfField::Elem mul(const GfField::Elem& m) const;

private:
    int n_bytes_;
    std::vector<std::array<GfField::Elem, 256>> table_; // [byte position][byte value]
};

} // namespace qkd
