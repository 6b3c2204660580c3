#pragma once

#include <cstdint>
#include <vector>

#include "qkd/bitblock.hpp"
#include "qkd/rng.hpp"
#include "qkd/sync.hpp"
#include "qkd/tags.hpp"

namespace qkd {

// Key bit contributed by a detection. The source state is anti-correlated in
// HV and correlated in DA, so Bob flips his HV-basis bits; in the noiseless
// case both parties then hold equal keys.
inline int sifted_bit(Party p, DetectorChannel ch) {
    int bit = channel_bit(ch);
    if (p == Party::Bob && channel_basis(ch) == Basis::HV) bit ^= 1;
    return bit;
}

struct SiftResult {
    BitBlock key_a, key_b;
    std::size_t n_coinc_total = 0;
    std::size_t n_sifted = 0;
    std::vector<Basis> basis_tags; // per kept bit
};

// Drops mixed-basis pairs, applies the flip convention.
SiftResult sift(const CoincidenceSet& c, const TagStream& a, const TagStream& b);

struct QberEstimate {
    double e = 0;
    std::size_t n_disclosed = 0;
    std::size_t n_errors = 0;
    SiftResult remaining; // disclosed positions removed
};

// Sorted distinct sample positions; both parties must call this with the same
// jointly derived seed to select identical positions.
std::vector<std::size_t> sample_positions(std::size_t n, double fraction, Rng& rng);

QberEstimate estimate_qber(const SiftResult& s, double fraction, Rng& rng);

} // namespace qkd
