#pragma once

#include <cstdint>

#include "qkd/bitblock.hpp"
#include "qkd/gf2n.hpp"

namespace qkd {

struct FinalKeyParams {
    std::size_t n_in = 0;  // reconciled key length
    double e = 0;          // QBER
    std::size_t n_dis = 0; // bits disclosed in confirmation and correction
    std::size_t n_mar = 0; // configured security margin

    void validate() const;
};

// Key compression factor: 1 at e = 0, 1 - h(e) on (0, 0.5], 0 above 0.5.
double tau(double e);

// max(floor(n_in * tau(e)) - n_dis - n_mar, 0)
std::size_t final_length(const FinalKeyParams& p);

// 96-bit polynomial hash of the key data with exchanged random value r,
// evaluated with the same block rule as the transcript hash.
GfField::Elem confirm_hash(const BitBlock& key, const GfField::Elem& r);

// Toeplitz privacy amplification. The seed holds the matrix diagonals
// (length n_in + n_fin - 1); entry T[j][i] = seed[n_fin - 1 - j + i], so the
// first column is seed[n_fin-1 .. 0] and the first row seed[n_fin-1 ..].
// Computed as a GF(2) convolution accelerated by a number theoretic
// transform; bit-exact with the naive matrix-vector product.
BitBlock toeplitz_pa(const BitBlock& key, const BitBlock& seed, std::size_t n_fin);

// Integer convolution of two 0/1 sequences via NTT mod 998244353; exposed for
// the equivalence tests.
std::vector<std::uint32_t> ntt_convolve(const std::vector<std::uint32_t>& a,
                                        const std::vector<std::uint32_t>& b);

} // namespace qkd
