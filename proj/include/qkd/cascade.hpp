#pragma once

#include <cstdint>

#include "qkd/bitblock.hpp"
#include "qkd/frame.hpp"
#include "qkd/tags.hpp"

namespace qkd {

struct CascadeConfig {
    std::size_t passes = 4;
    std::uint64_t shuffle_seed = 1;
    // Number of consecutive clean random-subset parity probes required after
    // the last pass before declaring the keys equal (residual-error check).
    std::size_t verify_probes = 16;

    void validate() const;
};

// initial block size: clamp(ceil(0.73/e), 8, min(n, 2^16)); e = 0 degenerates
// to the upper clamp so the first pass is not one all-key block.
std::size_t cascade_k1(double e_est, std::size_t n);

struct ReconcileOutcome {
    BitBlock key;                 // corrected key (Bob side; Alice's is unchanged)
    std::size_t n_disclosed = 0;  // parity bits revealed on the channel
    std::size_t n_corrected = 0;  // bits flipped on Bob's side
    std::size_t transcript_msgs = 0;
};

// Interactive reconciliation. Alice is the reference responder; Bob drives the
// passes and ends holding a key equal to Alice's. Both sides arrive at the
// same n_disclosed, cross-checked through a final acknowledgment exchange.
// Throws std::runtime_error on channel failure or accounting mismatch.
ReconcileOutcome reconcile(Party role, const BitBlock& key, double e_est,
                           const CascadeConfig& cfg, Channel& channel);

// Locate the single erroneous bit of an interval with odd error count using
// ceil(log2(width)) parity queries answered by `ref_parity(lo, hi)`.
// Exposed for the enumeration tests; reconcile uses the batched equivalent.
template <typename ParityFn>
std::size_t binary_search_block(std::size_t lo, std::size_t hi, const BitBlock& key,
                                ParityFn ref_parity, std::size_t& n_queries) {
    while (hi - lo > 1) {
        std::size_t mid = lo + (hi - lo) / 2;
        ++n_queries;
        bool ref = ref_parity(lo, mid);
        bool own = key.range_parity(lo, mid);
        if (ref != own) hi = mid;
        else lo = mid;
    }
    return lo;
}

} // namespace qkd
