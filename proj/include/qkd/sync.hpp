#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "qkd/tags.hpp"

namespace qkd {

struct NoSyncError : std::runtime_error {
    NoSyncError() : std::runtime_error("no sync found") {}
};

struct SyncConfig {
    double search_range_s = 10.0; // coarse search covers +- this
    Ps coarse_bin = 500000;      // stage-1 correlation bin, ps
    Ps final_bin = 1000;         // refinement target bin, ps
    double max_drift = 1e-5;     // assumed clock drift bound (sets slice lengths)
    double threshold_sigma = 6.5; // correlation peak significance
    std::size_t min_block = 1024; // fine-sync block size, detections
    Ps fine_window = 1000000;     // fine-sync histogram half-range, ps
    Ps fine_bin = 32000;          // fine-sync pass-1 histogram bin, ps
};

// Piecewise clock-offset model: t_alice = t_bob - delta(t_bob).
struct OffsetModel {
    struct Block {
        Ps t_start;   // Bob clock, inclusive
        Ps t_center;
        Ps offset;    // delta at t_center
        bool flagged; // no usable histogram peak; offset comes from the fit
    };
    std::vector<Block> blocks; // sorted by t_start
    Ps coarse = 0;
    double drift = 0.0; // fitted d(delta)/d(t_bob)

    Ps delta_at(Ps t_bob) const;
};

// Stage 1 of synchronization: binned cross-correlation via fast convolution,
// progressively refined with finer difference histograms around the peak.
// Returns the Bob-minus-Alice offset near the start of the stream overlap.
// Throws NoSyncError when no correlation peak clears the significance
// threshold.
Ps coarse_offset(const TagStream& a, const TagStream& b,
                 double search_range_s = 10.0, Ps bin = 500000,
                 const SyncConfig& cfg = {});

// Stage 2: histogram-based per-block offsets over blocks of >= min_block Bob
// detections, with a linear drift fit and a drift-corrected refinement pass.
OffsetModel fine_sync(const TagStream& a, const TagStream& b, Ps coarse,
                      std::size_t min_block = 1024, const SyncConfig& cfg = {});

struct Coincidence {
    std::uint32_t idx_a;
    std::uint32_t idx_b;
    Ps delta; // residual (t_bob - model delta) - t_alice
};

struct CoincidenceSet {
    std::vector<Coincidence> pairs;
    std::size_t size() const { return pairs.size(); }
};

// Greedy matching of offset-corrected tags. `window` is the full coincidence
// window width: a pair qualifies when |residual| <= window / 2. Candidates are
// accepted globally in order of increasing |residual|, each tag at most once.
CoincidenceSet match_coincidences(const TagStream& a, const TagStream& b,
                                  const OffsetModel& m, Ps window = 1000);

} // namespace qkd
