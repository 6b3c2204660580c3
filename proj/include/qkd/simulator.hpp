#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qkd/tags.hpp"

namespace qkd {

struct SourceParams {
    double pair_rate = 1e6;        // entangled pairs/s emitted by the source
    double v_hv = 0.995;           // polarization visibility, HV basis
    double v_da = 0.974;           // polarization visibility, DA basis
    double eff_a = 0.1;            // end-to-end detection probability, Alice arm
    double eff_b = 0.01;           // end-to-end detection probability, Bob arm
    double dark_per_det_a = 100;   // counts/s per detector
    double dark_per_det_b = 100;   // counts/s per detector
    double bg_b = 0;               // counts/s daylight background at Bob, split over 4 detectors
    double jitter_sigma = 350e-12 / 1.4142135623730951; // s, per detection
    double clock_offset = 0;       // s, Bob clock minus Alice clock
    double clock_drift = 0;        // dimensionless Bob clock rate error
    double duration = 1.0;         // s
    std::uint64_t seed = 1;

    void validate() const; // throws std::invalid_argument
};

enum class TagOrigin : std::uint8_t {
    PairMatched = 0, // pair member, partner also detected
    PairLone = 1,    // pair member, partner lost
    Dark = 2,
    Background = 3,
};

struct GroundTruth {
    double clock_offset = 0; // s
    double clock_drift = 0;

    std::vector<TagOrigin> origin_a, origin_b;              // per tag
    std::vector<std::pair<std::uint32_t, std::uint32_t>> matched_pairs; // (idx_a, idx_b)

    // Bob-clock reading minus Alice-clock reading for a simultaneous event,
    // as a function of the Bob-clock time (picoseconds).
    Ps true_delta_at_bob_time(Ps t_bob) const;
};

struct Session {
    TagStream alice;
    TagStream bob;
    GroundTruth truth;
};

Session generate_session(const SourceParams& p);

// JSON sidecar with the generating parameters, per-origin tag counts, and the
// true clock model; per-tag classifications included below `detail_limit` tags.
void write_ground_truth(const Session& s, const SourceParams& p,
                        const std::string& path, std::size_t detail_limit = 1000000);

} // namespace qkd
