#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qkd/auth.hpp"
#include "qkd/bitblock.hpp"
#include "qkd/config.hpp"
#include "qkd/frame.hpp"
#include "qkd/kms.hpp"
#include "qkd/tags.hpp"

namespace qkd {

enum class Stage {
    Init,
    Synced,
    Sifted,
    Estimated,
    Reconciled,
    Confirmed,
    Amplified,
    Authenticated,
    Aborted,
};
const char* stage_name(Stage s);

struct SessionResult {
    Stage stage = Stage::Init;
    std::string abort_reason; // empty on success

    BitBlock final_key; // released only in stage Authenticated

    // per-stage metrics
    std::size_t n_coinc = 0;
    std::size_t n_sifted = 0;
    std::size_t n_in = 0;  // reconciliation input length (after estimation removal)
    std::size_t n_dis = 0; // correction + confirmation disclosures
    std::size_t n_fin = 0;
    std::size_t n_corrected = 0;
    double qber = 0;
    double duration_s = 0;     // local detection span
    std::size_t singles_local = 0;
    std::size_t singles_peer = 0;           // known to both (exchanged in sifting)
    std::vector<double> coinc_times_s;      // kept-pair times, local clock
};

// Full post-processing dialogue over an established channel. Alice is the
// reference party; Bob sends his detection times for synchronization and
// corrects his key toward Alice's. Both parties must share the configured
// session_seed and pre-shared key file contents. On success the final key is
// pushed to `kms` (when given) and returned; on any failure the key is
// discarded and `stage` is Aborted with a reason. Channel-level errors
// propagate the same way.
SessionResult run_session(Party role, const TagStream& tags, const RunConfig& cfg,
                          Channel& channel, KeyStore& keys, KmsStore* kms = nullptr);

struct StatsBin {
    double bin_start_s;
    double skr_bps;
    double qber;
    double singles_a;
    double singles_b;
    double coinc;
};

// Fixed-width bin aggregates suitable for rate-over-time plots. The secret
// key is attributed to bins proportionally to their coincidence counts.
std::vector<StatsBin> stats_report(const SessionResult& r, Party role, double bin_s);

std::string stats_csv(const std::vector<StatsBin>& bins);
std::string stats_json(const std::vector<StatsBin>& bins);

} // namespace qkd
