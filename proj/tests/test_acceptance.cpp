// Acceptance gate: runs every release criterion end to end and prints one
// PASS/FAIL line per criterion. Exit status is the number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "qkd/auth.hpp"
#include "qkd/bitblock.hpp"
#include "qkd/cascade.hpp"
#include "qkd/config.hpp"
#include "qkd/frame.hpp"
#include "qkd/gf2n.hpp"
#include "qkd/kms.hpp"
#include "qkd/linkmodel.hpp"
#include "qkd/privacy.hpp"
#include "qkd/rng.hpp"
#include "qkd/session.hpp"
#include "qkd/sifting.hpp"
#include "qkd/simulator.hpp"
#include "qkd/sync.hpp"

using namespace qkd;

namespace {

int g_failed = 0;

void report(int num, bool ok, const std::string& detail) {
    std::printf("criterion %d: %s%s%s\n", num, ok ? "PASS" : "FAIL",
                detail.empty() ? "" : " | ", detail.c_str());
    std::fflush(stdout);
    if (!ok) ++g_failed;
}

// ---------- shared helpers ----------

long double h2l(long double e) {
    if (e <= 0.0L || e >= 1.0L) return 0.0L;
    return -e * std::log2(e) - (1.0L - e) * std::log2(1.0L - e);
}

struct PairResult {
    SessionResult alice;
    SessionResult bob;
};

PairResult run_pair(const TagStream& ta, const TagStream& tb, const RunConfig& cfg_a,
                    const RunConfig& cfg_b, KeyStore& ka, KeyStore& kb,
                    std::shared_ptr<Channel> ca, std::shared_ptr<Channel> cb,
                    KmsStore* ma = nullptr, KmsStore* mb = nullptr) {
    PairResult out;
    std::thread alice([&] { out.alice = run_session(Party::Alice, ta, cfg_a, *ca, ka, ma); });
    out.bob = run_session(Party::Bob, tb, cfg_b, *cb, kb, mb);
    alice.join();
    return out;
}

KeyStore fresh_psk(std::uint64_t seed = 99) {
    Rng rng(seed);
    return KeyStore::random(4096, rng);
}

TagStream poisson_stream(Party p, double rate, double duration, Rng& rng) {
    TagStream s;
    s.party = p;
    double t = 0;
    while (true) {
        t += rng.exponential(rate);
        if (t >= duration) break;
        s.tags.push_back({static_cast<Ps>(t * 1e12),
                          static_cast<DetectorChannel>(rng.below(4))});
    }
    return s;
}

// schoolbook GF(2^n) multiply, independent of the table-driven implementation
GfField::Elem oracle_mul(int n, std::uint64_t tail, GfField::Elem a, const GfField::Elem& b) {
    auto shl1 = [n, tail](GfField::Elem v) {
        bool top = (v[static_cast<std::size_t>((n - 1) >> 6)] >> ((n - 1) & 63)) & 1;
        GfField::Elem r{};
        for (int w = 3; w >= 0; --w) {
            r[static_cast<std::size_t>(w)] = v[static_cast<std::size_t>(w)] << 1;
            if (w > 0) r[static_cast<std::size_t>(w)] |= v[static_cast<std::size_t>(w - 1)] >> 63;
        }
        for (int bit = n; bit < 256; ++bit)
            r[static_cast<std::size_t>(bit >> 6)] &= ~(std::uint64_t{1} << (bit & 63));
        if (top) r[0] ^= tail;
        return r;
    };
    GfField::Elem acc{};
    for (int bit = 0; bit < n; ++bit) {
        if ((b[static_cast<std::size_t>(bit >> 6)] >> (bit & 63)) & 1)
            acc = GfField::add(acc, a);
        a = shl1(a);
    }
    return acc;
}

BitBlock naive_toeplitz(const BitBlock& key, const BitBlock& seed, std::size_t n_fin) {
    BitBlock out(n_fin);
    for (std::size_t j = 0; j < n_fin; ++j) {
        bool acc = false;
        for (std::size_t i = 0; i < key.size(); ++i)
            acc ^= seed.get(n_fin - 1 - j + i) && key.get(i);
        out.set(j, acc);
    }
    return out;
}

struct BothOutcomes {
    ReconcileOutcome alice;
    ReconcileOutcome bob;
};

BothOutcomes run_reconcile(const BitBlock& key_a, const BitBlock& key_b, double e_est,
                           const CascadeConfig& cfg) {
    auto pair = make_loopback();
    BothOutcomes out;
    std::thread alice([&] { out.alice = reconcile(Party::Alice, key_a, e_est, cfg, *pair.a); });
    out.bob = reconcile(Party::Bob, key_b, e_est, cfg, *pair.b);
    alice.join();
    return out;
}

// flips one payload byte of the first frame of the given type passing through
class TamperChannel final : public Channel {
public:
    TamperChannel(std::shared_ptr<Channel> inner, FrameType target, std::size_t byte_idx)
        : inner_(std::move(inner)), target_(target), byte_idx_(byte_idx) {}
    void send(const Frame& f) override {
        if (!done_ && f.type == target_ && byte_idx_ < f.payload.size()) {
            Frame t = f;
            t.payload[byte_idx_] ^= 0x01;
            done_ = true;
            inner_->send(t);
            return;
        }
        inner_->send(f);
    }
    Frame recv() override { return inner_->recv(); }
    void close() override { inner_->close(); }

private:
    std::shared_ptr<Channel> inner_;
    FrameType target_;
    std::size_t byte_idx_;
    bool done_ = false;
};

class SniffChannel final : public Channel {
public:
    SniffChannel(std::shared_ptr<Channel> inner,
                 std::shared_ptr<std::vector<std::vector<std::uint8_t>>> log,
                 std::shared_ptr<std::mutex> mtx)
        : inner_(std::move(inner)), log_(std::move(log)), mtx_(std::move(mtx)) {}
    void send(const Frame& f) override {
        {
            std::lock_guard<std::mutex> lk(*mtx_);
            log_->push_back(f.payload);
        }
        inner_->send(f);
    }
    Frame recv() override { return inner_->recv(); }
    void close() override { inner_->close(); }

private:
    std::shared_ptr<Channel> inner_;
    std::shared_ptr<std::vector<std::vector<std::uint8_t>>> log_;
    std::shared_ptr<std::mutex> mtx_;
};

// ---------- criteria ----------

// 60 s nighttime benchmark: identical keys on both ends, mean secure key
// rate in [4.0, 7.0] kbps, full run well under five minutes
void criterion1() {
    auto t0 = std::chrono::steady_clock::now();
    RunConfig cfg;
    apply_preset(cfg, "jena-night");
    cfg.session_seed = 20260825;
    cfg.source.seed = 7;

    Session s = generate_session(cfg.source);
    double singles_a = static_cast<double>(s.alice.size()) / cfg.source.duration;
    double singles_b = static_cast<double>(s.bob.size()) / cfg.source.duration;
    s.truth = GroundTruth{}; // release the bulky per-tag classification

    KeyStore keys_a = fresh_psk(), keys_b = fresh_psk();
    std::vector<std::uint8_t> nonce{9, 9, 9};
    KmsStore kms_a(nonce), kms_b(nonce);
    auto lp = make_loopback(300000);
    auto r = run_pair(s.alice, s.bob, cfg, cfg, keys_a, keys_b, lp.a, lp.b, &kms_a, &kms_b);

    double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    double skr = static_cast<double>(r.alice.n_fin) / cfg.source.duration;
    double coinc_rate = static_cast<double>(r.alice.n_coinc) / cfg.source.duration;

    bool ok = r.alice.stage == Stage::Authenticated && r.bob.stage == Stage::Authenticated &&
              !r.alice.final_key.empty() && r.alice.final_key == r.bob.final_key &&
              skr >= 4000.0 && skr <= 7000.0 && elapsed < 300.0;
    std::ostringstream d;
    d << "skr=" << skr << " bps, qber=" << r.alice.qber << ", coinc=" << coinc_rate
      << " cps, singles=" << singles_a << "/" << singles_b << " cps, n_fin="
      << r.alice.n_fin << ", identical_keys="
      << (r.alice.final_key == r.bob.final_key && !r.alice.final_key.empty())
      << ", elapsed=" << elapsed << " s";
    if (r.alice.stage != Stage::Authenticated) d << ", abort: " << r.alice.abort_reason;
    report(1, ok, d.str());
}

// accidental coincidence rate of independent streams within 10% of 195.7 cps
void criterion2() {
    Rng rng(301);
    const double duration = 10.0;
    TagStream a = poisson_stream(Party::Alice, 1.03e6, duration, rng);
    TagStream b = poisson_stream(Party::Bob, 1.90e5, duration, rng);
    OffsetModel m;
    m.blocks.push_back({0, 0, 0, false});
    double rate = static_cast<double>(match_coincidences(a, b, m, 1000).size()) / duration;
    bool ok = std::abs(rate - 195.7) <= 0.10 * 195.7;
    std::ostringstream d;
    d << "measured " << rate << " cps vs 195.7 cps expected";
    report(2, ok, d.str());
}

// link budget anchors
void criterion3() {
    LinkParams p;
    p.cn2 = 1e-15;
    p.distance = 1700.0;
    double l17 = beam_spread_loss_db(p);
    p.distance = 10000.0;
    double l10k = beam_spread_loss_db(p);
    double skr = extrapolate_skr(5600.0, 2.1);
    bool ok = l17 <= 0.3 && l10k >= 1.3 && l10k <= 2.9 && skr >= 3300.0 && skr <= 3600.0;
    std::ostringstream d;
    d << "loss(1.7km)=" << l17 << " dB, loss(10km)=" << l10k
      << " dB, extrapolated skr=" << skr << " bps";
    report(3, ok, d.str());
}

// compression factor and final-length formula exactness
void criterion4() {
    bool ok = tau(0.0) == 1.0 && tau(0.51) == 0.0 && tau(0.6) == 0.0;
    long double oracle = 1.0L - h2l(0.02L);
    ok = ok && std::abs(tau(0.02) - static_cast<double>(oracle)) < 1e-6;

    Rng rng(401);
    int grid_fail = 0;
    for (int i = 0; i < 1000; ++i) {
        FinalKeyParams p;
        p.n_in = rng.below(1000000);
        p.e = rng.uniform();
        p.n_dis = rng.below(200000);
        p.n_mar = rng.below(2000);
        long double t = p.e == 0.0 ? 1.0L : (p.e > 0.5 ? 0.0L : 1.0L - h2l(p.e));
        long long want = static_cast<long long>(
                             std::floor(static_cast<long double>(p.n_in) * t)) -
                         static_cast<long long>(p.n_dis) - static_cast<long long>(p.n_mar);
        if (want < 0) want = 0;
        if (final_length(p) != static_cast<std::size_t>(want)) ++grid_fail;
    }
    ok = ok && grid_fail == 0;
    std::ostringstream d;
    d << "tau(0.02)=" << tau(0.02) << " (oracle " << static_cast<double>(oracle)
      << "), grid mismatches=" << grid_fail << "/1000";
    report(4, ok, d.str());
}

// oracle equivalences: field multiply, Toeplitz hashing, cascade
void criterion5() {
    Rng rng(501);
    int mul_fail = 0;
    for (int n : {32, 64, 96, 128, 256}) {
        GfField f(n);
        for (int i = 0; i < 1000; ++i) {
            auto a = f.random(rng), b = f.random(rng);
            if (f.mul(a, b) != oracle_mul(n, f.reduction_tail(), a, b)) ++mul_fail;
        }
    }

    int toe_fail = 0;
    for (int i = 0; i < 1000; ++i) {
        std::size_t n_in = 1 + rng.below(2048);
        std::size_t n_fin = 1 + rng.below(n_in);
        BitBlock key = BitBlock::random(n_in, rng);
        BitBlock seed = BitBlock::random(n_in + n_fin - 1, rng);
        if (toeplitz_pa(key, seed, n_fin) != naive_toeplitz(key, seed, n_fin)) ++toe_fail;
    }

    int casc_fail = 0;
    long double total_disclosed = 0.0L, total_budget = 0.0L;
    for (int i = 0; i < 1000; ++i) {
        std::size_t n = 1024 + rng.below(3073);
        double e = 0.01 + rng.uniform() * 0.04;
        BitBlock key_a = BitBlock::random(n, rng);
        BitBlock key_b = key_a;
        for (std::size_t j = 0; j < n; ++j)
            if (rng.uniform() < e) key_b.flip(j);
        CascadeConfig cfg;
        cfg.shuffle_seed = rng.u64();
        auto out = run_reconcile(key_a, key_b, e, cfg);
        if (out.bob.key != key_a) ++casc_fail;
        total_disclosed += static_cast<long double>(out.bob.n_disclosed);
        total_budget += static_cast<long double>(n) * h2l(e);
    }
    long double f_agg = total_disclosed / total_budget;

    bool ok = mul_fail == 0 && toe_fail == 0 && casc_fail == 0 && f_agg <= 1.35L;
    std::ostringstream d;
    d << "gf_mul fails=" << mul_fail << "/5000, toeplitz fails=" << toe_fail
      << "/1000, cascade fails=" << casc_fail << "/1000, leakage f="
      << static_cast<double>(f_agg) << " (<= 1.35)";
    report(5, ok, d.str());
}

// synchronization recovery across large offsets and drift
void criterion6() {
    struct Case {
        double offset, drift, duration;
        std::uint64_t seed;
    };
    bool ok = true;
    std::ostringstream d;
    for (Case cse : {Case{4.7, 1e-5, 2.0, 61}, Case{-3.1, -4e-6, 5.0, 62}}) {
        SourceParams p;
        p.pair_rate = 5e6;
        p.eff_a = 0.08;
        p.eff_b = 0.02;
        p.v_hv = p.v_da = 0.97;
        p.dark_per_det_a = p.dark_per_det_b = 100;
        p.clock_offset = cse.offset;
        p.clock_drift = cse.drift;
        p.duration = cse.duration;
        p.seed = cse.seed;
        Session s = generate_session(p);
        double worst = 0;
        try {
            Ps coarse = coarse_offset(s.alice, s.bob, 5.0, 500000);
            OffsetModel m = fine_sync(s.alice, s.bob, coarse);
            if (m.blocks.size() < 3) ok = false;
            for (const auto& blk : m.blocks) {
                double err = std::abs(static_cast<double>(
                    m.delta_at(blk.t_center) - s.truth.true_delta_at_bob_time(blk.t_center)));
                worst = std::max(worst, err);
            }
            if (worst >= 500.0) ok = false;
        } catch (const std::exception& e) {
            ok = false;
            d << "[offset " << cse.offset << ": " << e.what() << "] ";
            continue;
        }
        d << "offset " << cse.offset << " s: worst block error " << worst << " ps; ";
    }

    // statistically independent records must be rejected
    SourceParams p;
    p.pair_rate = 5e6;
    p.eff_a = 0.08;
    p.eff_b = 0.02;
    p.duration = 1.0;
    p.seed = 63;
    Session s1 = generate_session(p);
    p.seed = 64;
    Session s2 = generate_session(p);
    bool rejected = false;
    try {
        coarse_offset(s1.alice, s2.bob, 1.0, 500000);
    } catch (const NoSyncError&) {
        rejected = true;
    }
    ok = ok && rejected;
    d << "uncorrelated rejected=" << rejected;
    report(6, ok, d.str());
}

// tamper detection band and no-key-on-abort
void criterion7() {
    // 10^4 randomized single-bit tampers of short transcripts at n = 32;
    // undetected fraction bounded by blocks/2^32 per trial
    Rng rng(701);
    GfField f(32);
    int undetected = 0;
    for (int trial = 0; trial < 10000; ++trial) {
        auto k = f.random(rng);
        std::vector<std::vector<std::uint8_t>> msgs;
        std::size_t total_bits = 0;
        auto n_msgs = 1 + rng.below(4);
        for (std::uint64_t i = 0; i < n_msgs; ++i) {
            std::vector<std::uint8_t> m(1 + rng.below(24));
            for (auto& byte : m) byte = static_cast<std::uint8_t>(rng.below(256));
            total_bits += m.size() * 8;
            msgs.push_back(std::move(m));
        }
        Transcript honest(32, k);
        for (const auto& m : msgs) honest.update(m);
        std::size_t flip = rng.below(total_bits);
        for (auto& m : msgs) {
            if (flip < m.size() * 8) {
                m[flip >> 3] ^= static_cast<std::uint8_t>(1u << (flip & 7));
                break;
            }
            flip -= m.size() * 8;
        }
        Transcript forged(32, k);
        for (const auto& m : msgs) forged.update(m);
        if (forged.state() == honest.state()) ++undetected;
    }

    // a live session with one flipped handshake bit must finish the pipeline,
    // fail authentication, and release nothing
    RunConfig cfg;
    apply_preset(cfg, "test-small");
    cfg.source.duration = 1.0;
    cfg.source.seed = 71;
    cfg.session_seed = 72;
    Session s = generate_session(cfg.source);

    KeyStore keys_a = fresh_psk(), keys_b = fresh_psk();
    KmsStore kms_a, kms_b;
    auto log = std::make_shared<std::vector<std::vector<std::uint8_t>>>();
    auto mtx = std::make_shared<std::mutex>();
    auto lp = make_loopback();
    auto tampered = std::make_shared<TamperChannel>(lp.a, FrameType::Hello, 10);
    auto sa = std::make_shared<SniffChannel>(tampered, log, mtx);
    auto sb = std::make_shared<SniffChannel>(lp.b, log, mtx);
    auto r = run_pair(s.alice, s.bob, cfg, cfg, keys_a, keys_b, sa, sb, &kms_a, &kms_b);
    bool abort_ok =
        r.alice.stage == Stage::Aborted && r.bob.stage == Stage::Aborted &&
        r.alice.abort_reason.find("authentication failed") != std::string::npos &&
        r.alice.final_key.empty() && r.bob.final_key.empty() &&
        kms_a.pushed_bits() == 0 && kms_b.pushed_bits() == 0 && r.alice.n_fin > 0;

    // control run without the tamper: the final key must never appear on the
    // classical channel
    KeyStore keys_a2 = fresh_psk(), keys_b2 = fresh_psk();
    auto log2 = std::make_shared<std::vector<std::vector<std::uint8_t>>>();
    auto lp2 = make_loopback();
    auto sa2 = std::make_shared<SniffChannel>(lp2.a, log2, mtx);
    auto sb2 = std::make_shared<SniffChannel>(lp2.b, log2, mtx);
    auto r2 = run_pair(s.alice, s.bob, cfg, cfg, keys_a2, keys_b2, sa2, sb2);
    bool sniff_ok = r2.alice.stage == Stage::Authenticated && r2.alice.final_key.size() >= 128;
    if (sniff_ok) {
        auto kb = r2.alice.final_key.to_bytes();
        std::vector<std::uint8_t> prefix(kb.begin(), kb.begin() + 16);
        for (const auto& payload : *log2)
            if (std::search(payload.begin(), payload.end(), prefix.begin(),
                            prefix.end()) != payload.end())
                sniff_ok = false;
    }

    bool ok = undetected <= 2 && abort_ok && sniff_ok;
    std::ostringstream d;
    d << "undetected tampers=" << undetected << "/10000, tampered session aborted="
      << abort_ok << ", key never on wire=" << sniff_ok;
    report(7, ok, d.str());
}

// key management accounting, single-session restriction, cross-endpoint ids
void criterion8() {
    Rng rng(801);
    bool conservation = true, no_replay = true;
    KmsStore store({1, 2, 3});
    std::set<std::vector<std::uint8_t>> seen_bytes;
    std::set<KeyId> seen_ids;
    std::optional<std::uint64_t> ksid;
    for (int op = 0; op < 500; ++op) {
        switch (rng.below(4)) {
            case 0: store.push(BitBlock::random(64 + rng.below(4096), rng)); break;
            case 1:
                if (!ksid) {
                    try {
                        ksid = store.open_connect("a", "b", {rng.below(512)});
                    } catch (const KeyStarvation&) {
                    }
                }
                break;
            case 2:
                if (ksid) {
                    try {
                        auto k = store.get_key(*ksid, 8 * (1 + rng.below(64)));
                        if (!seen_bytes.insert(k.bytes).second && k.bytes.size() > 4)
                            no_replay = false;
                        if (!seen_ids.insert(k.key_id).second) no_replay = false;
                    } catch (const KeyStarvation&) {
                    }
                }
                break;
            case 3:
                if (ksid) {
                    store.close(*ksid);
                    ksid.reset();
                }
                break;
        }
        if (store.available_bits() + store.reserved_bits() + store.consumed_bits() !=
            store.pushed_bits())
            conservation = false;
    }

    bool busy_ok = false;
    {
        KmsStore s2;
        s2.push(BitBlock::random(1024, rng));
        auto id = s2.open_connect("a", "b", {});
        try {
            s2.open_connect("a", "b", {});
        } catch (const std::runtime_error& e) {
            busy_ok = std::string(e.what()) == "busy";
        }
        s2.close(id);
    }

    bool cross_ok = true;
    {
        std::vector<std::uint8_t> nonce{7, 7};
        KmsStore ea(nonce), eb(nonce);
        for (int i = 0; i < 5; ++i) {
            BitBlock k = BitBlock::random(2048, rng);
            ea.push(k);
            eb.push(k);
        }
        auto ia = ea.open_connect("a", "b", {});
        auto ib = eb.open_connect("a", "b", {});
        for (int i = 0; i < 8; ++i) {
            auto ga = ea.get_key(ia, 256);
            auto gb = eb.get_key(ib, 256);
            if (ga.key_id != gb.key_id || ga.bytes != gb.bytes) cross_ok = false;
        }
    }

    bool ok = conservation && no_replay && busy_ok && cross_ok;
    std::ostringstream d;
    d << "conservation=" << conservation << ", no_replay=" << no_replay
      << ", single_session=" << busy_ok << ", cross_endpoint_identity=" << cross_ok;
    report(8, ok, d.str());
}

} // namespace

int main() {
    criterion1();
    criterion2();
    criterion3();
    criterion4();
    criterion5();
    criterion6();
    criterion7();
    criterion8();
    if (g_failed == 0) std::printf("all criteria passed\n");
    return g_failed;
}
