#include "qkd/session.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "qkd/cascade.hpp"
#include "qkd/privacy.hpp"
#include "qkd/sifting.hpp"
#include "qkd/sync.hpp"

namespace qkd {

namespace {

constexpr std::uint8_t kProtocolVersion = 1;

// seed-mixing constants for the jointly derived randomness
constexpr std::uint64_t kMixSample = 0xa5a5f00ddeadbea7ull;
constexpr std::uint64_t kMixShuffle = 0x5ca1ab1e0ddba11ull;
constexpr std::uint64_t kMixConfirm = 0xc0ffee5417e1ull;
constexpr std::uint64_t kMixPaSeed = 0x70457eed5eed5eedull;
constexpr std::uint64_t kMixSalt = 0x5a17ba5e0f00ull;

struct AbortReceived : std::runtime_error {
    explicit AbortReceived(const std::string& why)
        : std::runtime_error("peer aborted: " + why) {}
};

// Channel decorator feeding every classical message into the per-direction
// transcripts. Tag exchange and aborts are excluded: the MAC cannot cover its
// own frame, and an abort ends the transcripts' lives anyway.
class AuthChannel {
public:
    AuthChannel(Channel& inner, Transcript& outgoing, Transcript& incoming)
        : inner_(inner), out_(outgoing), in_(incoming) {}

    void send(const Frame& f) {
        if (f.type != FrameType::AuthTag && f.type != FrameType::Abort)
            out_.update(encode_frame(f));
        inner_.send(f);
    }

    Frame recv() {
        Frame f = inner_.recv();
        if (f.type == FrameType::Abort)
            throw AbortReceived(std::string(f.payload.begin(), f.payload.end()));
        if (f.type != FrameType::AuthTag) in_.update(encode_frame(f));
        return f;
    }

    Frame expect(FrameType t) {
        Frame f = recv();
        if (f.type != t)
            throw std::runtime_error(std::string("expected ") + frame_type_name(t) +
                                     ", got " + frame_type_name(f.type));
        return f;
    }

private:
    Channel& inner_;
    Transcript& out_;
    Transcript& in_;
};

// cascade's reconcile takes a plain Channel; bridge through the transcripts
class CascadeChannel final : public Channel {
public:
    explicit CascadeChannel(AuthChannel& ac) : ac_(ac) {}
    void send(const Frame& f) override { ac_.send(f); }
    Frame recv() override { return ac_.recv(); }
    void close() override {}

private:
    AuthChannel& ac_;
};

std::vector<std::uint8_t> pack_bitblock(const BitBlock& b) {
    std::vector<std::uint8_t> out;
    put_varint(out, b.size());
    auto bytes = b.to_bytes();
    out.insert(out.end(), bytes.begin(), bytes.end());
    return out;
}

BitBlock unpack_bitblock(std::span<const std::uint8_t> in, std::size_t& pos) {
    std::size_t n = get_varint(in, pos);
    std::size_t nbytes = (n + 7) / 8;
    if (pos + nbytes > in.size()) throw std::runtime_error("bit block truncated");
    std::vector<std::uint8_t> bytes(in.begin() + static_cast<std::ptrdiff_t>(pos),
                                    in.begin() + static_cast<std::ptrdiff_t>(pos + nbytes));
    pos += nbytes;
    return BitBlock::from_bytes(bytes, n);
}

struct Pipeline {
    Party role;
    const TagStream& tags;
    const RunConfig& cfg;
    AuthChannel& ch;
    KeyStore& keys;
    SessionResult& res;

    GfField field{96};

    void advance(Stage s) { res.stage = s; }

    void test_hook(const std::string& point) {
        if (cfg.abort_after == point)
            throw std::runtime_error("aborted by test hook after " + point);
    }

    void hello() {
        Rng salt_rng(cfg.session_seed ^ kMixSalt ^ static_cast<std::uint64_t>(role));
        std::vector<std::uint8_t> p;
        p.push_back(kProtocolVersion);
        p.push_back(static_cast<std::uint8_t>(role));
        put_u64(p, cfg.session_seed);
        put_u64(p, salt_rng.u64());
        ch.send({FrameType::Hello, p});
        Frame f = ch.expect(FrameType::Hello);
        if (f.payload.size() < 18) throw std::runtime_error("malformed hello");
        if (f.payload[0] != kProtocolVersion)
            throw std::runtime_error("protocol version mismatch");
        if (f.payload[1] == static_cast<std::uint8_t>(role))
            throw std::runtime_error("both endpoints claim the same role");
        std::size_t pos = 2;
        if (get_u64(f.payload, pos) != cfg.session_seed)
            throw std::runtime_error("session seed mismatch");
    }

    // Bob -> Alice: detection times, delta-compressed. Returns the peer
    // stream on Alice's side (times only, channels unset).
    TagStream exchange_sync_data() {
        if (role == Party::Bob) {
            std::vector<std::uint8_t> p;
            put_varint(p, tags.size());
            Ps prev = 0;
            for (const auto& tag : tags.tags) {
                put_varint(p, static_cast<std::uint64_t>(tag.t - prev));
                prev = tag.t;
            }
            ch.send({FrameType::SyncData, p});
            return {};
        }
        Frame f = ch.expect(FrameType::SyncData);
        std::size_t pos = 0;
        std::size_t n = get_varint(f.payload, pos);
        TagStream b;
        b.party = Party::Bob;
        b.tags.reserve(n);
        Ps t = 0;
        for (std::size_t i = 0; i < n; ++i) {
            t += static_cast<Ps>(get_varint(f.payload, pos));
            b.tags.push_back({t, DetectorChannel::H});
        }
        return b;
    }

    // Alice: synchronize, match, and send (pair index, basis) lists;
    // Bob: answer with the keep mask. Both return their sifted key.
    BitBlock sift_exchange(const TagStream& bob_times) {
        std::vector<std::uint32_t> kept_idx_local; // Alice: idx_a; Bob: idx_b
        std::vector<Ps> kept_times_bob;
        if (role == Party::Alice) {
            Ps coarse = coarse_offset(tags, bob_times, cfg.sync.search_range_s,
                                      cfg.sync.coarse_bin, cfg.sync);
            OffsetModel model =
                fine_sync(tags, bob_times, coarse, cfg.sync.min_block, cfg.sync);
            CoincidenceSet c = match_coincidences(tags, bob_times, model, cfg.window);
            advance(Stage::Synced);
            res.n_coinc = c.size();

            std::vector<std::uint8_t> p;
            put_varint(p, c.size());
            std::uint32_t prev = 0;
            for (const auto& pr : c.pairs) { // sorted by idx_b
                put_varint(p, pr.idx_b - prev);
                prev = pr.idx_b;
            }
            std::vector<bool> bases(c.size());
            for (std::size_t i = 0; i < c.size(); ++i)
                bases[i] = channel_basis(tags.tags[c.pairs[i].idx_a].ch) == Basis::DA;
            for (std::size_t i = 0; i < c.size(); ++i) {
                if ((i & 7) == 0) p.push_back(0);
                if (bases[i]) p.back() |= std::uint8_t(1u << (i & 7));
            }
            put_varint(p, tags.size()); // singles count for the peer's stats
            ch.send({FrameType::SiftBases, p});

            Frame f = ch.expect(FrameType::SiftBases);
            std::size_t pos = 0;
            std::size_t n_keep = get_varint(f.payload, pos);
            BitBlock key;
            for (std::size_t i = 0; i < c.size(); ++i) {
                bool keep = (f.payload[pos + (i >> 3)] >> (i & 7)) & 1;
                if (!keep) continue;
                auto idx_a = c.pairs[i].idx_a;
                key.push_back(sifted_bit(Party::Alice, tags.tags[idx_a].ch));
                kept_idx_local.push_back(idx_a);
                kept_times_bob.push_back(bob_times.tags[c.pairs[i].idx_b].t);
            }
            if (key.size() != n_keep) throw std::runtime_error("keep mask mismatch");
            res.singles_peer = bob_times.size();
            finish_sift(key.size(), kept_times_bob);
            return key;
        }

        // Bob
        Frame f = ch.expect(FrameType::SiftBases);
        advance(Stage::Synced);
        std::size_t pos = 0;
        std::size_t n_pairs = get_varint(f.payload, pos);
        res.n_coinc = n_pairs;
        std::vector<std::uint32_t> idx_b(n_pairs);
        std::uint32_t prev = 0;
        for (std::size_t i = 0; i < n_pairs; ++i) {
            prev += static_cast<std::uint32_t>(get_varint(f.payload, pos));
            idx_b[i] = prev;
            if (prev >= tags.size()) throw std::runtime_error("pair index out of range");
        }
        std::size_t bases_pos = pos;
        pos += (n_pairs + 7) / 8;
        res.singles_peer = get_varint(f.payload, pos);

        BitBlock key;
        std::vector<std::uint8_t> mask((n_pairs + 7) / 8, 0);
        std::size_t n_keep = 0;
        for (std::size_t i = 0; i < n_pairs; ++i) {
            bool alice_da = (f.payload[bases_pos + (i >> 3)] >> (i & 7)) & 1;
            Basis mine = channel_basis(tags.tags[idx_b[i]].ch);
            if ((mine == Basis::DA) != alice_da) continue;
            mask[i >> 3] |= std::uint8_t(1u << (i & 7));
            key.push_back(sifted_bit(Party::Bob, tags.tags[idx_b[i]].ch));
            kept_times_bob.push_back(tags.tags[idx_b[i]].t);
            ++n_keep;
        }
        std::vector<std::uint8_t> reply;
        put_varint(reply, n_keep);
        reply.insert(reply.end(), mask.begin(), mask.end());
        ch.send({FrameType::SiftBases, reply});
        finish_sift(key.size(), kept_times_bob);
        return key;
    }

    void finish_sift(std::size_t n_sifted, const std::vector<Ps>& kept_times_bob) {
        advance(Stage::Sifted);
        res.n_sifted = n_sifted;
        res.coinc_times_s.reserve(kept_times_bob.size());
        for (Ps t : kept_times_bob) res.coinc_times_s.push_back(static_cast<double>(t) * 1e-12);
    }

    // error estimation on a jointly sampled subset; sampled bits are removed
    double estimate(BitBlock& key) {
        Rng rng(cfg.session_seed ^ kMixSample);
        auto positions = sample_positions(key.size(), cfg.sample_fraction, rng);
        std::size_t n_err = 0;
        if (role == Party::Alice) {
            BitBlock sample = key.subset(positions);
            ch.send({FrameType::ErrSample, pack_bitblock(sample)});
            Frame f = ch.expect(FrameType::ErrSample);
            std::size_t pos = 0;
            n_err = get_varint(f.payload, pos);
            if (get_varint(f.payload, pos) != positions.size())
                throw std::runtime_error("estimation sample size mismatch");
        } else {
            Frame f = ch.expect(FrameType::ErrSample);
            std::size_t pos = 0;
            BitBlock alice_sample = unpack_bitblock(f.payload, pos);
            if (alice_sample.size() != positions.size())
                throw std::runtime_error("estimation sample size mismatch");
            BitBlock mine = key.subset(positions);
            n_err = mine.hamming_distance(alice_sample);
            std::vector<std::uint8_t> reply;
            put_varint(reply, n_err);
            put_varint(reply, positions.size());
            ch.send({FrameType::ErrSample, reply});
        }
        key = key.without(positions);
        double e = positions.empty() ? 0.0
                                     : static_cast<double>(n_err) /
                                           static_cast<double>(positions.size());
        advance(Stage::Estimated);
        res.qber = e;
        res.n_in = key.size();
        if (e >= 0.5) throw std::runtime_error("error rate too high");
        return e;
    }

    void confirm(const BitBlock& key) {
        GfField::Elem r;
        GfField::Elem hash_peer;
        if (role == Party::Alice) {
            Rng rng(cfg.session_seed ^ kMixConfirm);
            r = field.random(rng);
            auto mine = confirm_hash(key, r);
            auto p = field.to_bytes(r);
            auto h = field.to_bytes(mine);
            p.insert(p.end(), h.begin(), h.end());
            ch.send({FrameType::ConfirmHash, p});
            Frame f = ch.expect(FrameType::ConfirmHash);
            hash_peer = field.from_bytes(f.payload);
            if (hash_peer != mine) throw std::runtime_error("confirmation failed");
        } else {
            Frame f = ch.expect(FrameType::ConfirmHash);
            if (f.payload.size() < 24) throw std::runtime_error("malformed confirmation");
            r = field.from_bytes(f.payload);
            hash_peer = field.from_bytes(
                std::span(f.payload).subspan(12));
            auto mine = confirm_hash(key, r);
            ch.send({FrameType::ConfirmHash, field.to_bytes(mine)});
            if (hash_peer != mine) throw std::runtime_error("confirmation failed");
        }
        res.n_dis += 96; // the exchanged hash discloses key information
        advance(Stage::Confirmed);
    }

    void cross_check_disclosures() {
        std::vector<std::uint8_t> p;
        put_varint(p, res.n_dis);
        if (role == Party::Alice) {
            ch.send({FrameType::DiscloseCount, p});
            Frame f = ch.expect(FrameType::DiscloseCount);
            std::size_t pos = 0;
            if (get_varint(f.payload, pos) != res.n_dis)
                throw std::runtime_error("disclosure count mismatch");
        } else {
            Frame f = ch.expect(FrameType::DiscloseCount);
            std::size_t pos = 0;
            if (get_varint(f.payload, pos) != res.n_dis)
                throw std::runtime_error("disclosure count mismatch");
            ch.send({FrameType::DiscloseCount, p});
        }
    }

    BitBlock amplify(const BitBlock& key, double e) {
        FinalKeyParams fp{key.size(), e, res.n_dis, cfg.n_mar};
        std::size_t n_fin = final_length(fp);
        BitBlock seed;
        if (role == Party::Alice) {
            if (n_fin > 0) {
                Rng rng(cfg.session_seed ^ kMixPaSeed);
                seed = BitBlock::random(key.size() + n_fin - 1, rng);
            }
            std::vector<std::uint8_t> p;
            put_varint(p, n_fin);
            auto sb = pack_bitblock(seed);
            p.insert(p.end(), sb.begin(), sb.end());
            ch.send({FrameType::PaSeed, p});
        } else {
            Frame f = ch.expect(FrameType::PaSeed);
            std::size_t pos = 0;
            std::size_t peer_fin = get_varint(f.payload, pos);
            if (peer_fin != n_fin)
                throw std::runtime_error("final length mismatch");
            seed = unpack_bitblock(f.payload, pos);
            if (n_fin > 0 && seed.size() != key.size() + n_fin - 1)
                throw std::runtime_error("bad amplification seed length");
        }
        res.n_fin = n_fin;
        BitBlock fin = n_fin > 0 ? toeplitz_pa(key, seed, n_fin) : BitBlock();
        advance(Stage::Amplified);
        return fin;
    }
};

std::vector<std::uint8_t> elem_bytes(const GfField& f, const GfField::Elem& e) {
    return f.to_bytes(e);
}

} // namespace

const char* stage_name(Stage s) {
    switch (s) {
        case Stage::Init: return "Init";
        case Stage::Synced: return "Synced";
        case Stage::Sifted: return "Sifted";
        case Stage::Estimated: return "Estimated";
        case Stage::Reconciled: return "Reconciled";
        case Stage::Confirmed: return "Confirmed";
        case Stage::Amplified: return "Amplified";
        case Stage::Authenticated: return "Authenticated";
        case Stage::Aborted: return "Aborted";
    }
    return "Unknown";
}

SessionResult run_session(Party role, const TagStream& tags, const RunConfig& cfg,
                          Channel& channel, KeyStore& keys, KmsStore* kms) {
    SessionResult res;
    res.singles_local = tags.size();
    if (!tags.tags.empty())
        res.duration_s = static_cast<double>(tags.tags.back().t) * 1e-12;

    GfField field(cfg.auth_bits);
    const std::size_t tag_bytes = static_cast<std::size_t>(cfg.auth_bits) / 8;

    try {
        if (!tags.sorted()) throw std::runtime_error("input tags not time-ordered");

        // delayed authentication initialization: one hash key, two transcripts
        auto k_hash = field.from_bytes(keys.take(tag_bytes, "transcript-key"));
        Transcript t_ab(cfg.auth_bits, k_hash); // Alice -> Bob direction
        Transcript t_ba(cfg.auth_bits, k_hash);
        Transcript& t_out = role == Party::Alice ? t_ab : t_ba;
        Transcript& t_in = role == Party::Alice ? t_ba : t_ab;
        AuthChannel ach(channel, t_out, t_in);

        Pipeline pl{role, tags, cfg, ach, keys, res};
        pl.hello();

        TagStream bob_times = pl.exchange_sync_data();
        BitBlock key = pl.sift_exchange(bob_times);
        pl.test_hook("sift");
        { // release the bulky received stream before reconciliation
            TagStream empty;
            std::swap(bob_times, empty);
        }

        double e = pl.estimate(key);
        pl.test_hook("estimate");

        CascadeConfig ccfg = cfg.cascade;
        ccfg.shuffle_seed = cfg.session_seed ^ kMixShuffle;
        CascadeChannel cch(ach);
        ReconcileOutcome rec = reconcile(role, key, e, ccfg, cch);
        key = std::move(rec.key);
        res.n_dis += rec.n_disclosed;
        res.n_corrected = rec.n_corrected;
        res.stage = Stage::Reconciled;
        pl.test_hook("reconcile");

        pl.confirm(key);
        pl.test_hook("confirm");
        pl.cross_check_disclosures();
        BitBlock fin = pl.amplify(key, e);
        pl.test_hook("amplify");

        // MAC finalization; the one-time pads leave the store in a fixed
        // order on both sides so each direction's tags are comparable
        auto pad_ab = field.from_bytes(keys.take(tag_bytes, "mac-pad-ab"));
        auto pad_ba = field.from_bytes(keys.take(tag_bytes, "mac-pad-ba"));
        auto tag_ab = GfField::add(t_ab.state(), pad_ab);
        auto tag_ba = GfField::add(t_ba.state(), pad_ba);

        std::vector<std::uint8_t> p = elem_bytes(field, role == Party::Alice ? tag_ab : tag_ba);
        auto counterpart = elem_bytes(field, role == Party::Alice ? tag_ba : tag_ab);
        p.insert(p.end(), counterpart.begin(), counterpart.end());
        Frame f;
        if (role == Party::Alice) {
            ach.send({FrameType::AuthTag, p});
            f = ach.expect(FrameType::AuthTag);
        } else {
            f = ach.expect(FrameType::AuthTag);
            ach.send({FrameType::AuthTag, p});
        }

        if (f.payload.size() != 2 * tag_bytes)
            throw std::runtime_error("malformed authentication tag");
        auto peer_own = field.from_bytes(f.payload);
        auto peer_counterpart =
            field.from_bytes(std::span(f.payload).subspan(tag_bytes));
        auto my_for_peer_dir = role == Party::Alice ? tag_ba : tag_ab;
        auto my_own_dir = role == Party::Alice ? tag_ab : tag_ba;
        if (peer_own != my_for_peer_dir || peer_counterpart != my_own_dir)
            throw std::runtime_error("authentication failed");

        res.final_key = std::move(fin);
        res.stage = Stage::Authenticated;
        if (kms) kms->push(res.final_key);
        return res;
    } catch (const AbortReceived& e) {
        res.stage = Stage::Aborted;
        res.abort_reason = e.what();
        res.final_key = BitBlock();
        return res;
    } catch (const std::exception& e) {
        res.stage = Stage::Aborted;
        res.abort_reason = e.what();
        res.final_key = BitBlock();
        try {
            std::string why = e.what();
            channel.send({FrameType::Abort,
                          std::vector<std::uint8_t>(why.begin(), why.end())});
        } catch (...) {
        }
        return res;
    }
}

std::vector<StatsBin> stats_report(const SessionResult& r, Party role, double bin_s) {
    if (bin_s <= 0) throw std::invalid_argument("stats bin must be positive");
    double span = r.duration_s;
    if (!r.coinc_times_s.empty())
        span = std::max(span, r.coinc_times_s.back());
    std::size_t n_bins = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil(span / bin_s - 1e-12)));
    std::vector<std::size_t> coinc(n_bins, 0);
    for (double t : r.coinc_times_s) {
        auto b = static_cast<std::size_t>(t / bin_s);
        if (b >= n_bins) b = n_bins - 1;
        ++coinc[b];
    }
    std::size_t total_coinc = r.coinc_times_s.size();

    double singles_a_total = role == Party::Alice
                                 ? static_cast<double>(r.singles_local)
                                 : static_cast<double>(r.singles_peer);
    double singles_b_total = role == Party::Bob ? static_cast<double>(r.singles_local)
                                                : static_cast<double>(r.singles_peer);

    std::vector<StatsBin> bins(n_bins);
    for (std::size_t b = 0; b < n_bins; ++b) {
        double lo = static_cast<double>(b) * bin_s;
        double hi = std::min(span, lo + bin_s);
        double width = std::max(hi - lo, 1e-12);
        double frac = span > 0 ? width / span : 1.0;
        double key_share = total_coinc > 0 ? static_cast<double>(coinc[b]) /
                                                 static_cast<double>(total_coinc)
                                           : 0.0;
        bins[b] = {lo,
                   static_cast<double>(r.n_fin) * key_share / width,
                   r.qber,
                   singles_a_total * frac,
                   singles_b_total * frac,
                   static_cast<double>(coinc[b])};
    }
    return bins;
}

std::string stats_csv(const std::vector<StatsBin>& bins) {
    std::ostringstream out;
    out << "bin_start_s,skr_bps,qber,singles_a,singles_b,coinc\n";
    for (const auto& b : bins)
        out << b.bin_start_s << ',' << b.skr_bps << ',' << b.qber << ',' << b.singles_a
            << ',' << b.singles_b << ',' << b.coinc << '\n';
    return out.str();
}

std::string stats_json(const std::vector<StatsBin>& bins) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& b : bins)
        arr.push_back({{"bin_start_s", b.bin_start_s},
                       {"skr_bps", b.skr_bps},
                       {"qber", b.qber},
                       {"singles_a", b.singles_a},
                       {"singles_b", b.singles_b},
                       {"coinc", b.coinc}});
    return nlohmann::json{{"schema_version", 1}, {"bins", arr}}.dump(2);
}

} // namespace qkd
