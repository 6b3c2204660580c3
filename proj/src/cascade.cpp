#include "qkd/cascade.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>

namespace qkd {

namespace {

// Pass ids 0..passes-1 are the cascade passes; ids >= kProbeBase are
// verification probes, each with its own derived permutation.
constexpr std::uint64_t kProbeBase = 1u << 20;

std::vector<std::uint32_t> derive_perm(std::uint64_t seed, std::uint64_t pass_id,
                                       std::size_t n) {
    std::vector<std::uint32_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0u);
    if (pass_id == 0) return perm; // first pass runs on the raw key order
    Rng rng(seed ^ (0x9e3779b97f4a7c15ull * (pass_id + 1)));
    for (std::size_t i = n; i > 1; --i)
        std::swap(perm[i - 1], perm[rng.below(i)]);
    return perm;
}

bool perm_range_parity(const BitBlock& key, const std::vector<std::uint32_t>& perm,
                       std::size_t lo, std::size_t hi) {
    bool p = false;
    for (std::size_t j = lo; j < hi; ++j) p ^= key.get(perm[j]);
    return p;
}

struct ParityRequest {
    std::uint64_t pass_id;
    std::uint64_t lo;
    std::uint64_t hi;
};

// Every driver frame leads with the driver's key length so a length mismatch
// between the two parties aborts instead of corrupting the dialogue.
std::vector<std::uint8_t> encode_requests(const std::vector<ParityRequest>& reqs,
                                          std::size_t key_len) {
    std::vector<std::uint8_t> out;
    put_varint(out, key_len);
    put_varint(out, reqs.size());
    for (const auto& r : reqs) {
        put_varint(out, r.pass_id);
        put_varint(out, r.lo);
        put_varint(out, r.hi);
    }
    return out;
}

std::vector<ParityRequest> decode_requests(std::span<const std::uint8_t> in,
                                           std::size_t expected_len) {
    std::size_t pos = 0;
    if (get_varint(in, pos) != expected_len)
        throw std::runtime_error("cascade: key length mismatch");
    std::vector<ParityRequest> reqs(get_varint(in, pos));
    for (auto& r : reqs) {
        r.pass_id = get_varint(in, pos);
        r.lo = get_varint(in, pos);
        r.hi = get_varint(in, pos);
    }
    return reqs;
}

std::vector<std::uint8_t> pack_bits(const std::vector<bool>& bits) {
    std::vector<std::uint8_t> out((bits.size() + 7) / 8, 0);
    for (std::size_t i = 0; i < bits.size(); ++i)
        if (bits[i]) out[i >> 3] |= std::uint8_t(1u << (i & 7));
    return out;
}

std::vector<bool> unpack_bits(std::span<const std::uint8_t> bytes, std::size_t n) {
    if (bytes.size() < (n + 7) / 8) throw std::runtime_error("parity reply truncated");
    std::vector<bool> bits(n);
    for (std::size_t i = 0; i < n; ++i) bits[i] = (bytes[i >> 3] >> (i & 7)) & 1;
    return bits;
}

// Alice: answer parity queries against the fixed reference key until Bob
// acknowledges completion, then cross-check the disclosure count.
ReconcileOutcome run_responder(const BitBlock& key, const CascadeConfig& cfg,
                               Channel& channel) {
    ReconcileOutcome out;
    out.key = key;
    std::map<std::uint64_t, std::vector<std::uint32_t>> perms;
    while (true) {
        Frame f = channel.recv();
        ++out.transcript_msgs;
        if (f.type == FrameType::CascadeParity) {
            auto reqs = decode_requests(f.payload, key.size());
            std::vector<bool> bits;
            bits.reserve(reqs.size());
            for (const auto& r : reqs) {
                auto it = perms.find(r.pass_id);
                if (it == perms.end())
                    it = perms.emplace(r.pass_id,
                                       derive_perm(cfg.shuffle_seed, r.pass_id, key.size()))
                             .first;
                if (r.hi > key.size() || r.lo >= r.hi)
                    throw std::runtime_error("cascade: bad parity interval");
                bits.push_back(perm_range_parity(key, it->second, r.lo, r.hi));
            }
            out.n_disclosed += bits.size();
            channel.send({FrameType::CascadeParity, pack_bits(bits)});
            ++out.transcript_msgs;
        } else if (f.type == FrameType::CascadeAck) {
            std::size_t pos = 0;
            if (get_varint(f.payload, pos) != key.size())
                throw std::runtime_error("cascade: key length mismatch");
            std::uint64_t peer_disclosed = get_varint(f.payload, pos);
            std::uint64_t peer_corrected = get_varint(f.payload, pos);
            (void)peer_corrected;
            if (peer_disclosed != out.n_disclosed)
                throw std::runtime_error("cascade: disclosure count mismatch");
            std::vector<std::uint8_t> ack;
            put_varint(ack, out.n_disclosed);
            channel.send({FrameType::CascadeAck, ack});
            ++out.transcript_msgs;
            return out;
        } else {
            throw std::runtime_error("cascade: unexpected frame " +
                                     std::string(frame_type_name(f.type)));
        }
    }
}

struct SearchItem {
    std::uint64_t pass_id;
    std::size_t lo, hi;
};

class Driver {
public:
    Driver(BitBlock key, double e_est, const CascadeConfig& cfg, Channel& channel)
        : key_(std::move(key)), cfg_(cfg), channel_(channel),
          k1_(cascade_k1(e_est, key_.size())) {}

    ReconcileOutcome run() {
        const std::size_t n = key_.size();
        for (std::size_t p = 0; p < cfg_.passes && n > 0; ++p) {
            std::size_t k = std::min(n, k1_ << p);
            perms_[p] = derive_perm(cfg_.shuffle_seed, p, n);
            auto& inv = inv_perms_[p];
            inv.resize(n);
            for (std::size_t j = 0; j < n; ++j) inv[perms_[p][j]] = static_cast<std::uint32_t>(j);
            block_size_[p] = k;

            // one batched request for every block parity of this pass
            std::size_t n_blocks = (n + k - 1) / k;
            std::vector<ParityRequest> reqs;
            reqs.reserve(n_blocks);
            for (std::size_t b = 0; b < n_blocks; ++b)
                reqs.push_back({p, b * k, std::min((b + 1) * k, n)});
            auto ref = exchange(reqs);
            auto& mism = mismatch_[p];
            mism.assign(n_blocks, false);
            for (std::size_t b = 0; b < n_blocks; ++b) {
                bool own = perm_range_parity(key_, perms_[p], reqs[b].lo, reqs[b].hi);
                if (own != ref[b]) {
                    mism[b] = true;
                    odd_.insert({p, b});
                }
            }
            drain_odd_blocks();
        }
        verify_equal();

        std::vector<std::uint8_t> ack;
        put_varint(ack, key_.size());
        put_varint(ack, n_disclosed_);
        put_varint(ack, n_corrected_);
        channel_.send({FrameType::CascadeAck, ack});
        ++transcript_msgs_;
        Frame f = channel_.recv();
        ++transcript_msgs_;
        if (f.type != FrameType::CascadeAck)
            throw std::runtime_error("cascade: missing final acknowledgment");
        std::size_t pos = 0;
        if (get_varint(f.payload, pos) != n_disclosed_)
            throw std::runtime_error("cascade: disclosure count mismatch");
        return {std::move(key_), n_disclosed_, n_corrected_, transcript_msgs_};
    }

private:
    // Send one batch of interval queries; returns the reference parities.
    std::vector<bool> exchange(const std::vector<ParityRequest>& reqs) {
        channel_.send({FrameType::CascadeParity, encode_requests(reqs, key_.size())});
        ++transcript_msgs_;
        Frame f = channel_.recv();
        ++transcript_msgs_;
        if (f.type != FrameType::CascadeParity)
            throw std::runtime_error("cascade: unexpected frame " +
                                     std::string(frame_type_name(f.type)));
        n_disclosed_ += reqs.size();
        return unpack_bits(f.payload, reqs.size());
    }

    const std::vector<std::uint32_t>& perm_for(std::uint64_t pass_id) {
        auto it = perms_.find(pass_id);
        if (it == perms_.end())
            it = perms_.emplace(pass_id,
                                derive_perm(cfg_.shuffle_seed, pass_id, key_.size()))
                     .first;
        return it->second;
    }

    // Resolve every odd-parity block, batching one binary-search round across
    // all active blocks per exchange; corrections toggle the parity state of
    // the containing block in every other completed pass (the cascade step).
    void drain_odd_blocks() {
        while (!odd_.empty()) {
            // one pass at a time keeps concurrently searched intervals disjoint
            std::uint64_t p = odd_.begin()->first;
            std::vector<SearchItem> items;
            std::size_t k = block_size_[p];
            for (auto [q, b] : odd_) {
                if (q != p) break;
                items.push_back({p, b * k, std::min((b + 1) * k, key_.size())});
            }
            binary_search_batch(items);
        }
    }

    void binary_search_batch(std::vector<SearchItem> items) {
        while (!items.empty()) {
            std::vector<ParityRequest> reqs;
            std::vector<std::size_t> req_owner;
            for (std::size_t i = 0; i < items.size(); ++i) {
                auto& it = items[i];
                if (it.hi - it.lo == 1) {
                    apply_flip(it.pass_id, it.lo);
                } else {
                    std::size_t mid = it.lo + (it.hi - it.lo) / 2;
                    reqs.push_back({it.pass_id, it.lo, mid});
                    req_owner.push_back(i);
                }
            }
            if (reqs.empty()) return;
            auto ref = exchange(reqs);
            std::vector<SearchItem> narrowed;
            narrowed.reserve(reqs.size());
            for (std::size_t r = 0; r < reqs.size(); ++r) {
                SearchItem it = items[req_owner[r]];
                std::size_t mid = it.lo + (it.hi - it.lo) / 2;
                bool own = perm_range_parity(key_, perm_for(it.pass_id), it.lo, mid);
                if (own != ref[r]) it.hi = mid;
                else it.lo = mid;
                narrowed.push_back(it);
            }
            items = std::move(narrowed);
        }
    }

    void apply_flip(std::uint64_t pass_id, std::size_t perm_pos) {
        std::size_t idx = pass_id < kProbeBase ? perms_[pass_id][perm_pos]
                                               : perm_for(pass_id)[perm_pos];
        key_.flip(idx);
        ++n_corrected_;
        for (auto& [q, inv] : inv_perms_) {
            std::size_t b = inv[idx] / block_size_[q];
            mismatch_[q][b] = !mismatch_[q][b];
            if (mismatch_[q][b]) odd_.insert({q, b});
            else odd_.erase({q, b});
        }
    }

    // Residual-error check: random-subset parity probes (a random half of a
    // fresh shared permutation). A surviving difference trips each probe with
    // probability 1/2; `verify_probes` consecutive clean probes are required.
    // A tripped probe has odd error count on its domain, so the standard
    // search corrects one bit and the count restarts.
    void verify_equal() {
        const std::size_t n = key_.size();
        if (n < 2) return;
        std::size_t clean = 0;
        std::uint64_t probe = kProbeBase;
        while (clean < cfg_.verify_probes) {
            std::size_t half = n / 2;
            auto ref = exchange({{probe, 0, half}});
            bool own = perm_range_parity(key_, perm_for(probe), 0, half);
            if (own == ref[0]) {
                ++clean;
            } else {
                clean = 0;
                binary_search_batch({{probe, 0, half}});
                drain_odd_blocks();
            }
            perms_erase_probe(probe);
            ++probe;
        }
    }

    void perms_erase_probe(std::uint64_t probe) { perms_.erase(probe); }

    BitBlock key_;
    CascadeConfig cfg_;
    Channel& channel_;
    std::size_t k1_;
    std::map<std::uint64_t, std::vector<std::uint32_t>> perms_;
    std::map<std::uint64_t, std::vector<std::uint32_t>> inv_perms_;
    std::map<std::uint64_t, std::size_t> block_size_;
    std::map<std::uint64_t, std::vector<bool>> mismatch_;
    std::set<std::pair<std::uint64_t, std::size_t>> odd_;
    std::size_t n_disclosed_ = 0;
    std::size_t n_corrected_ = 0;
    std::size_t transcript_msgs_ = 0;
};

} // namespace

void CascadeConfig::validate() const {
    if (passes < 1 || passes > 32)
        throw std::invalid_argument("cascade passes must be in [1, 32]");
}

std::size_t cascade_k1(double e_est, std::size_t n) {
    if (e_est < 0 || e_est >= 0.5) throw std::invalid_argument("e_est out of [0, 0.5)");
    std::size_t cap = std::min<std::size_t>(n, 1u << 16);
    if (cap < 2) return std::max<std::size_t>(n, 1);
    std::size_t raw = e_est > 0
                          ? static_cast<std::size_t>(std::ceil(0.73 / e_est))
                          : cap;
    return std::clamp<std::size_t>(raw, std::min<std::size_t>(8, cap), cap);
}

ReconcileOutcome reconcile(Party role, const BitBlock& key, double e_est,
                           const CascadeConfig& cfg, Channel& channel) {
    cfg.validate();
    if (key.empty()) {
        // nothing to reconcile; still run the accounting handshake
        if (role == Party::Bob) {
            std::vector<std::uint8_t> ack;
            put_varint(ack, 0); // key length
            put_varint(ack, 0);
            put_varint(ack, 0);
            channel.send({FrameType::CascadeAck, ack});
            Frame f = channel.recv();
            if (f.type != FrameType::CascadeAck)
                throw std::runtime_error("cascade: missing final acknowledgment");
            return {key, 0, 0, 2};
        }
        return run_responder(key, cfg, channel);
    }
    if (role == Party::Alice) return run_responder(key, cfg, channel);
    return Driver(key, e_est, cfg, channel).run();
}

} // namespace qkd
