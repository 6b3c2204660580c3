#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "qkd/gf2n.hpp"

namespace qkd {

// Pre-shared secret key material with an append-only consumption ledger.
// One-time-pad segments are never handed out twice.
class KeyStore {
public:
    struct LedgerEntry {
        std::size_t offset_bytes;
        std::size_t len_bytes;
        std::string purpose;
    };

    KeyStore() = default;
    explicit KeyStore(std::vector<std::uint8_t> material) : material_(std::move(material)) {}

    static KeyStore from_file(const std::string& path);
    static KeyStore random(std::size_t bytes, Rng& rng);
    void save(const std::string& path) const;

    // Throws std::runtime_error("insufficient pre-shared key") when exhausted.
    std::vector<std::uint8_t> take(std::size_t nbytes, const std::string& purpose);

    std::size_t remaining() const { return material_.size() - cursor_; }
    const std::vector<LedgerEntry>& ledger() const { return ledger_; }

    // Replenishment from produced secret key (metered like any other entry).
    void deposit(std::span<const std::uint8_t> bytes);

private:
    std::vector<std::uint8_t> material_;
    std::size_t cursor_ = 0;
    std::vector<LedgerEntry> ledger_;
};

// Progressive polynomial hash over all classical messages in one direction:
// per n-bit block m of each message, t <- (t + m) * k in GF(2^n).
class Transcript {
public:
    Transcript(int nbits, const GfField::Elem& key);

    // Message is split into n-bit little-endian blocks, the final block
    // zero-padded, then one extra block carrying the message byte length.
    void update(std::span<const std::uint8_t> msg);

    const GfField::Elem& state() const { return t_; }
    const GfField& field() const { return field_; }
    std::uint64_t n_blocks() const { return n_blocks_; }

    // tag = t XOR otp; the pad is drawn fresh from the store
    GfField::Elem finalize_mac(KeyStore& keys, const std::string& purpose) const;

private:
    GfField field_;
    GfMulTable mul_k_;
    GfField::Elem t_{};
    std::uint64_t n_blocks_ = 0;
};

} // namespace qkd
