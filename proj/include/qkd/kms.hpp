#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "qkd/bitblock.hpp"

namespace qkd {

// get_key on an underfilled buffer: the buffer is left unchanged and the
// caller may retry after more key has been produced.
class KeyStarvation : public std::runtime_error {
public:
    KeyStarvation() : std::runtime_error("key starvation") {}
};

using KeyId = std::array<std::uint8_t, 16>;
std::string key_id_hex(const KeyId& id);

struct IssuedKey {
    KeyId key_id;
    std::vector<std::uint8_t> bytes; // final partial byte zero-padded high
    std::size_t length_bits;
};

struct KmsQos {
    std::uint64_t reserve_bits = 0;
};

// Synchronized key buffer with a key delivery interface adapted to the
// one-session / one-client / one-link use case. Bits enter in production
// order; key ids are derived from (store nonce, issue index), so two
// endpoints that push equal key material under the same nonce and serve the
// same request sequence issue byte-identical keys under identical ids.
class KmsStore {
public:
    explicit KmsStore(std::vector<std::uint8_t> nonce = {});

    // producer side: append a session's final key bits
    void push(const BitBlock& key);

    // --- delivery interface ---
    std::uint64_t open_connect(const std::string& source, const std::string& destination,
                               const KmsQos& qos); // throws "busy" while a session is open
    IssuedKey get_key(std::uint64_t ksid, std::size_t length_bits);
    void close(std::uint64_t ksid);

    // accounting (bits); conservation: available + reserved + consumed = pushed
    std::uint64_t available_bits() const;
    std::uint64_t reserved_bits() const;
    std::uint64_t consumed_bits() const;
    std::uint64_t pushed_bits() const;

private:
    IssuedKey slice_locked(std::size_t length_bits);

    mutable std::mutex mtx_;
    std::vector<std::uint8_t> nonce_;
    std::vector<bool> pool_; // FIFO of produced, not yet consumed bits
    std::uint64_t pool_head_ = 0;
    std::uint64_t pushed_ = 0;
    std::uint64_t consumed_ = 0;
    std::uint64_t reserved_ = 0;
    std::uint64_t issue_index_ = 0;
    std::optional<std::uint64_t> open_ksid_;
    std::uint64_t next_ksid_ = 1;
    std::string source_, destination_;
};

// Local socket API: 4-byte big-endian length prefix + JSON object per message.
// Requests: {"op":"open_connect","source":..,"destination":..,"reserve_bits":..}
//           {"op":"get_key","ksid":..,"length":..}
//           {"op":"close","ksid":..}
//           {"op":"status"} and {"op":"quit"} (server control)
// Responses: {"status":"ok"|"starvation"|"error", ...}.
// Serves sequential connections until a quit request; returns then.
void run_kms_server(KmsStore& store, int port);

// One-shot client helpers used by the scripting CLI.
std::string kms_request(const std::string& host, int port, const std::string& json_request);

} // namespace qkd
