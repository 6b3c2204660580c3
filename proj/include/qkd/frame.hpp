#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

namespace qkd {

enum class FrameType : std::uint8_t {
    Hello = 0x01,
    SyncData = 0x02,
    SiftBases = 0x03,
    ErrSample = 0x04,
    CascadeParity = 0x05,
    CascadeAck = 0x06,
    ConfirmHash = 0x07,
    PaSeed = 0x08,
    DiscloseCount = 0x09,
    AuthTag = 0x0a,
    Abort = 0x0b,
};

const char* frame_type_name(FrameType t);
bool frame_type_known(std::uint8_t code);

constexpr std::size_t kMaxPayload = 64u << 20; // 64 MiB

struct Frame {
    FrameType type;
    std::vector<std::uint8_t> payload;

    bool operator==(const Frame&) const = default;
};

// wire format: 4-byte big-endian payload length, 1-byte type, payload
std::vector<std::uint8_t> encode_frame(const Frame& f);
// Throws std::runtime_error on unknown type, oversize length, or truncation.
Frame decode_frame(std::span<const std::uint8_t> bytes);

// --- little serialization helpers (LEB128 varints + fixed-width LE ints) ---

void put_varint(std::vector<std::uint8_t>& out, std::uint64_t v);
std::uint64_t get_varint(std::span<const std::uint8_t> in, std::size_t& pos);

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v);
std::uint64_t get_u64(std::span<const std::uint8_t> in, std::size_t& pos);

// --- reliable ordered duplex channel abstraction ---

class Channel {
public:
    virtual ~Channel() = default;
    virtual void send(const Frame& f) = 0;
    virtual Frame recv() = 0; // blocks; throws std::runtime_error on close/timeout
    virtual void close() = 0;
};

// In-memory pair of endpoints backed by two frame queues.
struct LoopbackPair {
    std::shared_ptr<Channel> a;
    std::shared_ptr<Channel> b;
};
LoopbackPair make_loopback(std::size_t timeout_ms = 60000);

// Stream-socket transport. listen_channel blocks for one peer.
std::shared_ptr<Channel> connect_channel(const std::string& host, int port,
                                         int timeout_ms = 30000);
std::shared_ptr<Channel> listen_channel(int port, int timeout_ms = 30000);

} // namespace qkd
