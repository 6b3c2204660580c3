#include "qkd/frame.hpp"

#include <cerrno>
#include <chrono>
#include <cstring>
#include <stdexcept>

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

namespace qkd {

const char* frame_type_name(FrameType t) {
    switch (t) {
        case FrameType::Hello: return "HELLO";
        case FrameType::SyncData: return "SYNC_DATA";
        case FrameType::SiftBases: return "SIFT_BASES";
        case FrameType::ErrSample: return "ERR_SAMPLE";
        case FrameType::CascadeParity: return "CASCADE_PARITY";
        case FrameType::CascadeAck: return "CASCADE_ACK";
        case FrameType::ConfirmHash: return "CONFIRM_HASH";
        case FrameType::PaSeed: return "PA_SEED";
        case FrameType::DiscloseCount: return "DISCLOSE_COUNT";
        case FrameType::AuthTag: return "AUTH_TAG";
        case FrameType::Abort: return "ABORT";
    }
    return "UNKNOWN";
}

bool frame_type_known(std::uint8_t code) {
    return code >= static_cast<std::uint8_t>(FrameType::Hello) &&
           code <= static_cast<std::uint8_t>(FrameType::Abort);
}

std::vector<std::uint8_t> encode_frame(const Frame& f) {
    if (f.payload.size() > kMaxPayload)
        throw std::runtime_error("frame payload exceeds 64 MiB");
    std::vector<std::uint8_t> out;
    out.reserve(5 + f.payload.size());
    std::uint32_t len = static_cast<std::uint32_t>(f.payload.size());
    out.push_back(static_cast<std::uint8_t>(len >> 24));
    out.push_back(static_cast<std::uint8_t>(len >> 16));
    out.push_back(static_cast<std::uint8_t>(len >> 8));
    out.push_back(static_cast<std::uint8_t>(len));
    out.push_back(static_cast<std::uint8_t>(f.type));
    out.insert(out.end(), f.payload.begin(), f.payload.end());
    return out;
}

Frame decode_frame(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 5) throw std::runtime_error("frame truncated: short header");
    std::uint32_t len = (std::uint32_t{bytes[0]} << 24) | (std::uint32_t{bytes[1]} << 16) |
                        (std::uint32_t{bytes[2]} << 8) | bytes[3];
    if (len > kMaxPayload) throw std::runtime_error("frame payload exceeds 64 MiB");
    if (!frame_type_known(bytes[4])) throw std::runtime_error("unknown frame type");
    if (bytes.size() != std::size_t{5} + len)
        throw std::runtime_error("frame length mismatch");
    Frame f;
    f.type = static_cast<FrameType>(bytes[4]);
    f.payload.assign(bytes.begin() + 5, bytes.end());
    return f;
}

void put_varint(std::vector<std::uint8_t>& out, std::uint64_t v) {
    while (v >= 0x80) {
        out.push_back(static_cast<std::uint8_t>(v) | 0x80);
        v >>= 7;
    }
    out.push_back(static_cast<std::uint8_t>(v));
}

std::uint64_t get_varint(std::span<const std::uint8_t> in, std::size_t& pos) {
    std::uint64_t v = 0;
    int shift = 0;
    while (true) {
        if (pos >= in.size()) throw std::runtime_error("varint truncated");
        std::uint8_t b = in[pos++];
        if (shift >= 63 && b > 1) throw std::runtime_error("varint overflow");
        v |= (std::uint64_t{b} & 0x7f) << shift;
        if (!(b & 0x80)) return v;
        shift += 7;
    }
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64(std::span<const std::uint8_t> in, std::size_t& pos) {
    if (pos + 8 > in.size()) throw std::runtime_error("u64 truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{in[pos + static_cast<std::size_t>(i)]} << (8 * i);
    pos += 8;
    return v;
}

namespace {

struct FrameQueue {
    std::mutex mtx;
    std::condition_variable cv;
    std::deque<Frame> q;
    bool closed = false;
};

class LoopbackChannel final : public Channel {
public:
    LoopbackChannel(std::shared_ptr<FrameQueue> tx, std::shared_ptr<FrameQueue> rx,
                    std::size_t timeout_ms)
        : tx_(std::move(tx)), rx_(std::move(rx)), timeout_ms_(timeout_ms) {}

    void send(const Frame& f) override {
        // exercise the codec on every hop so both bindings share one wire format
        auto bytes = encode_frame(f);
        Frame copy = decode_frame(bytes);
        std::lock_guard<std::mutex> lock(tx_->mtx);
        if (tx_->closed) throw std::runtime_error("channel closed");
        tx_->q.push_back(std::move(copy));
        tx_->cv.notify_one();
    }

    Frame recv() override {
        std::unique_lock<std::mutex> lock(rx_->mtx);
        if (!rx_->cv.wait_for(lock, std::chrono::milliseconds(timeout_ms_),
                              [&] { return !rx_->q.empty() || rx_->closed; }))
            throw std::runtime_error("channel timeout");
        if (rx_->q.empty()) throw std::runtime_error("channel closed");
        Frame f = std::move(rx_->q.front());
        rx_->q.pop_front();
        return f;
    }

    void close() override {
        for (auto& side : {tx_, rx_}) {
            std::lock_guard<std::mutex> lock(side->mtx);
            side->closed = true;
            side->cv.notify_all();
        }
    }

private:
    std::shared_ptr<FrameQueue> tx_, rx_;
    std::size_t timeout_ms_;
};

class SocketChannel final : public Channel {
public:
    SocketChannel(int fd, int timeout_ms) : fd_(fd) {
        timeval tv{timeout_ms / 1000, (timeout_ms % 1000) * 1000};
        setsockopt(fd_, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
        setsockopt(fd_, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof(tv));
        int one = 1;
        setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    }
    ~SocketChannel() override { close(); }

    void send(const Frame& f) override {
        auto bytes = encode_frame(f);
        std::size_t off = 0;
        while (off < bytes.size()) {
            ssize_t n = ::send(fd_, bytes.data() + off, bytes.size() - off, MSG_NOSIGNAL);
            if (n <= 0) throw std::runtime_error("channel send failed: " +
                                                 std::string(std::strerror(errno)));
            off += static_cast<std::size_t>(n);
        }
    }

    Frame recv() override {
        std::uint8_t hdr[5];
        read_all(hdr, 5);
        std::uint32_t len = (std::uint32_t{hdr[0]} << 24) | (std::uint32_t{hdr[1]} << 16) |
                            (std::uint32_t{hdr[2]} << 8) | hdr[3];
        if (len > kMaxPayload) throw std::runtime_error("frame payload exceeds 64 MiB");
        std::vector<std::uint8_t> bytes(std::size_t{5} + len);
        std::memcpy(bytes.data(), hdr, 5);
        read_all(bytes.data() + 5, len);
        return decode_frame(bytes);
    }

    void close() override {
        if (fd_ >= 0) {
            ::shutdown(fd_, SHUT_RDWR);
            ::close(fd_);
            fd_ = -1;
        }
    }

private:
    void read_all(std::uint8_t* dst, std::size_t n) {
        std::size_t off = 0;
        while (off < n) {
            ssize_t r = ::recv(fd_, dst + off, n - off, 0);
            if (r == 0) throw std::runtime_error("channel closed by peer");
            if (r < 0) throw std::runtime_error("channel recv failed: " +
                                                std::string(std::strerror(errno)));
            off += static_cast<std::size_t>(r);
        }
    }

    int fd_;
};

} // namespace

LoopbackPair make_loopback(std::size_t timeout_ms) {
    auto q_ab = std::make_shared<FrameQueue>();
    auto q_ba = std::make_shared<FrameQueue>();
    return {std::make_shared<LoopbackChannel>(q_ab, q_ba, timeout_ms),
            std::make_shared<LoopbackChannel>(q_ba, q_ab, timeout_ms)};
}

std::shared_ptr<Channel> connect_channel(const std::string& host, int port, int timeout_ms) {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    std::string service = std::to_string(port);
    if (getaddrinfo(host.c_str(), service.c_str(), &hints, &res) != 0 || !res)
        throw std::runtime_error("cannot resolve host: " + host);
    int fd = -1;
    for (addrinfo* p = res; p; p = p->ai_next) {
        fd = ::socket(p->ai_family, p->ai_socktype, p->ai_protocol);
        if (fd < 0) continue;
        if (::connect(fd, p->ai_addr, p->ai_addrlen) == 0) break;
        ::close(fd);
        fd = -1;
    }
    freeaddrinfo(res);
    if (fd < 0) throw std::runtime_error("connect failed: " + host + ":" + service);
    return std::make_shared<SocketChannel>(fd, timeout_ms);
}

std::shared_ptr<Channel> listen_channel(int port, int timeout_ms) {
    int srv = ::socket(AF_INET, SOCK_STREAM, 0);
    if (srv < 0) throw std::runtime_error("socket failed");
    int one = 1;
    setsockopt(srv, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_ANY);
    addr.sin_port = htons(static_cast<std::uint16_t>(port));
    if (::bind(srv, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0) {
        ::close(srv);
        throw std::runtime_error("bind failed on port " + std::to_string(port));
    }
    if (::listen(srv, 1) < 0) {
        ::close(srv);
        throw std::runtime_error("listen failed");
    }
    timeval tv{timeout_ms / 1000, (timeout_ms % 1000) * 1000};
    setsockopt(srv, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
    int fd = ::accept(srv, nullptr, nullptr);
    ::close(srv);
    if (fd < 0) throw std::runtime_error("accept timed out");
    return std::make_shared<SocketChannel>(fd, timeout_ms);
}

} // namespace qkd
