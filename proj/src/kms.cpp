#include "qkd/kms.hpp"

#include <cstring>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <json.hpp>

#include "qkd/sha256.hpp"

namespace qkd {

using nlohmann::json;

std::string key_id_hex(const KeyId& id) { return hex(std::span(id.data(), id.size())); }

KmsStore::KmsStore(std::vector<std::uint8_t> nonce) : nonce_(std::move(nonce)) {}

void KmsStore::push(const BitBlock& key) {
    std::lock_guard<std::mutex> lock(mtx_);
    for (std::size_t i = 0; i < key.size(); ++i) pool_.push_back(key.get(i));
    pushed_ += key.size();
}

std::uint64_t KmsStore::open_connect(const std::string& source,
                                     const std::string& destination, const KmsQos& qos) {
    std::lock_guard<std::mutex> lock(mtx_);
    if (open_ksid_) throw std::runtime_error("busy");
    std::uint64_t avail = pool_.size() - pool_head_ - reserved_;
    if (qos.reserve_bits > avail) throw KeyStarvation();
    reserved_ += qos.reserve_bits;
    open_ksid_ = next_ksid_++;
    source_ = source;
    destination_ = destination;
    return *open_ksid_;
}

IssuedKey KmsStore::slice_locked(std::size_t length_bits) {
    IssuedKey out;
    out.length_bits = length_bits;
    out.bytes.assign((length_bits + 7) / 8, 0);
    for (std::size_t i = 0; i < length_bits; ++i)
        if (pool_[pool_head_ + i]) out.bytes[i >> 3] |= std::uint8_t(1u << (i & 7));
    pool_head_ += length_bits;
    consumed_ += length_bits;

    std::vector<std::uint8_t> material(nonce_);
    for (int i = 0; i < 8; ++i)
        material.push_back(static_cast<std::uint8_t>(issue_index_ >> (8 * i)));
    auto digest = sha256(material);
    std::memcpy(out.key_id.data(), digest.data(), out.key_id.size());
    ++issue_index_;

    // drop fully consumed prefix occasionally to bound memory
    if (pool_head_ > 1u << 20) {
        pool_.erase(pool_.begin(), pool_.begin() + static_cast<std::ptrdiff_t>(pool_head_));
        pool_head_ = 0;
    }
    return out;
}

IssuedKey KmsStore::get_key(std::uint64_t ksid, std::size_t length_bits) {
    std::lock_guard<std::mutex> lock(mtx_);
    if (!open_ksid_ || *open_ksid_ != ksid) throw std::runtime_error("unknown ksid");
    std::uint64_t usable = pool_.size() - pool_head_; // reserved bits serve this session
    if (length_bits > usable) throw KeyStarvation();
    std::uint64_t from_reserved = std::min<std::uint64_t>(reserved_, length_bits);
    reserved_ -= from_reserved;
    return slice_locked(length_bits);
}

void KmsStore::close(std::uint64_t ksid) {
    std::lock_guard<std::mutex> lock(mtx_);
    if (!open_ksid_ || *open_ksid_ != ksid) throw std::runtime_error("unknown ksid");
    open_ksid_.reset();
    reserved_ = 0; // reserved-but-unfetched bits return to available
}

std::uint64_t KmsStore::available_bits() const {
    std::lock_guard<std::mutex> lock(mtx_);
    return pool_.size() - pool_head_ - reserved_;
}
std::uint64_t KmsStore::reserved_bits() const {
    std::lock_guard<std::mutex> lock(mtx_);
    return reserved_;
}
std::uint64_t KmsStore::consumed_bits() const {
    std::lock_guard<std::mutex> lock(mtx_);
    return consumed_;
}
std::uint64_t KmsStore::pushed_bits() const {
    std::lock_guard<std::mutex> lock(mtx_);
    return pushed_;
}

namespace {

const char* kB64 = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string b64_encode(std::span<const std::uint8_t> in) {
    std::string out;
    out.reserve((in.size() + 2) / 3 * 4);
    for (std::size_t i = 0; i < in.size(); i += 3) {
        std::uint32_t v = std::uint32_t{in[i]} << 16;
        if (i + 1 < in.size()) v |= std::uint32_t{in[i + 1]} << 8;
        if (i + 2 < in.size()) v |= in[i + 2];
        out.push_back(kB64[(v >> 18) & 63]);
        out.push_back(kB64[(v >> 12) & 63]);
        out.push_back(i + 1 < in.size() ? kB64[(v >> 6) & 63] : '=');
        out.push_back(i + 2 < in.size() ? kB64[v & 63] : '=');
    }
    return out;
}

bool read_exact(int fd, std::uint8_t* dst, std::size_t n) {
    std::size_t off = 0;
    while (off < n) {
        ssize_t r = ::recv(fd, dst + off, n - off, 0);
        if (r <= 0) return false;
        off += static_cast<std::size_t>(r);
    }
    return true;
}

bool write_all(int fd, const std::uint8_t* src, std::size_t n) {
    std::size_t off = 0;
    while (off < n) {
        ssize_t r = ::send(fd, src + off, n - off, MSG_NOSIGNAL);
        if (r <= 0) return false;
        off += static_cast<std::size_t>(r);
    }
    return true;
}

std::optional<std::string> read_msg(int fd) {
    std::uint8_t len4[4];
    if (!read_exact(fd, len4, 4)) return std::nullopt;
    std::uint32_t len = (std::uint32_t{len4[0]} << 24) | (std::uint32_t{len4[1]} << 16) |
                        (std::uint32_t{len4[2]} << 8) | len4[3];
    if (len > (1u << 20)) return std::nullopt;
    std::string body(len, '\0');
    if (!read_exact(fd, reinterpret_cast<std::uint8_t*>(body.data()), len)) return std::nullopt;
    return body;
}

bool write_msg(int fd, const std::string& body) {
    std::uint32_t len = static_cast<std::uint32_t>(body.size());
    std::uint8_t len4[4] = {static_cast<std::uint8_t>(len >> 24),
                            static_cast<std::uint8_t>(len >> 16),
                            static_cast<std::uint8_t>(len >> 8),
                            static_cast<std::uint8_t>(len)};
    return write_all(fd, len4, 4) &&
           write_all(fd, reinterpret_cast<const std::uint8_t*>(body.data()), body.size());
}

json handle_request(KmsStore& store, const json& req) {
    std::string op = req.value("op", "");
    try {
        if (op == "open_connect") {
            KmsQos qos{req.value("reserve_bits", std::uint64_t{0})};
            auto ksid = store.open_connect(req.value("source", ""),
                                           req.value("destination", ""), qos);
            return {{"status", "ok"}, {"ksid", ksid}};
        }
        if (op == "get_key") {
            auto key = store.get_key(req.at("ksid").get<std::uint64_t>(),
                                     req.at("length").get<std::size_t>());
            return {{"status", "ok"},
                    {"key_id", key_id_hex(key.key_id)},
                    {"key_b64", b64_encode(key.bytes)},
                    {"length", key.length_bits}};
        }
        if (op == "close") {
            store.close(req.at("ksid").get<std::uint64_t>());
            return {{"status", "ok"}};
        }
        if (op == "status") {
            return {{"status", "ok"},
                    {"available_bits", store.available_bits()},
                    {"reserved_bits", store.reserved_bits()},
                    {"consumed_bits", store.consumed_bits()},
                    {"pushed_bits", store.pushed_bits()}};
        }
        return {{"status", "error"}, {"message", "unknown op: " + op}};
    } catch (const KeyStarvation&) {
        return {{"status", "starvation"}};
    } catch (const std::exception& e) {
        return {{"status", "error"}, {"message", e.what()}};
    }
}

} // namespace

void run_kms_server(KmsStore& store, int port) {
    int srv = ::socket(AF_INET, SOCK_STREAM, 0);
    if (srv < 0) throw std::runtime_error("socket failed");
    int one = 1;
    setsockopt(srv, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = htons(static_cast<std::uint16_t>(port));
    if (::bind(srv, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0) {
        ::close(srv);
        throw std::runtime_error("bind failed on port " + std::to_string(port));
    }
    if (::listen(srv, 4) < 0) {
        ::close(srv);
        throw std::runtime_error("listen failed");
    }
    bool quit = false;
    while (!quit) {
        int fd = ::accept(srv, nullptr, nullptr);
        if (fd < 0) break;
        while (auto body = read_msg(fd)) {
            json req;
            json resp;
            try {
                req = json::parse(*body);
                if (req.value("op", "") == "quit") {
                    resp = {{"status", "ok"}};
                    quit = true;
                } else {
                    resp = handle_request(store, req);
                }
            } catch (const std::exception& e) {
                resp = {{"status", "error"}, {"message", e.what()}};
            }
            if (!write_msg(fd, resp.dump()) || quit) break;
        }
        ::close(fd);
    }
    ::close(srv);
}

std::string kms_request(const std::string& host, int port, const std::string& json_request) {
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw std::runtime_error("socket failed");
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<std::uint16_t>(port));
    if (inet_pton(AF_INET, host == "localhost" ? "127.0.0.1" : host.c_str(),
                  &addr.sin_addr) != 1) {
        ::close(fd);
        throw std::runtime_error("bad address: " + host);
    }
    if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0) {
        ::close(fd);
        throw std::runtime_error("connect failed: " + host + ":" + std::to_string(port));
    }
    std::optional<std::string> resp;
    if (write_msg(fd, json_request)) resp = read_msg(fd);
    ::close(fd);
    if (!resp) throw std::runtime_error("kms request failed");
    return *resp;
}

} // namespace qkd
