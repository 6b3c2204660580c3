#include "qkd/auth.hpp"

#include <fstream>
#include <stdexcept>

namespace qkd {

KeyStore KeyStore::from_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open key file: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                    std::istreambuf_iterator<char>());
    return KeyStore(std::move(bytes));
}

KeyStore KeyStore::random(std::size_t bytes, Rng& rng) {
    std::vector<std::uint8_t> m(bytes);
    for (auto& b : m) b = static_cast<std::uint8_t>(rng.u64());
    return KeyStore(std::move(m));
}

void KeyStore::save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f.write(reinterpret_cast<const char*>(material_.data()),
            static_cast<std::streamsize>(material_.size()));
}

std::vector<std::uint8_t> KeyStore::take(std::size_t nbytes, const std::string& purpose) {
    if (cursor_ + nbytes > material_.size())
        throw std::runtime_error("insufficient pre-shared key");
    std::vector<std::uint8_t> out(material_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                                  material_.begin() + static_cast<std::ptrdiff_t>(cursor_ + nbytes));
    ledger_.push_back({cursor_, nbytes, purpose});
    cursor_ += nbytes;
    return out;
}

void KeyStore::deposit(std::span<const std::uint8_t> bytes) {
    ledger_.push_back({material_.size(), bytes.size(), "deposit"});
    material_.insert(material_.end(), bytes.begin(), bytes.end());
}

Transcript::Transcript(int nbits, const GfField::Elem& key)
    : field_(nbits), mul_k_(field_, key) {}

void Transcript::update(std::span<const std::uint8_t> msg) {
    const std::size_t block_bytes = static_cast<std::size_t>(field_.bits()) / 8;
    std::array<std::uint8_t, 32> buf{};
    std::size_t off = 0;
    auto absorb = [&](std::span<const std::uint8_t> block) {
        GfField::Elem m{};
        for (std::size_t i = 0; i < block.size(); ++i)
            m[i >> 3] |= std::uint64_t{block[i]} << ((i & 7) * 8);
        t_ = mul_k_.mul(GfField::add(t_, m));
        ++n_blocks_;
    };
    while (off + block_bytes <= msg.size()) {
        absorb(msg.subspan(off, block_bytes));
        off += block_bytes;
    }
    if (off < msg.size()) {
        buf.fill(0);
        std::size_t tail = msg.size() - off;
        for (std::size_t i = 0; i < tail; ++i) buf[i] = msg[off + i];
        absorb(std::span<const std::uint8_t>(buf.data(), block_bytes));
    }
    // length block closes the message
    buf.fill(0);
    std::uint64_t len = msg.size();
    for (int i = 0; i < 8; ++i) buf[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(len >> (8 * i));
    absorb(std::span<const std::uint8_t>(buf.data(), block_bytes));
}

GfField::Elem Transcript::finalize_mac(KeyStore& keys, const std::string& purpose) const {
    auto pad = keys.take(static_cast<std::size_t>(field_.bits()) / 8, purpose);
    return GfField::add(t_, field_.from_bytes(pad));
}

} // namespace qkd
