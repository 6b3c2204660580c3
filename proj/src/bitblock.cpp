#include "qkd/bitblock.hpp"

#include <bit>
#include <stdexcept>

namespace qkd {

BitBlock BitBlock::random(std::size_t len, Rng& rng) {
    BitBlock b(len);
    for (auto& w : b.words_) w = rng.u64();
    if (len & 63) b.words_.back() &= (std::uint64_t{1} << (len & 63)) - 1;
    return b;
}

BitBlock BitBlock::from_bools(const std::vector<bool>& bits) {
    BitBlock b(bits.size());
    for (std::size_t i = 0; i < bits.size(); ++i)
        if (bits[i]) b.set(i, true);
    return b;
}

BitBlock BitBlock::operator^(const BitBlock& other) const {
    if (len_ != other.len_) throw std::invalid_argument("BitBlock xor: length mismatch");
    BitBlock r(len_);
    for (std::size_t i = 0; i < words_.size(); ++i)
        r.words_[i] = words_[i] ^ other.words_[i];
    return r;
}

bool BitBlock::operator==(const BitBlock& other) const {
    return len_ == other.len_ && words_ == other.words_;
}

bool BitBlock::range_parity(std::size_t begin, std::size_t end) const {
    if (begin > end || end > len_) throw std::out_of_range("BitBlock::range_parity");
    if (begin == end) return false;
    std::size_t wb = begin >> 6, we = (end - 1) >> 6;
    std::uint64_t acc = 0;
    if (wb == we) {
        std::uint64_t w = words_[wb];
        w >>= (begin & 63);
        std::size_t n = end - begin;
        if (n < 64) w &= (std::uint64_t{1} << n) - 1;
        acc = w;
    } else {
        acc = words_[wb] >> (begin & 63);
        for (std::size_t i = wb + 1; i < we; ++i) acc ^= words_[i];
        std::uint64_t last = words_[we];
        std::size_t tail = ((end - 1) & 63) + 1;
        if (tail < 64) last &= (std::uint64_t{1} << tail) - 1;
        acc ^= last;
    }
    return std::popcount(acc) & 1;
}

std::size_t BitBlock::count_ones() const {
    std::size_t c = 0;
    for (auto w : words_) c += std::popcount(w);
    return c;
}

std::size_t BitBlock::hamming_distance(const BitBlock& other) const {
    if (len_ != other.len_) throw std::invalid_argument("BitBlock hamming: length mismatch");
    std::size_t c = 0;
    for (std::size_t i = 0; i < words_.size(); ++i)
        c += std::popcount(words_[i] ^ other.words_[i]);
    return c;
}

BitBlock BitBlock::subset(const std::vector<std::size_t>& sorted_positions) const {
    BitBlock r;
    for (auto p : sorted_positions) r.push_back(get(p));
    return r;
}

BitBlock BitBlock::without(const std::vector<std::size_t>& sorted_positions) const {
    BitBlock r;
    std::size_t j = 0;
    for (std::size_t i = 0; i < len_; ++i) {
        if (j < sorted_positions.size() && sorted_positions[j] == i) {
            ++j;
            continue;
        }
        r.push_back(get(i));
    }
    return r;
}

BitBlock BitBlock::permuted(const std::vector<std::uint32_t>& perm) const {
    if (perm.size() != len_) throw std::invalid_argument("BitBlock permuted: length mismatch");
    BitBlock r(len_);
    for (std::size_t i = 0; i < len_; ++i)
        if (get(perm[i])) r.set(i, true);
    return r;
}

std::vector<std::uint8_t> BitBlock::to_bytes() const {
    std::vector<std::uint8_t> out((len_ + 7) / 8, 0);
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::size_t w = i >> 3, sh = (i & 7) * 8;
        if (w < words_.size()) out[i] = static_cast<std::uint8_t>(words_[w] >> sh);
    }
    return out;
}

BitBlock BitBlock::from_bytes(const std::vector<std::uint8_t>& bytes, std::size_t len) {
    if (bytes.size() < (len + 7) / 8) throw std::invalid_argument("BitBlock::from_bytes: short buffer");
    BitBlock b(len);
    for (std::size_t i = 0; i < (len + 7) / 8; ++i)
        b.words_[i >> 3] |= std::uint64_t{bytes[i]} << ((i & 7) * 8);
    if (len & 63) b.words_.back() &= (std::uint64_t{1} << (len & 63)) - 1;
    return b;
}

} // namespace qkd
