#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "qkd/rng.hpp"

namespace qkd {

// Packed bit sequence with explicit length. All cross-block operations are
// length-checked.
class BitBlock {
public:
    BitBlock() = default;
    explicit BitBlock(std::size_t len) : len_(len), words_(word_count(len), 0) {}

    static BitBlock random(std::size_t len, Rng& rng);
    static BitBlock from_bools(const std::vector<bool>& bits);

    std::size_t size() const { return len_; }
    bool empty() const { return len_ == 0; }

    bool get(std::size_t i) const {
        return (words_[i >> 6] >> (i & 63)) & 1u;
    }
    void set(std::size_t i, bool v) {
        std::uint64_t mask = std::uint64_t{1} << (i & 63);
        if (v)
            words_[i >> 6] |= mask;
        else
            words_[i >> 6] &= ~mask;
    }
    void flip(std::size_t i) { words_[i >> 6] ^= std::uint64_t{1} << (i & 63); }

    void push_back(bool v) {
        if ((len_ & 63) == 0) words_.push_back(0);
        if (v) words_.back() |= std::uint64_t{1} << (len_ & 63);
        ++len_;
    }

    BitBlock operator^(const BitBlock& other) const;
    bool operator==(const BitBlock& other) const;
    bool operator!=(const BitBlock& other) const { return !(*this == other); }

    // parity of bits [begin, end)
    bool range_parity(std::size_t begin, std::size_t end) const;
    bool parity() const { return range_parity(0, len_); }

    std::size_t count_ones() const;
    std::size_t hamming_distance(const BitBlock& other) const;

    // new block with the given positions kept / removed; `sorted_positions`
    // must be strictly increasing
    BitBlock subset(const std::vector<std::size_t>& sorted_positions) const;
    BitBlock without(const std::vector<std::size_t>& sorted_positions) const;

    // bits permuted so that result[i] = (*this)[perm[i]]
    BitBlock permuted(const std::vector<std::uint32_t>& perm) const;

    std::vector<std::uint8_t> to_bytes() const; // little-endian bit order
    static BitBlock from_bytes(const std::vector<std::uint8_t>& bytes, std::size_t len);

    const std::vector<std::uint64_t>& words() const { return words_; }

private:
    static std::size_t word_count(std::size_t len) { return (len + 63) / 64; }

    std::size_t len_ = 0;
    std::vector<std::uint64_t> words_;
};

} // namespace qkd
