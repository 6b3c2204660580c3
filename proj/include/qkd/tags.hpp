#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace qkd {

// picoseconds on a local clock, relative to the stream epoch
using Ps = std::int64_t;

enum class DetectorChannel : std::uint8_t { H = 0, V = 1, D = 2, A = 3 };

enum class Basis : std::uint8_t { HV = 0, DA = 1 };

enum class Party : std::uint8_t { Alice = 0, Bob = 1 };

// Fixed channel -> (basis, key bit) convention:
//   H -> (HV, 0), V -> (HV, 1), D -> (DA, 0), A -> (DA, 1)
inline std::pair<Basis, int> channel_map(DetectorChannel ch) {
    auto c = static_cast<std::uint8_t>(ch);
    return {static_cast<Basis>(c >> 1), c & 1};
}

inline Basis channel_basis(DetectorChannel ch) {
    return static_cast<Basis>(static_cast<std::uint8_t>(ch) >> 1);
}
inline int channel_bit(DetectorChannel ch) {
    return static_cast<std::uint8_t>(ch) & 1;
}

struct TimeTag {
    Ps t;
    DetectorChannel ch;

    friend bool operator==(const TimeTag&, const TimeTag&) = default;
};

// ordered by time, ties by channel index
inline bool tag_less(const TimeTag& a, const TimeTag& b) {
    if (a.t != b.t) return a.t < b.t;
    return static_cast<std::uint8_t>(a.ch) < static_cast<std::uint8_t>(b.ch);
}

struct TagStream {
    std::string epoch;      // wall-clock label, informational
    Party party = Party::Alice;
    std::vector<TimeTag> tags;

    std::size_t size() const { return tags.size(); }
    bool sorted() const;
};

// Merge already-sorted streams of the same party. Throws on mixed labels.
TagStream merge_sorted(const std::vector<TagStream>& streams);

const char* party_name(Party p);

} // namespace qkd
