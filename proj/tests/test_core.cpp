#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "qkd/bitblock.hpp"
#include "qkd/rng.hpp"
#include "qkd/tags.hpp"
#include "qkd/ttag_io.hpp"

using namespace qkd;

namespace {

TagStream random_stream(Party p, std::size_t n, Rng& rng, Ps span = 1'000'000'000) {
    TagStream s;
    s.party = p;
    s.tags.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        s.tags.push_back({static_cast<Ps>(rng.below(static_cast<std::uint64_t>(span))),
                          static_cast<DetectorChannel>(rng.below(4))});
    std::sort(s.tags.begin(), s.tags.end(), tag_less);
    return s;
}

std::string tmp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

} // namespace

TEST_CASE("channel_map fixed convention") {
    CHECK(channel_map(DetectorChannel::H) == std::pair{Basis::HV, 0});
    CHECK(channel_map(DetectorChannel::V) == std::pair{Basis::HV, 1});
    CHECK(channel_map(DetectorChannel::D) == std::pair{Basis::DA, 0});
    CHECK(channel_map(DetectorChannel::A) == std::pair{Basis::DA, 1});
}

TEST_CASE("channel_map is a bijection onto {HV,DA} x {0,1}") {
    std::set<std::pair<Basis, int>> images;
    for (int c = 0; c < 4; ++c)
        images.insert(channel_map(static_cast<DetectorChannel>(c)));
    CHECK(images.size() == 4);
}

TEST_CASE("merge_sorted trivial cases") {
    TagStream empty_a;
    CHECK(merge_sorted({empty_a, empty_a}).size() == 0);

    Rng rng(7);
    TagStream one = random_stream(Party::Alice, 100, rng);
    TagStream merged = merge_sorted({one});
    CHECK(merged.tags == one.tags);
}

TEST_CASE("merge_sorted vs concat+sort oracle") {
    Rng rng(42);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<TagStream> streams;
        std::vector<TimeTag> all;
        auto n_streams = 1 + rng.below(4);
        for (std::uint64_t i = 0; i < n_streams; ++i) {
            streams.push_back(random_stream(Party::Alice, rng.below(200), rng));
            all.insert(all.end(), streams.back().tags.begin(), streams.back().tags.end());
        }
        std::sort(all.begin(), all.end(), tag_less);
        TagStream merged = merge_sorted(streams);
        REQUIRE(merged.size() == all.size());
        CHECK(merged.tags == all);
        CHECK(merged.sorted());
    }
}

TEST_CASE("merge_sorted rejects mixed party labels") {
    Rng rng(3);
    TagStream a = random_stream(Party::Alice, 10, rng);
    TagStream b = random_stream(Party::Bob, 10, rng);
    CHECK_THROWS_AS(merge_sorted({a, b}), std::invalid_argument);
}

TEST_CASE("BitBlock xor involution and length checking") {
    Rng rng(11);
    for (int trial = 0; trial < 30; ++trial) {
        std::size_t n = rng.below(300);
        BitBlock x = BitBlock::random(n, rng);
        BitBlock y = BitBlock::random(n, rng);
        CHECK(((x ^ y) ^ y) == x);
        CHECK((x ^ x).count_ones() == 0);
    }
    BitBlock a(10), b(11);
    CHECK_THROWS_AS(a ^ b, std::invalid_argument);
}

TEST_CASE("BitBlock get/set/flip/push_back") {
    BitBlock b;
    for (int i = 0; i < 200; ++i) b.push_back(i % 3 == 0);
    REQUIRE(b.size() == 200);
    for (int i = 0; i < 200; ++i) CHECK(b.get(static_cast<std::size_t>(i)) == (i % 3 == 0));
    b.flip(5);
    CHECK(b.get(5));
    b.set(5, false);
    CHECK(!b.get(5));
}

TEST_CASE("BitBlock range_parity vs naive") {
    Rng rng(19);
    BitBlock b = BitBlock::random(500, rng);
    for (int trial = 0; trial < 200; ++trial) {
        std::size_t lo = rng.below(501);
        std::size_t hi = lo + rng.below(501 - lo);
        bool naive = false;
        for (std::size_t i = lo; i < hi; ++i) naive ^= b.get(i);
        CHECK(b.range_parity(lo, hi) == naive);
    }
    CHECK_THROWS_AS(b.range_parity(3, 501), std::out_of_range);
}

TEST_CASE("BitBlock subset/without partition the block") {
    Rng rng(23);
    for (int trial = 0; trial < 20; ++trial) {
        std::size_t n = 50 + rng.below(400);
        BitBlock b = BitBlock::random(n, rng);
        std::vector<std::size_t> pos;
        for (std::size_t i = 0; i < n; ++i)
            if (rng.coin()) pos.push_back(i);
        BitBlock in = b.subset(pos);
        BitBlock out = b.without(pos);
        REQUIRE(in.size() + out.size() == n);
        std::size_t pi = 0, oi = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (pi < pos.size() && pos[pi] == i)
                CHECK(in.get(pi++) == b.get(i));
            else
                CHECK(out.get(oi++) == b.get(i));
        }
    }
}

TEST_CASE("BitBlock permuted and byte round-trip") {
    Rng rng(29);
    std::size_t n = 321;
    BitBlock b = BitBlock::random(n, rng);

    std::vector<std::uint32_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = static_cast<std::uint32_t>(i);
    std::shuffle(perm.begin(), perm.end(), rng.engine());
    BitBlock p = b.permuted(perm);
    for (std::size_t i = 0; i < n; ++i) CHECK(p.get(i) == b.get(perm[i]));

    auto bytes = b.to_bytes();
    CHECK(bytes.size() == (n + 7) / 8);
    CHECK(BitBlock::from_bytes(bytes, n) == b);
}

TEST_CASE("BitBlock hamming distance") {
    Rng rng(31);
    BitBlock a = BitBlock::random(700, rng);
    BitBlock b = a;
    std::set<std::size_t> flips;
    while (flips.size() < 37) flips.insert(rng.below(700));
    for (auto i : flips) b.flip(i);
    CHECK(a.hamming_distance(b) == 37);
    CHECK(a.hamming_distance(a) == 0);
}

TEST_CASE("TTAG1 binary round-trip") {
    auto path = tmp_path("qkd_test_core.ttag");
    Rng rng(5);

    SUBCASE("empty stream writes a 16-byte file") {
        TagStream s;
        s.party = Party::Bob;
        write_stream(s, path);
        CHECK(std::filesystem::file_size(path) == 16);
        CHECK(read_stream(path, Party::Bob).size() == 0);
    }

    SUBCASE("random 10^4-tag stream round-trips bit-exactly") {
        TagStream s = random_stream(Party::Alice, 10000, rng);
        write_stream(s, path);
        TagStream back = read_stream(path, Party::Alice);
        CHECK(back.tags == s.tags);
        CHECK(back.party == Party::Alice);
    }

    SUBCASE("corrupted magic is rejected") {
        TagStream s = random_stream(Party::Alice, 10, rng);
        write_stream(s, path);
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(0);
        f.put('X');
        f.close();
        CHECK_THROWS_AS(read_stream(path), std::runtime_error);
    }
    std::filesystem::remove(path);
}

TEST_CASE("text tag format round-trip") {
    auto path = tmp_path("qkd_test_core.txt");
    Rng rng(6);
    TagStream s = random_stream(Party::Bob, 500, rng);
    write_stream_text(s, path);
    TagStream back = read_stream_text(path, Party::Bob);
    CHECK(back.tags == s.tags);
    std::filesystem::remove(path);
}

TEST_CASE("seeded rng is deterministic") {
    Rng a(123), b(123), c(124);
    bool all_equal = true, any_diff = false;
    for (int i = 0; i < 64; ++i) {
        auto va = a.u64();
        all_equal &= (va == b.u64());
        any_diff |= (va != c.u64());
    }
    CHECK(all_equal);
    CHECK(any_diff);
}
