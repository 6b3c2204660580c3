#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "qkd/bitblock.hpp"
#include "qkd/gf2n.hpp"
#include "qkd/privacy.hpp"
#include "qkd/rng.hpp"

using namespace qkd;

namespace {

// independent high-precision binary entropy
long double h2(long double e) {
    if (e <= 0.0L || e >= 1.0L) return 0.0L;
    return -e * std::log2(e) - (1.0L - e) * std::log2(1.0L - e);
}

long double tau_oracle(long double e) {
    if (e == 0.0L) return 1.0L;
    if (e > 0.5L) return 0.0L;
    return 1.0L - h2(e);
}

// bit-by-bit Toeplitz matrix-vector product: out[j] = parity of
// sum_i T[j][i] * key[i] with T[j][i] = seed[n_fin - 1 - j + i]
BitBlock naive_toeplitz(const BitBlock& key, const BitBlock& seed, std::size_t n_fin) {
    BitBlock out(n_fin);
    for (std::size_t j = 0; j < n_fin; ++j) {
        bool acc = false;
        for (std::size_t i = 0; i < key.size(); ++i)
            acc ^= seed.get(n_fin - 1 - j + i) && key.get(i);
        out.set(j, acc);
    }
    return out;
}

} // namespace

TEST_CASE("tau anchors and branch structure") {
    CHECK(tau(0.0) == 1.0);
    CHECK(tau(0.6) == 0.0);
    CHECK(tau(0.51) == 0.0);
    CHECK(std::abs(tau(0.5)) < 1e-12);
    // the independent oracle gives 1 - h(0.02) = 0.85855945...; the commonly
    // quoted rounded value 0.858551 is only accurate to ~1e-5
    CHECK(std::abs(tau(0.02) - static_cast<double>(tau_oracle(0.02L))) < 1e-6);
    CHECK(std::abs(tau(0.02) - static_cast<double>(tau_oracle(0.02L))) < 1e-12);
    CHECK(std::abs(tau(0.02) - 0.858551) < 1e-5);

    // the e -> 0+ limit agrees with the e = 0 branch
    CHECK(tau(1e-12) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("tau matches the entropy oracle and is monotone on (0, 0.5]") {
    Rng rng(1);
    double prev_e = 0.0, prev_tau = 1.0;
    std::vector<double> grid;
    for (int i = 0; i < 500; ++i) grid.push_back(rng.uniform() * 0.5);
    std::sort(grid.begin(), grid.end());
    for (double e : grid) {
        double t = tau(e);
        CHECK(std::abs(t - static_cast<double>(tau_oracle(static_cast<long double>(e)))) < 1e-12);
        if (e > prev_e) CHECK(t <= prev_tau + 1e-12);
        prev_e = e;
        prev_tau = t;
    }
}

TEST_CASE("final_length fixed example and clamps") {
    CHECK(final_length({10000, 0.02, 1500, 500}) == 6585); // floor(8585.51) - 2000
    CHECK(final_length({10000, 0.6, 0, 0}) == 0);
    CHECK(final_length({1000, 0.02, 1000, 0}) == 0);
    CHECK(final_length({0, 0.0, 0, 0}) == 0);
    CHECK(final_length({1000, 0.0, 0, 0}) == 1000);
}

TEST_CASE("final_length reproduces the formula on a 1000-point grid") {
    Rng rng(2);
    for (int i = 0; i < 1000; ++i) {
        FinalKeyParams p;
        p.n_in = rng.below(1000000);
        p.e = rng.uniform(); // full [0,1] incl. the tau = 0 branch
        p.n_dis = rng.below(200000);
        p.n_mar = rng.below(2000);
        long double prod = static_cast<long double>(p.n_in) *
                           tau_oracle(static_cast<long double>(p.e));
        long long want = static_cast<long long>(std::floor(prod)) -
                         static_cast<long long>(p.n_dis) -
                         static_cast<long long>(p.n_mar);
        if (want < 0) want = 0;
        CHECK(final_length(p) == static_cast<std::size_t>(want));
    }
}

TEST_CASE("final_length is monotone in its penalty arguments") {
    Rng rng(3);
    for (int i = 0; i < 200; ++i) {
        FinalKeyParams p{10000 + rng.below(100000), rng.uniform() * 0.4,
                         rng.below(5000), rng.below(1000)};
        auto base = final_length(p);
        FinalKeyParams q = p;
        q.e = std::min(0.5, p.e + rng.uniform() * 0.1);
        CHECK(final_length(q) <= base);
        q = p;
        q.n_dis += 100;
        CHECK(final_length(q) <= base);
        q = p;
        q.n_mar += 100;
        CHECK(final_length(q) <= base);
    }
}

TEST_CASE("confirmation hash equality and sensitivity") {
    GfField f(96);
    Rng rng(4);
    BitBlock key = BitBlock::random(5000, rng);
    auto r = f.random(rng);
    CHECK(confirm_hash(key, r) == confirm_hash(key, r)); // deterministic

    // empty key is a defined degenerate case, equal on both sides
    CHECK(confirm_hash(BitBlock(), r) == confirm_hash(BitBlock(), r));

    // one flipped bit escapes detection for at most ~L/2^96 of the r values;
    // over 1000 random r a single collision would already be suspicious
    int collisions = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        auto rr = f.random(rng);
        BitBlock other = key;
        other.flip(rng.below(key.size()));
        if (confirm_hash(other, rr) == confirm_hash(key, rr)) ++collisions;
    }
    CHECK(collisions <= 1);
}

TEST_CASE("ntt convolution equals the naive integer convolution") {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<std::uint32_t> a(1 + rng.below(200)), b(1 + rng.below(200));
        for (auto& x : a) x = static_cast<std::uint32_t>(rng.below(2));
        for (auto& x : b) x = static_cast<std::uint32_t>(rng.below(2));
        std::vector<std::uint32_t> want(a.size() + b.size() - 1, 0);
        for (std::size_t i = 0; i < a.size(); ++i)
            for (std::size_t j = 0; j < b.size(); ++j) want[i + j] += a[i] * b[j];
        CHECK(ntt_convolve(a, b) == want);
    }
}

TEST_CASE("toeplitz_pa edge cases") {
    Rng rng(6);
    BitBlock key = BitBlock::random(64, rng);

    // all-zero seed -> all-zero output
    BitBlock zero_seed(64 + 16 - 1);
    BitBlock out = toeplitz_pa(key, zero_seed, 16);
    CHECK(out.size() == 16);
    CHECK(out.count_ones() == 0);

    // zero output length -> empty key
    CHECK(toeplitz_pa(key, BitBlock(), 0).empty());

    // malformed seed length
    CHECK_THROWS_AS(toeplitz_pa(key, BitBlock(10), 16), std::invalid_argument);
}

TEST_CASE("toeplitz_pa explicit small instance") {
    // n_in = 5, n_fin = 3, seed bits chosen by hand
    BitBlock key = BitBlock::from_bools({1, 0, 1, 1, 0});
    BitBlock seed = BitBlock::from_bools({1, 1, 0, 1, 0, 0, 1});
    BitBlock got = toeplitz_pa(key, seed, 3);
    BitBlock want = naive_toeplitz(key, seed, 3);
    REQUIRE(got.size() == 3);
    CHECK(got == want);
}

TEST_CASE("toeplitz_pa equals the naive product on 1000 random instances") {
    Rng rng(7);
    for (int trial = 0; trial < 1000; ++trial) {
        std::size_t n_in = 1 + rng.below(2048);
        std::size_t n_fin = 1 + rng.below(n_in);
        BitBlock key = BitBlock::random(n_in, rng);
        BitBlock seed = BitBlock::random(n_in + n_fin - 1, rng);
        CHECK(toeplitz_pa(key, seed, n_fin) == naive_toeplitz(key, seed, n_fin));
    }
}

TEST_CASE("toeplitz_pa is linear over GF(2)") {
    Rng rng(8);
    for (int trial = 0; trial < 50; ++trial) {
        std::size_t n_in = 64 + rng.below(1024);
        std::size_t n_fin = 1 + rng.below(n_in);
        BitBlock seed = BitBlock::random(n_in + n_fin - 1, rng);
        BitBlock x = BitBlock::random(n_in, rng);
        BitBlock y = BitBlock::random(n_in, rng);
        CHECK(toeplitz_pa(x ^ y, seed, n_fin) ==
              (toeplitz_pa(x, seed, n_fin) ^ toeplitz_pa(y, seed, n_fin)));
    }
}
