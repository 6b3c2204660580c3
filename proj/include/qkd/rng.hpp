#pragma once

#include <cstdint>
#include <random>

namespace qkd {

// All stochastic code takes one of these explicitly; there is no ambient
// randomness anywhere in the library.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t u64() { return gen_(); }

    // uniform in [0, n)
    std::uint64_t below(std::uint64_t n) {
        return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(gen_);
    }

    bool coin() { return (gen_() >> 63) != 0; }

    double uniform() {
        return std::uniform_real_distribution<double>(0.0, 1.0)(gen_);
    }

    double exponential(double rate) {
        return std::exponential_distribution<double>(rate)(gen_);
    }

    double gaussian(double sigma) {
        return std::normal_distribution<double>(0.0, sigma)(gen_);
    }

    std::uint64_t poisson(double mean) {
        return std::poisson_distribution<std::uint64_t>(mean)(gen_);
    }

    std::mt19937_64& engine() { return gen_; }

private:
    std::mt19937_64 gen_;
};

} // namespace qkd
