#include "qkd/privacy.hpp"

#include <cmath>
#include <stdexcept>

namespace qkd {

namespace {

constexpr std::uint32_t kMod = 998244353;  // 119 * 2^23 + 1
constexpr std::uint32_t kRoot = 3;

std::uint32_t pow_mod(std::uint32_t base, std::uint64_t exp) {
    std::uint64_t b = base % kMod, r = 1;
    while (exp) {
        if (exp & 1) r = r * b % kMod;
        b = b * b % kMod;
        exp >>= 1;
    }
    return static_cast<std::uint32_t>(r);
}

// iterative radix-2 Cooley-Tukey; n must be a power of two <= 2^23
void ntt(std::vector<std::uint32_t>& a, bool invert) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        std::uint32_t wl = pow_mod(kRoot, (kMod - 1) / len);
        if (invert) wl = pow_mod(wl, kMod - 2);
        for (std::size_t i = 0; i < n; i += len) {
            std::uint64_t w = 1;
            for (std::size_t j = 0; j < len / 2; ++j) {
                std::uint32_t u = a[i + j];
                std::uint32_t v = static_cast<std::uint32_t>(w * a[i + j + len / 2] % kMod);
                a[i + j] = u + v < kMod ? u + v : u + v - kMod;
                a[i + j + len / 2] = u >= v ? u - v : u + kMod - v;
                w = w * wl % kMod;
            }
        }
    }
    if (invert) {
        std::uint64_t inv_n = pow_mod(static_cast<std::uint32_t>(n % kMod), kMod - 2);
        for (auto& x : a) x = static_cast<std::uint32_t>(x * inv_n % kMod);
    }
}

} // namespace

void FinalKeyParams::validate() const {
    if (!(e >= 0) || !(e <= 1)) throw std::invalid_argument("error rate out of [0,1]");
}

double tau(double e) {
    if (e < 0 || e > 1) throw std::invalid_argument("error rate out of [0,1]");
    if (e == 0) return 1.0;
    if (e > 0.5) return 0.0;
    double h = -e * std::log2(e) - (1 - e) * std::log2(1 - e);
    return 1.0 - h;
}

std::size_t final_length(const FinalKeyParams& p) {
    p.validate();
    double keep = std::floor(static_cast<double>(p.n_in) * tau(p.e));
    double n = keep - static_cast<double>(p.n_dis) - static_cast<double>(p.n_mar);
    if (n <= 0) return 0;
    return static_cast<std::size_t>(n);
}

GfField::Elem confirm_hash(const BitBlock& key, const GfField::Elem& r) {
    GfField f(96);
    GfMulTable mul_r(f, r);
    GfField::Elem t{};
    auto bytes = key.to_bytes();
    const std::size_t bb = 12;
    std::size_t off = 0;
    auto absorb = [&](const std::uint8_t* p, std::size_t len) {
        GfField::Elem m{};
        for (std::size_t i = 0; i < len; ++i)
            m[i >> 3] |= std::uint64_t{p[i]} << ((i & 7) * 8);
        t = mul_r.mul(GfField::add(t, m));
    };
    while (off + bb <= bytes.size()) {
        absorb(bytes.data() + off, bb);
        off += bb;
    }
    if (off < bytes.size()) absorb(bytes.data() + off, bytes.size() - off);
    std::uint8_t lenblk[12] = {};
    std::uint64_t nbits = key.size();
    for (int i = 0; i < 8; ++i) lenblk[i] = static_cast<std::uint8_t>(nbits >> (8 * i));
    absorb(lenblk, bb);
    return t;
}

std::vector<std::uint32_t> ntt_convolve(const std::vector<std::uint32_t>& a,
                                        const std::vector<std::uint32_t>& b) {
    if (a.empty() || b.empty()) return {};
    std::size_t need = a.size() + b.size() - 1;
    std::size_t n = 1;
    while (n < need) n <<= 1;
    std::vector<std::uint32_t> fa(a);
    std::vector<std::uint32_t> fb(b);
    fa.resize(n, 0);
    fb.resize(n, 0);
    ntt(fa, false);
    ntt(fb, false);
    for (std::size_t i = 0; i < n; ++i)
        fa[i] = static_cast<std::uint32_t>(std::uint64_t{fa[i]} * fb[i] % kMod);
    ntt(fa, true);
    fa.resize(need);
    return fa;
}

BitBlock toeplitz_pa(const BitBlock& key, const BitBlock& seed, std::size_t n_fin) {
    const std::size_t n_in = key.size();
    if (n_fin == 0) return BitBlock();
    if (seed.size() != n_in + n_fin - 1)
        throw std::invalid_argument("toeplitz_pa: seed must have n_in + n_fin - 1 bits");

    // out[j] = parity of sum_i key[i] * seed[n_fin - 1 - j + i]
    //        = (key (*) reverse(seed))[n_in - 1 + j] mod 2
    // Convolve key with the reversed seed; values stay below the modulus
    // because each coefficient is at most n_in < 2^29.
    std::vector<std::uint32_t> a(n_in), b(seed.size());
    for (std::size_t i = 0; i < n_in; ++i) a[i] = key.get(i) ? 1u : 0u;
    for (std::size_t i = 0; i < seed.size(); ++i)
        b[i] = seed.get(seed.size() - 1 - i) ? 1u : 0u;
    auto conv = ntt_convolve(a, b);

    BitBlock out(n_fin);
    for (std::size_t j = 0; j < n_fin; ++j)
        out.set(j, conv[n_in - 1 + j] & 1);
    return out;
}

} // namespace qkd
