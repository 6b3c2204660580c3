#include "qkd/gf2n.hpp"

#include <bit>
#include <map>
#include <mutex>
#include <stdexcept>

namespace qkd {

namespace {

constexpr int kSizes[] = {32, 64, 96, 128, 256};

bool valid_size(int n) {
    for (int s : kSizes)
        if (s == n) return true;
    return false;
}

using E = GfField::Elem;

int word_count(int n) { return (n + 63) / 64; }

// multiply by x modulo x^n + tail, generic over (n, tail)
E xtime_raw(int n, std::uint64_t tail, const E& a) {
    E r{};
    int words = word_count(n);
    std::uint64_t carry = 0;
    for (int w = 0; w < words; ++w) {
        r[w] = (a[w] << 1) | carry;
        carry = a[w] >> 63;
    }
    bool over;
    if (n == 64 * words) {
        over = carry != 0;
    } else {
        int ow = n >> 6, ob = n & 63;
        over = (r[ow] >> ob) & 1;
        if (over) r[ow] &= ~(std::uint64_t{1} << ob);
    }
    if (over) r[0] ^= tail;
    return r;
}

E mul_raw(int n, std::uint64_t tail, const E& a, const E& b) {
    E res{};
    for (int i = n - 1; i >= 0; --i) {
        res = xtime_raw(n, tail, res);
        if ((b[i >> 6] >> (i & 63)) & 1) {
            for (int w = 0; w < 4; ++w) res[w] ^= a[w];
        }
    }
    return res;
}

// dense GF(2) polynomial, little-endian words, for the irreducibility gcd
struct Poly {
    std::array<std::uint64_t, 5> w{};

    int degree() const {
        for (int i = 4; i >= 0; --i)
            if (w[i]) return i * 64 + 63 - std::countl_zero(w[i]);
        return -1; // zero polynomial
    }
    bool is_one() const { return w[0] == 1 && !w[1] && !w[2] && !w[3] && !w[4]; }

    void xor_shifted(const Poly& o, int shift) {
        int ws = shift >> 6, bs = shift & 63;
        for (int i = 4; i >= ws; --i) {
            std::uint64_t v = o.w[i - ws] << bs;
            if (bs && i - ws - 1 >= 0) v |= o.w[i - ws - 1] >> (64 - bs);
            w[i] ^= v;
        }
    }
};

Poly poly_gcd(Poly a, Poly b) {
    while (b.degree() >= 0) {
        int da = a.degree(), db = b.degree();
        if (da < db) {
            std::swap(a, b);
            continue;
        }
        a.xor_shifted(b, da - db);
    }
    return a;
}

std::vector<int> prime_factors(int n) {
    std::vector<int> ps;
    for (int p = 2; p * p <= n; ++p) {
        if (n % p == 0) {
            ps.push_back(p);
            while (n % p == 0) n /= p;
        }
    }
    if (n > 1) ps.push_back(n);
    return ps;
}

} // namespace

bool GfField::is_irreducible(int n, std::uint64_t tail) {
    if (n > 256) throw std::invalid_argument("is_irreducible: degree too large");
    const E x = {2, 0, 0, 0};

    // x^(2^n) == x mod f
    E e = x;
    for (int i = 0; i < n; ++i) e = mul_raw(n, tail, e, e);
    if (e != x) return false;

    // gcd(x^(2^(n/p)) - x, f) == 1 for every prime p | n
    Poly f{};
    f.w[0] = tail;
    f.w[n >> 6] |= std::uint64_t{1} << (n & 63);
    for (int p : prime_factors(n)) {
        E g = x;
        for (int i = 0; i < n / p; ++i) g = mul_raw(n, tail, g, g);
        for (int w = 0; w < 4; ++w) g[w] ^= x[w];
        Poly gp{};
        for (int w = 0; w < 4; ++w) gp.w[w] = g[w];
        if (!poly_gcd(f, gp).is_one()) return false;
    }
    return true;
}

std::uint64_t GfField::least_irreducible_tail(int n) {
    for (std::uint64_t tail = 3; tail < (std::uint64_t{1} << 32); tail += 2)
        if (is_irreducible(n, tail)) return tail;
    throw std::runtime_error("no irreducible tail found");
}

GfField::GfField(int nbits) : n_(nbits), words_(word_count(nbits)) {
    if (!valid_size(nbits))
        throw std::invalid_argument("GfField: n must be one of 32, 64, 96, 128, 256");
    static std::map<int, std::uint64_t> cache;
    static std::mutex mtx;
    std::lock_guard<std::mutex> lock(mtx);
    auto it = cache.find(nbits);
    if (it == cache.end()) it = cache.emplace(nbits, least_irreducible_tail(nbits)).first;
    tail_ = it->second;
}

GfField::Elem GfField::xtime(const Elem& a) const { return xtime_raw(n_, tail_, a); }

GfField::Elem GfField::mul(const Elem& a, const Elem& b) const {
    return mul_raw(n_, tail_, a, b);
}

GfField::Elem GfField::inverse(const Elem& a) const {
    // a^(2^n - 2) = prod_{i=1}^{n-1} a^(2^i)
    Elem result = one();
    Elem sq = a;
    for (int i = 1; i < n_; ++i) {
        sq = mul(sq, sq);
        result = mul(result, sq);
    }
    return result;
}

GfField::Elem GfField::random(Rng& rng) const {
    Elem e{};
    for (int w = 0; w < words_; ++w) e[w] = rng.u64();
    if (n_ & 63) e[words_ - 1] &= (std::uint64_t{1} << (n_ & 63)) - 1;
    return e;
}

GfField::Elem GfField::from_bytes(std::span<const std::uint8_t> bytes) const {
    if (bytes.size() < static_cast<std::size_t>(n_ / 8))
        throw std::invalid_argument("GfField::from_bytes: short buffer");
    Elem e{};
    for (int i = 0; i < n_ / 8; ++i)
        e[i >> 3] |= std::uint64_t{bytes[i]} << ((i & 7) * 8);
    return e;
}

std::vector<std::uint8_t> GfField::to_bytes(const Elem& a) const {
    std::vector<std::uint8_t> out(n_ / 8);
    for (int i = 0; i < n_ / 8; ++i)
        out[i] = static_cast<std::uint8_t>(a[i >> 3] >> ((i & 7) * 8));
    return out;
}

bool GfField::valid(const Elem& a) const {
    for (int b = n_; b < 256; ++b)
        if ((a[b >> 6] >> (b & 63)) & 1) return false;
    return true;
}

GfMulTable::GfMulTable(const GfField& f, const GfField::Elem& k) : n_bytes_(f.bits() / 8) {
    std::vector<GfField::Elem> powx(static_cast<std::size_t>(f.bits()));
    powx[0] = k;
    for (int j = 1; j < f.bits(); ++j) powx[j] = f.xtime(powx[j - 1]);
    table_.resize(n_bytes_);
    for (int pos = 0; pos < n_bytes_; ++pos) {
        for (int v = 0; v < 256; ++v) {
            GfField::Elem acc{};
            for (int j = 0; j < 8; ++j) {
                if ((v >> j) & 1) {
                    const auto& p = powx[pos * 8 + j];
                    for (int w = 0; w < 4; ++w) acc[w] ^= p[w];
                }
            }
            table_[pos][static_cast<std::size_t>(v)] = acc;
        }
    }
}

GfField::Elem GfMulTable::mul(const GfField::Elem& m) const {
    GfField::Elem res{};
    for (int pos = 0; pos < n_bytes_; ++pos) {
        auto byte = static_cast<std::uint8_t>(m[pos >> 3] >> ((pos & 7) * 8));
        const auto& row = table_[pos][byte];
        for (int w = 0; w < 4; ++w) res[w] ^= row[w];
    }
    return res;
}

} // namespace qkd
