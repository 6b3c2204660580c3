#include "qkd/sifting.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace qkd {

SiftResult sift(const CoincidenceSet& c, const TagStream& a, const TagStream& b) {
    SiftResult r;
    r.n_coinc_total = c.size();
    for (const auto& pair : c.pairs) {
        if (pair.idx_a >= a.tags.size() || pair.idx_b >= b.tags.size())
            throw std::out_of_range("sift: coincidence index out of range");
        DetectorChannel ca = a.tags[pair.idx_a].ch;
        DetectorChannel cb = b.tags[pair.idx_b].ch;
        if (channel_basis(ca) != channel_basis(cb)) continue;
        r.key_a.push_back(sifted_bit(Party::Alice, ca));
        r.key_b.push_back(sifted_bit(Party::Bob, cb));
        r.basis_tags.push_back(channel_basis(ca));
    }
    r.n_sifted = r.key_a.size();
    return r;
}

std::vector<std::size_t> sample_positions(std::size_t n, double fraction, Rng& rng) {
    if (fraction <= 0.0 || fraction > 1.0)
        throw std::invalid_argument("sample_positions: fraction outside (0,1]");
    auto want = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
    want = std::min(want, n);
    if (fraction > 0 && want == 0 && n > 0) want = 1;
    // Floyd's sampling, then sort
    std::vector<std::size_t> picked;
    picked.reserve(want);
    std::vector<bool> seen(n, false);
    for (std::size_t j = n - want; j < n; ++j) {
        std::size_t t = rng.below(j + 1);
        if (seen[t]) t = j;
        seen[t] = true;
        picked.push_back(t);
    }
    std::sort(picked.begin(), picked.end());
    return picked;
}

QberEstimate estimate_qber(const SiftResult& s, double fraction, Rng& rng) {
    if (s.n_sifted == 0) throw std::runtime_error("estimate_qber: insufficient key");
    auto positions = sample_positions(s.n_sifted, fraction, rng);

    QberEstimate q;
    q.n_disclosed = positions.size();
    for (auto p : positions)
        if (s.key_a.get(p) != s.key_b.get(p)) ++q.n_errors;
    q.e = static_cast<double>(q.n_errors) / static_cast<double>(positions.size());

    q.remaining.key_a = s.key_a.without(positions);
    q.remaining.key_b = s.key_b.without(positions);
    q.remaining.n_coinc_total = s.n_coinc_total;
    q.remaining.n_sifted = q.remaining.key_a.size();
    if (s.basis_tags.size() > positions.size())
        q.remaining.basis_tags.reserve(s.basis_tags.size() - positions.size());
    std::size_t j = 0;
    for (std::size_t i = 0; i < s.basis_tags.size(); ++i) {
        if (j < positions.size() && positions[j] == i) {
            ++j;
            continue;
        }
        q.remaining.basis_tags.push_back(s.basis_tags[i]);
    }
    return q;
}

} // namespace qkd
