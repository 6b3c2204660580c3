#include "qkd/simulator.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "qkd/rng.hpp"

namespace qkd {

namespace {

constexpr double kPsPerS = 1e12;

struct Rec {
    Ps t;
    std::uint32_t pair_id; // valid when origin == PairMatched
    DetectorChannel ch;
    TagOrigin origin;
};

constexpr std::uint32_t kNoPair = 0xffffffffu;

// Homogeneous Poisson arrival times on [0, duration) in picoseconds.
template <typename F>
void poisson_arrivals(double rate, double duration, Rng& rng, F&& emit) {
    if (rate <= 0) return;
    double t = 0;
    while (true) {
        t += rng.exponential(rate);
        if (t >= duration) break;
        emit(t);
    }
}

DetectorChannel make_channel(bool da_basis, int bit) {
    return static_cast<DetectorChannel>((da_basis ? 2 : 0) | bit);
}

} // namespace

void SourceParams::validate() const {
    auto in01 = [](double x) { return x >= 0.0 && x <= 1.0; };
    if (!in01(v_hv) || !in01(v_da)) throw std::invalid_argument("SourceParams: visibility outside [0,1]");
    if (!in01(eff_a) || !in01(eff_b)) throw std::invalid_argument("SourceParams: efficiency outside [0,1]");
    if (pair_rate < 0 || dark_per_det_a < 0 || dark_per_det_b < 0 || bg_b < 0)
        throw std::invalid_argument("SourceParams: negative rate");
    if (jitter_sigma < 0) throw std::invalid_argument("SourceParams: negative jitter");
    if (duration <= 0) throw std::invalid_argument("SourceParams: duration must be positive");
}

Ps GroundTruth::true_delta_at_bob_time(Ps t_bob) const {
    // t_bob = t_alice (1 + d) + o  =>  delta(t_bob) = t_bob - t_alice
    double o = clock_offset * kPsPerS;
    double d = clock_drift;
    double t_alice = (static_cast<double>(t_bob) - o) / (1.0 + d);
    return static_cast<Ps>(std::llround(static_cast<double>(t_bob) - t_alice));
}

Session generate_session(const SourceParams& p) {
    p.validate();
    Rng rng(p.seed);

    const double dur_ps = p.duration * kPsPerS;
    const double jit_ps = p.jitter_sigma * kPsPerS;
    const double off_ps = p.clock_offset * kPsPerS;

    std::vector<Rec> ra, rb;
    {
        // thinned pair process: both detected / Alice only / Bob only
        double r_both = p.pair_rate * p.eff_a * p.eff_b / kPsPerS;
        double r_a_only = p.pair_rate * p.eff_a * (1.0 - p.eff_b) / kPsPerS;
        double r_b_only = p.pair_rate * p.eff_b * (1.0 - p.eff_a) / kPsPerS;
        ra.reserve(static_cast<std::size_t>((r_both + r_a_only) * dur_ps * 1.01) +
                   static_cast<std::size_t>(4 * p.dark_per_det_a * p.duration) + 64);
        rb.reserve(static_cast<std::size_t>((r_both + r_b_only) * dur_ps * 1.01) +
                   static_cast<std::size_t>((4 * p.dark_per_det_b + p.bg_b) * p.duration) + 64);

        std::uint32_t pair_id = 0;
        poisson_arrivals(r_both, dur_ps, rng, [&](double t) {
            bool basis_a = rng.coin(); // true = DA
            bool basis_b = rng.coin();
            int bit_a = rng.coin() ? 1 : 0;
            int bit_b;
            if (basis_a != basis_b) {
                bit_b = rng.coin() ? 1 : 0; // mismatched bases: independent fair bit
            } else if (basis_a) {
                // DA: correlated with probability (1 + v_da) / 2
                bool corr = rng.uniform() < (1.0 + p.v_da) / 2.0;
                bit_b = corr ? bit_a : 1 - bit_a;
            } else {
                // HV: anti-correlated with probability (1 + v_hv) / 2
                bool anti = rng.uniform() < (1.0 + p.v_hv) / 2.0;
                bit_b = anti ? 1 - bit_a : bit_a;
            }
            double ta = t + rng.gaussian(jit_ps);
            double tb = t + rng.gaussian(jit_ps);
            ra.push_back({static_cast<Ps>(std::llround(ta)), pair_id,
                          make_channel(basis_a, bit_a), TagOrigin::PairMatched});
            rb.push_back({static_cast<Ps>(std::llround(tb)), pair_id,
                          make_channel(basis_b, bit_b), TagOrigin::PairLone /* fixed below */});
            rb.back().origin = TagOrigin::PairMatched;
            ++pair_id;
        });

        auto lone = [&](std::vector<Rec>& out, double rate) {
            poisson_arrivals(rate, dur_ps, rng, [&](double t) {
                // partner lost: reduced state is maximally mixed, uniform channel
                auto ch = static_cast<DetectorChannel>(rng.below(4));
                double tt = t + rng.gaussian(jit_ps);
                out.push_back({static_cast<Ps>(std::llround(tt)), kNoPair, ch, TagOrigin::PairLone});
            });
        };
        lone(ra, r_a_only);
        lone(rb, r_b_only);

        auto noise = [&](std::vector<Rec>& out, double per_det_rate, TagOrigin origin) {
            for (int ch = 0; ch < 4; ++ch) {
                poisson_arrivals(per_det_rate / kPsPerS, dur_ps, rng, [&](double t) {
                    double tt = t + rng.gaussian(jit_ps);
                    out.push_back({static_cast<Ps>(std::llround(tt)), kNoPair,
                                   static_cast<DetectorChannel>(ch), origin});
                });
            }
        };
        noise(ra, p.dark_per_det_a, TagOrigin::Dark);
        noise(rb, p.dark_per_det_b, TagOrigin::Dark);
        noise(rb, p.bg_b / 4.0, TagOrigin::Background);
    }

    // Bob's clock: t -> t (1 + drift) + offset
    for (auto& r : rb)
        r.t = static_cast<Ps>(std::llround(static_cast<double>(r.t) * (1.0 + p.clock_drift) + off_ps));

    auto finalize = [](std::vector<Rec>& recs) {
        // detections before the local clock epoch do not exist
        std::erase_if(recs, [](const Rec& r) { return r.t < 0; });
        std::sort(recs.begin(), recs.end(), [](const Rec& x, const Rec& y) {
            if (x.t != y.t) return x.t < y.t;
            return static_cast<int>(x.ch) < static_cast<int>(y.ch);
        });
    };
    finalize(ra);
    finalize(rb);

    Session s;
    s.alice.party = Party::Alice;
    s.bob.party = Party::Bob;
    s.truth.clock_offset = p.clock_offset;
    s.truth.clock_drift = p.clock_drift;

    std::uint32_t n_pairs = 0;
    for (const auto& r : ra)
        if (r.origin == TagOrigin::PairMatched) ++n_pairs;

    std::vector<std::uint32_t> idx_a(n_pairs, kNoPair), idx_b(n_pairs, kNoPair);
    auto unpack = [&](const std::vector<Rec>& recs, TagStream& out,
                      std::vector<TagOrigin>& origin, std::vector<std::uint32_t>& pair_idx) {
        out.tags.resize(recs.size());
        origin.resize(recs.size());
        for (std::size_t i = 0; i < recs.size(); ++i) {
            out.tags[i] = {recs[i].t, recs[i].ch};
            origin[i] = recs[i].origin;
            if (recs[i].origin == TagOrigin::PairMatched && recs[i].pair_id < pair_idx.size())
                pair_idx[recs[i].pair_id] = static_cast<std::uint32_t>(i);
        }
    };
    unpack(ra, s.alice, s.truth.origin_a, idx_a);
    unpack(rb, s.bob, s.truth.origin_b, idx_b);

    s.truth.matched_pairs.reserve(n_pairs);
    for (std::uint32_t k = 0; k < n_pairs; ++k) {
        if (idx_a[k] == kNoPair || idx_b[k] == kNoPair) {
            // partner fell before the clock epoch; the survivor is a lone tag
            if (idx_a[k] != kNoPair) s.truth.origin_a[idx_a[k]] = TagOrigin::PairLone;
            if (idx_b[k] != kNoPair) s.truth.origin_b[idx_b[k]] = TagOrigin::PairLone;
            continue;
        }
        s.truth.matched_pairs.emplace_back(idx_a[k], idx_b[k]);
    }
    return s;
}

void write_ground_truth(const Session& s, const SourceParams& p,
                        const std::string& path, std::size_t detail_limit) {
    nlohmann::json j;
    j["params"] = {
        {"pair_rate", p.pair_rate}, {"v_hv", p.v_hv}, {"v_da", p.v_da},
        {"eff_a", p.eff_a}, {"eff_b", p.eff_b},
        {"dark_per_det_a", p.dark_per_det_a}, {"dark_per_det_b", p.dark_per_det_b},
        {"bg_b", p.bg_b}, {"jitter_sigma", p.jitter_sigma},
        {"clock_offset", p.clock_offset}, {"clock_drift", p.clock_drift},
        {"duration", p.duration}, {"seed", p.seed},
    };
    j["clock"] = {{"offset_s", s.truth.clock_offset}, {"drift", s.truth.clock_drift}};
    auto counts = [](const std::vector<TagOrigin>& o) {
        std::array<std::size_t, 4> c{};
        for (auto x : o) c[static_cast<int>(x)]++;
        return nlohmann::json{{"pair_matched", c[0]}, {"pair_lone", c[1]},
                              {"dark", c[2]}, {"background", c[3]}};
    };
    j["alice"] = {{"n_tags", s.alice.size()}, {"origins", counts(s.truth.origin_a)}};
    j["bob"] = {{"n_tags", s.bob.size()}, {"origins", counts(s.truth.origin_b)}};
    j["n_matched_pairs"] = s.truth.matched_pairs.size();
    if (s.alice.size() + s.bob.size() <= detail_limit) {
        j["origin_a"] = s.truth.origin_a;
        j["origin_b"] = s.truth.origin_b;
        nlohmann::json pairs = nlohmann::json::array();
        for (auto [a, b] : s.truth.matched_pairs) pairs.push_back({a, b});
        j["matched_pairs"] = std::move(pairs);
    }
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f << j.dump(2) << '\n';
}

} // namespace qkd
