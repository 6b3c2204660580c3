#include "qkd/sync.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <cstdio>
#include <cstdlib>
#include <memory>

#include <fftw3.h>

namespace qkd {

namespace {

constexpr double kPsPerS = 1e12;

struct FftwBuf {
    double* p = nullptr;
    explicit FftwBuf(std::size_t n) {
        p = static_cast<double*>(fftw_malloc(n * sizeof(double)));
        if (!p) throw std::bad_alloc();
    }
    ~FftwBuf() { fftw_free(p); }
    FftwBuf(const FftwBuf&) = delete;
    FftwBuf& operator=(const FftwBuf&) = delete;
};

// Correlation of binned tag streams via FFT. Returns the peak lag (in bins,
// signed) and its significance, using sliding windows of `w` bins so a
// drift-smeared peak is still collected.
struct CorrPeak {
    double lag_bins; // centroid
    double sigma;
};

CorrPeak binned_correlation_peak(const std::vector<TimeTag>& a, std::size_t a_begin,
                                 std::size_t a_end, const std::vector<TimeTag>& b,
                                 Ps base, Ps bin, std::size_t m, std::size_t lag_range,
                                 std::size_t w) {
    std::size_t mc = m / 2 + 1;
    FftwBuf fa(2 * mc), fb(2 * mc);
    std::memset(fa.p, 0, 2 * mc * sizeof(double));
    std::memset(fb.p, 0, 2 * mc * sizeof(double));

    std::int64_t a_min = static_cast<std::int64_t>(m), a_max = -1;
    std::int64_t b_min = static_cast<std::int64_t>(m), b_max = -1;
    for (std::size_t i = a_begin; i < a_end; ++i) {
        auto idx = static_cast<std::size_t>((a[i].t - base) / bin);
        if (idx < m) {
            fa.p[idx] += 1.0;
            a_min = std::min(a_min, static_cast<std::int64_t>(idx));
            a_max = std::max(a_max, static_cast<std::int64_t>(idx));
        }
    }
    auto b_lo = std::lower_bound(b.begin(), b.end(), base,
                                 [](const TimeTag& t, Ps v) { return t.t < v; });
    for (auto it = b_lo; it != b.end(); ++it) {
        auto idx = static_cast<std::size_t>((it->t - base) / bin);
        if (idx >= m) break;
        fb.p[idx] += 1.0;
        b_min = std::min(b_min, static_cast<std::int64_t>(idx));
        b_max = std::max(b_max, static_cast<std::int64_t>(idx));
    }
    if (a_max < 0 || b_max < 0) return {0.0, 0.0};

    fftw_plan pf_a = fftw_plan_dft_r2c_1d(static_cast<int>(m), fa.p,
                                          reinterpret_cast<fftw_complex*>(fa.p), FFTW_ESTIMATE);
    fftw_plan pf_b = fftw_plan_dft_r2c_1d(static_cast<int>(m), fb.p,
                                          reinterpret_cast<fftw_complex*>(fb.p), FFTW_ESTIMATE);
    fftw_execute(pf_a);
    fftw_execute(pf_b);
    fftw_destroy_plan(pf_a);
    fftw_destroy_plan(pf_b);

    // c = IFFT(conj(FA) . FB): c[l] ~ sum_i A[i] B[i + l]
    auto* ca = reinterpret_cast<fftw_complex*>(fa.p);
    auto* cb = reinterpret_cast<fftw_complex*>(fb.p);
    for (std::size_t i = 0; i < mc; ++i) {
        double re = ca[i][0] * cb[i][0] + ca[i][1] * cb[i][1];
        double im = ca[i][0] * cb[i][1] - ca[i][1] * cb[i][0];
        ca[i][0] = re;
        ca[i][1] = im;
    }
    fftw_plan pi = fftw_plan_dft_c2r_1d(static_cast<int>(m), ca, fa.p, FFTW_ESTIMATE);
    fftw_execute(pi);
    fftw_destroy_plan(pi);

    auto corr_at = [&](std::int64_t lag) {
        std::int64_t idx = lag >= 0 ? lag : static_cast<std::int64_t>(m) + lag;
        return fa.p[idx];
    };

    // Sliding window sums over lags [-lag_range, lag_range]. Only lags where
    // the shifted Alice slice lies (almost) fully inside Bob's data span are
    // scored: beyond them the correlation is structurally zero or ramping
    // down, which would corrupt the background statistics.
    auto lr = static_cast<std::int64_t>(lag_range);
    const std::int64_t a_len = a_max - a_min + 1;
    auto well_covered = [&](std::int64_t l) {
        std::int64_t ov = std::min(a_max + l, b_max) - std::max(a_min + l, b_min) + 1;
        return 10 * ov >= 9 * a_len;
    };
    double sum = 0, sum2 = 0;
    std::size_t n = 0;
    double best = -1e300;
    std::int64_t best_lag = 0;
    double run = 0;
    for (std::int64_t l = -lr; l + static_cast<std::int64_t>(w) <= lr; ++l) {
        if (l == -lr) {
            for (std::size_t k = 0; k < w; ++k) run += corr_at(l + static_cast<std::int64_t>(k));
        } else {
            run += corr_at(l + static_cast<std::int64_t>(w) - 1) - corr_at(l - 1);
        }
        if (!well_covered(l)) continue;
        sum += run;
        sum2 += run * run;
        ++n;
        if (run > best) {
            best = run;
            best_lag = l;
        }
    }
    if (n < 16) return {0.0, 0.0};
    double mean = sum / static_cast<double>(n);
    double var = sum2 / static_cast<double>(n) - mean * mean;
    double sd = var > 0 ? std::sqrt(var) : 0;
    CorrPeak peak;
    peak.sigma = sd > 0 ? (best - mean) / sd : 0;

    // baseline-subtracted centroid of the winning window
    double base_per_bin = mean / static_cast<double>(w);
    double wsum = 0, wmom = 0;
    for (std::size_t k = 0; k < w; ++k) {
        double v = corr_at(best_lag + static_cast<std::int64_t>(k)) - base_per_bin;
        if (v <= 0) continue;
        wsum += v;
        wmom += v * (static_cast<double>(best_lag) + static_cast<double>(k) + 0.5);
    }
    peak.lag_bins = wsum > 0 ? wmom / wsum
                             : static_cast<double>(best_lag) + static_cast<double>(w) / 2.0;
    return peak;
}

// Difference histogram of (t_b - t_a - center) over +-range at `bin`,
// for Alice tags in [a_begin, a_end).
std::vector<double> diff_histogram(const std::vector<TimeTag>& a, std::size_t a_begin,
                                   std::size_t a_end, const std::vector<TimeTag>& b,
                                   Ps center, Ps range, Ps bin) {
    auto nbins = static_cast<std::size_t>(2 * range / bin) + 1;
    std::vector<double> hist(nbins, 0.0);
    std::size_t j = 0;
    for (std::size_t i = a_begin; i < a_end; ++i) {
        Ps lo = a[i].t + center - range;
        Ps hi = a[i].t + center + range;
        while (j < b.size() && b[j].t < lo) ++j;
        for (std::size_t k = j; k < b.size() && b[k].t <= hi; ++k) {
            auto idx = static_cast<std::size_t>((b[k].t - a[i].t - center + range) / bin);
            if (idx < nbins) hist[idx] += 1.0;
        }
    }
    return hist;
}

struct HistPeak {
    bool significant;
    double center_ps; // relative to histogram center
};

HistPeak histogram_peak(const std::vector<double>& hist, Ps range, Ps bin,
                        double nsigma) {
    const std::size_t w = 3;
    if (hist.size() < w + 2) return {false, 0};
    double best = -1;
    std::size_t best_i = 0;
    double run = hist[0] + hist[1] + hist[2];
    best = run;
    for (std::size_t i = 1; i + w <= hist.size(); ++i) {
        run += hist[i + w - 1] - hist[i - 1];
        if (run > best) {
            best = run;
            best_i = i;
        }
    }
    // background from bins away from the peak
    double bg_sum = 0;
    std::size_t bg_n = 0;
    for (std::size_t i = 0; i < hist.size(); ++i) {
        if (i + 3 >= best_i && i < best_i + w + 3) continue;
        bg_sum += hist[i];
        ++bg_n;
    }
    double bg = bg_n ? bg_sum / static_cast<double>(bg_n) : 0;
    double expect = bg * static_cast<double>(w);
    if (best - expect < nsigma * std::sqrt(expect + 1.0)) return {false, 0};

    // centroid over the peak window +-1 bin
    double wsum = 0, wmom = 0;
    std::size_t lo = best_i > 0 ? best_i - 1 : 0;
    std::size_t hi = std::min(best_i + w + 1, hist.size());
    for (std::size_t i = lo; i < hi; ++i) {
        double v = hist[i] - bg;
        if (v <= 0) continue;
        wsum += v;
        wmom += v * (static_cast<double>(i) + 0.5);
    }
    if (wsum <= 0) return {false, 0};
    double center_bin = wmom / wsum;
    return {true, center_bin * static_cast<double>(bin) - static_cast<double>(range)};
}

// Smallest 5-smooth (2^a·3^b·5^c) size >= n: awkwardly factoring transform
// lengths fall into FFTW's generic O(n^2)-ish path and cost minutes.
std::size_t fft_friendly(std::size_t n) {
    auto smooth = [](std::size_t v) {
        for (std::size_t p : {2, 3, 5})
            while (v % p == 0) v /= p;
        return v == 1;
    };
    while (!smooth(n)) ++n;
    return n;
}

std::size_t slice_end(const std::vector<TimeTag>& tags, std::size_t begin, Ps t_end) {
    return static_cast<std::size_t>(
        std::lower_bound(tags.begin() + static_cast<std::ptrdiff_t>(begin), tags.end(), t_end,
                         [](const TimeTag& t, Ps v) { return t.t < v; }) -
        tags.begin());
}

} // namespace

Ps OffsetModel::delta_at(Ps t_bob) const {
    if (blocks.empty()) return coarse;
    auto it = std::upper_bound(blocks.begin(), blocks.end(), t_bob,
                               [](Ps v, const Block& blk) { return v < blk.t_start; });
    if (it != blocks.begin()) --it;
    double d = static_cast<double>(it->offset) +
               drift * static_cast<double>(t_bob - it->t_center);
    return static_cast<Ps>(std::llround(d));
}

Ps coarse_offset(const TagStream& a, const TagStream& b, double search_range_s,
                 Ps bin, const SyncConfig& cfg) {
    if (a.tags.empty() || b.tags.empty())
        throw std::invalid_argument("coarse_offset: empty stream");
    if (bin <= 0 || search_range_s <= 0)
        throw std::invalid_argument("coarse_offset: bad bin/range");

    const auto range_ps = static_cast<Ps>(search_range_s * kPsPerS);

    // Stage 1: FFT correlation over slices short enough that clock drift
    // smears the peak by about one bin, doubled until the peak is
    // significant. The slice is anchored at the front of one stream; when
    // the other party started recording later (its clock never reached the
    // anchor stream's early tags), the true lag is structurally outside the
    // overlap guard, so both anchor choices are tried and the lag sign is
    // flipped for the swapped one.
    auto span_of = [](const TagStream& s) {
        return s.tags.back().t - s.tags.front().t + 1;
    };
    auto try_anchor = [&](const TagStream& x, const TagStream& y, Ps slice,
                          double& offset_est) {
        slice = std::clamp<Ps>(slice, bin, span_of(x));
        auto m = fft_friendly(static_cast<std::size_t>((slice + 2 * range_ps) / bin) + 2);
        if (m > (std::size_t{1} << 28))
            throw std::invalid_argument("coarse_offset: search grid too large");
        const Ps x0 = x.tags.front().t;
        std::size_t x_hi = slice_end(x.tags, 0, x0 + slice);
        Ps base = x0 - range_ps;
        auto lag_range = static_cast<std::size_t>(range_ps / bin);
        auto smear = static_cast<std::size_t>(
            cfg.max_drift * static_cast<double>(slice) / static_cast<double>(bin));
        std::size_t w = std::clamp<std::size_t>(smear + 1, 1, lag_range);
        CorrPeak peak = binned_correlation_peak(x.tags, 0, x_hi, y.tags, base, bin, m,
                                                lag_range, w);
        if (std::getenv("QKD_SYNC_DEBUG"))
            std::fprintf(stderr, "coarse: slice=%lld m=%zu w=%zu sigma=%.2f lag=%.1f\n",
                         static_cast<long long>(slice), m, w, peak.sigma, peak.lag_bins);
        if (peak.sigma < cfg.threshold_sigma) return false;
        offset_est = peak.lag_bins * static_cast<double>(bin);
        return true;
    };

    const Ps full_span = std::max(span_of(a), span_of(b));
    Ps slice = cfg.max_drift > 0
                   ? static_cast<Ps>(static_cast<double>(bin) / cfg.max_drift)
                   : full_span;
    slice = std::clamp<Ps>(slice, bin, full_span);

    bool found = false;
    bool swapped = false;
    double offset_est = 0;
    for (int attempt = 0; attempt < 12; ++attempt) {
        if (try_anchor(a, b, slice, offset_est)) {
            found = true;
            break;
        }
        if (try_anchor(b, a, slice, offset_est)) {
            found = true;
            swapped = true;
            break;
        }
        if (slice >= full_span) break;
        slice = std::min(slice * 2, full_span);
    }
    if (!found) throw NoSyncError();

    // refine in the coordinates of the anchor choice that locked
    const TagStream& xs = swapped ? b : a;
    const TagStream& ys = swapped ? a : b;
    const Ps a0 = xs.tags.front().t;
    const Ps a_end = xs.tags.back().t;

    // progressive refinement with difference histograms around the peak
    Ps o = static_cast<Ps>(std::llround(offset_est));
    Ps prev_bin = bin;
    Ps cur_bin = bin;
    while (cur_bin > cfg.final_bin) {
        cur_bin = std::max(cur_bin / 8, cfg.final_bin);
        Ps range = std::max<Ps>(4 * prev_bin, 8 * cur_bin);
        Ps rslice = cfg.max_drift > 0
                        ? static_cast<Ps>(static_cast<double>(cur_bin) / cfg.max_drift)
                        : a_end - a0 + 1;
        rslice = std::clamp<Ps>(rslice, cur_bin, a_end - a0 + 1);
        bool ok = false;
        for (int attempt = 0; attempt < 9; ++attempt) {
            std::size_t a_hi = slice_end(xs.tags, 0, a0 + rslice);
            auto hist = diff_histogram(xs.tags, 0, a_hi, ys.tags, o, range, cur_bin);
            auto peak = histogram_peak(hist, range, cur_bin, 5.0);
            if (peak.significant) {
                o += static_cast<Ps>(std::llround(peak.center_ps));
                ok = true;
                break;
            }
            if (rslice >= a_end - a0 + 1) break;
            rslice = std::min(rslice * 2, a_end - a0 + 1);
        }
        if (!ok) break; // keep the precision achieved so far
        prev_bin = cur_bin;
    }
    return swapped ? -o : o;
}

OffsetModel fine_sync(const TagStream& a, const TagStream& b, Ps coarse,
                      std::size_t min_block, const SyncConfig& cfg) {
    if (a.tags.empty() || b.tags.empty())
        throw std::invalid_argument("fine_sync: empty stream");
    if (min_block == 0) throw std::invalid_argument("fine_sync: min_block == 0");

    OffsetModel model;
    model.coarse = coarse;

    // block boundaries over Bob's stream, >= min_block detections each
    std::vector<std::pair<std::size_t, std::size_t>> spans;
    for (std::size_t i = 0; i < b.tags.size(); i += min_block) {
        std::size_t e = i + min_block;
        if (e + min_block > b.tags.size()) e = b.tags.size(); // absorb remainder
        spans.emplace_back(i, e);
        if (e == b.tags.size()) break;
    }

    struct P1 {
        Ps t_start, t_center;
        double offset;
        bool ok;
    };
    std::vector<P1> pass1(spans.size());

    // pass 1: tracked histogram peaks, coarse offset bootstraps the first block
    Ps tracked = coarse;
    for (std::size_t bi = 0; bi < spans.size(); ++bi) {
        auto [s0, s1] = spans[bi];
        Ps t_start = b.tags[s0].t;
        Ps t_last = b.tags[s1 - 1].t;
        Ps t_center = t_start + (t_last - t_start) / 2;

        // histogram (t_b - t_a - tracked) using Bob block against Alice
        auto nbins = static_cast<std::size_t>(2 * cfg.fine_window / cfg.fine_bin) + 1;
        std::vector<double> hist(nbins, 0.0);
        Ps lo0 = t_start - tracked - cfg.fine_window;
        auto ai = static_cast<std::size_t>(
            std::lower_bound(a.tags.begin(), a.tags.end(), lo0,
                             [](const TimeTag& t, Ps v) { return t.t < v; }) -
            a.tags.begin());
        for (std::size_t j = s0; j < s1; ++j) {
            Ps lo = b.tags[j].t - tracked - cfg.fine_window;
            Ps hi = b.tags[j].t - tracked + cfg.fine_window;
            while (ai < a.tags.size() && a.tags[ai].t < lo) ++ai;
            for (std::size_t k = ai; k < a.tags.size() && a.tags[k].t <= hi; ++k) {
                auto idx = static_cast<std::size_t>(
                    (b.tags[j].t - a.tags[k].t - tracked + cfg.fine_window) / cfg.fine_bin);
                if (idx < nbins) hist[idx] += 1.0;
            }
        }
        auto peak = histogram_peak(hist, cfg.fine_window, cfg.fine_bin, 5.0);
        pass1[bi].t_start = t_start;
        pass1[bi].t_center = t_center;
        pass1[bi].ok = peak.significant;
        if (peak.significant) {
            pass1[bi].offset = static_cast<double>(tracked) + peak.center_ps;
            tracked = static_cast<Ps>(std::llround(pass1[bi].offset));
        } else {
            pass1[bi].offset = static_cast<double>(tracked);
        }
    }

    // linear drift fit over usable blocks (centered regressors)
    double slope = 0, x_mean = 0, y_mean = 0;
    {
        double sx = 0, sy = 0;
        std::size_t n = 0;
        for (const auto& p : pass1)
            if (p.ok) {
                sx += static_cast<double>(p.t_center);
                sy += p.offset;
                ++n;
            }
        if (n >= 1) {
            x_mean = sx / static_cast<double>(n);
            y_mean = sy / static_cast<double>(n);
        } else {
            y_mean = static_cast<double>(coarse);
            x_mean = 0;
        }
        if (n >= 2) {
            double sxx = 0, sxy = 0;
            for (const auto& p : pass1)
                if (p.ok) {
                    double dx = static_cast<double>(p.t_center) - x_mean;
                    sxx += dx * dx;
                    sxy += dx * (p.offset - y_mean);
                }
            if (sxx > 0) slope = sxy / sxx;
        }
    }
    auto fit = [&](Ps t) { return y_mean + slope * (static_cast<double>(t) - x_mean); };

    // pass 2: drift-corrected 1 ns histograms, centroid refinement
    model.drift = slope;
    model.blocks.resize(spans.size());
    const Ps w2 = 50000; // ps
    const Ps bin2 = 1000;
    for (std::size_t bi = 0; bi < spans.size(); ++bi) {
        auto [s0, s1] = spans[bi];
        auto nbins = static_cast<std::size_t>(2 * w2 / bin2) + 1;
        std::vector<double> hist(nbins, 0.0);
        Ps d0 = static_cast<Ps>(std::llround(fit(pass1[bi].t_center)));
        Ps lo0 = b.tags[s0].t - d0 - 2 * w2;
        auto ai = static_cast<std::size_t>(
            std::lower_bound(a.tags.begin(), a.tags.end(), lo0,
                             [](const TimeTag& t, Ps v) { return t.t < v; }) -
            a.tags.begin());
        for (std::size_t j = s0; j < s1; ++j) {
            double dj = fit(b.tags[j].t);
            Ps lo = b.tags[j].t - static_cast<Ps>(dj) - w2;
            Ps hi = b.tags[j].t - static_cast<Ps>(dj) + w2;
            while (ai < a.tags.size() && a.tags[ai].t < lo) ++ai;
            for (std::size_t k = ai; k < a.tags.size() && a.tags[k].t <= hi; ++k) {
                double r = static_cast<double>(b.tags[j].t - a.tags[k].t) - dj;
                auto idx = static_cast<std::size_t>(
                    (r + static_cast<double>(w2)) / static_cast<double>(bin2));
                if (idx < nbins) hist[idx] += 1.0;
            }
        }
        auto peak = histogram_peak(hist, w2, bin2, 5.0);
        auto& blk = model.blocks[bi];
        blk.t_start = pass1[bi].t_start;
        blk.t_center = pass1[bi].t_center;
        blk.flagged = !peak.significant;
        double off = fit(pass1[bi].t_center) + (peak.significant ? peak.center_ps : 0.0);
        blk.offset = static_cast<Ps>(std::llround(off));
    }
    return model;
}

CoincidenceSet match_coincidences(const TagStream& a, const TagStream& b,
                                  const OffsetModel& m, Ps window) {
    CoincidenceSet out;
    if (a.tags.empty() || b.tags.empty()) return out;
    if (window <= 0) throw std::invalid_argument("match_coincidences: bad window");

    struct Cand {
        Ps abs_delta;
        std::uint32_t idx_b, idx_a;
        Ps delta;
    };
    std::vector<Cand> cands;
    const Ps hw = (window + 1) / 2;
    std::size_t ai = 0;
    for (std::size_t j = 0; j < b.tags.size(); ++j) {
        Ps u = b.tags[j].t - m.delta_at(b.tags[j].t);
        while (ai < a.tags.size() && a.tags[ai].t < u - hw) ++ai;
        for (std::size_t k = ai; k < a.tags.size() && a.tags[k].t <= u + hw; ++k) {
            Ps r = u - a.tags[k].t;
            if (2 * std::llabs(r) <= window)
                cands.push_back({std::llabs(r), static_cast<std::uint32_t>(j),
                                 static_cast<std::uint32_t>(k), r});
        }
    }
    std::sort(cands.begin(), cands.end(), [](const Cand& x, const Cand& y) {
        if (x.abs_delta != y.abs_delta) return x.abs_delta < y.abs_delta;
        if (x.idx_b != y.idx_b) return x.idx_b < y.idx_b;
        return x.idx_a < y.idx_a;
    });
    std::vector<bool> used_a(a.tags.size(), false), used_b(b.tags.size(), false);
    out.pairs.reserve(cands.size());
    for (const auto& c : cands) {
        if (used_a[c.idx_a] || used_b[c.idx_b]) continue;
        used_a[c.idx_a] = true;
        used_b[c.idx_b] = true;
        out.pairs.push_back({c.idx_a, c.idx_b, c.delta});
    }
    std::sort(out.pairs.begin(), out.pairs.end(),
              [](const Coincidence& x, const Coincidence& y) { return x.idx_b < y.idx_b; });
    return out;
}

} // namespace qkd
