#include "qkd/linkmodel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace qkd {

void LinkParams::validate() const {
    if (wavelength <= 0 || waist <= 0 || distance < 0 || rx_aperture_diam <= 0)
        throw std::invalid_argument("LinkParams: lengths must be positive");
    if (cn2 < 1e-18 || cn2 > 1e-12)
        throw std::invalid_argument("LinkParams: cn2 outside [1e-18, 1e-12] sanity band");
}

void RateBudget::validate() const {
    if (singles_a < 0 || singles_b < 0 || coinc < 0 || noise_a < 0 || noise_b < 0)
        throw std::invalid_argument("RateBudget: negative rate");
    if (window <= 0) throw std::invalid_argument("RateBudget: window must be positive");
    if (coinc > std::min(singles_a, singles_b))
        throw std::invalid_argument("RateBudget: coinc exceeds singles");
}

double rytov_variance(const LinkParams& p) {
    p.validate();
    double k = 2.0 * std::numbers::pi / p.wavelength;
    return 1.23 * p.cn2 * std::pow(k, 7.0 / 6.0) * std::pow(p.distance, 11.0 / 6.0);
}

double diffraction_spot(const LinkParams& p) {
    double zr = std::numbers::pi * p.waist * p.waist / p.wavelength;
    double r = p.distance / zr;
    return p.waist * std::sqrt(1.0 + r * r);
}

double long_term_spot(const LinkParams& p) {
    double w = diffraction_spot(p);
    if (p.distance == 0) return w;
    double k = 2.0 * std::numbers::pi / p.wavelength;
    double lambda_par = 2.0 * p.distance / (k * w * w);
    double sr2 = rytov_variance(p);
    return w * std::sqrt(1.0 + 1.33 * sr2 * std::pow(lambda_par, 5.0 / 6.0));
}

double beam_spread_loss_db(const LinkParams& p) {
    p.validate();
    double wlt = long_term_spot(p);
    double a = p.rx_aperture_diam / 2.0;
    double eta = 1.0 - std::exp(-2.0 * a * a / (wlt * wlt));
    double loss = -10.0 * std::log10(eta);
    return std::max(loss, 0.0);
}

double accidental_rate(const RateBudget& b) {
    b.validate();
    return b.singles_a * b.singles_b * b.window;
}

double extrapolate_skr(double base_skr, double extra_loss_db) {
    if (base_skr < 0) throw std::invalid_argument("extrapolate_skr: negative base rate");
    return base_skr * std::pow(10.0, -extra_loss_db / 10.0);
}

std::vector<LossPoint> sweep_loss(const LinkParams& base,
                                  const std::vector<double>& distances,
                                  const std::vector<double>& cn2s) {
    if (distances.empty() || cn2s.empty())
        throw std::invalid_argument("sweep_loss: empty grid");
    std::vector<LossPoint> out;
    out.reserve(distances.size() * cn2s.size());
    for (double c : cn2s) {
        for (double d : distances) {
            LinkParams p = base;
            p.distance = d;
            p.cn2 = c;
            out.push_back({d, c, beam_spread_loss_db(p)});
        }
    }
    return out;
}

} // namespace qkd
