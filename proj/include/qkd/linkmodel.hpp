#pragma once

#include <vector>

namespace qkd {

// Free-space optical channel parameters. Units are SI throughout.
struct LinkParams {
    double wavelength = 810e-9;     // m
    double waist = 0.04;            // m, transmitter 1/e^2 intensity radius
    double distance = 1700.0;       // m
    double cn2 = 1e-15;             // m^(-2/3), refractive index structure parameter
    double rx_aperture_diam = 0.200; // m

    void validate() const; // throws std::invalid_argument
};

struct RateBudget {
    double singles_a = 0; // counts/s
    double singles_b = 0; // counts/s
    double coinc = 0;     // counts/s
    double window = 1e-9; // s, full coincidence window width
    double noise_a = 0;   // counts/s
    double noise_b = 0;   // counts/s

    void validate() const;
};

// sigma_R^2 = 1.23 Cn2 k^(7/6) L^(11/6), k = 2 pi / lambda
double rytov_variance(const LinkParams& p);

// Diffraction spot W(L) = W0 sqrt(1 + (L/z_R)^2), z_R = pi W0^2 / lambda.
double diffraction_spot(const LinkParams& p);

// Long-term turbulent spot W_LT = W(L) sqrt(1 + 1.33 sigma_R^2 Lambda^(5/6)),
// Lambda = 2L / (k W(L)^2).
double long_term_spot(const LinkParams& p);

// Aperture capture loss -10 log10(1 - exp(-2 a^2 / W_LT^2)), clamped >= 0.
double beam_spread_loss_db(const LinkParams& p);

// accidental coincidence rate = singles_a * singles_b * window
double accidental_rate(const RateBudget& b);

// base_skr * 10^(-extra_loss_db / 10)
double extrapolate_skr(double base_skr, double extra_loss_db);

struct LossPoint {
    double distance; // m
    double cn2;      // m^(-2/3)
    double loss_db;
};

std::vector<LossPoint> sweep_loss(const LinkParams& base,
                                  const std::vector<double>& distances,
                                  const std::vector<double>& cn2s);

} // namespace qkd
