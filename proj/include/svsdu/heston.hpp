#pragma once

#include "svsdu/model.hpp"

#include <complex>

namespace svsdu::heston {

struct HestonParams {
    double r = 0.04;
    double kappa = 3.0;
    double theta = 0.05;
    double sigma = 0.4;
    double rho = -0.3;
    double v0 = 0.05;
    double x0 = 100.0;
};

/// Drops the stickiness coefficients and the running extremes.
HestonParams from_model(const ModelParams& p);

HestonParams validate(const HestonParams& p);

/// E[exp(i u ln S_tau)] under Q.
std::complex<double> heston_cf(std::complex<double> u, const HestonParams& p, double tau);

struct Probabilities {
    double p1 = 0.0;  ///< exercise probability under the share measure
    double p2 = 0.0;  ///< exercise probability under Q
};

Probabilities exercise_probabilities(const HestonParams& p, double strike, double tau);

double heston_call(const HestonParams& p, double strike, double tau);
double heston_put(const HestonParams& p, double strike, double tau);

}  // namespace svsdu::heston
