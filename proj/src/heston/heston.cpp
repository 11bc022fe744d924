#include "svsdu/heston.hpp"

#include "svsdu/error.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <numbers>

namespace svsdu::heston {

namespace {

using cd = std::complex<double>;

constexpr double kTailTol = 1e-10;
constexpr double kMaxFrequency = 1e6;

// log(1 + z) accurate for small |z| (Kahan's trick applied to complex values).
cd log1p_c(cd z) {
    const cd w = 1.0 + z;
    if (w == 1.0) return z;
    return std::log(w) * z / (w - 1.0);
}

cd expm1_neg(cd x) {
    // 1 - exp(-x)
    if (std::abs(x) < 1e-5) return x - 0.5 * x * x + x * x * x / 6.0;
    return 1.0 - std::exp(-x);
}

}  // namespace

HestonParams from_model(const ModelParams& p) {
    return HestonParams{p.r, p.kappa, p.theta, p.sigma, p.rho, p.v0, p.x0};
}

HestonParams validate(const HestonParams& p) {
    for (double v : {p.r, p.kappa, p.theta, p.sigma, p.rho, p.v0, p.x0}) {
        if (!std::isfinite(v)) throw Error(ErrorCode::InvalidArgument, "parameters must be finite");
    }
    if (!(p.v0 > 0.0) || !(p.x0 > 0.0) || !(p.kappa > 0.0) || !(p.theta > 0.0) || p.sigma < 0.0) {
        throw Error(ErrorCode::NonPositive, "v0, x0, kappa, theta must be > 0 and sigma >= 0");
    }
    if (p.rho < -1.0 || p.rho > 1.0) throw Error(ErrorCode::CorrelationOutOfRange, "rho must lie in [-1, 1]");
    if (!(2.0 * p.kappa * p.theta > p.sigma * p.sigma)) {
        throw Error(ErrorCode::FellerViolation, "2*kappa*theta must exceed sigma^2");
    }
    return p;
}

std::complex<double> heston_cf(std::complex<double> u, const HestonParams& p, double tau) {
    if (!(tau > 0.0)) throw Error(ErrorCode::InvalidArgument, "horizon must be positive");
    if (u == 0.0) return 1.0;
    const cd i(0.0, 1.0);
    const cd iu = i * u;
    const cd q = iu + u * u;  // i u + u^2
    const cd drift = iu * (std::log(p.x0) + p.r * tau);
    const double s2 = p.sigma * p.sigma;

    cd c, d_coef;
    if (s2 == 0.0) {
        const cd a = -q / (2.0 * p.kappa);
        const cd decay = expm1_neg(cd(p.kappa * tau));
        d_coef = a * decay;
        c = p.kappa * p.theta * a * tau - p.theta * a * decay;
    } else {
        const cd b = p.kappa - p.rho * p.sigma * iu;
        cd d = std::sqrt(b * b + s2 * q);
        if (d.real() < 0.0) d = -d;
        const cd bpd = b + d;
        const cd bmd = -s2 * q / bpd;  // b - d without cancellation
        const cd g = bmd / bpd;
        const cd edt = std::exp(-d * tau);
        const cd one_m_edt = expm1_neg(d * tau);
        // log((1 - g e^{-d tau}) / (1 - g))
        const cd log_ratio = log1p_c(-g * edt) - log1p_c(-g);
        c = p.kappa * p.theta / s2 * (bmd * tau - 2.0 * log_ratio);
        d_coef = bmd / s2 * one_m_edt / (1.0 - g * edt);
    }
    const cd out = std::exp(drift + c + d_coef * p.v0);
    if (!std::isfinite(out.real()) || !std::isfinite(out.imag())) {
        throw Error(ErrorCode::NonFinite, "characteristic function is not finite");
    }
    return out;
}

Probabilities exercise_probabilities(const HestonParams& p_in, double strike, double tau) {
    const HestonParams p = validate(p_in);
    if (!(strike > 0.0)) throw Error(ErrorCode::NonPositive, "strike must be > 0");
    if (!(tau > 0.0)) throw Error(ErrorCode::InvalidArgument, "horizon must be positive");

    const cd i(0.0, 1.0);
    const double lk = std::log(strike);
    const double forward = p.x0 * std::exp(p.r * tau);

    auto integrand = [&](double u, int which) {
        const cd phi = which == 1 ? heston_cf(cd(u, -1.0), p, tau) / forward : heston_cf(cd(u, 0.0), p, tau);
        return (std::exp(-i * u * lk) * phi / (i * u)).real();
    };
    auto envelope = [&](double u) {
        return std::max(std::abs(heston_cf(cd(u, -1.0), p, tau)) / forward, std::abs(heston_cf(cd(u, 0.0), p, tau))) / u;
    };

    using boost::math::quadrature::gauss_kronrod;
    double sums[2] = {0.0, 0.0};
    double a = 0.0;
    double width = 5.0;
    int quiet = 0;
    while (true) {
        const double b = a + width;
        double chunk_max = 0.0;
        for (int w = 0; w < 2; ++w) {
            double err = 0.0;
            const double v = gauss_kronrod<double, 61>::integrate([&](double u) { return integrand(u, w + 1); }, a, b,
                                                                  12, 1e-13, &err);
            if (!std::isfinite(v) || err > 1e-9) {
                throw Error(ErrorCode::QuadratureFailure, "Fourier integral did not converge");
            }
            sums[w] += v;
            chunk_max = std::max(chunk_max, std::abs(v));
        }
        a = b;
        quiet = (chunk_max < kTailTol && envelope(a) < kTailTol) ? quiet + 1 : 0;
        if (quiet >= 2) break;
        if (a > kMaxFrequency) throw Error(ErrorCode::QuadratureFailure, "characteristic function decays too slowly");
        width *= 1.5;
    }
    Probabilities out;
    out.p1 = 0.5 + sums[0] / std::numbers::pi;
    out.p2 = 0.5 + sums[1] / std::numbers::pi;
    return out;
}

double heston_call(const HestonParams& p, double strike, double tau) {
    const auto pr = exercise_probabilities(p, strike, tau);
    return p.x0 * pr.p1 - strike * std::exp(-p.r * tau) * pr.p2;
}

double heston_put(const HestonParams& p, double strike, double tau) {
    const auto pr = exercise_probabilities(p, strike, tau);
    return strike * std::exp(-p.r * tau) * (1.0 - pr.p2) - p.x0 * (1.0 - pr.p1);
}

}  // namespace svsdu::heston
