#include "svsdu/ctmc.hpp"

#include "svsdu/error.hpp"
#include "svsdu/rng.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <numeric>
#include <thread>

namespace svsdu::ctmc {

namespace {

constexpr unsigned kMinusShift = 8;

bool is_sticky(int k) { return k == kLnDd || k == kLnDu; }

// Boundary value and the sign of a move that approaches it.
struct Constraint {
    int coord;
    double boundary;
    double toward;  // +1: approached by increasing the coordinate
};

int collect_constraints(const ClampOptions& o, std::array<Constraint, 3>& out) {
    int n = 0;
    if (o.upper) out[n++] = {kLnDd, 0.0, +1.0};
    if (o.lower) out[n++] = {kLnDu, 0.0, -1.0};
    if (o.variance) out[n++] = {kVar, kVarianceFloor, -1.0};
    return n;
}

double coord_of(const CtmcState& s, int k) {
    switch (k) {
        case kLnDd: return s.ln_dd;
        case kLnDu: return s.ln_du;
        case kVar: return s.v;
        case kLnMax: return s.ln_smax;
        default: return s.ln_smin;
    }
}

/// Eigenpairs of the covariance at unit variance. Both A and G-hat are linear
/// in V, so the eigenvectors are V-independent and eigenvalues scale with V.
struct UnitSpectrum {
    std::vector<EigenPair> interior;
    std::vector<EigenPair> boundary;
};

UnitSpectrum unit_spectrum(const ModelParams& p) {
    CtmcState unit;
    unit.v = 1.0;
    ModelParams q = p;
    if (q.xi <= 0.0) q.xi = 1.0;  // beta-hat is not needed here
    if (q.eta <= 0.0) q.eta = 1.0;
    UnitSpectrum out;
    out.interior = eigendecompose_covariance(drift_and_covariance(unit, q, Regime::Interior).covariance);
    out.boundary = eigendecompose_covariance(drift_and_covariance(unit, q, Regime::AtMax).covariance);
    return out;
}

Vec5 drift_vector(const CtmcState& s, const ModelParams& p, Regime reg) {
    const double mean_rev = p.kappa * (p.theta - s.v);
    if (reg == Regime::Interior) {
        return Vec5(-0.5 * s.v, -0.5 * s.v, mean_rev, p.r, p.r);
    }
    const double push_max = reg == Regime::AtMax ? 1.0 / p.xi : 0.0;
    const double push_min = reg == Regime::AtMin ? 1.0 / p.eta : 0.0;
    return Vec5(-push_max, push_min, mean_rev, push_max + p.r, -push_min + p.r);
}

// Fills `out` with the transitions for the current state. Returns the count.
int fill_transitions(const CtmcState& s, const ModelParams& p, Regime reg, double h,
                     const std::vector<EigenPair>& unit_pairs, double variance_scale,
                     const ClampOptions& one_sided, const ClampOptions& two_sided,
                     std::array<Transition, 11>& out) {
    int n = 0;
    const Vec5 drift = drift_vector(s, p, reg);
    const ClampResult dc = clamp_step(s, drift, h, one_sided);
    if (dc.step > 0.0) {
        out[n++] = Transition{drift, dc.step, 1.0 / dc.step, dc.landing_mask & 0xffu};
    }
    for (const auto& ep : unit_pairs) {
        const double lambda = ep.lambda * variance_scale;
        if (!(lambda > 0.0)) continue;
        const ClampResult c = clamp_step(s, ep.vector, h, two_sided);
        if (!(c.step > 0.0)) continue;
        const double rate = lambda / (2.0 * c.step * c.step);
        out[n++] = Transition{-ep.vector, c.step, rate, (c.landing_mask >> kMinusShift) & 0xffu};
        out[n++] = Transition{ep.vector, c.step, rate, c.landing_mask & 0xffu};
    }
    return n;
}

void apply_transition(CtmcState& s, const Transition& tr, std::int64_t& floor_landings) {
    Vec5 c = s.coords();
    const Vec5 before = c;
    c += tr.step * tr.direction;
    if (tr.landing_mask & (1u << kLnDd)) c[kLnDd] = 0.0;
    if (tr.landing_mask & (1u << kLnDu)) c[kLnDu] = 0.0;
    if (tr.landing_mask & (1u << kVar)) {
        c[kVar] = kVarianceFloor;
        ++floor_landings;
    }
    s.ln_s += (c[kLnMax] - before[kLnMax]) + (c[kLnDd] - before[kLnDd]);
    s.set_coords(c);
}

}  // namespace

double CtmcState::asset() const { return std::exp(ln_smax + ln_dd); }

CtmcState initial_state(const ModelParams& p) {
    CtmcState s;
    const bool upper = has_upper_boundary(p.variant);
    const bool lower = has_lower_boundary(p.variant);
    // Untracked extremes start at the asset value; their log ratios float freely.
    const double y0 = upper ? p.y0 : p.x0;
    const double z0 = lower ? p.z0 : p.x0;
    s.ln_dd = upper && p.x0 == y0 ? 0.0 : std::log(p.x0 / y0);
    s.ln_du = lower && p.x0 == z0 ? 0.0 : std::log(p.x0 / z0);
    s.v = p.v0;
    s.ln_smax = std::log(y0);
    s.ln_smin = std::log(z0);
    s.ln_s = std::log(p.x0);
    s.clock = 0.0;
    return s;
}

Regime regime_of(const CtmcState& s, ModelVariant variant) {
    if (has_upper_boundary(variant) && s.ln_dd == 0.0) return Regime::AtMax;
    if (has_lower_boundary(variant) && s.ln_du == 0.0) return Regime::AtMin;
    return Regime::Interior;
}

DriftCovariance drift_and_covariance(const CtmcState& s, const ModelParams& p, Regime reg) {
    if (!(s.v > 0.0)) throw Error(ErrorCode::NonPositiveVariance, "variance must stay positive");
    if (reg == Regime::AtMax && !(p.xi > 0.0)) {
        throw Error(ErrorCode::InvalidArgument, "boundary drift needs xi > 0");
    }
    if (reg == Regime::AtMin && !(p.eta > 0.0)) {
        throw Error(ErrorCode::InvalidArgument, "boundary drift needs eta > 0");
    }
    DriftCovariance out;
    out.drift = drift_vector(s, p, reg);
    out.covariance.setZero();
    const double sv = std::sqrt(s.v);
    if (reg == Regime::Interior) {
        Eigen::Matrix<double, 5, 3> loadings = Eigen::Matrix<double, 5, 3>::Zero();
        loadings(kLnDd, 0) = sv;
        loadings(kLnDu, 0) = sv;
        loadings(kVar, 0) = p.sigma * sv * p.rho;
        loadings(kVar, 1) = p.sigma * sv * std::sqrt(std::max(0.0, 1.0 - p.rho * p.rho));
        out.covariance = loadings * loadings.transpose();
    } else {
        out.covariance(kVar, kVar) = p.sigma * p.sigma * s.v;
    }
    return out;
}

std::vector<EigenPair> eigendecompose_covariance(const Mat5& a) {
    const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
    if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
        throw Error(ErrorCode::NotSymmetric, "covariance matrix is not symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Mat5> solver(a);
    const Vec5 values = solver.eigenvalues();
    if (values.minCoeff() < -1e-10 * scale) {
        throw Error(ErrorCode::NegativeEigenvalue, "covariance matrix is not positive semi-definite");
    }
    const double max_lambda = values.maxCoeff();
    std::vector<EigenPair> out;
    if (!(max_lambda > 0.0)) return out;
    const double tol = 1e-14 * max_lambda;
    // largest first
    for (int i = 4; i >= 0; --i) {
        if (values[i] < tol) continue;
        out.push_back(EigenPair{values[i], solver.eigenvectors().col(i)});
    }
    return out;
}

ClampOptions clamp_options_for(ModelVariant variant, bool two_sided) {
    ClampOptions o;
    o.upper = has_upper_boundary(variant);
    o.lower = has_lower_boundary(variant);
    o.variance = true;
    o.two_sided = two_sided;
    return o;
}

ClampResult clamp_step(const CtmcState& s, const Vec5& u, double h, const ClampOptions& opts) {
    if (!(h > 0.0)) throw Error(ErrorCode::InvalidArgument, "base step must be positive");
    std::array<Constraint, 3> cons{};
    const int n = collect_constraints(opts, cons);

    ClampResult out;
    out.step = h;
    std::array<double, 3> ratio{};
    for (int k = 0; k < n; ++k) {
        ratio[k] = h;
        const auto& c = cons[k];
        const double uk = u[c.coord];
        if (uk == 0.0) continue;
        const bool plus_approaches = uk * c.toward > 0.0;
        if (!opts.two_sided && !plus_approaches) continue;
        const double dist = std::abs(coord_of(s, c.coord) - c.boundary);
        const double r = dist / std::abs(uk);
        if (r == 0.0 && is_sticky(c.coord)) {
            throw Error(ErrorCode::ZeroStep, "direction moves along a boundary the state sits on");
        }
        ratio[k] = r;
        out.step = std::min(out.step, r);
    }
    for (int k = 0; k < n; ++k) {
        const auto& c = cons[k];
        const double uk = u[c.coord];
        if (uk == 0.0 || ratio[k] != out.step || out.step == h) continue;
        const bool plus_approaches = uk * c.toward > 0.0;
        if (plus_approaches) {
            out.landing_mask |= 1u << c.coord;
        } else if (opts.two_sided) {
            out.landing_mask |= 1u << (c.coord + kMinusShift);
        }
    }
    // A binding distance exactly equal to h still lands on the boundary.
    for (int k = 0; k < n && out.step == h; ++k) {
        const auto& c = cons[k];
        const double uk = u[c.coord];
        if (uk == 0.0 || ratio[k] != h) continue;
        const double dist = std::abs(coord_of(s, c.coord) - c.boundary);
        if (dist / std::abs(uk) != h) continue;
        const bool plus_approaches = uk * c.toward > 0.0;
        if (plus_approaches) {
            out.landing_mask |= 1u << c.coord;
        } else if (opts.two_sided) {
            out.landing_mask |= 1u << (c.coord + kMinusShift);
        }
    }
    return out;
}

double TransitionScheme::total_rate() const {
    double total = 0.0;
    for (const auto& t : transitions) total += t.rate;
    return total;
}

TransitionScheme build_transitions(const CtmcState& s, const ModelParams& p, double h) {
    const Regime reg = regime_of(s, p.variant);
    const DriftCovariance dc = drift_and_covariance(s, p, reg);
    const auto pairs = eigendecompose_covariance(dc.covariance);
    std::array<Transition, 11> buf{};
    const int n = fill_transitions(s, p, reg, h, pairs, 1.0, clamp_options_for(p.variant, false),
                                   clamp_options_for(p.variant, true), buf);
    TransitionScheme scheme;
    scheme.transitions.assign(buf.begin(), buf.begin() + n);
    return scheme;
}

PathResult simulate_path(const ModelParams& p, double horizon, const SimulationOptions& opts,
                         std::uint64_t seed, std::uint64_t path_index) {
    if (!(opts.h > 0.0)) throw Error(ErrorCode::InvalidArgument, "base step must be positive");
    if (!(horizon >= 0.0)) throw Error(ErrorCode::InvalidArgument, "horizon must be non-negative");

    Rng rng(seed, path_index);
    const UnitSpectrum spectrum = unit_spectrum(p);
    const ClampOptions one_sided = clamp_options_for(p.variant, false);
    const ClampOptions two_sided = clamp_options_for(p.variant, true);

    PathResult res;
    CtmcState s = initial_state(p);
    std::array<Transition, 11> buf{};

    auto record = [&](Regime reg) {
        if (opts.record_path) {
            res.path.push_back(PathRecord{s.clock, s.ln_dd, s.ln_du, s.v, s.ln_smax, s.ln_smin, reg});
        }
    };

    while (s.clock < horizon) {
        const Regime reg = regime_of(s, p.variant);
        record(reg);
        if (++res.steps > opts.max_steps) {
            throw Error(ErrorCode::StepBudgetExceeded, "path exceeded the step budget");
        }
        // Zero stickiness: the boundary is left instantly by a reflection of size h.
        if (reg == Regime::AtMax && p.xi == 0.0) {
            s.ln_dd -= opts.h;
            s.ln_smax += opts.h;
            continue;
        }
        if (reg == Regime::AtMin && p.eta == 0.0) {
            s.ln_du += opts.h;
            s.ln_smin -= opts.h;
            continue;
        }

        const auto& pairs = reg == Regime::Interior ? spectrum.interior : spectrum.boundary;
        const int n = fill_transitions(s, p, reg, opts.h, pairs, s.v, one_sided, two_sided, buf);
        double total = 0.0;
        for (int i = 0; i < n; ++i) total += buf[i].rate;
        if (!(total > 0.0) || !std::isfinite(total)) {
            throw Error(ErrorCode::ZeroStep, "no admissible transition from the current state");
        }

        const double hold = rng.exponential() / total;
        const double remaining = horizon - s.clock;
        const double elapsed = std::min(hold, remaining);
        if (reg == Regime::AtMax) res.time_at_max += elapsed;
        if (reg == Regime::AtMin) res.time_at_min += elapsed;
        if (hold >= remaining) {
            s.clock = horizon;
            break;
        }
        s.clock += hold;

        // smallest index whose cumulative probability exceeds U
        const double u = rng.uniform() * total;
        double cum = 0.0;
        int pick = n - 1;
        for (int i = 0; i < n; ++i) {
            cum += buf[i].rate;
            if (u < cum) {
                pick = i;
                break;
            }
        }
        apply_transition(s, buf[pick], res.floor_landings);

        if (s.ln_dd > 0.0 && one_sided.upper) {
            throw Error(ErrorCode::InvalidArgument, "internal: drawdown crossed its boundary");
        }
        if (s.ln_du < 0.0 && one_sided.lower) {
            throw Error(ErrorCode::InvalidArgument, "internal: drawup crossed its boundary");
        }
    }
    record(regime_of(s, p.variant));

    const double via_max = s.ln_smax + s.ln_dd;
    const double via_min = s.ln_smin + s.ln_du;
    const double tol = 1e-9 * static_cast<double>(std::max<std::int64_t>(1, res.steps));
    if (std::abs(via_max - via_min) > tol || std::abs(via_max - s.ln_s) > tol) {
        throw Error(ErrorCode::InvalidArgument, "internal: asset reconstructions disagree");
    }
    res.terminal = s;
    return res;
}

namespace {

template <class Fn>
void for_each_path(std::int64_t n_paths, unsigned threads, Fn&& fn) {
    unsigned workers = threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : threads;
    workers = static_cast<unsigned>(std::min<std::int64_t>(workers, std::max<std::int64_t>(1, n_paths)));
    if (workers <= 1) {
        for (std::int64_t i = 0; i < n_paths; ++i) fn(i);
        return;
    }
    std::atomic<std::int64_t> next{0};
    std::vector<std::thread> pool;
    std::exception_ptr failure;
    std::atomic<bool> failed{false};
    std::mutex failure_mutex;
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            try {
                for (std::int64_t i = next++; i < n_paths && !failed; i = next++) fn(i);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failed.exchange(true)) failure = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

McPrice mean_and_error(const std::vector<double>& xs, double scale) {
    // fixed-order summation keeps the result independent of the worker count
    const auto n = static_cast<double>(xs.size());
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= n;
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    const double sd = std::sqrt(ss / (n - 1.0));
    return McPrice{scale * mean, scale * sd / std::sqrt(n)};
}

// Per-path counts are kept so the totals do not depend on the worker count.
struct FloorTally {
    std::vector<std::int64_t> landings, steps;

    explicit FloorTally(std::int64_t n) : landings(static_cast<std::size_t>(n)), steps(static_cast<std::size_t>(n)) {}

    void record(std::int64_t i, const PathResult& r) {
        landings[static_cast<std::size_t>(i)] = r.floor_landings;
        steps[static_cast<std::size_t>(i)] = r.steps;
    }

    void check() const {
        const auto l = std::accumulate(landings.begin(), landings.end(), std::int64_t{0});
        const auto n = std::accumulate(steps.begin(), steps.end(), std::int64_t{0});
        if (l * 1000 > n) {
            throw Error(ErrorCode::VarianceFloorBudget, "variance hit its floor on " + std::to_string(l) + " of " +
                                                            std::to_string(n) + " steps; reduce h");
        }
    }
};

void check_config(const McConfig& cfg) {
    if (cfg.n_paths < 2) throw Error(ErrorCode::InvalidArgument, "need at least two paths");
    if (!(cfg.h > 0.0)) throw Error(ErrorCode::InvalidArgument, "base step must be positive");
}

}  // namespace

std::vector<double> simulate_terminal_assets(const ModelParams& p, double horizon, const McConfig& cfg) {
    validate_params(p);
    check_config(cfg);
    std::vector<double> out(static_cast<std::size_t>(cfg.n_paths));
    SimulationOptions opts;
    opts.h = cfg.h;
    opts.max_steps = cfg.max_steps;
    FloorTally tally(cfg.n_paths);
    for_each_path(cfg.n_paths, cfg.threads, [&](std::int64_t i) {
        const auto res = simulate_path(p, horizon, opts, cfg.seed, static_cast<std::uint64_t>(i));
        out[static_cast<std::size_t>(i)] = res.terminal.asset();
        tally.record(i, res);
    });
    tally.check();
    return out;
}

McPrice mc_price(const ModelParams& p, const ContractSpec& c, const McConfig& cfg) {
    validate_contract(c);
    const double tau = c.tau();
    if (tau == 0.0) return McPrice{payoff(p.x0, c.strike), 0.0};
    const auto assets = simulate_terminal_assets(p, tau, cfg);
    std::vector<double> pay(assets.size());
    std::transform(assets.begin(), assets.end(), pay.begin(), [&](double s) { return payoff(s, c.strike); });
    return mean_and_error(pay, std::exp(-p.r * tau));
}

McStatistics mc_statistics(const ModelParams& p, const ContractSpec& c, const McConfig& cfg) {
    validate_contract(c);
    const double tau = c.tau();
    const auto assets = simulate_terminal_assets(p, tau, cfg);
    const double disc = std::exp(-p.r * tau);
    std::vector<double> call(assets.size()), put(assets.size()), diff(assets.size());
    for (std::size_t i = 0; i < assets.size(); ++i) {
        call[i] = payoff(assets[i], c.strike);
        put[i] = payoff(c.strike, assets[i]);
        diff[i] = call[i] - put[i];
    }
    McStatistics st;
    st.call = mean_and_error(call, disc);
    st.put = mean_and_error(put, disc);
    st.discounted_asset = mean_and_error(assets, disc);
    st.parity_standard_error = mean_and_error(diff, disc).standard_error;
    return st;
}

OccupationFractions occupation_fractions(const ModelParams& p, double horizon, const McConfig& cfg) {
    validate_params(p);
    check_config(cfg);
    if (!(horizon > 0.0)) throw Error(ErrorCode::InvalidArgument, "horizon must be positive");
    std::vector<double> at_max(static_cast<std::size_t>(cfg.n_paths));
    std::vector<double> at_min(at_max.size());
    SimulationOptions opts;
    opts.h = cfg.h;
    opts.max_steps = cfg.max_steps;
    FloorTally tally(cfg.n_paths);
    for_each_path(cfg.n_paths, cfg.threads, [&](std::int64_t i) {
        const auto res = simulate_path(p, horizon, opts, cfg.seed, static_cast<std::uint64_t>(i));
        at_max[static_cast<std::size_t>(i)] = res.time_at_max / horizon;
        at_min[static_cast<std::size_t>(i)] = res.time_at_min / horizon;
        tally.record(i, res);
    });
    tally.check();
    return OccupationFractions{mean_and_error(at_max, 1.0).price, mean_and_error(at_min, 1.0).price};
}

void write_path_csv(const std::vector<PathRecord>& path, const std::string& file, char delim) {
    std::ofstream out(file);
    if (!out) throw Error(ErrorCode::Io, "cannot open " + file);
    out.precision(17);
    out << "clock" << delim << "ln_dd" << delim << "ln_du" << delim << "v" << delim << "ln_smax" << delim
        << "ln_smin" << delim << "regime\n";
    for (const auto& r : path) {
        const char* reg = r.regime == Regime::Interior ? "interior" : r.regime == Regime::AtMax ? "at_max" : "at_min";
        out << r.clock << delim << r.ln_dd << delim << r.ln_du << delim << r.v << delim << r.ln_smax << delim
            << r.ln_smin << delim << reg << '\n';
    }
}

}  // namespace svsdu::ctmc
