#include "svsdu/calib/calibration.hpp"

#include "svsdu/error.hpp"
#include "svsdu/kv.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>

namespace svsdu::calib {

namespace {

constexpr double kRhoLimit = 0.999;
constexpr double kFellerMargin = 1e-9;

int position(const std::vector<Input>& names, Input in) {
    const auto it = std::find(names.begin(), names.end(), in);
    return it == names.end() ? -1 : static_cast<int>(it - names.begin());
}

double& field(ModelParams& p, Input in) {
    switch (in) {
        case Input::rho: return p.rho;
        case Input::kappa: return p.kappa;
        case Input::theta: return p.theta;
        case Input::sigma: return p.sigma;
        case Input::eta: return p.eta;
        case Input::v: return p.v0;
        case Input::xi: return p.xi;
        case Input::y: return p.y0;
        case Input::z: return p.z0;
        default: break;
    }
    throw Error(ErrorCode::UnknownParameter, "'" + std::string(input_name(in)) + "' is not a calibrated parameter");
}

double rmse_of(const Eigen::VectorXd& r) {
    return r.size() == 0 ? 0.0 : std::sqrt(r.squaredNorm() / static_cast<double>(r.size()));
}

void check_day(const MarketDay& day) {
    if (day.quotes.empty()) throw Error(ErrorCode::EmptyChain, "no quotes for " + day.date);
    if (!(day.spot > 0)) throw Error(ErrorCode::NonPositive, "spot must be positive");
}

bool outside(const DomainBox& box, const RawInputs& raw) {
    for (std::size_t k = 0; k < kInputCount; ++k) {
        if (!box.bounds[k].contains(raw[k])) return true;
    }
    return false;
}

struct NetworkEval {
    Eigen::VectorXd values;   // scaled prices
    Eigen::MatrixXd jac;      // d scaled price / d phi (market units)
    std::size_t out_of_box = 0;
};

NetworkEval evaluate_day(const dgm::NetworkWeights& w, const MarketDay& day, const ModelParams& p, double l,
                         const std::vector<Input>* names) {
    const auto n = static_cast<Eigen::Index>(day.quotes.size());
    std::vector<RawInputs> raws;
    raws.reserve(day.quotes.size());
    NetworkEval out;
    for (const auto& q : day.quotes) {
        raws.push_back(scaled_inputs(p, day, q, l));
        // inputs the network does not read are irrelevant to the box check
        RawInputs probe = raws.back();
        for (std::size_t k = 0; k < kInputCount; ++k) {
            if (w.cfg.position(static_cast<Input>(k)) < 0) probe[k] = w.cfg.input_box.bounds[k].mid();
        }
        if (outside(w.cfg.input_box, probe)) ++out.out_of_box;
    }
    dgm::JetLayout layout;
    if (names != nullptr) layout.dirs = *names;
    const auto ch = dgm::evaluate(w, dgm::prepare_inputs(w.cfg, raws), layout);
    out.values = ch.row(0).transpose();
    if (names != nullptr) {
        out.jac.resize(n, static_cast<Eigen::Index>(names->size()));
        for (std::size_t k = 0; k < names->size(); ++k) {
            const Input in = (*names)[k];
            const double chain = (in == Input::y || in == Input::z) ? 1.0 / l : 1.0;
            out.jac.col(static_cast<Eigen::Index>(k)) = chain * ch.row(static_cast<Eigen::Index>(k) + 1).transpose();
        }
    }
    return out;
}

Eigen::VectorXd market_scaled(const MarketDay& day, double l) {
    Eigen::VectorXd m(static_cast<Eigen::Index>(day.quotes.size()));
    for (std::size_t i = 0; i < day.quotes.size(); ++i) m[static_cast<Eigen::Index>(i)] = day.quotes[i].price / l;
    return m;
}

}  // namespace

std::vector<Input> calibrated_inputs(ModelVariant v) {
    switch (v) {
        case ModelVariant::SVSDU:
            return {Input::rho, Input::kappa, Input::theta, Input::sigma, Input::eta,
                    Input::v,   Input::xi,    Input::y,     Input::z};
        case ModelVariant::SVSD:
            return {Input::rho, Input::kappa, Input::theta, Input::sigma, Input::v, Input::xi, Input::y};
        case ModelVariant::SVSU:
            return {Input::rho, Input::kappa, Input::theta, Input::sigma, Input::eta, Input::v, Input::z};
        case ModelVariant::Heston:
            return {Input::rho, Input::kappa, Input::theta, Input::sigma, Input::v};
    }
    return {};
}

Eigen::VectorXd pack(const ModelParams& p, const std::vector<Input>& names) {
    ModelParams copy = p;
    Eigen::VectorXd phi(static_cast<Eigen::Index>(names.size()));
    for (std::size_t k = 0; k < names.size(); ++k) phi[static_cast<Eigen::Index>(k)] = field(copy, names[k]);
    return phi;
}

ModelParams unpack(const Eigen::VectorXd& phi, const std::vector<Input>& names, ModelParams base) {
    if (phi.size() != static_cast<Eigen::Index>(names.size())) {
        throw Error(ErrorCode::LengthMismatch, "parameter vector does not match the parameter list");
    }
    for (std::size_t k = 0; k < names.size(); ++k) field(base, names[k]) = phi[static_cast<Eigen::Index>(k)];
    return base;
}

Eigen::VectorXd Bounds::clip(const Eigen::VectorXd& phi) const {
    Eigen::VectorXd out = phi;
    for (std::size_t k = 0; k < names.size(); ++k) {
        const auto i = static_cast<Eigen::Index>(k);
        out[i] = std::clamp(out[i], box[k].lo, box[k].hi);
    }
    const int ik = position(names, Input::kappa), it = position(names, Input::theta), is = position(names, Input::sigma);
    if (ik >= 0 && it >= 0 && is >= 0) {
        const double cap = std::sqrt(2.0 * out[ik] * out[it]) * (1.0 - kFellerMargin);
        if (out[is] >= cap) out[is] = std::max(box[static_cast<std::size_t>(is)].lo, cap);
    }
    return out;
}

bool Bounds::contains(const Eigen::VectorXd& phi) const {
    for (std::size_t k = 0; k < names.size(); ++k) {
        if (!box[k].contains(phi[static_cast<Eigen::Index>(k)])) return false;
    }
    return true;
}

Bounds default_bounds(const DomainBox& box, const std::vector<Input>& names, double spot, double l) {
    Bounds b;
    b.names = names;
    for (Input in : names) {
        Interval iv = box[in];
        if (in == Input::rho) {
            iv.lo = std::max(iv.lo, -kRhoLimit);
            iv.hi = std::min(iv.hi, kRhoLimit);
        } else if (in == Input::y) {
            iv = {std::max(iv.lo * l, spot), std::max(iv.hi * l, spot)};
        } else if (in == Input::z) {
            iv = {std::min(iv.lo * l, spot), std::min(iv.hi * l, spot)};
        }
        b.box.push_back(iv);
    }
    return b;
}

void LmSettings::validate() const {
    if (!(lambda0 > 0) || !(lambda_up > 1) || !(lambda_down > 1)) {
        throw Error(ErrorCode::InvalidArgument, "need lambda0 > 0 and lambda factors > 1");
    }
    if (max_outer < 1 || max_consecutive_rejects < 1 || !(stall_tol >= 0)) {
        throw Error(ErrorCode::InvalidArgument, "invalid stopping settings");
    }
}

std::string_view to_string(LmStatus s) noexcept {
    switch (s) {
        case LmStatus::Converged: return "converged";
        case LmStatus::StallStopped: return "stall_stopped";
        case LmStatus::RejectStopped: return "reject_stopped";
        case LmStatus::IterCap: return "iter_cap";
    }
    return "?";
}

LmStatus parse_lm_status(std::string_view s) {
    for (LmStatus st : {LmStatus::Converged, LmStatus::StallStopped, LmStatus::RejectStopped, LmStatus::IterCap}) {
        if (to_string(st) == s) return st;
    }
    throw Error(ErrorCode::ParseError, "unknown status '" + std::string(s) + "'");
}

LmResult levenberg_marquardt(const LmProblem& problem, const Eigen::VectorXd& phi0, const LmSettings& settings) {
    settings.validate();
    const auto project = [&](const Eigen::VectorXd& p) { return problem.project ? problem.project(p) : p; };

    LmResult out;
    out.phi = project(phi0);
    Eigen::VectorXd res;
    Eigen::MatrixXd jac;
    problem.evaluate(out.phi, res, &jac);
    if (!res.allFinite() || !jac.allFinite()) throw Error(ErrorCode::NonFiniteResidual, "residuals at the start are not finite");
    double rmse = rmse_of(res);
    out.rmse_history.push_back(rmse);

    double lambda = settings.lambda0;
    int rejects = 0;
    Eigen::VectorXd trial_res;
    for (out.iterations = 1; out.iterations <= settings.max_outer; ++out.iterations) {
        const Eigen::VectorXd grad = jac.transpose() * res;
        if (rmse == 0.0 || grad.cwiseAbs().maxCoeff() == 0.0) {
            out.status = LmStatus::Converged;
            return out;
        }
        Eigen::MatrixXd normal = jac.transpose() * jac;
        normal.diagonal().array() += lambda;
        const Eigen::LDLT<Eigen::MatrixXd> ldlt(normal);
        Eigen::VectorXd step = ldlt.solve(grad);
        if (ldlt.info() != Eigen::Success || !step.allFinite()) {
            lambda *= settings.lambda_up;
            if (!std::isfinite(lambda) || lambda > 1e300) {
                throw Error(ErrorCode::SingularNormalMatrix, "damping failed to regularize the normal matrix");
            }
            if (++rejects >= settings.max_consecutive_rejects) {
                out.status = LmStatus::RejectStopped;
                return out;
            }
            continue;
        }
        const Eigen::VectorXd raw = out.phi - step;
        if (raw == out.phi) {
            // step below floating-point resolution
            out.status = LmStatus::Converged;
            return out;
        }
        const Eigen::VectorXd trial = project(raw);
        if (trial == out.phi) {
            out.status = LmStatus::StallStopped;
            return out;
        }
        problem.evaluate(trial, trial_res, nullptr);
        const double trial_rmse = trial_res.allFinite() ? rmse_of(trial_res) : INFINITY;
        if (trial_rmse < rmse) {
            const double drop = rmse - trial_rmse;
            out.phi = trial;
            rmse = trial_rmse;
            lambda /= settings.lambda_down;
            rejects = 0;
            ++out.accepted;
            out.rmse_history.push_back(rmse);
            if (drop < settings.stall_tol) {
                out.status = LmStatus::Converged;
                return out;
            }
            problem.evaluate(out.phi, res, &jac);
        } else {
            lambda *= settings.lambda_up;
            if (++rejects >= settings.max_consecutive_rejects) {
                out.status = LmStatus::RejectStopped;
                return out;
            }
        }
    }
    out.iterations = settings.max_outer;
    out.status = LmStatus::IterCap;
    return out;
}

RawInputs scaled_inputs(const ModelParams& p, const MarketDay& day, const Quote& q, double l) {
    ModelParams s = p;
    s.x0 = day.spot / l;
    s.y0 = p.y0 / l;
    s.z0 = p.z0 / l;
    s.r = day.rate;
    ContractSpec c;
    c.strike = q.strike / l;
    c.maturity = q.maturity;
    c.valuation_time = 0.0;
    return make_raw_inputs(s, c);
}

Eigen::VectorXd residual_vector(const dgm::NetworkWeights& w, const MarketDay& day, const ModelParams& phi, double l,
                                std::size_t* out_of_box) {
    check_day(day);
    if (!(l > 0)) throw Error(ErrorCode::NonPositive, "scaling factor must be positive");
    const auto ev = evaluate_day(w, day, phi, l, nullptr);
    if (out_of_box != nullptr) *out_of_box = ev.out_of_box;
    return ev.values - market_scaled(day, l);
}

std::vector<double> model_prices(const dgm::NetworkWeights& w, const MarketDay& day, const ModelParams& phi, double l) {
    check_day(day);
    const auto ev = evaluate_day(w, day, phi, l, nullptr);
    std::vector<double> out(day.quotes.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = l * ev.values[static_cast<Eigen::Index>(i)];
    return out;
}

Metrics metrics(const std::vector<double>& model, const std::vector<double>& market) {
    if (model.size() != market.size() || model.empty()) {
        throw Error(ErrorCode::LengthMismatch, "metrics need equal, non-empty price vectors");
    }
    double abs_sum = 0, mkt_sum = 0;
    for (std::size_t i = 0; i < model.size(); ++i) {
        if (!(market[i] > 0)) throw Error(ErrorCode::NonPositiveMarketPrice, "market prices must be positive");
        abs_sum += std::fabs(model[i] - market[i]);
        mkt_sum += market[i];
    }
    return {abs_sum / mkt_sum, abs_sum / static_cast<double>(model.size())};
}

CalibrationResult lm_calibrate(const dgm::NetworkWeights& w, const MarketDay& day, const ModelParams& phi0,
                               const LmSettings& settings, double l) {
    check_day(day);
    if (!(l > 0)) throw Error(ErrorCode::NonPositive, "scaling factor must be positive");
    const ModelVariant variant = w.cfg.variant;
    const auto names = calibrated_inputs(variant);
    ModelParams base = phi0;
    base.variant = variant;
    base.x0 = day.spot;
    base.r = day.rate;
    const Bounds bounds = default_bounds(w.cfg.input_box, names, day.spot, l);
    const Eigen::VectorXd market = market_scaled(day, l);

    LmProblem problem;
    problem.evaluate = [&](const Eigen::VectorXd& phi, Eigen::VectorXd& res, Eigen::MatrixXd* jac) {
        const auto ev = evaluate_day(w, day, unpack(phi, names, base), l, jac != nullptr ? &names : nullptr);
        res = ev.values - market;
        if (jac != nullptr) *jac = ev.jac;
    };
    problem.project = [&](const Eigen::VectorXd& phi) { return bounds.clip(phi); };

    const auto lm = levenberg_marquardt(problem, pack(base, names), settings);

    CalibrationResult out;
    out.date = day.date;
    out.variant = variant;
    out.params = unpack(lm.phi, names, base);
    out.l = l;
    out.C = day.spot / l;
    out.rmse_history = lm.rmse_history;
    out.rmse = l * lm.rmse_history.back();
    out.status = lm.status;
    out.iterations = lm.iterations;
    out.dd = has_upper_boundary(variant) ? day.spot / out.params.y0 : 1.0;
    out.du = has_lower_boundary(variant) ? day.spot / out.params.z0 : 1.0;
    (void)residual_vector(w, day, out.params, l, &out.out_of_box);
    if (out.out_of_box > 0) {
        out.warnings.push_back("ScaleOutOfBox: " + std::to_string(out.out_of_box) + " quotes leave the training box");
    }
    std::vector<double> mkt(day.quotes.size());
    for (std::size_t i = 0; i < mkt.size(); ++i) mkt[i] = day.quotes[i].price;
    out.in_sample = metrics(model_prices(w, day, out.params, l), mkt);
    return out;
}

ModelParams midpoint_start(const DomainBox& box, ModelVariant v, double spot, double l) {
    ModelParams p;
    p.variant = v;
    p.x0 = spot;
    for (Input in : calibrated_inputs(ModelVariant::SVSDU)) field(p, in) = box[in].mid();
    p.y0 = std::max(box[Input::y].mid() * l, spot);
    p.z0 = std::min(box[Input::z].mid() * l, spot);
    p.rho = std::clamp(p.rho, -kRhoLimit, kRhoLimit);
    const double cap = std::sqrt(2.0 * p.kappa * p.theta) * (1.0 - kFellerMargin);
    if (p.sigma >= cap) p.sigma = 0.5 * cap;
    return p;
}

SearchTrace hill_search(double c_init, double h, int budget, double lo, double hi,
                        const std::function<double(double)>& error) {
    if (!(c_init > lo && c_init < hi)) throw Error(ErrorCode::InvalidArgument, "initial C must lie inside the search range");
    if (!(h > 0) || budget < 1) throw Error(ErrorCode::InvalidArgument, "need h > 0 and a positive budget");
    SearchTrace trace;
    std::map<long, double> memo;
    const auto key = [&](double c) { return std::lround((c - c_init) / h); };
    const auto probe = [&](double c) -> std::optional<double> {
        if (!(c > lo && c < hi)) return std::nullopt;
        const long k = key(c);
        if (const auto it = memo.find(k); it != memo.end()) return it->second;
        if (static_cast<int>(memo.size()) >= budget) {
            trace.budget_exhausted = true;
            return std::nullopt;
        }
        const double e = error(c);
        memo[k] = e;
        trace.probes.emplace_back(c, std::isfinite(e) ? e : INFINITY);
        return memo[k];
    };

    double cur = c_init;
    double cur_err = *probe(cur);
    while (!trace.budget_exhausted) {
        double next = cur, next_err = cur_err;
        for (double c : {cur - h, cur + h}) {
            const auto e = probe(c);
            if (e && *e < next_err) next = c, next_err = *e;
        }
        if (next == cur) break;
        cur = next;
        cur_err = next_err;
    }
    trace.best_c = cur;
    for (const auto& [c, e] : trace.probes) {
        if (e < cur_err) trace.best_c = c, cur_err = e;
    }
    return trace;
}

ScalingResult scaling_search(const dgm::NetworkWeights& w, const MarketDay& day, const ModelParams& phi0, double c_init,
                             const LmSettings& settings, const ScalingOptions& opts) {
    check_day(day);
    if (!(c_init > 0 && c_init < opts.c_max)) throw Error(ErrorCode::InvalidArgument, "C must lie in (0, c_max)");
    std::map<long, CalibrationResult> results;
    const auto key = [&](double c) { return std::lround(c * 1e6); };
    ScalingResult out;
    out.trace = hill_search(c_init, opts.h, opts.budget, 0.0, opts.c_max, [&](double c) {
        const double l = day.spot / c;
        ModelParams start = phi0;
        // keep the starting drawdown/drawup ratios valid in the new units
        const auto names = calibrated_inputs(w.cfg.variant);
        start = unpack(default_bounds(w.cfg.input_box, names, day.spot, l).clip(pack(start, names)), names, start);
        auto res = lm_calibrate(w, day, start, settings, l);
        const double e = res.rmse;
        results.emplace(key(c), std::move(res));
        return e;
    });
    out.best = results.at(key(out.trace.best_c));
    return out;
}

RolledExtremes roll_ratios(double y_prev, double z_prev, double x_prev, double x_curr) {
    if (!(y_prev > 0 && z_prev > 0 && x_prev > 0 && x_curr > 0)) {
        throw Error(ErrorCode::NonPositive, "roll_ratios needs positive inputs");
    }
    if (!(z_prev <= x_prev && x_prev <= y_prev)) throw Error(ErrorCode::OrderingViolation, "need z <= x <= y");
    const double g = x_curr / x_prev;
    return {y_prev * g, z_prev * g};
}

std::string to_kv(const CalibrationResult& r) {
    KvRecord rec;
    rec.set("date", r.date);
    rec.set("variant", std::string(to_string(r.variant)));
    rec.set("C", r.C);
    rec.set("l", r.l);
    rec.set("spot", r.params.x0);
    rec.set("rate", r.params.r);
    for (Input in : calibrated_inputs(r.variant)) {
        ModelParams p = r.params;
        rec.set(std::string(input_name(in)), field(p, in));
    }
    if (has_upper_boundary(r.variant)) rec.set("DD", r.dd);
    if (has_lower_boundary(r.variant)) rec.set("DU", r.du);
    rec.set("rmse", r.rmse);
    rec.set("ape", r.in_sample.ape);
    rec.set("aae", r.in_sample.aae);
    rec.set("status", std::string(to_string(r.status)));
    rec.set("iterations", static_cast<double>(r.iterations));
    rec.set("out_of_box", static_cast<double>(r.out_of_box));
    return rec.str();
}

CalibrationResult calibration_result_from_kv(std::string_view text) {
    const auto rec = KvRecord::parse(text);
    CalibrationResult r;
    r.date = rec.get_string("date", "");
    r.variant = parse_variant(rec.get_string("variant", "SVSDU"));
    r.params.variant = r.variant;
    r.C = rec.get_double("C");
    r.l = rec.get_double("l");
    r.params.x0 = rec.get_double("spot");
    r.params.r = rec.get_double("rate");
    for (Input in : calibrated_inputs(r.variant)) field(r.params, in) = rec.get_double(std::string(input_name(in)));
    r.dd = rec.get_double("DD", 1.0);
    r.du = rec.get_double("DU", 1.0);
    r.rmse = rec.get_double("rmse");
    r.in_sample = {rec.get_double("ape"), rec.get_double("aae")};
    r.status = parse_lm_status(rec.get_string("status", "iter_cap"));
    r.iterations = static_cast<int>(rec.get_int("iterations", 0));
    r.out_of_box = static_cast<std::size_t>(rec.get_int("out_of_box", 0));
    return r;
}

}  // namespace svsdu::calib
