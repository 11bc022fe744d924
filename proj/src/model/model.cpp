#include "svsdu/model.hpp"

#include "svsdu/error.hpp"
#include "svsdu/kv.hpp"

#include <cmath>
#include <string>

namespace svsdu {

namespace {

constexpr std::array<std::string_view, kInputCount> kInputNames = {
    "t", "x", "y", "z", "v", "K", "r", "rho", "kappa", "theta", "sigma", "eta", "T", "xi"};

void require_positive(double v, const char* name) {
    if (!(v > 0.0)) throw Error(ErrorCode::NonPositive, std::string(name) + " must be > 0");
}

void require_non_negative(double v, const char* name) {
    if (!(v >= 0.0)) throw Error(ErrorCode::NonPositive, std::string(name) + " must be >= 0");
}

}  // namespace

std::string_view to_string(ModelVariant v) noexcept {
    switch (v) {
        case ModelVariant::SVSDU: return "SVSDU";
        case ModelVariant::SVSD: return "SVSD";
        case ModelVariant::SVSU: return "SVSU";
        case ModelVariant::Heston: return "Heston";
    }
    return "SVSDU";
}

ModelVariant parse_variant(std::string_view name) {
    for (auto v : {ModelVariant::SVSDU, ModelVariant::SVSD, ModelVariant::SVSU, ModelVariant::Heston}) {
        if (name == to_string(v)) return v;
    }
    if (name == "svsdu") return ModelVariant::SVSDU;
    if (name == "svsd") return ModelVariant::SVSD;
    if (name == "svsu") return ModelVariant::SVSU;
    if (name == "heston") return ModelVariant::Heston;
    throw Error(ErrorCode::ParseError, "unknown model variant '" + std::string(name) + "'");
}

ModelParams validate_params(const ModelParams& p) {
    for (double v : {p.r, p.kappa, p.theta, p.sigma, p.rho, p.xi, p.eta, p.v0, p.x0, p.y0, p.z0}) {
        if (!std::isfinite(v)) throw Error(ErrorCode::InvalidArgument, "parameters must be finite");
    }
    require_positive(p.v0, "v0");
    require_positive(p.x0, "x0");
    require_positive(p.kappa, "kappa");
    require_positive(p.theta, "theta");
    require_non_negative(p.sigma, "sigma");

    const bool upper = has_upper_boundary(p.variant);
    const bool lower = has_lower_boundary(p.variant);
    if (upper) {
        require_non_negative(p.xi, "xi");
        require_positive(p.y0, "y0");
    }
    if (lower) {
        require_non_negative(p.eta, "eta");
        require_positive(p.z0, "z0");
    }
    if (p.rho < -1.0 || p.rho > 1.0) {
        throw Error(ErrorCode::CorrelationOutOfRange, "rho must lie in [-1, 1]");
    }
    if (!(2.0 * p.kappa * p.theta > p.sigma * p.sigma)) {
        throw Error(ErrorCode::FellerViolation, "2*kappa*theta must exceed sigma^2");
    }
    if (upper && p.x0 > p.y0) {
        throw Error(ErrorCode::OrderingViolation, "x0 must not exceed the running maximum y0");
    }
    if (lower && p.z0 > p.x0) {
        throw Error(ErrorCode::OrderingViolation, "running minimum z0 must not exceed x0");
    }
    if (upper && lower && p.y0 == p.z0) {
        throw Error(ErrorCode::OrderingViolation, "running maximum and minimum coincide");
    }
    return p;
}

void validate_contract(const ContractSpec& c) {
    require_positive(c.strike, "strike");
    if (!(c.valuation_time >= 0.0) || !(c.valuation_time <= c.maturity)) {
        throw Error(ErrorCode::InvalidArgument, "valuation time must lie in [0, maturity]");
    }
}

std::string_view input_name(Input i) noexcept {
    return kInputNames[static_cast<std::size_t>(idx(i))];
}

Input parse_input(std::string_view name) {
    for (std::size_t k = 0; k < kInputCount; ++k) {
        if (kInputNames[k] == name) return static_cast<Input>(k);
    }
    throw Error(ErrorCode::UnknownParameter, "unknown input '" + std::string(name) + "'");
}

DomainBox DomainBox::defaults() {
    DomainBox b;
    b[Input::t] = {0.0, 1.1};
    b[Input::x] = {1.0, 230.0};
    b[Input::y] = {51.0, 230.0};
    b[Input::z] = {1.0, 130.0};
    b[Input::v] = {0.01, 0.16};
    b[Input::K] = {50.0, 131.0};
    b[Input::r] = {0.01, 0.3};
    b[Input::rho] = {-1.0, 1.0};
    b[Input::kappa] = {0.01, 5.0};
    b[Input::theta] = {0.01, 1.0};
    b[Input::sigma] = {0.01, std::sqrt(10.0)};
    b[Input::eta] = {0.01, 10.0};
    b[Input::T] = {7.0 / 365.0, 1.1};
    b[Input::xi] = {0.01, 10.0};
    return b;
}

void DomainBox::validate() const {
    for (std::size_t k = 0; k < kInputCount; ++k) {
        if (!(bounds[k].hi > bounds[k].lo)) {
            throw Error(ErrorCode::DegenerateBox,
                        "box for input '" + std::string(kInputNames[k]) + "' has hi <= lo");
        }
    }
}

NormalizedInputs normalize_inputs(const RawInputs& raw, const DomainBox& box) {
    box.validate();
    NormalizedInputs out;
    for (std::size_t k = 0; k < kInputCount; ++k) {
        out.values[k] = normalize(raw[k], box.bounds[k]);
        out.outside[k] = !box.bounds[k].contains(raw[k]);
    }
    return out;
}

RawInputs denormalize_inputs(const RawInputs& normalized, const DomainBox& box) {
    box.validate();
    RawInputs raw{};
    for (std::size_t k = 0; k < kInputCount; ++k) raw[k] = denormalize(normalized[k], box.bounds[k]);
    return raw;
}

RawInputs make_raw_inputs(const ModelParams& p, const ContractSpec& c) {
    RawInputs raw{};
    raw[idx(Input::t)] = c.valuation_time;
    raw[idx(Input::x)] = p.x0;
    raw[idx(Input::y)] = p.y0;
    raw[idx(Input::z)] = p.z0;
    raw[idx(Input::v)] = p.v0;
    raw[idx(Input::K)] = c.strike;
    raw[idx(Input::r)] = p.r;
    raw[idx(Input::rho)] = p.rho;
    raw[idx(Input::kappa)] = p.kappa;
    raw[idx(Input::theta)] = p.theta;
    raw[idx(Input::sigma)] = p.sigma;
    raw[idx(Input::eta)] = p.eta;
    raw[idx(Input::T)] = c.maturity;
    raw[idx(Input::xi)] = p.xi;
    return raw;
}

PricingProblem split_raw_inputs(const RawInputs& raw, ModelVariant variant) {
    PricingProblem out;
    ModelParams& p = out.params;
    p.variant = variant;
    p.x0 = raw[idx(Input::x)];
    p.y0 = raw[idx(Input::y)];
    p.z0 = raw[idx(Input::z)];
    p.v0 = raw[idx(Input::v)];
    p.r = raw[idx(Input::r)];
    p.rho = raw[idx(Input::rho)];
    p.kappa = raw[idx(Input::kappa)];
    p.theta = raw[idx(Input::theta)];
    p.sigma = raw[idx(Input::sigma)];
    p.eta = raw[idx(Input::eta)];
    p.xi = raw[idx(Input::xi)];
    out.contract.strike = raw[idx(Input::K)];
    out.contract.maturity = raw[idx(Input::T)];
    out.contract.valuation_time = raw[idx(Input::t)];
    return out;
}

std::string to_kv(const ModelParams& p) {
    std::string out;
    auto line = [&](const char* name, double v) { out += std::string(name) + " = " + format_double(v) + "\n"; };
    line("r", p.r);
    line("kappa", p.kappa);
    line("theta", p.theta);
    line("sigma", p.sigma);
    line("rho", p.rho);
    line("xi", p.xi);
    line("eta", p.eta);
    line("v0", p.v0);
    line("x0", p.x0);
    line("y0", p.y0);
    line("z0", p.z0);
    line("mu", p.mu);
    out += "variant = " + std::string(to_string(p.variant)) + "\n";
    return out;
}

ModelParams params_from_kv(std::string_view text) {
    const auto rec = KvRecord::parse(text);
    ModelParams p;
    p.r = rec.get_double("r", p.r);
    p.kappa = rec.get_double("kappa", p.kappa);
    p.theta = rec.get_double("theta", p.theta);
    p.sigma = rec.get_double("sigma", p.sigma);
    p.rho = rec.get_double("rho", p.rho);
    p.xi = rec.get_double("xi", p.xi);
    p.eta = rec.get_double("eta", p.eta);
    p.v0 = rec.get_double("v0", p.v0);
    p.x0 = rec.get_double("x0", p.x0);
    p.y0 = rec.get_double("y0", p.y0);
    p.z0 = rec.get_double("z0", p.z0);
    p.mu = rec.get_double("mu", p.mu);
    if (auto v = rec.get("variant")) p.variant = parse_variant(*v);
    return p;
}

std::string to_kv(const DomainBox& box) {
    std::string out;
    for (std::size_t k = 0; k < kInputCount; ++k) {
        const std::string name(kInputNames[k]);
        out += name + "_lo = " + format_double(box.bounds[k].lo) + "\n";
        out += name + "_hi = " + format_double(box.bounds[k].hi) + "\n";
    }
    return out;
}

DomainBox box_from_kv(std::string_view text, const DomainBox& base) {
    const auto rec = KvRecord::parse(text);
    DomainBox box = base;
    for (std::size_t k = 0; k < kInputCount; ++k) {
        const std::string name(kInputNames[k]);
        box.bounds[k].lo = rec.get_double(name + "_lo", box.bounds[k].lo);
        box.bounds[k].hi = rec.get_double(name + "_hi", box.bounds[k].hi);
    }
    box.validate();
    return box;
}

}  // namespace svsdu
