#pragma once

#include <array>
#include <bitset>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>

namespace svsdu {

enum class ModelVariant { SVSDU, SVSD, SVSU, Heston };

/// Running-maximum (drawdown) boundary is sticky and tracked.
constexpr bool has_upper_boundary(ModelVariant v) noexcept {
    return v == ModelVariant::SVSDU || v == ModelVariant::SVSD;
}
/// Running-minimum (drawup) boundary is sticky and tracked.
constexpr bool has_lower_boundary(ModelVariant v) noexcept {
    return v == ModelVariant::SVSDU || v == ModelVariant::SVSU;
}

std::string_view to_string(ModelVariant v) noexcept;
ModelVariant parse_variant(std::string_view name);

/// Market state plus model coefficients. `mu` is the physical drift; it is
/// carried for completeness and never read by any pricing path.
struct ModelParams {
    double r = 0.04;
    double kappa = 3.0;
    double theta = 0.05;
    double sigma = 0.4;
    double rho = -0.3;
    double xi = 3.0;
    double eta = 0.7;
    double v0 = 0.05;
    double x0 = 100.0;
    double y0 = 101.0;
    double z0 = 49.0;
    double mu = 0.0;
    ModelVariant variant = ModelVariant::SVSDU;
};

struct ContractSpec {
    double strike = 100.0;
    double maturity = 1.0;
    double valuation_time = 0.0;

    [[nodiscard]] double tau() const noexcept { return maturity - valuation_time; }
};

/// Returns `p` unchanged if every invariant holds for its variant, throws
/// `svsdu::Error` otherwise.
ModelParams validate_params(const ModelParams& p);
void validate_contract(const ContractSpec& c);

[[nodiscard]] inline double payoff(double x, double strike) noexcept {
    return x > strike ? x - strike : 0.0;
}

// ---------------------------------------------------------------------------
// Network inputs and the normalization box
// ---------------------------------------------------------------------------

/// The 14 raw network inputs, in network order.
enum class Input : int { t, x, y, z, v, K, r, rho, kappa, theta, sigma, eta, T, xi };
inline constexpr std::size_t kInputCount = 14;
inline constexpr int idx(Input i) noexcept { return static_cast<int>(i); }

std::string_view input_name(Input i) noexcept;
Input parse_input(std::string_view name);

using RawInputs = std::array<double, kInputCount>;

struct Interval {
    double lo = 0.0;
    double hi = 1.0;

    [[nodiscard]] double width() const noexcept { return hi - lo; }
    [[nodiscard]] double mid() const noexcept { return 0.5 * (lo + hi); }
    [[nodiscard]] bool contains(double v) const noexcept { return v >= lo && v <= hi; }
};

struct DomainBox {
    std::array<Interval, kInputCount> bounds{};

    Interval& operator[](Input i) { return bounds[static_cast<std::size_t>(idx(i))]; }
    const Interval& operator[](Input i) const { return bounds[static_cast<std::size_t>(idx(i))]; }

    /// Training ranges used by default. State coordinates x, y, z follow the
    /// sampling recipe (m in [50,131), z in [1,m-1), y in [m+1,m+100)).
    static DomainBox defaults();

    /// Throws DegenerateBox if any hi <= lo.
    void validate() const;
};

/// Affine map of one coordinate onto [-1, 1].
[[nodiscard]] inline double normalize(double raw, const Interval& iv) noexcept {
    return 2.0 * (raw - iv.lo) / (iv.hi - iv.lo) - 1.0;
}
[[nodiscard]] inline double denormalize(double u, const Interval& iv) noexcept {
    return iv.lo + 0.5 * (u + 1.0) * (iv.hi - iv.lo);
}
/// d(normalized)/d(raw) for one coordinate.
[[nodiscard]] inline double normalize_slope(const Interval& iv) noexcept {
    return 2.0 / (iv.hi - iv.lo);
}

struct NormalizedInputs {
    RawInputs values{};
    std::bitset<kInputCount> outside;  ///< raw component was outside its box
};

NormalizedInputs normalize_inputs(const RawInputs& raw, const DomainBox& box);
RawInputs denormalize_inputs(const RawInputs& normalized, const DomainBox& box);

/// Gathers raw network inputs from model parameters and a contract.
RawInputs make_raw_inputs(const ModelParams& p, const ContractSpec& c);

struct PricingProblem {
    ModelParams params;
    ContractSpec contract;
};

/// Inverse of make_raw_inputs.
PricingProblem split_raw_inputs(const RawInputs& raw, ModelVariant variant = ModelVariant::SVSDU);

// ---------------------------------------------------------------------------
// key = value text format
// ---------------------------------------------------------------------------

std::string to_kv(const ModelParams& p);
ModelParams params_from_kv(std::string_view text);
std::string to_kv(const DomainBox& box);
DomainBox box_from_kv(std::string_view text, const DomainBox& base = DomainBox::defaults());

}  // namespace svsdu
