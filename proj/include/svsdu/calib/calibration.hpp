#pragma once

#include "svsdu/dgm/network.hpp"
#include "svsdu/model.hpp"

#include <Eigen/Core>

#include <functional>
#include <string>
#include <vector>

namespace svsdu::calib {

/// One option quote in market units; maturity in years from the quote date.
struct Quote {
    double strike = 0.0;
    double maturity = 0.0;
    double price = 0.0;
};

struct MarketDay {
    std::string date;
    double spot = 0.0;
    double rate = 0.0;
    std::vector<Quote> quotes;
};

/// Parameters fitted for each variant, in vector order.
std::vector<Input> calibrated_inputs(ModelVariant v);

/// Parameter values in market units (y, z unscaled) taken from `p`.
Eigen::VectorXd pack(const ModelParams& p, const std::vector<Input>& names);
ModelParams unpack(const Eigen::VectorXd& phi, const std::vector<Input>& names, ModelParams base);

/// Per-parameter box in market units. Clipping keeps rho in [-0.999, 0.999],
/// z <= spot <= y and the Feller condition (by lowering sigma).
struct Bounds {
    std::vector<Input> names;
    std::vector<Interval> box;

    [[nodiscard]] Eigen::VectorXd clip(const Eigen::VectorXd& phi) const;
    [[nodiscard]] bool contains(const Eigen::VectorXd& phi) const;
};

/// Training box of the network mapped to market units for scaling factor `l`.
Bounds default_bounds(const DomainBox& box, const std::vector<Input>& names, double spot, double l);

struct LmSettings {
    double lambda0 = 1e-3;
    double lambda_up = 10.0;
    double lambda_down = 10.0;
    int max_outer = 10000;
    double stall_tol = 1e-10;
    int max_consecutive_rejects = 20;

    void validate() const;
};

enum class LmStatus { Converged, StallStopped, RejectStopped, IterCap };
std::string_view to_string(LmStatus s) noexcept;
LmStatus parse_lm_status(std::string_view s);

/// Least-squares problem for the generic solver. `evaluate` fills the residual
/// vector and, when `jac` is non-null, its Jacobian.
struct LmProblem {
    std::function<void(const Eigen::VectorXd& phi, Eigen::VectorXd& res, Eigen::MatrixXd* jac)> evaluate;
    std::function<Eigen::VectorXd(const Eigen::VectorXd&)> project;  ///< may be empty
};

struct LmResult {
    Eigen::VectorXd phi;
    std::vector<double> rmse_history;  ///< initial value, then one entry per accepted step
    LmStatus status = LmStatus::IterCap;
    int iterations = 0;
    int accepted = 0;
};

/// phi <- phi - (J^T J + lambda I)^{-1} J^T r, accepted iff the RMSE drops.
LmResult levenberg_marquardt(const LmProblem& problem, const Eigen::VectorXd& phi0, const LmSettings& settings = {});

/// Network inputs for one quote at t = 0 after dividing prices by `l`.
RawInputs scaled_inputs(const ModelParams& p, const MarketDay& day, const Quote& q, double l);

/// Scaled residuals P(x/l, K/l, T; phi with y/l, z/l) - P_mkt / l.
/// `out_of_box` (optional) receives the number of quotes whose scaled inputs
/// leave the training box.
Eigen::VectorXd residual_vector(const dgm::NetworkWeights& w, const MarketDay& day, const ModelParams& phi, double l,
                                std::size_t* out_of_box = nullptr);

/// Market-unit model prices.
std::vector<double> model_prices(const dgm::NetworkWeights& w, const MarketDay& day, const ModelParams& phi, double l);

struct Metrics {
    double ape = 0.0;
    double aae = 0.0;
};

/// APE = sum|model - market| / sum market, AAE = sum|model - market| / N.
Metrics metrics(const std::vector<double>& model, const std::vector<double>& market);

struct CalibrationResult {
    std::string date;
    ModelVariant variant = ModelVariant::SVSDU;
    ModelParams params;  ///< fitted values in market units
    double C = 0.0;
    double l = 1.0;
    double rmse = 0.0;  ///< market units
    std::vector<double> rmse_history;  ///< scaled units, as iterated
    LmStatus status = LmStatus::IterCap;
    int iterations = 0;
    double dd = 1.0;  ///< x / y
    double du = 1.0;  ///< x / z
    Metrics in_sample;
    std::size_t out_of_box = 0;
    std::vector<std::string> warnings;
};

/// Fits the variant's parameters to `day` with the network at scaling factor `l`.
/// Entries of `phi0` that are not calibrated (x0, r) are taken from the day.
CalibrationResult lm_calibrate(const dgm::NetworkWeights& w, const MarketDay& day, const ModelParams& phi0,
                               const LmSettings& settings = {}, double l = 1.0);

/// Box midpoints with y and z placed around the spot, in market units.
ModelParams midpoint_start(const DomainBox& box, ModelVariant v, double spot, double l);

struct SearchTrace {
    double best_c = 0.0;
    std::vector<std::pair<double, double>> probes;  ///< (C, error) in probe order
    bool budget_exhausted = false;
};

/// Hill descent on a grid of step `h` inside (lo, hi). Stops at a probe that
/// beats both neighbours or when `budget` distinct probes were spent.
SearchTrace hill_search(double c_init, double h, int budget, double lo, double hi,
                        const std::function<double(double)>& error);

struct ScalingOptions {
    double h = 10.0;
    int budget = 23;
    double c_max = 232.0;
};

struct ScalingResult {
    CalibrationResult best;
    SearchTrace trace;
};

/// Calibrates at l = spot / C for C visited by hill_search, compared by
/// market-unit RMSE.
ScalingResult scaling_search(const dgm::NetworkWeights& w, const MarketDay& day, const ModelParams& phi0, double c_init,
                             const LmSettings& settings = {}, const ScalingOptions& opts = {});

struct RolledExtremes {
    double y = 0.0;
    double z = 0.0;
};

/// Keeps x/y and x/z fixed while the spot moves from x_prev to x_curr.
RolledExtremes roll_ratios(double y_prev, double z_prev, double x_prev, double x_curr);

std::string to_kv(const CalibrationResult& r);
CalibrationResult calibration_result_from_kv(std::string_view text);

}  // namespace svsdu::calib
