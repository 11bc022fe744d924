#pragma once

#include "svsdu/calib/calibration.hpp"
#include "svsdu/market/chain.hpp"

#include <optional>
#include <string>
#include <vector>

namespace svsdu::market {

/// How quotes of one day are split before calibration.
enum class GroupMode { All, ByMaturity, ByMoneyness };

std::string_view to_string(GroupMode m) noexcept;
GroupMode parse_group_mode(std::string_view s);
int group_of(const OptionQuote& q, GroupMode mode);

struct CalibrateOptions {
    GroupMode mode = GroupMode::All;
    double c_init = 100.0;
    calib::LmSettings lm;
    calib::ScalingOptions scaling;
    std::optional<ModelParams> start;  ///< first-day start; box midpoints when empty
};

struct GroupFit {
    int group = 0;
    calib::CalibrationResult fit;
};

struct PricedQuotes {
    std::vector<OptionQuote> quotes;
    std::vector<double> model;

    [[nodiscard]] calib::Metrics metrics() const;
};

struct PipelineResult {
    std::vector<GroupFit> fits;  ///< per day and group, in date order
    PricedQuotes in_sample;      ///< each day priced with its own fit
    PricedQuotes out_of_sample;  ///< day d priced with the fit of day d-1, extremes rolled
};

/// Daily calibration over a (filtered) chain. Each group starts from the
/// previous day's fit of the same group and its C*.
PipelineResult run_pipeline(const dgm::NetworkWeights& w, const std::vector<OptionQuote>& quotes,
                            const CalibrateOptions& opts = {});

/// Parameters of a fit moved to a new spot with x/y and x/z held fixed.
ModelParams roll_forward(const ModelParams& fitted, double new_spot);

struct SyntheticSpec {
    ModelParams truth;  ///< y0, z0 and x0 in market units of the first day
    int n_days = 5;
    std::string start_date = "2024-01-02";
    double scale_c = 100.0;  ///< prices are generated at l = spot / scale_c
    std::vector<double> moneyness = {0.9, 0.95, 0.975, 1.0, 1.025, 1.05, 1.1};  ///< K / S
    std::vector<long> maturities = {14, 30, 60, 120, 240};                     ///< days
    double daily_vol = 0.01;
    double variance_drift = 0.05;  ///< relative day-to-day change of v
    double price_noise = 0.005;    ///< relative noise on mids
    double half_spread = 0.05;     ///< relative to mid, floor 0.05
    std::uint64_t seed = 1;
};

/// Network-generated quotes over consecutive business days.
std::vector<OptionQuote> synthetic_chain(const dgm::NetworkWeights& w, const SyntheticSpec& spec);

}  // namespace svsdu::market
