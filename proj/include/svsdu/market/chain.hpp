#pragma once

#include "svsdu/calib/calibration.hpp"

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace svsdu::market {

/// Days since 1970-01-01 of an ISO-8601 date (YYYY-MM-DD). Throws ParseError.
long parse_date(const std::string& iso);
std::string format_date(long days);

struct OptionQuote {
    std::string quote_date;
    std::string expiry_date;
    double strike = 0.0;
    double bid = 0.0;
    double ask = 0.0;
    double underlying_close = 0.0;
    double rate = 0.0;

    [[nodiscard]] double mid() const noexcept { return 0.5 * (bid + ask); }
    [[nodiscard]] double half_spread() const noexcept { return ask - mid(); }
    [[nodiscard]] long days_to_expiry() const;
    [[nodiscard]] double moneyness() const noexcept { return underlying_close / strike; }
};

inline constexpr std::array<const char*, 7> kChainColumns = {"quote_date", "expiry_date",      "strike", "bid",
                                                             "ask",        "underlying_close", "rate"};

struct LoadReport {
    std::vector<OptionQuote> quotes;
    std::vector<std::string> warnings;  ///< "line N: reason" per skipped row
};

/// Reads a chain CSV. Columns may appear in any order; extra columns are
/// ignored. Malformed rows are skipped with a warning, or raise ParseError
/// in strict mode.
LoadReport load_chain(const std::string& path, bool strict = false);
LoadReport parse_chain(const std::string& text, bool strict = false);

void write_chain(const std::vector<OptionQuote>& quotes, const std::string& path);

/// Keeps 6 < days < 365, mid >= 1 and mid >= max(0, S - K exp(-r tau)).
/// Days are counted from `valuation_date` when given, else from each quote's date.
std::vector<OptionQuote> filter_chain(const std::vector<OptionQuote>& quotes,
                                      const std::optional<std::string>& valuation_date = std::nullopt);

inline constexpr std::array<double, 5> kMoneynessEdges = {0.94, 0.97, 1.00, 1.03, 1.06};
inline constexpr std::array<double, 2> kMaturityEdges = {60.0, 180.0};
inline constexpr int kMoneynessBuckets = 6;
inline constexpr int kMaturityBuckets = 3;

int moneyness_bucket(double s_over_k);
int maturity_bucket(long days);
std::string moneyness_label(int b);
std::string maturity_label(int b);

struct BucketCell {
    std::size_t count = 0;
    double mean_mid = 0.0;
    double mean_half_spread = 0.0;
    double ape = 0.0;  ///< zero without model prices
    double aae = 0.0;
};

struct BucketReport {
    std::array<std::array<BucketCell, kMaturityBuckets>, kMoneynessBuckets> cells{};
    bool has_errors = false;

    [[nodiscard]] std::size_t total() const;
    /// One line per cell: moneyness, maturity, count, mean mid, mean half-spread[, APE, AAE].
    [[nodiscard]] std::string to_csv(char delim = ',') const;
};

BucketReport bucket_report(const std::vector<OptionQuote>& quotes,
                           const std::optional<std::vector<double>>& model_prices = std::nullopt);

/// Black-Scholes implied volatility by bisection on [1e-6, 5]; NaN outside
/// the no-arbitrage range.
double implied_vol(double price, double spot, double strike, double rate, double tau, double tol = 1e-8);

/// Calibration days in date order, maturities in years (days / 365).
std::vector<calib::MarketDay> to_market_days(const std::vector<OptionQuote>& quotes);

}  // namespace svsdu::market
