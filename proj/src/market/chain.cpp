#include "svsdu/market/chain.hpp"

#include "svsdu/error.hpp"
#include "svsdu/kv.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace svsdu::market {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string& line, char delim) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, delim)) out.push_back(trim(cell));
    if (!line.empty() && line.back() == delim) out.emplace_back();
    return out;
}

double to_number(const std::string& s) {
    double v = 0;
    const auto* end = s.data() + s.size();
    const auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc() || ptr != end || s.empty()) throw Error(ErrorCode::ParseError, "bad number '" + s + "'");
    return v;
}

double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double bs_call(double s, double k, double r, double vol, double tau) {
    const double sd = vol * std::sqrt(tau);
    const double d1 = (std::log(s / k) + (r + 0.5 * vol * vol) * tau) / sd;
    return s * norm_cdf(d1) - k * std::exp(-r * tau) * norm_cdf(d1 - sd);
}

}  // namespace

long parse_date(const std::string& iso) {
    using namespace std::chrono;
    int y = 0;
    unsigned m = 0, d = 0;
    char dash1 = 0, dash2 = 0;
    std::istringstream in(iso);
    in >> y >> dash1 >> m >> dash2 >> d;
    const year_month_day ymd{year{y}, month{m}, day{d}};
    if (in.fail() || !in.eof() || dash1 != '-' || dash2 != '-' || !ymd.ok() || iso.size() != 10) {
        throw Error(ErrorCode::ParseError, "bad date '" + iso + "'");
    }
    return static_cast<long>(sys_days{ymd}.time_since_epoch().count());
}

std::string format_date(long days) {
    using namespace std::chrono;
    const year_month_day ymd{sys_days{std::chrono::days{days}}};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                  static_cast<unsigned>(ymd.day()));
    return buf;
}

long OptionQuote::days_to_expiry() const { return parse_date(expiry_date) - parse_date(quote_date); }

LoadReport parse_chain(const std::string& text, bool strict) {
    std::istringstream in(text);
    std::string line;
    LoadReport out;
    if (!std::getline(in, line)) throw Error(ErrorCode::MissingColumn, "chain file has no header");
    const auto header = split(line, ',');
    std::array<std::size_t, kChainColumns.size()> col{};
    for (std::size_t k = 0; k < kChainColumns.size(); ++k) {
        const auto it = std::find(header.begin(), header.end(), kChainColumns[k]);
        if (it == header.end()) throw Error(ErrorCode::MissingColumn, std::string("missing column '") + kChainColumns[k] + "'");
        col[k] = static_cast<std::size_t>(it - header.begin());
    }
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            const auto cells = split(line, ',');
            if (cells.size() < header.size()) throw Error(ErrorCode::ParseError, "too few fields");
            OptionQuote q;
            q.quote_date = cells[col[0]];
            q.expiry_date = cells[col[1]];
            q.strike = to_number(cells[col[2]]);
            q.bid = to_number(cells[col[3]]);
            q.ask = to_number(cells[col[4]]);
            q.underlying_close = to_number(cells[col[5]]);
            q.rate = to_number(cells[col[6]]);
            if (q.days_to_expiry() <= 0) throw Error(ErrorCode::ParseError, "expiry is not after the quote date");
            if (!(q.bid >= 0) || !(q.ask >= q.bid)) throw Error(ErrorCode::ParseError, "need ask >= bid >= 0");
            if (!(q.strike > 0) || !(q.underlying_close > 0)) throw Error(ErrorCode::ParseError, "non-positive strike or close");
            out.quotes.push_back(std::move(q));
        } catch (const Error& e) {
            const std::string msg = "line " + std::to_string(line_no) + ": " + e.what();
            if (strict) throw Error(ErrorCode::ParseError, msg);
            out.warnings.push_back(msg);
        }
    }
    return out;
}

LoadReport load_chain(const std::string& path, bool strict) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_chain(ss.str(), strict);
}

void write_chain(const std::vector<OptionQuote>& quotes, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
    for (std::size_t k = 0; k < kChainColumns.size(); ++k) out << (k ? "," : "") << kChainColumns[k];
    out << '\n';
    for (const auto& q : quotes) {
        out << q.quote_date << ',' << q.expiry_date << ',' << format_double(q.strike) << ',' << format_double(q.bid)
            << ',' << format_double(q.ask) << ',' << format_double(q.underlying_close) << ',' << format_double(q.rate)
            << '\n';
    }
}

std::vector<OptionQuote> filter_chain(const std::vector<OptionQuote>& quotes,
                                      const std::optional<std::string>& valuation_date) {
    const std::optional<long> val = valuation_date ? std::optional<long>(parse_date(*valuation_date)) : std::nullopt;
    std::vector<OptionQuote> out;
    for (const auto& q : quotes) {
        const long days = parse_date(q.expiry_date) - (val ? *val : parse_date(q.quote_date));
        if (days <= 6 || days >= 365) continue;
        const double mid = q.mid();
        if (mid < 1.0) continue;
        const double tau = static_cast<double>(days) / 365.0;
        const double bound = std::max(0.0, q.underlying_close - q.strike * std::exp(-q.rate * tau));
        if (mid < bound) continue;
        out.push_back(q);
    }
    return out;
}

int moneyness_bucket(double s_over_k) {
    int b = 0;
    while (b < static_cast<int>(kMoneynessEdges.size()) && s_over_k >= kMoneynessEdges[static_cast<std::size_t>(b)]) ++b;
    return b;
}

int maturity_bucket(long days) {
    int b = 0;
    while (b < static_cast<int>(kMaturityEdges.size()) && static_cast<double>(days) >= kMaturityEdges[static_cast<std::size_t>(b)]) ++b;
    return b;
}

std::string moneyness_label(int b) {
    static const std::array<const char*, kMoneynessBuckets> labels = {"<0.94",       "0.94-0.97", "0.97-1.00",
                                                                      "1.00-1.03",   "1.03-1.06", ">=1.06"};
    return labels.at(static_cast<std::size_t>(b));
}

std::string maturity_label(int b) {
    static const std::array<const char*, kMaturityBuckets> labels = {"<60", "60-180", ">=180"};
    return labels.at(static_cast<std::size_t>(b));
}

std::size_t BucketReport::total() const {
    std::size_t n = 0;
    for (const auto& row : cells) {
        for (const auto& c : row) n += c.count;
    }
    return n;
}

std::string BucketReport::to_csv(char delim) const {
    std::ostringstream out;
    out << "moneyness" << delim << "maturity" << delim << "count" << delim << "mean_mid" << delim << "mean_half_spread";
    if (has_errors) out << delim << "ape" << delim << "aae";
    out << '\n';
    for (int m = 0; m < kMoneynessBuckets; ++m) {
        for (int t = 0; t < kMaturityBuckets; ++t) {
            const auto& c = cells[static_cast<std::size_t>(m)][static_cast<std::size_t>(t)];
            out << moneyness_label(m) << delim << maturity_label(t) << delim << c.count << delim
                << format_double(c.mean_mid) << delim << format_double(c.mean_half_spread);
            if (has_errors) out << delim << format_double(c.ape) << delim << format_double(c.aae);
            out << '\n';
        }
    }
    return out.str();
}

BucketReport bucket_report(const std::vector<OptionQuote>& quotes, const std::optional<std::vector<double>>& model_prices) {
    if (model_prices && model_prices->size() != quotes.size()) {
        throw Error(ErrorCode::LengthMismatch, "model prices do not match the quotes");
    }
    BucketReport rep;
    rep.has_errors = model_prices.has_value();
    struct Acc {
        double mid = 0, spread = 0, abs_err = 0;
    };
    std::array<std::array<Acc, kMaturityBuckets>, kMoneynessBuckets> acc{};
    for (std::size_t i = 0; i < quotes.size(); ++i) {
        const auto& q = quotes[i];
        const auto m = static_cast<std::size_t>(moneyness_bucket(q.moneyness()));
        const auto t = static_cast<std::size_t>(maturity_bucket(q.days_to_expiry()));
        auto& c = rep.cells[m][t];
        ++c.count;
        acc[m][t].mid += q.mid();
        acc[m][t].spread += q.half_spread();
        if (model_prices) acc[m][t].abs_err += std::fabs((*model_prices)[i] - q.mid());
    }
    for (std::size_t m = 0; m < kMoneynessBuckets; ++m) {
        for (std::size_t t = 0; t < kMaturityBuckets; ++t) {
            auto& c = rep.cells[m][t];
            if (c.count == 0) continue;
            const double n = static_cast<double>(c.count);
            c.mean_mid = acc[m][t].mid / n;
            c.mean_half_spread = acc[m][t].spread / n;
            if (model_prices) {
                c.ape = acc[m][t].mid > 0 ? acc[m][t].abs_err / acc[m][t].mid : 0.0;
                c.aae = acc[m][t].abs_err / n;
            }
        }
    }
    return rep;
}

double implied_vol(double price, double spot, double strike, double rate, double tau, double tol) {
    const double lower = std::max(0.0, spot - strike * std::exp(-rate * tau));
    if (!(price > lower) || !(price < spot) || !(tau > 0)) return std::nan("");
    double lo = 1e-6, hi = 5.0;
    if (bs_call(spot, strike, rate, hi, tau) < price) return std::nan("");
    while (hi - lo > tol) {
        const double mid = 0.5 * (lo + hi);
        (bs_call(spot, strike, rate, mid, tau) < price ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

std::vector<calib::MarketDay> to_market_days(const std::vector<OptionQuote>& quotes) {
    std::map<long, calib::MarketDay> days;
    for (const auto& q : quotes) {
        auto& d = days[parse_date(q.quote_date)];
        if (d.quotes.empty()) {
            d.date = q.quote_date;
            d.spot = q.underlying_close;
            d.rate = q.rate;
        }
        d.quotes.push_back({q.strike, static_cast<double>(q.days_to_expiry()) / 365.0, q.mid()});
    }
    std::vector<calib::MarketDay> out;
    for (auto& [k, d] : days) out.push_back(std::move(d));
    return out;
}

}  // namespace svsdu::market
