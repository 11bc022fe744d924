#include "svsdu/market/pipeline.hpp"

#include "svsdu/error.hpp"
#include "svsdu/rng.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace svsdu::market {

std::string_view to_string(GroupMode m) noexcept {
    switch (m) {
        case GroupMode::All: return "all";
        case GroupMode::ByMaturity: return "by-maturity";
        case GroupMode::ByMoneyness: return "by-moneyness";
    }
    return "?";
}

GroupMode parse_group_mode(std::string_view s) {
    for (GroupMode m : {GroupMode::All, GroupMode::ByMaturity, GroupMode::ByMoneyness}) {
        if (to_string(m) == s) return m;
    }
    throw Error(ErrorCode::InvalidArgument, "unknown grouping mode '" + std::string(s) + "'");
}

int group_of(const OptionQuote& q, GroupMode mode) {
    switch (mode) {
        case GroupMode::All: return 0;
        case GroupMode::ByMaturity: return maturity_bucket(q.days_to_expiry());
        case GroupMode::ByMoneyness: return moneyness_bucket(q.moneyness());
    }
    return 0;
}

calib::Metrics PricedQuotes::metrics() const {
    std::vector<double> mkt(quotes.size());
    std::transform(quotes.begin(), quotes.end(), mkt.begin(), [](const OptionQuote& q) { return q.mid(); });
    return calib::metrics(model, mkt);
}

ModelParams roll_forward(const ModelParams& fitted, double new_spot) {
    const bool up = has_upper_boundary(fitted.variant), lo = has_lower_boundary(fitted.variant);
    const auto rolled = calib::roll_ratios(up ? fitted.y0 : fitted.x0, lo ? fitted.z0 : fitted.x0, fitted.x0, new_spot);
    ModelParams out = fitted;
    out.x0 = new_spot;
    if (up) out.y0 = rolled.y;
    if (lo) out.z0 = rolled.z;
    return out;
}

PipelineResult run_pipeline(const dgm::NetworkWeights& w, const std::vector<OptionQuote>& quotes,
                            const CalibrateOptions& opts) {
    std::map<long, std::map<int, std::vector<OptionQuote>>> by_day;
    for (const auto& q : quotes) by_day[parse_date(q.quote_date)][group_of(q, opts.mode)].push_back(q);

    PipelineResult out;
    std::map<int, calib::CalibrationResult> previous;
    for (const auto& [day_key, groups] : by_day) {
        std::map<int, calib::CalibrationResult> today;
        for (const auto& [g, qs] : groups) {
            const auto days = to_market_days(qs);
            const calib::MarketDay& day = days.front();
            const auto prev = previous.find(g);

            if (prev != previous.end()) {
                const ModelParams rolled = roll_forward(prev->second.params, day.spot);
                const auto prices = calib::model_prices(w, day, rolled, day.spot / prev->second.C);
                out.out_of_sample.quotes.insert(out.out_of_sample.quotes.end(), qs.begin(), qs.end());
                out.out_of_sample.model.insert(out.out_of_sample.model.end(), prices.begin(), prices.end());
            }

            double c_init = opts.c_init;
            ModelParams start;
            if (prev != previous.end()) {
                start = roll_forward(prev->second.params, day.spot);
                c_init = prev->second.C;
            } else if (opts.start) {
                start = *opts.start;
            } else {
                start = calib::midpoint_start(w.cfg.input_box, w.cfg.variant, day.spot, day.spot / c_init);
            }
            start.variant = w.cfg.variant;
            auto res = calib::scaling_search(w, day, start, c_init, opts.lm, opts.scaling).best;

            const auto prices = calib::model_prices(w, day, res.params, res.l);
            out.in_sample.quotes.insert(out.in_sample.quotes.end(), qs.begin(), qs.end());
            out.in_sample.model.insert(out.in_sample.model.end(), prices.begin(), prices.end());
            out.fits.push_back({g, res});
            today[g] = std::move(res);
        }
        previous = std::move(today);
    }
    return out;
}

std::vector<OptionQuote> synthetic_chain(const dgm::NetworkWeights& w, const SyntheticSpec& spec) {
    if (spec.n_days < 1) throw Error(ErrorCode::InvalidArgument, "need at least one day");
    Rng rng(spec.seed, 0);
    ModelParams p = spec.truth;
    p.variant = w.cfg.variant;
    long date = parse_date(spec.start_date);
    std::vector<OptionQuote> out;
    for (int d = 0; d < spec.n_days; ++d) {
        if (d > 0) {
            do ++date;
            while ((date + 3) % 7 >= 5);  // skip Saturday and Sunday
            const double spot = p.x0 * std::exp(spec.daily_vol * rng.normal() - 0.5 * spec.daily_vol * spec.daily_vol);
            p = roll_forward(p, spot);
            p.v0 = std::max(0.011, p.v0 * (1.0 + spec.variance_drift * rng.normal()));
        }
        calib::MarketDay day;
        day.date = format_date(date);
        day.spot = p.x0;
        day.rate = p.r;
        std::vector<long> day_count;
        for (long m : spec.maturities) {
            for (double k : spec.moneyness) {
                day.quotes.push_back({k * p.x0, static_cast<double>(m) / 365.0, 0.0});
                day_count.push_back(m);
            }
        }
        const auto prices = calib::model_prices(w, day, p, p.x0 / spec.scale_c);
        for (std::size_t i = 0; i < prices.size(); ++i) {
            const double mid = prices[i] * (1.0 + spec.price_noise * rng.normal());
            const double half = std::max(0.05, spec.half_spread * std::fabs(mid));
            OptionQuote q;
            q.quote_date = day.date;
            q.expiry_date = format_date(date + day_count[i]);
            q.strike = day.quotes[i].strike;
            q.bid = std::max(0.0, mid - half);
            q.ask = q.bid + 2.0 * half;
            q.underlying_close = p.x0;
            q.rate = p.r;
            out.push_back(q);
        }
    }
    return out;
}

}  // namespace svsdu::market
