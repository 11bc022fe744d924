#include <doctest.h>

#include "support/oracles.hpp"
#include "svsdu/error.hpp"
#include "svsdu/market/chain.hpp"
#include "svsdu/market/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <random>

using namespace svsdu;
using namespace svsdu::market;

namespace {

std::string fixture(const std::string& name) {
    const char* dir = std::getenv("SVSDU_FIXTURES");
    return std::string(dir ? dir : SVSDU_FIXTURE_DIR) + "/" + name;
}

std::size_t cell(const BucketReport& r, int m, int t) {
    return r.cells[static_cast<std::size_t>(m)][static_cast<std::size_t>(t)].count;
}

ModelParams truth() {
    ModelParams p;
    p.rho = -0.4;
    p.kappa = 2.0;
    p.theta = 0.06;
    p.sigma = 0.3;
    p.eta = 1.5;
    p.v0 = 0.05;
    p.xi = 2.0;
    p.y0 = 110.0;
    p.z0 = 80.0;
    p.x0 = 100.0;
    p.r = 0.03;
    return p;
}

dgm::NetworkWeights pricing_net(std::uint64_t seed) {
    dgm::NetworkConfig c;
    c.n_hidden_layers = 1;
    c.width = 8;
    auto w = oracle::random_weights(c, seed);
    w.b += 20.0;
    return w;
}

}  // namespace

TEST_CASE("dates round trip and count calendar days") {
    CHECK(parse_date("1970-01-01") == 0);
    CHECK(parse_date("2024-03-01") - parse_date("2024-02-28") == 2);
    CHECK(parse_date("2025-03-01") - parse_date("2024-03-01") == 365);
    for (long d : {0L, 19000L, 19783L, 20500L}) CHECK(parse_date(format_date(d)) == d);
    CHECK_THROWS_AS(parse_date("2024-02-30"), Error);
    CHECK_THROWS_AS(parse_date("2024/03/01"), Error);
    CHECK_THROWS_AS(parse_date("2024-3-1"), Error);
}

TEST_CASE("loading a small chain") {
    const auto rep = load_chain(fixture("chain_small.csv"));
    REQUIRE(rep.quotes.size() == 3);
    CHECK(rep.warnings.empty());
    CHECK(rep.quotes[0].mid() == doctest::Approx(4.2).epsilon(1e-15));
    CHECK(rep.quotes[0].half_spread() == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(rep.quotes[0].days_to_expiry() == 49);
    CHECK(rep.quotes[2].strike == 100.0);
    CHECK(rep.quotes[1].moneyness() == doctest::Approx(101.5 / 105.0));
}

TEST_CASE("header-only file gives an empty chain") {
    const auto rep = load_chain(fixture("chain_empty.csv"));
    CHECK(rep.quotes.empty());
    CHECK(rep.warnings.empty());
}

TEST_CASE("malformed rows are skipped with a warning or raise in strict mode") {
    const auto rep = load_chain(fixture("chain_malformed.csv"));
    REQUIRE(rep.quotes.size() == 2);
    CHECK(rep.quotes[0].strike == 100.0);
    CHECK(rep.quotes[1].strike == 95.0);
    REQUIRE(rep.warnings.size() == 4);
    CHECK(rep.warnings[0].rfind("line 3:", 0) == 0);  // bid above ask
    CHECK(rep.warnings[1].rfind("line 4:", 0) == 0);
    CHECK(rep.warnings[2].rfind("line 5:", 0) == 0);
    CHECK(rep.warnings[3].rfind("line 6:", 0) == 0);
    try {
        (void)load_chain(fixture("chain_malformed.csv"), true);
        FAIL("strict load accepted a malformed row");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::ParseError);
    }
}

TEST_CASE("missing columns are reported") {
    try {
        (void)parse_chain("quote_date,expiry_date,strike,bid,ask,rate\n");
        FAIL("missing column accepted");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::MissingColumn);
        CHECK(std::string(e.what()).find("underlying_close") != std::string::npos);
    }
    CHECK_THROWS_AS((void)load_chain(fixture("no_such_file.csv")), Error);
}

TEST_CASE("write and reload preserve the chain") {
    const auto quotes = load_chain(fixture("chain_filter.csv")).quotes;
    const auto path = (std::filesystem::temp_directory_path() / "svsdu_chain_roundtrip.csv").string();
    write_chain(quotes, path);
    const auto back = load_chain(path).quotes;
    REQUIRE(back.size() == quotes.size());
    for (std::size_t i = 0; i < quotes.size(); ++i) {
        CHECK(back[i].quote_date == quotes[i].quote_date);
        CHECK(back[i].expiry_date == quotes[i].expiry_date);
        CHECK(back[i].strike == quotes[i].strike);
        CHECK(back[i].bid == quotes[i].bid);
        CHECK(back[i].ask == quotes[i].ask);
    }
    std::filesystem::remove(path);
}

TEST_CASE("filter removes short and long maturities, cheap quotes and arbitrage") {
    const auto all = load_chain(fixture("chain_filter.csv")).quotes;
    REQUIRE(all.size() == 13);
    const auto kept = filter_chain(all);
    std::vector<double> strikes;
    std::vector<long> days;
    for (const auto& q : kept) {
        strikes.push_back(q.strike);
        days.push_back(q.days_to_expiry());
    }
    // 5 and 365 days, mids 0.5 and 0.95, two mids below S - K exp(-r tau) removed
    CHECK(strikes == std::vector<double>{100, 110, 104, 102, 98, 96, 90});
    CHECK(days == std::vector<long>{7, 60, 180, 30, 120, 210, 14});
    CHECK(kept[6].bid == 10.1);

    CHECK(filter_chain(kept).size() == kept.size());

    // counting from a later valuation date shortens every maturity
    const auto later = filter_chain(all, std::string("2024-03-04"));
    for (const auto& q : later) CHECK(parse_date(q.expiry_date) - parse_date("2024-03-04") > 6);
    CHECK(std::none_of(later.begin(), later.end(), [](const OptionQuote& q) { return q.expiry_date == "2024-03-08"; }));
}

TEST_CASE("bucket edges are left-closed") {
    CHECK(moneyness_bucket(0.9399) == 0);
    CHECK(moneyness_bucket(0.94) == 1);
    CHECK(moneyness_bucket(97.0 / 100.0) == 2);
    CHECK(moneyness_bucket(1.0) == 3);
    CHECK(moneyness_bucket(1.03) == 4);
    CHECK(moneyness_bucket(1.06) == 5);
    CHECK(maturity_bucket(59) == 0);
    CHECK(maturity_bucket(60) == 1);
    CHECK(maturity_bucket(179) == 1);
    CHECK(maturity_bucket(180) == 2);
}

TEST_CASE("one quote per moneyness bucket") {
    const auto quotes = load_chain(fixture("chain_buckets.csv")).quotes;
    const auto rep = bucket_report(quotes);
    for (int m = 0; m < kMoneynessBuckets; ++m) {
        CHECK(cell(rep, m, 1) == 1);
        CHECK(cell(rep, m, 0) == 0);
        CHECK(cell(rep, m, 2) == 0);
    }
    CHECK(rep.cells[2][1].mean_mid == doctest::Approx(3.1));
    CHECK(rep.cells[2][1].mean_half_spread == doctest::Approx(0.1));
    CHECK_FALSE(rep.has_errors);
}

TEST_CASE("filtered fixture lands in the expected cells") {
    const auto kept = filter_chain(load_chain(fixture("chain_filter.csv")).quotes);
    const auto rep = bucket_report(kept);
    CHECK(rep.total() == 7);
    CHECK(cell(rep, 3, 0) == 1);
    CHECK(cell(rep, 0, 1) == 1);
    CHECK(cell(rep, 1, 2) == 1);
    CHECK(cell(rep, 2, 0) == 1);
    CHECK(cell(rep, 3, 1) == 1);
    CHECK(cell(rep, 4, 2) == 1);
    CHECK(cell(rep, 5, 0) == 1);
}

TEST_CASE("bucket counts sum to the input and ignore order") {
    const auto w = pricing_net(3);
    SyntheticSpec spec;
    spec.truth = truth();
    spec.n_days = 2;
    auto quotes = synthetic_chain(w, spec);
    const auto rep = bucket_report(quotes);
    CHECK(rep.total() == quotes.size());

    std::vector<double> model(quotes.size());
    for (std::size_t i = 0; i < quotes.size(); ++i) model[i] = quotes[i].mid() * (1.0 + 0.01 * static_cast<double>(i % 3));
    const auto with_err = bucket_report(quotes, model);
    CHECK(with_err.has_errors);

    std::vector<std::size_t> idx(quotes.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::mt19937 gen(11);
    std::shuffle(idx.begin(), idx.end(), gen);
    std::vector<OptionQuote> q2;
    std::vector<double> m2;
    for (auto i : idx) {
        q2.push_back(quotes[i]);
        m2.push_back(model[i]);
    }
    const auto shuffled = bucket_report(q2, m2);
    for (int m = 0; m < kMoneynessBuckets; ++m) {
        for (int t = 0; t < kMaturityBuckets; ++t) {
            const auto& a = with_err.cells[static_cast<std::size_t>(m)][static_cast<std::size_t>(t)];
            const auto& b = shuffled.cells[static_cast<std::size_t>(m)][static_cast<std::size_t>(t)];
            CHECK(a.count == b.count);
            CHECK(a.mean_mid == doctest::Approx(b.mean_mid).epsilon(1e-12));
            CHECK(a.ape == doctest::Approx(b.ape).epsilon(1e-12));
            CHECK(a.aae == doctest::Approx(b.aae).epsilon(1e-12));
        }
    }
    CHECK_THROWS_AS(bucket_report(quotes, std::vector<double>(3, 1.0)), Error);

    const auto csv = rep.to_csv();
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + kMoneynessBuckets * kMaturityBuckets);
}

TEST_CASE("implied volatility inverts Black-Scholes") {
    for (double k : {80.0, 100.0, 125.0}) {
        for (double vol : {0.05, 0.2, 0.8}) {
            for (double tau : {0.05, 0.5, 0.99}) {
                const double price = oracle::bs_call(100.0, k, 0.03, vol, tau);
                if (price - std::max(0.0, 100.0 - k * std::exp(-0.03 * tau)) < 1e-6) continue;
                CHECK(implied_vol(price, 100.0, k, 0.03, tau) == doctest::Approx(vol).epsilon(1e-6));
            }
        }
    }
    CHECK(std::isnan(implied_vol(1.0, 100.0, 50.0, 0.03, 0.5)));
    CHECK(std::isnan(implied_vol(101.0, 100.0, 100.0, 0.03, 0.5)));
}

TEST_CASE("market days group quotes by date") {
    const auto w = pricing_net(4);
    SyntheticSpec spec;
    spec.truth = truth();
    spec.n_days = 3;
    spec.start_date = "2024-03-01";  // a Friday
    const auto quotes = synthetic_chain(w, spec);
    CHECK(quotes.size() == 3 * spec.moneyness.size() * spec.maturities.size());
    const auto days = to_market_days(quotes);
    REQUIRE(days.size() == 3);
    CHECK(days[0].date == "2024-03-01");
    CHECK(days[1].date == "2024-03-04");
    CHECK(days[2].date == "2024-03-05");
    CHECK(days[0].spot == 100.0);
    CHECK(days[0].quotes.front().maturity == doctest::Approx(14.0 / 365.0));
    for (const auto& q : quotes) {
        CHECK(q.ask >= q.bid);
        CHECK(q.bid >= 0.0);
    }
}

TEST_CASE("rolling keeps the ratios of the extremes to spot") {
    const ModelParams p = truth();
    const auto r = roll_forward(p, 97.3);
    CHECK(r.x0 == 97.3);
    CHECK(r.y0 / r.x0 == doctest::Approx(p.y0 / p.x0).epsilon(1e-14));
    CHECK(r.z0 / r.x0 == doctest::Approx(p.z0 / p.x0).epsilon(1e-14));
    CHECK(r.v0 == p.v0);
}

TEST_CASE("grouping modes") {
    CHECK(parse_group_mode("by-maturity") == GroupMode::ByMaturity);
    CHECK(to_string(parse_group_mode("by-moneyness")) == "by-moneyness");
    CHECK_THROWS_AS(parse_group_mode("weekly"), Error);
    OptionQuote q{"2024-03-01", "2024-04-30", 100.0, 1.0, 1.2, 97.0, 0.05};
    CHECK(group_of(q, GroupMode::All) == 0);
    CHECK(group_of(q, GroupMode::ByMaturity) == 1);
    CHECK(group_of(q, GroupMode::ByMoneyness) == 2);
}

TEST_CASE("pipeline smoke run") {
    const auto w = pricing_net(5);
    SyntheticSpec spec;
    spec.truth = truth();
    spec.n_days = 3;
    spec.price_noise = 0.0;
    const auto quotes = synthetic_chain(w, spec);

    for (GroupMode mode : {GroupMode::All, GroupMode::ByMaturity}) {
        CalibrateOptions opts;
        opts.mode = mode;
        opts.lm.max_outer = 50;
        opts.scaling.budget = 3;
        const auto res = run_pipeline(w, quotes, opts);
        CHECK(res.in_sample.quotes.size() == quotes.size());
        CHECK(res.in_sample.model.size() == quotes.size());
        const std::size_t first_day = spec.moneyness.size() * spec.maturities.size();
        CHECK(res.out_of_sample.quotes.size() == quotes.size() - first_day);
        const std::size_t groups = mode == GroupMode::All ? 1 : 3;
        CHECK(res.fits.size() == 3 * groups);
        const auto m = res.in_sample.metrics();
        CHECK(std::isfinite(m.ape));
        CHECK(m.ape >= 0.0);
        for (const auto& f : res.fits) CHECK(f.fit.l == doctest::Approx(f.fit.params.x0 / f.fit.C));
    }
}
