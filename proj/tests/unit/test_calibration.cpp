#include <doctest.h>

#include "support/oracles.hpp"
#include "svsdu/calib/calibration.hpp"
#include "svsdu/error.hpp"

#include <algorithm>
#include <cmath>

using namespace svsdu;
using namespace svsdu::calib;

namespace {

dgm::NetworkConfig small_cfg(ModelVariant v = ModelVariant::SVSDU) {
    dgm::NetworkConfig c;
    c.variant = v;
    c.n_hidden_layers = 1;
    c.width = 8;
    return c;
}

// random weights shifted so that every price is positive
dgm::NetworkWeights pricing_net(ModelVariant v, std::uint64_t seed) {
    auto w = oracle::random_weights(small_cfg(v), seed);
    w.b += 20.0;
    return w;
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

MarketDay synthetic_day(const dgm::NetworkWeights& w, const ModelParams& p, double l = 1.0) {
    MarketDay day;
    day.date = "2024-01-02";
    day.spot = p.x0 * l;
    day.rate = p.r;
    for (double T : {0.1, 0.3, 0.6}) {
        for (double K = 80; K <= 120; K += 5) day.quotes.push_back({K * l, T, 1.0});
    }
    ModelParams scaled = p;
    scaled.y0 *= l;
    scaled.z0 *= l;
    const auto prices = model_prices(w, day, scaled, l);
    for (std::size_t i = 0; i < prices.size(); ++i) day.quotes[i].price = prices[i];
    return day;
}

LmProblem affine_problem(const Eigen::MatrixXd& A, const Eigen::VectorXd& b) {
    LmProblem pr;
    pr.evaluate = [A, b](const Eigen::VectorXd& phi, Eigen::VectorXd& res, Eigen::MatrixXd* jac) {
        res = A * phi - b;
        if (jac != nullptr) *jac = A;
    };
    return pr;
}

void check_decreasing(const std::vector<double>& h) {
    for (std::size_t k = 1; k < h.size(); ++k) CHECK(h[k] < h[k - 1]);
}

}  // namespace

TEST_CASE("metrics examples and identities") {
    const auto m = metrics({11, 19}, {10, 20});
    CHECK(m.ape == doctest::Approx(2.0 / 30.0).epsilon(1e-15));
    CHECK(m.aae == doctest::Approx(1.0).epsilon(1e-15));
    const auto z = metrics({3, 4}, {3, 4});
    CHECK(z.ape == 0.0);
    CHECK(z.aae == 0.0);

    svsdu::Rng rng(4);
    std::vector<double> model(30), market(30);
    double max_abs = 0, sum_mkt = 0;
    for (std::size_t i = 0; i < model.size(); ++i) {
        market[i] = rng.uniform(1, 50);
        model[i] = market[i] + rng.uniform(-2, 2);
        max_abs = std::max(max_abs, std::fabs(model[i] - market[i]));
        sum_mkt += market[i];
    }
    const auto base = metrics(model, market);
    CHECK(base.aae <= max_abs);
    CHECK(base.ape * sum_mkt == doctest::Approx(30 * base.aae).epsilon(1e-13));
    std::reverse(model.begin(), model.end());
    std::reverse(market.begin(), market.end());
    const auto perm = metrics(model, market);
    CHECK(perm.ape == doctest::Approx(base.ape).epsilon(1e-14));

    CHECK_THROWS_AS(metrics({1, 2}, {1}), Error);
    try {
        (void)metrics({1}, {0});
        FAIL("no error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NonPositiveMarketPrice);
    }
}

TEST_CASE("roll_ratios keeps the drawdown and drawup ratios") {
    const auto same = roll_ratios(101, 49, 100, 100);
    CHECK(same.y == 101);
    CHECK(same.z == 49);
    const auto dbl = roll_ratios(101, 49, 100, 200);
    CHECK(dbl.y == doctest::Approx(202));
    CHECK(dbl.z == doctest::Approx(98));
    const auto ex = roll_ratios(101, 49, 100, 98);
    CHECK(ex.y == doctest::Approx(98.98).epsilon(1e-14));
    CHECK(ex.z == doctest::Approx(48.02).epsilon(1e-14));

    svsdu::Rng rng(9);
    for (int k = 0; k < 1000; ++k) {
        const double x = rng.uniform(50, 150), y = x * rng.uniform(1, 2), z = x * rng.uniform(0.3, 1);
        const double x2 = x * rng.uniform(0.8, 1.2);
        const auto r = roll_ratios(y, z, x, x2);
        CHECK(std::fabs(x2 / r.y - x / y) <= 1e-14);
        CHECK(std::fabs(x2 / r.z - x / z) <= 1e-14 * (x / z));
    }
    try {
        (void)roll_ratios(90, 49, 100, 100);
        FAIL("no error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::OrderingViolation);
    }
}

TEST_CASE("affine residuals converge in one accepted step") {
    svsdu::Rng rng(12);
    for (int trial = 0; trial < 10; ++trial) {
        Eigen::MatrixXd A(12, 5);
        for (Eigen::Index i = 0; i < A.size(); ++i) A.data()[i] = rng.uniform(-1, 1);
        A.topRows(5) += 3.0 * Eigen::MatrixXd::Identity(5, 5);
        A *= 100.0;
        Eigen::VectorXd star(5);
        for (auto& s : star) s = rng.uniform(-2, 2);
        const Eigen::VectorXd b = A * star;
        Eigen::VectorXd phi0(5);
        for (auto& s : phi0) s = rng.uniform(-2, 2);
        const auto pr = affine_problem(A, b);
        LmSettings one;
        one.max_outer = 1;
        const auto first = levenberg_marquardt(pr, phi0, one);
        CHECK(first.accepted == 1);
        CHECK((first.phi - star).norm() <= 1e-6 * (phi0 - star).norm());

        const auto full = levenberg_marquardt(pr, phi0);
        check_decreasing(full.rmse_history);
        CHECK(full.status == LmStatus::Converged);
        CHECK((full.phi - star).norm() <= 1e-10);
    }
}

TEST_CASE("an optimal start is a converged zero-length step") {
    Eigen::MatrixXd A = Eigen::MatrixXd::Identity(3, 2);
    const Eigen::VectorXd star = Eigen::Vector2d(1.5, -0.5);
    const auto res = levenberg_marquardt(affine_problem(A, A * star), star);
    CHECK(res.status == LmStatus::Converged);
    CHECK(res.accepted == 0);
    CHECK(res.phi == star);
}

TEST_CASE("nonlinear least squares decreases the rmse on every accepted step") {
    // Rosenbrock as residuals (10 (y - x^2), 1 - x)
    LmProblem pr;
    pr.evaluate = [](const Eigen::VectorXd& p, Eigen::VectorXd& r, Eigen::MatrixXd* j) {
        r = Eigen::Vector2d(10 * (p[1] - p[0] * p[0]), 1 - p[0]);
        if (j != nullptr) {
            j->resize(2, 2);
            *j << -20 * p[0], 10, -1, 0;
        }
    };
    const auto res = levenberg_marquardt(pr, Eigen::Vector2d(-1.2, 1.0));
    check_decreasing(res.rmse_history);
    CHECK(res.rmse_history.back() < 1e-8);
    CHECK(res.phi[0] == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("lm stopping rules") {
    LmProblem wrong;
    // every move away from the origin increases the error
    wrong.evaluate = [](const Eigen::VectorXd& p, Eigen::VectorXd& r, Eigen::MatrixXd* j) {
        r = Eigen::VectorXd::Constant(1, 1.0 + 1e30 * p.squaredNorm());
        if (j != nullptr) *j = Eigen::MatrixXd::Ones(1, p.size());
    };
    const auto rej = levenberg_marquardt(wrong, Eigen::Vector2d(0, 0));
    CHECK(rej.status == LmStatus::RejectStopped);
    CHECK(rej.iterations == 20);
    CHECK(rej.accepted == 0);

    auto pinned = affine_problem(Eigen::MatrixXd::Identity(2, 2), Eigen::Vector2d(5, 5));
    pinned.project = [](const Eigen::VectorXd& p) { return p.cwiseMin(1.0); };
    const auto stall = levenberg_marquardt(pinned, Eigen::Vector2d(1, 1));
    CHECK(stall.status == LmStatus::StallStopped);

    LmSettings capped;
    capped.max_outer = 3;
    capped.stall_tol = 0;
    LmProblem slow;
    slow.evaluate = [](const Eigen::VectorXd& p, Eigen::VectorXd& r, Eigen::MatrixXd* j) {
        r = Eigen::VectorXd::Constant(1, std::exp(p[0]));
        if (j != nullptr) *j = Eigen::MatrixXd::Constant(1, 1, std::exp(p[0]));
    };
    const auto cap = levenberg_marquardt(slow, Eigen::VectorXd::Constant(1, 0.0), capped);
    CHECK(cap.status == LmStatus::IterCap);
    check_decreasing(cap.rmse_history);

    LmSettings bad;
    bad.lambda_up = 1.0;
    CHECK_THROWS_AS(levenberg_marquardt(slow, Eigen::VectorXd::Zero(1), bad), Error);
}

TEST_CASE("hill search finds the grid minimizer of a unimodal profile") {
    for (double c0 : {15.0, 100.0, 200.0, 63.0}) {
        for (double opt : {40.0, 117.0, 180.0}) {
            const auto f = [&](double c) { return std::fabs(c - opt) + 0.01 * c; };
            const auto trace = hill_search(c0, 10, 23, 0, 232, f);
            double best = c0, best_err = f(c0);
            for (double c = c0 - 10 * 30; c < 232; c += 10) {
                if (c > 0 && f(c) < best_err) best = c, best_err = f(c);
            }
            CHECK(trace.best_c == doctest::Approx(best));
            CHECK_FALSE(trace.budget_exhausted);
        }
    }
    const auto at_opt = hill_search(100, 10, 23, 0, 232, [](double c) { return std::fabs(c - 100); });
    CHECK(at_opt.probes.size() == 3);
    CHECK(at_opt.best_c == 100);

    const auto tight = hill_search(15, 10, 4, 0, 232, [](double c) { return -c; });
    CHECK(tight.budget_exhausted);
    CHECK(tight.probes.size() == 4);
    CHECK(tight.best_c == doctest::Approx(35));
}

TEST_CASE("residual vector contracts") {
    const auto w = oracle::random_weights(small_cfg(), 3);
    const auto p = truth();
    const auto day = synthetic_day(w, p);
    CHECK(residual_vector(w, day, p, 1.0).cwiseAbs().maxCoeff() == 0.0);

    MarketDay one = day;
    one.quotes.resize(1);
    CHECK(residual_vector(w, one, p, 1.0).size() == 1);

    // scale everything in market units by c together with l
    const double c = 7.3;
    MarketDay big = day;
    big.spot *= c;
    for (auto& q : big.quotes) {
        q.strike *= c;
        q.price *= c;
        q.price += 0.25 * c;
    }
    MarketDay ref = day;
    for (auto& q : ref.quotes) q.price += 0.25;
    ModelParams pc = p;
    pc.y0 *= c;
    pc.z0 *= c;
    const auto r1 = residual_vector(w, ref, p, 1.3);
    const auto r2 = residual_vector(w, big, pc, 1.3 * c);
    CHECK((r1 - r2).cwiseAbs().maxCoeff() <= 1e-12);

    std::size_t oob = 0;
    (void)residual_vector(w, day, p, 1.0, &oob);
    CHECK(oob == 0);
    (void)residual_vector(w, day, p, 0.1, &oob);
    CHECK(oob == day.quotes.size());

    MarketDay empty = day;
    empty.quotes.clear();
    try {
        (void)residual_vector(w, empty, p, 1.0);
        FAIL("no error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::EmptyChain);
    }
}

TEST_CASE("calibrating self-generated quotes from the truth stays put") {
    const auto w = pricing_net(ModelVariant::SVSDU, 5);
    const auto p = truth();
    const auto day = synthetic_day(w, p);
    const auto res = lm_calibrate(w, day, p);
    CHECK(res.status == LmStatus::Converged);
    CHECK(res.rmse == 0.0);
    CHECK(res.params.v0 == p.v0);
    CHECK(res.dd == doctest::Approx(100.0 / 110.0));
    CHECK(res.du == doctest::Approx(100.0 / 80.0));
}

TEST_CASE("calibration improves a perturbed start and respects the bounds") {
    for (ModelVariant v : {ModelVariant::SVSDU, ModelVariant::SVSD, ModelVariant::SVSU, ModelVariant::Heston}) {
        const auto w = pricing_net(v, 8);
        const auto p = truth();
        const auto day = synthetic_day(w, p);
        ModelParams start = p;
        start.v0 *= 1.3;
        start.kappa *= 0.8;
        start.rho = 0.2;
        const auto res = lm_calibrate(w, day, start);
        check_decreasing(res.rmse_history);
        CHECK(res.rmse_history.back() < res.rmse_history.front());
        const auto names = calibrated_inputs(v);
        const auto bounds = default_bounds(w.cfg.input_box, names, day.spot, 1.0);
        CHECK(bounds.contains(pack(res.params, names)));
        CHECK(2 * res.params.kappa * res.params.theta > res.params.sigma * res.params.sigma);
        CHECK(res.dd <= 1.0);
        CHECK(res.du >= 1.0);
    }
}

TEST_CASE("clipping enforces correlation limits, ordering and Feller") {
    const auto names = calibrated_inputs(ModelVariant::SVSDU);
    const auto b = default_bounds(DomainBox::defaults(), names, 100.0, 1.0);
    ModelParams p = truth();
    p.rho = -1.0;
    p.y0 = 90;
    p.z0 = 120;
    p.kappa = 0.5;
    p.theta = 0.02;
    p.sigma = 2.0;
    const auto q = unpack(b.clip(pack(p, names)), names, p);
    CHECK(q.rho == -0.999);
    CHECK(q.y0 == 100.0);
    CHECK(q.z0 == 100.0);
    CHECK(2 * q.kappa * q.theta > q.sigma * q.sigma);
}

TEST_CASE("scaling search reports its best probe") {
    const auto w = pricing_net(ModelVariant::SVSDU, 11);
    const auto day = synthetic_day(w, truth(), 40.0);
    LmSettings s;
    s.max_outer = 30;
    ScalingOptions opts;
    opts.budget = 6;
    const auto start = midpoint_start(w.cfg.input_box, ModelVariant::SVSDU, day.spot, day.spot / 100.0);
    const auto res = scaling_search(w, day, start, 100.0, s, opts);
    REQUIRE_FALSE(res.trace.probes.empty());
    CHECK(res.trace.probes.size() <= 6);
    double best = INFINITY;
    for (const auto& [c, e] : res.trace.probes) best = std::min(best, e);
    CHECK(res.best.rmse == best);
    CHECK(res.best.C == doctest::Approx(res.trace.best_c));
    CHECK(res.best.l == doctest::Approx(day.spot / res.trace.best_c));
}

TEST_CASE("calibration record round-trips") {
    CalibrationResult r;
    r.date = "2021-03-04";
    r.variant = ModelVariant::SVSU;
    r.params = truth();
    r.params.variant = r.variant;
    r.C = 110;
    r.l = 35.2;
    r.rmse = 0.12;
    r.dd = 1.0;
    r.du = 1.25;
    r.in_sample = {0.013, 0.4};
    r.status = LmStatus::RejectStopped;
    r.iterations = 77;
    const auto back = calibration_result_from_kv(to_kv(r));
    CHECK(back.date == r.date);
    CHECK(back.variant == r.variant);
    CHECK(back.params.eta == r.params.eta);
    CHECK(back.params.z0 == r.params.z0);
    CHECK(back.du == r.du);
    CHECK(back.status == r.status);
    CHECK(back.in_sample.ape == r.in_sample.ape);
    CHECK(back.iterations == 77);
}
