#include <doctest.h>

#include "support/oracles.hpp"
#include "svsdu/dgm/network.hpp"
#include "svsdu/error.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>

using namespace svsdu;
using namespace svsdu::dgm;

namespace {

NetworkConfig small_cfg(ModelVariant v = ModelVariant::SVSDU, int layers = 2, int width = 8) {
    NetworkConfig c;
    c.variant = v;
    c.n_hidden_layers = layers;
    c.width = width;
    return c;
}

double slope(const NetworkConfig& c, Input in) { return normalize_slope(c.input_box[in]); }

double fd1(const NetworkWeights& w, RawInputs raw, Input in, double hn) {
    const double h = hn / slope(w.cfg, in);
    RawInputs a = raw, b = raw;
    a[idx(in)] += h;
    b[idx(in)] -= h;
    return (forward(w, a) - forward(w, b)) / (2 * h);
}

double fd2(const NetworkWeights& w, RawInputs raw, Input p, Input q, double hn) {
    const double hp = hn / slope(w.cfg, p);
    const double hq = hn / slope(w.cfg, q);
    auto at = [&](double sp, double sq) {
        RawInputs r = raw;
        r[idx(p)] += sp * hp;
        r[idx(q)] += sq * hq;
        return forward(w, r);
    };
    if (p == q) return (at(1, 0) - 2 * forward(w, raw) + at(-1, 0)) / (hp * hp);
    return (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4 * hp * hq);
}

}  // namespace

TEST_CASE("init is deterministic and bounded") {
    auto cfg = small_cfg(ModelVariant::SVSDU, 1, 110);
    const auto a = init_network(cfg, 5);
    const auto b = init_network(cfg, 5);
    CHECK(a.flatten() == b.flatten());
    CHECK(init_network(cfg, 6).flatten() != a.flatten());
    const double bound = std::sqrt(6.0 / 124.0);
    CHECK(bound == doctest::Approx(0.2200).epsilon(1e-3));
    CHECK(a.W1.cwiseAbs().maxCoeff() <= bound);
    CHECK(a.W1.cwiseAbs().maxCoeff() > 0.9 * bound);
    CHECK(a.b1.isZero());
    CHECK(a.layers[0].bh.isZero());
}

TEST_CASE("variant input layouts") {
    CHECK(small_cfg(ModelVariant::SVSDU).n_inputs() == 14);
    CHECK(small_cfg(ModelVariant::SVSD).n_inputs() == 12);
    CHECK(small_cfg(ModelVariant::SVSU).n_inputs() == 12);
    CHECK(small_cfg(ModelVariant::Heston).n_inputs() == 10);
    CHECK(small_cfg(ModelVariant::SVSD).position(Input::z) == -1);
    CHECK(small_cfg(ModelVariant::SVSU).position(Input::xi) == -1);
}

TEST_CASE("zero network and output bias") {
    auto w = NetworkWeights::zeros(small_cfg());
    Rng rng(1);
    const auto raw = oracle::random_point(rng, w.cfg.input_box);
    CHECK(forward(w, raw) == 0.0);
    const auto d = derivatives(w, raw);
    CHECK(d.P_x == 0.0);
    CHECK(d.P_xx == 0.0);
    CHECK(d.P_vv == 0.0);
    const Input phi[] = {Input::v, Input::rho};
    for (double g : param_jacobian(w, raw, phi)) CHECK(g == 0.0);

    w.b = 0.75;
    CHECK(forward(w, raw) == 0.75);
    auto r = oracle::random_weights(small_cfg(), 3);
    const double before = forward(r, raw);
    r.b += 0.125;
    CHECK(forward(r, raw) - before == doctest::Approx(0.125).epsilon(1e-14));
}

TEST_CASE("matches the straight-line evaluator") {
    Rng rng(2);
    for (auto v : {ModelVariant::SVSDU, ModelVariant::SVSD, ModelVariant::SVSU}) {
        for (int n = 0; n < 20; ++n) {
            const auto w = oracle::random_weights(small_cfg(v, 1 + n % 3, 3 + n % 7), 100 + n);
            const auto raw = oracle::random_point(rng, w.cfg.input_box);
            CHECK(std::abs(forward(w, raw) - oracle::straight_forward(w, raw)) < 1e-12);
        }
    }
}

TEST_CASE("batched evaluation equals pointwise") {
    const auto w = oracle::random_weights(small_cfg(), 4);
    Rng rng(4);
    std::vector<RawInputs> pts;
    for (int n = 0; n < 37; ++n) pts.push_back(oracle::random_point(rng, w.cfg.input_box));
    const auto out = evaluate(w, prepare_inputs(w.cfg, pts), bundle_layout(w.cfg));
    for (std::size_t j = 0; j < pts.size(); ++j) {
        const auto d = derivatives(w, pts[j]);
        CHECK(out(0, static_cast<Eigen::Index>(j)) == doctest::Approx(d.P).epsilon(1e-14));
        CHECK(out(8, static_cast<Eigen::Index>(j)) == doctest::Approx(d.P_vv).epsilon(1e-13));
    }
}

TEST_CASE("input derivatives agree with finite differences") {
    Rng rng(8);
    int checked = 0;
    for (int n = 0; n < 30; ++n) {
        const auto w = oracle::random_weights(small_cfg(ModelVariant::SVSDU, 2, 6), 200 + n);
        const auto raw = oracle::random_point(rng, w.cfg.input_box);
        const auto d = derivatives(w, raw);
        CHECK(d.P == doctest::Approx(forward(w, raw)).epsilon(1e-14));
        const double fs = 1e-6;  // floor for relative error, raw units scaled by the slope
        CHECK(oracle::rel_err(fd1(w, raw, Input::x, 1e-4), d.P_x, fs * slope(w.cfg, Input::x)) < 1e-5);
        CHECK(oracle::rel_err(fd1(w, raw, Input::t, 1e-4), d.P_t, fs * slope(w.cfg, Input::t)) < 1e-5);
        CHECK(oracle::rel_err(fd1(w, raw, Input::v, 1e-4), d.P_v, fs * slope(w.cfg, Input::v)) < 1e-5);
        CHECK(oracle::rel_err(fd1(w, raw, Input::y, 1e-4), d.P_y, fs * slope(w.cfg, Input::y)) < 1e-5);
        CHECK(oracle::rel_err(fd1(w, raw, Input::z, 1e-4), d.P_z, fs * slope(w.cfg, Input::z)) < 1e-5);
        const double f2 = 1e-4;
        const double sxx = slope(w.cfg, Input::x) * slope(w.cfg, Input::x);
        const double sxv = slope(w.cfg, Input::x) * slope(w.cfg, Input::v);
        const double svv = slope(w.cfg, Input::v) * slope(w.cfg, Input::v);
        CHECK(oracle::rel_err(fd2(w, raw, Input::x, Input::x, 1e-3), d.P_xx, f2 * sxx) < 1e-3);
        CHECK(oracle::rel_err(fd2(w, raw, Input::x, Input::v, 1e-3), d.P_xv, f2 * sxv) < 1e-3);
        CHECK(oracle::rel_err(fd2(w, raw, Input::v, Input::v, 1e-3), d.P_vv, f2 * svv) < 1e-3);
        ++checked;
    }
    CHECK(checked == 30);
}

TEST_CASE("parameter jacobian") {
    Rng rng(9);
    const Input phi[] = {Input::rho, Input::kappa, Input::theta, Input::sigma, Input::eta,
                         Input::v,   Input::xi,    Input::y,     Input::z};
    for (int n = 0; n < 10; ++n) {
        const auto w = oracle::random_weights(small_cfg(), 300 + n);
        const auto raw = oracle::random_point(rng, w.cfg.input_box);
        const auto jac = param_jacobian(w, raw, phi);
        for (std::size_t k = 0; k < std::size(phi); ++k) {
            CHECK(oracle::rel_err(fd1(w, raw, phi[k], 1e-4), jac[k], 1e-6 * slope(w.cfg, phi[k])) < 1e-5);
        }
        const Input only_v[] = {Input::v};
        CHECK(param_jacobian(w, raw, only_v)[0] == doctest::Approx(derivatives(w, raw).P_v).epsilon(1e-14));
    }
    const auto w = oracle::random_weights(small_cfg(ModelVariant::SVSD), 1);
    const Input bad[] = {Input::K};
    CHECK_THROWS_AS(param_jacobian(w, RawInputs{}, bad), Error);
    const Input absent[] = {Input::z};
    CHECK_THROWS_AS(param_jacobian(w, RawInputs{}, absent), Error);
}

TEST_CASE("derivatives are invariant to an equivalent rescaling of the box") {
    // Widening the x box and compensating in the first-layer weights leaves the
    // raw-space function unchanged, so raw-space derivatives must agree.
    auto w = oracle::random_weights(small_cfg(), 12);
    auto w2 = w;
    auto& iv = w2.cfg.input_box[Input::x];
    const Interval old = w.cfg.input_box[Input::x];
    iv = {old.lo - 40, old.hi * 3};
    // x_old = a * x_new + c
    const double a = iv.width() / old.width();
    const double c = (2 * (iv.lo - old.lo) + iv.width()) / old.width() - 1;
    const int px = w.cfg.position(Input::x);
    auto fix = [&](const Matrix& U, Matrix& U2, Vector& b2) {
        b2 += c * U.row(px).transpose();
        U2.row(px) = a * U.row(px);
    };
    fix(w.W1, w2.W1, w2.b1);
    for (std::size_t l = 0; l < w.layers.size(); ++l) {
        fix(w.layers[l].Uz, w2.layers[l].Uz, w2.layers[l].bz);
        fix(w.layers[l].Ug, w2.layers[l].Ug, w2.layers[l].bg);
        fix(w.layers[l].Ur, w2.layers[l].Ur, w2.layers[l].br);
        fix(w.layers[l].Uh, w2.layers[l].Uh, w2.layers[l].bh);
    }
    Rng rng(12);
    for (int n = 0; n < 20; ++n) {
        const auto raw = oracle::random_point(rng, w.cfg.input_box);
        const auto d1 = derivatives(w, raw);
        const auto d2 = derivatives(w2, raw);
        CHECK(std::abs(d1.P - d2.P) < 1e-10);
        CHECK(std::abs(d1.P_x - d2.P_x) < 1e-10);
        CHECK(std::abs(d1.P_xx - d2.P_xx) < 1e-10);
        CHECK(std::abs(d1.P_xv - d2.P_xv) < 1e-10);
    }
}

TEST_CASE("weight gradient of the output equals one for the bias") {
    const auto w = oracle::random_weights(small_cfg(), 13);
    Rng rng(13);
    const auto raw = oracle::random_point(rng, w.cfg.input_box);
    const auto xt = prepare_inputs(w.cfg, std::span<const RawInputs>(&raw, 1));
    const auto g = weight_gradient(w, xt, JetLayout{}, [](const Matrix& ch, Matrix& d) {
        d(0, 0) = 1.0;
        return ch(0, 0);
    });
    CHECK(g.gradient.b == 1.0);
    CHECK(g.value == doctest::Approx(forward(w, raw)).epsilon(1e-14));
}

TEST_CASE("full gradient of a tiny net matches dense finite differences") {
    auto cfg = small_cfg(ModelVariant::SVSDU, 1, 3);
    const auto w = oracle::random_weights(cfg, 14);
    Rng rng(14);
    std::vector<RawInputs> pts;
    for (int n = 0; n < 4; ++n) pts.push_back(oracle::random_point(rng, cfg.input_box));
    const auto xt = prepare_inputs(cfg, pts);
    const auto layout = bundle_layout(cfg);
    // a residual-shaped objective mixing value, first and second derivatives
    auto objective = [&](const Matrix& ch, Matrix& d) {
        double acc = 0;
        for (Eigen::Index j = 0; j < ch.cols(); ++j) {
            const double r = ch(0, j) + 3 * ch(2, j) + 2e3 * ch(6, j) - 5e2 * ch(7, j) + 7 * ch(8, j) + ch(1, j);
            // scaled so that rounding in the differences stays below the tolerance
            acc += 1e-5 * r * r;
            const double coef[9] = {1, 1, 3, 0, 0, 0, 2e3, -5e2, 7};
            for (int c = 0; c < 9; ++c) d(c, j) = 2e-5 * r * coef[c];
        }
        return acc;
    };
    const auto g = weight_gradient(w, xt, layout, objective).gradient.flatten();
    auto value_at = [&](const std::vector<double>& flat) {
        auto w2 = w;
        w2.assign(flat);
        Matrix d(layout.channels(), xt.cols());
        return objective(evaluate(w2, xt, layout), d);
    };
    auto flat = w.flatten();
    double worst = 0;
    for (std::size_t k = 0; k < flat.size(); ++k) {
        const double h = 1e-6;
        auto a = flat, b = flat;
        a[k] += h;
        b[k] -= h;
        const double fd = (value_at(a) - value_at(b)) / (2 * h);
        worst = std::max(worst, std::abs(fd - g[k]) / std::max(1.0, std::abs(g[k])));
    }
    CHECK(worst < 1e-6);
}

TEST_CASE("directional derivative of a batch objective") {
    const auto w = oracle::random_weights(small_cfg(ModelVariant::SVSDU, 2, 8), 15);
    Rng rng(15);
    std::vector<RawInputs> pts;
    for (int n = 0; n < 10; ++n) pts.push_back(oracle::random_point(rng, w.cfg.input_box));
    const auto xt = prepare_inputs(w.cfg, pts);
    const auto layout = bundle_layout(w.cfg);
    auto objective = [&](const Matrix& ch, Matrix& d) {
        double acc = 0;
        for (Eigen::Index j = 0; j < ch.cols(); ++j) {
            const double r = ch(0, j) - 2 * ch(1, j) + 50 * ch(5, j) + 1e4 * ch(6, j) + 1e3 * ch(8, j);
            acc += r * r / 10;
            const double coef[9] = {1, -2, 0, 0, 0, 50, 1e4, 0, 1e3};
            for (int c = 0; c < 9; ++c) d(c, j) = 2 * r * coef[c] / 10;
        }
        return acc;
    };
    const auto grad = weight_gradient(w, xt, layout, objective).gradient.flatten();
    std::vector<double> dir(grad.size());
    for (auto& x : dir) x = rng.normal();
    double analytic = 0;
    for (std::size_t k = 0; k < dir.size(); ++k) analytic += dir[k] * grad[k];
    auto value_at = [&](double eps) {
        auto flat = w.flatten();
        for (std::size_t k = 0; k < flat.size(); ++k) flat[k] += eps * dir[k];
        auto w2 = w;
        w2.assign(flat);
        Matrix d(layout.channels(), xt.cols());
        return objective(evaluate(w2, xt, layout), d);
    };
    const double eps = 1e-6;
    const double fd = (value_at(eps) - value_at(-eps)) / (2 * eps);
    CHECK(oracle::rel_err(fd, analytic, 1e-12) < 1e-4);
}

TEST_CASE("chunked gradient equals single pass") {
    NetworkConfig cfg = small_cfg(ModelVariant::SVSDU, 1, 4);
    const auto w = oracle::random_weights(cfg, 16);
    Rng rng(16);
    std::vector<RawInputs> pts;
    for (int n = 0; n < 3; ++n) pts.push_back(oracle::random_point(rng, cfg.input_box));
    const auto xt = prepare_inputs(cfg, pts);
    auto obj = [](const Matrix& ch, Matrix& d) {
        d = 2 * ch;
        return ch.squaredNorm();
    };
    const auto a = weight_gradient(w, xt, JetLayout{}, obj);
    double by_hand = 0;
    for (const auto& p : pts) by_hand += std::pow(forward(w, p), 2);
    CHECK(a.value == doctest::Approx(by_hand).epsilon(1e-14));
}

TEST_CASE("weights round trip through the container") {
    auto cfg = small_cfg(ModelVariant::SVSU, 2, 5);
    cfg.input_box[Input::v] = {0.02, 0.2};
    const auto w = oracle::random_weights(cfg, 17);
    const auto path = (std::filesystem::temp_directory_path() / "svsdu_weights_test.txt").string();
    save_weights(w, path);
    const auto r = load_weights(path);
    std::remove(path.c_str());
    CHECK(r.flatten() == w.flatten());
    CHECK(r.cfg.variant == ModelVariant::SVSU);
    CHECK(r.cfg.width == 5);
    CHECK(r.cfg.input_box[Input::v].hi == 0.2);

    auto text = serialize_weights(w);
    const auto pos = text.find("W1 12 5");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, 7, "W1 12 6");
    CHECK_THROWS_AS(parse_weights(text), Error);
}
