#include "svsdu/dgm/network.hpp"

#include "svsdu/error.hpp"
#include "svsdu/rng.hpp"

#include <algorithm>
#include <cmath>

namespace svsdu::dgm {

namespace {

using Block = Eigen::Block<Matrix, Eigen::Dynamic, Eigen::Dynamic, true>;
using ConstBlock = Eigen::Block<const Matrix, Eigen::Dynamic, Eigen::Dynamic, true>;

constexpr std::size_t kCacheBudgetBytes = std::size_t{256} << 20;

// Truncated Taylor jets over a batch: an m x (C*B) matrix whose column block
// c holds channel c for all B points.
struct Shape {
    Eigen::Index B = 0;
    int n_first = 0;
    std::vector<std::pair<int, int>> pairs;

    [[nodiscard]] int channels() const { return 1 + n_first + static_cast<int>(pairs.size()); }
    [[nodiscard]] Eigen::Index cols() const { return B * channels(); }
    [[nodiscard]] int pair_channel(std::size_t p) const { return 1 + n_first + static_cast<int>(p); }
};

Block ch(Matrix& m, const Shape& s, int c) { return m.middleCols(c * s.B, s.B); }
ConstBlock ch(const Matrix& m, const Shape& s, int c) { return m.middleCols(c * s.B, s.B); }

// tanh through the vectorized exp; absolute error stays near machine epsilon.
Eigen::ArrayXXd fast_tanh(const ConstBlock& x) {
    return 1.0 - 2.0 / ((2.0 * x.array().max(-40.0).min(40.0)).exp() + 1.0);
}

void tanh_forward(const Matrix& p, Matrix& out, const Shape& s) {
    out.resize(p.rows(), p.cols());
    const Eigen::ArrayXXd a = fast_tanh(ch(p, s, 0));
    const auto d1 = (1.0 - a.square()).eval();
    ch(out, s, 0) = a.matrix();
    for (int k = 1; k <= s.n_first; ++k) ch(out, s, k) = (d1 * ch(p, s, k).array()).matrix();
    if (s.pairs.empty()) return;
    const auto d2 = (-2.0 * a * d1).eval();
    for (std::size_t q = 0; q < s.pairs.size(); ++q) {
        const auto [i, j] = s.pairs[q];
        const int c = s.pair_channel(q);
        ch(out, s, c) = (d2 * ch(p, s, 1 + i).array() * ch(p, s, 1 + j).array() + d1 * ch(p, s, c).array()).matrix();
    }
}

// dp = d out / d p applied to dout.
void tanh_backward(const Matrix& p, const Matrix& out, const Matrix& dout, Matrix& dp, const Shape& s) {
    dp.resize(p.rows(), p.cols());
    const auto a = ch(out, s, 0).array();
    const auto d1 = (1.0 - a.square()).eval();
    const auto d2 = (-2.0 * a * d1).eval();
    auto dp0 = (d1 * ch(dout, s, 0).array()).eval();
    for (int k = 1; k <= s.n_first; ++k) {
        dp0 += d2 * ch(p, s, k).array() * ch(dout, s, k).array();
        ch(dp, s, k) = (d1 * ch(dout, s, k).array()).matrix();
    }
    if (!s.pairs.empty()) {
        const auto d3 = (d1 * (6.0 * a.square() - 2.0)).eval();
        for (std::size_t q = 0; q < s.pairs.size(); ++q) {
            const auto [i, j] = s.pairs[q];
            const int c = s.pair_channel(q);
            const auto g = ch(dout, s, c).array();
            const auto pi = ch(p, s, 1 + i).array();
            const auto pj = ch(p, s, 1 + j).array();
            dp0 += (d3 * pi * pj + d2 * ch(p, s, c).array()) * g;
            ch(dp, s, 1 + i).array() += d2 * pj * g;
            ch(dp, s, 1 + j).array() += d2 * pi * g;
            ch(dp, s, c) = (d1 * g).matrix();
        }
    }
    ch(dp, s, 0) = dp0.matrix();
}

void mul_forward(const Matrix& f, const Matrix& g, Matrix& out, const Shape& s) {
    out.resize(f.rows(), f.cols());
    const auto f0 = ch(f, s, 0).array();
    const auto g0 = ch(g, s, 0).array();
    ch(out, s, 0) = (f0 * g0).matrix();
    for (int k = 1; k <= s.n_first; ++k) {
        ch(out, s, k) = (ch(f, s, k).array() * g0 + f0 * ch(g, s, k).array()).matrix();
    }
    for (std::size_t q = 0; q < s.pairs.size(); ++q) {
        const auto [i, j] = s.pairs[q];
        const int c = s.pair_channel(q);
        ch(out, s, c) = (ch(f, s, c).array() * g0 + ch(f, s, 1 + i).array() * ch(g, s, 1 + j).array() +
                         ch(f, s, 1 + j).array() * ch(g, s, 1 + i).array() + f0 * ch(g, s, c).array())
                            .matrix();
    }
}

// Accumulates into df and dg, which must be sized already.
void mul_backward(const Matrix& f, const Matrix& g, const Matrix& dout, Matrix& df, Matrix& dg, const Shape& s) {
    const auto f0 = ch(f, s, 0).array();
    const auto g0 = ch(g, s, 0).array();
    const auto o0 = ch(dout, s, 0).array();
    ch(df, s, 0).array() += o0 * g0;
    ch(dg, s, 0).array() += o0 * f0;
    for (int k = 1; k <= s.n_first; ++k) {
        const auto o = ch(dout, s, k).array();
        ch(df, s, 0).array() += o * ch(g, s, k).array();
        ch(dg, s, 0).array() += o * ch(f, s, k).array();
        ch(df, s, k).array() += o * g0;
        ch(dg, s, k).array() += o * f0;
    }
    for (std::size_t q = 0; q < s.pairs.size(); ++q) {
        const auto [i, j] = s.pairs[q];
        const int c = s.pair_channel(q);
        const auto o = ch(dout, s, c).array();
        ch(df, s, 0).array() += o * ch(g, s, c).array();
        ch(dg, s, 0).array() += o * ch(f, s, c).array();
        ch(df, s, c).array() += o * g0;
        ch(dg, s, c).array() += o * f0;
        ch(df, s, 1 + i).array() += o * ch(g, s, 1 + j).array();
        ch(df, s, 1 + j).array() += o * ch(g, s, 1 + i).array();
        ch(dg, s, 1 + j).array() += o * ch(f, s, 1 + i).array();
        ch(dg, s, 1 + i).array() += o * ch(f, s, 1 + j).array();
    }
}

struct Seeds {
    std::vector<int> positions;  // network-input position of each direction
    std::vector<double> slopes;  // d normalized / d raw
};

// p = x U + S W + b as a jet; the input contributes only through value and
// first-order channels.
void affine_forward(const Matrix& U, const Matrix* W, const Vector& b, const Matrix& xt, const Matrix* S,
                    const Seeds& seeds, Matrix& p, const Shape& s) {
    const Eigen::Index m = U.cols();
    if (W != nullptr) {
        p.noalias() = W->transpose() * (*S);
    } else {
        p.setZero(m, s.cols());
    }
    ch(p, s, 0).noalias() += U.transpose() * xt;
    ch(p, s, 0).colwise() += b;
    for (int k = 0; k < s.n_first; ++k) {
        ch(p, s, 1 + k).colwise() += seeds.slopes[k] * U.row(seeds.positions[k]).transpose();
    }
}

void affine_backward(const Matrix& U, const Matrix* W, const Matrix& xt, const Matrix* S, const Matrix& dp,
                     const Seeds& seeds, Matrix& dU, Matrix* dW, Vector& db, Matrix* dS, const Shape& s) {
    (void)U;
    dU.noalias() += xt * ch(dp, s, 0).transpose();
    db += ch(dp, s, 0).rowwise().sum();
    for (int k = 0; k < s.n_first; ++k) {
        dU.row(seeds.positions[k]) += seeds.slopes[k] * ch(dp, s, 1 + k).rowwise().sum().transpose();
    }
    if (W != nullptr) {
        dW->noalias() += (*S) * dp.transpose();
        dS->noalias() += (*W) * dp;
    }
}

struct LayerCache {
    Matrix S, pZ, Z, pG, G, pR, R, SR, pH, H, omG;
};

struct ForwardCache {
    Matrix p1;
    std::vector<LayerCache> layers;
    Matrix S_out;
};

Seeds make_seeds(const NetworkConfig& cfg, const JetLayout& layout) {
    Seeds seeds;
    for (Input in : layout.dirs) {
        const int pos = cfg.position(in);
        if (pos < 0) {
            throw Error(ErrorCode::UnknownParameter,
                        "input '" + std::string(input_name(in)) + "' is not used by this network");
        }
        seeds.positions.push_back(pos);
        seeds.slopes.push_back(normalize_slope(cfg.input_box[in]));
    }
    return seeds;
}

Shape make_shape(const JetLayout& layout, Eigen::Index B) {
    Shape s;
    s.B = B;
    s.n_first = static_cast<int>(layout.dirs.size());
    s.pairs = layout.pairs;
    for (const auto& [i, j] : s.pairs) {
        if (i < 0 || j < 0 || i >= s.n_first || j >= s.n_first) {
            throw Error(ErrorCode::ShapeMismatch, "jet pair refers to a missing direction");
        }
    }
    return s;
}

// Runs the network on one chunk. Returns the output channels as C x B.
Matrix run_forward(const NetworkWeights& w, const Matrix& xt, const Seeds& seeds, const Shape& s,
                   ForwardCache* cache) {
    ForwardCache local;
    ForwardCache& c = cache != nullptr ? *cache : local;
    const bool keep = cache != nullptr;
    c.layers.resize(keep ? w.layers.size() : 1);

    affine_forward(w.W1, nullptr, w.b1, xt, nullptr, seeds, c.p1, s);
    Matrix S;
    tanh_forward(c.p1, S, s);

    for (std::size_t l = 0; l < w.layers.size(); ++l) {
        const auto& L = w.layers[l];
        LayerCache& lc = c.layers[keep ? l : 0];
        lc.S = std::move(S);
        affine_forward(L.Uz, &L.Wz, L.bz, xt, &lc.S, seeds, lc.pZ, s);
        tanh_forward(lc.pZ, lc.Z, s);
        affine_forward(L.Ug, &L.Wg, L.bg, xt, &lc.S, seeds, lc.pG, s);
        tanh_forward(lc.pG, lc.G, s);
        affine_forward(L.Ur, &L.Wr, L.br, xt, &lc.S, seeds, lc.pR, s);
        tanh_forward(lc.pR, lc.R, s);
        mul_forward(lc.S, lc.R, lc.SR, s);
        affine_forward(L.Uh, &L.Wh, L.bh, xt, &lc.SR, seeds, lc.pH, s);
        tanh_forward(lc.pH, lc.H, s);
        lc.omG = -lc.G;
        ch(lc.omG, s, 0).array() += 1.0;
        Matrix a, b;
        mul_forward(lc.omG, lc.H, a, s);
        mul_forward(lc.Z, lc.S, b, s);
        S = a + b;
    }

    const Eigen::RowVectorXd flat = w.W.transpose() * S;
    Matrix out(s.channels(), s.B);
    for (int k = 0; k < s.channels(); ++k) out.row(k) = flat.segment(k * s.B, s.B);
    out.row(0).array() += w.b;
    if (keep) c.S_out = std::move(S);
    return out;
}

void run_backward(const NetworkWeights& w, const Matrix& xt, const Seeds& seeds, const Shape& s,
                  const ForwardCache& c, const Matrix& d_out, NetworkWeights& g) {
    Eigen::RowVectorXd flat(s.cols());
    for (int k = 0; k < s.channels(); ++k) flat.segment(k * s.B, s.B) = d_out.row(k);
    g.b += d_out.row(0).sum();
    g.W.noalias() += c.S_out * flat.transpose();
    Matrix dS = w.W * flat;

    const Eigen::Index m = w.W.size();
    Matrix d_omG, dH, dZ, dS_prev, dSR, dR, dp;
    for (std::size_t li = w.layers.size(); li-- > 0;) {
        const auto& L = w.layers[li];
        auto& G = g.layers[li];
        const LayerCache& lc = c.layers[li];

        for (Matrix* z : {&d_omG, &dH, &dZ, &dS_prev, &dR}) z->setZero(m, s.cols());
        mul_backward(lc.omG, lc.H, dS, d_omG, dH, s);
        mul_backward(lc.Z, lc.S, dS, dZ, dS_prev, s);

        tanh_backward(lc.pH, lc.H, dH, dp, s);
        dSR.noalias() = L.Wh * dp;
        affine_backward(L.Uh, nullptr, xt, nullptr, dp, seeds, G.Uh, nullptr, G.bh, nullptr, s);
        G.Wh.noalias() += lc.SR * dp.transpose();
        mul_backward(lc.S, lc.R, dSR, dS_prev, dR, s);

        tanh_backward(lc.pR, lc.R, dR, dp, s);
        affine_backward(L.Ur, &L.Wr, xt, &lc.S, dp, seeds, G.Ur, &G.Wr, G.br, &dS_prev, s);

        d_omG = -d_omG;
        const Matrix& dG = d_omG;
        tanh_backward(lc.pG, lc.G, dG, dp, s);
        affine_backward(L.Ug, &L.Wg, xt, &lc.S, dp, seeds, G.Ug, &G.Wg, G.bg, &dS_prev, s);

        tanh_backward(lc.pZ, lc.Z, dZ, dp, s);
        affine_backward(L.Uz, &L.Wz, xt, &lc.S, dp, seeds, G.Uz, &G.Wz, G.bz, &dS_prev, s);

        std::swap(dS, dS_prev);
    }

    tanh_backward(c.p1, c.layers.front().S, dS, dp, s);
    affine_backward(w.W1, nullptr, xt, nullptr, dp, seeds, g.W1, nullptr, g.b1, nullptr, s);
}

Eigen::Index chunk_columns(const NetworkWeights& w, const Shape& s) {
    const std::size_t per_point = 12 * (w.layers.size() + 1) * static_cast<std::size_t>(w.W.size()) *
                                  static_cast<std::size_t>(s.channels()) * sizeof(double);
    return std::max<Eigen::Index>(64, static_cast<Eigen::Index>(kCacheBudgetBytes / std::max<std::size_t>(1, per_point)));
}

void check_inputs(const NetworkWeights& w, const Matrix& xt) {
    if (xt.rows() != w.cfg.n_inputs()) throw Error(ErrorCode::ShapeMismatch, "input rows do not match the network");
}

}  // namespace

std::vector<Input> variant_inputs(ModelVariant v) {
    std::vector<Input> out;
    for (std::size_t k = 0; k < kInputCount; ++k) {
        const auto in = static_cast<Input>(k);
        if (!has_upper_boundary(v) && (in == Input::y || in == Input::xi)) continue;
        if (!has_lower_boundary(v) && (in == Input::z || in == Input::eta)) continue;
        out.push_back(in);
    }
    return out;
}

std::vector<Input> NetworkConfig::inputs() const { return variant_inputs(variant); }

int NetworkConfig::position(Input in) const {
    const auto ins = inputs();
    const auto it = std::find(ins.begin(), ins.end(), in);
    return it == ins.end() ? -1 : static_cast<int>(it - ins.begin());
}

void NetworkConfig::validate() const {
    if (n_hidden_layers < 1 || width < 1) {
        throw Error(ErrorCode::InvalidArgument, "network needs at least one hidden layer and one node");
    }
    input_box.validate();
}

NetworkWeights NetworkWeights::zeros(const NetworkConfig& cfg) {
    cfg.validate();
    const Eigen::Index n = cfg.n_inputs();
    const Eigen::Index m = cfg.width;
    NetworkWeights w;
    w.cfg = cfg;
    w.W1 = Matrix::Zero(n, m);
    w.b1 = Vector::Zero(m);
    w.layers.resize(static_cast<std::size_t>(cfg.n_hidden_layers));
    for (auto& L : w.layers) {
        for (Matrix* u : {&L.Uz, &L.Ug, &L.Ur, &L.Uh}) *u = Matrix::Zero(n, m);
        for (Matrix* x : {&L.Wz, &L.Wg, &L.Wr, &L.Wh}) *x = Matrix::Zero(m, m);
        for (Vector* b : {&L.bz, &L.bg, &L.br, &L.bh}) *b = Vector::Zero(m);
    }
    w.W = Vector::Zero(m);
    w.b = 0.0;
    return w;
}

std::size_t NetworkWeights::parameter_count() const {
    std::size_t n = 1;
    visit([&](const std::string&, const auto& a) { n += static_cast<std::size_t>(a.size()); });
    return n;
}

std::vector<double> NetworkWeights::flatten() const {
    std::vector<double> out;
    out.reserve(parameter_count());
    visit([&](const std::string&, const auto& a) { out.insert(out.end(), a.data(), a.data() + a.size()); });
    out.push_back(b);
    return out;
}

void NetworkWeights::assign(std::span<const double> flat) {
    if (flat.size() != parameter_count()) throw Error(ErrorCode::ShapeMismatch, "flat weight vector has wrong length");
    std::size_t pos = 0;
    visit([&](const std::string&, auto& a) {
        std::copy_n(flat.data() + pos, a.size(), a.data());
        pos += static_cast<std::size_t>(a.size());
    });
    b = flat[pos];
}

void NetworkWeights::set_zero() {
    visit([](const std::string&, auto& a) { a.setZero(); });
    b = 0.0;
}

bool NetworkWeights::all_finite() const {
    bool ok = std::isfinite(b);
    visit([&](const std::string&, const auto& a) { ok = ok && a.allFinite(); });
    return ok;
}

NetworkWeights init_network(const NetworkConfig& cfg, std::uint64_t seed) {
    NetworkWeights w = NetworkWeights::zeros(cfg);
    Rng rng(seed, 0);
    w.visit([&](const std::string& name, auto& a) {
        if (name[0] == 'b') return;
        const double fan_in = static_cast<double>(a.rows());
        const double fan_out = static_cast<double>(a.cols());
        const double bound = std::sqrt(6.0 / (fan_in + fan_out));
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            for (Eigen::Index i = 0; i < a.rows(); ++i) a(i, j) = rng.uniform(-bound, bound);
    });
    return w;
}

Matrix prepare_inputs(const NetworkConfig& cfg, std::span<const RawInputs> points) {
    const auto ins = cfg.inputs();
    Matrix xt(static_cast<Eigen::Index>(ins.size()), static_cast<Eigen::Index>(points.size()));
    for (std::size_t j = 0; j < points.size(); ++j) {
        for (std::size_t k = 0; k < ins.size(); ++k) {
            xt(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) =
                normalize(points[j][idx(ins[k])], cfg.input_box[ins[k]]);
        }
    }
    return xt;
}

Matrix evaluate(const NetworkWeights& w, const Matrix& xt, const JetLayout& layout) {
    check_inputs(w, xt);
    const Seeds seeds = make_seeds(w.cfg, layout);
    const Eigen::Index n = xt.cols();
    Matrix out(layout.channels(), n);
    const Eigen::Index chunk = chunk_columns(w, make_shape(layout, 1));
    for (Eigen::Index start = 0; start < n; start += chunk) {
        const Eigen::Index len = std::min(chunk, n - start);
        const Shape s = make_shape(layout, len);
        out.middleCols(start, len) = run_forward(w, xt.middleCols(start, len), seeds, s, nullptr);
    }
    return out;
}

GradientResult weight_gradient(const NetworkWeights& w, const Matrix& xt, const JetLayout& layout,
                               const Objective& objective) {
    check_inputs(w, xt);
    const Seeds seeds = make_seeds(w.cfg, layout);
    const Eigen::Index n = xt.cols();
    const Eigen::Index chunk = chunk_columns(w, make_shape(layout, 1));
    GradientResult res;
    res.gradient = NetworkWeights::zeros(w.cfg);

    Matrix channels(layout.channels(), n);
    Matrix d_channels = Matrix::Zero(layout.channels(), n);
    if (n <= chunk) {
        const Shape s = make_shape(layout, n);
        ForwardCache cache;
        channels = run_forward(w, xt, seeds, s, &cache);
        res.value = objective(channels, d_channels);
        run_backward(w, xt, seeds, s, cache, d_channels, res.gradient);
    } else {
        // Chunks are replayed with caching so memory stays bounded.
        channels = evaluate(w, xt, layout);
        res.value = objective(channels, d_channels);
        for (Eigen::Index start = 0; start < n; start += chunk) {
            const Eigen::Index len = std::min(chunk, n - start);
            const Shape s = make_shape(layout, len);
            ForwardCache cache;
            const Matrix x_chunk = xt.middleCols(start, len);
            run_forward(w, x_chunk, seeds, s, &cache);
            run_backward(w, x_chunk, seeds, s, cache, d_channels.middleCols(start, len), res.gradient);
        }
    }
    if (!std::isfinite(res.value) || !res.gradient.all_finite()) {
        throw Error(ErrorCode::NonFiniteGradient, "objective or weight gradient is not finite");
    }
    return res;
}

double forward(const NetworkWeights& w, const RawInputs& raw) {
    const Matrix xt = prepare_inputs(w.cfg, std::span<const RawInputs>(&raw, 1));
    const double p = evaluate(w, xt, JetLayout{})(0, 0);
    if (!std::isfinite(p)) throw Error(ErrorCode::NonFiniteOutput, "network output is not finite");
    return p;
}

JetLayout bundle_layout(const NetworkConfig& cfg) {
    JetLayout layout;
    for (Input in : {Input::t, Input::x, Input::y, Input::z, Input::v}) {
        if (cfg.position(in) >= 0) layout.dirs.push_back(in);
    }
    auto at = [&](Input in) {
        return static_cast<int>(std::find(layout.dirs.begin(), layout.dirs.end(), in) - layout.dirs.begin());
    };
    layout.pairs = {{at(Input::x), at(Input::x)}, {at(Input::x), at(Input::v)}, {at(Input::v), at(Input::v)}};
    return layout;
}

DerivativeBundle bundle_from_channels(const NetworkConfig& cfg, const JetLayout& layout, const Matrix& channels,
                                      Eigen::Index column) {
    (void)cfg;
    DerivativeBundle d;
    d.P = channels(0, column);
    for (std::size_t k = 0; k < layout.dirs.size(); ++k) {
        const double v = channels(static_cast<Eigen::Index>(1 + k), column);
        switch (layout.dirs[k]) {
            case Input::t: d.P_t = v; break;
            case Input::x: d.P_x = v; break;
            case Input::y: d.P_y = v; break;
            case Input::z: d.P_z = v; break;
            case Input::v: d.P_v = v; break;
            default: break;
        }
    }
    const Eigen::Index base = static_cast<Eigen::Index>(1 + layout.dirs.size());
    for (std::size_t q = 0; q < layout.pairs.size(); ++q) {
        const Input a = layout.dirs[static_cast<std::size_t>(layout.pairs[q].first)];
        const Input b = layout.dirs[static_cast<std::size_t>(layout.pairs[q].second)];
        const double v = channels(base + static_cast<Eigen::Index>(q), column);
        if (a == Input::x && b == Input::x) d.P_xx = v;
        if ((a == Input::x && b == Input::v) || (a == Input::v && b == Input::x)) d.P_xv = v;
        if (a == Input::v && b == Input::v) d.P_vv = v;
    }
    return d;
}

DerivativeBundle derivatives(const NetworkWeights& w, const RawInputs& raw) {
    const Matrix xt = prepare_inputs(w.cfg, std::span<const RawInputs>(&raw, 1));
    const JetLayout layout = bundle_layout(w.cfg);
    const Matrix ch = evaluate(w, xt, layout);
    if (!ch.allFinite()) throw Error(ErrorCode::NonFiniteDerivative, "network derivatives are not finite");
    return bundle_from_channels(w.cfg, layout, ch, 0);
}

bool is_calibratable(Input in) {
    switch (in) {
        case Input::rho:
        case Input::kappa:
        case Input::theta:
        case Input::sigma:
        case Input::eta:
        case Input::v:
        case Input::xi:
        case Input::y:
        case Input::z: return true;
        default: return false;
    }
}

std::vector<double> param_jacobian(const NetworkWeights& w, const RawInputs& raw, std::span<const Input> phi) {
    JetLayout layout;
    for (Input in : phi) {
        if (!is_calibratable(in) || w.cfg.position(in) < 0) {
            throw Error(ErrorCode::UnknownParameter, "'" + std::string(input_name(in)) + "' is not calibratable here");
        }
        layout.dirs.push_back(in);
    }
    const Matrix xt = prepare_inputs(w.cfg, std::span<const RawInputs>(&raw, 1));
    const Matrix ch = evaluate(w, xt, layout);
    if (!ch.allFinite()) throw Error(ErrorCode::NonFiniteDerivative, "network derivatives are not finite");
    std::vector<double> out(phi.size());
    for (std::size_t k = 0; k < phi.size(); ++k) out[k] = ch(static_cast<Eigen::Index>(1 + k), 0);
    return out;
}

}  // namespace svsdu::dgm
