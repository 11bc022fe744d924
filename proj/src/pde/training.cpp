#include "svsdu/pde/training.hpp"

#include "svsdu/error.hpp"
#include "svsdu/kv.hpp"
#include "svsdu/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>

namespace svsdu::pde {

using dgm::JetLayout;
using dgm::Matrix;

namespace {

constexpr long kMaxConsecutiveRejects = 1'000'000;

void require_region(const SamplePoint& pt, Region r) {
    if (pt.region != r) {
        throw Error(ErrorCode::RegionMismatch, "expected a " + std::string(to_string(r)) + " point, got " +
                                                   std::string(to_string(pt.region)));
    }
}

int dir_index(const JetLayout& l, Input in) {
    const auto it = std::find(l.dirs.begin(), l.dirs.end(), in);
    return it == l.dirs.end() ? -1 : static_cast<int>(it - l.dirs.begin());
}

JetLayout layout_for(Region region, ModelVariant v) {
    JetLayout l;
    switch (region) {
        case Region::Interior:
            l.dirs = {Input::t, Input::x};
            if (has_upper_boundary(v)) l.dirs.push_back(Input::y);
            if (has_lower_boundary(v)) l.dirs.push_back(Input::z);
            l.dirs.push_back(Input::v);
            l.pairs = {{1, 1}, {1, dir_index(l, Input::v)}, {dir_index(l, Input::v), dir_index(l, Input::v)}};
            break;
        case Region::Upper:
            l.dirs = {Input::x, Input::y, Input::v};
            l.pairs = {{0, 0}, {0, 2}};
            break;
        case Region::Lower:
            l.dirs = {Input::x, Input::z, Input::v};
            l.pairs = {{0, 0}, {0, 2}};
            break;
        case Region::Terminal: break;
    }
    return l;
}

Eigen::VectorXd residual_values(const ResidualForm& f, const Matrix& channels) {
    return (f.coef.cwiseProduct(channels)).colwise().sum().transpose() + f.offset;
}

struct RegionTerm {
    double mse = 0.0;
    dgm::NetworkWeights gradient;
};

RegionTerm region_term(const dgm::NetworkWeights& w, const Matrix& xt, const ResidualForm& form, double weight) {
    const double n = static_cast<double>(xt.cols());
    double mse = 0.0;
    auto objective = [&](const Matrix& ch, Matrix& d) {
        const Eigen::VectorXd r = residual_values(form, ch);
        mse = r.squaredNorm() / n;
        d = form.coef * 0.0;
        for (Eigen::Index j = 0; j < ch.cols(); ++j) d.col(j) = (2.0 * weight / n * r[j]) * form.coef.col(j);
        return weight * mse;
    };
    auto g = dgm::weight_gradient(w, xt, form.layout, objective);
    return RegionTerm{mse, std::move(g.gradient)};
}

double region_weight(Region r, const LossWeights& lw) {
    switch (r) {
        case Region::Interior: return lw.interior;
        case Region::Upper:
        case Region::Lower: return lw.boundary;
        case Region::Terminal: return lw.terminal;
    }
    return 0.0;
}

std::vector<double> parse_list(const std::string& text) {
    std::vector<double> out;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto next = text.find(',', pos);
        std::string tok = text.substr(pos, next == std::string::npos ? std::string::npos : next - pos);
        tok.erase(0, tok.find_first_not_of(" \t"));
        tok.erase(tok.find_last_not_of(" \t") + 1);
        double v = 0.0;
        const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (tok.empty() || res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
            throw Error(ErrorCode::ParseError, "bad number list '" + text + "'");
        }
        out.push_back(v);
        if (next == std::string::npos) break;
        pos = next + 1;
    }
    return out;
}

std::string join_list(const std::vector<double>& xs) {
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? "," : "") + format_double(xs[i]);
    return out;
}

}  // namespace

std::string_view to_string(Region r) noexcept {
    switch (r) {
        case Region::Interior: return "interior";
        case Region::Upper: return "upper";
        case Region::Lower: return "lower";
        case Region::Terminal: return "terminal";
    }
    return "interior";
}

std::vector<Region> active_regions(ModelVariant v) {
    std::vector<Region> out = {Region::Interior};
    if (has_upper_boundary(v)) out.push_back(Region::Upper);
    if (has_lower_boundary(v)) out.push_back(Region::Lower);
    out.push_back(Region::Terminal);
    return out;
}

double interior_residual(const DerivativeBundle& d, const SamplePoint& pt, ModelVariant v) {
    require_region(pt, Region::Interior);
    const double x = pt[Input::x], y = pt[Input::y], z = pt[Input::z], vv = pt[Input::v];
    const double r = pt[Input::r], rho = pt[Input::rho], kappa = pt[Input::kappa], theta = pt[Input::theta];
    const double sigma = pt[Input::sigma];
    double res = 0.5 * vv * x * x * d.P_xx + rho * sigma * vv * x * d.P_xv + 0.5 * sigma * sigma * vv * d.P_vv +
                 r * x * d.P_x + kappa * (theta - vv) * d.P_v + d.P_t - r * d.P;
    if (has_upper_boundary(v)) res += r * y * d.P_y;
    if (has_lower_boundary(v)) res += r * z * d.P_z;
    return res;
}

double boundary_residual_upper(const DerivativeBundle& d, const SamplePoint& pt) {
    require_region(pt, Region::Upper);
    const double y = pt[Input::y], v = pt[Input::v];
    return d.P_y - (0.5 * v * y * d.P_xx + pt[Input::rho] * pt[Input::sigma] * v * d.P_xv) * pt[Input::xi];
}

double boundary_residual_lower(const DerivativeBundle& d, const SamplePoint& pt) {
    require_region(pt, Region::Lower);
    const double z = pt[Input::z], v = pt[Input::v];
    return d.P_z + (0.5 * v * z * d.P_xx + pt[Input::rho] * pt[Input::sigma] * v * d.P_xv) * pt[Input::eta];
}

double terminal_residual(double value, const SamplePoint& pt) {
    require_region(pt, Region::Terminal);
    return value - payoff(pt[Input::x], pt[Input::K]);
}

std::vector<SamplePoint> sample_batch(Region region, const DomainBox& box, std::size_t n, std::uint64_t seed,
                                      const SamplingRecipe& recipe, std::uint64_t stream) {
    if (n < 1) throw Error(ErrorCode::InvalidArgument, "sample size must be at least 1");
    box.validate();
    Rng rng(seed, stream);
    std::vector<SamplePoint> out(n);
    const auto draw = [&](Input in) { return rng.uniform(box[in].lo, box[in].hi); };
    for (auto& pt : out) {
        pt.region = region;
        auto& raw = pt.raw;
        for (Input in : {Input::K, Input::r, Input::rho, Input::eta, Input::T, Input::xi}) raw[idx(in)] = draw(in);
        long rejects = 0;
        while (true) {
            const double kappa = draw(Input::kappa);
            const double theta = draw(Input::theta);
            const double sigma = draw(Input::sigma);
            if (2.0 * kappa * theta > sigma * sigma) {
                raw[idx(Input::kappa)] = kappa;
                raw[idx(Input::theta)] = theta;
                raw[idx(Input::sigma)] = sigma;
                break;
            }
            if (++rejects >= kMaxConsecutiveRejects) {
                throw Error(ErrorCode::RejectionBudget, "Feller rejection sampling exhausted its budget");
            }
        }
        const double m = rng.uniform(recipe.m_lo, recipe.m_hi);
        const double z = rng.uniform(recipe.z_lo, m - recipe.gap);
        const double y = rng.uniform(m + recipe.gap, m + recipe.y_span);
        double x = 0.0;
        switch (region) {
            case Region::Upper: x = y; break;
            case Region::Lower: x = z; break;
            default:
                do {
                    x = rng.uniform(z + recipe.gap, y);
                } while (!(x < y));
                break;
        }
        const double T = raw[idx(Input::T)];
        raw[idx(Input::t)] = region == Region::Terminal ? T : rng.uniform(0.0, T);
        raw[idx(Input::v)] = draw(Input::v);
        raw[idx(Input::x)] = x;
        raw[idx(Input::y)] = y;
        raw[idx(Input::z)] = z;
    }
    return out;
}

ResidualForm residual_form(Region region, ModelVariant v, const std::vector<SamplePoint>& pts) {
    ResidualForm f;
    f.layout = layout_for(region, v);
    const auto n = static_cast<Eigen::Index>(pts.size());
    f.coef = Matrix::Zero(f.layout.channels(), n);
    f.offset = Eigen::VectorXd::Zero(n);
    const int nd = static_cast<int>(f.layout.dirs.size());
    auto dir_row = [&](Input in) { return 1 + dir_index(f.layout, in); };
    for (Eigen::Index j = 0; j < n; ++j) {
        const auto& pt = pts[static_cast<std::size_t>(j)];
        require_region(pt, region);
        const double x = pt[Input::x], y = pt[Input::y], z = pt[Input::z], vv = pt[Input::v];
        const double r = pt[Input::r], rho = pt[Input::rho], sigma = pt[Input::sigma];
        switch (region) {
            case Region::Interior:
                f.coef(0, j) = -r;
                f.coef(dir_row(Input::t), j) = 1.0;
                f.coef(dir_row(Input::x), j) = r * x;
                if (has_upper_boundary(v)) f.coef(dir_row(Input::y), j) = r * y;
                if (has_lower_boundary(v)) f.coef(dir_row(Input::z), j) = r * z;
                f.coef(dir_row(Input::v), j) = pt[Input::kappa] * (pt[Input::theta] - vv);
                f.coef(1 + nd, j) = 0.5 * vv * x * x;
                f.coef(2 + nd, j) = rho * sigma * vv * x;
                f.coef(3 + nd, j) = 0.5 * sigma * sigma * vv;
                break;
            case Region::Upper: {
                const double xi = pt[Input::xi];
                f.coef(dir_row(Input::y), j) = 1.0;
                f.coef(1 + nd, j) = -0.5 * vv * y * xi;
                f.coef(2 + nd, j) = -rho * sigma * vv * xi;
                break;
            }
            case Region::Lower: {
                const double eta = pt[Input::eta];
                f.coef(dir_row(Input::z), j) = 1.0;
                f.coef(1 + nd, j) = 0.5 * vv * z * eta;
                f.coef(2 + nd, j) = rho * sigma * vv * eta;
                break;
            }
            case Region::Terminal:
                f.coef(0, j) = 1.0;
                f.offset[j] = -payoff(x, pt[Input::K]);
                break;
        }
    }
    return f;
}

Eigen::VectorXd residuals(const dgm::NetworkWeights& w, Region region, const std::vector<SamplePoint>& pts) {
    std::vector<RawInputs> raw(pts.size());
    std::transform(pts.begin(), pts.end(), raw.begin(), [](const SamplePoint& p) { return p.raw; });
    const auto form = residual_form(region, w.cfg.variant, pts);
    return residual_values(form, dgm::evaluate(w, dgm::prepare_inputs(w.cfg, raw), form.layout));
}

LossValue loss(const dgm::NetworkWeights& w, const RegionBatches& b, const LossWeights& lw) {
    LossValue out;
    for (Region r : active_regions(w.cfg.variant)) {
        const auto& pts = b.points[static_cast<std::size_t>(r)];
        if (pts.empty()) throw Error(ErrorCode::InvalidArgument, "empty batch for region " + std::string(to_string(r)));
        const double mse = residuals(w, r, pts).squaredNorm() / static_cast<double>(pts.size());
        out.region_mse[static_cast<std::size_t>(r)] = mse;
        out.total += region_weight(r, lw) * mse;
    }
    return out;
}

LossGradient loss_gradient(const dgm::NetworkWeights& w, const RegionBatches& b, const LossWeights& lw) {
    LossGradient out;
    out.gradient = dgm::NetworkWeights::zeros(w.cfg);
    auto acc = out.gradient.flatten();
    for (Region r : active_regions(w.cfg.variant)) {
        const auto& pts = b.points[static_cast<std::size_t>(r)];
        if (pts.empty()) throw Error(ErrorCode::InvalidArgument, "empty batch for region " + std::string(to_string(r)));
        std::vector<RawInputs> raw(pts.size());
        std::transform(pts.begin(), pts.end(), raw.begin(), [](const SamplePoint& p) { return p.raw; });
        const auto form = residual_form(r, w.cfg.variant, pts);
        auto term = region_term(w, dgm::prepare_inputs(w.cfg, raw), form, region_weight(r, lw));
        out.value.region_mse[static_cast<std::size_t>(r)] = term.mse;
        out.value.total += region_weight(r, lw) * term.mse;
        const auto g = term.gradient.flatten();
        for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += g[k];
    }
    out.gradient.assign(acc);
    return out;
}

double LrSchedule::rate(long it, long total) const {
    const double frac = static_cast<double>(it) / static_cast<double>(std::max(1L, total));
    std::size_t k = 0;
    while (k < breakpoints.size() && frac > breakpoints[k] + 1e-12) ++k;
    return scale * values[k];
}

void LrSchedule::validate() const {
    if (values.size() != breakpoints.size() + 1) {
        throw Error(ErrorCode::InvalidArgument, "schedule needs one more value than breakpoints");
    }
    for (std::size_t k = 1; k < values.size(); ++k) {
        if (values[k] > values[k - 1]) throw Error(ErrorCode::InvalidArgument, "schedule must be non-increasing");
    }
    for (std::size_t k = 1; k < breakpoints.size(); ++k) {
        if (breakpoints[k] <= breakpoints[k - 1]) throw Error(ErrorCode::InvalidArgument, "breakpoints must increase");
    }
    if (!(scale > 0.0)) throw Error(ErrorCode::InvalidArgument, "schedule scale must be positive");
}

TrainConfig TrainConfig::desk() {
    TrainConfig c;
    c.network.n_hidden_layers = 2;
    c.network.width = 32;
    c.iterations = 600;
    c.batch_size = 1000;
    c.pool_size = 40'000;
    // prices reach the hundreds, so the output layer needs larger steps
    c.schedule.scale = 30.0;
    return c;
}

void TrainConfig::validate() const {
    network.validate();
    schedule.validate();
    if (iterations < 1 || batch_size < 1 || pool_size < batch_size) {
        throw Error(ErrorCode::InvalidArgument, "need iterations >= 1 and pool_size >= batch_size >= 1");
    }
    if (weights.interior < 0 || weights.boundary < 0 || weights.terminal < 0) {
        throw Error(ErrorCode::InvalidArgument, "loss weights must be non-negative");
    }
    if (smoothing_window < 1) throw Error(ErrorCode::InvalidArgument, "smoothing window must be positive");
}

TrainResult train(const TrainConfig& cfg) { return train(cfg, dgm::init_network(cfg.network, cfg.seed)); }

TrainResult train(const TrainConfig& cfg, dgm::NetworkWeights start) {
    cfg.validate();
    const auto& box = cfg.network.input_box;
    const ModelVariant variant = cfg.network.variant;

    struct Pool {
        Region region;
        Matrix xt;
        ResidualForm form;
    };
    std::vector<Pool> pools;
    for (Region r : active_regions(variant)) {
        const auto pts = sample_batch(r, box, cfg.pool_size, cfg.seed, cfg.recipe, 1 + static_cast<std::uint64_t>(r));
        std::vector<RawInputs> raw(pts.size());
        std::transform(pts.begin(), pts.end(), raw.begin(), [](const SamplePoint& p) { return p.raw; });
        pools.push_back(Pool{r, dgm::prepare_inputs(cfg.network, raw), residual_form(r, variant, pts)});
    }

    TrainResult res;
    res.weights = std::move(start);
    std::vector<double> theta = res.weights.flatten();
    std::vector<double> m1(theta.size(), 0.0), m2(theta.size(), 0.0), grad(theta.size());
    const auto B = static_cast<Eigen::Index>(cfg.batch_size);
    const auto N = static_cast<Eigen::Index>(cfg.pool_size);

    for (long it = 1; it <= cfg.iterations; ++it) {
        std::fill(grad.begin(), grad.end(), 0.0);
        HistoryEntry entry;
        entry.iteration = it;
        entry.lr = cfg.schedule.rate(it, cfg.iterations);
        const Eigen::Index start_col = ((it - 1) * B) % N;
        for (const auto& pool : pools) {
            Matrix xt(pool.xt.rows(), B);
            ResidualForm form;
            form.layout = pool.form.layout;
            form.coef.resize(pool.form.coef.rows(), B);
            form.offset.resize(B);
            for (Eigen::Index j = 0; j < B; ++j) {
                const Eigen::Index src = (start_col + j) % N;
                xt.col(j) = pool.xt.col(src);
                form.coef.col(j) = pool.form.coef.col(src);
                form.offset[j] = pool.form.offset[src];
            }
            const double wgt = region_weight(pool.region, cfg.weights);
            auto term = region_term(res.weights, xt, form, wgt);
            entry.loss.region_mse[static_cast<std::size_t>(pool.region)] = term.mse;
            entry.loss.total += wgt * term.mse;
            const auto g = term.gradient.flatten();
            for (std::size_t k = 0; k < grad.size(); ++k) grad[k] += g[k];
        }
        if (!std::isfinite(entry.loss.total)) {
            throw Error(ErrorCode::DivergedLoss, "training loss became non-finite at iteration " + std::to_string(it));
        }
        const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(it));
        const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(it));
        for (std::size_t k = 0; k < theta.size(); ++k) {
            m1[k] = cfg.beta1 * m1[k] + (1.0 - cfg.beta1) * grad[k];
            m2[k] = cfg.beta2 * m2[k] + (1.0 - cfg.beta2) * grad[k] * grad[k];
            theta[k] -= entry.lr * (m1[k] / bc1) / (std::sqrt(m2[k] / bc2) + cfg.epsilon);
        }
        res.weights.assign(theta);
        res.history.push_back(entry);
    }

    const std::size_t window =
        std::min<std::size_t>(static_cast<std::size_t>(cfg.smoothing_window), std::max<std::size_t>(1, res.history.size() / 3));
    auto mean_of = [&](std::size_t from) {
        double s = 0.0;
        for (std::size_t k = from; k < from + window; ++k) s += res.history[k].loss.total;
        return s / static_cast<double>(window);
    };
    res.initial_smoothed = mean_of(0);
    res.final_smoothed = mean_of(res.history.size() - window);
    res.trend_ok = res.final_smoothed <= 0.5 * res.initial_smoothed;
    if (!cfg.history_path.empty()) write_history(res.history, cfg.history_path);
    return res;
}

void write_history(const std::vector<HistoryEntry>& h, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
    out << "iteration,lr,loss,interior,upper,lower,terminal\n";
    for (const auto& e : h) {
        out << e.iteration << ',' << format_double(e.lr) << ',' << format_double(e.loss.total);
        for (double v : e.loss.region_mse) out << ',' << format_double(v);
        out << '\n';
    }
}

std::string to_kv(const TrainConfig& c) {
    KvRecord rec;
    rec.set("variant", std::string(svsdu::to_string(c.network.variant)));
    rec.set("layers", std::to_string(c.network.n_hidden_layers));
    rec.set("width", std::to_string(c.network.width));
    rec.set("w_interior", c.weights.interior);
    rec.set("w_boundary", c.weights.boundary);
    rec.set("w_terminal", c.weights.terminal);
    rec.set("pool_size", std::to_string(c.pool_size));
    rec.set("batch_size", std::to_string(c.batch_size));
    rec.set("iterations", std::to_string(c.iterations));
    rec.set("lr_breakpoints", join_list(c.schedule.breakpoints));
    rec.set("lr_values", join_list(c.schedule.values));
    rec.set("lr_scale", c.schedule.scale);
    rec.set("beta1", c.beta1);
    rec.set("beta2", c.beta2);
    rec.set("epsilon", c.epsilon);
    rec.set("seed", std::to_string(c.seed));
    rec.set("smoothing_window", std::to_string(c.smoothing_window));
    rec.set("m_lo", c.recipe.m_lo);
    rec.set("m_hi", c.recipe.m_hi);
    rec.set("z_lo", c.recipe.z_lo);
    rec.set("gap", c.recipe.gap);
    rec.set("y_span", c.recipe.y_span);
    if (!c.history_path.empty()) rec.set("history", c.history_path);
    return rec.str() + svsdu::to_kv(c.network.input_box);
}

TrainConfig train_config_from_kv(std::string_view text, const TrainConfig& base) {
    const auto rec = KvRecord::parse(text);
    TrainConfig c = base;
    if (auto v = rec.get("variant")) c.network.variant = parse_variant(*v);
    c.network.n_hidden_layers = static_cast<int>(rec.get_int("layers", c.network.n_hidden_layers));
    c.network.width = static_cast<int>(rec.get_int("width", c.network.width));
    c.weights.interior = rec.get_double("w_interior", c.weights.interior);
    c.weights.boundary = rec.get_double("w_boundary", c.weights.boundary);
    c.weights.terminal = rec.get_double("w_terminal", c.weights.terminal);
    c.pool_size = static_cast<std::size_t>(rec.get_int("pool_size", static_cast<long long>(c.pool_size)));
    c.batch_size = static_cast<std::size_t>(rec.get_int("batch_size", static_cast<long long>(c.batch_size)));
    c.iterations = static_cast<long>(rec.get_int("iterations", c.iterations));
    if (auto v = rec.get("lr_breakpoints")) c.schedule.breakpoints = parse_list(*v);
    if (auto v = rec.get("lr_values")) c.schedule.values = parse_list(*v);
    c.schedule.scale = rec.get_double("lr_scale", c.schedule.scale);
    c.beta1 = rec.get_double("beta1", c.beta1);
    c.beta2 = rec.get_double("beta2", c.beta2);
    c.epsilon = rec.get_double("epsilon", c.epsilon);
    c.seed = static_cast<std::uint64_t>(rec.get_int("seed", static_cast<long long>(c.seed)));
    c.smoothing_window = static_cast<int>(rec.get_int("smoothing_window", c.smoothing_window));
    c.recipe.m_lo = rec.get_double("m_lo", c.recipe.m_lo);
    c.recipe.m_hi = rec.get_double("m_hi", c.recipe.m_hi);
    c.recipe.z_lo = rec.get_double("z_lo", c.recipe.z_lo);
    c.recipe.gap = rec.get_double("gap", c.recipe.gap);
    c.recipe.y_span = rec.get_double("y_span", c.recipe.y_span);
    c.history_path = rec.get_string("history", c.history_path);
    c.network.input_box = box_from_kv(text, c.network.input_box);
    c.validate();
    return c;
}

}  // namespace svsdu::pde
