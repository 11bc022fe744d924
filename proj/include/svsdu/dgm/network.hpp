#pragma once

#include "svsdu/model.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace svsdu::dgm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct NetworkConfig {
    ModelVariant variant = ModelVariant::SVSDU;
    int n_hidden_layers = 4;
    int width = 110;
    DomainBox input_box = DomainBox::defaults();

    /// Raw inputs consumed by the network, in order.
    [[nodiscard]] std::vector<Input> inputs() const;
    [[nodiscard]] int n_inputs() const { return static_cast<int>(inputs().size()); }
    /// Position of `in` among inputs(), or -1 if the variant does not use it.
    [[nodiscard]] int position(Input in) const;
    void validate() const;
};

/// Network inputs used by a model variant. SVSD drops z and eta, SVSU drops
/// y and xi, Heston drops all four.
std::vector<Input> variant_inputs(ModelVariant v);

struct HiddenLayer {
    Matrix Uz, Ug, Ur, Uh;  // n_inputs x m
    Matrix Wz, Wg, Wr, Wh;  // m x m
    Vector bz, bg, br, bh;  // m
};

struct NetworkWeights {
    NetworkConfig cfg;
    Matrix W1;  // n_inputs x m
    Vector b1;
    std::vector<HiddenLayer> layers;
    Vector W;  // m
    double b = 0.0;

    /// Zero-valued weights with the shapes implied by `cfg`.
    static NetworkWeights zeros(const NetworkConfig& cfg);

    [[nodiscard]] std::size_t parameter_count() const;
    [[nodiscard]] std::vector<double> flatten() const;
    void assign(std::span<const double> flat);
    void set_zero();
    [[nodiscard]] bool all_finite() const;

    /// Visits every array in declared order with its name.
    template <class F>
    void visit(F&& f) {
        visit_impl(*this, f);
    }
    template <class F>
    void visit(F&& f) const {
        visit_impl(*this, f);
    }

private:
    template <class Self, class F>
    static void visit_impl(Self& self, F& f) {
        f("W1", self.W1);
        f("b1", self.b1);
        for (std::size_t l = 0; l < self.layers.size(); ++l) {
            auto& L = self.layers[l];
            const std::string s = std::to_string(l + 1);
            f("Uz" + s, L.Uz);
            f("Ug" + s, L.Ug);
            f("Ur" + s, L.Ur);
            f("Uh" + s, L.Uh);
            f("Wz" + s, L.Wz);
            f("Wg" + s, L.Wg);
            f("Wr" + s, L.Wr);
            f("Wh" + s, L.Wh);
            f("bz" + s, L.bz);
            f("bg" + s, L.bg);
            f("br" + s, L.br);
            f("bh" + s, L.bh);
        }
        f("W", self.W);
    }
};

/// Uniform in +-sqrt(6 / (fan_in + fan_out)), zero biases.
NetworkWeights init_network(const NetworkConfig& cfg, std::uint64_t seed);

/// Which derivatives a batched evaluation carries. `dirs` are raw inputs;
/// `pairs` index into `dirs`. Output channel order: value, one channel per
/// direction, one per pair.
struct JetLayout {
    std::vector<Input> dirs;
    std::vector<std::pair<int, int>> pairs;

    [[nodiscard]] int channels() const { return 1 + static_cast<int>(dirs.size() + pairs.size()); }
};

/// Normalized network inputs, one column per point.
Matrix prepare_inputs(const NetworkConfig& cfg, std::span<const RawInputs> points);

/// Output channels (rows) per point (columns), as raw-space derivatives.
Matrix evaluate(const NetworkWeights& w, const Matrix& xt, const JetLayout& layout);

/// Value and gradient of a scalar objective of the output channels.
/// `objective` receives the channels and writes d objective / d channels.
using Objective = std::function<double(const Matrix& channels, Matrix& d_channels)>;

struct GradientResult {
    double value = 0.0;
    NetworkWeights gradient;
};

GradientResult weight_gradient(const NetworkWeights& w, const Matrix& xt, const JetLayout& layout,
                               const Objective& objective);

double forward(const NetworkWeights& w, const RawInputs& raw);

struct DerivativeBundle {
    double P = 0, P_t = 0, P_x = 0, P_y = 0, P_z = 0, P_v = 0;
    double P_xx = 0, P_xv = 0, P_vv = 0;
};

/// Layout producing every field of DerivativeBundle available to the variant.
JetLayout bundle_layout(const NetworkConfig& cfg);
DerivativeBundle bundle_from_channels(const NetworkConfig& cfg, const JetLayout& layout, const Matrix& channels,
                                      Eigen::Index column);

DerivativeBundle derivatives(const NetworkWeights& w, const RawInputs& raw);

/// Calibratable raw inputs: rho, kappa, theta, sigma, eta, v, xi, y, z.
bool is_calibratable(Input in);

/// d forward / d phi for each listed raw input.
std::vector<double> param_jacobian(const NetworkWeights& w, const RawInputs& raw, std::span<const Input> phi);

void save_weights(const NetworkWeights& w, const std::string& path);
NetworkWeights load_weights(const std::string& path);
std::string serialize_weights(const NetworkWeights& w);
NetworkWeights parse_weights(const std::string& text);

}  // namespace svsdu::dgm
