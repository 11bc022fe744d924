#pragma once

#include "svsdu/dgm/network.hpp"
#include "svsdu/model.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace svsdu::pde {

enum class Region { Interior, Upper, Lower, Terminal };
inline constexpr std::array<Region, 4> kRegions = {Region::Interior, Region::Upper, Region::Lower, Region::Terminal};

std::string_view to_string(Region r) noexcept;

/// Regions that carry a loss term for the variant.
std::vector<Region> active_regions(ModelVariant v);

struct SamplePoint {
    Region region = Region::Interior;
    RawInputs raw{};  ///< state (t, x, y, z, v) and contract/model parameters

    [[nodiscard]] double operator[](Input in) const { return raw[idx(in)]; }
};

using dgm::DerivativeBundle;

double interior_residual(const DerivativeBundle& d, const SamplePoint& pt, ModelVariant v = ModelVariant::SVSDU);
double boundary_residual_upper(const DerivativeBundle& d, const SamplePoint& pt);
double boundary_residual_lower(const DerivativeBundle& d, const SamplePoint& pt);
double terminal_residual(double value, const SamplePoint& pt);

/// State-sampling recipe: m ~ U[m_lo, m_hi), z ~ U[z_lo, m - gap),
/// y ~ U[m + gap, m + y_span), x ~ U[z + gap, y).
struct SamplingRecipe {
    double m_lo = 50.0;
    double m_hi = 131.0;
    double z_lo = 1.0;
    double gap = 1.0;
    double y_span = 100.0;
};

std::vector<SamplePoint> sample_batch(Region region, const DomainBox& box, std::size_t n, std::uint64_t seed,
                                      const SamplingRecipe& recipe = {}, std::uint64_t stream = 0);

/// Per-region residual as a linear form of the network's output channels:
/// r_j = sum_c coef(c, j) * channel(c, j) + offset_j.
struct ResidualForm {
    dgm::JetLayout layout;
    dgm::Matrix coef;
    Eigen::VectorXd offset;
};

ResidualForm residual_form(Region region, ModelVariant v, const std::vector<SamplePoint>& pts);

/// Residual values of the network at the points.
Eigen::VectorXd residuals(const dgm::NetworkWeights& w, Region region, const std::vector<SamplePoint>& pts);

struct LossWeights {
    double interior = 0.25;
    double boundary = 0.5;
    double terminal = 0.25;
};

struct RegionBatches {
    std::array<std::vector<SamplePoint>, 4> points;  // indexed by Region
};

struct LossValue {
    double total = 0.0;
    std::array<double, 4> region_mse{};  // mean squared residual per region
};

LossValue loss(const dgm::NetworkWeights& w, const RegionBatches& b, const LossWeights& lw = {});

struct LossGradient {
    LossValue value;
    dgm::NetworkWeights gradient;
};

LossGradient loss_gradient(const dgm::NetworkWeights& w, const RegionBatches& b, const LossWeights& lw = {});

/// Piecewise-constant rate; `breakpoints` are fractions of the run.
struct LrSchedule {
    std::vector<double> breakpoints = {1000.0 / 6000, 2000.0 / 6000, 3000.0 / 6000, 4000.0 / 6000,
                                       5000.0 / 6000, 5500.0 / 6000};
    std::vector<double> values = {1e-3, 5e-4, 1e-4, 5e-5, 1e-5, 5e-6, 1e-6};
    double scale = 1.0;

    /// Rate for 1-based iteration `it` of `total`.
    [[nodiscard]] double rate(long it, long total) const;
    void validate() const;
};

struct TrainConfig {
    dgm::NetworkConfig network;
    LossWeights weights;
    SamplingRecipe recipe;
    std::size_t pool_size = 400'000;  ///< pre-drawn points per region
    std::size_t batch_size = 10'000;  ///< per region and iteration
    long iterations = 6000;
    LrSchedule schedule;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t seed = 1;
    std::string history_path;  ///< loss-history file, empty for none
    int smoothing_window = 200;

    /// 600 iterations, batch 1000, L = 2, m = 32, rates scaled by 30.
    static TrainConfig desk();
    void validate() const;
};

struct HistoryEntry {
    long iteration = 0;
    double lr = 0.0;
    LossValue loss;
};

struct TrainResult {
    dgm::NetworkWeights weights;
    std::vector<HistoryEntry> history;
    double initial_smoothed = 0.0;
    double final_smoothed = 0.0;
    /// Smoothed loss fell by at least half over the run.
    bool trend_ok = false;
};

TrainResult train(const TrainConfig& cfg);

/// Continues from given weights; Adam moments start fresh.
TrainResult train(const TrainConfig& cfg, dgm::NetworkWeights start);

void write_history(const std::vector<HistoryEntry>& h, const std::string& path);

std::string to_kv(const TrainConfig& cfg);
TrainConfig train_config_from_kv(std::string_view text, const TrainConfig& base = TrainConfig::desk());

}  // namespace svsdu::pde
