#pragma once

#include "svsdu/model.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <vector>

namespace svsdu::ctmc {

using Vec5 = Eigen::Matrix<double, 5, 1>;
using Mat5 = Eigen::Matrix<double, 5, 5>;

/// Coordinate order of the simulated chain.
enum Coord : int { kLnDd = 0, kLnDu = 1, kVar = 2, kLnMax = 3, kLnMin = 4 };

/// Variance never goes below this level; moves toward it are clamped like
/// moves toward a sticky boundary.
inline constexpr double kVarianceFloor = 1e-8;

enum class Regime { Interior, AtMax, AtMin };

struct CtmcState {
    double ln_dd = 0.0;    ///< log drawdown, <= 0
    double ln_du = 0.0;    ///< log drawup, >= 0
    double v = 0.0;        ///< variance
    double ln_smax = 0.0;  ///< log running maximum
    double ln_smin = 0.0;  ///< log running minimum
    double clock = 0.0;
    double ln_s = 0.0;     ///< log asset, carried redundantly

    [[nodiscard]] Vec5 coords() const { return Vec5(ln_dd, ln_du, v, ln_smax, ln_smin); }
    void set_coords(const Vec5& c) {
        ln_dd = c[kLnDd];
        ln_du = c[kLnDu];
        v = c[kVar];
        ln_smax = c[kLnMax];
        ln_smin = c[kLnMin];
    }
    [[nodiscard]] double asset() const;
};

CtmcState initial_state(const ModelParams& p);

/// Exact boundary membership; AtMax wins if both coordinates are zero.
Regime regime_of(const CtmcState& s, ModelVariant variant);

struct DriftCovariance {
    Vec5 drift;
    Mat5 covariance;
};

/// Interior: dt-coefficients of the log system and A = Sigma Sigma^T.
/// Boundary: beta-hat and G-hat = Gamma-hat Gamma-hat^T.
DriftCovariance drift_and_covariance(const CtmcState& s, const ModelParams& p, Regime reg);

struct EigenPair {
    double lambda = 0.0;
    Vec5 vector = Vec5::Zero();
};

/// Spectral decomposition of a symmetric PSD matrix. Pairs with
/// lambda < 1e-14 * max(lambda) are dropped.
std::vector<EigenPair> eigendecompose_covariance(const Mat5& a);

struct ClampOptions {
    bool upper = true;      ///< ln_dd <= 0 is enforced
    bool lower = true;      ///< ln_du >= 0 is enforced
    bool variance = true;   ///< v >= kVarianceFloor is enforced
    bool two_sided = true;  ///< the step is shared by +u and -u
};

ClampOptions clamp_options_for(ModelVariant variant, bool two_sided);

struct ClampResult {
    double step = 0.0;
    /// Coordinates that the +u move (bit k) or the -u move (bit 8+k) lands on exactly.
    unsigned landing_mask = 0;
};

/// Largest step along `u` (and `-u` when two-sided) that stays inside the
/// state space. For a one-sided move only coordinates the move approaches
/// are constraining.
ClampResult clamp_step(const CtmcState& s, const Vec5& u, double h, const ClampOptions& opts = {});

struct Transition {
    Vec5 direction = Vec5::Zero();
    double step = 0.0;
    double rate = 0.0;
    unsigned landing_mask = 0;  ///< bit k: coordinate k is set exactly to its boundary
};

struct TransitionScheme {
    std::vector<Transition> transitions;

    [[nodiscard]] double total_rate() const;
};

/// Drift direction with rate 1/h_mu followed by +/- eigendirection pairs with
/// rates lambda_i / (2 h_i^2).
TransitionScheme build_transitions(const CtmcState& s, const ModelParams& p, double h);

struct SimulationOptions {
    double h = 0.01;
    std::int64_t max_steps = 10'000'000;
    bool record_path = false;
};

struct PathRecord {
    double clock;
    double ln_dd;
    double ln_du;
    double v;
    double ln_smax;
    double ln_smin;
    Regime regime;
};

struct PathResult {
    CtmcState terminal;
    double time_at_max = 0.0;
    double time_at_min = 0.0;
    std::int64_t steps = 0;
    std::int64_t floor_landings = 0;
    std::vector<PathRecord> path;
};

/// Simulates one path over [0, horizon] from the initial state of `p`.
/// The random stream depends only on (seed, path_index).
PathResult simulate_path(const ModelParams& p, double horizon, const SimulationOptions& opts,
                         std::uint64_t seed, std::uint64_t path_index = 0);

struct McConfig {
    std::int64_t n_paths = 10'000;
    double h = 0.01;
    std::uint64_t seed = 1;
    unsigned threads = 0;  ///< 0: hardware concurrency
    std::int64_t max_steps = 10'000'000;
};

struct McPrice {
    double price = 0.0;
    double standard_error = 0.0;
};

/// Terminal asset values of `cfg.n_paths` independent paths, in path order.
/// The Monte Carlo runners throw VarianceFloorBudget when more than 0.1% of
/// all steps land on the variance floor.
std::vector<double> simulate_terminal_assets(const ModelParams& p, double horizon, const McConfig& cfg);

McPrice mc_price(const ModelParams& p, const ContractSpec& c, const McConfig& cfg);

/// Call, put and discounted-asset statistics over one shared path set.
struct McStatistics {
    McPrice call;
    McPrice put;
    McPrice discounted_asset;
    /// SE of the pathwise call-minus-put difference.
    double parity_standard_error = 0.0;
};

McStatistics mc_statistics(const ModelParams& p, const ContractSpec& c, const McConfig& cfg);

struct OccupationFractions {
    double at_max = 0.0;
    double at_min = 0.0;
};

OccupationFractions occupation_fractions(const ModelParams& p, double horizon, const McConfig& cfg);

/// Writes one delimiter-separated record per transition.
void write_path_csv(const std::vector<PathRecord>& path, const std::string& file, char delim = ',');

}  // namespace svsdu::ctmc
