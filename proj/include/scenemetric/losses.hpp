#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "scenemetric/core/error.hpp"
#include "scenemetric/core/scenario.hpp"

namespace scenemetric {

struct MarginParams {
    double alpha_g = 1.0;
    double alpha_r = 1.0;
    double alpha_t = 1.0;

    void validate() const
    {
        require(alpha_g >= 0.0 && alpha_r >= 0.0 && alpha_t >= 0.0, "margins must be nonnegative");
    }
};

struct LossWeights {
    double beta_m = 1.0;
    double beta_g = 1.0;
    double beta_r = 1.0;
    double beta_t = 1.0;
    double beta_rec = 10.0;
    double gamma_i = 5.0;      ///< infrastructure pixels
    double gamma_i_bar = 10.0; ///< background of the infrastructure channel
    double gamma_t = 5.0;      ///< trajectory pixels
    double gamma_t_bar = 20.0; ///< background of the trajectory channel

    void validate() const
    {
        for (double v : {beta_m, beta_g, beta_r, beta_t, beta_rec, gamma_i, gamma_i_bar, gamma_t, gamma_t_bar})
            require(v >= 0.0 && std::isfinite(v), "loss weights must be nonnegative");
    }
};

/// Squared Euclidean distances from the anchor embedding.
struct QuadrupletDistances {
    double d_pp = 0.0;
    double d_pn = 0.0;
    double d_nn = 0.0;
};

struct TripletLoss {
    double loss = 0.0;
    double grad_ap = 0.0;
    double grad_an = 0.0;
};

/// max(alpha + d_ap - d_an, 0) with zero subgradient at and below the hinge.
inline TripletLoss triplet_loss(double d_ap, double d_an, double alpha)
{
    require(d_ap >= 0.0 && d_an >= 0.0, "distances must be nonnegative");
    const double v = alpha + d_ap - d_an;
    if (v > 0.0)
        return {v, 1.0, -1.0};
    return {0.0, 0.0, 0.0};
}

/// One loss term with its gradient wrt (d_pp, d_pn, d_nn).
struct LossTerm {
    double value = 0.0;
    std::array<double, 3> grad{0.0, 0.0, 0.0};
};

struct MetricLosses {
    LossTerm graph; ///< L_G
    LossTerm route; ///< L_R
    LossTerm action; ///< L_T
};

inline MetricLosses metric_losses(const QuadrupletDistances& d, double s_t, const MarginParams& m)
{
    require(s_t >= 0.0 && s_t <= 1.0, "s_t must lie in [0, 1]");
    require(d.d_pp >= 0.0 && d.d_pn >= 0.0 && d.d_nn >= 0.0, "distances must be nonnegative");
    MetricLosses out;

    const double g = m.alpha_g + d.d_pn - d.d_nn;
    if (g > 0.0)
        out.graph = {g, {0.0, 1.0, -1.0}};

    const bool pp_dominates = d.d_pp > m.alpha_t;
    const double r = m.alpha_r + (pp_dominates ? d.d_pp : m.alpha_t) - d.d_pn;
    if (r > 0.0)
        out.route = {r, {pp_dominates ? 1.0 : 0.0, -1.0, 0.0}};

    const double t = (1.0 - s_t) * m.alpha_t - d.d_pp;
    if (t > 0.0)
        out.action = {t, {-1.0, 0.0, 0.0}};
    else if (t < 0.0)
        out.action = {-t, {1.0, 0.0, 0.0}};
    return out;
}

/// Loss value plus gradient wrt the prediction grid.
struct GridLoss {
    double value = 0.0;
    std::vector<double> grad;
};

/// Weighted mean squared error over the four pixel subsets given by the
/// target: occupied / empty cells of the infrastructure channel and of the
/// trajectory channel. `pred` uses the target's channel-major 2*S*S layout.
inline GridLoss sparse_reconstruction_loss(const ReconstructionTarget& target, const std::vector<double>& pred,
                                           const LossWeights& w)
{
    const std::size_t cells = static_cast<std::size_t>(target.size) * static_cast<std::size_t>(target.size);
    if (pred.size() != 2 * cells || target.values.size() != 2 * cells)
        throw Error("shape mismatch: prediction has " + std::to_string(pred.size()) + " values, expected " +
                    std::to_string(2 * cells));
    GridLoss out;
    out.grad.assign(pred.size(), 0.0);
    const double on_weight[2] = {w.gamma_i, w.gamma_t};
    const double off_weight[2] = {w.gamma_i_bar, w.gamma_t_bar};
    for (std::size_t c = 0; c < 2; ++c) {
        const std::size_t base = c * cells;
        std::size_t on = 0;
        for (std::size_t i = 0; i < cells; ++i)
            on += target.values[base + i] != 0.0;
        const std::size_t off = cells - on;
        const double scale_on = on ? on_weight[c] / static_cast<double>(on) : 0.0;
        const double scale_off = off ? off_weight[c] / static_cast<double>(off) : 0.0;
        for (std::size_t i = 0; i < cells; ++i) {
            const double t = target.values[base + i];
            const double diff = pred[base + i] - t;
            const double s = t != 0.0 ? scale_on : scale_off;
            out.value += s * diff * diff;
            out.grad[base + i] = 2.0 * s * diff;
        }
    }
    return out;
}

/// Plain mean squared error over every value of a grid.
inline GridLoss mean_squared_error(const std::vector<double>& target, const std::vector<double>& pred)
{
    if (target.size() != pred.size() || target.empty())
        throw Error("shape mismatch: mean squared error over grids of " + std::to_string(target.size()) + " and " +
                    std::to_string(pred.size()) + " values");
    GridLoss out;
    out.grad.resize(pred.size());
    const double n = static_cast<double>(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double diff = pred[i] - target[i];
        out.value += diff * diff / n;
        out.grad[i] = 2.0 * diff / n;
    }
    return out;
}

/// Triplet loss plus unweighted reconstruction of the anchor.
inline double base_combined_loss(const TripletLoss& triplet, const GridLoss& reconstruction)
{
    return triplet.loss + reconstruction.value;
}

inline double total_loss(double l_g, double l_r, double l_t, double l_rec, const LossWeights& w)
{
    return w.beta_m * (w.beta_g * l_g + w.beta_r * l_r + w.beta_t * l_t) + w.beta_rec * l_rec;
}

/// Gradient of the total loss wrt (d_pp, d_pn, d_nn).
inline std::array<double, 3> total_distance_gradient(const MetricLosses& l, const LossWeights& w)
{
    std::array<double, 3> g{};
    for (std::size_t k = 0; k < 3; ++k)
        g[k] = w.beta_m * (w.beta_g * l.graph.grad[k] + w.beta_r * l.route.grad[k] + w.beta_t * l.action.grad[k]);
    return g;
}

} // namespace scenemetric
