#pragma once

#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "scenemetric/losses.hpp"
#include "scenemetric/mining.hpp"
#include "scenemetric/net/model.hpp"

namespace scenemetric {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    bool cosine_decay = true; ///< anneal lr towards lr * final_lr_fraction over the run
    double final_lr_fraction = 0.05;

    /// Learning rate at optimizer step `step` (0-based) of `total_steps`.
    double rate(std::uint64_t step, std::uint64_t total_steps) const
    {
        if (!cosine_decay || total_steps <= 1)
            return lr;
        const double progress = std::min(1.0, static_cast<double>(step) / static_cast<double>(total_steps - 1));
        const double f = final_lr_fraction + (1.0 - final_lr_fraction) * 0.5 * (1.0 + std::cos(progress * 3.141592653589793));
        return lr * f;
    }

    void validate() const
    {
        require(lr > 0.0 && std::isfinite(lr), "learning rate must be positive");
        require(final_lr_fraction > 0.0 && final_lr_fraction <= 1.0, "final_lr_fraction must lie in (0, 1]");
        require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "Adam betas must lie in [0, 1)");
        require(eps > 0.0, "Adam eps must be positive");
    }
};

inline void adam_update(ModelState& s, const AdamConfig& a, double lr)
{
    ++s.adam.step;
    const double t = static_cast<double>(s.adam.step);
    const double c1 = 1.0 - std::pow(a.beta1, t);
    const double c2 = 1.0 - std::pow(a.beta2, t);
    for (std::size_t k = 0; k < s.params.size(); ++k) {
        auto& p = s.params[k];
        auto& m = s.adam.m[k];
        auto& v = s.adam.v[k];
        for (std::size_t i = 0; i < p.grad.size(); ++i) {
            const double g = p.grad[i];
            m[i] = a.beta1 * m[i] + (1.0 - a.beta1) * g;
            v[i] = a.beta2 * v[i] + (1.0 - a.beta2) * g * g;
            p.value[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + a.eps);
        }
    }
}

struct LossBreakdown {
    double l_g = 0.0;
    double l_r = 0.0;
    double l_t = 0.0;
    double l_rec = 0.0;
    double total = 0.0;
    QuadrupletDistances distances;
};

inline double squared_distance(const std::vector<double>& a, const std::vector<double>& b)
{
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        d += (a[i] - b[i]) * (a[i] - b[i]);
    return d;
}

/// Forward pass of the full objective for one quadruplet. Parameter gradients
/// are accumulated into `state` (not zeroed first); nothing is updated.
inline LossBreakdown accumulate_gradients(ModelState& state, const Quadruplet& q, const Dataset& d,
                                          const ReconstructionTarget& anchor_target, const MarginParams& margins,
                                          const LossWeights& weights)
{
    require(q.anchor < d.size() && q.pp < d.size() && q.pn < d.size() && q.nn < d.size(),
            "quadruplet index out of range");
    ad::Tape tape;
    Bound p(tape, state);
    const ad::Var za = encode(p, d[q.anchor]);
    const ad::Var zk[3] = {encode(p, d[q.pp]), encode(p, d[q.pn]), encode(p, d[q.nn])};
    const ad::Var pred = decode(p, za);

    const auto& a = tape.value(za).values;
    LossBreakdown out;
    out.distances = {squared_distance(a, tape.value(zk[0]).values), squared_distance(a, tape.value(zk[1]).values),
                     squared_distance(a, tape.value(zk[2]).values)};
    auto diverged = [&](const char* what) {
        std::ostringstream msg;
        msg << "divergence at optimizer step " << state.adam.step << " (anchor " << q.anchor << "): " << what
            << " L_G=" << out.l_g << " L_R=" << out.l_r << " L_T=" << out.l_t << " L_Rec=" << out.l_rec;
        return DivergenceError(msg.str());
    };
    const auto& dist = out.distances;
    if (!std::isfinite(dist.d_pp) || !std::isfinite(dist.d_pn) || !std::isfinite(dist.d_nn))
        throw diverged("non-finite latent distance;");
    const MetricLosses ml = metric_losses(out.distances, q.s_t, margins);
    const GridLoss rec = sparse_reconstruction_loss(anchor_target, tape.value(pred).values, weights);
    out.l_g = ml.graph.value;
    out.l_r = ml.route.value;
    out.l_t = ml.action.value;
    out.l_rec = rec.value;
    out.total = total_loss(out.l_g, out.l_r, out.l_t, out.l_rec, weights);
    if (!std::isfinite(out.total))
        throw diverged("non-finite loss;");

    const auto gd = total_distance_gradient(ml, weights);
    std::vector<double> ga(a.size(), 0.0);
    std::vector<std::pair<ad::Var, std::vector<double>>> seeds;
    for (std::size_t k = 0; k < 3; ++k) {
        const auto& b = tape.value(zk[k]).values;
        std::vector<double> gb(b.size());
        for (std::size_t i = 0; i < b.size(); ++i) {
            const double diff = 2.0 * gd[k] * (a[i] - b[i]);
            ga[i] += diff;
            gb[i] = -diff;
        }
        seeds.emplace_back(zk[k], std::move(gb));
    }
    seeds.emplace_back(za, std::move(ga));
    std::vector<double> gp = rec.grad;
    for (double& g : gp)
        g *= weights.beta_rec;
    seeds.emplace_back(pred, std::move(gp));
    tape.backward(seeds);
    return out;
}

/// Evaluates the objective without touching gradients or parameters.
inline LossBreakdown evaluate_objective(const ModelState& state, const Quadruplet& q, const Dataset& d,
                                        const ReconstructionTarget& anchor_target, const MarginParams& margins,
                                        const LossWeights& weights)
{
    ModelState copy = state;
    return accumulate_gradients(copy, q, d, anchor_target, margins, weights);
}

/// One optimizer step on a single quadruplet.
inline LossBreakdown train_step(ModelState& state, const Quadruplet& q, const Dataset& d,
                                const ReconstructionTarget& anchor_target, const MarginParams& margins,
                                const LossWeights& weights, const AdamConfig& adam, double lr)
{
    state.zero_grad();
    const LossBreakdown out = accumulate_gradients(state, q, d, anchor_target, margins, weights);
    adam_update(state, adam, lr);
    return out;
}

inline std::vector<LatentVector> embed_dataset(const ModelState& state, const Dataset& d)
{
    std::vector<LatentVector> z;
    z.reserve(d.size());
    for (const auto& s : d.entries)
        z.push_back(forward_encode(state, s));
    return z;
}

inline std::vector<ReconstructionTarget> build_targets(const Dataset& d)
{
    std::vector<ReconstructionTarget> t;
    t.reserve(d.size());
    for (const auto& s : d.entries)
        t.push_back(build_reconstruction_target(s));
    return t;
}

/// Fraction of quadruplets with d_pp < d_pn < d_nn under the given embeddings.
inline double ordering_satisfaction(const std::vector<LatentVector>& z, const std::vector<Quadruplet>& quads)
{
    require(!quads.empty(), "no quadruplets to check");
    std::size_t ok = 0;
    for (const auto& q : quads) {
        const double pp = squared_distance(z[q.anchor], z[q.pp]);
        const double pn = squared_distance(z[q.anchor], z[q.pn]);
        const double nn = squared_distance(z[q.anchor], z[q.nn]);
        ok += (pp < pn && pn < nn);
    }
    return static_cast<double>(ok) / static_cast<double>(quads.size());
}

struct TrainConfig {
    NetworkConfig network;
    MarginParams margins;
    LossWeights weights;
    AdamConfig adam;
    std::size_t epochs = 30;
    NegativeStrategy strategy = NegativeStrategy::Random;
    std::uint64_t seed = 1;

    void validate() const
    {
        network.validate();
        margins.validate();
        weights.validate();
        adam.validate();
    }
};

struct EpochMetrics {
    std::size_t epoch = 0; ///< 1-based
    double l_g = 0.0;
    double l_r = 0.0;
    double l_t = 0.0;
    double l_rec = 0.0;
    double total = 0.0;
    double ordering_satisfaction = 0.0;

    friend bool operator==(const EpochMetrics&, const EpochMetrics&) = default;
};

struct TrainResult {
    ModelState state;
    std::vector<EpochMetrics> log;
};

using EpochCallback = std::function<void(const ModelState&, const EpochMetrics&)>;

/// Trains from a fresh initialization. The network seed is derived from
/// cfg.seed; a separately seeded quadruplet set scores ordering satisfaction.
inline TrainResult train(const Dataset& d, const TrainConfig& cfg, const EpochCallback& on_epoch = {})
{
    cfg.validate();
    NetworkConfig net = cfg.network;
    net.seed = derive_seed(cfg.seed, {1});
    TrainResult result{init_model(net), {}};
    if (cfg.epochs == 0)
        return result;

    const ClassIndex idx = build_index(d);
    const auto targets = build_targets(d);
    Rng mining_rng(derive_seed(cfg.seed, {2}));
    Rng heldout_rng(derive_seed(cfg.seed, {3}));

    const std::uint64_t total_steps = static_cast<std::uint64_t>(cfg.epochs) * (idx.size() - skipped_anchors(idx, cfg.strategy));
    std::uint64_t step = 0;
    for (std::size_t e = 0; e < cfg.epochs; ++e) {
        const MinedEpoch mined = mine_epoch(idx, cfg.strategy, mining_rng);
        EpochMetrics m;
        m.epoch = e + 1;
        for (const auto& q : mined.quadruplets) {
            const LossBreakdown l =
                train_step(result.state, q, d, targets[q.anchor], cfg.margins, cfg.weights, cfg.adam,
                           cfg.adam.rate(step++, total_steps));
            m.l_g += l.l_g;
            m.l_r += l.l_r;
            m.l_t += l.l_t;
            m.l_rec += l.l_rec;
            m.total += l.total;
        }
        const double n = static_cast<double>(mined.quadruplets.size());
        m.l_g /= n;
        m.l_r /= n;
        m.l_t /= n;
        m.l_rec /= n;
        m.total /= n;
        const MinedEpoch heldout = mine_epoch(idx, cfg.strategy, heldout_rng);
        m.ordering_satisfaction = ordering_satisfaction(embed_dataset(result.state, d), heldout.quadruplets);
        result.log.push_back(m);
        if (on_epoch)
            on_epoch(result.state, m);
    }
    return result;
}

} // namespace scenemetric
