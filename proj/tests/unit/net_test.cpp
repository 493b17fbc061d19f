#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "scenemetric/net/checkpoint.hpp"
#include "scenemetric/net/train.hpp"
#include "scenemetric/synthgen.hpp"
#include "test_support.hpp"

using namespace scenemetric;
using scenemetric::testing::ScratchDir;
using scenemetric::testing::throws_with_prefix;

namespace {

NetworkConfig tiny_network(std::uint64_t seed = 1)
{
    NetworkConfig c;
    c.image_size = 8;
    c.latent_i = 4;
    c.latent_t = 3;
    c.latent = 4;
    c.conv_channels = {2, 3, 2, 2};
    c.attention_width = 4;
    c.attention_heads = 2;
    c.feedforward_width = 5;
    c.fusion_hidden = 5;
    c.seed = seed;
    return c;
}

const Dataset& tiny_dataset()
{
    static const Dataset d = [] {
        GeneratorConfig g;
        g.templates = {Category::Intersection, Category::Roundabout, Category::Highway};
        g.scenarios_per_template = 2;
        g.image_size = 8;
        return generate(g);
    }();
    return d;
}

const Dataset& small_dataset()
{
    static const Dataset d = [] {
        GeneratorConfig g;
        g.templates = {Category::Intersection, Category::SingleLane};
        g.scenarios_per_template = 1;
        return generate(g);
    }();
    return d;
}

std::vector<Quadruplet> tiny_quadruplets(std::uint64_t seed)
{
    Rng rng(seed);
    return mine_epoch(build_index(tiny_dataset()), NegativeStrategy::Random, rng).quadruplets;
}

double objective(const ModelState& s, const Quadruplet& q, const LossWeights& w = {})
{
    const Dataset& d = tiny_dataset();
    return evaluate_objective(s, q, d, build_reconstruction_target(d[q.anchor]), MarginParams{}, w).total;
}

TrainConfig tiny_training(std::size_t epochs)
{
    TrainConfig c;
    c.network = tiny_network();
    c.epochs = epochs;
    c.seed = 5;
    return c;
}

bool same_parameters(const ModelState& a, const ModelState& b)
{
    if (a.params.size() != b.params.size())
        return false;
    for (std::size_t k = 0; k < a.params.size(); ++k)
        if (a.params[k].name != b.params[k].name || !(a.params[k].value == b.params[k].value))
            return false;
    return true;
}

} // namespace

// --- forward passes -----------------------------------------------------------------

TEST(Encoder, DeterministicWithDefaultLatentWidth)
{
    const ModelState s = init_model(NetworkConfig{});
    const Scenario& sc = small_dataset()[0];
    const auto z1 = forward_encode(s, sc);
    const auto z2 = forward_encode(s, sc);
    ASSERT_EQ(z1.size(), 64u);
    EXPECT_EQ(z1, z2);
    for (double v : z1)
        EXPECT_TRUE(std::isfinite(v));
}

TEST(Encoder, SensitiveToTrajectoryOrder)
{
    const ModelState s = init_model(tiny_network(3));
    Scenario sc = tiny_dataset()[0];
    const auto forward = forward_encode(s, sc);
    auto pts = sc.trajectory.points();
    const auto times = pts;
    std::reverse(pts.begin(), pts.end());
    for (std::size_t i = 0; i < pts.size(); ++i)
        pts[i].t = times[i].t; // same time grid, positions reversed
    sc.trajectory = Trajectory(pts);
    const auto reversed = forward_encode(s, sc);
    double diff = 0.0;
    for (std::size_t i = 0; i < forward.size(); ++i)
        diff = std::max(diff, std::abs(forward[i] - reversed[i]));
    EXPECT_GT(diff, 1e-6);
}

TEST(Encoder, ImageSizeMismatchIsAnError)
{
    const ModelState s = init_model(tiny_network());
    EXPECT_TRUE(throws_with_prefix([&] { forward_encode(s, small_dataset()[0]); }, "shape mismatch"));
}

TEST(Decoder, ShapeAndRange)
{
    for (const auto& cfg : {NetworkConfig{}, tiny_network()}) {
        const ModelState s = init_model(cfg);
        Rng rng(4);
        LatentVector z(cfg.latent);
        for (double& v : z)
            v = 5.0 * normal01(rng);
        const auto out = forward_decode(s, z);
        ASSERT_EQ(out.size(), 2u * static_cast<std::size_t>(cfg.image_size) * static_cast<std::size_t>(cfg.image_size));
        for (double v : out) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
        }
    }
    const ModelState s = init_model(tiny_network());
    EXPECT_TRUE(throws_with_prefix([&] { forward_decode(s, LatentVector(5, 0.0)); }, "shape mismatch"));
}

TEST(NetworkConfig, Validation)
{
    auto c = tiny_network();
    c.image_size = 12;
    EXPECT_THROW(init_model(c), Error);
    c = tiny_network();
    c.attention_heads = 3;
    EXPECT_THROW(init_model(c), Error);
    c = tiny_network();
    c.latent = 0;
    EXPECT_THROW(init_model(c), Error);
}

TEST(EmbedDataset, RowsMatchIndividualPasses)
{
    const ModelState s = init_model(tiny_network());
    const Dataset& d = tiny_dataset();
    const auto z = embed_dataset(s, d);
    ASSERT_EQ(z.size(), d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        ASSERT_EQ(z[i].size(), 4u);
        EXPECT_EQ(z[i], forward_encode(s, d[i]));
    }
}

// --- gradients and updates ----------------------------------------------------------

TEST(Training, FullModelGradientMatchesFiniteDifferences)
{
    const Dataset& d = tiny_dataset();
    const double h = 1e-5;
    Rng rng(6);
    int accepted = 0, kinks = 0;
    for (int attempt = 0; accepted < 50 && attempt < 200; ++attempt) {
        ModelState s = init_model(tiny_network(100 + static_cast<std::uint64_t>(attempt)));
        // Nonzero biases so every parameter tensor takes part.
        for (auto& p : s.params)
            for (double& v : p.value.values)
                if (v == 0.0)
                    v = uniform(rng, -0.3, 0.3);
        const auto quads = tiny_quadruplets(static_cast<std::uint64_t>(attempt));
        const Quadruplet q = quads[uniform_index(rng, quads.size())];
        const ReconstructionTarget target = build_reconstruction_target(d[q.anchor]);

        s.zero_grad();
        const double base = accumulate_gradients(s, q, d, target, MarginParams{}, LossWeights{}).total;
        const std::size_t k = uniform_index(rng, s.params.size());
        const std::size_t i = uniform_index(rng, s.params[k].value.size());
        const double analytic = s.params[k].grad[i];

        ModelState shifted = s;
        const double x0 = s.params[k].value[i];
        shifted.params[k].value[i] = x0 + h;
        const double up = objective(shifted, q);
        shifted.params[k].value[i] = x0 - h;
        const double down = objective(shifted, q);
        const double fwd = (up - base) / h, bwd = (base - down) / h;
        if (std::abs(fwd - bwd) > 1e-2 * std::max(std::abs(fwd), std::abs(bwd)) + 1e-6) {
            ++kinks; // a hinge or leaky unit switched inside the stencil
            continue;
        }
        const double numeric = (up - down) / (2.0 * h);
        EXPECT_NEAR(analytic, numeric, 1e-4 * std::max(std::abs(analytic), std::abs(numeric)) + 1e-8)
            << s.params[k].name << "[" << i << "]";
        ++accepted;
    }
    EXPECT_EQ(accepted, 50);
    EXPECT_LT(kinks, 25);
}

TEST(Training, DecoderGradientOfReconstructionLoss)
{
    const Dataset& d = tiny_dataset();
    const ModelState base = init_model(tiny_network(9));
    const ReconstructionTarget target = build_reconstruction_target(d[0]);
    LossWeights w;
    auto rec = [&](const ModelState& s, const LatentVector& z) {
        return sparse_reconstruction_loss(target, forward_decode(s, z), w).value;
    };
    const LatentVector z{0.3, -0.7, 1.1, 0.2};

    ModelState s = base;
    s.zero_grad();
    {
        ad::Tape tape;
        Bound p(tape, s);
        const ad::Var zv = tape.constant(ad::Tensor({1, 4}, z));
        const ad::Var pred = decode(p, zv);
        tape.backward({{pred, sparse_reconstruction_loss(target, tape.value(pred).values, w).grad}});
    }
    for (const char* name : {"decoder.dense.w", "decoder.up0.w", "decoder.up2.b"}) {
        const std::size_t k = s.index_of(name);
        ModelState shifted = base;
        const double x0 = base.params[k].value[1];
        shifted.params[k].value[1] = x0 + 1e-5;
        const double up = rec(shifted, z);
        shifted.params[k].value[1] = x0 - 1e-5;
        const double down = rec(shifted, z);
        const double numeric = (up - down) / 2e-5;
        EXPECT_NEAR(s.params[k].grad[1], numeric, 1e-4 * std::abs(numeric) + 1e-8) << name;
    }
}

TEST(Training, ZeroWeightsLeaveParametersUnchanged)
{
    const Dataset& d = tiny_dataset();
    ModelState s = init_model(tiny_network());
    const ModelState before = s;
    LossWeights w;
    w.beta_m = w.beta_g = w.beta_r = w.beta_t = w.beta_rec = 0.0;
    const Quadruplet q = tiny_quadruplets(1)[0];
    const auto l = train_step(s, q, d, build_reconstruction_target(d[q.anchor]), MarginParams{}, w, AdamConfig{}, 1e-3);
    EXPECT_EQ(l.total, 0.0);
    EXPECT_TRUE(same_parameters(s, before));
}

TEST(Training, StepFollowsADescentDirection)
{
    const Dataset& d = tiny_dataset();
    const double lr = 1e-7;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        ModelState s = init_model(tiny_network(200 + seed));
        const Quadruplet q = tiny_quadruplets(seed)[seed % 4];
        const ReconstructionTarget target = build_reconstruction_target(d[q.anchor]);
        const double before = objective(s, q);

        s.zero_grad();
        accumulate_gradients(s, q, d, target, MarginParams{}, LossWeights{});
        // First Adam step moves each coordinate by lr * g / (|g| + eps).
        const AdamConfig adam;
        double predicted = 0.0;
        for (const auto& p : s.params)
            for (double g : p.grad)
                predicted -= lr * g * g / (std::abs(g) + adam.eps);
        adam_update(s, adam, lr);
        const double after = objective(s, q);
        EXPECT_LT(after, before) << "seed " << seed;
        EXPECT_NEAR(after - before, predicted, 0.05 * std::abs(predicted)) << "seed " << seed;
    }
}

TEST(Training, NonFiniteLossIsReportedAsDivergence)
{
    const Dataset& d = tiny_dataset();
    ModelState s = init_model(tiny_network());
    s.param("fusion.2.b").value[0] = std::nan("");
    const Quadruplet q = tiny_quadruplets(1)[0];
    EXPECT_TRUE(throws_with_prefix(
        [&] {
            train_step(s, q, d, build_reconstruction_target(d[q.anchor]), MarginParams{}, LossWeights{}, AdamConfig{},
                       1e-3);
        },
        "divergence"));
}

TEST(Training, LearningRateSchedule)
{
    const AdamConfig a;
    EXPECT_DOUBLE_EQ(a.rate(0, 100), 1e-3);
    EXPECT_NEAR(a.rate(99, 100), 0.05e-3, 1e-15);
    for (std::uint64_t i = 1; i < 100; ++i)
        EXPECT_LE(a.rate(i, 100), a.rate(i - 1, 100));
    AdamConfig flat;
    flat.cosine_decay = false;
    EXPECT_EQ(flat.rate(50, 100), flat.lr);
}

TEST(Training, ZeroEpochsReturnsInitialState)
{
    const auto r = train(tiny_dataset(), tiny_training(0));
    EXPECT_TRUE(r.log.empty());
    auto net = tiny_network();
    net.seed = derive_seed(5, {1});
    EXPECT_TRUE(same_parameters(r.state, init_model(net)));
}

TEST(Training, DeterministicForAFixedSeed)
{
    std::vector<EpochMetrics> seen;
    const auto a = train(tiny_dataset(), tiny_training(2), [&](const ModelState&, const EpochMetrics& m) { seen.push_back(m); });
    const auto b = train(tiny_dataset(), tiny_training(2));
    ASSERT_EQ(a.log.size(), 2u);
    EXPECT_EQ(a.log, b.log);
    EXPECT_EQ(seen, a.log);
    EXPECT_EQ(encode_checkpoint(a.state), encode_checkpoint(b.state));
    for (const auto& m : a.log) {
        EXPECT_TRUE(std::isfinite(m.total));
        EXPECT_GE(m.ordering_satisfaction, 0.0);
        EXPECT_LE(m.ordering_satisfaction, 1.0);
    }
    for (const auto& z : embed_dataset(a.state, tiny_dataset()))
        for (double v : z)
            EXPECT_TRUE(std::isfinite(v));
}

// --- checkpoints ---------------------------------------------------------------------

TEST(Checkpoint, RoundTripIsExact)
{
    auto r = train(tiny_dataset(), tiny_training(1));
    const std::string bytes = encode_checkpoint(r.state);
    const ModelState back = decode_checkpoint(bytes);
    EXPECT_EQ(back.config, r.state.config);
    EXPECT_TRUE(same_parameters(back, r.state));
    EXPECT_EQ(back.adam, r.state.adam);
    EXPECT_EQ(encode_checkpoint(back), bytes);

    ScratchDir dir;
    save_checkpoint(r.state, dir / "nested" / "model.ckpt");
    EXPECT_EQ(encode_checkpoint(load_checkpoint(dir / "nested" / "model.ckpt")), bytes);
}

TEST(Checkpoint, RejectsDamagedFiles)
{
    const std::string bytes = encode_checkpoint(init_model(tiny_network()));
    EXPECT_TRUE(throws_with_prefix([&] { decode_checkpoint("NOTACKPT" + bytes.substr(8)); }, "malformed checkpoint"));
    EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), Error);
    EXPECT_TRUE(throws_with_prefix([&] { decode_checkpoint(bytes + "x"); }, "malformed checkpoint"));

    std::string other_version = bytes;
    const auto pos = other_version.find("\"version\":1");
    ASSERT_NE(pos, std::string::npos);
    other_version[pos + 10] = '2';
    EXPECT_TRUE(throws_with_prefix([&] { decode_checkpoint(other_version); }, "version mismatch"));
}
