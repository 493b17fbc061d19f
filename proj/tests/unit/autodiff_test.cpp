#include <cmath>
#include <functional>

#include <gtest/gtest.h>

#include "scenemetric/autodiff/tape.hpp"
#include "scenemetric/core/random.hpp"
#include "test_support.hpp"

using namespace scenemetric;
using namespace scenemetric::ad;
using scenemetric::testing::throws_with_prefix;

namespace {

constexpr double kStep = 1e-5;
constexpr double kRelTol = 1e-4;
constexpr double kAbsFloor = 1e-8;

using Op = std::function<Var(Tape&, const std::vector<Var>&)>;

Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0)
{
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : t.values)
        v = uniform(rng, lo, hi);
    return t;
}

// Pushes every coordinate at least `gap` away from zero (kink of leaky relu).
Tensor away_from_zero(Tensor t, double gap)
{
    for (double& v : t.values)
        if (std::abs(v) < gap)
            v = v < 0 ? v - gap : v + gap;
    return t;
}

// Scalar probe: sum of op output weighted by fixed random coefficients.
double probe(const Op& op, const std::vector<Tensor>& inputs, const std::vector<double>& weights)
{
    Tape tape;
    std::vector<Var> vars;
    for (const auto& t : inputs)
        vars.push_back(tape.constant(t));
    const Tensor& out = tape.value(op(tape, vars));
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i)
        s += weights[i] * out[i];
    return s;
}

// Checks reverse-mode gradients of `op` wrt every input coordinate.
void check_gradients(const Op& op, const std::vector<Tensor>& inputs, Rng& rng)
{
    Tape tape;
    std::vector<Var> vars;
    for (const auto& t : inputs)
        vars.push_back(tape.input(t));
    const Var out = op(tape, vars);
    std::vector<double> weights(tape.value(out).size());
    for (double& w : weights)
        w = uniform(rng, -1.0, 1.0);
    tape.backward({{out, weights}});

    for (std::size_t k = 0; k < inputs.size(); ++k) {
        const auto analytic = tape.grad(vars[k]);
        for (std::size_t i = 0; i < inputs[k].size(); ++i) {
            auto shifted = inputs;
            shifted[k][i] = inputs[k][i] + kStep;
            const double up = probe(op, shifted, weights);
            shifted[k][i] = inputs[k][i] - kStep;
            const double down = probe(op, shifted, weights);
            const double numeric = (up - down) / (2.0 * kStep);
            const double tol = kRelTol * std::max(std::abs(numeric), std::abs(analytic[i])) + kAbsFloor;
            ASSERT_NEAR(analytic[i], numeric, tol) << "input " << k << " coordinate " << i;
        }
    }
}

// Direct zero-padded convolution, written independently of the tape.
Tensor naive_conv2d(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride, std::size_t pad)
{
    const long c_in = static_cast<long>(x.dim(0)), h = static_cast<long>(x.dim(1)), wd = static_cast<long>(x.dim(2));
    const long c_out = static_cast<long>(w.dim(0)), k = static_cast<long>(w.dim(2));
    const long s = static_cast<long>(stride), p = static_cast<long>(pad);
    const long ho = (h + 2 * p - k) / s + 1, wo = (wd + 2 * p - k) / s + 1;
    Tensor out = Tensor::zeros({static_cast<std::size_t>(c_out), static_cast<std::size_t>(ho), static_cast<std::size_t>(wo)});
    auto at = [&](long c, long r, long col) {
        return (r < 0 || r >= h || col < 0 || col >= wd) ? 0.0 : x[static_cast<std::size_t>((c * h + r) * wd + col)];
    };
    for (long o = 0; o < c_out; ++o)
        for (long i = 0; i < ho; ++i)
            for (long j = 0; j < wo; ++j) {
                double acc = b[static_cast<std::size_t>(o)];
                for (long c = 0; c < c_in; ++c)
                    for (long ki = 0; ki < k; ++ki)
                        for (long kj = 0; kj < k; ++kj)
                            acc += w[static_cast<std::size_t>(((o * c_in + c) * k + ki) * k + kj)] *
                                   at(c, i * s + ki - p, j * s + kj - p);
                out[static_cast<std::size_t>((o * ho + i) * wo + j)] = acc;
            }
    return out;
}

double dot(const Tensor& a, const Tensor& b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        s += a[i] * b[i];
    return s;
}

} // namespace

TEST(Tensor, ShapeMustMatchValueCount)
{
    EXPECT_TRUE(throws_with_prefix([] { Tensor({2, 3}, std::vector<double>(5)); }, "shape mismatch"));
    EXPECT_EQ(Tensor::zeros({2, 3, 4}).size(), 24u);
    EXPECT_EQ(shape_string({2, 3}), "(2,3)");
}

TEST(Tape, ConstantsCollectNoGradient)
{
    Tape tape;
    const Var c = tape.constant(Tensor({1, 2}, {1.0, 2.0}));
    const Var x = tape.input(Tensor({1, 2}, {3.0, 4.0}));
    const Var y = add(tape, c, x);
    tape.backward({{y, {1.0, -1.0}}});
    EXPECT_FALSE(tape.requires_grad(c));
    EXPECT_EQ(tape.grad(c), (std::vector<double>{0.0, 0.0}));
    EXPECT_EQ(tape.grad(x), (std::vector<double>{1.0, -1.0}));

    const Var z = scale(tape, c, 2.0);
    EXPECT_FALSE(tape.requires_grad(z)); // derived from constants only
}

TEST(Tape, ParametersAccumulateAcrossUses)
{
    Parameter p("w", Tensor({1, 1}, {3.0}));
    Tape tape;
    const Var a = tape.parameter(p);
    const Var b = tape.parameter(p); // two leaves bound to one parameter
    const Var y = matmul(tape, a, b); // w * w
    tape.backward(y);
    EXPECT_DOUBLE_EQ(p.grad[0], 6.0);
    p.zero_grad();
    EXPECT_EQ(p.grad[0], 0.0);
}

TEST(Tape, BackwardNeedsScalarOrMatchingSeed)
{
    Tape tape;
    const Var x = tape.input(Tensor({1, 3}, {1, 2, 3}));
    EXPECT_THROW(tape.backward(x), Error);
    EXPECT_TRUE(throws_with_prefix([&] { tape.backward({{x, {1.0}}}); }, "shape mismatch"));
}

TEST(Ops, ShapeErrors)
{
    Tape tape;
    const Var a = tape.input(Tensor::zeros({2, 3}));
    const Var b = tape.input(Tensor::zeros({2, 2}));
    EXPECT_TRUE(throws_with_prefix([&] { add(tape, a, b); }, "shape mismatch"));
    EXPECT_TRUE(throws_with_prefix([&] { matmul(tape, a, b); }, "shape mismatch"));
    EXPECT_TRUE(throws_with_prefix([&] { reshape(tape, a, {5}); }, "shape mismatch"));
    EXPECT_TRUE(throws_with_prefix([&] { concat_rows(tape, {a, b}); }, "shape mismatch"));
    const Var img = tape.input(Tensor::zeros({2, 5, 5}));
    const Var w = tape.input(Tensor::zeros({4, 3, 3, 3}));
    const Var bias = tape.input(Tensor::zeros({4}));
    EXPECT_TRUE(throws_with_prefix([&] { conv2d(tape, img, w, bias, 1, 1); }, "shape mismatch"));
}

TEST(Ops, MatmulValuesMatchDirectProduct)
{
    Rng rng(11);
    const Tensor x = random_tensor(rng, {3, 4});
    const Tensor y = random_tensor(rng, {4, 2});
    Tape tape;
    const Tensor& out = tape.value(matmul(tape, tape.constant(x), tape.constant(y)));
    ASSERT_EQ(out.shape, (Shape{3, 2}));
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 2; ++j) {
            double s = 0.0;
            for (std::size_t p = 0; p < 4; ++p)
                s += x[i * 4 + p] * y[p * 2 + j];
            EXPECT_NEAR(out[i * 2 + j], s, 1e-15);
        }
}

TEST(Ops, SoftmaxRowsSumToOne)
{
    Rng rng(12);
    Tape tape;
    const Tensor& out = tape.value(softmax_rows(tape, tape.constant(random_tensor(rng, {4, 5}, -30, 30))));
    for (std::size_t i = 0; i < 4; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < 5; ++j) {
            EXPECT_GE(out[i * 5 + j], 0.0);
            s += out[i * 5 + j];
        }
        EXPECT_NEAR(s, 1.0, 1e-12);
    }
}

TEST(Ops, Conv2dMatchesDirectConvolution)
{
    Rng rng(13);
    for (std::size_t stride : {1u, 2u})
        for (std::size_t pad : {0u, 1u}) {
            const Tensor x = random_tensor(rng, {2, 7, 6});
            const Tensor w = random_tensor(rng, {3, 2, 3, 3});
            const Tensor b = random_tensor(rng, {3});
            Tape tape;
            const Tensor& out =
                tape.value(conv2d(tape, tape.constant(x), tape.constant(w), tape.constant(b), stride, pad));
            const Tensor ref = naive_conv2d(x, w, b, stride, pad);
            ASSERT_EQ(out.shape, ref.shape);
            for (std::size_t i = 0; i < ref.size(); ++i)
                EXPECT_NEAR(out[i], ref[i], 1e-12);
        }
}

TEST(Ops, TransposedConvolutionIsTheAdjointOfConvolution)
{
    // <conv_t(x; w), y> == <x, conv(y; w)> with zero biases and matching sides.
    Rng rng(14);
    const std::size_t stride = 2, pad = 1, k = 4;
    const Tensor x = random_tensor(rng, {3, 4, 4});
    const Tensor w = random_tensor(rng, {3, 2, k, k});
    Tape tape;
    const Tensor& up = tape.value(conv_transpose2d(tape, tape.constant(x), tape.constant(w),
                                                   tape.constant(Tensor::zeros({2})), stride, pad));
    ASSERT_EQ(up.shape, (Shape{2, 8, 8}));
    const Tensor y = random_tensor(rng, {2, 8, 8});
    const Tensor down = naive_conv2d(y, w, Tensor::zeros({3}), stride, pad);
    ASSERT_EQ(down.shape, x.shape);
    EXPECT_NEAR(dot(up, y), dot(x, down), 1e-12);
}

// --- finite-difference checks of every primitive -------------------------------------

TEST(Gradients, Add)
{
    Rng rng(21);
    check_gradients([](Tape& t, const std::vector<Var>& v) { return add(t, v[0], v[1]); },
                    {random_tensor(rng, {2, 3}), random_tensor(rng, {2, 3})}, rng);
}

TEST(Gradients, ScaleAndReshape)
{
    Rng rng(22);
    check_gradients([](Tape& t, const std::vector<Var>& v) { return reshape(t, scale(t, v[0], -1.7), {3, 2}); },
                    {random_tensor(rng, {2, 3})}, rng);
}

TEST(Gradients, Matmul)
{
    Rng rng(23);
    check_gradients([](Tape& t, const std::vector<Var>& v) { return matmul(t, v[0], v[1]); },
                    {random_tensor(rng, {3, 4}), random_tensor(rng, {4, 5})}, rng);
}

TEST(Gradients, Dense)
{
    Rng rng(24);
    check_gradients([](Tape& t, const std::vector<Var>& v) { return linear(t, v[0], v[1], v[2]); },
                    {random_tensor(rng, {2, 4}), random_tensor(rng, {4, 3}), random_tensor(rng, {3})}, rng);
}

TEST(Gradients, LeakyRelu)
{
    Rng rng(25);
    check_gradients([](Tape& t, const std::vector<Var>& v) { return leaky_relu(t, v[0]); },
                    {away_from_zero(random_tensor(rng, {3, 4}), 1e-3)}, rng);
}

TEST(Gradients, Sigmoid)
{
    Rng rng(26);
    check_gradients([](Tape& t, const std::vector<Var>& v) { return sigmoid(t, v[0]); },
                    {random_tensor(rng, {2, 5}, -4, 4)}, rng);
}

TEST(Gradients, SoftmaxRows)
{
    Rng rng(27);
    check_gradients([](Tape& t, const std::vector<Var>& v) { return softmax_rows(t, v[0]); },
                    {random_tensor(rng, {3, 4}, -2, 2)}, rng);
}

TEST(Gradients, TransposeSliceAndConcat)
{
    Rng rng(28);
    check_gradients(
        [](Tape& t, const std::vector<Var>& v) {
            const Var tr = transpose(t, v[0]);                 // 4 x 3
            const Var cols = slice_cols(t, tr, 1, 3);          // 4 x 2
            const Var rows = slice_rows(t, v[1], 1, 3);        // 2 x 2
            const Var stacked = concat_rows(t, {cols, rows});  // 6 x 2
            return concat_cols(t, {stacked, stacked});         // 6 x 4
        },
        {random_tensor(rng, {3, 4}), random_tensor(rng, {3, 2})}, rng);
}

TEST(Gradients, Conv2d)
{
    Rng rng(29);
    for (std::size_t stride : {1u, 2u})
        check_gradients([stride](Tape& t, const std::vector<Var>& v) { return conv2d(t, v[0], v[1], v[2], stride, 1); },
                        {random_tensor(rng, {2, 5, 6}), random_tensor(rng, {3, 2, 3, 3}), random_tensor(rng, {3})},
                        rng);
}

TEST(Gradients, TransposedConv2d)
{
    Rng rng(30);
    check_gradients(
        [](Tape& t, const std::vector<Var>& v) { return conv_transpose2d(t, v[0], v[1], v[2], 2, 1); },
        {random_tensor(rng, {2, 3, 3}), random_tensor(rng, {2, 3, 4, 4}), random_tensor(rng, {3})}, rng);
}

TEST(Gradients, SelfAttention)
{
    // Two-head scaled dot-product attention with a residual connection.
    Rng rng(31);
    check_gradients(
        [](Tape& t, const std::vector<Var>& v) {
            const Var q = matmul(t, v[0], v[1]);
            const Var k = matmul(t, v[0], v[2]);
            const Var val = matmul(t, v[0], v[3]);
            std::vector<Var> heads;
            for (std::size_t h = 0; h < 2; ++h) {
                const Var qh = slice_cols(t, q, 2 * h, 2 * h + 2);
                const Var kh = slice_cols(t, k, 2 * h, 2 * h + 2);
                const Var vh = slice_cols(t, val, 2 * h, 2 * h + 2);
                const Var s = scale(t, matmul(t, qh, transpose(t, kh)), 1.0 / std::sqrt(2.0));
                heads.push_back(matmul(t, softmax_rows(t, s), vh));
            }
            return add(t, v[0], concat_cols(t, heads));
        },
        {random_tensor(rng, {5, 4}), random_tensor(rng, {4, 4}), random_tensor(rng, {4, 4}),
         random_tensor(rng, {4, 4})},
        rng);
}

TEST(Gradients, RandomSmallShapes)
{
    Rng rng(32);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t n = 1 + uniform_index(rng, 4), k = 1 + uniform_index(rng, 4), m = 1 + uniform_index(rng, 4);
        check_gradients(
            [](Tape& t, const std::vector<Var>& v) {
                return sigmoid(t, softmax_rows(t, linear(t, v[0], v[1], v[2])));
            },
            {random_tensor(rng, {n, k}), random_tensor(rng, {k, m}), random_tensor(rng, {m})}, rng);
        const std::size_t c = 1 + uniform_index(rng, 3), side = 3 + uniform_index(rng, 4);
        check_gradients(
            [](Tape& t, const std::vector<Var>& v) {
                return conv_transpose2d(t, conv2d(t, v[0], v[1], v[2], 2, 1), v[3], v[4], 2, 1);
            },
            {random_tensor(rng, {c, side, side}), random_tensor(rng, {2, c, 3, 3}), random_tensor(rng, {2}),
             random_tensor(rng, {2, c, 4, 4}), random_tensor(rng, {c})},
            rng);
    }
}
