#pragma once

#include <bit>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "scenemetric/autodiff/tape.hpp"
#include "scenemetric/core/random.hpp"
#include "scenemetric/core/scenario.hpp"

namespace scenemetric {

struct NetworkConfig {
    int image_size = 64;
    std::size_t latent_i = 64;
    std::size_t latent_t = 16;
    std::size_t latent = 64;
    std::vector<std::size_t> conv_channels{8, 16, 16, 16};
    std::size_t attention_width = 16;
    std::size_t attention_heads = 2;
    std::size_t feedforward_width = 32;
    std::size_t fusion_hidden = 64;
    std::uint64_t seed = 1;

    /// Number of stride-2 upsampling blocks in the decoder.
    std::size_t up_blocks() const
    {
        return std::min<std::size_t>(4, static_cast<std::size_t>(std::countr_zero(static_cast<unsigned>(image_size))));
    }
    std::size_t base_side() const { return static_cast<std::size_t>(image_size) >> up_blocks(); }
    std::size_t fusion_input() const { return latent_i + latent_t; }

    void validate() const
    {
        require(image_size >= 8 && image_size % 8 == 0, "image_size must be a positive multiple of 8");
        require(latent_i >= 1 && latent_t >= 1 && latent >= 1, "latent sizes must be at least 1");
        require(conv_channels.size() == 4, "the image encoder has exactly 4 conv blocks");
        for (std::size_t c : conv_channels)
            require(c >= 1, "conv channel widths must be at least 1");
        require(attention_width >= 1 && attention_heads >= 1 && attention_width % attention_heads == 0,
                "attention width must be a positive multiple of the head count");
        require(feedforward_width >= 1 && fusion_hidden >= 1, "hidden widths must be at least 1");
    }

    friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

struct AdamState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    std::uint64_t step = 0;

    friend bool operator==(const AdamState&, const AdamState&) = default;
};

/// Parameters of the image encoder, trajectory encoder, fusion head and
/// decoder, plus optimizer moments.
struct ModelState {
    NetworkConfig config;
    std::vector<ad::Parameter> params;
    AdamState adam;

    ad::Parameter& param(const std::string& name) { return params[index_of(name)]; }
    const ad::Parameter& param(const std::string& name) const { return params[index_of(name)]; }

    std::size_t index_of(const std::string& name) const
    {
        for (std::size_t i = 0; i < params.size(); ++i)
            if (params[i].name == name)
                return i;
        throw Error("unknown parameter '" + name + "'");
    }

    std::size_t parameter_count() const
    {
        std::size_t n = 0;
        for (const auto& p : params)
            n += p.value.size();
        return n;
    }

    void zero_grad()
    {
        for (auto& p : params)
            p.zero_grad();
    }
};

namespace net_detail {

inline void add_param(ModelState& s, Rng& rng, std::string name, ad::Shape shape, std::size_t fan_in)
{
    ad::Tensor t = ad::Tensor::zeros(std::move(shape));
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (double& v : t.values)
        v = uniform(rng, -bound, bound) * 0.5;
    s.params.emplace_back(std::move(name), std::move(t));
}

inline void add_bias(ModelState& s, std::string name, std::size_t n)
{
    s.params.emplace_back(std::move(name), ad::Tensor::zeros({n}));
}

/// Channel list of the decoder's transposed convolutions: {in_0, out_0 = in_1, ..., 2}.
inline std::vector<std::size_t> decoder_channels(const NetworkConfig& c)
{
    std::vector<std::size_t> ch(c.conv_channels.rbegin(), c.conv_channels.rend());
    ch.resize(c.up_blocks());
    ch.push_back(2);
    return ch;
}

/// Sinusoidal position table (rows = positions, cols = width).
inline ad::Tensor position_encoding(std::size_t rows, std::size_t width)
{
    ad::Tensor t = ad::Tensor::zeros({rows, width});
    for (std::size_t p = 0; p < rows; ++p)
        for (std::size_t i = 0; i < width; ++i) {
            const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(width));
            const double a = static_cast<double>(p) * freq;
            t[p * width + i] = (i % 2 == 0) ? std::sin(a) : std::cos(a);
        }
    return t;
}

} // namespace net_detail

inline ModelState init_model(const NetworkConfig& cfg)
{
    cfg.validate();
    using net_detail::add_bias;
    using net_detail::add_param;
    ModelState s;
    s.config = cfg;
    Rng rng(derive_seed(cfg.seed, {0x1417}));

    std::size_t in_ch = 1;
    std::size_t side = static_cast<std::size_t>(cfg.image_size);
    for (std::size_t b = 0; b < 4; ++b) {
        const std::size_t out = cfg.conv_channels[b];
        add_param(s, rng, "image.conv" + std::to_string(b) + ".w", {out, in_ch, 3, 3}, in_ch * 9);
        add_bias(s, "image.conv" + std::to_string(b) + ".b", out);
        in_ch = out;
        side = (side - 1) / 2 + 1;
    }
    add_param(s, rng, "image.dense.w", {in_ch * side * side, cfg.latent_i}, in_ch * side * side);
    add_bias(s, "image.dense.b", cfg.latent_i);

    const std::size_t w = cfg.attention_width;
    add_param(s, rng, "traj.embed.w", {3, w}, 3);
    add_bias(s, "traj.embed.b", w);
    add_param(s, rng, "traj.token", {1, w}, w);
    for (const char* n : {"q", "k", "v", "o"}) {
        add_param(s, rng, std::string("traj.attn.") + n + ".w", {w, w}, w);
        add_bias(s, std::string("traj.attn.") + n + ".b", w);
    }
    add_param(s, rng, "traj.ff1.w", {w, cfg.feedforward_width}, w);
    add_bias(s, "traj.ff1.b", cfg.feedforward_width);
    add_param(s, rng, "traj.ff2.w", {cfg.feedforward_width, w}, cfg.feedforward_width);
    add_bias(s, "traj.ff2.b", w);
    add_param(s, rng, "traj.out.w", {w, cfg.latent_t}, w);
    add_bias(s, "traj.out.b", cfg.latent_t);

    add_param(s, rng, "fusion.1.w", {cfg.fusion_input(), cfg.fusion_hidden}, cfg.fusion_input());
    add_bias(s, "fusion.1.b", cfg.fusion_hidden);
    add_param(s, rng, "fusion.2.w", {cfg.fusion_hidden, cfg.latent}, cfg.fusion_hidden);
    add_bias(s, "fusion.2.b", cfg.latent);

    const auto dec = net_detail::decoder_channels(cfg);
    const std::size_t b0 = cfg.base_side();
    add_param(s, rng, "decoder.dense.w", {cfg.latent, dec[0] * b0 * b0}, cfg.latent);
    add_bias(s, "decoder.dense.b", dec[0] * b0 * b0);
    for (std::size_t b = 0; b + 1 < dec.size(); ++b) {
        add_param(s, rng, "decoder.up" + std::to_string(b) + ".w", {dec[b], dec[b + 1], 4, 4}, dec[b] * 4);
        add_bias(s, "decoder.up" + std::to_string(b) + ".b", dec[b + 1]);
    }

    for (const auto& p : s.params) {
        s.adam.m.emplace_back(p.value.size(), 0.0);
        s.adam.v.emplace_back(p.value.size(), 0.0);
    }
    return s;
}

/// Binds model parameters to a tape: as differentiable leaves while training,
/// as constants for pure inference.
class Bound {
public:
    Bound(ad::Tape& tape, ModelState& state) : tape_(tape), state_(&state), cstate_(&state) {}
    Bound(ad::Tape& tape, const ModelState& state) : tape_(tape), cstate_(&state) {}

    ad::Tape& tape() { return tape_; }
    const NetworkConfig& config() const { return cstate_->config; }

    ad::Var operator()(const std::string& name)
    {
        auto it = cache_.find(name);
        if (it != cache_.end())
            return it->second;
        const ad::Var v = state_ ? tape_.parameter(state_->param(name)) : tape_.constant(cstate_->param(name).value);
        cache_.emplace(name, v);
        return v;
    }

private:
    ad::Tape& tape_;
    ModelState* state_ = nullptr;
    const ModelState* cstate_ = nullptr;
    std::map<std::string, ad::Var> cache_;
};

inline ad::Tensor image_tensor(const InfrastructureImage& img)
{
    const auto s = static_cast<std::size_t>(img.size());
    return ad::Tensor({1, s, s}, std::vector<double>(img.pixels().begin(), img.pixels().end()));
}

/// (x, y) scaled by half the image extent, time mapped onto [0, 1].
inline ad::Tensor trajectory_tensor(const Trajectory& traj, double extent)
{
    const double half = 0.5 * extent;
    const double t0 = traj[0].t;
    const double span = traj.duration();
    ad::Tensor t = ad::Tensor::zeros({traj.size(), 3});
    for (std::size_t i = 0; i < traj.size(); ++i) {
        t[3 * i] = traj[i].x / half;
        t[3 * i + 1] = traj[i].y / half;
        t[3 * i + 2] = (traj[i].t - t0) / span;
    }
    return t;
}

inline ad::Var encode_image(Bound& p, const InfrastructureImage& img)
{
    auto& tape = p.tape();
    if (img.size() != p.config().image_size)
        throw Error("shape mismatch: image size " + std::to_string(img.size()) + " but the network expects " +
                    std::to_string(p.config().image_size));
    ad::Var h = tape.constant(image_tensor(img));
    for (std::size_t b = 0; b < 4; ++b) {
        const std::string n = "image.conv" + std::to_string(b);
        h = ad::leaky_relu(tape, ad::conv2d(tape, h, p(n + ".w"), p(n + ".b"), 2, 1));
    }
    h = ad::reshape(tape, h, {1, tape.value(h).size()});
    return ad::linear(tape, h, p("image.dense.w"), p("image.dense.b"));
}

inline ad::Var encode_trajectory(Bound& p, const Trajectory& traj, double extent)
{
    auto& tape = p.tape();
    const auto& cfg = p.config();
    const std::size_t w = cfg.attention_width;
    const std::size_t n = traj.size();

    ad::Var x = tape.constant(trajectory_tensor(traj, extent));
    ad::Var e = ad::linear(tape, x, p("traj.embed.w"), p("traj.embed.b"));
    e = ad::add(tape, e, tape.constant(net_detail::position_encoding(n, w)));
    ad::Var h = ad::concat_rows(tape, {p("traj.token"), e});

    const ad::Var q = ad::linear(tape, h, p("traj.attn.q.w"), p("traj.attn.q.b"));
    const ad::Var k = ad::linear(tape, h, p("traj.attn.k.w"), p("traj.attn.k.b"));
    const ad::Var v = ad::linear(tape, h, p("traj.attn.v.w"), p("traj.attn.v.b"));
    const std::size_t hw = w / cfg.attention_heads;
    std::vector<ad::Var> heads;
    for (std::size_t i = 0; i < cfg.attention_heads; ++i) {
        const ad::Var qh = ad::slice_cols(tape, q, i * hw, (i + 1) * hw);
        const ad::Var kh = ad::slice_cols(tape, k, i * hw, (i + 1) * hw);
        const ad::Var vh = ad::slice_cols(tape, v, i * hw, (i + 1) * hw);
        ad::Var scores = ad::scale(tape, ad::matmul(tape, qh, ad::transpose(tape, kh)),
                                   1.0 / std::sqrt(static_cast<double>(hw)));
        heads.push_back(ad::matmul(tape, ad::softmax_rows(tape, scores), vh));
    }
    ad::Var attn = heads.size() == 1 ? heads[0] : ad::concat_cols(tape, heads);
    attn = ad::linear(tape, attn, p("traj.attn.o.w"), p("traj.attn.o.b"));
    h = ad::add(tape, h, attn);

    ad::Var ff = ad::leaky_relu(tape, ad::linear(tape, h, p("traj.ff1.w"), p("traj.ff1.b")));
    ff = ad::linear(tape, ff, p("traj.ff2.w"), p("traj.ff2.b"));
    h = ad::add(tape, h, ff);

    const ad::Var token = ad::slice_rows(tape, h, 0, 1);
    return ad::linear(tape, token, p("traj.out.w"), p("traj.out.b"));
}

/// z = f_c([z_T, z_I]) as a 1 x L row.
inline ad::Var encode(Bound& p, const Scenario& s)
{
    auto& tape = p.tape();
    const ad::Var zi = encode_image(p, s.image);
    const ad::Var zt = encode_trajectory(p, s.trajectory, s.image.extent());
    ad::Var h = ad::concat_cols(tape, {zt, zi});
    h = ad::leaky_relu(tape, ad::linear(tape, h, p("fusion.1.w"), p("fusion.1.b")));
    return ad::linear(tape, h, p("fusion.2.w"), p("fusion.2.b"));
}

/// Channel-major 2 x S x S reconstruction in [0, 1].
inline ad::Var decode(Bound& p, ad::Var z)
{
    auto& tape = p.tape();
    const auto& cfg = p.config();
    if (tape.value(z).size() != cfg.latent)
        throw Error("shape mismatch: latent of " + std::to_string(tape.value(z).size()) + " values, expected " +
                    std::to_string(cfg.latent));
    const auto dec = net_detail::decoder_channels(cfg);
    const std::size_t b0 = cfg.base_side();
    ad::Var h = ad::reshape(tape, z, {1, cfg.latent});
    h = ad::linear(tape, h, p("decoder.dense.w"), p("decoder.dense.b"));
    h = ad::leaky_relu(tape, ad::reshape(tape, h, {dec[0], b0, b0}));
    for (std::size_t b = 0; b + 1 < dec.size(); ++b) {
        const std::string n = "decoder.up" + std::to_string(b);
        h = ad::conv_transpose2d(tape, h, p(n + ".w"), p(n + ".b"), 2, 1);
        if (b + 2 < dec.size())
            h = ad::leaky_relu(tape, h);
    }
    return ad::sigmoid(tape, h);
}

using LatentVector = std::vector<double>;

inline LatentVector forward_encode(const ModelState& state, const Scenario& s)
{
    ad::Tape tape;
    Bound p(tape, state);
    return tape.value(encode(p, s)).values;
}

inline std::vector<double> forward_decode(const ModelState& state, const LatentVector& z)
{
    ad::Tape tape;
    Bound p(tape, state);
    const ad::Var zv = tape.constant(ad::Tensor({1, z.size()}, z));
    return tape.value(decode(p, zv)).values;
}

} // namespace scenemetric
