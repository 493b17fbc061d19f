#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "scenemetric/autodiff/tensor.hpp"

namespace scenemetric::ad {

using Var = std::size_t;

/// Records operations in evaluation order and replays them backwards.
class Tape {
public:
    using Backward = std::function<void(Tape&, const std::vector<double>&)>;

    Var constant(Tensor t) { return push(std::move(t), {}, false); }

    /// Leaf whose gradient is kept on the tape (see grad()).
    Var input(Tensor t) { return push(std::move(t), {}, true); }

    /// Leaf bound to a parameter; backward() accumulates into p.grad.
    Var parameter(Parameter& p)
    {
        Parameter* ptr = &p;
        return push(p.value, [ptr](Tape&, const std::vector<double>& g) {
            for (std::size_t i = 0; i < g.size(); ++i)
                ptr->grad[i] += g[i];
        }, true);
    }

    const Tensor& value(Var v) const { return nodes_.at(v).value; }
    bool requires_grad(Var v) const { return nodes_.at(v).requires_grad; }
    std::size_t size() const { return nodes_.size(); }

    /// Gradient of the seeded outputs wrt v (zeros if nothing reached v).
    std::vector<double> grad(Var v) const
    {
        const Node& n = nodes_.at(v);
        return n.grad.empty() ? std::vector<double>(n.value.size(), 0.0) : n.grad;
    }

    Var record(Tensor value, const std::vector<Var>& parents, Backward bw)
    {
        const bool req = std::any_of(parents.begin(), parents.end(), [&](Var p) { return nodes_.at(p).requires_grad; });
        return push(std::move(value), req ? std::move(bw) : Backward{}, req);
    }

    /// Accumulates g into the gradient buffer of v if v needs it.
    void accumulate(Var v, const std::vector<double>& g)
    {
        Node& n = nodes_[v];
        if (!n.requires_grad)
            return;
        if (n.grad.empty())
            n.grad.assign(n.value.size(), 0.0);
        for (std::size_t i = 0; i < g.size(); ++i)
            n.grad[i] += g[i];
    }

    /// Mutable gradient buffer of v, or nullptr if v needs no gradient.
    std::vector<double>* grad_buffer(Var v)
    {
        Node& n = nodes_[v];
        if (!n.requires_grad)
            return nullptr;
        if (n.grad.empty())
            n.grad.assign(n.value.size(), 0.0);
        return &n.grad;
    }

    /// Reverse pass from several outputs at once, each with its own seed.
    void backward(const std::vector<std::pair<Var, std::vector<double>>>& seeds)
    {
        for (const auto& [v, g] : seeds) {
            if (g.size() != nodes_.at(v).value.size())
                throw Error("shape mismatch: seed of " + std::to_string(g.size()) + " values for a tensor of " +
                            std::to_string(nodes_[v].value.size()));
            accumulate(v, g);
        }
        for (std::size_t i = nodes_.size(); i-- > 0;) {
            Node& n = nodes_[i];
            if (n.grad.empty() || !n.backward)
                continue;
            n.backward(*this, n.grad);
        }
    }

    void backward(Var scalar)
    {
        require(value(scalar).size() == 1, "backward(Var) needs a scalar output");
        backward({{scalar, {1.0}}});
    }

private:
    struct Node {
        Tensor value;
        std::vector<double> grad;
        Backward backward;
        bool requires_grad = false;
    };

    Var push(Tensor t, Backward bw, bool req)
    {
        nodes_.push_back({std::move(t), {}, std::move(bw), req});
        return nodes_.size() - 1;
    }

    std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Operations

inline Var add(Tape& tape, Var a, Var b)
{
    const Tensor& x = tape.value(a);
    const Tensor& y = tape.value(b);
    if (x.shape != y.shape)
        throw Error("shape mismatch: add " + shape_string(x.shape) + " + " + shape_string(y.shape));
    Tensor out = x;
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] += y[i];
    return tape.record(std::move(out), {a, b}, [a, b](Tape& t, const std::vector<double>& g) {
        t.accumulate(a, g);
        t.accumulate(b, g);
    });
}

inline Var scale(Tape& tape, Var a, double s)
{
    Tensor out = tape.value(a);
    for (double& v : out.values)
        v *= s;
    return tape.record(std::move(out), {a}, [a, s](Tape& t, const std::vector<double>& g) {
        std::vector<double> d(g.size());
        for (std::size_t i = 0; i < g.size(); ++i)
            d[i] = g[i] * s;
        t.accumulate(a, d);
    });
}

inline Var reshape(Tape& tape, Var a, Shape shape)
{
    Tensor out = tape.value(a);
    if (shape_size(shape) != out.size())
        throw Error("shape mismatch: cannot reshape " + shape_string(out.shape) + " to " + shape_string(shape));
    out.shape = std::move(shape);
    return tape.record(std::move(out), {a}, [a](Tape& t, const std::vector<double>& g) { t.accumulate(a, g); });
}

inline Var leaky_relu(Tape& tape, Var a, double slope = 0.1)
{
    Tensor out = tape.value(a);
    for (double& v : out.values)
        if (v < 0.0)
            v *= slope;
    return tape.record(std::move(out), {a}, [a, slope](Tape& t, const std::vector<double>& g) {
        const Tensor& x = t.value(a);
        std::vector<double> d(g.size());
        for (std::size_t i = 0; i < g.size(); ++i)
            d[i] = x[i] < 0.0 ? g[i] * slope : g[i];
        t.accumulate(a, d);
    });
}

inline Var sigmoid(Tape& tape, Var a)
{
    Tensor out = tape.value(a);
    for (double& v : out.values)
        v = 1.0 / (1.0 + std::exp(-v));
    std::vector<double> y = out.values;
    return tape.record(std::move(out), {a}, [a, y = std::move(y)](Tape& t, const std::vector<double>& g) {
        std::vector<double> d(g.size());
        for (std::size_t i = 0; i < g.size(); ++i)
            d[i] = g[i] * y[i] * (1.0 - y[i]);
        t.accumulate(a, d);
    });
}

inline void require_matrix(const Tensor& t, const char* what)
{
    if (t.rank() != 2)
        throw Error(std::string("shape mismatch: ") + what + " expects a matrix, got " + shape_string(t.shape));
}

/// (n x k) * (k x m)
inline Var matmul(Tape& tape, Var a, Var b)
{
    const Tensor& x = tape.value(a);
    const Tensor& y = tape.value(b);
    require_matrix(x, "matmul");
    require_matrix(y, "matmul");
    const std::size_t n = x.dim(0), k = x.dim(1), m = y.dim(1);
    if (y.dim(0) != k)
        throw Error("shape mismatch: matmul " + shape_string(x.shape) + " x " + shape_string(y.shape));
    Tensor out = Tensor::zeros({n, m});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < k; ++p) {
            const double xv = x[i * k + p];
            if (xv == 0.0)
                continue;
            for (std::size_t j = 0; j < m; ++j)
                out[i * m + j] += xv * y[p * m + j];
        }
    return tape.record(std::move(out), {a, b}, [a, b, n, k, m](Tape& t, const std::vector<double>& g) {
        const Tensor& x2 = t.value(a);
        const Tensor& y2 = t.value(b);
        if (auto* ga = t.grad_buffer(a))
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    double s = 0.0;
                    for (std::size_t j = 0; j < m; ++j)
                        s += g[i * m + j] * y2[p * m + j];
                    (*ga)[i * k + p] += s;
                }
        if (auto* gb = t.grad_buffer(b))
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    const double xv = x2[i * k + p];
                    for (std::size_t j = 0; j < m; ++j)
                        (*gb)[p * m + j] += xv * g[i * m + j];
                }
    });
}

/// x (n x in) * w (in x out) + bias (out), bias broadcast over rows.
inline Var linear(Tape& tape, Var x, Var w, Var bias)
{
    const Var prod = matmul(tape, x, w);
    const Tensor& p = tape.value(prod);
    const Tensor& bv = tape.value(bias);
    const std::size_t n = p.dim(0), m = p.dim(1);
    if (bv.size() != m)
        throw Error("shape mismatch: bias of " + std::to_string(bv.size()) + " for " + std::to_string(m) + " outputs");
    Tensor out = p;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j)
            out[i * m + j] += bv[j];
    return tape.record(std::move(out), {prod, bias}, [prod, bias, n, m](Tape& t, const std::vector<double>& g) {
        t.accumulate(prod, g);
        if (auto* gb = t.grad_buffer(bias))
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < m; ++j)
                    (*gb)[j] += g[i * m + j];
    });
}

inline Var transpose(Tape& tape, Var a)
{
    const Tensor& x = tape.value(a);
    require_matrix(x, "transpose");
    const std::size_t n = x.dim(0), m = x.dim(1);
    Tensor out = Tensor::zeros({m, n});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j)
            out[j * n + i] = x[i * m + j];
    return tape.record(std::move(out), {a}, [a, n, m](Tape& t, const std::vector<double>& g) {
        std::vector<double> d(n * m);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < m; ++j)
                d[i * m + j] = g[j * n + i];
        t.accumulate(a, d);
    });
}

/// Row-wise softmax of a matrix.
inline Var softmax_rows(Tape& tape, Var a)
{
    const Tensor& x = tape.value(a);
    require_matrix(x, "softmax_rows");
    const std::size_t n = x.dim(0), m = x.dim(1);
    Tensor out = x;
    for (std::size_t i = 0; i < n; ++i) {
        double* row = out.values.data() + i * m;
        const double mx = *std::max_element(row, row + m);
        double sum = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            row[j] = std::exp(row[j] - mx);
            sum += row[j];
        }
        for (std::size_t j = 0; j < m; ++j)
            row[j] /= sum;
    }
    const Tensor y = out;
    return tape.record(std::move(out), {a}, [a, y, n, m](Tape& t, const std::vector<double>& g) {
        std::vector<double> d(n * m);
        for (std::size_t i = 0; i < n; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < m; ++j)
                dot += g[i * m + j] * y[i * m + j];
            for (std::size_t j = 0; j < m; ++j)
                d[i * m + j] = y[i * m + j] * (g[i * m + j] - dot);
        }
        t.accumulate(a, d);
    });
}

/// Columns [begin, end) of a matrix.
inline Var slice_cols(Tape& tape, Var a, std::size_t begin, std::size_t end)
{
    const Tensor& x = tape.value(a);
    require_matrix(x, "slice_cols");
    const std::size_t n = x.dim(0), m = x.dim(1);
    require(begin < end && end <= m, "column slice out of range");
    const std::size_t w = end - begin;
    Tensor out = Tensor::zeros({n, w});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < w; ++j)
            out[i * w + j] = x[i * m + begin + j];
    return tape.record(std::move(out), {a}, [a, n, m, w, begin](Tape& t, const std::vector<double>& g) {
        if (auto* ga = t.grad_buffer(a))
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < w; ++j)
                    (*ga)[i * m + begin + j] += g[i * w + j];
    });
}

/// Rows [begin, end) of a matrix.
inline Var slice_rows(Tape& tape, Var a, std::size_t begin, std::size_t end)
{
    const Tensor& x = tape.value(a);
    require_matrix(x, "slice_rows");
    const std::size_t n = x.dim(0), m = x.dim(1);
    require(begin < end && end <= n, "row slice out of range");
    Tensor out({end - begin, m}, std::vector<double>(x.values.begin() + static_cast<std::ptrdiff_t>(begin * m),
                                                     x.values.begin() + static_cast<std::ptrdiff_t>(end * m)));
    return tape.record(std::move(out), {a}, [a, m, begin, end](Tape& t, const std::vector<double>& g) {
        if (auto* ga = t.grad_buffer(a))
            for (std::size_t i = 0; i < (end - begin) * m; ++i)
                (*ga)[begin * m + i] += g[i];
    });
}

/// Side-by-side concatenation of matrices with equal row counts.
inline Var concat_cols(Tape& tape, const std::vector<Var>& parts)
{
    require(!parts.empty(), "concat of nothing");
    const std::size_t n = tape.value(parts[0]).dim(0);
    std::vector<std::size_t> widths;
    std::size_t total = 0;
    for (Var p : parts) {
        const Tensor& x = tape.value(p);
        require_matrix(x, "concat_cols");
        if (x.dim(0) != n)
            throw Error("shape mismatch: concat_cols row counts differ");
        widths.push_back(x.dim(1));
        total += x.dim(1);
    }
    Tensor out = Tensor::zeros({n, total});
    std::size_t offset = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const Tensor& x = tape.value(parts[k]);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < widths[k]; ++j)
                out[i * total + offset + j] = x[i * widths[k] + j];
        offset += widths[k];
    }
    return tape.record(std::move(out), parts, [parts, widths, n, total](Tape& t, const std::vector<double>& g) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < parts.size(); ++k) {
            if (auto* gp = t.grad_buffer(parts[k]))
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < widths[k]; ++j)
                        (*gp)[i * widths[k] + j] += g[i * total + off + j];
            off += widths[k];
        }
    });
}

/// Stacks matrices with equal column counts on top of each other.
inline Var concat_rows(Tape& tape, const std::vector<Var>& parts)
{
    require(!parts.empty(), "concat of nothing");
    const std::size_t m = tape.value(parts[0]).dim(1);
    std::vector<std::size_t> offsets;
    std::vector<double> values;
    for (Var p : parts) {
        const Tensor& x = tape.value(p);
        require_matrix(x, "concat_rows");
        if (x.dim(1) != m)
            throw Error("shape mismatch: concat_rows column counts differ");
        offsets.push_back(values.size());
        values.insert(values.end(), x.values.begin(), x.values.end());
    }
    const std::size_t rows = values.size() / m;
    return tape.record(Tensor({rows, m}, std::move(values)), parts, [parts, offsets](Tape& t, const std::vector<double>& g) {
        for (std::size_t k = 0; k < parts.size(); ++k)
            if (auto* gp = t.grad_buffer(parts[k]))
                for (std::size_t i = 0; i < gp->size(); ++i)
                    (*gp)[i] += g[offsets[k] + i];
    });
}

/// 2-D convolution of x (C x H x W) with w (Co x C x K x K) and bias (Co).
inline Var conv2d(Tape& tape, Var x, Var w, Var bias, std::size_t stride, std::size_t pad)
{
    const Tensor& xv = tape.value(x);
    const Tensor& wv = tape.value(w);
    if (xv.rank() != 3 || wv.rank() != 4 || wv.dim(1) != xv.dim(0) || wv.dim(2) != wv.dim(3) ||
        tape.value(bias).size() != wv.dim(0))
        throw Error("shape mismatch: conv2d input " + shape_string(xv.shape) + " kernel " + shape_string(wv.shape));
    const std::size_t c_in = xv.dim(0), h = xv.dim(1), wd = xv.dim(2);
    const std::size_t c_out = wv.dim(0), k = wv.dim(2);
    require(h + 2 * pad >= k && wd + 2 * pad >= k, "conv2d kernel larger than padded input");
    const std::size_t ho = (h + 2 * pad - k) / stride + 1;
    const std::size_t wo = (wd + 2 * pad - k) / stride + 1;
    const auto ipad = static_cast<std::ptrdiff_t>(pad);

    Tensor out = Tensor::zeros({c_out, ho, wo});
    const Tensor& bv = tape.value(bias);
    for (std::size_t o = 0; o < c_out; ++o)
        for (std::size_t i = 0; i < ho * wo; ++i)
            out[o * ho * wo + i] = bv[o];
    for (std::size_t o = 0; o < c_out; ++o)
        for (std::size_t c = 0; c < c_in; ++c)
            for (std::size_t ki = 0; ki < k; ++ki)
                for (std::size_t kj = 0; kj < k; ++kj) {
                    const double wgt = wv[((o * c_in + c) * k + ki) * k + kj];
                    for (std::size_t i = 0; i < ho; ++i) {
                        const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(i * stride + ki) - ipad;
                        if (r < 0 || r >= static_cast<std::ptrdiff_t>(h))
                            continue;
                        const double* xrow = xv.values.data() + (c * h + static_cast<std::size_t>(r)) * wd;
                        double* orow = out.values.data() + (o * ho + i) * wo;
                        for (std::size_t j = 0; j < wo; ++j) {
                            const std::ptrdiff_t col = static_cast<std::ptrdiff_t>(j * stride + kj) - ipad;
                            if (col < 0 || col >= static_cast<std::ptrdiff_t>(wd))
                                continue;
                            orow[j] += wgt * xrow[col];
                        }
                    }
                }

    return tape.record(std::move(out), {x, w, bias},
                       [=](Tape& t, const std::vector<double>& g) {
                           const Tensor& xv2 = t.value(x);
                           const Tensor& wv2 = t.value(w);
                           auto* gx = t.grad_buffer(x);
                           auto* gw = t.grad_buffer(w);
                           if (auto* gb = t.grad_buffer(bias))
                               for (std::size_t o = 0; o < c_out; ++o)
                                   for (std::size_t i = 0; i < ho * wo; ++i)
                                       (*gb)[o] += g[o * ho * wo + i];
                           for (std::size_t o = 0; o < c_out; ++o)
                               for (std::size_t c = 0; c < c_in; ++c)
                                   for (std::size_t ki = 0; ki < k; ++ki)
                                       for (std::size_t kj = 0; kj < k; ++kj) {
                                           const std::size_t widx = ((o * c_in + c) * k + ki) * k + kj;
                                           const double wgt = wv2[widx];
                                           double acc = 0.0;
                                           for (std::size_t i = 0; i < ho; ++i) {
                                               const std::ptrdiff_t r =
                                                   static_cast<std::ptrdiff_t>(i * stride + ki) - ipad;
                                               if (r < 0 || r >= static_cast<std::ptrdiff_t>(h))
                                                   continue;
                                               const std::size_t xbase = (c * h + static_cast<std::size_t>(r)) * wd;
                                               const double* grow = g.data() + (o * ho + i) * wo;
                                               for (std::size_t j = 0; j < wo; ++j) {
                                                   const std::ptrdiff_t col =
                                                       static_cast<std::ptrdiff_t>(j * stride + kj) - ipad;
                                                   if (col < 0 || col >= static_cast<std::ptrdiff_t>(wd))
                                                       continue;
                                                   const std::size_t xi = xbase + static_cast<std::size_t>(col);
                                                   acc += grow[j] * xv2[xi];
                                                   if (gx)
                                                       (*gx)[xi] += grow[j] * wgt;
                                               }
                                           }
                                           if (gw)
                                               (*gw)[widx] += acc;
                                       }
                       });
}

/// Transposed 2-D convolution of x (C x H x W) with w (C x Co x K x K) and
/// bias (Co); output side (H - 1) * stride - 2 * pad + K.
inline Var conv_transpose2d(Tape& tape, Var x, Var w, Var bias, std::size_t stride, std::size_t pad)
{
    const Tensor& xv = tape.value(x);
    const Tensor& wv = tape.value(w);
    if (xv.rank() != 3 || wv.rank() != 4 || wv.dim(0) != xv.dim(0) || wv.dim(2) != wv.dim(3) ||
        tape.value(bias).size() != wv.dim(1))
        throw Error("shape mismatch: conv_transpose2d input " + shape_string(xv.shape) + " kernel " +
                    shape_string(wv.shape));
    const std::size_t c_in = xv.dim(0), h = xv.dim(1), wd = xv.dim(2);
    const std::size_t c_out = wv.dim(1), k = wv.dim(2);
    require((h - 1) * stride + k > 2 * pad && (wd - 1) * stride + k > 2 * pad, "conv_transpose2d output is empty");
    const std::size_t ho = (h - 1) * stride + k - 2 * pad;
    const std::size_t wo = (wd - 1) * stride + k - 2 * pad;
    const auto ipad = static_cast<std::ptrdiff_t>(pad);

    Tensor out = Tensor::zeros({c_out, ho, wo});
    const Tensor& bv = tape.value(bias);
    for (std::size_t o = 0; o < c_out; ++o)
        for (std::size_t i = 0; i < ho * wo; ++i)
            out[o * ho * wo + i] = bv[o];
    for (std::size_t c = 0; c < c_in; ++c)
        for (std::size_t o = 0; o < c_out; ++o)
            for (std::size_t ki = 0; ki < k; ++ki)
                for (std::size_t kj = 0; kj < k; ++kj) {
                    const double wgt = wv[((c * c_out + o) * k + ki) * k + kj];
                    for (std::size_t i = 0; i < h; ++i) {
                        const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(i * stride + ki) - ipad;
                        if (r < 0 || r >= static_cast<std::ptrdiff_t>(ho))
                            continue;
                        const double* xrow = xv.values.data() + (c * h + i) * wd;
                        double* orow = out.values.data() + (o * ho + static_cast<std::size_t>(r)) * wo;
                        for (std::size_t j = 0; j < wd; ++j) {
                            const std::ptrdiff_t col = static_cast<std::ptrdiff_t>(j * stride + kj) - ipad;
                            if (col < 0 || col >= static_cast<std::ptrdiff_t>(wo))
                                continue;
                            orow[col] += wgt * xrow[j];
                        }
                    }
                }

    return tape.record(std::move(out), {x, w, bias},
                       [=](Tape& t, const std::vector<double>& g) {
                           const Tensor& xv2 = t.value(x);
                           const Tensor& wv2 = t.value(w);
                           auto* gx = t.grad_buffer(x);
                           auto* gw = t.grad_buffer(w);
                           if (auto* gb = t.grad_buffer(bias))
                               for (std::size_t o = 0; o < c_out; ++o)
                                   for (std::size_t i = 0; i < ho * wo; ++i)
                                       (*gb)[o] += g[o * ho * wo + i];
                           for (std::size_t c = 0; c < c_in; ++c)
                               for (std::size_t o = 0; o < c_out; ++o)
                                   for (std::size_t ki = 0; ki < k; ++ki)
                                       for (std::size_t kj = 0; kj < k; ++kj) {
                                           const std::size_t widx = ((c * c_out + o) * k + ki) * k + kj;
                                           const double wgt = wv2[widx];
                                           double acc = 0.0;
                                           for (std::size_t i = 0; i < h; ++i) {
                                               const std::ptrdiff_t r =
                                                   static_cast<std::ptrdiff_t>(i * stride + ki) - ipad;
                                               if (r < 0 || r >= static_cast<std::ptrdiff_t>(ho))
                                                   continue;
                                               const std::size_t xbase = (c * h + i) * wd;
                                               const double* grow =
                                                   g.data() + (o * ho + static_cast<std::size_t>(r)) * wo;
                                               for (std::size_t j = 0; j < wd; ++j) {
                                                   const std::ptrdiff_t col =
                                                       static_cast<std::ptrdiff_t>(j * stride + kj) - ipad;
                                                   if (col < 0 || col >= static_cast<std::ptrdiff_t>(wo))
                                                       continue;
                                                   acc += grow[col] * xv2[xbase + j];
                                                   if (gx)
                                                       (*gx)[xbase + j] += grow[col] * wgt;
                                               }
                                           }
                                           if (gw)
                                               (*gw)[widx] += acc;
                                       }
                       });
}

} // namespace scenemetric::ad
