/**
 * @file network.hpp
 * @brief Fully connected regression network: layer specs, parameters, Xavier
 *        initialization, dropout, batch normalization, forward pass, MSE with
 *        L2 weight decay, backpropagation and Adam.
 *
 * Batches are column-major: one column per sample.
 */
#pragma once

#include "vle/error.hpp"
#include "vle/neural/activation.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace vle::nn {

using Rng = std::mt19937_64;

struct LayerSpec {
    std::size_t width = 1;
    Activation activation = Activation::relu;
    bool batch_norm = false;
    double dropout_keep = 1.0;

    void validate() const
    {
        if (width < 1)
            throw ConfigError("layer width must be at least 1");
        if (!(dropout_keep > 0.0 && dropout_keep <= 1.0))
            throw ConfigError("dropout keep probability must be in (0, 1]");
    }

    /// Rows this layer hands to the next one.
    std::size_t output_width() const { return width * width_factor(activation); }
};

struct Architecture {
    std::size_t inputs = 8;
    std::vector<LayerSpec> hidden;
    std::size_t outputs = 2;

    static Architecture uniform(std::size_t depth, std::size_t width, Activation act, double keep = 1.0,
                                bool batch_norm = false, std::size_t inputs = 8, std::size_t outputs = 2)
    {
        Architecture a;
        a.inputs = inputs;
        a.outputs = outputs;
        a.hidden.assign(depth, LayerSpec{width, act, batch_norm, keep});
        return a;
    }

    void validate() const
    {
        if (inputs < 1 || outputs < 1)
            throw ConfigError("network needs at least one input and one output");
        for (const auto& l : hidden)
            l.validate();
    }

    /// Fan-in of layer i (i == hidden.size() is the output layer).
    std::size_t fan_in(std::size_t i) const { return i == 0 ? inputs : hidden[i - 1].output_width(); }
    std::size_t fan_out(std::size_t i) const { return i == hidden.size() ? outputs : hidden[i].width; }
    std::size_t layers() const { return hidden.size() + 1; }
};

/// Trainable and running quantities per layer; the last entry of `w` and `b`
/// is the linear output layer. Gradients use the same type.
struct Params {
    std::vector<Matrix> w;
    std::vector<Vector> b;
    std::vector<Vector> gamma;    ///< empty unless the layer has batch norm
    std::vector<Vector> beta;
    std::vector<Vector> run_mean; ///< not trained
    std::vector<Vector> run_var;
    std::vector<double> slope;    ///< PReLU slope (unused for other kinds)

    /// Visits every trainable block as (pointer, length) in a fixed order.
    template <class F>
    void for_each_trainable(const Architecture& arch, F&& f)
    {
        for (std::size_t i = 0; i < w.size(); ++i) {
            f(w[i].data(), static_cast<std::size_t>(w[i].size()));
            f(b[i].data(), static_cast<std::size_t>(b[i].size()));
            if (i < arch.hidden.size()) {
                if (arch.hidden[i].batch_norm) {
                    f(gamma[i].data(), static_cast<std::size_t>(gamma[i].size()));
                    f(beta[i].data(), static_cast<std::size_t>(beta[i].size()));
                }
                if (arch.hidden[i].activation == Activation::prelu)
                    f(&slope[i], std::size_t{1});
            }
        }
    }

    std::size_t trainable_count(const Architecture& arch) const
    {
        std::size_t n = 0;
        const_cast<Params*>(this)->for_each_trainable(arch, [&](double*, std::size_t len) { n += len; });
        return n;
    }

    /// Same shapes, all zero.
    Params zeros_like() const
    {
        Params z = *this;
        for (auto& m : z.w)
            m.setZero();
        for (auto* vs : {&z.b, &z.gamma, &z.beta, &z.run_mean, &z.run_var})
            for (auto& v : *vs)
                v.setZero();
        for (auto& s : z.slope)
            s = 0.0;
        return z;
    }
};

/// Gaussian N(0, 1/fan_in) weights, shaped fan_out x fan_in.
inline Matrix xavier_init(std::size_t fan_in, std::size_t fan_out, Rng& rng)
{
    if (fan_in < 1)
        throw ConfigError("fan_in must be at least 1");
    std::normal_distribution<double> dist(0.0, std::sqrt(1.0 / static_cast<double>(fan_in)));
    Matrix w(static_cast<Eigen::Index>(fan_out), static_cast<Eigen::Index>(fan_in));
    for (Eigen::Index c = 0; c < w.cols(); ++c)
        for (Eigen::Index r = 0; r < w.rows(); ++r)
            w(r, c) = dist(rng);
    return w;
}

inline Params init_params(const Architecture& arch, Rng& rng)
{
    arch.validate();
    Params p;
    for (std::size_t i = 0; i < arch.layers(); ++i) {
        const auto in = arch.fan_in(i);
        const auto out = arch.fan_out(i);
        p.w.push_back(xavier_init(in, out, rng));
        p.b.push_back(Vector::Zero(static_cast<Eigen::Index>(out)));
        const bool bn = i < arch.hidden.size() && arch.hidden[i].batch_norm;
        const auto nb = static_cast<Eigen::Index>(bn ? out : 0);
        p.gamma.push_back(Vector::Ones(nb));
        p.beta.push_back(Vector::Zero(nb));
        p.run_mean.push_back(Vector::Zero(nb));
        p.run_var.push_back(Vector::Ones(nb));
        p.slope.push_back(prelu_initial_slope);
    }
    return p;
}

struct Network {
    Architecture arch;
    Params params;

    static Network create(const Architecture& arch, std::uint64_t seed)
    {
        Rng rng(seed);
        return {arch, init_params(arch, rng)};
    }
};

enum class Mode { train, infer };

// ---------------------------------------------------------------------------
// Dropout

/// Inverted dropout: in training, entries survive with probability `keep` and
/// are scaled by 1/keep; inference is the identity. `mask` receives the
/// multiplier when non-null.
inline Matrix dropout_apply(const Matrix& x, double keep, Mode mode, Rng& rng, Matrix* mask = nullptr)
{
    if (!(keep > 0.0 && keep <= 1.0))
        throw ConfigError("dropout keep probability must be in (0, 1]");
    if (mode == Mode::infer || keep == 1.0) {
        if (mask)
            *mask = Matrix::Ones(x.rows(), x.cols());
        return x;
    }
    std::bernoulli_distribution coin(keep);
    Matrix m(x.rows(), x.cols());
    for (Eigen::Index c = 0; c < m.cols(); ++c)
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            m(r, c) = coin(rng) ? 1.0 / keep : 0.0;
    Matrix out = x.cwiseProduct(m);
    if (mask)
        *mask = std::move(m);
    return out;
}

// ---------------------------------------------------------------------------
// Batch normalization

inline constexpr double bn_epsilon = 1e-5;
inline constexpr double bn_momentum = 0.99;

struct BatchNormCache {
    Matrix zhat;
    Vector inv_std;
};

/// Normalizes each row over the batch (train) or with running statistics
/// (infer), then applies scale and shift. Training updates the running
/// statistics when `update_running` is set.
inline Matrix batch_norm_apply(const Matrix& z, const Vector& gamma, const Vector& beta, Vector& run_mean, Vector& run_var,
                               Mode mode, BatchNormCache* cache = nullptr, bool update_running = true)
{
    Vector mean;
    Vector var;
    if (mode == Mode::train) {
        if (z.cols() < 2)
            throw ConfigError("batch normalization needs a batch of at least two in training");
        mean = z.rowwise().mean();
        var = (z.colwise() - mean).array().square().rowwise().mean();
        if (update_running) {
            run_mean = bn_momentum * run_mean + (1.0 - bn_momentum) * mean;
            run_var = bn_momentum * run_var + (1.0 - bn_momentum) * var;
        }
    } else {
        mean = run_mean;
        var = run_var;
    }
    const Vector inv_std = (var.array() + bn_epsilon).rsqrt();
    Matrix zhat = (z.colwise() - mean).array().colwise() * inv_std.array();
    Matrix out = (zhat.array().colwise() * gamma.array()).colwise() + beta.array();
    if (cache) {
        cache->zhat = std::move(zhat);
        cache->inv_std = inv_std;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Forward and backward

struct LayerCache {
    Matrix input;  ///< a_i
    Matrix pre;    ///< activation argument (after batch norm if any)
    BatchNormCache bn;
    Matrix mask;   ///< dropout multiplier
};

struct ForwardCache {
    std::vector<LayerCache> layers;
    Matrix last_input; ///< input of the output layer
    Matrix output;
};

namespace detail {

inline void check_input(const Architecture& arch, const Matrix& x)
{
    if (static_cast<std::size_t>(x.rows()) != arch.inputs)
        throw InputError("network input has " + std::to_string(x.rows()) + " features, expected " +
                         std::to_string(arch.inputs));
    // A finite sum rules out NaN and inf cheaply; huge finite values can
    // overflow it, hence the exact check behind it.
    if (!std::isfinite(x.sum()) && !x.allFinite())
        throw InputError("network input contains non-finite values");
}

} // namespace detail

/// W a + b, evaluated as a matrix product followed by a broadcast add
/// (nesting the product inside the broadcast makes Eigen fall back to a
/// coefficient-wise product).
inline Matrix affine(const Matrix& w, const Vector& b, const Matrix& a)
{
    Matrix z(w.rows(), a.cols());
    z.noalias() = w * a;
    z.colwise() += b;
    return z;
}

/// Forward pass. Training mode draws dropout masks from `rng`, uses batch
/// statistics and updates running statistics; inference is deterministic.
inline Matrix forward(Network& net, const Matrix& x, Mode mode, Rng* rng = nullptr, ForwardCache* cache = nullptr,
                      bool update_running = true)
{
    detail::check_input(net.arch, x);
    auto& p = net.params;
    const auto& hidden = net.arch.hidden;
    if (cache)
        cache->layers.assign(hidden.size(), {});
    Matrix a = x;
    for (std::size_t i = 0; i < hidden.size(); ++i) {
        const auto& spec = hidden[i];
        Matrix z = affine(p.w[i], p.b[i], a);
        BatchNormCache bnc;
        if (spec.batch_norm)
            z = batch_norm_apply(z, p.gamma[i], p.beta[i], p.run_mean[i], p.run_var[i], mode, &bnc, update_running);
        Matrix h = activate(spec.activation, z, p.slope[i]);
        Matrix mask;
        if (mode == Mode::train && spec.dropout_keep < 1.0) {
            if (!rng)
                throw ConfigError("dropout in training needs a random generator");
            h = dropout_apply(h, spec.dropout_keep, mode, *rng, &mask);
        }
        if (cache) {
            auto& lc = cache->layers[i];
            lc.input = std::move(a);
            lc.pre = std::move(z);
            lc.bn = std::move(bnc);
            lc.mask = std::move(mask);
        }
        a = std::move(h);
    }
    Matrix y = affine(p.w.back(), p.b.back(), a);
    if (cache) {
        cache->last_input = std::move(a);
        cache->output = y;
    }
    return y;
}

namespace detail {

/// Elementwise activation of a contiguous array, in place.
template <class S>
void activate_inplace(Activation a, Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>> v, S slope)
{
    if (a != Activation::linear)
        v = activate_array(a, v, slope);
}

} // namespace detail

/// Inference-only form of a network in scalar type S. Inference-mode batch
/// norm is folded into the affine maps and an optional input
/// standardization is applied on the way in.
template <class S>
class FrozenNetwork {
public:
    using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
    using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

    /// Networks no wider than this stream over the batch row by row.
    static constexpr std::size_t streaming_max_width = 64;

    FrozenNetwork() = default;

    explicit FrozenNetwork(const Network& net, const Vector* mean = nullptr, const Vector* std = nullptr)
        : arch_(net.arch)
    {
        const auto& p = net.params;
        const auto& hidden = net.arch.hidden;
        streaming_ = true;
        for (std::size_t i = 0; i < p.w.size(); ++i) {
            Matrix w = p.w[i];
            Vector b = p.b[i];
            if (i < hidden.size() && hidden[i].batch_norm) {
                const Vector s = p.gamma[i].array() / (p.run_var[i].array() + bn_epsilon).sqrt();
                b = (b - p.run_mean[i]).cwiseProduct(s) + p.beta[i];
                w = s.asDiagonal() * w;
            }
            w_.push_back(w.template cast<S>());
            b_.push_back(b.template cast<S>());
            slopes_.push_back(p.slope[i]);
            if (i < hidden.size() && (hidden[i].width > streaming_max_width || hidden[i].activation == Activation::crelu))
                streaming_ = false;
        }
        if (mean && std) {
            shift_ = *mean;
            inv_scale_ = std->cwiseInverse();
        } else {
            shift_ = Vector::Zero(static_cast<Eigen::Index>(arch_.inputs));
            inv_scale_ = Vector::Ones(static_cast<Eigen::Index>(arch_.inputs));
        }
    }

    const Architecture& arch() const { return arch_; }

    /// Network output for the columns of `x`.
    Matrix run(const Matrix& x) const
    {
        detail::check_input(arch_, x);
        // Column blocks small enough that the activations stay in L1.
        const Eigen::Index block = streaming_ ? 256 : 128;
        Matrix y(static_cast<Eigen::Index>(arch_.outputs), x.cols());
        for (Eigen::Index j = 0; j < x.cols(); j += block) {
            const Eigen::Index n = std::min(block, x.cols() - j);
            if (streaming_)
                run_streaming(x.middleCols(j, n), y.middleCols(j, n));
            else
                y.middleCols(j, n) = run_block(x.middleCols(j, n));
        }
        return y;
    }

private:
    /// Activations kept unit-major, so every weight is one scaled row
    /// addition across the batch.
    template <class In, class Out>
    void run_streaming(const In& x, Out y) const
    {
        const Eigen::Index n = x.cols();
        RowMat a(x.rows(), n);
        for (Eigen::Index j = 0; j < n; ++j)
            for (Eigen::Index i = 0; i < x.rows(); ++i)
                a(i, j) = static_cast<S>((x(i, j) - shift_[i]) * inv_scale_[i]);
        RowMat z;
        for (std::size_t i = 0; i < w_.size(); ++i) {
            const Mat& w = w_[i];
            z.resize(w.rows(), n);
            for (Eigen::Index k = 0; k < w.rows(); ++k) {
                auto zk = z.row(k);
                zk.setConstant(b_[i][k]);
                for (Eigen::Index j = 0; j < w.cols(); ++j)
                    zk += w(k, j) * a.row(j);
                if (i < arch_.hidden.size())
                    detail::activate_inplace<S>(arch_.hidden[i].activation,
                                                Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>>(zk.data(), n), slope(i));
            }
            std::swap(a, z);
        }
        y = a.template cast<double>();
    }

    template <class In>
    Matrix run_block(const In& x) const
    {
        Mat a = ((x.colwise() - shift_).array().colwise() * inv_scale_.array()).matrix().template cast<S>();
        for (std::size_t i = 0; i < w_.size(); ++i) {
            Mat z(w_[i].rows(), a.cols());
            z.noalias() = w_[i] * a;
            z.colwise() += b_[i];
            if (i < arch_.hidden.size()) {
                const Activation act = arch_.hidden[i].activation;
                if (act == Activation::crelu) {
                    Mat c(2 * z.rows(), z.cols());
                    c.topRows(z.rows()) = z.cwiseMax(S(0));
                    c.bottomRows(z.rows()) = (-z).cwiseMax(S(0));
                    z = std::move(c);
                } else {
                    detail::activate_inplace<S>(act, Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>>(z.data(), z.size()),
                                                slope(i));
                }
            }
            a = std::move(z);
        }
        return a.template cast<double>();
    }

    S slope(std::size_t i) const { return static_cast<S>(slopes_[i]); }

    Architecture arch_;
    std::vector<Mat> w_;
    std::vector<Vec> b_;
    std::vector<double> slopes_;
    Vector shift_;
    Vector inv_scale_;
    bool streaming_ = true;
};

/// Inference on a const network, in double precision.
inline Matrix infer(const Network& net, const Matrix& x)
{
    return FrozenNetwork<double>(net).run(x);
}

/// Mean over the batch of the summed squared residuals.
inline double loss_mse(const Matrix& out, const Matrix& target)
{
    if (out.rows() != target.rows() || out.cols() != target.cols())
        throw InputError("output and target shapes differ");
    if (out.cols() == 0)
        return 0.0;
    return (out - target).squaredNorm() / static_cast<double>(out.cols());
}

/// Sum of squared entries of every weight matrix (biases and batch-norm terms
/// excluded).
inline double weight_norm2(const Params& p)
{
    double s = 0.0;
    for (const auto& w : p.w)
        s += w.squaredNorm();
    return s;
}

inline double loss_with_decay(double loss, const Params& p, double lambda)
{
    if (!(lambda >= 0.0))
        throw ConfigError("weight decay must be non-negative");
    return loss + lambda * weight_norm2(p);
}

/// Gradients of loss_mse + lambda * |W|^2 for the pass recorded in `cache`.
inline Params backprop(const Network& net, const ForwardCache& cache, const Matrix& target, double lambda)
{
    const auto& p = net.params;
    const auto& hidden = net.arch.hidden;
    Params g = p.zeros_like();
    const double n = static_cast<double>(target.cols());
    Matrix delta = 2.0 * (cache.output - target) / n;

    const std::size_t last = hidden.size();
    g.w[last].noalias() = delta * cache.last_input.transpose();
    g.w[last] += 2.0 * lambda * p.w[last];
    g.b[last] = delta.rowwise().sum();
    Matrix grad_a = p.w[last].transpose() * delta;

    for (std::size_t k = hidden.size(); k-- > 0;) {
        const auto& spec = hidden[k];
        const auto& lc = cache.layers[k];
        if (lc.mask.size() > 0)
            grad_a = grad_a.cwiseProduct(lc.mask);
        double dslope = 0.0;
        Matrix grad_z = activation_backward(spec.activation, lc.pre, grad_a, p.slope[k], &dslope);
        if (spec.activation == Activation::prelu)
            g.slope[k] = dslope;
        if (spec.batch_norm) {
            const Matrix& zhat = lc.bn.zhat;
            g.gamma[k] = grad_z.cwiseProduct(zhat).rowwise().sum();
            g.beta[k] = grad_z.rowwise().sum();
            const Matrix dzhat = grad_z.array().colwise() * p.gamma[k].array();
            const double m = static_cast<double>(grad_z.cols());
            const Vector sum_d = dzhat.rowwise().sum();
            const Vector sum_dz = dzhat.cwiseProduct(zhat).rowwise().sum();
            Matrix centered = (m * dzhat).colwise() - sum_d;
            centered -= (zhat.array().colwise() * sum_dz.array()).matrix();
            grad_z = (centered.array().colwise() * (lc.bn.inv_std.array() / m)).matrix();
        }
        g.w[k].noalias() = grad_z * lc.input.transpose();
        g.w[k] += 2.0 * lambda * p.w[k];
        g.b[k] = grad_z.rowwise().sum();
        if (k > 0)
            grad_a = p.w[k].transpose() * grad_z;
    }
    return g;
}

// ---------------------------------------------------------------------------
// Adam

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    Params m;
    Params v;
    std::int64_t t = 0;

    static AdamState for_params(const Params& p) { return {p.zeros_like(), p.zeros_like(), 0}; }
};

/// One bias-corrected Adam update of every trainable parameter.
inline void adam_step(const Architecture& arch, Params& p, Params& g, AdamState& s, const AdamConfig& cfg)
{
    ++s.t;
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(s.t));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(s.t));
    std::vector<std::pair<double*, std::size_t>> pv, gv, mv, vv;
    auto collect = [](std::vector<std::pair<double*, std::size_t>>& dst) {
        return [&dst](double* d, std::size_t n) { dst.emplace_back(d, n); };
    };
    p.for_each_trainable(arch, collect(pv));
    g.for_each_trainable(arch, collect(gv));
    s.m.for_each_trainable(arch, collect(mv));
    s.v.for_each_trainable(arch, collect(vv));
    for (std::size_t blk = 0; blk < pv.size(); ++blk) {
        double* x = pv[blk].first;
        const double* gr = gv[blk].first;
        double* m = mv[blk].first;
        double* v = vv[blk].first;
        for (std::size_t j = 0; j < pv[blk].second; ++j) {
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gr[j];
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gr[j] * gr[j];
            x[j] -= cfg.learning_rate * (m[j] / c1) / (std::sqrt(v[j] / c2) + cfg.epsilon);
        }
    }
}

} // namespace vle::nn
