/**
 * @file train.hpp
 * @brief Feature scaling, mini-batch Adam training with best-validation
 *        checkpointing, prediction and the mean relative error metric.
 */
#pragma once

#include "vle/error.hpp"
#include "vle/neural/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

namespace vle::nn {

/// Per-feature z-score statistics of the training split.
struct Scaler {
    Vector mean;
    Vector std;

    bool empty() const { return mean.size() == 0; }

    static Scaler fit(const Matrix& x)
    {
        if (x.cols() == 0)
            throw InputError("cannot fit a scaler on zero samples");
        Scaler s;
        s.mean = x.rowwise().mean();
        s.std = ((x.colwise() - s.mean).array().square().rowwise().mean()).sqrt();
        // A constant feature can come out with a rounding-level spread;
        // treat it as constant rather than amplifying the rounding.
        for (Eigen::Index i = 0; i < s.std.size(); ++i)
            if (!(s.std[i] > 1e-12 * std::max(1.0, std::abs(s.mean[i]))))
                s.std[i] = 1.0;
        return s;
    }

    Matrix apply(const Matrix& x) const
    {
        if (empty())
            throw ConfigError("model has no feature scaling statistics");
        if (x.rows() != mean.size())
            throw InputError("feature count does not match the scaler");
        return (x.colwise() - mean).array().colwise() / std.array();
    }
};

struct Model {
    Network net;
    Scaler scaler;
};

struct TrainConfig {
    double learning_rate = 1e-3;
    double weight_decay = 1e-4;
    std::size_t batch_size = 256;
    std::size_t max_steps = 20000;
    std::uint64_t seed = 42;
    double validation_fraction = 0.1;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    /// Learning-rate factor applied after every epoch (1 keeps it constant).
    double lr_decay = 1.0;
    /// Per-step decay of an exponential moving average of the weights; when
    /// non-zero the averaged weights are the ones evaluated and returned.
    double weight_average = 0.0;

    void validate() const
    {
        if (!(learning_rate > 0.0) || !(weight_decay >= 0.0) || batch_size < 1 || max_steps < 1)
            throw ConfigError("learning rate, batch size and step count must be positive, weight decay non-negative");
        if (!(validation_fraction > 0.0 && validation_fraction < 0.5))
            throw ConfigError("validation fraction must be in (0, 0.5)");
        if (!(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0 && epsilon > 0.0))
            throw ConfigError("Adam parameters out of range");
        if (!(lr_decay > 0.0 && lr_decay <= 1.0))
            throw ConfigError("learning-rate decay must be in (0, 1]");
        if (!(weight_average >= 0.0 && weight_average < 1.0))
            throw ConfigError("weight averaging decay must be in [0, 1)");
    }
};

struct LossPoint {
    std::size_t step = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
};

struct LossCurve {
    std::vector<LossPoint> points;

    void write_csv(std::ostream& os) const
    {
        os << "step,train_loss,val_loss\n";
        os.precision(17);
        for (const auto& p : points)
            os << p.step << ',' << p.train_loss << ',' << p.val_loss << '\n';
    }

    /// Trailing moving average of the validation loss over `window` epochs.
    std::vector<double> smoothed_validation(std::size_t window) const
    {
        std::vector<double> out;
        if (window == 0 || points.size() < window)
            return out;
        double sum = 0.0;
        for (std::size_t i = 0; i < points.size(); ++i) {
            sum += points[i].val_loss;
            if (i >= window)
                sum -= points[i - window].val_loss;
            if (i + 1 >= window)
                out.push_back(sum / static_cast<double>(window));
        }
        return out;
    }
};

struct TrainResult {
    Model model;
    LossCurve curve;
    std::size_t steps = 0;
    std::size_t best_step = 0;
    double best_val_loss = std::numeric_limits<double>::infinity();
};

namespace detail {

/// avg <- d avg + (1 - d) p over the learned parameters.
inline void blend(Params& avg, const Params& p, double d)
{
    auto mix = [d](auto& a, const auto& b) {
        for (std::size_t i = 0; i < a.size(); ++i)
            a[i] = d * a[i] + (1.0 - d) * b[i];
    };
    for (std::size_t i = 0; i < avg.w.size(); ++i) {
        avg.w[i] = d * avg.w[i] + (1.0 - d) * p.w[i];
        avg.b[i] = d * avg.b[i] + (1.0 - d) * p.b[i];
        avg.gamma[i] = d * avg.gamma[i] + (1.0 - d) * p.gamma[i];
        avg.beta[i] = d * avg.beta[i] + (1.0 - d) * p.beta[i];
    }
    mix(avg.slope, p.slope);
}


inline Matrix gather(const Matrix& m, const std::vector<std::size_t>& idx, std::size_t from, std::size_t count)
{
    Matrix out(m.rows(), static_cast<Eigen::Index>(count));
    for (std::size_t j = 0; j < count; ++j)
        out.col(static_cast<Eigen::Index>(j)) = m.col(static_cast<Eigen::Index>(idx[from + j]));
    return out;
}

} // namespace detail

/// Mini-batch Adam on loss_mse + weight decay. Each epoch is a shuffled pass
/// over the training columns in full batches; after each epoch the losses on
/// both splits are recorded and the best-validation parameters kept.
inline TrainResult train(const Matrix& x_train, const Matrix& y_train, const Matrix& x_val, const Matrix& y_val,
                         const Architecture& arch, const TrainConfig& cfg)
{
    cfg.validate();
    arch.validate();
    if (x_train.cols() != y_train.cols() || x_val.cols() != y_val.cols())
        throw InputError("feature and target sample counts differ");
    if (static_cast<std::size_t>(y_train.rows()) != arch.outputs || static_cast<std::size_t>(y_val.rows()) != arch.outputs)
        throw InputError("target count does not match the network outputs");
    const auto n = static_cast<std::size_t>(x_train.cols());
    if (n < 2 * cfg.batch_size)
        throw ConfigError("training split has " + std::to_string(n) + " points; need at least twice the batch size (" +
                          std::to_string(cfg.batch_size) + ")");
    if (x_val.cols() == 0)
        throw ConfigError("validation split is empty");
    if (!y_train.allFinite() || !y_val.allFinite())
        throw InputError("targets contain non-finite values");

    TrainResult res;
    res.model.scaler = Scaler::fit(x_train);
    const Matrix xs = res.model.scaler.apply(x_train);
    const Matrix xv = res.model.scaler.apply(x_val);

    Rng rng(cfg.seed);
    res.model.net.arch = arch;
    res.model.net.params = init_params(arch, rng);
    Network& net = res.model.net;
    Params best = net.params;
    AdamState state = AdamState::for_params(net.params);
    AdamConfig adam{cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon};
    const bool averaging = cfg.weight_average > 0.0;
    Network eval = net;

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::size_t step = 0;
    ForwardCache cache;
    while (step < cfg.max_steps) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start + cfg.batch_size <= n && step < cfg.max_steps; start += cfg.batch_size) {
            const Matrix xb = detail::gather(xs, order, start, cfg.batch_size);
            const Matrix yb = detail::gather(y_train, order, start, cfg.batch_size);
            forward(net, xb, Mode::train, &rng, &cache);
            const double loss = loss_mse(cache.output, yb);
            if (!std::isfinite(loss))
                throw NumericalError("training diverged at step " + std::to_string(step + 1) + " (loss not finite)");
            Params g = backprop(net, cache, yb, cfg.weight_decay);
            adam_step(arch, net.params, g, state, adam);
            ++step;
            if (averaging)
                detail::blend(eval.params, net.params,
                              std::min(cfg.weight_average, (1.0 + static_cast<double>(step)) / (10.0 + static_cast<double>(step))));
        }
        adam.learning_rate *= cfg.lr_decay;
        if (averaging) {
            eval.params.run_mean = net.params.run_mean;
            eval.params.run_var = net.params.run_var;
        }
        const Network& scored = averaging ? eval : net;
        const double tl = loss_mse(infer(scored, xs), y_train);
        const double vl = loss_mse(infer(scored, xv), y_val);
        if (!std::isfinite(tl) || !std::isfinite(vl))
            throw NumericalError("training diverged at step " + std::to_string(step) + " (loss not finite)");
        res.curve.points.push_back({step, tl, vl});
        if (vl < res.best_val_loss) {
            res.best_val_loss = vl;
            res.best_step = step;
            best = scored.params;
        }
    }
    net.params = std::move(best);
    res.steps = step;
    return res;
}

/// Deployed form of a trained model: single precision, scaling built in.
using FrozenModel = FrozenNetwork<float>;

inline FrozenModel freeze(const Model& m)
{
    if (m.scaler.empty())
        throw ConfigError("model has no feature scaling statistics");
    if (static_cast<std::size_t>(m.scaler.mean.size()) != m.net.arch.inputs)
        throw ConfigError("scaler and network disagree on the feature count");
    return FrozenModel(m.net, &m.scaler.mean, &m.scaler.std);
}

/// Model output for raw features, clamped to [0, 1].
inline Matrix predict(const FrozenModel& f, const Matrix& features)
{
    if (static_cast<std::size_t>(features.rows()) != f.arch().inputs)
        throw InputError("feature count does not match the scaler");
    return f.run(features).cwiseMax(0.0).cwiseMin(1.0);
}

inline Matrix predict(const Model& m, const Matrix& features)
{
    return predict(freeze(m), features);
}

/// Mean over samples and outputs of |pred - true| / max(|true|, 0.01).
inline double mean_relative_error(const Matrix& pred, const Matrix& truth)
{
    if (pred.rows() != truth.rows() || pred.cols() != truth.cols())
        throw InputError("prediction and reference shapes differ");
    if (pred.size() == 0)
        throw InputError("no points to compare");
    const auto denom = truth.array().abs().max(0.01);
    return ((pred - truth).array().abs() / denom).mean();
}

} // namespace vle::nn
