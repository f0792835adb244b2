/**
 * @file experiment.hpp
 * @brief Factor study: one training run per level of data ratio, activation,
 *        depth or width, all sharing one split and one seed.
 */
#pragma once

#include "vle/data.hpp"
#include "vle/neural/train.hpp"

#include <chrono>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

namespace vle {

enum class Factor { data_ratio, activation, depth, width };

inline const char* to_string(Factor f)
{
    switch (f) {
    case Factor::data_ratio: return "data_ratio";
    case Factor::activation: return "activation";
    case Factor::depth: return "depth";
    case Factor::width: return "width";
    }
    return "?";
}

inline Factor parse_factor(const std::string& s)
{
    for (Factor f : {Factor::data_ratio, Factor::activation, Factor::depth, Factor::width})
        if (s == to_string(f))
            return f;
    throw ConfigError("unknown factor '" + s + "' (expected data_ratio, activation, depth or width)");
}

/// Network held fixed while one factor varies.
struct BaseNetwork {
    std::size_t depth = 3;
    std::size_t width = 200;
    nn::Activation activation = nn::Activation::relu;
    double dropout_keep = 1.0;
    bool batch_norm = false;

    nn::Architecture architecture() const
    {
        return nn::Architecture::uniform(depth, width, activation, dropout_keep, batch_norm);
    }
};

/// The grids and fixed networks of the published study.
struct FactorGrid {
    Factor factor = Factor::depth;
    BaseNetwork base;
    std::vector<double> ratios;
    std::vector<nn::Activation> activations;
    std::vector<std::size_t> depths;
    std::vector<std::size_t> widths;

    std::size_t levels() const
    {
        switch (factor) {
        case Factor::data_ratio: return ratios.size();
        case Factor::activation: return activations.size();
        case Factor::depth: return depths.size();
        case Factor::width: return widths.size();
        }
        return 0;
    }

    static FactorGrid published(Factor f)
    {
        FactorGrid g;
        g.factor = f;
        switch (f) {
        case Factor::data_ratio:
            for (int i = 1; i <= 9; ++i)
                g.ratios.push_back(0.1 * i);
            break;
        case Factor::activation:
            g.activations.assign(nn::all_activations.begin(), nn::all_activations.end());
            break;
        case Factor::depth:
            for (std::size_t d = 1; d <= 20; ++d)
                g.depths.push_back(d);
            break;
        case Factor::width:
            g.base = {5, 100, nn::Activation::elu};
            g.widths = {5, 10, 20, 50, 100, 200, 500, 1000};
            break;
        }
        return g;
    }
};

struct ExperimentCell {
    Factor factor = Factor::depth;
    std::string level;
    double mre = 0.0;           ///< mean over repeats; NaN when every repeat failed
    double best_val_loss = 0.0;
    std::size_t steps = 0;
    std::size_t batch_size = 0;
    std::size_t train_points = 0;
    double seconds = 0.0;
    std::size_t failures = 0;
    std::string status = "ok";
};

struct ExperimentConfig {
    FactorGrid grid;
    nn::TrainConfig train;
    std::size_t repeats = 1; ///< seeds seed, seed+1, ...
};

namespace detail {

/// Largest batch not above `wanted` that still leaves two full batches.
inline std::size_t adapted_batch(std::size_t wanted, std::size_t n_train)
{
    return std::max<std::size_t>(1, std::min(wanted, n_train / 2));
}

} // namespace detail

/// Runs every level of the grid on `split`. Levels that diverge or fail are
/// recorded and the sweep continues. `progress` sees each finished cell.
inline std::vector<ExperimentCell> run_experiment(const Split& data, const ExperimentConfig& cfg,
                                                  const std::function<void(const ExperimentCell&)>& progress = {})
{
    cfg.train.validate();
    if (cfg.repeats < 1)
        throw ConfigError("experiment needs at least one repeat");
    if (cfg.grid.levels() == 0)
        throw ConfigError("experiment grid is empty");
    const nn::Matrix xv = data.validation.features();
    const nn::Matrix yv = data.validation.targets();
    std::vector<ExperimentCell> cells;
    for (std::size_t li = 0; li < cfg.grid.levels(); ++li) {
        ExperimentCell cell;
        cell.factor = cfg.grid.factor;
        BaseNetwork net = cfg.grid.base;
        double ratio = 1.0;
        switch (cfg.grid.factor) {
        case Factor::data_ratio:
            ratio = cfg.grid.ratios[li];
            cell.level = std::to_string(ratio).substr(0, 4);
            break;
        case Factor::activation:
            net.activation = cfg.grid.activations[li];
            cell.level = std::string(nn::to_string(net.activation));
            break;
        case Factor::depth:
            net.depth = cfg.grid.depths[li];
            cell.level = std::to_string(net.depth);
            break;
        case Factor::width:
            net.width = cfg.grid.widths[li];
            cell.level = std::to_string(net.width);
            break;
        }
        const auto t0 = std::chrono::steady_clock::now();
        double mre_sum = 0.0;
        double loss_sum = 0.0;
        std::size_t ok = 0;
        std::string last_error;
        for (std::size_t r = 0; r < cfg.repeats; ++r) {
            nn::TrainConfig tc = cfg.train;
            tc.seed = cfg.train.seed + r;
            try {
                const Dataset tr = ratio < 1.0 ? subsample(data.train, ratio, tc.seed) : data.train;
                tc.batch_size = detail::adapted_batch(cfg.train.batch_size, tr.size());
                cell.batch_size = tc.batch_size;
                cell.train_points = tr.size();
                const auto res = nn::train(tr.features(), tr.targets(), xv, yv, net.architecture(), tc);
                mre_sum += nn::mean_relative_error(nn::predict(res.model, xv), yv);
                loss_sum += res.best_val_loss;
                cell.steps = res.steps;
                ++ok;
            } catch (const Error& e) {
                ++cell.failures;
                last_error = e.what();
            }
        }
        cell.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (ok == 0) {
            cell.mre = cell.best_val_loss = std::numeric_limits<double>::quiet_NaN();
            cell.status = "failed: " + last_error;
        } else {
            cell.mre = mre_sum / static_cast<double>(ok);
            cell.best_val_loss = loss_sum / static_cast<double>(ok);
            if (cell.failures)
                cell.status = "partial: " + last_error;
        }
        if (progress)
            progress(cell);
        cells.push_back(std::move(cell));
    }
    return cells;
}

inline void write_experiment_csv(const std::vector<ExperimentCell>& cells, std::ostream& os)
{
    os << "factor,level,mre,best_val_loss,steps,batch_size,train_points,seconds,failures,status\n";
    os.precision(10);
    for (const auto& c : cells) {
        std::string status = c.status;
        std::replace(status.begin(), status.end(), ',', ';');
        os << to_string(c.factor) << ',' << c.level << ',' << c.mre << ',' << c.best_val_loss << ',' << c.steps << ','
           << c.batch_size << ',' << c.train_points << ',' << c.seconds << ',' << c.failures << ',' << status << '\n';
    }
}

} // namespace vle
