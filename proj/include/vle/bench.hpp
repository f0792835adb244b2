/**
 * @file bench.hpp
 * @brief Four-method comparison (SSM, seeded Newton, sparse-grid surrogate,
 *        neural network) on one shared set of binary flash queries.
 */
#pragma once

#include "vle/data.hpp"
#include "vle/flash.hpp"
#include "vle/neural/train.hpp"
#include "vle/parallel.hpp"
#include "vle/surrogate.hpp"
#include "vle/tie_line.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

namespace vle {

struct BenchQuery {
    double p = 0.0; ///< Pa
    double z1 = 0.0;
};

struct BenchConfig {
    Components components;
    double k12 = 0.0;
    double t = 226.0;
    double p_min = bar_to_pa(6.0);
    double p_max = bar_to_pa(77.0);
    std::size_t queries = 1000;
    std::uint64_t seed = 2024;
    double eps = 1e-6;           ///< SSM and Newton tolerance
    double reference_eps = 1e-10;
    double newton_seed_eps = 1e-2;
    std::size_t repeats = 5; ///< timed passes per method; the fastest is reported
    bool newton = true;
    unsigned threads = default_thread_count();
};

struct MethodReport {
    std::string name;
    double seconds = 0.0;        ///< fastest pass
    double median_seconds = 0.0;
    std::size_t failures = 0;
    double mre = std::numeric_limits<double>::quiet_NaN(); ///< over points where both it and the reference succeeded
    double speedup = std::numeric_limits<double>::quiet_NaN(); ///< ssm seconds / seconds
    std::vector<double> x1;
    std::vector<double> y1;
    std::vector<char> ok;
};

struct BenchReport {
    BenchConfig config;
    std::vector<BenchQuery> queries;
    MethodReport reference;
    std::vector<MethodReport> methods;
    double surrogate_build_seconds = 0.0;
    double model_train_seconds = 0.0;

    const MethodReport* find(const std::string& name) const
    {
        for (const auto& m : methods)
            if (m.name == name)
                return &m;
        return nullptr;
    }
};

/// Query points inside the two-phase region: p uniform on [p_min, p_max],
/// z1 uniform on the middle 80% of the tie line at that p. Points whose tie
/// line cannot be found are redrawn.
inline std::vector<BenchQuery> make_bench_queries(const BenchConfig& cfg)
{
    if (cfg.queries == 0)
        throw ConfigError("benchmark needs at least one query");
    if (cfg.components.size() != 2)
        throw ConfigError("benchmark needs a binary mixture");
    BinaryInteraction kij(2);
    kij.set(0, 1, cfg.k12);
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> up(cfg.p_min, cfg.p_max);
    std::uniform_real_distribution<double> uz(0.1, 0.9);
    std::vector<BenchQuery> out;
    std::size_t misses = 0;
    while (out.size() < cfg.queries) {
        const double p = up(rng);
        const double u = uz(rng);
        const auto tl = find_tie_line(cfg.components, kij, cfg.t, p);
        if (!tl) {
            if (++misses > 10 * cfg.queries)
                throw NumericalError("no two-phase state found in the benchmark pressure range");
            continue;
        }
        out.push_back({p, tl->x[0] + u * (tl->y[0] - tl->x[0])});
    }
    return out;
}

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

/// Runs `pass` `repeats` times and stores the fastest and median wall time.
template <class Pass>
void time_passes(MethodReport& m, std::size_t repeats, Pass&& pass)
{
    std::vector<double> t;
    for (std::size_t r = 0; r < std::max<std::size_t>(1, repeats); ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        pass();
        t.push_back(seconds_since(t0));
    }
    std::sort(t.begin(), t.end());
    m.seconds = t.front();
    m.median_seconds = t[t.size() / 2];
}

inline MethodReport blank_report(std::string name, std::size_t n)
{
    MethodReport m;
    m.name = std::move(name);
    m.x1.assign(n, std::numeric_limits<double>::quiet_NaN());
    m.y1.assign(n, std::numeric_limits<double>::quiet_NaN());
    m.ok.assign(n, 0);
    return m;
}

template <class Solve>
MethodReport run_flash_method(std::string name, const BenchConfig& cfg, const std::vector<BenchQuery>& q, Solve&& solve)
{
    auto m = blank_report(std::move(name), q.size());
    BinaryInteraction kij(2);
    kij.set(0, 1, cfg.k12);
    time_passes(m, cfg.repeats, [&] {
        parallel_for(
            q.size(),
            [&](std::size_t i) {
                try {
                    const FlashResult r = solve(FlashInput(cfg.components, {q[i].z1, 1.0 - q[i].z1}, cfg.t, q[i].p, kij));
                    if (r.converged && r.two_phase()) {
                        m.x1[i] = r.x[0];
                        m.y1[i] = r.y[0];
                        m.ok[i] = 1;
                    }
                } catch (const Error&) {
                }
            },
            cfg.threads);
    });
    return m;
}

inline void score(MethodReport& m, const MethodReport& ref)
{
    m.failures = 0;
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < m.ok.size(); ++i) {
        if (!m.ok[i]) {
            ++m.failures;
            continue;
        }
        if (!ref.ok[i])
            continue;
        sum += std::abs(m.x1[i] - ref.x1[i]) / std::max(std::abs(ref.x1[i]), 0.01);
        sum += std::abs(m.y1[i] - ref.y1[i]) / std::max(std::abs(ref.y1[i]), 0.01);
        n += 2;
    }
    m.mre = n ? sum / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
}

} // namespace detail

/// Runs the reference and every supplied method on the same queries. A
/// missing surrogate or model drops that method from the report.
inline BenchReport run_bench(const BenchConfig& cfg, const Surrogate* surrogate, const nn::Model* model)
{
    BenchReport rep;
    rep.config = cfg;
    rep.queries = make_bench_queries(cfg);
    const auto& q = rep.queries;
    const std::size_t n = q.size();

    BenchConfig once = cfg;
    once.repeats = 1;
    rep.reference = detail::run_flash_method("reference", once, q, [&](const FlashInput& in) {
        return ssm_flash(in, cfg.reference_eps, 20000);
    });
    rep.reference.failures = static_cast<std::size_t>(std::count(rep.reference.ok.begin(), rep.reference.ok.end(), 0));

    rep.methods.push_back(detail::run_flash_method("ssm", cfg, q, [&](const FlashInput& in) {
        return ssm_flash(in, cfg.eps, 1000);
    }));
    if (cfg.newton)
        rep.methods.push_back(detail::run_flash_method("newton", cfg, q, [&](const FlashInput& in) {
            return seeded_newton_flash(in, cfg.eps, cfg.newton_seed_eps);
        }));

    if (surrogate) {
        const auto& names = surrogate->names();
        const auto ix = std::find(names.begin(), names.end(), "xW1") - names.begin();
        const auto iy = std::find(names.begin(), names.end(), "xN1") - names.begin();
        if (static_cast<std::size_t>(ix) == names.size() || static_cast<std::size_t>(iy) == names.size())
            throw ConfigError("surrogate lacks the xW1 and xN1 observables");
        auto m = detail::blank_report("sparse_grid", n);
        const std::size_t k = surrogate->outputs();
        std::vector<double> p(n), z(n), out;
        for (std::size_t i = 0; i < n; ++i) {
            p[i] = q[i].p;
            z[i] = q[i].z1;
        }
        try {
            detail::time_passes(m, cfg.repeats, [&] { out = surrogate->evaluate_many(p, z, cfg.threads); });
            std::fill(m.ok.begin(), m.ok.end(), 1);
        } catch (const DomainError&) {
            // Some queries lie outside the surrogate domain: score point by point.
            out.assign(n * k, 0.0);
            detail::time_passes(m, cfg.repeats, [&] {
                for (std::size_t i = 0; i < n; ++i) {
                    try {
                        surrogate->evaluate(p[i], z[i], std::span<double>(out.data() + i * k, k));
                        m.ok[i] = 1;
                    } catch (const Error&) {
                    }
                }
            });
        }
        for (std::size_t i = 0; i < n; ++i)
            if (m.ok[i]) {
                m.x1[i] = out[i * k + static_cast<std::size_t>(ix)];
                m.y1[i] = out[i * k + static_cast<std::size_t>(iy)];
            }
        rep.methods.push_back(std::move(m));
    }

    if (model) {
        auto m = detail::blank_report("deep_learning", n);
        const auto& a = cfg.components[0];
        const auto& b = cfg.components[1];
        nn::Matrix x(8, static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n; ++i) {
            const auto f = VleRecord::from(a, b, cfg.t, q[i].p, 0.0, 0.0).features();
            for (int r = 0; r < 8; ++r)
                x(r, static_cast<Eigen::Index>(i)) = f[static_cast<std::size_t>(r)];
        }
        const nn::FrozenModel frozen = nn::freeze(*model);
        nn::Matrix y;
        detail::time_passes(m, cfg.repeats, [&] { y = nn::predict(frozen, x); });
        for (std::size_t i = 0; i < n; ++i) {
            m.x1[i] = y(0, static_cast<Eigen::Index>(i));
            m.y1[i] = y(1, static_cast<Eigen::Index>(i));
            m.ok[i] = 1;
        }
        rep.methods.push_back(std::move(m));
    }

    const double ssm_seconds = rep.methods.front().seconds;
    for (auto& m : rep.methods) {
        detail::score(m, rep.reference);
        m.speedup = m.seconds > 0.0 ? ssm_seconds / m.seconds : std::numeric_limits<double>::infinity();
    }
    return rep;
}

/// Settings for the network trained when the benchmark builds its own model.
/// The default is deliberately small: inference cost, not capacity, is what
/// the benchmark measures, and x1, y1 of a binary depend on (T, p) only.
struct BenchModelConfig {
    nn::Architecture arch = nn::Architecture::uniform(1, 8, nn::Activation::softsign);
    double t_band = 10.0;      ///< K either side of the benchmark temperature
    std::size_t t_points = 5;
    std::size_t p_points = 200;
    nn::TrainConfig train = [] {
        nn::TrainConfig c;
        c.max_steps = 20000;
        c.weight_decay = 0.0;
        c.batch_size = 64;
        c.learning_rate = 3e-3;
        c.lr_decay = 0.9984;
        return c;
    }();
};

/// SSM-labelled training set around the benchmark temperature and pressure
/// range.
inline Dataset bench_training_data(const BenchConfig& cfg, const BenchModelConfig& mc)
{
    SyntheticSpec spec;
    spec.pairs.push_back({cfg.components[0], cfg.components[1], cfg.k12});
    spec.t_grid = linspace(cfg.t - mc.t_band, cfg.t + mc.t_band, mc.t_points);
    spec.p_grid = linspace(cfg.p_min, cfg.p_max, mc.p_points);
    return generate_synthetic(spec).dataset;
}

inline nn::TrainResult train_bench_model(const BenchConfig& cfg, const BenchModelConfig& mc)
{
    const auto data = bench_training_data(cfg, mc);
    const auto s = split(data, mc.train.validation_fraction, mc.train.seed);
    return nn::train(s.train.features(), s.train.targets(), s.validation.features(), s.validation.targets(), mc.arch,
                     mc.train);
}

inline nlohmann::json to_json(const BenchReport& r)
{
    auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
    nlohmann::json methods = nlohmann::json::array();
    for (const auto& m : r.methods)
        methods.push_back({{"method", m.name},
                           {"seconds", m.seconds},
                           {"median_seconds", m.median_seconds},
                           {"failures", m.failures},
                           {"mre", num(m.mre)},
                           {"speedup_vs_ssm", num(m.speedup)}});
    const auto& c = r.config;
    return {{"queries", r.queries.size()},
            {"seed", c.seed},
            {"components", {c.components[0].name(), c.components[1].name()}},
            {"k12", c.k12},
            {"T_K", c.t},
            {"p_range_bar", {pa_to_bar(c.p_min), pa_to_bar(c.p_max)}},
            {"eps", c.eps},
            {"reference", {{"method", "ssm"}, {"eps", c.reference_eps}, {"failures", r.reference.failures}}},
            {"threads", c.threads},
            {"timed_passes", c.repeats},
            {"surrogate_build_seconds", r.surrogate_build_seconds},
            {"model_train_seconds", r.model_train_seconds},
            {"methods", methods}};
}

/// One row per query: inputs, reference and each method's x1, y1 (empty
/// cells where a method failed).
inline void write_bench_csv(const BenchReport& r, std::ostream& os)
{
    os << "index,p_bar,z1,ref_x1,ref_y1";
    for (const auto& m : r.methods)
        os << ',' << m.name << "_x1," << m.name << "_y1";
    os << '\n';
    os.precision(12);
    auto cell = [&os](bool ok, double v) {
        os << ',';
        if (ok)
            os << v;
    };
    for (std::size_t i = 0; i < r.queries.size(); ++i) {
        os << i << ',' << pa_to_bar(r.queries[i].p) << ',' << r.queries[i].z1;
        cell(r.reference.ok[i], r.reference.x1[i]);
        cell(r.reference.ok[i], r.reference.y1[i]);
        for (const auto& m : r.methods) {
            cell(m.ok[i], m.x1[i]);
            cell(m.ok[i], m.y1[i]);
        }
        os << '\n';
    }
}

} // namespace vle
