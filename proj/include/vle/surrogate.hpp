/**
 * @file surrogate.hpp
 * @brief Adaptive sparse-grid surrogate of flash observables over (p, z1) at
 *        fixed temperature, with binary and JSON persistence.
 */
#pragma once

#include "vle/component.hpp"
#include "vle/detail/binary_io.hpp"
#include "vle/error.hpp"
#include "vle/observables.hpp"
#include "vle/parallel.hpp"
#include "vle/sparse_grid.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <vector>

namespace vle {

struct SurrogateDomain {
    double p_min = 0.0; ///< Pa
    double p_max = 0.0;
    double z1_min = 0.0;
    double z1_max = 1.0;
    double t = 0.0; ///< K
    Components components;
    double k12 = 0.0;

    void validate() const
    {
        if (!(p_min > 0.0) || !(p_min < p_max) || !std::isfinite(p_max))
            throw ConfigError("surrogate domain needs 0 < p_min < p_max");
        if (!(z1_min >= 0.0 && z1_min < z1_max && z1_max <= 1.0))
            throw ConfigError("surrogate domain needs 0 <= z1_min < z1_max <= 1");
        if (!(t > 0.0))
            throw ConfigError("surrogate temperature must be positive");
        if (components.size() != 2)
            throw ConfigError("surrogate domain needs exactly two components");
    }

    /// Unit-square coordinates of (p, z1); throws DomainError outside.
    std::array<double, 2> to_unit(double p, double z1) const
    {
        const double u = (p - p_min) / (p_max - p_min);
        const double v = (z1 - z1_min) / (z1_max - z1_min);
        constexpr double slack = 1e-12;
        if (!(u >= -slack && u <= 1.0 + slack && v >= -slack && v <= 1.0 + slack))
            throw DomainError("query outside the surrogate domain");
        return {std::clamp(u, 0.0, 1.0), std::clamp(v, 0.0, 1.0)};
    }

    std::array<double, 2> from_unit(double u, double v) const
    {
        return {p_min + u * (p_max - p_min), z1_min + v * (z1_max - z1_min)};
    }
};

/// One oracle call. `ok = false` marks a failed evaluation (the values are
/// ignored); `extrapolated` marks values continued from elsewhere.
struct OracleSample {
    std::vector<double> values;
    bool ok = true;
    bool extrapolated = false;
};

/// Oracle signature: (p in Pa, z1) -> sample. Must be safe to call concurrently.
using SurrogateOracle = std::function<OracleSample(double, double)>;

inline constexpr std::size_t default_table_bytes = std::size_t{256} << 20;

struct SurrogateConfig {
    double refine_tol = 1e-3;
    std::size_t max_points = 20000;
    std::uint32_t initial_level = 3;
    unsigned threads = default_thread_count();
    /// Memory allowed for the tabulated fast path; 0 keeps the tree walk only.
    std::size_t table_bytes = default_table_bytes;
    /// Called after every generation with the node count and the largest
    /// normalized surplus among unrefined nodes.
    std::function<void(std::size_t, double)> progress;
};

struct BuildStats {
    std::size_t oracle_calls = 0;
    std::uint32_t max_level = 0;        ///< deepest level in either direction
    double full_grid_points = 0.0;      ///< tensor grid with max_level in both directions
    std::size_t generations = 0;
    std::size_t failed_nodes = 0;       ///< filled from the nearest converged node
    std::size_t extrapolated_nodes = 0; ///< reported as extrapolated by the oracle
    double max_normalized_surplus = 0.0;
    double seconds = 0.0;
    bool reached_tolerance = false;
};

namespace detail {
inline constexpr std::uint8_t node_failed = 1;
inline constexpr std::uint8_t node_extrapolated = 2;
} // namespace detail

class Surrogate {
public:
    Surrogate() = default;
    Surrogate(SurrogateDomain domain, std::vector<std::string> names, sparse::Grid grid, std::vector<std::uint8_t> flags,
              std::size_t table_bytes = default_table_bytes)
        : domain_(std::move(domain)), names_(std::move(names)), grid_(std::move(grid)), flags_(std::move(flags))
    {
        if (names_.size() != grid_.outputs())
            throw InputError("observable names do not match surrogate output count");
        if (flags_.size() != grid_.size())
            throw InputError("node flags do not match node count");
        compile(table_bytes);
    }

    /// Rebuilds the lookup table within `max_bytes`, dropping it if too large.
    void compile(std::size_t max_bytes)
    {
        table_.reset();
        if (max_bytes > 0)
            if (auto t = sparse::TensorTable::compile(grid_, max_bytes))
                table_ = std::make_shared<const sparse::TensorTable>(std::move(*t));
    }

    bool tabulated() const { return table_ != nullptr; }
    std::size_t table_bytes() const { return table_ ? table_->bytes() : 0; }

    const SurrogateDomain& domain() const { return domain_; }
    const std::vector<std::string>& names() const { return names_; }
    const sparse::Grid& grid() const { return grid_; }
    const std::vector<std::uint8_t>& flags() const { return flags_; }
    std::size_t size() const { return grid_.size(); }
    std::size_t outputs() const { return grid_.outputs(); }
    BuildStats& stats() { return stats_; }
    const BuildStats& stats() const { return stats_; }

    void evaluate(double p, double z1, std::span<double> out) const
    {
        if (out.size() != grid_.outputs())
            throw InputError("output buffer has wrong size");
        const auto uv = domain_.to_unit(p, z1);
        if (table_)
            table_->evaluate(uv[0], uv[1], out);
        else
            grid_.evaluate(uv[0], uv[1], out);
    }

    /// Direct sum over the hierarchical basis, bypassing the lookup table.
    std::vector<double> evaluate_hierarchical(double p, double z1) const
    {
        std::vector<double> out(grid_.outputs());
        const auto uv = domain_.to_unit(p, z1);
        grid_.evaluate(uv[0], uv[1], out);
        return out;
    }

    std::vector<double> evaluate(double p, double z1) const
    {
        std::vector<double> out(grid_.outputs());
        evaluate(p, z1, out);
        return out;
    }

    /// Row-major results for many queries, evaluated in blocks (concurrently
    /// when threads > 1). Throws DomainError before evaluating anything if a
    /// query lies outside the domain.
    std::vector<double> evaluate_many(std::span<const double> p, std::span<const double> z1,
                                      unsigned threads = default_thread_count()) const
    {
        if (p.size() != z1.size())
            throw InputError("query arrays differ in length");
        const std::size_t k = grid_.outputs();
        std::vector<double> out(p.size() * k);
        std::vector<double> u(p.size());
        std::vector<double> v(p.size());
        for (std::size_t i = 0; i < p.size(); ++i) {
            const auto uv = domain_.to_unit(p[i], z1[i]);
            u[i] = uv[0];
            v[i] = uv[1];
        }
        constexpr std::size_t block = 256;
        const std::size_t blocks = (p.size() + block - 1) / block;
        parallel_for(
            blocks,
            [&](std::size_t b) {
                const std::size_t lo = b * block;
                const std::size_t n = std::min(block, p.size() - lo);
                if (table_) {
                    table_->evaluate_batch(std::span<const double>(u).subspan(lo, n),
                                           std::span<const double>(v).subspan(lo, n), out.data() + lo * k);
                    return;
                }
                for (std::size_t i = lo; i < lo + n; ++i)
                    grid_.evaluate(u[i], v[i], std::span<double>(out.data() + i * k, k));
            },
            threads);
        return out;
    }

private:
    SurrogateDomain domain_;
    std::vector<std::string> names_;
    sparse::Grid grid_{1};
    std::vector<std::uint8_t> flags_;
    std::shared_ptr<const sparse::TensorTable> table_;
    BuildStats stats_;
};

namespace detail {

inline std::vector<std::string> default_observable_names()
{
    return {observable_names.begin(), observable_names.end()};
}

/// Fills failed nodes from the nearest successful node (unit-square distance).
inline std::size_t fill_failures(const sparse::Grid& grid, std::span<const std::size_t> ids, std::vector<double>& nodal,
                                 std::vector<std::uint8_t>& flags, std::size_t k)
{
    std::size_t failed = 0;
    for (std::size_t p = 0; p < ids.size(); ++p) {
        if (!(flags[ids[p]] & node_failed))
            continue;
        ++failed;
        const auto c = grid.coord(ids[p]);
        double best = std::numeric_limits<double>::infinity();
        std::ptrdiff_t src = -1;
        bool src_is_new = false;
        // previously built nodes hold nodal values implicitly; prefer new ones first
        for (std::size_t q = 0; q < ids.size(); ++q) {
            if (flags[ids[q]] & node_failed)
                continue;
            const auto d = grid.coord(ids[q]);
            const double dist = std::hypot(c[0] - d[0], c[1] - d[1]);
            if (dist < best) {
                best = dist;
                src = static_cast<std::ptrdiff_t>(q);
                src_is_new = true;
            }
        }
        for (std::size_t n = 0; n < grid.size(); ++n) {
            if ((flags[n] & node_failed) || std::find(ids.begin(), ids.end(), n) != ids.end())
                continue;
            const auto d = grid.coord(n);
            const double dist = std::hypot(c[0] - d[0], c[1] - d[1]);
            if (dist < best) {
                best = dist;
                src = static_cast<std::ptrdiff_t>(n);
                src_is_new = false;
            }
        }
        if (src < 0)
            throw NumericalError("oracle failed at every surrogate node");
        if (src_is_new) {
            std::copy_n(nodal.begin() + src * static_cast<std::ptrdiff_t>(k), k, nodal.begin() + p * k);
        } else {
            const auto d = grid.coord(static_cast<std::size_t>(src));
            grid.evaluate(d[0], d[1], std::span<double>(nodal.data() + p * k, k));
        }
    }
    return failed;
}

} // namespace detail

/// Builds the surrogate: a regular sparse grid of level `initial_level`, then
/// generations of refinement. Each generation refines, highest first, the
/// unrefined nodes whose range-normalized surplus reaches `refine_tol`, adding
/// their hierarchical children plus any missing ancestors, until the tolerance
/// is met or the node budget is spent.
inline Surrogate build_surrogate(const SurrogateDomain& domain, const SurrogateOracle& oracle,
                                 const SurrogateConfig& cfg = {},
                                 std::vector<std::string> names = detail::default_observable_names())
{
    domain.validate();
    if (!(cfg.refine_tol > 0.0))
        throw ConfigError("refine_tol must be positive");
    if (cfg.initial_level < 1 || cfg.initial_level > 12)
        throw ConfigError("initial level must be in [1, 12]");
    const auto start = std::chrono::steady_clock::now();
    const std::size_t k = names.size();
    sparse::Grid grid(k);
    std::vector<std::uint8_t> flags;
    std::vector<char> refined;
    std::vector<double> lo(k, std::numeric_limits<double>::infinity());
    std::vector<double> hi(k, -std::numeric_limits<double>::infinity());
    BuildStats stats;

    auto add_nodes = [&](const std::vector<sparse::NodeKey>& keys) {
        std::vector<std::size_t> ids;
        for (const auto& key : keys) {
            if (grid.contains(key))
                continue;
            ids.push_back(grid.insert(key));
            flags.push_back(0);
            refined.push_back(0);
        }
        std::vector<double> nodal(ids.size() * k);
        std::vector<OracleSample> samples(ids.size());
        parallel_for(
            ids.size(),
            [&](std::size_t j) {
                const auto c = grid.coord(ids[j]);
                const auto pz = domain.from_unit(c[0], c[1]);
                try {
                    samples[j] = oracle(pz[0], pz[1]);
                } catch (const std::exception&) {
                    samples[j].ok = false;
                }
            },
            cfg.threads);
        stats.oracle_calls += ids.size();
        for (std::size_t j = 0; j < ids.size(); ++j) {
            auto& s = samples[j];
            const bool good = s.ok && s.values.size() == k &&
                              std::all_of(s.values.begin(), s.values.end(), [](double v) { return std::isfinite(v); });
            if (!good) {
                flags[ids[j]] |= detail::node_failed;
                continue;
            }
            if (s.extrapolated)
                flags[ids[j]] |= detail::node_extrapolated;
            for (std::size_t o = 0; o < k; ++o) {
                nodal[j * k + o] = s.values[o];
                lo[o] = std::min(lo[o], s.values[o]);
                hi[o] = std::max(hi[o], s.values[o]);
            }
        }
        stats.failed_nodes += detail::fill_failures(grid, ids, nodal, flags, k);
        grid.hierarchize_nodes(ids, nodal);
    };

    auto score = [&](std::size_t n) {
        double s = 0.0;
        const auto sp = grid.surplus(n);
        for (std::size_t o = 0; o < k; ++o) {
            const double range = hi[o] > lo[o] ? hi[o] - lo[o] : 1.0;
            s = std::max(s, std::abs(sp[o]) / range);
        }
        return s;
    };

    add_nodes(sparse::regular_keys(cfg.initial_level));

    while (true) {
        std::vector<std::pair<double, std::size_t>> cand;
        double worst = 0.0;
        for (std::size_t n = 0; n < grid.size(); ++n) {
            if (refined[n])
                continue;
            const double s = score(n);
            worst = std::max(worst, s);
            if (s >= cfg.refine_tol)
                cand.emplace_back(s, n);
        }
        stats.max_normalized_surplus = worst;
        if (cfg.progress)
            cfg.progress(grid.size(), worst);
        if (cand.empty()) {
            stats.reached_tolerance = true;
            break;
        }
        if (grid.size() >= cfg.max_points)
            break;
        std::stable_sort(cand.begin(), cand.end(), [](const auto& a, const auto& b) { return a.first > b.first; });

        std::vector<sparse::NodeKey> batch;
        std::unordered_map<sparse::NodeKey, bool, sparse::NodeKeyHash> queued;
        for (const auto& [s, n] : cand) {
            std::vector<sparse::NodeKey> extra;
            for (const auto& child : grid.missing_children(n)) {
                if (queued.count(child))
                    continue;
                extra.push_back(child);
                for (const auto& anc : grid.missing_ancestors(child))
                    if (!queued.count(anc) &&
                        std::find(extra.begin(), extra.end(), anc) == extra.end())
                        extra.push_back(anc);
            }
            if (grid.size() + batch.size() + extra.size() > cfg.max_points && !batch.empty())
                break;
            refined[n] = 1;
            for (const auto& key : extra) {
                queued.emplace(key, true);
                batch.push_back(key);
            }
            if (grid.size() + batch.size() >= cfg.max_points)
                break;
        }
        ++stats.generations;
        if (batch.empty())
            continue;
        add_nodes(batch);
    }

    for (auto f : flags)
        if (f & detail::node_extrapolated)
            ++stats.extrapolated_nodes;
    for (const auto& key : grid.keys())
        stats.max_level = std::max({stats.max_level, key.level[0], key.level[1]});
    stats.full_grid_points = std::pow(std::ldexp(1.0, static_cast<int>(stats.max_level)) - 1.0, 2);
    stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    Surrogate s(domain, std::move(names), std::move(grid), std::move(flags), cfg.table_bytes);
    s.stats() = stats;
    return s;
}

// ---------------------------------------------------------------------------
// Persistence

inline constexpr std::uint32_t surrogate_format_version = 1;

inline void save_surrogate(const Surrogate& s, std::ostream& os)
{
    detail::ByteWriter w(os);
    os.write("SGS1", 4);
    w.u32(surrogate_format_version);
    const auto& d = s.domain();
    w.f64(d.p_min);
    w.f64(d.p_max);
    w.f64(d.z1_min);
    w.f64(d.z1_max);
    w.f64(d.t);
    w.f64(d.k12);
    w.u32(static_cast<std::uint32_t>(d.components.size()));
    for (const auto& c : d.components) {
        w.str(c.name());
        w.f64(c.tc());
        w.f64(c.pc());
        w.f64(c.omega());
        w.f64(c.molar_mass_opt().value_or(std::numeric_limits<double>::quiet_NaN()));
    }
    w.u32(static_cast<std::uint32_t>(s.outputs()));
    for (const auto& n : s.names())
        w.str(n);
    const auto& g = s.grid();
    w.u64(g.size());
    for (std::size_t n = 0; n < g.size(); ++n) {
        const auto& key = g.keys()[n];
        w.u32(key.level[0]);
        w.u32(key.level[1]);
        w.u32(key.index[0]);
        w.u32(key.index[1]);
        for (double v : g.surplus(n))
            w.f64(v);
    }
    for (auto f : s.flags())
        w.u8(f);
    if (!os)
        throw IoError("failed writing surrogate");
}

inline Surrogate load_surrogate(std::istream& is, std::size_t table_bytes = default_table_bytes)
{
    char magic[4] = {};
    if (!is.read(magic, 4) || std::memcmp(magic, "SGS1", 4) != 0)
        throw IoError("not a surrogate file (bad magic)");
    detail::ByteReader r(is);
    const auto version = r.u32();
    if (version != surrogate_format_version)
        throw IoError("unsupported surrogate format version " + std::to_string(version));
    SurrogateDomain d;
    d.p_min = r.f64();
    d.p_max = r.f64();
    d.z1_min = r.f64();
    d.z1_max = r.f64();
    d.t = r.f64();
    d.k12 = r.f64();
    const auto nc = r.u32();
    if (nc != 2)
        throw IoError("surrogate file has an invalid component count");
    for (std::uint32_t i = 0; i < nc; ++i) {
        auto name = r.str();
        const double tc = r.f64();
        const double pc = r.f64();
        const double omega = r.f64();
        const double mm = r.f64();
        try {
            d.components.emplace_back(std::move(name), tc, pc, omega,
                                      std::isnan(mm) ? std::optional<double>{} : std::optional<double>{mm});
        } catch (const Error& e) {
            throw IoError(std::string("surrogate file has an invalid component: ") + e.what());
        }
    }
    try {
        d.validate();
    } catch (const Error& e) {
        throw IoError(std::string("surrogate file has an invalid domain: ") + e.what());
    }
    const auto k = r.u32();
    if (k == 0 || k > 1024)
        throw IoError("surrogate file has an invalid output count");
    std::vector<std::string> names;
    for (std::uint32_t i = 0; i < k; ++i)
        names.push_back(r.str());
    const auto count = r.u64();
    if (count == 0 || count > (1u << 26))
        throw IoError("surrogate file has an invalid node count");
    sparse::Grid g(k);
    for (std::uint64_t n = 0; n < count; ++n) {
        sparse::NodeKey key;
        key.level[0] = r.u32();
        key.level[1] = r.u32();
        key.index[0] = r.u32();
        key.index[1] = r.u32();
        if (!sparse::valid_key(key) || g.contains(key))
            throw IoError("surrogate file has an invalid or duplicate node");
        const auto id = g.insert(key);
        auto sp = g.surplus(id);
        for (std::uint32_t o = 0; o < k; ++o)
            sp[o] = r.f64();
    }
    std::vector<std::uint8_t> flags(count);
    for (auto& f : flags)
        f = r.u8();
    if (!g.is_closed())
        throw IoError("surrogate file node set is not hierarchically closed");
    return Surrogate(std::move(d), std::move(names), std::move(g), std::move(flags), table_bytes);
}

inline void save_surrogate(const Surrogate& s, const std::string& path)
{
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw IoError("cannot open " + path + " for writing");
    save_surrogate(s, os);
}

inline Surrogate load_surrogate(const std::string& path, std::size_t table_bytes = default_table_bytes)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw IoError("cannot open " + path);
    return load_surrogate(is, table_bytes);
}

inline nlohmann::json to_json(const BuildStats& s)
{
    return {{"oracle_calls", s.oracle_calls},
            {"max_level", s.max_level},
            {"full_grid_points_at_max_level", s.full_grid_points},
            {"generations", s.generations},
            {"failed_nodes", s.failed_nodes},
            {"extrapolated_nodes", s.extrapolated_nodes},
            {"max_normalized_surplus", s.max_normalized_surplus},
            {"seconds", s.seconds},
            {"reached_tolerance", s.reached_tolerance}};
}

/// Human-readable dump of the whole surrogate.
inline nlohmann::json to_json(const Surrogate& s)
{
    const auto& d = s.domain();
    nlohmann::json comps = nlohmann::json::array();
    for (const auto& c : d.components) {
        nlohmann::json jc{{"name", c.name()}, {"tc_K", c.tc()}, {"pc_Pa", c.pc()}, {"omega", c.omega()}};
        if (c.molar_mass_opt())
            jc["molar_mass_kg_mol"] = *c.molar_mass_opt();
        comps.push_back(jc);
    }
    nlohmann::json nodes = nlohmann::json::array();
    const auto& g = s.grid();
    for (std::size_t n = 0; n < g.size(); ++n) {
        const auto& key = g.keys()[n];
        const auto c = g.coord(n);
        const auto pz = d.from_unit(c[0], c[1]);
        const auto sp = g.surplus(n);
        nodes.push_back({{"level", {key.level[0], key.level[1]}},
                         {"index", {key.index[0], key.index[1]}},
                         {"p_Pa", pz[0]},
                         {"z1", pz[1]},
                         {"failed", (s.flags()[n] & detail::node_failed) != 0},
                         {"extrapolated", (s.flags()[n] & detail::node_extrapolated) != 0},
                         {"surplus", std::vector<double>(sp.begin(), sp.end())}});
    }
    return {{"format", "SGS1"},
            {"version", surrogate_format_version},
            {"domain",
             {{"p_min_Pa", d.p_min},
              {"p_max_Pa", d.p_max},
              {"z1_min", d.z1_min},
              {"z1_max", d.z1_max},
              {"T_K", d.t},
              {"k12", d.k12},
              {"components", comps}}},
            {"observables", s.names()},
            {"stats", to_json(s.stats())},
            {"nodes", nodes}};
}

} // namespace vle
