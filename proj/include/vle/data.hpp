/**
 * @file data.hpp
 * @brief Binary VLE records: CSV ingestion and export, SSM-generated
 *        synthetic data, target noise, splitting and subsampling.
 *
 * Pressures are bar in records and files, Pa everywhere else.
 */
#pragma once

#include "vle/component.hpp"
#include "vle/constants.hpp"
#include "vle/detail/csv.hpp"
#include "vle/error.hpp"
#include "vle/neural/activation.hpp"
#include "vle/tie_line.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <string>
#include <vector>

namespace vle {

struct VleRecord {
    double tc1 = 0.0;    ///< K
    double pc1 = 0.0;    ///< bar
    double omega1 = 0.0;
    double tc2 = 0.0;
    double pc2 = 0.0;
    double omega2 = 0.0;
    double t = 0.0;      ///< K
    double p = 0.0;      ///< bar
    double x1 = 0.0;
    double y1 = 0.0;

    std::array<double, 8> features() const { return {tc1, pc1, omega1, tc2, pc2, omega2, t, p}; }

    /// Throws InputError with `where` prefixed when a field is out of range.
    void validate(const std::string& where = "record") const
    {
        const std::array<double, 10> all{tc1, pc1, omega1, tc2, pc2, omega2, t, p, x1, y1};
        for (double v : all)
            if (!std::isfinite(v))
                throw InputError(where + ": non-finite value");
        if (!(tc1 > 0.0 && pc1 > 0.0 && tc2 > 0.0 && pc2 > 0.0))
            throw InputError(where + ": critical properties must be positive");
        if (!(t > 0.0 && p > 0.0))
            throw InputError(where + ": temperature and pressure must be positive");
        if (!(x1 >= 0.0 && x1 <= 1.0))
            throw InputError(where + ": x1 outside [0, 1]");
        if (!(y1 >= 0.0 && y1 <= 1.0))
            throw InputError(where + ": y1 outside [0, 1]");
    }

    static VleRecord from(const Component& a, const Component& b, double t, double p_pa, double x1, double y1)
    {
        return {a.tc(), pa_to_bar(a.pc()), a.omega(), b.tc(), pa_to_bar(b.pc()), b.omega(), t, pa_to_bar(p_pa), x1, y1};
    }
};

enum class Provenance { experimental_csv, synthetic_ssm };

inline const char* to_string(Provenance p)
{
    return p == Provenance::experimental_csv ? "experimental_csv" : "synthetic_ssm";
}

struct Dataset {
    std::vector<VleRecord> records;
    Provenance provenance = Provenance::experimental_csv;
    double noise_sigma = 0.0;

    std::size_t size() const { return records.size(); }
    bool empty() const { return records.empty(); }

    /// 8 x N feature matrix.
    nn::Matrix features() const
    {
        nn::Matrix x(8, static_cast<Eigen::Index>(records.size()));
        for (std::size_t j = 0; j < records.size(); ++j) {
            const auto f = records[j].features();
            for (int i = 0; i < 8; ++i)
                x(i, static_cast<Eigen::Index>(j)) = f[static_cast<std::size_t>(i)];
        }
        return x;
    }

    /// 2 x N target matrix (x1, y1).
    nn::Matrix targets() const
    {
        nn::Matrix y(2, static_cast<Eigen::Index>(records.size()));
        for (std::size_t j = 0; j < records.size(); ++j) {
            y(0, static_cast<Eigen::Index>(j)) = records[j].x1;
            y(1, static_cast<Eigen::Index>(j)) = records[j].y1;
        }
        return y;
    }
};

inline constexpr std::array<std::string_view, 10> dataset_columns{
    "tc1_K", "pc1_bar", "omega1", "tc2_K", "pc2_bar", "omega2", "T_K", "p_bar", "x1", "y1"};

/// Reads the dataset schema. Lines starting with '#' are comments.
inline Dataset load_csv(std::istream& in)
{
    std::string line;
    std::size_t row = 0;
    do {
        if (!std::getline(in, line))
            throw InputError("no records");
        ++row;
    } while (detail::is_comment(line));
    const std::string header_where = "row " + std::to_string(row);
    const auto header = detail::split_fields(line);
    for (std::size_t i = 0; i < dataset_columns.size(); ++i)
        if (i >= header.size() || header[i] != dataset_columns[i])
            throw InputError(header_where + ": missing column '" + std::string(dataset_columns[i]) + "'");
    if (header.size() != dataset_columns.size())
        throw InputError(header_where + ": unexpected extra columns");
    Dataset ds;
    while (std::getline(in, line)) {
        ++row;
        if (detail::trim(line).empty() || detail::is_comment(line))
            continue;
        const auto f = detail::split_fields(line);
        const std::string where = "row " + std::to_string(row);
        if (f.size() != dataset_columns.size())
            throw InputError(where + ": expected " + std::to_string(dataset_columns.size()) + " fields, found " +
                             std::to_string(f.size()));
        std::array<double, 10> v{};
        for (std::size_t i = 0; i < f.size(); ++i) {
            const auto d = detail::parse_double(f[i]);
            if (!d)
                throw InputError(where + ": malformed value in column '" + std::string(dataset_columns[i]) + "'");
            v[i] = *d;
        }
        VleRecord r{v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8], v[9]};
        r.validate(where);
        ds.records.push_back(r);
    }
    if (ds.records.empty())
        throw InputError("no records");
    return ds;
}

inline Dataset load_csv_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open " + path);
    return load_csv(in);
}

inline void save_csv(const Dataset& ds, std::ostream& os)
{
    for (std::size_t i = 0; i < dataset_columns.size(); ++i)
        os << (i ? "," : "") << dataset_columns[i];
    os << '\n';
    os.precision(17);
    for (const auto& r : ds.records)
        os << r.tc1 << ',' << r.pc1 << ',' << r.omega1 << ',' << r.tc2 << ',' << r.pc2 << ',' << r.omega2 << ','
           << r.t << ',' << r.p << ',' << r.x1 << ',' << r.y1 << '\n';
}

inline void save_csv_file(const Dataset& ds, const std::string& path)
{
    std::ofstream os(path);
    if (!os)
        throw IoError("cannot open " + path + " for writing");
    save_csv(ds, os);
    if (!os)
        throw IoError("failed writing " + path);
}

// ---------------------------------------------------------------------------
// Synthetic data

struct ComponentPair {
    Component first;
    Component second;
    double k12 = 0.0;
};

struct SyntheticSpec {
    std::vector<ComponentPair> pairs;
    std::vector<double> t_grid; ///< K
    std::vector<double> p_grid; ///< Pa
    double eps = 1e-10;
};

struct SyntheticResult {
    Dataset dataset;
    std::size_t attempted = 0;
    std::size_t skipped = 0; ///< grid points without a two-phase state
    nlohmann::json manifest;
};

/// Evenly spaced values from lo to hi inclusive.
inline std::vector<double> linspace(double lo, double hi, std::size_t n)
{
    if (n == 0)
        return {};
    if (n == 1)
        return {lo};
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i)
        out[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    return out;
}

/// One record per (pair, T, p) grid point with a two-phase state, from a
/// tightly converged SSM flash; other points are skipped and counted.
inline SyntheticResult generate_synthetic(const SyntheticSpec& spec)
{
    if (spec.pairs.empty() || spec.t_grid.empty() || spec.p_grid.empty())
        throw ConfigError("synthetic generation needs component pairs and non-empty T and p grids");
    SyntheticResult res;
    res.dataset.provenance = Provenance::synthetic_ssm;
    nlohmann::json pairs = nlohmann::json::array();
    for (const auto& pair : spec.pairs) {
        const Components cs{pair.first, pair.second};
        BinaryInteraction kij(2);
        if (pair.k12 != 0.0)
            kij.set(0, 1, pair.k12);
        std::size_t kept = 0;
        for (double t : spec.t_grid)
            for (double p : spec.p_grid) {
                ++res.attempted;
                const auto r = find_tie_line(cs, kij, t, p, spec.eps);
                if (!r) {
                    ++res.skipped;
                    continue;
                }
                res.dataset.records.push_back(VleRecord::from(pair.first, pair.second, t, p, r->x[0], r->y[0]));
                ++kept;
            }
        pairs.push_back({{"components", {pair.first.name(), pair.second.name()}}, {"k12", pair.k12}, {"records", kept}});
    }
    std::vector<double> p_bar;
    for (double p : spec.p_grid)
        p_bar.push_back(pa_to_bar(p));
    res.manifest = {{"provenance", "synthetic_ssm"},
                    {"pairs", pairs},
                    {"T_grid_K", spec.t_grid},
                    {"p_grid_bar", p_bar},
                    {"eps", spec.eps},
                    {"attempted", res.attempted},
                    {"skipped_single_phase", res.skipped},
                    {"records", res.dataset.size()}};
    if (res.dataset.empty())
        throw NumericalError("synthetic generation produced no two-phase points (" + std::to_string(res.skipped) +
                             " grid points skipped)");
    return res;
}

/// Multiplies both targets by (1 + N(0, sigma_rel)) and clamps to [0, 1].
inline Dataset add_noise(const Dataset& ds, double sigma_rel, std::uint64_t seed)
{
    if (!(sigma_rel >= 0.0))
        throw ConfigError("noise level must be non-negative");
    Dataset out = ds;
    out.noise_sigma = sigma_rel;
    if (sigma_rel == 0.0)
        return out;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, sigma_rel);
    for (auto& r : out.records) {
        r.x1 = std::clamp(r.x1 * (1.0 + n(rng)), 0.0, 1.0);
        r.y1 = std::clamp(r.y1 * (1.0 + n(rng)), 0.0, 1.0);
    }
    return out;
}

struct Split {
    Dataset train;
    Dataset validation;
};

/// Shuffled partition; the validation part holds round(fraction * N) records.
inline Split split(const Dataset& ds, double validation_fraction, std::uint64_t seed)
{
    if (!(validation_fraction > 0.0 && validation_fraction < 0.5))
        throw ConfigError("validation fraction must be in (0, 0.5)");
    std::vector<std::size_t> idx(ds.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n_val = static_cast<std::size_t>(std::llround(validation_fraction * static_cast<double>(ds.size())));
    Split s;
    s.train.provenance = s.validation.provenance = ds.provenance;
    s.train.noise_sigma = s.validation.noise_sigma = ds.noise_sigma;
    for (std::size_t i = 0; i < idx.size(); ++i)
        (i < n_val ? s.validation : s.train).records.push_back(ds.records[idx[i]]);
    return s;
}

/// Random subset of round(ratio * N) records (at least one).
inline Dataset subsample(const Dataset& ds, double ratio, std::uint64_t seed)
{
    if (!(ratio > 0.0 && ratio <= 1.0))
        throw ConfigError("subsample ratio must be in (0, 1]");
    std::vector<std::size_t> idx(ds.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(ratio * static_cast<double>(ds.size()))));
    Dataset out;
    out.provenance = ds.provenance;
    out.noise_sigma = ds.noise_sigma;
    for (std::size_t i = 0; i < std::min(n, idx.size()); ++i)
        out.records.push_back(ds.records[idx[i]]);
    return out;
}

} // namespace vle
