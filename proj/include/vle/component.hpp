/**
 * @file component.hpp
 * @brief Pure-species critical properties, binary interaction coefficients and
 *        the built-in C1-C7 alkane table.
 */
#pragma once

#include "vle/constants.hpp"
#include "vle/detail/csv.hpp"
#include "vle/error.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace vle {

/// A pure species. Critical pressure is stored in Pa.
class Component {
public:
    Component(std::string name, double tc, double pc, double omega,
              std::optional<double> molar_mass = std::nullopt)
        : name_(std::move(name)), tc_(tc), pc_(pc), omega_(omega), molar_mass_(molar_mass)
    {
        if (!(tc_ > 0.0) || !std::isfinite(tc_))
            throw InputError("component '" + name_ + "': critical temperature must be positive");
        if (!(pc_ > 0.0) || !std::isfinite(pc_))
            throw InputError("component '" + name_ + "': critical pressure must be positive");
        if (!(omega_ >= -1.0 && omega_ <= 2.0))
            throw InputError("component '" + name_ + "': acentric factor outside [-1, 2]");
        if (molar_mass_ && !(*molar_mass_ > 0.0))
            throw InputError("component '" + name_ + "': molar mass must be positive");
    }

    const std::string& name() const { return name_; }
    double tc() const { return tc_; }
    double pc() const { return pc_; }
    double omega() const { return omega_; }
    const std::optional<double>& molar_mass_opt() const { return molar_mass_; }

    friend bool operator==(const Component&, const Component&) = default;

private:
    std::string name_;
    double tc_;
    double pc_;
    double omega_;
    std::optional<double> molar_mass_;
};

/// Molar mass in kg/mol; throws if the component carries none.
inline double molar_mass(const Component& c)
{
    if (!c.molar_mass_opt())
        throw InputError("no molar mass known for component '" + c.name() + "'");
    return *c.molar_mass_opt();
}

/// Symmetric k_ij matrix with zero diagonal.
class BinaryInteraction {
public:
    explicit BinaryInteraction(std::size_t n = 2) : n_(n), k_(n * n, 0.0) {}

    std::size_t size() const { return n_; }

    double operator()(std::size_t i, std::size_t j) const { return k_[i * n_ + j]; }

    void set(std::size_t i, std::size_t j, double value)
    {
        if (i >= n_ || j >= n_)
            throw InputError("binary interaction index out of range");
        if (i == j) {
            if (value != 0.0)
                throw InputError("binary interaction diagonal must be zero");
            return;
        }
        if (!std::isfinite(value))
            throw InputError("binary interaction coefficient must be finite");
        k_[i * n_ + j] = value;
        k_[j * n_ + i] = value;
    }

private:
    std::size_t n_;
    std::vector<double> k_;
};

using Components = std::vector<Component>;

namespace detail {

struct TableRow {
    const char* name;
    const char* alias;
    double tc;
    double pc_bar;
    double omega;
    double molar_mass;
};

// Critical data of the C1-C7 n-alkanes. Molar masses are the usual
// engineering-table values (GPSA Engineering Data Book, physical constants).
inline constexpr std::array<TableRow, 7> alkane_table{{
    {"C1", "methane", 190.6, 46.0, 0.0115, 0.016043},
    {"C2", "ethane", 305.4, 48.84, 0.0908, 0.030070},
    {"C3", "propane", 369.8, 42.46, 0.1454, 0.044097},
    {"C4", "n-butane", 421.09, 37.69, 0.1886, 0.058123},
    {"C5", "n-pentane", 467.85, 34.24, 0.2257, 0.072150},
    {"C6", "n-hexane", 521.99, 34.66, 0.2564, 0.086177},
    {"C7", "n-heptane", 557.09, 32.62, 0.2854, 0.100204},
}};

inline std::string lower(std::string_view s)
{
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    return out;
}

} // namespace detail

/// A named set of components, looked up by name (case-insensitive) or alias.
class ComponentDatabase {
public:
    ComponentDatabase() = default;

    /// The built-in C1..C7 table.
    static ComponentDatabase builtin()
    {
        ComponentDatabase db;
        for (const auto& row : detail::alkane_table)
            db.add(Component(row.name, row.tc, bar_to_pa(row.pc_bar), row.omega, row.molar_mass),
                   row.alias);
        return db;
    }

    /// Adds or replaces a component. Replacement keeps a previously known molar
    /// mass when the new entry carries none.
    void add(Component c, std::string alias = {})
    {
        for (auto& e : entries_) {
            if (detail::lower(e.component.name()) == detail::lower(c.name())) {
                if (!c.molar_mass_opt() && e.component.molar_mass_opt())
                    c = Component(c.name(), c.tc(), c.pc(), c.omega(), e.component.molar_mass_opt());
                e.component = std::move(c);
                if (!alias.empty())
                    e.alias = std::move(alias);
                return;
            }
        }
        entries_.push_back({std::move(c), std::move(alias)});
    }

    const Component& get(std::string_view name) const
    {
        const auto key = detail::lower(name);
        for (const auto& e : entries_)
            if (detail::lower(e.component.name()) == key || (!e.alias.empty() && e.alias == key))
                return e.component;
        throw InputError("unknown component '" + std::string(name) + "'");
    }

    bool contains(std::string_view name) const
    {
        try {
            get(name);
            return true;
        } catch (const InputError&) {
            return false;
        }
    }

    Components lookup(std::span<const std::string> names) const
    {
        Components out;
        for (const auto& n : names)
            out.push_back(get(n));
        return out;
    }

    std::vector<Component> all() const
    {
        std::vector<Component> out;
        for (const auto& e : entries_)
            out.push_back(e.component);
        return out;
    }

    /// Loads (or overrides) entries from CSV with header `name,tc_K,pc_bar,omega`
    /// and an optional trailing `molar_mass_kg_mol` column.
    void load_csv(std::istream& in)
    {
        std::string line;
        if (!std::getline(in, line))
            throw InputError("components csv: empty file");
        const auto header = detail::split_fields(line);
        const bool has_mass = header.size() == 5 && header[4] == "molar_mass_kg_mol";
        if (header.size() < 4 || header[0] != "name" || header[1] != "tc_K" ||
            header[2] != "pc_bar" || header[3] != "omega" || (header.size() == 5 && !has_mass) ||
            header.size() > 5)
            throw InputError("components csv: expected header 'name,tc_K,pc_bar,omega'");
        std::size_t row = 1;
        while (std::getline(in, line)) {
            ++row;
            if (detail::trim(line).empty())
                continue;
            const auto f = detail::split_fields(line);
            if (f.size() != header.size())
                throw InputError("components csv row " + std::to_string(row) + ": wrong field count");
            const auto tc = detail::parse_double(f[1]);
            const auto pc = detail::parse_double(f[2]);
            const auto om = detail::parse_double(f[3]);
            if (!tc || !pc || !om || f[0].empty())
                throw InputError("components csv row " + std::to_string(row) + ": malformed value");
            std::optional<double> mass;
            if (has_mass) {
                mass = detail::parse_double(f[4]);
                if (!mass)
                    throw InputError("components csv row " + std::to_string(row) + ": malformed molar mass");
            }
            try {
                add(Component(std::string(f[0]), *tc, bar_to_pa(*pc), *om, mass));
            } catch (const InputError& e) {
                throw InputError("components csv row " + std::to_string(row) + ": " + e.what());
            }
        }
    }

    void load_csv_file(const std::string& path)
    {
        std::ifstream in(path);
        if (!in)
            throw IoError("cannot open components file '" + path + "'");
        load_csv(in);
    }

private:
    struct Entry {
        Component component;
        std::string alias;
    };
    std::vector<Entry> entries_;
};

} // namespace vle
