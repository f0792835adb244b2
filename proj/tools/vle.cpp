// vle: flash calculations, sparse-grid surrogates, neural-network VLE models
// and the four-method benchmark from one command line.
//
// Exit codes: 0 success, 2 usage or input error, 3 non-convergence,
// 4 file I/O.

#include "vle/bench.hpp"
#include "vle/component.hpp"
#include "vle/data.hpp"
#include "vle/experiment.hpp"
#include "vle/flash.hpp"
#include "vle/flash_oracle.hpp"
#include "vle/neural/model_io.hpp"
#include "vle/observables.hpp"
#include "vle/parallel.hpp"
#include "vle/surrogate.hpp"
#include "vle/tie_line.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace {

using nlohmann::json;
using namespace vle;

enum ExitCode : int { exit_ok = 0, exit_usage = 2, exit_nonconvergence = 3, exit_io = 4 };

class UsageError : public Error {
public:
    using Error::Error;
};

// ---------------------------------------------------------------------------
// JSON config files: top-level keys are flag names, subcommands are nested
// objects, e.g. {"threads": 2, "bench": {"queries": 500}}.

class JsonConfig : public CLI::Config {
public:
    std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override
    {
        return dump(app, default_also).dump(2) + "\n";
    }

    std::vector<CLI::ConfigItem> from_config(std::istream& in) const override
    {
        json j;
        try {
            in >> j;
        } catch (const json::exception& e) {
            throw CLI::ConversionError(std::string("config file is not valid JSON: ") + e.what());
        }
        if (!j.is_object())
            throw CLI::ConversionError("config file must hold a JSON object");
        std::vector<CLI::ConfigItem> out;
        collect(j, "", {}, out);
        return out;
    }

private:
    static json dump(const CLI::App* app, bool default_also)
    {
        json j = json::object();
        for (const auto* opt : app->get_options()) {
            if (!opt->get_configurable() || opt->get_lnames().empty())
                continue;
            const auto& name = opt->get_lnames().front();
            if (opt->count() > 0) {
                const auto& r = opt->results();
                if (opt->get_expected_min() == 0)
                    j[name] = true;
                else
                    j[name] = r.size() == 1 ? json(r.front()) : json(r);
            } else if (default_also && !opt->get_default_str().empty()) {
                j[name] = opt->get_default_str();
            }
        }
        for (const auto* sub : app->get_subcommands({})) {
            auto js = dump(sub, default_also);
            if (!js.empty())
                j[sub->get_name()] = js;
        }
        return j;
    }

    static void collect(const json& j, const std::string& name, std::vector<std::string> parents,
                        std::vector<CLI::ConfigItem>& out)
    {
        if (j.is_object()) {
            if (!name.empty())
                parents.push_back(name);
            for (auto it = j.begin(); it != j.end(); ++it)
                collect(*it, it.key(), parents, out);
            return;
        }
        CLI::ConfigItem item;
        item.name = name;
        item.parents = parents;
        auto text = [](const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
        if (j.is_array())
            for (const auto& v : j)
                item.inputs.push_back(text(v));
        else
            item.inputs.push_back(text(j));
        out.push_back(std::move(item));
    }
};

// ---------------------------------------------------------------------------
// Argument parsing

std::string lower(std::string s)
{
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

double to_number(const std::string& s, const std::string& what)
{
    const auto v = detail::parse_double(s);
    if (!v || !std::isfinite(*v))
        throw UsageError("malformed " + what + " '" + s + "'");
    return *v;
}

/// Splits off a trailing unit (letters) and returns the Pa-per-unit factor.
/// A bare number is in bar.
double pressure_unit(std::string& s)
{
    std::size_t end = s.size();
    while (end > 0 && std::isalpha(static_cast<unsigned char>(s[end - 1])))
        --end;
    const std::string unit = lower(s.substr(end));
    s.erase(end);
    if (unit.empty() || unit == "bar")
        return pa_per_bar;
    if (unit == "pa")
        return 1.0;
    if (unit == "kpa")
        return 1e3;
    if (unit == "mpa")
        return 1e6;
    throw UsageError("unknown pressure unit '" + unit + "' (bar, Pa, kPa or MPa)");
}

double parse_pressure(std::string s)
{
    const double f = pressure_unit(s);
    const double v = to_number(s, "pressure");
    if (!(v > 0.0))
        throw UsageError("pressure must be positive");
    return v * f;
}

std::vector<std::string> split(const std::string& s, char sep)
{
    std::vector<std::string> out;
    for (auto f : detail::split_fields(s, sep))
        out.emplace_back(f);
    return out;
}

std::vector<double> parse_numbers(const std::string& s, const std::string& what)
{
    std::vector<double> out;
    for (const auto& f : split(s, ','))
        out.push_back(to_number(f, what));
    return out;
}

struct Range {
    double lo = 0.0;
    double hi = 0.0;
    std::size_t n = 0;

    std::vector<double> values() const { return linspace(lo, hi, n); }
};

/// "lo:hi" or "lo:hi:n". `factor` scales lo and hi (unit conversion).
Range parse_range(std::string s, bool with_count, double factor, const std::string& what)
{
    auto f = split(s, ':');
    if (f.size() != (with_count ? 3u : 2u))
        throw UsageError(what + " must look like " + (with_count ? "lo:hi:n" : "lo:hi") + ", got '" + s + "'");
    Range r;
    r.lo = to_number(f[0], what) * factor;
    r.hi = to_number(f[1], what) * factor;
    if (with_count) {
        const double n = to_number(f[2], what + " point count");
        if (!(n >= 0.0) || n != std::floor(n))
            throw UsageError(what + " point count must be a whole number");
        r.n = static_cast<std::size_t>(n);
        if (r.n == 0)
            throw UsageError(what + " has zero points");
    }
    if (r.hi < r.lo || (!with_count && r.hi == r.lo))
        throw UsageError(what + " must have lo < hi");
    return r;
}

Range parse_pressure_range(std::string s, bool with_count)
{
    const double f = pressure_unit(s);
    Range r = parse_range(s, with_count, f, "pressure range");
    if (!(r.lo > 0.0))
        throw UsageError("pressure range must be positive");
    return r;
}

// ---------------------------------------------------------------------------
// Shared option groups

unsigned g_threads = default_thread_count();

struct MixtureOptions {
    std::string components = "C1,C3";
    std::string components_file;
    double t = 226.0;
    double k12 = 0.0;

    void add(CLI::App* app, bool with_t = true)
    {
        app->add_option("--components", components, "Comma-separated component names")->capture_default_str();
        app->add_option("--components-file", components_file,
                        "CSV (name,tc_K,pc_bar,omega[,molar_mass_kg_mol]) adding or overriding components");
        if (with_t)
            app->add_option("--t", t, "Temperature, K")->capture_default_str();
        app->add_option("--k12", k12, "Binary interaction coefficient between the first two components")
            ->capture_default_str();
    }

    Components resolve() const
    {
        auto db = ComponentDatabase::builtin();
        if (!components_file.empty())
            db.load_csv_file(components_file);
        const auto names = split(components, ',');
        if (names.size() < 2)
            throw UsageError("need at least two components");
        return db.lookup(names);
    }

    BinaryInteraction kij(std::size_t n) const
    {
        BinaryInteraction k(n);
        k.set(0, 1, k12);
        return k;
    }

    void require_binary(const Components& cs, const std::string& command) const
    {
        if (cs.size() != 2)
            throw UsageError(command + " works on binary mixtures");
    }
};

/// Data for training and experiments: a CSV, or SSM-generated records.
struct DataOptions {
    std::string data;
    MixtureOptions mixture;
    std::string t_range = "190:360:50";
    std::string p_range = "2:100:60bar";
    std::size_t points = 2000;
    double noise = 0.0;
    std::uint64_t seed = 1;

    void add(CLI::App* app, const std::string& seed_flag = "--data-seed")
    {
        app->add_option("--data", data, "Dataset CSV; without it a synthetic set is generated");
        mixture.add(app, false);
        app->add_option("--t-range", t_range, "Synthetic temperature grid lo:hi:n, K")->capture_default_str();
        app->add_option("--p-range", p_range, "Synthetic pressure grid lo:hi:n with unit")->capture_default_str();
        app->add_option("--points", points, "Subsample the synthetic set to this many records (0 keeps all)")
            ->capture_default_str();
        app->add_option("--noise", noise, "Relative Gaussian noise on the targets")->capture_default_str();
        app->add_option(seed_flag, seed, "Seed for subsampling and noise")->capture_default_str();
    }

    std::string describe() const { return data.empty() ? "synthetic " + mixture.components : data; }

    Dataset load() const
    {
        Dataset ds;
        if (!data.empty()) {
            ds = load_csv_file(data);
        } else {
            const auto cs = mixture.resolve();
            mixture.require_binary(cs, "synthetic generation");
            SyntheticSpec spec;
            spec.pairs.push_back({cs[0], cs[1], mixture.k12});
            spec.t_grid = parse_range(t_range, true, 1.0, "temperature range").values();
            spec.p_grid = parse_pressure_range(p_range, true).values();
            ds = generate_synthetic(spec).dataset;
            if (points > 0 && points < ds.size())
                ds = subsample(ds, static_cast<double>(points) / static_cast<double>(ds.size()), seed);
        }
        return noise > 0.0 ? add_noise(ds, noise, seed) : ds;
    }
};

struct TrainOptions {
    std::size_t layers = 5;
    std::size_t width = 100;
    std::string activation = "elu";
    bool batch_norm = false;
    nn::TrainConfig cfg = [] {
        nn::TrainConfig c;
        return c;
    }();
    double dropout_keep = 0.8;

    void add(CLI::App* app, bool with_network)
    {
        if (with_network) {
            app->add_option("--layers", layers, "Hidden layers")->capture_default_str();
            app->add_option("--width", width, "Nodes per hidden layer")->capture_default_str();
            app->add_option("--activation", activation, "Hidden activation")->capture_default_str();
            app->add_flag("--batch-norm", batch_norm, "Batch normalization on hidden layers");
        }
        app->add_option("--dropout-keep", dropout_keep, "Dropout keep probability")->capture_default_str();
        app->add_option("--lr", cfg.learning_rate, "Adam learning rate")->capture_default_str();
        app->add_option("--weight-decay", cfg.weight_decay, "L2 weight decay coefficient")->capture_default_str();
        app->add_option("--batch-size", cfg.batch_size, "Mini-batch size")->capture_default_str();
        app->add_option("--steps", cfg.max_steps, "Adam steps")->capture_default_str();
        app->add_option("--lr-decay", cfg.lr_decay, "Learning-rate factor per epoch")->capture_default_str();
        app->add_option("--weight-average", cfg.weight_average,
                        "Per-step decay of the weight moving average (0 disables)")
            ->capture_default_str();
        app->add_option("--val-fraction", cfg.validation_fraction, "Validation share of the data")
            ->capture_default_str();
        app->add_option("--seed", cfg.seed, "Seed for initialization, shuffling and dropout")->capture_default_str();
    }

    nn::Architecture architecture() const
    {
        return nn::Architecture::uniform(layers, width, nn::parse_activation(activation), dropout_keep, batch_norm);
    }
};

// ---------------------------------------------------------------------------
// Output helpers

class Output {
public:
    explicit Output(const std::string& path)
    {
        if (path.empty() || path == "-")
            return;
        file_ = std::make_unique<std::ofstream>(path);
        if (!*file_)
            throw IoError("cannot open " + path + " for writing");
        path_ = path;
    }

    std::ostream& stream() { return file_ ? *file_ : std::cout; }

    void close()
    {
        if (!file_)
            return;
        file_->close();
        if (!*file_)
            throw IoError("failed writing " + path_);
    }

private:
    std::unique_ptr<std::ofstream> file_;
    std::string path_;
};

void write_json_file(const json& j, const std::string& path)
{
    Output out(path);
    out.stream() << j.dump(2) << '\n';
    out.close();
}

std::string join(const std::vector<double>& v, int precision = 10)
{
    std::ostringstream os;
    os.precision(precision);
    for (std::size_t i = 0; i < v.size(); ++i)
        os << (i ? " " : "") << v[i];
    return os.str();
}

std::string names_of(const Components& cs)
{
    std::string s;
    for (const auto& c : cs)
        s += (s.empty() ? "" : ",") + c.name();
    return s;
}

json flash_json(const FlashResult& r)
{
    auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
    return {{"method", to_string(r.method)},
            {"state", to_string(r.state())},
            {"converged", r.converged},
            {"iterations", r.iterations},
            {"beta", r.beta.beta},
            {"K", r.k},
            {"x", r.x},
            {"y", r.y},
            {"z_liq", num(r.z_liq)},
            {"z_vap", num(r.z_vap)},
            {"residual", num(r.residual)},
            {"message", r.message}};
}

// ---------------------------------------------------------------------------
// flash

struct FlashOptions {
    MixtureOptions mixture;
    std::string p;
    std::string z = "0.5,0.5";
    std::string method = "ssm";
    double eps = 1e-6;
    int max_iter = 1000;
    double seed_eps = 1e-2;
    bool json_out = false;
};

int cmd_flash(const FlashOptions& o)
{
    const auto cs = o.mixture.resolve();
    FlashInput in(cs, parse_numbers(o.z, "composition"), o.mixture.t, parse_pressure(o.p), o.mixture.kij(cs.size()));
    in.validate();
    if (o.method != "ssm" && o.method != "newton")
        throw UsageError("method must be ssm or newton");
    const FlashResult r =
        o.method == "ssm" ? ssm_flash(in, o.eps, o.max_iter) : seeded_newton_flash(in, o.eps, o.seed_eps);

    json j{{"command", "flash"},
           {"components", names_of(cs)},
           {"T_K", in.t},
           {"p_bar", pa_to_bar(in.p)},
           {"z", in.z},
           {"eps", o.eps},
           {"result", flash_json(r)}};
    if (!r.converged) {
        j["error"] = "not converged";
        std::cout << j.dump(2) << '\n';
        return exit_nonconvergence;
    }

    std::optional<double> check;
    if (r.two_phase())
        check = equilibrium_error(in, r);
    std::optional<Observables> obs;
    std::string obs_note;
    if (cs.size() == 2) {
        try {
            obs = derived_observables(r, in);
        } catch (const Error& e) {
            obs_note = e.what();
        }
    }

    if (o.json_out) {
        if (check) {
            j["verification"] = {{"equilibrium_error", *check}, {"passed", *check <= o.eps}};
        }
        if (obs) {
            json jo;
            const auto v = obs->values();
            for (std::size_t i = 0; i < v.size(); ++i)
                jo[std::string(observable_names[i])] = v[i];
            j["observables"] = jo;
        } else if (!obs_note.empty()) {
            j["observables_error"] = obs_note;
        }
        std::cout << j.dump(2) << '\n';
        return exit_ok;
    }

    auto& os = std::cout;
    os << "# vle flash method=" << o.method << " eps=" << o.eps << '\n';
    os << "components   " << names_of(cs) << '\n';
    os << "T            " << in.t << " K\n";
    os << "p            " << pa_to_bar(in.p) << " bar\n";
    os << "z            " << join(in.z) << '\n';
    os << "state        " << to_string(r.state()) << '\n';
    if (!r.two_phase())
        os << "note         single phase at these conditions; K-values are those of the incipient phase\n";
    os << "beta         " << std::setprecision(12) << r.beta.beta << '\n';
    os << "K            " << join(r.k) << '\n';
    os << "x            " << join(r.x) << '\n';
    os << "y            " << join(r.y) << '\n';
    os << "Z liquid     " << r.z_liq << '\n';
    os << "Z vapor      " << r.z_vap << '\n';
    os << "iterations   " << r.iterations << '\n';
    if (check)
        os << "equilibrium  max |fV/fL - 1| = " << *check << (*check <= o.eps ? " (verified)" : " (NOT verified)")
           << '\n';
    if (obs) {
        const auto v = obs->values();
        for (std::size_t i = 0; i < v.size(); ++i)
            os << std::left << std::setw(13) << observable_names[i] << v[i] << '\n';
    } else if (!obs_note.empty()) {
        os << "observables  unavailable: " << obs_note << '\n';
    }
    return exit_ok;
}

// ---------------------------------------------------------------------------
// sweep

struct SweepOptions {
    MixtureOptions mixture;
    std::string p_range;
    std::string z;
    std::string methods = "auto";
    std::string surrogate;
    std::string model;
    std::string reference;
    double eps = 1e-6;
    std::string out;
};

std::vector<std::string> parse_methods(const std::string& s, bool has_surrogate, bool has_model)
{
    static const std::vector<std::string> known{"ssm", "newton", "sparse_grid", "deep_learning"};
    std::vector<std::string> m;
    if (s == "auto" || s == "all") {
        m = {"ssm", "newton"};
        if (has_surrogate || s == "all")
            m.push_back("sparse_grid");
        if (has_model || s == "all")
            m.push_back("deep_learning");
    } else {
        m = split(s, ',');
    }
    for (const auto& name : m)
        if (std::find(known.begin(), known.end(), name) == known.end())
            throw UsageError("unknown method '" + name + "' (ssm, newton, sparse_grid, deep_learning)");
    return m;
}

int cmd_sweep(const SweepOptions& o)
{
    const auto cs = o.mixture.resolve();
    o.mixture.require_binary(cs, "sweep");
    const auto kij = o.mixture.kij(2);
    const auto pressures = parse_pressure_range(o.p_range, true).values();
    const auto methods = parse_methods(o.methods, !o.surrogate.empty(), !o.model.empty());
    auto uses = [&](const char* m) { return std::find(methods.begin(), methods.end(), m) != methods.end(); };

    std::optional<Surrogate> sur;
    if (uses("sparse_grid")) {
        if (o.surrogate.empty())
            throw UsageError("sparse_grid needs --surrogate");
        sur = load_surrogate(o.surrogate);
    }
    std::optional<nn::FrozenModel> net;
    if (uses("deep_learning")) {
        if (o.model.empty())
            throw UsageError("deep_learning needs --model");
        net = nn::freeze(nn::load_model(o.model));
    }
    std::optional<Dataset> ref;
    if (!o.reference.empty())
        ref = load_csv_file(o.reference);
    std::optional<double> z_fixed;
    if (!o.z.empty()) {
        z_fixed = to_number(o.z, "z1");
        if (!(*z_fixed > 0.0 && *z_fixed < 1.0))
            throw UsageError("z1 must be in (0, 1)");
    }

    struct Row {
        double z1 = std::numeric_limits<double>::quiet_NaN();
        std::vector<std::optional<std::array<double, 2>>> xy;
        std::vector<std::string> failures;
    };
    std::vector<Row> rows(pressures.size());
    parallel_for(
        pressures.size(),
        [&](std::size_t i) {
            Row& row = rows[i];
            const double p = pressures[i];
            row.xy.assign(methods.size(), std::nullopt);
            if (z_fixed) {
                row.z1 = *z_fixed;
            } else {
                const auto tl = find_tie_line(cs, kij, o.mixture.t, p);
                if (!tl) {
                    row.failures.push_back("no_two_phase");
                    return;
                }
                row.z1 = 0.5 * (tl->x[0] + tl->y[0]);
            }
            const FlashInput in(cs, {row.z1, 1.0 - row.z1}, o.mixture.t, p, kij);
            for (std::size_t m = 0; m < methods.size(); ++m) {
                const auto& name = methods[m];
                try {
                    if (name == "ssm" || name == "newton") {
                        const auto r = name == "ssm" ? ssm_flash(in, o.eps) : seeded_newton_flash(in, o.eps);
                        if (!r.converged)
                            row.failures.push_back(name + "(not_converged)");
                        else if (!r.two_phase())
                            row.failures.push_back(name + "(" + to_string(r.state()) + ")");
                        else
                            row.xy[m] = std::array<double, 2>{r.x[0], r.y[0]};
                    } else if (name == "sparse_grid") {
                        const auto v = sur->evaluate(p, row.z1);
                        const auto& names = sur->names();
                        const auto ix = std::find(names.begin(), names.end(), "xW1") - names.begin();
                        const auto iy = std::find(names.begin(), names.end(), "xN1") - names.begin();
                        row.xy[m] = std::array<double, 2>{v[static_cast<std::size_t>(ix)], v[static_cast<std::size_t>(iy)]};
                    } else {
                        nn::Matrix x(8, 1);
                        const auto f = VleRecord::from(cs[0], cs[1], o.mixture.t, p, 0.0, 0.0).features();
                        for (int k = 0; k < 8; ++k)
                            x(k, 0) = f[static_cast<std::size_t>(k)];
                        const auto y = nn::predict(*net, x);
                        row.xy[m] = std::array<double, 2>{y(0, 0), y(1, 0)};
                    }
                } catch (const Error& e) {
                    row.failures.push_back(name + "(" + (dynamic_cast<const DomainError*>(&e) ? "outside_domain" : "error") + ")");
                }
            }
        },
        g_threads);

    Output out(o.out);
    auto& os = out.stream();
    os << "# vle sweep components=" << names_of(cs) << " T_K=" << o.mixture.t << " k12=" << o.mixture.k12
       << " eps=" << o.eps << " z1=" << (z_fixed ? std::to_string(*z_fixed) : "tie_line_midpoint") << '\n';
    os << "p_bar,z1";
    for (const auto& m : methods)
        os << ',' << m << "_x1," << m << "_y1";
    if (ref)
        os << ",ref_x1,ref_y1";
    os << ",failures\n";
    os.precision(12);
    for (std::size_t i = 0; i < pressures.size(); ++i) {
        const auto& row = rows[i];
        os << pa_to_bar(pressures[i]) << ',';
        if (std::isfinite(row.z1))
            os << row.z1;
        for (const auto& xy : row.xy.empty() ? std::vector<std::optional<std::array<double, 2>>>(methods.size())
                                             : row.xy) {
            os << ',';
            if (xy)
                os << (*xy)[0];
            os << ',';
            if (xy)
                os << (*xy)[1];
        }
        if (ref) {
            // Closest record at this temperature within 0.5% in pressure.
            const VleRecord* best = nullptr;
            const double pb = pa_to_bar(pressures[i]);
            for (const auto& r : ref->records)
                if (std::abs(r.t - o.mixture.t) < 0.05 && std::abs(r.p - pb) <= 5e-3 * pb &&
                    (!best || std::abs(r.p - pb) < std::abs(best->p - pb)))
                    best = &r;
            os << ',';
            if (best)
                os << best->x1;
            os << ',';
            if (best)
                os << best->y1;
        }
        os << ',';
        for (std::size_t f = 0; f < row.failures.size(); ++f)
            os << (f ? ";" : "") << row.failures[f];
        os << '\n';
    }
    out.close();
    return exit_ok;
}

// ---------------------------------------------------------------------------
// surrogate build | eval

struct SurrogateBuildOptions {
    MixtureOptions mixture;
    std::string p_range = "6:77bar";
    std::string z_range = "0.05:0.95";
    SurrogateConfig cfg;
    std::string out;
    std::string manifest;
    bool quiet = false;
};

SurrogateDomain make_domain(const MixtureOptions& mix, const Components& cs, const Range& p, const Range& z)
{
    SurrogateDomain d;
    d.p_min = p.lo;
    d.p_max = p.hi;
    d.z1_min = z.lo;
    d.z1_max = z.hi;
    d.t = mix.t;
    d.components = cs;
    d.k12 = mix.k12;
    return d;
}

json build_manifest(const Surrogate& s, const SurrogateConfig& cfg)
{
    const auto& st = s.stats();
    const auto& d = s.domain();
    return {{"command", "surrogate build"},
            {"components", names_of(d.components)},
            {"T_K", d.t},
            {"k12", d.k12},
            {"p_range_bar", {pa_to_bar(d.p_min), pa_to_bar(d.p_max)}},
            {"z1_range", {d.z1_min, d.z1_max}},
            {"refine_tol", cfg.refine_tol},
            {"max_points", cfg.max_points},
            {"initial_level", cfg.initial_level},
            {"nodes", s.size()},
            {"observables", s.names()},
            {"tabulated", s.tabulated()},
            {"table_bytes", s.table_bytes()},
            {"stats", to_json(st)},
            {"oracle_calls_below_full_grid", static_cast<double>(st.oracle_calls) < st.full_grid_points}};
}

Surrogate build_with_progress(const SurrogateDomain& d, SurrogateConfig cfg, bool quiet)
{
    cfg.threads = g_threads;
    if (!quiet)
        cfg.progress = [gen = std::size_t{0}](std::size_t nodes, double surplus) mutable {
            std::cerr << "generation " << gen++ << ": nodes " << nodes << ", max surplus " << surplus << '\n';
        };
    return build_surrogate(d, FlashObservableOracle(d), cfg);
}

int cmd_surrogate_build(const SurrogateBuildOptions& o)
{
    const auto cs = o.mixture.resolve();
    o.mixture.require_binary(cs, "surrogate");
    const auto d = make_domain(o.mixture, cs, parse_pressure_range(o.p_range, false),
                               parse_range(o.z_range, false, 1.0, "z1 range"));
    const auto s = build_with_progress(d, o.cfg, o.quiet);
    save_surrogate(s, o.out);
    const auto manifest = build_manifest(s, o.cfg);
    write_json_file(manifest, o.manifest.empty() ? o.out + ".json" : o.manifest);
    std::cout << manifest.dump(2) << '\n';
    return exit_ok;
}

struct SurrogateEvalOptions {
    std::string surrogate;
    std::string p;
    double z1 = 0.5;
    bool json_out = false;
};

int cmd_surrogate_eval(const SurrogateEvalOptions& o)
{
    const auto s = load_surrogate(o.surrogate);
    const double p = parse_pressure(o.p);
    const auto v = s.evaluate(p, o.z1);
    if (o.json_out) {
        json j{{"p_bar", pa_to_bar(p)}, {"z1", o.z1}};
        for (std::size_t i = 0; i < v.size(); ++i)
            j["observables"][s.names()[i]] = v[i];
        std::cout << j.dump(2) << '\n';
        return exit_ok;
    }
    std::cout << "# vle surrogate eval p_bar=" << pa_to_bar(p) << " z1=" << o.z1 << '\n' << std::setprecision(12);
    for (std::size_t i = 0; i < v.size(); ++i)
        std::cout << std::left << std::setw(9) << s.names()[i] << v[i] << '\n';
    return exit_ok;
}

// ---------------------------------------------------------------------------
// generate

struct GenerateOptions {
    DataOptions data;
    double eps = 1e-10;
    std::string out;
    std::string manifest;
};

int cmd_generate(GenerateOptions o)
{
    const auto cs = o.data.mixture.resolve();
    o.data.mixture.require_binary(cs, "generate");
    SyntheticSpec spec;
    spec.pairs.push_back({cs[0], cs[1], o.data.mixture.k12});
    spec.t_grid = parse_range(o.data.t_range, true, 1.0, "temperature range").values();
    spec.p_grid = parse_pressure_range(o.data.p_range, true).values();
    spec.eps = o.eps;
    auto res = generate_synthetic(spec);
    Dataset ds = res.dataset;
    if (o.data.points > 0 && o.data.points < ds.size())
        ds = subsample(ds, static_cast<double>(o.data.points) / static_cast<double>(ds.size()), o.data.seed);
    if (o.data.noise > 0.0)
        ds = add_noise(ds, o.data.noise, o.data.seed);
    res.manifest["seed"] = o.data.seed;
    res.manifest["noise_sigma"] = o.data.noise;
    res.manifest["written"] = ds.size();

    Output out(o.out);
    out.stream() << "# vle generate seed=" << o.data.seed << " noise=" << o.data.noise << " records=" << ds.size()
                 << " skipped_single_phase=" << res.skipped << '\n';
    save_csv(ds, out.stream());
    out.close();
    if (!o.manifest.empty())
        write_json_file(res.manifest, o.manifest);
    std::cerr << "wrote " << ds.size() << " records (" << res.skipped << " of " << res.attempted
              << " grid points single-phase)\n";
    return exit_ok;
}

// ---------------------------------------------------------------------------
// train | predict

struct TrainCommandOptions {
    DataOptions data;
    TrainOptions train;
    std::string out;
    std::string curve;
};

int cmd_train(const TrainCommandOptions& o)
{
    const auto ds = o.data.load();
    const auto s = split(ds, o.train.cfg.validation_fraction, o.train.cfg.seed);
    const auto arch = o.train.architecture();
    std::cout << "# vle train seed=" << o.train.cfg.seed << " data_seed=" << o.data.seed << " data=" << o.data.describe()
              << " records=" << ds.size() << " train=" << s.train.size() << " validation=" << s.validation.size()
              << '\n';
    const auto t0 = std::chrono::steady_clock::now();
    const auto res = nn::train(s.train.features(), s.train.targets(), s.validation.features(), s.validation.targets(),
                               arch, o.train.cfg);
    const double seconds = detail::seconds_since(t0);
    const double mre = nn::mean_relative_error(nn::predict(res.model, s.validation.features()), s.validation.targets());

    json meta{{"seed", o.train.cfg.seed},
              {"data", o.data.describe()},
              {"data_seed", o.data.seed},
              {"records", ds.size()},
              {"train_config", nn::train_config_json(o.train.cfg)},
              {"steps", res.steps},
              {"best_step", res.best_step},
              {"best_val_loss", res.best_val_loss},
              {"validation_mre", mre},
              {"seconds", seconds}};
    nn::save_model(res.model, o.out, meta);
    if (!o.curve.empty()) {
        Output c(o.curve);
        c.stream() << "# vle train seed=" << o.train.cfg.seed << '\n';
        res.curve.write_csv(c.stream());
        c.close();
    }
    std::cout << "steps " << res.steps << ", best step " << res.best_step << ", best validation loss "
              << res.best_val_loss << ", validation MRE " << mre << ", " << seconds << " s\n";
    return exit_ok;
}

struct PredictOptions {
    std::string model;
    std::string data;
    std::string out;
};

int cmd_predict(const PredictOptions& o)
{
    const auto frozen = nn::freeze(nn::load_model(o.model));
    Dataset ds = load_csv_file(o.data);
    const auto y = nn::predict(frozen, ds.features());
    const double mre = nn::mean_relative_error(y, ds.targets());
    for (std::size_t j = 0; j < ds.size(); ++j) {
        ds.records[j].x1 = y(0, static_cast<Eigen::Index>(j));
        ds.records[j].y1 = y(1, static_cast<Eigen::Index>(j));
    }
    Output out(o.out);
    out.stream() << "# vle predict model=" << o.model << " records=" << ds.size() << " mre_vs_input=" << mre << '\n';
    save_csv(ds, out.stream());
    out.close();
    std::cerr << "MRE against the input targets: " << mre << '\n';
    return exit_ok;
}

// ---------------------------------------------------------------------------
// experiment

struct ExperimentOptions {
    DataOptions data;
    TrainOptions train;
    std::string factor = "all";
    std::string levels;
    std::size_t repeats = 1;
    std::string out;
};

void override_levels(FactorGrid& g, const std::string& levels)
{
    if (levels.empty())
        return;
    const auto items = split(levels, ',');
    switch (g.factor) {
    case Factor::data_ratio:
        g.ratios.clear();
        for (const auto& s : items)
            g.ratios.push_back(to_number(s, "ratio"));
        break;
    case Factor::activation:
        g.activations.clear();
        for (const auto& s : items)
            g.activations.push_back(nn::parse_activation(s));
        break;
    case Factor::depth:
    case Factor::width: {
        auto& v = g.factor == Factor::depth ? g.depths : g.widths;
        v.clear();
        for (const auto& s : items) {
            const double n = to_number(s, "level");
            if (!(n >= 1.0) || n != std::floor(n))
                throw UsageError("depth and width levels must be positive whole numbers");
            v.push_back(static_cast<std::size_t>(n));
        }
        break;
    }
    }
}

int cmd_experiment(const ExperimentOptions& o)
{
    std::vector<Factor> factors;
    if (o.factor == "all")
        factors = {Factor::data_ratio, Factor::activation, Factor::depth, Factor::width};
    else
        factors = {parse_factor(o.factor)};
    if (!o.levels.empty() && factors.size() != 1)
        throw UsageError("--levels needs a single --factor");
    const auto ds = o.data.load();
    const auto s = split(ds, o.train.cfg.validation_fraction, o.train.cfg.seed);

    Output out(o.out);
    out.stream() << "# vle experiment seed=" << o.train.cfg.seed << " data_seed=" << o.data.seed
                 << " data=" << o.data.describe() << " train=" << s.train.size() << " validation=" << s.validation.size()
                 << " steps=" << o.train.cfg.max_steps << " repeats=" << o.repeats << '\n';
    std::vector<ExperimentCell> all;
    for (Factor f : factors) {
        ExperimentConfig cfg;
        cfg.grid = FactorGrid::published(f);
        cfg.grid.base.dropout_keep = o.train.dropout_keep;
        override_levels(cfg.grid, o.levels);
        cfg.train = o.train.cfg;
        cfg.repeats = o.repeats;
        auto cells = run_experiment(s, cfg, [](const ExperimentCell& c) {
            std::cerr << to_string(c.factor) << ' ' << c.level << ": MRE " << c.mre << " (" << c.seconds << " s, "
                      << c.status << ")\n";
        });
        all.insert(all.end(), cells.begin(), cells.end());
    }
    write_experiment_csv(all, out.stream());
    out.close();
    return exit_ok;
}

// ---------------------------------------------------------------------------
// bench

struct BenchOptions {
    MixtureOptions mixture;
    std::string p_range = "6:77bar";
    std::size_t queries = 1000;
    std::uint64_t seed = 2024;
    double eps = 1e-6;
    std::size_t repeats = 5;
    std::string methods = "all";
    std::string surrogate;
    std::string model;
    bool auto_build = false;
    double refine_tol = 1e-3;
    std::size_t max_points = 20000;
    std::string out_json;
    std::string out_csv;
};

int cmd_bench(const BenchOptions& o)
{
    if (o.queries == 0)
        throw UsageError("--queries must be at least 1");
    const auto cs = o.mixture.resolve();
    o.mixture.require_binary(cs, "bench");
    const auto methods = parse_methods(o.methods, true, true);
    auto uses = [&](const char* m) { return std::find(methods.begin(), methods.end(), m) != methods.end(); };
    if (!uses("ssm"))
        throw UsageError("the benchmark always includes ssm, the baseline for speedups");

    BenchConfig cfg;
    cfg.components = cs;
    cfg.k12 = o.mixture.k12;
    cfg.t = o.mixture.t;
    const auto pr = parse_pressure_range(o.p_range, false);
    cfg.p_min = pr.lo;
    cfg.p_max = pr.hi;
    cfg.queries = o.queries;
    cfg.seed = o.seed;
    cfg.eps = o.eps;
    cfg.repeats = o.repeats;
    cfg.newton = uses("newton");
    cfg.threads = g_threads;

    std::optional<Surrogate> sur;
    double build_seconds = 0.0;
    if (uses("sparse_grid")) {
        if (!o.surrogate.empty()) {
            sur = load_surrogate(o.surrogate);
        } else if (o.auto_build) {
            SurrogateConfig sc;
            sc.refine_tol = o.refine_tol;
            sc.max_points = o.max_points;
            const auto t0 = std::chrono::steady_clock::now();
            sur = build_with_progress(make_domain(o.mixture, cs, pr, Range{0.05, 0.95, 0}), sc, true);
            build_seconds = detail::seconds_since(t0);
        } else {
            throw UsageError("sparse_grid needs --surrogate or --auto-build");
        }
    }
    std::optional<nn::Model> model;
    double train_seconds = 0.0;
    BenchModelConfig mc;
    if (uses("deep_learning")) {
        if (!o.model.empty()) {
            model = nn::load_model(o.model);
        } else if (o.auto_build) {
            const auto t0 = std::chrono::steady_clock::now();
            model = train_bench_model(cfg, mc).model;
            train_seconds = detail::seconds_since(t0);
        } else {
            throw UsageError("deep_learning needs --model or --auto-build");
        }
    }

    auto rep = run_bench(cfg, sur ? &*sur : nullptr, model ? &*model : nullptr);
    rep.surrogate_build_seconds = build_seconds;
    rep.model_train_seconds = train_seconds;
    auto j = to_json(rep);
    if (model && o.model.empty())
        j["model"] = {{"auto_built", true}, {"seed", mc.train.seed}, {"architecture", nn::architecture_json(mc.arch)}};

    std::cout << "# vle bench seed=" << cfg.seed << " queries=" << cfg.queries << " components=" << names_of(cs)
              << " T_K=" << cfg.t << " timed_passes=" << cfg.repeats << " threads=" << cfg.threads << '\n';
    std::cout << std::left << std::setw(15) << "method" << std::setw(14) << "seconds" << std::setw(14) << "median"
              << std::setw(12) << "speedup" << std::setw(14) << "mre" << "failures\n";
    for (const auto& m : rep.methods)
        std::cout << std::left << std::setw(15) << m.name << std::setw(14) << m.seconds << std::setw(14)
                  << m.median_seconds << std::setw(12) << m.speedup << std::setw(14) << m.mre << m.failures << '\n';
    if (sur)
        std::cout << "surrogate build " << build_seconds << " s (excluded)\n";
    if (model && o.model.empty())
        std::cout << "model training " << train_seconds << " s (excluded)\n";

    if (!o.out_json.empty())
        write_json_file(j, o.out_json);
    if (!o.out_csv.empty()) {
        Output c(o.out_csv);
        c.stream() << "# vle bench seed=" << cfg.seed << " queries=" << cfg.queries << '\n';
        write_bench_csv(rep, c.stream());
        c.close();
    }
    return exit_ok;
}

// ---------------------------------------------------------------------------

int cmd_components(const std::string& file)
{
    auto db = ComponentDatabase::builtin();
    if (!file.empty())
        db.load_csv_file(file);
    std::cout << "name,tc_K,pc_bar,omega,molar_mass_kg_mol\n";
    for (const auto& c : db.all()) {
        std::cout << c.name() << ',' << c.tc() << ',' << pa_to_bar(c.pc()) << ',' << c.omega() << ',';
        if (c.molar_mass_opt())
            std::cout << *c.molar_mass_opt();
        std::cout << '\n';
    }
    return exit_ok;
}

int run_guarded(const std::function<int()>& fn)
{
    try {
        return fn();
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return exit_usage;
    } catch (const IoError& e) {
        std::cerr << "I/O error: " << e.what() << '\n';
        return exit_io;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return exit_nonconvergence;
    } catch (const DomainError& e) {
        std::cerr << "domain error: " << e.what() << '\n';
        return exit_usage;
    } catch (const InputError& e) {
        std::cerr << "input error: " << e.what() << '\n';
        return exit_usage;
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return exit_usage;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_usage;
    }
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Peng-Robinson flash, sparse-grid surrogates and neural-network VLE models"};
    app.config_formatter(std::make_shared<JsonConfig>());
    app.set_config("--config", "", "JSON file mirroring the command-line flags");
    app.add_option("--threads", g_threads, "Worker threads (default from VLE_THREADS, else 1)");
    app.require_subcommand(1);
    std::function<int()> run;

    FlashOptions flash;
    auto* c_flash = app.add_subcommand("flash", "Single isothermal flash");
    flash.mixture.add(c_flash);
    c_flash->add_option("--p", flash.p, "Pressure with unit, e.g. 50bar")->required();
    c_flash->add_option("--z", flash.z, "Feed mole fractions")->capture_default_str();
    c_flash->add_option("--method", flash.method, "ssm or newton (seeded from a loose SSM pass)")
        ->capture_default_str();
    c_flash->add_option("--eps", flash.eps, "Convergence tolerance on max |fV/fL - 1|")->capture_default_str();
    c_flash->add_option("--max-iter", flash.max_iter, "SSM iteration cap")->capture_default_str();
    c_flash->add_option("--seed-eps", flash.seed_eps, "Tolerance of the SSM pass seeding Newton")
        ->capture_default_str();
    c_flash->add_flag("--json", flash.json_out, "Print JSON");
    c_flash->callback([&] { run = [&] { return cmd_flash(flash); }; });

    SweepOptions sweep;
    auto* c_sweep = app.add_subcommand("sweep", "Tie-line compositions over a pressure range, per method");
    sweep.mixture.add(c_sweep);
    c_sweep->add_option("--p-range", sweep.p_range, "lo:hi:n with unit, e.g. 6:77:11bar")->required();
    c_sweep->add_option("--z", sweep.z, "Feed z1 (default: midpoint of the tie line at each pressure)");
    c_sweep->add_option("--methods", sweep.methods, "auto, all, or a list of ssm,newton,sparse_grid,deep_learning")
        ->capture_default_str();
    c_sweep->add_option("--surrogate", sweep.surrogate, "Surrogate file");
    c_sweep->add_option("--model", sweep.model, "Model file");
    c_sweep->add_option("--reference", sweep.reference, "Experimental CSV overlaid as ref_x1, ref_y1");
    c_sweep->add_option("--eps", sweep.eps, "Flash tolerance")->capture_default_str();
    c_sweep->add_option("--out", sweep.out, "Output CSV (default stdout)");
    c_sweep->callback([&] { run = [&] { return cmd_sweep(sweep); }; });

    auto* c_sur = app.add_subcommand("surrogate", "Sparse-grid surrogate of the flash observables");
    c_sur->require_subcommand(1);
    SurrogateBuildOptions sbuild;
    auto* c_build = c_sur->add_subcommand("build", "Build and save a surrogate");
    sbuild.mixture.add(c_build);
    c_build->add_option("--p-range", sbuild.p_range, "lo:hi with unit")->capture_default_str();
    c_build->add_option("--z-range", sbuild.z_range, "z1 lo:hi")->capture_default_str();
    c_build->add_option("--refine-tol", sbuild.cfg.refine_tol, "Normalized surplus refinement threshold")
        ->capture_default_str();
    c_build->add_option("--max-points", sbuild.cfg.max_points, "Node budget")->capture_default_str();
    c_build->add_option("--initial-level", sbuild.cfg.initial_level, "Level of the starting regular grid")
        ->capture_default_str();
    c_build->add_option("--out", sbuild.out, "Surrogate file")->required();
    c_build->add_option("--manifest", sbuild.manifest, "Manifest JSON (default <out>.json)");
    c_build->add_flag("--quiet", sbuild.quiet, "No progress lines");
    c_build->callback([&] { run = [&] { return cmd_surrogate_build(sbuild); }; });
    SurrogateEvalOptions seval;
    auto* c_eval = c_sur->add_subcommand("eval", "Evaluate a saved surrogate");
    c_eval->add_option("--surrogate", seval.surrogate, "Surrogate file")->required();
    c_eval->add_option("--p", seval.p, "Pressure with unit")->required();
    c_eval->add_option("--z", seval.z1, "Feed z1")->capture_default_str();
    c_eval->add_flag("--json", seval.json_out, "Print JSON");
    c_eval->callback([&] { run = [&] { return cmd_surrogate_eval(seval); }; });

    GenerateOptions gen;
    auto* c_gen = app.add_subcommand("generate", "SSM-labelled synthetic dataset");
    gen.data.points = 0;
    gen.data.add(c_gen, "--seed,--data-seed");
    c_gen->add_option("--eps", gen.eps, "Flash tolerance of the labels")->capture_default_str();
    c_gen->add_option("--out", gen.out, "Output CSV (default stdout)");
    c_gen->add_option("--manifest", gen.manifest, "Manifest JSON");
    c_gen->callback([&] {
        if (!gen.data.data.empty())
            throw CLI::ValidationError("--data", "generate writes data; it does not read it");
        run = [&] { return cmd_generate(gen); };
    });

    TrainCommandOptions train;
    auto* c_train = app.add_subcommand("train", "Train a network on a dataset");
    train.data.add(c_train);
    train.train.add(c_train, true);
    c_train->add_option("--out", train.out, "Model file")->required();
    c_train->add_option("--curve", train.curve, "Loss curve CSV");
    c_train->callback([&] { run = [&] { return cmd_train(train); }; });

    PredictOptions predict;
    auto* c_pred = app.add_subcommand("predict", "Predict x1, y1 for the records of a dataset CSV");
    c_pred->add_option("--model", predict.model, "Model file")->required();
    c_pred->add_option("--data", predict.data, "Dataset CSV")->required();
    c_pred->add_option("--out", predict.out, "Output CSV (default stdout)");
    c_pred->callback([&] { run = [&] { return cmd_predict(predict); }; });

    ExperimentOptions exper;
    auto* c_exp = app.add_subcommand("experiment", "Factor study over the published grids");
    exper.data.add(c_exp);
    exper.train.add(c_exp, false);
    c_exp->add_option("--factor", exper.factor, "data_ratio, activation, depth, width or all")->capture_default_str();
    c_exp->add_option("--levels", exper.levels, "Comma list replacing the grid of a single factor");
    c_exp->add_option("--repeats", exper.repeats, "Seeds per level")->capture_default_str();
    c_exp->add_option("--out", exper.out, "Output CSV (default stdout)");
    c_exp->callback([&] { run = [&] { return cmd_experiment(exper); }; });

    BenchOptions bench;
    auto* c_bench = app.add_subcommand("bench", "SSM, Newton, surrogate and network on one query set");
    bench.mixture.add(c_bench);
    c_bench->add_option("--p-range", bench.p_range, "lo:hi with unit")->capture_default_str();
    c_bench->add_option("--queries", bench.queries, "Query count")->capture_default_str();
    c_bench->add_option("--seed", bench.seed, "Query seed")->capture_default_str();
    c_bench->add_option("--eps", bench.eps, "SSM and Newton tolerance")->capture_default_str();
    c_bench->add_option("--repeats", bench.repeats, "Timed passes per method (fastest reported)")
        ->capture_default_str();
    c_bench->add_option("--methods", bench.methods, "all or a list")->capture_default_str();
    c_bench->add_option("--surrogate", bench.surrogate, "Surrogate file");
    c_bench->add_option("--model", bench.model, "Model file");
    c_bench->add_flag("--auto-build", bench.auto_build, "Build missing surrogate and model (not timed)");
    c_bench->add_option("--refine-tol", bench.refine_tol, "Auto-built surrogate threshold")->capture_default_str();
    c_bench->add_option("--max-points", bench.max_points, "Auto-built surrogate node budget")->capture_default_str();
    c_bench->add_option("--out-json", bench.out_json, "Report JSON");
    c_bench->add_option("--out-csv", bench.out_csv, "Per-query CSV");
    c_bench->callback([&] { run = [&] { return cmd_bench(bench); }; });

    std::string comp_file;
    auto* c_comp = app.add_subcommand("components", "List known components");
    c_comp->add_option("--components-file", comp_file, "Extra component CSV");
    c_comp->callback([&] { run = [&] { return cmd_components(comp_file); }; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::FileError& e) {
        app.exit(e);
        return exit_io;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? exit_ok : exit_usage;
    }
    if (g_threads == 0)
        g_threads = 1;
    return run ? run_guarded(run) : exit_usage;
}
