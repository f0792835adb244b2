// Acceptance run: one PASS/FAIL line per check, exit status 1 if any fail.
// Expect roughly 15 minutes on one core; the network training dominates.

#include "vle/bench.hpp"
#include "vle/experiment.hpp"
#include "vle/flash_oracle.hpp"
#include "vle/observables.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>

using namespace vle;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(int id, const std::string& title, bool pass, const std::string& detail)
{
    std::printf("%s  %2d  %s: %s\n", pass ? "PASS" : "FAIL", id, title.c_str(), detail.c_str());
    std::fflush(stdout);
    if (!pass)
        ++failures;
}

void guarded(int id, const std::string& title, const std::function<void()>& fn)
{
    try {
        fn();
    } catch (const std::exception& e) {
        report(id, title, false, std::string("exception: ") + e.what());
    }
}

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args)
{
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

const ComponentDatabase& db()
{
    static const ComponentDatabase d = ComponentDatabase::builtin();
    return d;
}

Components binary(const char* a, const char* b) { return {db().get(a), db().get(b)}; }

struct Window {
    Components cs;
    double t_lo, t_hi, p_lo, p_hi; // K, bar
};

/// Random feeds strictly inside the two-phase region: (T, p) uniform, z1 in
/// the middle 80% of the tie line there.
std::vector<FlashInput> two_phase_points(const Window& w, std::size_t n, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ut(w.t_lo, w.t_hi), up(w.p_lo, w.p_hi), u01(0.1, 0.9);
    std::vector<FlashInput> out;
    while (out.size() < n) {
        const double t = ut(rng);
        const double p = bar_to_pa(up(rng));
        const auto tl = find_tie_line(w.cs, BinaryInteraction(2), t, p);
        if (!tl)
            continue;
        const double z1 = tl->x[0] + u01(rng) * (tl->y[0] - tl->x[0]);
        out.emplace_back(w.cs, std::vector<double>{z1, 1.0 - z1}, t, p);
    }
    return out;
}

const std::vector<Window>& windows()
{
    static const std::vector<Window> w{{binary("C1", "C3"), 190.0, 360.0, 5.0, 90.0},
                                       {binary("C1", "C7"), 250.0, 520.0, 5.0, 180.0}};
    return w;
}

struct Sample {
    FlashInput in;
    FlashResult r;
};

std::vector<Sample> certificate_sample;

// ---------------------------------------------------------------------------

void equilibrium_certificate()
{
    std::vector<FlashInput> inputs;
    for (std::size_t i = 0; i < windows().size(); ++i) {
        auto pts = two_phase_points(windows()[i], 100, 100 + i);
        inputs.insert(inputs.end(), pts.begin(), pts.end());
    }
    const auto t0 = Clock::now();
    std::size_t converged = 0, verified = 0;
    double worst = 0.0;
    for (const auto& in : inputs) {
        const auto r = ssm_flash(in, 1e-6);
        if (!r.converged)
            continue;
        ++converged;
        const double e = equilibrium_error(in, r);
        worst = std::max(worst, e);
        if (e <= 1e-6)
            ++verified;
        certificate_sample.push_back({in, r});
    }
    const double secs = since(t0);
    report(1, "equilibrium certificate",
           converged == inputs.size() && verified == inputs.size() && secs < 10.0,
           fmt("%zu points, %zu converged, %zu re-verified at 1e-6 (worst %.2e), %.3f s (< 10 s)", inputs.size(),
               converged, verified, worst, secs));
}

void material_balance()
{
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> ut(180.0, 450.0), up(1.0, 120.0), uz(0.0, 1.0);
    std::size_t converged = 0, two_phase = 0;
    double worst = 0.0;
    for (int c = 0; c < 1000; ++c) {
        const auto& cs = windows()[c % 2].cs;
        const double z1 = 0.01 + 0.98 * uz(rng);
        const FlashInput in(cs, {z1, 1.0 - z1}, ut(rng), bar_to_pa(up(rng)));
        const auto r = ssm_flash(in);
        if (!r.converged)
            continue;
        ++converged;
        two_phase += r.two_phase();
        for (std::size_t i = 0; i < 2; ++i)
            worst = std::max(worst, std::abs(in.z[i] - (r.beta.beta * r.y[i] + (1.0 - r.beta.beta) * r.x[i])));
    }
    report(2, "material balance", worst <= 1e-12 && converged > 0,
           fmt("1000 cases, %zu converged (%zu two-phase), max |z - beta y - (1-beta) x| = %.2e (<= 1e-12)",
               converged, two_phase, worst));
}

void cross_method()
{
    auto pts = two_phase_points(windows()[0], 25, 300);
    auto more = two_phase_points(windows()[1], 25, 301);
    pts.insert(pts.end(), more.begin(), more.end());
    std::size_t agree = 0, faster = 0, compared = 0;
    double worst = 0.0;
    for (const auto& in : pts) {
        const auto ref = ssm_flash(in, 1e-10, 100000);
        const auto seed = ssm_flash(in, 1e-2, 1000);
        if (!ref.converged || !seed.two_phase())
            continue;
        const auto newton = newton_flash(in, seed.k, 1e-10);
        const auto ssm_rest = ssm_flash(in, 1e-10, 100000, seed.k);
        ++compared;
        double dk = 0.0;
        for (std::size_t i = 0; i < 2; ++i)
            dk = std::max(dk, std::abs(newton.k[i] - ref.k[i]) / ref.k[i]);
        worst = std::max(worst, dk);
        agree += newton.converged && dk <= 1e-7;
        faster += newton.converged && newton.iterations < ssm_rest.iterations;
    }
    const double share = compared ? static_cast<double>(faster) / static_cast<double>(compared) : 0.0;
    report(3, "cross-method oracle", compared == pts.size() && agree == compared && share >= 0.9,
           fmt("%zu points, K agree to 1e-7 on %zu (worst rel %.2e), Newton fewer iterations in %.0f%% (>= 90%%)",
               compared, agree, worst, 100.0 * share));
}

void cubic_correctness()
{
    std::size_t roots = 0, multi = 0, mismatched = 0;
    double worst = 0.0;
    for (const auto& s : certificate_sample) {
        const PengRobinson eos(s.in.components, s.in.kij, s.in.t);
        const auto x = s.r.x;
        const auto y = s.r.y;
        const auto tl = eos.terms(x, s.in.p);
        const auto tv = eos.terms(y, s.in.p);
        const auto rl = solve_cubic(tl.cap_a, tl.cap_b);
        const auto rv = solve_cubic(tv.cap_a, tv.cap_b);
        for (const auto* r : {&rl, &rv}) {
            const auto& terms = r == &rl ? tl : tv;
            for (double z : r->roots) {
                ++roots;
                worst = std::max(worst, std::abs(cubic_residual(terms.cap_a, terms.cap_b, z)));
            }
        }
        if (rl.physical.size() == 1 && rv.physical.size() == 1)
            continue;
        ++multi;
        // Every physical root pair, including the middle root of three.
        const double beta = s.r.beta.beta;
        double best = std::numeric_limits<double>::infinity();
        RootPair exhaustive{};
        for (double zl : rl.physical)
            for (double zv : rv.physical) {
                double g = 0.0;
                try {
                    g = (1.0 - beta) * phase_gibbs(x, zl, tl, s.in.p) + beta * phase_gibbs(y, zv, tv, s.in.p);
                } catch (const DomainError&) {
                    continue;
                }
                if (g < best) {
                    best = g;
                    exhaustive = {zl, zv};
                }
            }
        const auto chosen = evaluate_phases(eos, x, y, s.in.p, beta).roots;
        if (std::abs(chosen.z_liq - exhaustive.z_liq) > 1e-12 || std::abs(chosen.z_vap - exhaustive.z_vap) > 1e-12)
            ++mismatched;
    }
    report(4, "cubic correctness", worst < 1e-10 && mismatched == 0 && !certificate_sample.empty(),
           fmt("%zu roots, max residual %.2e (< 1e-10); %zu multi-root cases, %zu selection mismatches", roots, worst,
               multi, mismatched));
}

void rachford_rice_analytics()
{
    const std::vector<double> k1{2.0, 0.5}, z1{0.5, 0.5};
    const std::vector<double> k2{3.0, 0.1}, z2{0.4, 0.6};
    const double b1 = solve_beta(k1, z1).beta;
    const double b2 = solve_beta(k2, z2).beta;
    // Bisection oracle on the same residual.
    double lo = 0.0, hi = 1.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        (rr_residual(k2, z2, mid) > 0.0 ? lo : hi) = mid;
    }
    const double oracle = 0.5 * (lo + hi);
    report(5, "Rachford-Rice analytics", std::abs(b1 - 0.5) <= 1e-12 && std::abs(b2 - oracle) <= 1e-12 &&
                                              std::abs(b2 - 0.144444) < 1e-6,
           fmt("beta(2, 0.5) = %.15f; beta(3, 0.1) = %.12f vs bisection %.12f", b1, b2, oracle));
}

SurrogateDomain c1_c3_domain()
{
    SurrogateDomain d;
    d.p_min = bar_to_pa(6.0);
    d.p_max = bar_to_pa(77.0);
    d.z1_min = 0.05;
    d.z1_max = 0.95;
    d.t = 226.0;
    d.components = binary("C1", "C3");
    return d;
}

std::optional<Surrogate> surrogate;

void surrogate_accuracy()
{
    const auto d = c1_c3_domain();
    SurrogateConfig cfg;
    cfg.refine_tol = 1e-3;
    const auto t0 = Clock::now();
    surrogate = build_surrogate(d, FlashObservableOracle(d), cfg);
    const double build = since(t0);
    const FlashObservableOracle oracle(d);
    std::array<double, observable_count> err{};
    std::size_t points = 0;
    for (int i = 0; i < 50; ++i)
        for (int j = 0; j < 50; ++j) {
            const double p = d.p_min + (d.p_max - d.p_min) * i / 49.0;
            const double z = d.z1_min + (d.z1_max - d.z1_min) * j / 49.0;
            const auto in = oracle.input(p, z);
            const auto r = ssm_flash(in, 1e-10, 5000);
            if (!r.converged || !r.two_phase())
                continue;
            ++points;
            const auto ref = derived_observables(r, in).values();
            const auto v = surrogate->evaluate(p, z);
            for (std::size_t k = 0; k < observable_count; ++k)
                err[k] = std::max(err[k], std::abs(v[k] - ref[k]) / std::abs(ref[k]));
        }
    const double e_xw = err[0], e_xn = err[2], e_dw = err[6], e_dn = err[7];
    report(6, "surrogate accuracy",
           e_xw < 0.01 && e_xn < 0.01 && e_dw < 0.02 && e_dn < 0.02 && build < 60.0 && points > 0,
           fmt("%zu nodes (%s), %zu two-phase lattice points; max rel err xW1 %.2e, xN1 %.2e (< 1%%), densiW %.2e, "
               "densiN %.2e (< 2%%); build %.1f s (< 60 s)",
               surrogate->size(),
               surrogate->stats().reached_tolerance ? "tolerance reached" : "stopped by node budget", points, e_xw,
               e_xn, e_dw, e_dn, build));
}

BenchConfig bench_config()
{
    BenchConfig cfg;
    cfg.components = binary("C1", "C3");
    cfg.queries = 1000;
    cfg.threads = 1;
    return cfg;
}

void surrogate_speed()
{
    if (!surrogate)
        throw Error("surrogate was not built");
    auto cfg = bench_config();
    cfg.newton = false;
    const auto rep = run_bench(cfg, &*surrogate, nullptr);
    const auto* ssm = rep.find("ssm");
    const auto* sg = rep.find("sparse_grid");
    report(7, "surrogate speed", sg->speedup >= 100.0 && sg->failures == 0,
           fmt("1000 queries: SSM %.4f s, surrogate %.2e s, speedup %.0fx (>= 100x)", ssm->seconds, sg->seconds,
               sg->speedup));
}

void gradient_check()
{
    using namespace nn;
    const auto arch = Architecture::uniform(3, 10, Activation::tanh);
    Network net = Network::create(arch, 8);
    Rng rng(9);
    std::normal_distribution<double> n01(0.0, 1.0);
    Matrix x(8, 5), y(2, 5);
    for (Eigen::Index i = 0; i < x.size(); ++i)
        x(i) = n01(rng);
    for (Eigen::Index i = 0; i < y.size(); ++i)
        y(i) = n01(rng);
    const double lambda = 1e-3;
    ForwardCache cache;
    forward(net, x, Mode::train, &rng, &cache, false);
    Params g = backprop(net, cache, y, lambda);
    std::vector<double*> pv, gv;
    net.params.for_each_trainable(arch, [&](double* d, std::size_t len) {
        for (std::size_t i = 0; i < len; ++i)
            pv.push_back(d + i);
    });
    g.for_each_trainable(arch, [&](double* d, std::size_t len) {
        for (std::size_t i = 0; i < len; ++i)
            gv.push_back(d + i);
    });
    auto loss = [&] { return loss_with_decay(loss_mse(forward(net, x, Mode::infer), y), net.params, lambda); };
    std::vector<std::size_t> idx(pv.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::shuffle(idx.begin(), idx.end(), rng);
    double worst = 0.0;
    for (std::size_t s = 0; s < 20; ++s) {
        const std::size_t i = idx[s];
        const double keep = *pv[i];
        const double h = 1e-6 * std::max(1.0, std::abs(keep));
        *pv[i] = keep + h;
        const double up = loss();
        *pv[i] = keep - h;
        const double down = loss();
        *pv[i] = keep;
        const double fd = (up - down) / (2.0 * h);
        worst = std::max(worst, std::abs(fd - *gv[i]) / std::max(std::abs(fd), 1e-8));
    }
    report(8, "gradient check", worst < 1e-4,
           fmt("3-layer tanh, 20 of %zu parameters, 5 inputs: max rel diff %.2e (< 1e-4)", pv.size(), worst));
}

Dataset synthetic_c1_c3()
{
    SyntheticSpec spec;
    spec.pairs.push_back({db().get("C1"), db().get("C3"), 0.0});
    spec.t_grid = linspace(190.0, 360.0, 50);
    for (double p : linspace(2.0, 100.0, 60))
        spec.p_grid.push_back(bar_to_pa(p));
    const auto all = generate_synthetic(spec).dataset;
    return subsample(all, 2000.0 / static_cast<double>(all.size()), 1);
}

void training_sanity(const Split& data)
{
    nn::TrainConfig cfg;
    cfg.max_steps = 20000;
    cfg.batch_size = 256;
    cfg.learning_rate = 1e-3;
    cfg.weight_decay = 0.0;
    cfg.lr_decay = 0.9984;
    cfg.weight_average = 0.999;
    const auto arch = nn::Architecture::uniform(5, 100, nn::Activation::elu);
    const auto t0 = Clock::now();
    const auto res = nn::train(data.train.features(), data.train.targets(), data.validation.features(),
                               data.validation.targets(), arch, cfg);
    const double secs = since(t0);
    const double mre =
        nn::mean_relative_error(nn::predict(res.model, data.validation.features()), data.validation.targets());
    const auto smooth = res.curve.smoothed_validation(10);
    std::size_t rises = 0;
    for (std::size_t i = 1; i < smooth.size(); ++i)
        rises += smooth[i] > smooth[i - 1];
    report(9, "training sanity", mre < 0.05 && secs < 300.0 && rises == 0 && !smooth.empty(),
           fmt("5x100 ELU, %zu steps: held-out MRE %.2f%% (< 5%%), %.0f s (< 300 s), smoothed validation loss rises "
               "%zu times over %zu epochs",
               res.steps, 100.0 * mre, secs, rises, smooth.size()));
}

void factor_study(const Split& data)
{
    auto run = [&](FactorGrid grid) {
        ExperimentConfig cfg;
        cfg.grid = std::move(grid);
        cfg.train.max_steps = 2000;
        cfg.repeats = 1;
        std::map<std::string, double> mre;
        for (const auto& c : run_experiment(data, cfg))
            mre[c.level] = c.mre;
        return mre;
    };
    auto depth = FactorGrid::published(Factor::depth);
    depth.depths = {1, 3, 4, 5, 6, 20};
    const auto d = run(depth);
    const double d36 = std::max({d.at("3"), d.at("4"), d.at("5"), d.at("6")});
    const bool depth_ok = d36 < d.at("1") && d.at("20") > d.at("5");

    const auto a = run(FactorGrid::published(Factor::activation));
    std::string worst_act;
    double worst_mre = -1.0;
    for (const auto& [name, v] : a)
        if (v > worst_mre)
            worst_mre = v, worst_act = name;

    auto width = FactorGrid::published(Factor::width);
    width.widths = {5, 100};
    const auto w = run(width);

    std::ostringstream os;
    os.precision(3);
    os << "depth MRE";
    for (const auto& [lvl, v] : d)
        os << ' ' << lvl << ':' << v;
    os << "; worst activation " << worst_act << " (" << worst_mre << ")";
    os << "; width 5: " << w.at("5") << ", width 100: " << w.at("100");
    report(10, "factor-study ordering", depth_ok && worst_act == "linear" && w.at("100") < w.at("5"), os.str());
}

void xavier_property()
{
    using namespace nn;
    const auto arch = Architecture::uniform(5, 100, Activation::linear, 1.0, false, 100, 100);
    const Network net = Network::create(arch, 3);
    Rng rng(4);
    std::normal_distribution<double> n01(0.0, 1.0);
    Matrix a(100, 10000);
    for (Eigen::Index i = 0; i < a.size(); ++i)
        a(i) = n01(rng);
    const double v_in = (a.array() - a.mean()).square().mean();
    double worst = 0.0;
    std::ostringstream os;
    os.precision(3);
    os << "input variance " << v_in << ", layer variances";
    for (std::size_t l = 0; l < 5; ++l) {
        a = affine(net.params.w[l], net.params.b[l], a);
        const double v = (a.array() - a.mean()).square().mean();
        worst = std::max(worst, std::abs(v - v_in) / v_in);
        os << ' ' << v;
    }
    os << "; max deviation " << 100.0 * worst << "% (<= 25%)";
    report(11, "Xavier variance", worst <= 0.25, os.str());
}

void end_to_end_bench()
{
    if (!surrogate)
        throw Error("surrogate was not built");
    auto cfg = bench_config();
    const auto t0 = Clock::now();
    const auto model = train_bench_model(cfg, BenchModelConfig{}).model;
    const double train_secs = since(t0);
    auto rep = run_bench(cfg, &*surrogate, &model);
    rep.model_train_seconds = train_secs;
    const auto* ssm = rep.find("ssm");
    const auto* sg = rep.find("sparse_grid");
    const auto* dl = rep.find("deep_learning");
    const bool complete = rep.methods.size() == 4 && ssm && sg && dl && rep.find("newton");
    const bool ok = complete && dl->seconds < sg->seconds && sg->seconds < ssm->seconds && dl->mre < 0.05 &&
                    sg->mre < 0.01;
    report(12, "end-to-end benchmark", ok,
           fmt("1000 queries; seconds DL %.2e < surrogate %.2e < SSM %.3e (Newton %.3e); MRE DL %.2f%% (< 5%%), "
               "surrogate %.2e%% (< 1%%); model training %.1f s excluded",
               dl->seconds, sg->seconds, ssm->seconds, rep.find("newton")->seconds, 100.0 * dl->mre, 100.0 * sg->mre,
               train_secs));
}

} // namespace

int main()
{
    const auto t0 = Clock::now();
    guarded(1, "equilibrium certificate", equilibrium_certificate);
    guarded(2, "material balance", material_balance);
    guarded(3, "cross-method oracle", cross_method);
    guarded(4, "cubic correctness", cubic_correctness);
    guarded(5, "Rachford-Rice analytics", rachford_rice_analytics);
    guarded(6, "surrogate accuracy", surrogate_accuracy);
    guarded(7, "surrogate speed", surrogate_speed);
    guarded(8, "gradient check", gradient_check);
    std::optional<Split> data;
    try {
        data = split(synthetic_c1_c3(), 0.1, 7);
    } catch (const std::exception& e) {
        std::printf("synthetic dataset failed: %s\n", e.what());
    }
    guarded(9, "training sanity", [&] { training_sanity(data.value()); });
    guarded(10, "factor-study ordering", [&] { factor_study(data.value()); });
    guarded(11, "Xavier variance", xavier_property);
    guarded(12, "end-to-end benchmark", end_to_end_bench);
    std::printf("%d of 12 checks failed, %.0f s\n", failures, since(t0));
    return failures == 0 ? 0 : 1;
}
