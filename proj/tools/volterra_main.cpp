// volterra: estimate, invert, and compensate second-order pulse distortions,
// and run distortion-aware pulse optimization on a simulated Rydberg atom.
//
// Verbs: make-kernel, distort, estimate, predistort, optimize, reproduce.
// Exit codes: 0 success, 2 validation error, 3 numerical failure.

#include "volterra/control.hpp"
#include "volterra/errors.hpp"
#include "volterra/estimate.hpp"
#include "volterra/kernel.hpp"
#include "volterra/pulse.hpp"
#include "volterra/rydberg.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace volterra;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

int g_precision = 17;

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", g_precision, v);
    return buf;
}

// ---------------------------------------------------------------------------
// config plumbing

json load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw validation_error("cannot open config file: " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw validation_error(path + ": invalid JSON: " + e.what());
    }
}

void reject_unknown_keys(const json& doc, const std::vector<std::string>& allowed,
                         const std::string& where) {
    for (const auto& [key, value] : doc.items())
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
            throw validation_error(where + ": unknown config key '" + key + "'");
}

// Paths inside a config document resolve relative to the config file itself.
std::string resolve_path(const std::string& p, const fs::path& base) {
    fs::path fp(p);
    return fp.is_absolute() ? fp.string() : (base / fp).string();
}

fs::path out_path(const fs::path& out_dir, const std::string& name) {
    fs::path p(name);
    if (p.is_absolute())
        return p;
    fs::create_directories(out_dir);
    return out_dir / p;
}

void write_text_atomic(const fs::path& path, const std::string& body) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp);
        if (!out)
            throw validation_error("cannot write file: " + tmp.string());
        out << body;
        if (!out)
            throw validation_error("write failed: " + tmp.string());
    }
    fs::rename(tmp, path);
}

void write_json_atomic(const fs::path& path, const json& doc) {
    write_text_atomic(path, doc.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// sweep parallelism, capped by VOLTERRA_THREADS

unsigned thread_cap() {
    if (const char* env = std::getenv("VOLTERRA_THREADS")) {
        long v = std::strtol(env, nullptr, 10);
        if (v >= 1)
            return static_cast<unsigned>(v);
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw ? hw : 1;
}

void run_parallel(std::vector<std::function<void()>> jobs) {
    unsigned workers = std::min<unsigned>(thread_cap(), jobs.size());
    if (workers <= 1) {
        for (auto& job : jobs)
            job();
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (unsigned w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = next++; i < jobs.size(); i = next++)
                    jobs[i]();
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    for (auto& t : pool)
        t.join();
    for (auto& e : errors)
        if (e)
            std::rethrow_exception(e);
}

// ---------------------------------------------------------------------------
// shared parsing helpers

RydbergSystem system_from_config(const json& doc, const std::string& where) {
    reject_unknown_keys(doc, {"gamma_mhz", "gamma_d_mhz", "delta_1", "delta_2"}, where);
    RydbergSystem sys;
    sys.Gamma = kTwoPi * doc.value("gamma_mhz", 1.41);
    sys.Gamma_d = kTwoPi * doc.value("gamma_d_mhz", 0.043);
    sys.Delta = doc.value("delta_1", 0.0);
    sys.delta = doc.value("delta_2", 0.0);
    return sys;
}

OptimizerConfig optimizer_from_config(const json& doc, const std::string& where) {
    reject_unknown_keys(doc,
                        {"max_iterations", "gradient_tolerance", "step_scale", "box_lo_b", "box_hi_b",
                         "box_lo_r", "box_hi_r", "rise_speed_limit_b", "rise_speed_limit_r",
                         "rise_penalty_weight", "history_size", "seed", "mode", "init_perturbation"},
                        where);
    OptimizerConfig cfg;
    cfg.max_iterations = doc.value("max_iterations", cfg.max_iterations);
    cfg.gradient_tolerance = doc.value("gradient_tolerance", cfg.gradient_tolerance);
    cfg.step_scale = doc.value("step_scale", cfg.step_scale);
    cfg.lo_b = doc.value("box_lo_b", cfg.lo_b);
    cfg.hi_b = doc.value("box_hi_b", cfg.hi_b);
    cfg.lo_r = doc.value("box_lo_r", cfg.lo_r);
    cfg.hi_r = doc.value("box_hi_r", cfg.hi_r);
    cfg.rise_speed_limit_b = doc.value("rise_speed_limit_b", cfg.rise_speed_limit_b);
    cfg.rise_speed_limit_r = doc.value("rise_speed_limit_r", cfg.rise_speed_limit_r);
    cfg.rise_penalty_weight = doc.value("rise_penalty_weight", cfg.rise_penalty_weight);
    cfg.history_size = doc.value("history_size", cfg.history_size);
    cfg.seed = doc.value("seed", cfg.seed);
    cfg.init_perturbation = doc.value("init_perturbation", cfg.init_perturbation);
    if (doc.contains("mode")) {
        std::string m = doc["mode"].get<std::string>();
        if (m == "box-qn")
            cfg.mode = OptimizerMode::box_qn;
        else if (m == "penalty-pg")
            cfg.mode = OptimizerMode::penalty_pg;
        else
            throw validation_error(where + ": unknown mode '" + m + "' (use box-qn or penalty-pg)");
    }
    return cfg;
}

const char* reason_name(TerminationReason r) {
    switch (r) {
    case TerminationReason::converged: return "converged";
    case TerminationReason::max_iter: return "max_iter";
    default: return "line_search_failure";
    }
}

json report_to_json(const EstimateReport& rep) {
    json doc;
    doc["residual_norm"] = rep.residual_norm;
    doc["rank_deficient"] = rep.rank_deficient;
    doc["condition_estimate"] = rep.condition_estimate;
    return doc;
}

// ---------------------------------------------------------------------------
// make-kernel

int cmd_make_kernel(const json& cfg, const fs::path& cfg_base, const fs::path& out_dir) {
    reject_unknown_keys(cfg, {"preset", "R", "sigma1", "sigma2", "J", "h0", "mu", "mu1", "mu2", "output"},
                        "make-kernel");
    VolterraKernel k;
    if (cfg.contains("preset")) {
        std::string preset = cfg["preset"].get<std::string>();
        if (preset.size() != 1)
            throw validation_error("make-kernel: unknown preset '" + preset +
                                   "'; valid names are A, B, C, D, E, F");
        k = distortion_preset(preset[0]);
    } else {
        if (!cfg.contains("R") || !cfg.contains("sigma1") || !cfg.contains("sigma2"))
            throw validation_error("make-kernel: need a preset or explicit R, sigma1, sigma2");
        k = make_gaussian_kernel(cfg["R"].get<int>(), cfg["sigma1"].get<double>(),
                                 cfg["sigma2"].get<double>(), cfg.value("J", 5e-6),
                                 cfg.value("h0", 0.1), cfg.value("mu", 0.0), cfg.value("mu1", 0.0),
                                 cfg.value("mu2", 0.0));
    }
    (void)cfg_base;
    std::string name = cfg.value("output", std::string("kernel.json"));
    fs::path path = out_path(out_dir, name);
    write_kernel(path.string(), k);
    std::cout << "wrote " << path.string() << " (R=" << k.R << ", M=" << k.coefficient_count() << ")\n";
    return 0;
}

// ---------------------------------------------------------------------------
// distort

int cmd_distort(const json& cfg, const fs::path& cfg_base, const fs::path& out_dir,
                std::uint64_t seed) {
    reject_unknown_keys(cfg, {"kernel", "inputs", "noise_sigma"}, "distort");
    if (!cfg.contains("kernel") || !cfg.contains("inputs"))
        throw validation_error("distort: config needs 'kernel' and 'inputs'");
    VolterraKernel k = read_kernel(resolve_path(cfg["kernel"].get<std::string>(), cfg_base));
    double sigma = cfg.value("noise_sigma", 0.0);
    auto inputs = cfg["inputs"].get<std::vector<std::string>>();
    if (inputs.empty())
        throw validation_error("distort: no input pulses given");
    std::uint64_t draw = seed;
    for (const auto& in_name : inputs) {
        Pulse x = read_pulse(resolve_path(in_name, cfg_base));
        Pulse y = apply(k, x);
        if (sigma > 0.0)
            y = add_measurement_noise(y, sigma, draw++);
        fs::path out = out_path(out_dir, fs::path(in_name).stem().string() + ".out.csv");
        write_pulse(out.string(), y);
        std::cout << "wrote " << out.string() << " (" << y.size() << " samples)\n";
    }
    return 0;
}

// ---------------------------------------------------------------------------
// estimate

std::vector<TrainingPair> load_training_dir(const std::string& dir) {
    std::vector<std::string> stems;
    if (!fs::is_directory(dir))
        throw validation_error("training directory not found: " + dir);
    for (const auto& entry : fs::directory_iterator(dir)) {
        std::string name = entry.path().filename().string();
        const std::string suffix = ".in.csv";
        if (name.size() > suffix.size() && name.ends_with(suffix))
            stems.push_back(name.substr(0, name.size() - suffix.size()));
    }
    std::sort(stems.begin(), stems.end());
    if (stems.empty())
        throw validation_error("no '<name>.in.csv' training inputs in " + dir);
    std::vector<TrainingPair> pairs;
    for (const auto& stem : stems) {
        TrainingPair p;
        p.input = read_pulse((fs::path(dir) / (stem + ".in.csv")).string());
        p.output = read_pulse((fs::path(dir) / (stem + ".out.csv")).string());
        pairs.push_back(std::move(p));
    }
    return pairs;
}

int cmd_estimate(const json& cfg, const fs::path& cfg_base, const fs::path& out_dir) {
    reject_unknown_keys(cfg, {"training_dir", "R", "method", "truth", "output", "report"}, "estimate");
    if (!cfg.contains("training_dir") || !cfg.contains("R"))
        throw validation_error("estimate: config needs 'training_dir' and 'R'");
    auto pairs = load_training_dir(resolve_path(cfg["training_dir"].get<std::string>(), cfg_base));
    int R = cfg["R"].get<int>();
    std::string method = cfg.value("method", std::string("qr"));

    EstimateReport rep;
    if (method == "qr") {
        rep = solve_orthogonalized(build_design_matrix(pairs, R));
    } else if (method == "normal") {
        rep = solve_normal_equations(build_design_matrix(pairs, R));
    } else if (method == "linear") {
        rep = solve_linear_only(pairs, R);
    } else {
        throw validation_error("estimate: unknown method '" + method + "' (use qr, normal or linear)");
    }

    json report = report_to_json(rep);
    report["method"] = method;
    report["R"] = R;
    report["training_pairs"] = pairs.size();
    if (cfg.contains("truth")) {
        VolterraKernel truth = read_kernel(resolve_path(cfg["truth"].get<std::string>(), cfg_base));
        report["mase_h1"] = mase_h1(truth, rep.kernel);
        if (truth.h2.cwiseAbs().maxCoeff() > 0 && rep.kernel.h2.cwiseAbs().maxCoeff() > 0)
            report["mase_h2"] = mase_h2(truth, rep.kernel);
    }

    fs::path kpath = out_path(out_dir, cfg.value("output", std::string("estimated_kernel.json")));
    write_kernel(kpath.string(), rep.kernel);
    fs::path rpath = out_path(out_dir, cfg.value("report", std::string("estimate_report.json")));
    write_json_atomic(rpath, report);
    std::cout << "wrote " << kpath.string() << " and " << rpath.string() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// predistort

int cmd_predistort(const json& cfg, const fs::path& cfg_base, const fs::path& out_dir) {
    reject_unknown_keys(cfg, {"kernel", "target", "output", "report", "optimizer"}, "predistort");
    if (!cfg.contains("kernel") || !cfg.contains("target"))
        throw validation_error("predistort: config needs 'kernel' and 'target'");
    VolterraKernel k = read_kernel(resolve_path(cfg["kernel"].get<std::string>(), cfg_base));
    Pulse target = read_pulse(resolve_path(cfg["target"].get<std::string>(), cfg_base));
    OptimizerConfig ocfg = optimizer_from_config(cfg.value("optimizer", json::object()),
                                                 "predistort.optimizer");

    PredistortResult res = predistort(k, target, ocfg);
    Pulse through = apply(k, res.input);

    fs::path ppath = out_path(out_dir, cfg.value("output", std::string("predistorted.csv")));
    write_pulse(ppath.string(), res.input);
    json report;
    report["objective"] = res.objective;
    report["converged"] = res.converged;
    report["round_trip_mase"] = mase(target.samples, through.samples);
    fs::path rpath = out_path(out_dir, cfg.value("report", std::string("predistort_report.json")));
    write_json_atomic(rpath, report);
    std::cout << "wrote " << ppath.string() << " (round-trip MASE "
              << fmt(report["round_trip_mase"].get<double>()) << ")\n";
    return 0;
}

// ---------------------------------------------------------------------------
// optimize

int cmd_optimize(const json& cfg, const fs::path& cfg_base, const fs::path& out_dir,
                 std::uint64_t seed) {
    reject_unknown_keys(cfg, {"duration", "steps", "dt", "kernel", "output_prefix", "system", "optimizer"},
                        "optimize");
    if (!cfg.contains("duration"))
        throw validation_error("optimize: config needs 'duration' (us)");
    double T = cfg["duration"].get<double>();
    std::size_t Lc;
    if (cfg.contains("steps"))
        Lc = cfg["steps"].get<std::size_t>();
    else
        Lc = static_cast<std::size_t>(std::llround(T / cfg.value("dt", 0.002)));

    RydbergSystem sys = system_from_config(cfg.value("system", json::object()), "optimize.system");
    OptimizerConfig ocfg = optimizer_from_config(cfg.value("optimizer", json::object()),
                                                 "optimize.optimizer");
    if (!cfg.value("optimizer", json::object()).contains("seed"))
        ocfg.seed = seed;
    if (ocfg.mode == OptimizerMode::penalty_pg && ocfg.rise_penalty_weight == 0.0)
        ocfg.rise_penalty_weight = 1e-6;

    std::optional<VolterraKernel> kernel;
    if (cfg.contains("kernel") && !cfg["kernel"].is_null())
        kernel = read_kernel(resolve_path(cfg["kernel"].get<std::string>(), cfg_base));

    OptimizationResult res = optimize_excitation(sys, T, Lc, kernel, ocfg);

    std::string prefix = cfg.value("output_prefix", std::string("optimize"));
    write_pulse(out_path(out_dir, prefix + "_omega_b.csv").string(), res.controls.omega_b);
    write_pulse(out_path(out_dir, prefix + "_omega_r.csv").string(), res.controls.omega_r);
    if (res.distorted_controls) {
        write_pulse(out_path(out_dir, prefix + "_omega_b_distorted.csv").string(),
                    res.distorted_controls->omega_b);
        write_pulse(out_path(out_dir, prefix + "_omega_r_distorted.csv").string(),
                    res.distorted_controls->omega_r);
    }
    json report;
    report["final_cost"] = res.final_cost;
    report["termination_reason"] = reason_name(res.termination_reason);
    report["iterations"] = res.cost_trace.size() - 1;
    report["duration_us"] = T;
    report["steps"] = Lc;
    report["cost_trace"] = res.cost_trace;
    write_json_atomic(out_path(out_dir, prefix + "_result.json"), report);
    std::cout << "final excitation error " << fmt(res.final_cost) << " ("
              << reason_name(res.termination_reason) << ")\n";
    return 0;
}

// ---------------------------------------------------------------------------
// reproduce: figure-level sweeps, one CSV per panel

struct CsvTable {
    std::string header;
    std::vector<std::string> rows;

    void save(const fs::path& path) const {
        std::ostringstream body;
        body << header << "\n";
        for (const auto& r : rows)
            body << r << "\n";
        write_text_atomic(path, body.str());
        std::cout << "wrote " << path.string() << "\n";
    }
};

// Training protocol shared by the estimation figures: pairs from a known
// kernel, outputs over the channel's own window, optional output noise.
TrainingPair make_pair(const VolterraKernel& truth, const Pulse& x, double sigma, std::uint64_t seed) {
    TrainingPair p;
    p.input = x;
    p.output = apply(truth, x);
    if (sigma > 0.0)
        p.output = add_measurement_noise(p.output, sigma, seed);
    return p;
}

// Mean test MASE (plus a normal-approximation 95% CI half-width) of a fitted
// kernel over held-out pulses, on the common window of truth and estimate.
struct TestError {
    double mean = 0.0;
    double ci = 0.0;
    std::vector<double> per_pulse;
};

TestError test_error(const VolterraKernel& truth, const VolterraKernel& est,
                     const std::vector<Pulse>& test) {
    TestError te;
    for (const auto& x : test) {
        std::size_t Nw = x.size() + std::max(truth.R, est.R) - 1;
        Pulse yt = apply(truth, x, Nw);
        Pulse ye = apply(est, x, Nw);
        te.per_pulse.push_back(mase(yt.samples, ye.samples));
    }
    double sum = 0.0;
    for (double e : te.per_pulse)
        sum += e;
    te.mean = sum / te.per_pulse.size();
    double var = 0.0;
    for (double e : te.per_pulse)
        var += (e - te.mean) * (e - te.mean);
    te.ci = 1.96 * std::sqrt(var / te.per_pulse.size()) / std::sqrt(double(te.per_pulse.size()));
    return te;
}

void reproduce_fig1(const fs::path& out_dir, std::uint64_t seed) {
    CsvTable t;
    t.header = "# quadratic vs linear estimation, one 4000-step random training pulse per "
               "distortion, noiseless\ndistortion,method,test_mase";
    const char names[] = {'A', 'B', 'C', 'D', 'E', 'F'};
    for (char name : names) {
        VolterraKernel truth = distortion_preset(name);
        Pulse x = generate_random_noise(4000, 1.0, seed + name);
        Pulse xt = generate_random_noise(500, 1.0, seed + 100 + name);
        std::vector<TrainingPair> pairs{make_pair(truth, x, 0.0, 0)};
        int R_est = truth.R + 10;
        EstimateReport quad = solve_orthogonalized(build_design_matrix(pairs, R_est));
        EstimateReport lin = solve_linear_only(pairs, R_est);
        TestError eq = test_error(truth, quad.kernel, {xt});
        TestError el = test_error(truth, lin.kernel, {xt});
        t.rows.push_back(std::string(1, name) + ",quadratic," + fmt(eq.mean));
        t.rows.push_back(std::string(1, name) + ",linear," + fmt(el.mean));
    }
    t.save(out_path(out_dir, "fig1b.csv"));
}

void reproduce_fig3(const fs::path& out_dir, std::uint64_t seed) {
    VolterraKernel truth = distortion_preset('C');
    Pulse x = generate_random_noise(4000, 1.0, seed + 1);
    std::vector<TrainingPair> pairs{make_pair(truth, x, 1e-4, seed + 2)};
    EstimateReport rep = solve_orthogonalized(build_design_matrix(pairs, 60));

    CsvTable h1t;
    h1t.header = "# linear kernel, true vs estimated (R_est=60, output noise 1e-4)\nlag,h1_true,h1_est";
    for (int t = 0; t < 60; ++t)
        h1t.rows.push_back(std::to_string(t) + "," + fmt(t < truth.R ? truth.h1[t] : 0.0) + "," +
                           fmt(rep.kernel.h1[t]));
    h1t.save(out_path(out_dir, "fig3_h1.csv"));

    CsvTable h2t;
    h2t.header = "# quadratic kernel, true vs estimated\nt1,t2,h2_true,h2_est";
    for (int a = 0; a < 60; ++a)
        for (int b = 0; b < 60; ++b)
            h2t.rows.push_back(std::to_string(a) + "," + std::to_string(b) + "," +
                               fmt(a < truth.R && b < truth.R ? truth.h2(a, b) : 0.0) + "," +
                               fmt(rep.kernel.h2(a, b)));
    h2t.save(out_path(out_dir, "fig3_h2.csv"));

    CsvTable s;
    s.header = "# recovery quality\nmetric,value";
    s.rows.push_back("mase_h1," + fmt(mase_h1(truth, rep.kernel)));
    s.rows.push_back("mase_h2," + fmt(mase_h2(truth, rep.kernel)));
    s.save(out_path(out_dir, "fig3_summary.csv"));
}

OptimizerConfig default_grape_config(std::uint64_t seed) {
    OptimizerConfig cfg;
    cfg.max_iterations = 800;
    cfg.seed = seed;
    return cfg;
}

void reproduce_fig4(const fs::path& out_dir, std::uint64_t seed) {
    const std::vector<double> durations{0.1, 0.15, 0.2, 0.3, 0.4};
    const double dt = 0.002;
    RydbergSystem sys;
    CsvTable t;
    t.header = "# excitation error of ideal optimized pulses, and the same pulses through each "
               "distortion (dt=0.002 us)\nduration_us,case,excitation_error";
    std::vector<std::string> rows(durations.size() * 7);
    std::vector<std::function<void()>> jobs;
    for (std::size_t i = 0; i < durations.size(); ++i)
        jobs.push_back([&, i] {
            double T = durations[i];
            auto Lc = static_cast<std::size_t>(std::llround(T / dt));
            OptimizationResult res = optimize_excitation(sys, T, Lc, std::nullopt,
                                                         default_grape_config(seed));
            rows[i * 7] = fmt(T) + ",ideal," + fmt(res.final_cost);
            const char names[] = {'A', 'B', 'C', 'D', 'E', 'F'};
            for (int d = 0; d < 6; ++d) {
                double err = evaluate_distorted(sys, res.controls, distortion_preset(names[d]));
                rows[i * 7 + 1 + d] = fmt(T) + "," + names[d] + std::string(",") + fmt(err);
            }
        });
    run_parallel(std::move(jobs));
    t.rows = rows;
    t.save(out_path(out_dir, "fig4.csv"));
}

void reproduce_fig5(const fs::path& out_dir, std::uint64_t seed) {
    VolterraKernel truth = make_gaussian_kernel(5, 0.1, 0.42, 5e-6, 0.1);
    const std::size_t steps = 500;
    std::vector<Pulse> train, test;
    for (int i = 0; i < 10; ++i)
        train.push_back(generate_spline(steps, 5 + i, seed + 10 + i));
    for (int i = 0; i < 50; ++i)
        test.push_back(generate_spline(steps, 5 + i, seed + 1000 + i));

    auto run_sweep = [&](double sigma, const std::vector<TrainingPair>& pairs, int R_est) {
        (void)sigma;
        EstimationProblem prob = build_design_matrix(pairs, R_est);
        EstimateReport qr = solve_orthogonalized(prob);
        EstimateReport ne = solve_normal_equations(prob);
        return std::make_pair(test_error(truth, qr.kernel, test), test_error(truth, ne.kernel, test));
    };

    // panels (a)/(c): error vs coefficient count M at fixed 10 training pulses
    // panels (b)/(d): error vs training pulse count at fixed R_est = 5
    for (double sigma : {0.0, 1e-9}) {
        std::vector<TrainingPair> pairs;
        for (std::size_t i = 0; i < train.size(); ++i)
            pairs.push_back(make_pair(truth, train[i], sigma, seed + 200 + i));

        CsvTable ta;
        ta.header = "# test error vs coefficient count, 10 spline training pulses, noise sigma=" +
                    fmt(sigma) + "\nM,mean_error,ci_low,ci_high,method";
        for (int R_est = 1; R_est <= 10; ++R_est) {
            auto [eq, en] = run_sweep(sigma, pairs, R_est);
            int M = 1 + R_est + R_est * (R_est + 1) / 2;
            ta.rows.push_back(std::to_string(M) + "," + fmt(eq.mean) + "," + fmt(eq.mean - eq.ci) +
                              "," + fmt(eq.mean + eq.ci) + ",qr");
            ta.rows.push_back(std::to_string(M) + "," + fmt(en.mean) + "," + fmt(en.mean - en.ci) +
                              "," + fmt(en.mean + en.ci) + ",normal");
        }
        ta.save(out_path(out_dir, sigma == 0.0 ? "fig5a.csv" : "fig5c.csv"));

        CsvTable tb;
        tb.header = "# test error vs training pulse count, R_est=5, noise sigma=" + fmt(sigma) +
                    "\npulses,mean_error,ci_low,ci_high,method";
        for (std::size_t count : {1u, 2u, 4u, 6u, 8u, 10u}) {
            std::vector<TrainingPair> sub(pairs.begin(), pairs.begin() + count);
            auto [eq, en] = run_sweep(sigma, sub, 5);
            tb.rows.push_back(std::to_string(count) + "," + fmt(eq.mean) + "," + fmt(eq.mean - eq.ci) +
                              "," + fmt(eq.mean + eq.ci) + ",qr");
            tb.rows.push_back(std::to_string(count) + "," + fmt(en.mean) + "," + fmt(en.mean - en.ci) +
                              "," + fmt(en.mean + en.ci) + ",normal");
        }
        tb.save(out_path(out_dir, sigma == 0.0 ? "fig5b.csv" : "fig5d.csv"));
    }
}

void reproduce_fig6(const fs::path& out_dir, std::uint64_t seed) {
    VolterraKernel truth = make_gaussian_kernel(5, 0.1, 0.42, 5e-6, 0.1);
    const std::size_t steps = 500;
    const int R_est = 8;

    std::vector<std::pair<std::string, std::vector<Pulse>>> families;
    {
        std::vector<Pulse> gauss;
        for (double s : {20.0, 40.0, 60.0, 80.0})
            gauss.push_back(generate_gaussian_pulse(steps, steps / 2.0, s, 1.0));
        families.emplace_back("gaussian", gauss);
        std::vector<Pulse> cosine;
        for (double c : {1.0, 2.0, 3.0, 4.0})
            cosine.push_back(generate_cosine(steps, c, 1.0, 0.0));
        families.emplace_back("cosine", cosine);
        std::vector<Pulse> spline;
        for (int i = 0; i < 4; ++i)
            spline.push_back(generate_spline(steps, 64, seed + 40 + i));
        families.emplace_back("spline", spline);
        std::vector<Pulse> random;
        for (int i = 0; i < 4; ++i)
            random.push_back(generate_random_noise(steps, 1.0, seed + 50 + i));
        families.emplace_back("random", random);
    }
    std::vector<Pulse> test;
    for (int i = 0; i < 50; ++i)
        test.push_back(generate_random_noise(steps, 1.0, seed + 2000 + i));

    CsvTable t;
    t.header = "# test error by training-pulse frequency content, equal data budget (4 pulses x 500 "
               "steps, R_est=8)\nfamily,noise_sigma,mean_error,ci_low,ci_high";
    for (double sigma : {0.0, 1e-9}) {
        std::uint64_t noise_seed = seed + 300;
        for (const auto& [name, pulses] : families) {
            std::vector<TrainingPair> pairs;
            for (const auto& x : pulses)
                pairs.push_back(make_pair(truth, x, sigma, noise_seed++));
            EstimateReport rep = solve_orthogonalized(build_design_matrix(pairs, R_est));
            TestError te = test_error(truth, rep.kernel, test);
            t.rows.push_back(name + "," + fmt(sigma) + "," + fmt(te.mean) + "," + fmt(te.mean - te.ci) +
                             "," + fmt(te.mean + te.ci));
        }
    }
    t.save(out_path(out_dir, "fig6.csv"));
}

void reproduce_fig8(const fs::path& out_dir, std::uint64_t seed) {
    // sweep coarsened to three durations to stay inside the runtime budget
    const std::vector<double> durations{0.1, 0.2, 0.4};
    const double dt = 0.002;
    RydbergSystem sys;
    CsvTable t;
    t.header = "# distortion-aware optimization vs uncorrected pulses (durations coarsened to 3; "
               "dt=0.002 us)\nduration_us,distortion,ideal_error,uncorrected_error,corrected_error";
    std::vector<std::string> rows(durations.size() * 2);
    std::vector<std::function<void()>> jobs;
    for (std::size_t i = 0; i < durations.size(); ++i)
        jobs.push_back([&, i] {
            double T = durations[i];
            auto Lc = static_cast<std::size_t>(std::llround(T / dt));
            OptimizationResult ideal = optimize_excitation(sys, T, Lc, std::nullopt,
                                                           default_grape_config(seed));
            int col = 0;
            for (char name : {'C', 'F'}) {
                VolterraKernel k = distortion_preset(name);
                double uncorrected = evaluate_distorted(sys, ideal.controls, k);
                OptimizationResult corr = optimize_excitation(sys, T, Lc, k, default_grape_config(seed));
                rows[i * 2 + col] = fmt(T) + "," + name + std::string(",") + fmt(ideal.final_cost) +
                                    "," + fmt(uncorrected) + "," + fmt(corr.final_cost);
                ++col;
            }
        });
    run_parallel(std::move(jobs));
    t.rows = rows;
    t.save(out_path(out_dir, "fig8.csv"));
}

void reproduce_fig9(const fs::path& out_dir, std::uint64_t seed) {
    const std::vector<double> durations{0.1, 0.2, 0.4};
    const double dt = 0.002;
    RydbergSystem sys;
    VolterraKernel kF = distortion_preset('F');
    CsvTable t;
    t.header = "# optimizer comparison on distortion-aware runs, distortion F (durations coarsened "
               "to 3; dt=0.002 us)\nduration_us,mode,excitation_error,termination";
    std::vector<std::string> rows(durations.size() * 2);
    std::vector<std::function<void()>> jobs;
    for (std::size_t i = 0; i < durations.size(); ++i)
        jobs.push_back([&, i] {
            double T = durations[i];
            auto Lc = static_cast<std::size_t>(std::llround(T / dt));
            OptimizerConfig qn = default_grape_config(seed);
            OptimizationResult a = optimize_excitation(sys, T, Lc, kF, qn);
            OptimizerConfig pg = default_grape_config(seed);
            pg.mode = OptimizerMode::penalty_pg;
            pg.rise_penalty_weight = 1e-6;
            OptimizationResult b = optimize_excitation(sys, T, Lc, kF, pg);
            double err_a = evaluate_distorted(sys, a.controls, kF);
            double err_b = evaluate_distorted(sys, b.controls, kF);
            rows[i * 2] = fmt(T) + ",box-qn," + fmt(err_a) + "," + reason_name(a.termination_reason);
            rows[i * 2 + 1] =
                fmt(T) + ",penalty-pg," + fmt(err_b) + "," + reason_name(b.termination_reason);
        });
    run_parallel(std::move(jobs));
    t.rows = rows;
    t.save(out_path(out_dir, "fig9.csv"));
}

int cmd_reproduce(const std::string& figure, const fs::path& out_dir, std::uint64_t seed) {
    if (figure == "fig1")
        reproduce_fig1(out_dir, seed);
    else if (figure == "fig3")
        reproduce_fig3(out_dir, seed);
    else if (figure == "fig4")
        reproduce_fig4(out_dir, seed);
    else if (figure == "fig5")
        reproduce_fig5(out_dir, seed);
    else if (figure == "fig6")
        reproduce_fig6(out_dir, seed);
    else if (figure == "fig8")
        reproduce_fig8(out_dir, seed);
    else if (figure == "fig9")
        reproduce_fig9(out_dir, seed);
    else
        throw validation_error("unknown figure id '" + figure +
                               "'; valid ids: fig1 fig3 fig4 fig5 fig6 fig8 fig9");
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Volterra pulse-distortion estimation, pre-distortion and distortion-aware "
                 "pulse optimization"};
    app.require_subcommand(1);
    app.fallthrough();

    std::uint64_t seed = 0;
    std::string out_dir = ".";
    std::string config_path;
    app.add_option("--seed", seed, "global random seed");
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--config", config_path, "JSON config file");
    app.add_option("--precision", g_precision, "significant digits for emitted floats")
        ->check(CLI::Range(1, 17));

    auto* mk = app.add_subcommand("make-kernel", "write a distortion kernel JSON file");
    std::string mk_preset;
    std::string mk_output;
    mk->add_option("--preset", mk_preset, "one of A, B, C, D, E, F");
    mk->add_option("--output", mk_output, "output file name");

    auto* di = app.add_subcommand("distort", "apply a kernel to pulse files");
    std::string di_kernel;
    std::vector<std::string> di_inputs;
    double di_sigma = -1.0;
    di->add_option("--kernel", di_kernel, "kernel JSON file");
    di->add_option("--noise-sigma", di_sigma, "additive output noise std");
    di->add_option("inputs", di_inputs, "input pulse CSV files");

    auto* es = app.add_subcommand("estimate", "fit a kernel from a training directory");
    std::string es_dir, es_truth, es_method;
    int es_R = 0;
    es->add_option("--training", es_dir, "directory of <name>.in.csv/<name>.out.csv pairs");
    es->add_option("--R", es_R, "memory length to estimate");
    es->add_option("--method", es_method, "qr | normal | linear");
    es->add_option("--truth", es_truth, "reference kernel for recovery metrics");

    auto* pd = app.add_subcommand("predistort", "invert a kernel for a target pulse");
    std::string pd_kernel, pd_target;
    pd->add_option("--kernel", pd_kernel, "kernel JSON file");
    pd->add_option("--target", pd_target, "target pulse CSV");

    auto* op = app.add_subcommand("optimize", "distortion-aware excitation optimization");
    double op_T = 0.0;
    std::string op_kernel, op_mode;
    op->add_option("--duration", op_T, "pulse duration in us");
    op->add_option("--kernel", op_kernel, "distortion kernel JSON (optional)");
    op->add_option("--mode", op_mode, "box-qn | penalty-pg");

    auto* re = app.add_subcommand("reproduce", "regenerate a figure's data tables");
    std::string re_figure;
    re->add_option("figure", re_figure, "fig1 | fig3 | fig4 | fig5 | fig6 | fig8 | fig9")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        json cfg = json::object();
        fs::path cfg_base = fs::current_path();
        if (!config_path.empty()) {
            cfg = load_config(config_path);
            cfg_base = fs::absolute(fs::path(config_path)).parent_path();
        }
        // command-line flags override the config document
        if (mk->parsed()) {
            if (!mk_preset.empty())
                cfg["preset"] = mk_preset;
            if (!mk_output.empty())
                cfg["output"] = mk_output;
            return cmd_make_kernel(cfg, cfg_base, out_dir);
        }
        if (di->parsed()) {
            if (!di_kernel.empty())
                cfg["kernel"] = fs::absolute(di_kernel).string();
            if (!di_inputs.empty()) {
                std::vector<std::string> abs;
                for (const auto& p : di_inputs)
                    abs.push_back(fs::absolute(p).string());
                cfg["inputs"] = abs;
            }
            if (di_sigma >= 0.0)
                cfg["noise_sigma"] = di_sigma;
            return cmd_distort(cfg, cfg_base, out_dir, seed);
        }
        if (es->parsed()) {
            if (!es_dir.empty())
                cfg["training_dir"] = fs::absolute(es_dir).string();
            if (es_R > 0)
                cfg["R"] = es_R;
            if (!es_method.empty())
                cfg["method"] = es_method;
            if (!es_truth.empty())
                cfg["truth"] = fs::absolute(es_truth).string();
            return cmd_estimate(cfg, cfg_base, out_dir);
        }
        if (pd->parsed()) {
            if (!pd_kernel.empty())
                cfg["kernel"] = fs::absolute(pd_kernel).string();
            if (!pd_target.empty())
                cfg["target"] = fs::absolute(pd_target).string();
            return cmd_predistort(cfg, cfg_base, out_dir);
        }
        if (op->parsed()) {
            if (op_T > 0.0)
                cfg["duration"] = op_T;
            if (!op_kernel.empty())
                cfg["kernel"] = fs::absolute(op_kernel).string();
            if (!op_mode.empty())
                cfg["optimizer"]["mode"] = op_mode;
            return cmd_optimize(cfg, cfg_base, out_dir, seed);
        }
        if (re->parsed())
            return cmd_reproduce(re_figure, out_dir, seed);
        throw validation_error("no command given");
    } catch (const validation_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const numeric_error& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "failure: " << e.what() << "\n";
        return 3;
    }
}
