// Acceptance suite: each check prints one PASS/FAIL line; the exit code is
// the number of failed checks.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "sebp/errors.hpp"
#include "sebp/factor_graph.hpp"
#include "sebp/gbp.hpp"
#include "sebp/harness.hpp"
#include "sebp/measurement.hpp"
#include "sebp/network.hpp"
#include "sebp/rng.hpp"
#include "sebp/wls.hpp"
#include "test_support.hpp"

using namespace sebp;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
    std::printf("%s  criterion %d: %s (%s)\n", pass ? "PASS" : "FAIL", id, name.c_str(),
                detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

StateVector true_state(const NetworkCase& net) {
    StateVector x;
    for (const Bus& bus : net.buses) {
        x.theta.push_back(bus.theta_true);
        x.v.push_back(bus.v_true);
    }
    return x;
}

double max_abs_state_diff(const StateVector& a, const StateVector& b) {
    double worst = 0.0;
    for (int i = 0; i < a.bus_count(); ++i) {
        worst = std::max(worst, std::abs(a.theta[i] - b.theta[i]));
        worst = std::max(worst, std::abs(a.v[i] - b.v[i]));
    }
    return worst;
}

RunConfig base_config() {
    RunConfig cfg;
    cfg.case_path = test_support::data_dir() / "ieee14.json";
    cfg.devices_path = test_support::data_dir() / "ieee14_61dev.json";
    cfg.trials = 100;
    cfg.q = 4;
    cfg.nu_max = 7;
    cfg.p = 0.5;
    cfg.alpha = 0.5;
    cfg.seed = 1;
    return cfg;
}

// --- 1: analytic Jacobians vs central finite differences -------------------

void criterion_1() {
    const auto start = Clock::now();
    const NetworkCase net = test_support::load_ieee14();
    const AdmittanceEntries adm = build_admittance(net);

    const MeasurementKind kinds[] = {
        MeasurementKind::ActivePowerFlow,  MeasurementKind::ReactivePowerFlow,
        MeasurementKind::ActiveInjection,  MeasurementKind::ReactiveInjection,
        MeasurementKind::CurrentMagnitude, MeasurementKind::VoltageMagnitude,
        MeasurementKind::VoltageAngle,
    };

    double worst = 0.0;
    bool pass = true;
    for (MeasurementKind kind : kinds) {
        Measurement m;
        m.kind = kind;
        m.variance = 1e-4;
        if (is_branch_kind(kind)) {
            m.from = net.branches.front().from;
            m.to = net.branches.front().to;
        } else {
            m.bus = 2;
        }
        int checked = 0;
        for (std::uint64_t trial = 0; checked < 100 && trial < 500; ++trial) {
            StateVector x = StateVector::flat_start(net.bus_count());
            for (int i = 0; i < net.bus_count(); ++i) {
                x.theta[i] = -0.5 + rng::uniform01(rng::mix(101, trial, 2 * i));
                x.v[i] = 0.9 + 0.2 * rng::uniform01(rng::mix(101, trial, 2 * i + 1));
            }
            if (kind == MeasurementKind::CurrentMagnitude && evaluate_h(m, x, adm, net) < 0.05) {
                continue;
            }
            ++checked;
            const JacobianRow row = jacobian_row(m, x, adm, net);
            for (const auto& [var, analytic] : row.entries) {
                StateVector lo = x, hi = x;
                lo.value(var) -= 1e-6;
                hi.value(var) += 1e-6;
                const double numeric =
                    (evaluate_h(m, hi, adm, net) - evaluate_h(m, lo, adm, net)) / 2e-6;
                const double rel =
                    std::abs(analytic - numeric) / std::max(std::abs(analytic), 1.0);
                worst = std::max(worst, rel);
                if (rel > 1e-6) pass = false;
            }
        }
        if (checked != 100) pass = false;
    }
    const double elapsed = seconds_since(start);
    if (elapsed >= 5.0) pass = false;
    char detail[128];
    std::snprintf(detail, sizeof(detail), "worst relative error %.2e, %.2f s", worst, elapsed);
    report(1, "analytic Jacobians match finite differences", pass, detail);
}

// --- 2: exactness on a tree ------------------------------------------------

void criterion_2() {
    const NetworkCase net = test_support::two_bus_case();
    const AdmittanceEntries adm = build_admittance(net);
    std::vector<Device> devices{
        {MeasurementKind::VoltageMagnitude, 1, 0, 0, {}},
        {MeasurementKind::VoltageMagnitude, 2, 0, 0, {}},
        {MeasurementKind::VoltageAngle, 2, 0, 0, {}},
        {MeasurementKind::ActivePowerFlow, 0, 1, 2, {}},
    };
    const auto ms = generate_measurements(net, devices, 1e-4, 33);
    const FactorGraph graph = build_graph(net, ms);
    bool pass = is_tree(graph);

    GbpEngine engine(graph, net, adm, Schedule{1, 1, 0.0}, DampingConfig{0.0, 0.5, 0});
    const StateVector flat = StateVector::flat_start(2);
    const OuterResult result = engine.outer_iteration(flat, 1, 10);

    const LinearSystemBundle bundle = assemble(net, ms, flat, adm);
    const std::vector<double> dx = solve_linear_wls(bundle);
    const std::vector<double> cov = covariance_diagonal(bundle);

    double worst = 0.0;
    for (int flat_idx = 0; flat_idx < 4; ++flat_idx) {
        const StateVarId var = flat_idx < 2 ? StateVarId::angle(flat_idx + 1)
                                            : StateVarId::magnitude(flat_idx - 1);
        const int col = reduced_index(var, 2, 1);
        if (col < 0) {
            if (result.increment[flat_idx] != 0.0) pass = false;
            continue;
        }
        worst = std::max(worst, std::abs(result.increment[flat_idx] - dx[col]));
        worst = std::max(worst, std::abs(result.marginals[flat_idx].variance - cov[col]));
    }
    if (worst > 1e-10) pass = false;
    char detail[96];
    std::snprintf(detail, sizeof(detail), "worst mean/variance deviation %.2e", worst);
    report(2, "tree graph equals the linear WLS solution", pass, detail);
}

// --- 3: loopy agreement on the three-bus example ----------------------------

void criterion_3() {
    const NetworkCase net = test_support::load_toy3();
    const AdmittanceEntries adm = build_admittance(net);
    const auto ms = generate_measurements(net, test_support::toy3_devices(), 1e-4, 34);
    const FactorGraph graph = build_graph(net, ms);
    bool pass = !is_tree(graph);

    GbpEngine engine(graph, net, adm, Schedule{1, 1, 0.0}, DampingConfig{0.0, 0.5, 0});
    const StateVector flat = StateVector::flat_start(3);
    const OuterResult result = engine.outer_iteration(flat, 1, 500);

    const std::vector<double> dx = solve_linear_wls(assemble(net, ms, flat, adm));
    double worst = 0.0;
    for (int flat_idx = 0; flat_idx < 6; ++flat_idx) {
        const StateVarId var = flat_idx < 3 ? StateVarId::angle(flat_idx + 1)
                                            : StateVarId::magnitude(flat_idx - 2);
        const int col = reduced_index(var, 3, 1);
        if (col < 0) continue;
        worst = std::max(worst, std::abs(result.increment[flat_idx] - dx[col]));
    }
    if (worst > 1e-8) pass = false;
    char detail[96];
    std::snprintf(detail, sizeof(detail), "worst increment deviation %.2e", worst);
    report(3, "loopy graph agrees with linear WLS", pass, detail);
}

// --- 4: end-to-end 14-bus runs ----------------------------------------------

void criterion_4() {
    const auto start = Clock::now();
    RunConfig cfg = base_config();
    cfg.sigma2_set = {1e-8}; // 0.0001^2

    const NetworkCase net = load_case(cfg.case_path);
    const AdmittanceEntries adm = build_admittance(net);
    const auto devices = load_devices(cfg.devices_path);

    int good = 0;
    bool schedule_ok = true;
    double worst = 0.0;
    for (int trial = 0; trial < cfg.trials; ++trial) {
        const std::uint64_t trial_seed = rng::mix(cfg.seed, 0, trial);
        const auto ms =
            generate_measurements(net, devices, cfg.sigma2_set[0], rng::mix(trial_seed, 1));
        const WlsSolution wls = gauss_newton(net, ms, StateVector::flat_start(14), 1e-10, 50);
        if (!wls.converged) continue;

        const FactorGraph graph = build_graph(net, ms);
        GbpEngine engine(graph, net, adm, Schedule{cfg.q, cfg.nu_max, 0.0},
                         DampingConfig{cfg.p, cfg.alpha, rng::mix(trial_seed, 2)});
        const ConvergenceTrace trace = engine.run(StateVector::flat_start(14));
        if (trace.total_inner_iterations() != 4676) schedule_ok = false;

        const double final_rmse = rmse(wls.state, trace.entries.back().state);
        worst = std::max(worst, final_rmse);
        if (final_rmse <= 1e-5) ++good;
    }
    const double elapsed = seconds_since(start);
    const bool pass = schedule_ok && good >= 95 && elapsed < 120.0;
    char detail[160];
    std::snprintf(detail, sizeof(detail),
                  "%d/100 trials within 1e-5 (worst %.2e), 4676 inner iterations %s, %.1f s",
                  good, worst, schedule_ok ? "exact" : "WRONG", elapsed);
    report(4, "14-bus estimate matches the nonlinear WLS solution", pass, detail);
}

// --- 5: noise sweep trend ----------------------------------------------------

void criterion_5() {
    RunConfig cfg = base_config();
    cfg.sigma2_set = {1e-4, 1e-6, 1e-8, 1e-10};
    const MonteCarloResult result = monte_carlo(cfg);

    auto median_at = [&](double sigma2, int nu) {
        for (const SummaryRow& row : result.summary) {
            if (row.sigma2 == sigma2 && row.nu == nu) return row.median_rmse;
        }
        return std::numeric_limits<double>::quiet_NaN();
    };

    bool pass = result.anomalies.empty();
    std::string detail;
    for (double sigma2 : cfg.sigma2_set) {
        const double first = median_at(sigma2, 1);
        const double final = median_at(sigma2, 7);
        if (!(final < first)) pass = false;
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.0e:%.1e ", sigma2, final);
        detail += buf;
    }
    for (std::size_t k = 1; k < cfg.sigma2_set.size(); ++k) {
        if (!(median_at(cfg.sigma2_set[k], 7) < median_at(cfg.sigma2_set[k - 1], 7))) {
            pass = false;
        }
    }
    report(5, "median RMSE falls over iterations and with noise", pass,
           "final medians " + detail);
}

// --- 6: inner-iteration exponent comparison ----------------------------------

void criterion_6() {
    RunConfig cfg = base_config();
    cfg.sigma2_set = {1e-4}; // 0.01^2
    cfg.q_list = {2, 4};
    const auto rows = sweep_q(cfg);

    auto final_median = [&](int q) {
        double value = std::numeric_limits<double>::quiet_NaN();
        int best_nu = 0;
        for (const QSweepRow& row : rows) {
            if (row.q == q && row.nu > best_nu) {
                best_nu = row.nu;
                value = row.median_rmse;
            }
        }
        return value;
    };
    const double q2 = final_median(2);
    const double q4 = final_median(4);
    const bool pass = std::isfinite(q2) && std::isfinite(q4) && q4 <= q2;
    char detail[96];
    std::snprintf(detail, sizeof(detail), "median final RMSE q=4: %.2e vs q=2: %.2e", q4, q2);
    report(6, "q=4 beats q=2 at a matched inner-iteration budget", pass, detail);
}

// --- 7: damping neutrality and determinism ------------------------------------

void criterion_7() {
    bool pass = true;
    std::string detail;

    // p = 0 must be bit-identical to a run with the damping path disabled.
    {
        const NetworkCase net = test_support::load_ieee14();
        const AdmittanceEntries adm = build_admittance(net);
        const auto devices = load_devices(test_support::data_dir() / "ieee14_61dev.json");
        const auto ms = generate_measurements(net, devices, 1e-8, 91);
        const FactorGraph graph = build_graph(net, ms);

        DampingConfig p_zero{0.0, 0.5, 7};
        DampingConfig disabled{0.5, 0.5, 7};
        disabled.enabled = false;
        GbpEngine a(graph, net, adm, Schedule{3, 5, 0.0}, p_zero);
        GbpEngine b(graph, net, adm, Schedule{3, 5, 0.0}, disabled);
        const ConvergenceTrace ta = a.run(StateVector::flat_start(14));
        const ConvergenceTrace tb = b.run(StateVector::flat_start(14));
        bool identical = ta.entries.size() == tb.entries.size();
        for (std::size_t k = 0; identical && k < ta.entries.size(); ++k) {
            identical = ta.entries[k].state == tb.entries[k].state &&
                        ta.entries[k].increment == tb.entries[k].increment;
        }
        if (!identical) pass = false;
        detail += identical ? "p=0 bit-identical" : "p=0 DIFFERS";
    }

    // A fixed (config, seed) must give byte-identical CSVs on 1 and 4 threads,
    // and across repeated runs.
    {
        namespace fs = std::filesystem;
        const fs::path base = fs::temp_directory_path() / "sebp_acceptance_csv";
        fs::remove_all(base);
        RunConfig cfg = base_config();
        cfg.sigma2_set = {1e-8};
        cfg.trials = 20;

        bool identical = true;
        cfg.output_dir = base / "t1";
        monte_carlo(cfg);
        cfg.output_dir = base / "t1_again";
        monte_carlo(cfg);
        cfg.output_dir = base / "t4";
        cfg.threads = 4;
        monte_carlo(cfg);
        for (const char* name : {"rmse_records.csv", "summary.csv", "anomalies.csv"}) {
            const std::string reference = slurp(base / "t1" / name);
            if (reference != slurp(base / "t1_again" / name)) identical = false;
            if (reference != slurp(base / "t4" / name)) identical = false;
        }
        if (!identical) pass = false;
        detail += identical ? ", CSVs byte-identical across reruns and thread counts"
                            : ", CSVs DIFFER";
        fs::remove_all(base);
    }
    report(7, "damping neutrality and deterministic output", pass, detail);
}

// --- 8: noise-free recovery ----------------------------------------------------

void criterion_8() {
    const NetworkCase net = test_support::load_ieee14();
    const AdmittanceEntries adm = build_admittance(net);
    const auto devices = load_devices(test_support::data_dir() / "ieee14_61dev.json");
    const auto ms = generate_measurements(net, devices, 1e-8, 55, 0.0);

    const WlsSolution wls = gauss_newton(net, ms, StateVector::flat_start(14), 1e-10, 50);
    const double wls_gap = max_abs_state_diff(wls.state, true_state(net));

    const FactorGraph graph = build_graph(net, ms);
    GbpEngine engine(graph, net, adm, Schedule{4, 7, 0.0}, DampingConfig{0.5, 0.5, 3});
    const ConvergenceTrace trace = engine.run(StateVector::flat_start(14));
    const double bp_gap = max_abs_state_diff(trace.entries.back().state, wls.state);

    const bool pass = wls.converged && wls_gap <= 1e-8 && bp_gap <= 1e-6;
    char detail[96];
    std::snprintf(detail, sizeof(detail), "oracle-truth gap %.2e, estimator-oracle gap %.2e",
                  wls_gap, bp_gap);
    report(8, "noise-free measurements recover the true state", pass, detail);
}

} // namespace

int main() {
    const std::function<void()> criteria[] = {criterion_1, criterion_2, criterion_3,
                                              criterion_4, criterion_5, criterion_6,
                                              criterion_7, criterion_8};
    for (const auto& criterion : criteria) {
        try {
            criterion();
        } catch (const std::exception& e) {
            std::printf("FAIL  (unhandled exception: %s)\n", e.what());
            ++g_failures;
        }
    }
    std::printf("%s: %d of 8 criteria failed\n", g_failures == 0 ? "SUCCESS" : "FAILURE",
                g_failures);
    return g_failures;
}
