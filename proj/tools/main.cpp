// Command-line harness for the belief-propagation state estimator.
//
// Exit codes: 0 success, 1 usage error, 2 validation error, 3 numerical
// failure.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "sebp/csv.hpp"
#include "sebp/errors.hpp"
#include "sebp/factor_graph.hpp"
#include "sebp/gbp.hpp"
#include "sebp/harness.hpp"
#include "sebp/measurement.hpp"
#include "sebp/network.hpp"
#include "sebp/rng.hpp"
#include "sebp/wls.hpp"

namespace {

struct EstimateOptions {
    std::string case_path;
    std::string devices_path;
    double sigma2 = 1e-8;
    double noise_scale = 1.0;
    int q = 4;
    int nu_max = 7;
    double p = 0.5;
    double alpha = 0.5;
    std::uint64_t seed = 1;
    double tol = 0.0;
    std::string states_csv;
};

std::vector<sebp::Measurement> make_measurements(const EstimateOptions& opt,
                                                 const sebp::NetworkCase& net) {
    const auto devices = sebp::load_devices(opt.devices_path);
    return sebp::generate_measurements(net, devices, opt.sigma2, sebp::rng::mix(opt.seed, 1),
                                       opt.noise_scale);
}

int run_estimate(const EstimateOptions& opt) {
    const sebp::NetworkCase net = sebp::load_case(opt.case_path);
    const sebp::AdmittanceEntries adm = sebp::build_admittance(net);
    const auto measurements = make_measurements(opt, net);

    const sebp::StateVector flat = sebp::StateVector::flat_start(net.bus_count());
    const sebp::WlsSolution wls = sebp::gauss_newton(net, measurements, flat, 1e-10, 50);
    if (!wls.converged) {
        std::cerr << "reference estimator did not converge\n";
        return 3;
    }

    const sebp::FactorGraph graph = sebp::build_graph(net, measurements);
    sebp::GbpEngine engine(graph, net, adm, sebp::Schedule{opt.q, opt.nu_max, opt.tol},
                           sebp::DampingConfig{opt.p, opt.alpha, sebp::rng::mix(opt.seed, 2)});
    sebp::ConvergenceTrace trace = engine.run(flat);
    for (sebp::TraceEntry& entry : trace.entries) {
        entry.rmse = sebp::rmse(wls.state, entry.state);
    }

    sebp::write_trace_csv(trace, std::cout);
    if (!opt.states_csv.empty()) {
        std::ofstream out(opt.states_csv, std::ios::binary);
        if (!out) {
            std::cerr << "cannot write " << opt.states_csv << '\n';
            return 1;
        }
        sebp::write_states_csv(trace, out);
    }
    return 0;
}

int run_wls(const EstimateOptions& opt) {
    const sebp::NetworkCase net = sebp::load_case(opt.case_path);
    const sebp::AdmittanceEntries adm = sebp::build_admittance(net);
    const auto measurements = make_measurements(opt, net);

    const sebp::StateVector flat = sebp::StateVector::flat_start(net.bus_count());
    const sebp::WlsSolution wls = sebp::gauss_newton(net, measurements, flat, 1e-10, 50);

    std::cout << "quantity,value\n";
    for (int i = 1; i <= net.bus_count(); ++i) {
        std::cout << "theta_" << i << ',' << sebp::csv::format_double(wls.state.theta[i - 1])
                  << '\n';
    }
    for (int i = 1; i <= net.bus_count(); ++i) {
        std::cout << "v_" << i << ',' << sebp::csv::format_double(wls.state.v[i - 1]) << '\n';
    }
    std::cout << "iterations," << wls.iterations << '\n';
    std::cout << "converged," << (wls.converged ? 1 : 0) << '\n';
    std::cout << "final_max_increment," << sebp::csv::format_double(wls.final_max_increment)
              << '\n';
    std::cout << "optimality_residual_inf,"
              << sebp::csv::format_double(
                     sebp::optimality_residual_inf(net, measurements, wls.state, adm))
              << '\n';
    return wls.converged ? 0 : 3;
}

int run_graph_dump(const EstimateOptions& opt) {
    const sebp::NetworkCase net = sebp::load_case(opt.case_path);
    const auto devices = sebp::load_devices(opt.devices_path);
    // Graph structure depends on kinds and locations only, so noise-free
    // values are fine here.
    const auto measurements =
        sebp::generate_measurements(net, devices, opt.sigma2, opt.seed, 0.0);
    sebp::dump_edges(sebp::build_graph(net, measurements), std::cout);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"AC state estimation by Gaussian belief propagation"};
    app.require_subcommand(1);

    EstimateOptions opt;

    auto add_common = [&](CLI::App* cmd, bool with_devices) {
        cmd->add_option("--case", opt.case_path, "case file (JSON)")->required();
        if (with_devices) {
            cmd->add_option("--devices", opt.devices_path, "device list (JSON)")->required();
            cmd->add_option("--sigma2", opt.sigma2, "default measurement variance");
            cmd->add_option("--noise-scale", opt.noise_scale, "noise scale (0 = noise-free)");
            cmd->add_option("--seed", opt.seed, "measurement/damping seed");
        }
    };

    CLI::App* estimate = app.add_subcommand("estimate", "single run, trace CSV on stdout");
    add_common(estimate, true);
    estimate->add_option("--q", opt.q, "inner iteration exponent");
    estimate->add_option("--nu-max", opt.nu_max, "outer iteration count");
    estimate->add_option("--p", opt.p, "damping probability");
    estimate->add_option("--alpha", opt.alpha, "damping weight");
    estimate->add_option("--tol", opt.tol, "early-stop tolerance (0 = full schedule)");
    estimate->add_option("--states-csv", opt.states_csv, "also write per-iteration states");

    CLI::App* wls = app.add_subcommand("wls", "centralized reference estimate as CSV");
    add_common(wls, true);

    std::string config_path;
    CLI::App* montecarlo = app.add_subcommand("montecarlo", "Monte-Carlo sweep from a config");
    montecarlo->add_option("--config", config_path, "run config (JSON)")->required();

    CLI::App* sweepq = app.add_subcommand("sweep-q", "compare inner-iteration exponents");
    sweepq->add_option("--config", config_path, "run config (JSON) with q_list")->required();

    CLI::App* graph = app.add_subcommand("graph", "factor graph inspection");
    graph->require_subcommand(1);
    CLI::App* graph_dump = graph->add_subcommand("dump", "edge list on stdout");
    add_common(graph_dump, true);

    CLI::App* case_cmd = app.add_subcommand("case", "case file inspection");
    case_cmd->require_subcommand(1);
    std::string validate_path;
    CLI::App* case_validate = case_cmd->add_subcommand("validate", "load and validate a case");
    case_validate->add_option("path", validate_path, "case file (JSON)")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return e.get_exit_code() == 0 ? 0 : 1;
    }

    try {
        if (*estimate) return run_estimate(opt);
        if (*wls) return run_wls(opt);
        if (*montecarlo) {
            sebp::monte_carlo(sebp::load_run_config(config_path));
            return 0;
        }
        if (*sweepq) {
            sebp::sweep_q(sebp::load_run_config(config_path));
            return 0;
        }
        if (*graph_dump) return run_graph_dump(opt);
        if (*case_validate) {
            const sebp::NetworkCase net = sebp::load_case(validate_path);
            std::cout << "ok: " << net.bus_count() << " buses, " << net.branches.size()
                      << " branches\n";
            return 0;
        }
    } catch (const sebp::ParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const sebp::ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const sebp::NumericalError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
