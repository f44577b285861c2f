#include <benchmark/benchmark.h>

#include "sebp/factor_graph.hpp"
#include "sebp/gbp.hpp"
#include "sebp/measurement.hpp"
#include "sebp/network.hpp"
#include "sebp/wls.hpp"

namespace {

using namespace sebp;

struct Scenario {
    NetworkCase net;
    AdmittanceEntries adm;
    std::vector<Measurement> measurements;
    FactorGraph graph;
    StateVector flat;
};

const Scenario& ieee14_scenario() {
    static const Scenario scenario = [] {
        Scenario s;
        s.net = load_case(std::string(SEBP_DATA_DIR) + "/ieee14.json");
        s.adm = build_admittance(s.net);
        const auto devices = load_devices(std::string(SEBP_DATA_DIR) + "/ieee14_61dev.json");
        s.measurements = generate_measurements(s.net, devices, 1e-8, 7);
        s.graph = build_graph(s.net, s.measurements);
        s.flat = StateVector::flat_start(s.net.bus_count());
        return s;
    }();
    return scenario;
}

void BM_EvaluateInjection(benchmark::State& state) {
    const Scenario& s = ieee14_scenario();
    Measurement m{MeasurementKind::ActiveInjection, 2, 0, 0, 0.0, 1e-4};
    for (auto _ : state) {
        benchmark::DoNotOptimize(evaluate_h(m, s.flat, s.adm, s.net));
    }
}
BENCHMARK(BM_EvaluateInjection);

void BM_JacobianRowFlow(benchmark::State& state) {
    const Scenario& s = ieee14_scenario();
    Measurement m{MeasurementKind::ActivePowerFlow, 0, 1, 2, 0.0, 1e-4};
    for (auto _ : state) {
        benchmark::DoNotOptimize(jacobian_row(m, s.flat, s.adm, s.net));
    }
}
BENCHMARK(BM_JacobianRowFlow);

void BM_BuildGraph(benchmark::State& state) {
    const Scenario& s = ieee14_scenario();
    for (auto _ : state) {
        benchmark::DoNotOptimize(build_graph(s.net, s.measurements));
    }
}
BENCHMARK(BM_BuildGraph);

// One linearization plus `tau` synchronous message sweeps over the 61-device
// graph; the per-iteration cost is what the inner loop pays.
void BM_OuterIteration(benchmark::State& state) {
    const Scenario& s = ieee14_scenario();
    const int tau = static_cast<int>(state.range(0));
    GbpEngine engine(s.graph, s.net, s.adm, Schedule{4, 7, 0.0}, DampingConfig{0.5, 0.5, 1});
    for (auto _ : state) {
        benchmark::DoNotOptimize(engine.outer_iteration(s.flat, 1, tau));
    }
    state.SetItemsProcessed(state.iterations() * tau);
}
BENCHMARK(BM_OuterIteration)->Arg(1)->Arg(16)->Arg(256);

void BM_FullRun(benchmark::State& state) {
    const Scenario& s = ieee14_scenario();
    for (auto _ : state) {
        GbpEngine engine(s.graph, s.net, s.adm, Schedule{4, 7, 0.0},
                         DampingConfig{0.5, 0.5, 1});
        benchmark::DoNotOptimize(engine.run(s.flat));
    }
}
BENCHMARK(BM_FullRun)->Unit(benchmark::kMillisecond);

void BM_SolveLinearWls(benchmark::State& state) {
    const Scenario& s = ieee14_scenario();
    const LinearSystemBundle bundle = assemble(s.net, s.measurements, s.flat, s.adm);
    for (auto _ : state) {
        benchmark::DoNotOptimize(solve_linear_wls(bundle));
    }
}
BENCHMARK(BM_SolveLinearWls);

void BM_GaussNewton(benchmark::State& state) {
    const Scenario& s = ieee14_scenario();
    for (auto _ : state) {
        benchmark::DoNotOptimize(gauss_newton(s.net, s.measurements, s.flat, 1e-10, 50));
    }
}
BENCHMARK(BM_GaussNewton)->Unit(benchmark::kMicrosecond);

} // namespace

BENCHMARK_MAIN();
