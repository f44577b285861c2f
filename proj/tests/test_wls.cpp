#include <doctest.h>

#include <cmath>

#include "sebp/errors.hpp"
#include "sebp/wls.hpp"
#include "test_support.hpp"

using namespace sebp;

namespace {

StateVector true_state(const NetworkCase& net) {
    StateVector x;
    for (const Bus& bus : net.buses) {
        x.theta.push_back(bus.theta_true);
        x.v.push_back(bus.v_true);
    }
    return x;
}

std::vector<Measurement> noise_free_toy() {
    const NetworkCase net = test_support::load_toy3();
    return generate_measurements(net, test_support::toy3_devices(), 1e-4, 1, 0.0);
}

} // namespace

TEST_SUITE_BEGIN("wls");

TEST_CASE("assemble") {
    const NetworkCase net = test_support::two_bus_case();
    const AdmittanceEntries adm = build_admittance(net);
    const StateVector flat = StateVector::flat_start(2);

    SUBCASE("voltage measurement gives an identity row") {
        std::vector<Measurement> ms{{MeasurementKind::VoltageMagnitude, 2, 0, 0, 1.03, 1e-4}};
        const LinearSystemBundle bundle = assemble(net, ms, flat, adm);
        REQUIRE(bundle.row_count() == 1);
        REQUIRE(bundle.rows[0].size() == 1);
        CHECK(*bundle.rows[0].at(StateVarId::magnitude(2)) == 1.0);
        CHECK(bundle.residuals[0] == doctest::Approx(0.03));
        CHECK(bundle.weights[0] == doctest::Approx(1e4));
    }
    SUBCASE("exact measurements give zero residuals") {
        std::vector<Measurement> ms{{MeasurementKind::ActivePowerFlow, 0, 1, 2, 0.0, 1e-4}};
        ms[0].value = evaluate_h(ms[0], flat, adm, net);
        const LinearSystemBundle bundle = assemble(net, ms, flat, adm);
        CHECK(bundle.residuals[0] == 0.0);
    }
    SUBCASE("singular current rows are dropped and reported") {
        NetworkCase bare;
        bare.buses = {{1, true, 1.0, 0.0}, {2, false, 1.0, 0.0}};
        bare.branches = {{1, 2, 0.5, -2.0, 0.0, 0.0, 0.0, 0.0}};
        const AdmittanceEntries bare_adm = build_admittance(bare);
        std::vector<Measurement> ms{
            {MeasurementKind::VoltageMagnitude, 1, 0, 0, 1.0, 1e-4},
            {MeasurementKind::CurrentMagnitude, 0, 1, 2, 0.0, 1e-4},
        };
        const LinearSystemBundle bundle = assemble(bare, ms, flat, bare_adm);
        CHECK(bundle.row_count() == 1);
        CHECK(bundle.dropped_measurements == std::vector<int>{1});
    }
}

TEST_CASE("toy system at flat start is 5 by 5") {
    const NetworkCase net = test_support::load_toy3();
    const AdmittanceEntries adm = build_admittance(net);
    const LinearSystemBundle bundle =
        assemble(net, noise_free_toy(), StateVector::flat_start(3), adm);
    CHECK(bundle.row_count() == 5);
    CHECK(bundle.reduced_dimension() == 5);
    CHECK(full_column_rank(bundle));
}

TEST_CASE("solve_linear_wls") {
    SUBCASE("scalar normal equation") {
        NetworkCase net;
        net.buses = {{1, true, 1.0, 0.0}};
        const AdmittanceEntries adm = build_admittance(net);
        std::vector<Measurement> ms{{MeasurementKind::VoltageMagnitude, 1, 0, 0, 6.0, 1.0}};
        const LinearSystemBundle bundle = assemble(net, ms, StateVector::flat_start(1), adm);
        const auto dx = solve_linear_wls(bundle);
        REQUIRE(dx.size() == 1);
        CHECK(dx[0] == doctest::Approx(5.0).epsilon(1e-12));
    }
    SUBCASE("duplicated rows do not move the solution") {
        const NetworkCase net = test_support::load_toy3();
        const AdmittanceEntries adm = build_admittance(net);
        auto ms = noise_free_toy();
        const StateVector flat = StateVector::flat_start(3);
        const auto base = solve_linear_wls(assemble(net, ms, flat, adm));
        auto doubled = ms;
        doubled.push_back(ms.back());
        const auto solved = solve_linear_wls(assemble(net, doubled, flat, adm));
        REQUIRE(base.size() == solved.size());
        for (std::size_t i = 0; i < base.size(); ++i) {
            CHECK(solved[i] == doctest::Approx(base[i]).epsilon(1e-10));
        }
    }
    SUBCASE("scaling every variance leaves the increment unchanged") {
        const NetworkCase net = test_support::two_bus_case();
        const AdmittanceEntries adm = build_admittance(net);
        std::vector<Measurement> ms{
            {MeasurementKind::VoltageMagnitude, 1, 0, 0, 1.013, 1e-4},
            {MeasurementKind::VoltageMagnitude, 2, 0, 0, 0.968, 2e-4},
            {MeasurementKind::VoltageAngle, 2, 0, 0, -0.051, 1e-4},
            {MeasurementKind::ActivePowerFlow, 0, 1, 2, 0.12, 4e-4},
        };
        const StateVector flat = StateVector::flat_start(2);
        const auto base = solve_linear_wls(assemble(net, ms, flat, adm));
        for (Measurement& m : ms) m.variance *= 37.5;
        const auto scaled = solve_linear_wls(assemble(net, ms, flat, adm));
        for (std::size_t i = 0; i < base.size(); ++i) {
            const double denom = std::max(std::abs(base[i]), 1e-30);
            CHECK(std::abs(scaled[i] - base[i]) / denom <= 1e-12);
        }
    }
    SUBCASE("missing flow makes the system rank deficient") {
        const NetworkCase net = test_support::load_toy3();
        const AdmittanceEntries adm = build_admittance(net);
        auto ms = noise_free_toy();
        ms.pop_back(); // v_3 now appears in no row
        const LinearSystemBundle bundle = assemble(net, ms, StateVector::flat_start(3), adm);
        CHECK_FALSE(full_column_rank(bundle));
        CHECK_THROWS_AS(solve_linear_wls(bundle), RankDeficient);
    }
}

TEST_CASE("gauss_newton") {
    const NetworkCase net = test_support::load_toy3();

    SUBCASE("noise-free measurements recover the true state") {
        const auto ms = noise_free_toy();
        const WlsSolution sol = gauss_newton(net, ms, StateVector::flat_start(3), 1e-10, 10);
        CHECK(sol.converged);
        CHECK(sol.iterations <= 10);
        const StateVector truth = true_state(net);
        for (int i = 0; i < 3; ++i) {
            CHECK(std::abs(sol.state.theta[i] - truth.theta[i]) <= 1e-8);
            CHECK(std::abs(sol.state.v[i] - truth.v[i]) <= 1e-8);
        }
    }
    SUBCASE("huge tolerance stops after one iteration") {
        const auto ms = noise_free_toy();
        const AdmittanceEntries adm = build_admittance(net);
        const StateVector flat = StateVector::flat_start(3);
        const auto dx = solve_linear_wls(assemble(net, ms, flat, adm));
        const WlsSolution sol =
            gauss_newton(net, ms, flat, std::numeric_limits<double>::infinity(), 10);
        CHECK(sol.iterations == 1);
        CHECK(sol.converged);
        CHECK(sol.state.theta[0] == 0.0); // slack angle pinned
        int col = 0;
        for (int flat_idx = 1; flat_idx < 6; ++flat_idx) {
            const double before = flat_idx < 3 ? flat.theta[flat_idx] : flat.v[flat_idx - 3];
            const double after =
                flat_idx < 3 ? sol.state.theta[flat_idx] : sol.state.v[flat_idx - 3];
            CHECK(after - before == doctest::Approx(dx[col]).epsilon(1e-12));
            ++col;
        }
    }
    SUBCASE("ieee14 61-device scenario converges with first-order optimality") {
        const NetworkCase ieee = test_support::load_ieee14();
        const auto devices = load_devices(test_support::data_dir() / "ieee14_61dev.json");
        const auto ms = generate_measurements(ieee, devices, 1e-4, 17);
        const WlsSolution sol = gauss_newton(ieee, ms, StateVector::flat_start(14), 1e-10, 10);
        CHECK(sol.converged);
        CHECK(sol.iterations <= 10);

        const AdmittanceEntries adm = build_admittance(ieee);
        CHECK(optimality_residual_inf(ieee, ms, sol.state, adm) <= 1e-6);
    }
}

TEST_CASE("61-device scenario is observable at flat start") {
    const NetworkCase net = test_support::load_ieee14();
    const AdmittanceEntries adm = build_admittance(net);
    const auto devices = load_devices(test_support::data_dir() / "ieee14_61dev.json");
    const auto ms = generate_measurements(net, devices, 1e-4, 3);
    const LinearSystemBundle bundle = assemble(net, ms, StateVector::flat_start(14), adm);
    CHECK(full_column_rank(bundle));
}

TEST_SUITE_END();
