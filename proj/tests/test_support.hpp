#pragma once

#include <filesystem>
#include <string>

#include "sebp/measurement.hpp"
#include "sebp/network.hpp"

namespace test_support {

inline std::filesystem::path data_dir() { return SEBP_DATA_DIR; }

inline sebp::NetworkCase load_toy3() { return sebp::load_case(data_dir() / "toy3.json"); }
inline sebp::NetworkCase load_ieee14() { return sebp::load_case(data_dir() / "ieee14.json"); }

/// Two buses, one branch, bus 1 slack. A flow measurement plus direct
/// measurements on every variable makes the factor graph a tree.
inline sebp::NetworkCase two_bus_case() {
    sebp::NetworkCase net;
    net.buses = {{1, true, 1.01, 0.0}, {2, false, 0.97, -0.05}};
    net.branches = {{1, 2, 0.5, -2.0, 0.05, 0.1, 0.0, 0.08}};
    sebp::validate_case(net);
    return net;
}

/// The five-device set of the three-bus example: V1, theta2, theta3 direct,
/// P12 and P23 flows.
inline std::vector<sebp::Device> toy3_devices() {
    using sebp::MeasurementKind;
    return {
        {MeasurementKind::VoltageMagnitude, 1, 0, 0, {}},
        {MeasurementKind::VoltageAngle, 2, 0, 0, {}},
        {MeasurementKind::VoltageAngle, 3, 0, 0, {}},
        {MeasurementKind::ActivePowerFlow, 0, 1, 2, {}},
        {MeasurementKind::ActivePowerFlow, 0, 2, 3, {}},
    };
}

} // namespace test_support
