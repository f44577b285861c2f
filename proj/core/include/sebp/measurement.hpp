#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sebp/network.hpp"

namespace sebp {

enum class MeasurementKind {
    ActivePowerFlow,
    ReactivePowerFlow,
    ActiveInjection,
    ReactiveInjection,
    CurrentMagnitude,
    VoltageMagnitude,
    VoltageAngle,
};

/// Flow and current kinds live on a directed branch (i, j); the others on a bus.
bool is_branch_kind(MeasurementKind kind);

std::string_view kind_name(MeasurementKind kind);
MeasurementKind kind_from_name(std::string_view name);

struct Measurement {
    MeasurementKind kind = MeasurementKind::VoltageMagnitude;
    int bus = 0;  // injection / voltage kinds
    int from = 0; // flow / current kinds, measuring end
    int to = 0;
    double value = 0.0;    // z, per-unit (radians for angles)
    double variance = 0.0; // sigma^2, > 0
};

/// State variable identity: the angle or the magnitude of one bus.
enum class StateVarKind : std::uint8_t { Angle, Magnitude };

struct StateVarId {
    StateVarKind kind = StateVarKind::Angle;
    int bus = 0;

    static StateVarId angle(int bus) { return {StateVarKind::Angle, bus}; }
    static StateVarId magnitude(int bus) { return {StateVarKind::Magnitude, bus}; }

    /// Canonical flat index: angles of buses 1..N, then magnitudes of buses 1..N.
    int flat_index(int n_buses) const {
        return kind == StateVarKind::Angle ? bus - 1 : n_buses + bus - 1;
    }

    std::string name() const;

    auto operator<=>(const StateVarId&) const = default;
};

struct StateVector {
    std::vector<double> theta; // radians
    std::vector<double> v;     // per-unit, > 0

    static StateVector flat_start(int n_buses);

    int bus_count() const { return static_cast<int>(theta.size()); }
    int dimension() const { return 2 * bus_count(); }

    double value(StateVarId id) const {
        return id.kind == StateVarKind::Angle ? theta[id.bus - 1] : v[id.bus - 1];
    }
    double& value(StateVarId id) {
        return id.kind == StateVarKind::Angle ? theta[id.bus - 1] : v[id.bus - 1];
    }

    bool operator==(const StateVector&) const = default;
};

/// x + dx where dx is in canonical flat order (size 2N).
StateVector apply_increment(const StateVector& x, std::span<const double> dx);

/// Sparse gradient of a measurement function, keyed by state variable and
/// sorted by canonical flat index.
struct JacobianRow {
    std::vector<std::pair<StateVarId, double>> entries;

    std::optional<double> at(StateVarId id) const;
    std::size_t size() const { return entries.size(); }
};

/// Below this current magnitude (p.u.) the current-magnitude Jacobian is
/// treated as singular.
inline constexpr double kCurrentEpsilon = 1e-6;

/// Value of the measurement function at state x.
double evaluate_h(const Measurement& m, const StateVector& x, const AdmittanceEntries& adm,
                  const NetworkCase& net);

/// Analytic partial derivatives of the measurement function at state x.
/// Throws CurrentSingularity for CurrentMagnitude when h(x) < kCurrentEpsilon.
JacobianRow jacobian_row(const Measurement& m, const StateVector& x,
                         const AdmittanceEntries& adm, const NetworkCase& net);

/// A measurement device: a kind and a location, with an optional per-device
/// variance override.
struct Device {
    MeasurementKind kind = MeasurementKind::VoltageMagnitude;
    int bus = 0;
    int from = 0;
    int to = 0;
    std::optional<double> sigma2;
};

std::vector<Device> load_devices(const std::filesystem::path& path);
std::vector<Device> devices_from_json(const nlohmann::json& doc);

/// z = h(true state) + noise_scale * e with e ~ N(0, sigma^2), one independent
/// draw per device, reproducible from `seed`. The recorded variance is always
/// the device's sigma^2 (noise_scale only scales the injected noise).
std::vector<Measurement> generate_measurements(const NetworkCase& net,
                                               std::span<const Device> devices, double sigma2,
                                               std::uint64_t seed, double noise_scale = 1.0);

} // namespace sebp
