#include "sebp/measurement.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "sebp/errors.hpp"
#include "sebp/rng.hpp"

namespace sebp {

namespace {

struct BranchSide {
    const Branch* branch;
    double g_s;  // shunt conductance at the measuring end
    double b_s;  // shunt susceptance at the measuring end
};

// Resolves a directed (from, to) location onto a stored branch and picks the
// shunt of the measuring end.
BranchSide branch_side(const Measurement& m, const NetworkCase& net) {
    const Branch* br = net.find_branch(m.from, m.to);
    if (br == nullptr) {
        throw ValidationError("no branch between buses " + std::to_string(m.from) + " and " +
                              std::to_string(m.to));
    }
    if (br->from == m.from) return {br, br->g_sf, br->b_sf};
    return {br, br->g_st, br->b_st};
}

struct CurrentConstants {
    double a, b, c, d;
};

CurrentConstants current_constants(const BranchSide& side) {
    const double g = side.branch->g;
    const double b = side.branch->b;
    const double gs = side.g_s;
    const double bs = side.b_s;
    CurrentConstants k;
    k.a = (g + gs) * (g + gs) + (b + bs) * (b + bs);
    k.b = g * g + b * b;
    k.c = g * (g + gs) + b * (b + bs);
    k.d = g * bs - b * gs;
    return k;
}

void check_state(const Measurement& m, const StateVector& x, const NetworkCase& net) {
    if (x.bus_count() != net.bus_count()) {
        throw ValidationError("state dimension does not match network");
    }
    if (!is_branch_kind(m.kind) && (m.bus < 1 || m.bus > net.bus_count())) {
        throw ValidationError("measurement bus " + std::to_string(m.bus) + " out of range");
    }
}

} // namespace

bool is_branch_kind(MeasurementKind kind) {
    switch (kind) {
    case MeasurementKind::ActivePowerFlow:
    case MeasurementKind::ReactivePowerFlow:
    case MeasurementKind::CurrentMagnitude:
        return true;
    default:
        return false;
    }
}

std::string_view kind_name(MeasurementKind kind) {
    switch (kind) {
    case MeasurementKind::ActivePowerFlow: return "active_power_flow";
    case MeasurementKind::ReactivePowerFlow: return "reactive_power_flow";
    case MeasurementKind::ActiveInjection: return "active_injection";
    case MeasurementKind::ReactiveInjection: return "reactive_injection";
    case MeasurementKind::CurrentMagnitude: return "current_magnitude";
    case MeasurementKind::VoltageMagnitude: return "voltage_magnitude";
    case MeasurementKind::VoltageAngle: return "voltage_angle";
    }
    return "unknown";
}

MeasurementKind kind_from_name(std::string_view name) {
    if (name == "active_power_flow") return MeasurementKind::ActivePowerFlow;
    if (name == "reactive_power_flow") return MeasurementKind::ReactivePowerFlow;
    if (name == "active_injection") return MeasurementKind::ActiveInjection;
    if (name == "reactive_injection") return MeasurementKind::ReactiveInjection;
    if (name == "current_magnitude") return MeasurementKind::CurrentMagnitude;
    if (name == "voltage_magnitude") return MeasurementKind::VoltageMagnitude;
    if (name == "voltage_angle") return MeasurementKind::VoltageAngle;
    throw ParseError("unknown measurement kind '" + std::string(name) + "'");
}

std::string StateVarId::name() const {
    return (kind == StateVarKind::Angle ? "theta_" : "v_") + std::to_string(bus);
}

StateVector StateVector::flat_start(int n_buses) {
    StateVector x;
    x.theta.assign(n_buses, 0.0);
    x.v.assign(n_buses, 1.0);
    return x;
}

StateVector apply_increment(const StateVector& x, std::span<const double> dx) {
    if (static_cast<int>(dx.size()) != x.dimension()) {
        throw ValidationError("increment dimension mismatch");
    }
    StateVector out = x;
    const int n = x.bus_count();
    for (int i = 0; i < n; ++i) {
        out.theta[i] += dx[i];
        out.v[i] += dx[n + i];
    }
    return out;
}

std::optional<double> JacobianRow::at(StateVarId id) const {
    for (const auto& [key, value] : entries) {
        if (key == id) return value;
    }
    return std::nullopt;
}

double evaluate_h(const Measurement& m, const StateVector& x, const AdmittanceEntries& adm,
                  const NetworkCase& net) {
    check_state(m, x, net);
    switch (m.kind) {
    case MeasurementKind::VoltageMagnitude:
        return x.v[m.bus - 1];
    case MeasurementKind::VoltageAngle:
        return x.theta[m.bus - 1];
    case MeasurementKind::ActivePowerFlow: {
        const BranchSide side = branch_side(m, net);
        const double vi = x.v[m.from - 1], vj = x.v[m.to - 1];
        const double tij = x.theta[m.from - 1] - x.theta[m.to - 1];
        const double g = side.branch->g, b = side.branch->b;
        return vi * vi * (g + side.g_s) - vi * vj * (g * std::cos(tij) + b * std::sin(tij));
    }
    case MeasurementKind::ReactivePowerFlow: {
        const BranchSide side = branch_side(m, net);
        const double vi = x.v[m.from - 1], vj = x.v[m.to - 1];
        const double tij = x.theta[m.from - 1] - x.theta[m.to - 1];
        const double g = side.branch->g, b = side.branch->b;
        return -vi * vi * (b + side.b_s) - vi * vj * (g * std::sin(tij) - b * std::cos(tij));
    }
    case MeasurementKind::CurrentMagnitude: {
        const BranchSide side = branch_side(m, net);
        const CurrentConstants k = current_constants(side);
        const double vi = x.v[m.from - 1], vj = x.v[m.to - 1];
        const double tij = x.theta[m.from - 1] - x.theta[m.to - 1];
        const double sq = k.a * vi * vi + k.b * vj * vj -
                          2.0 * vi * vj * (k.c * std::cos(tij) - k.d * std::sin(tij));
        return std::sqrt(std::max(sq, 0.0));
    }
    case MeasurementKind::ActiveInjection: {
        const int i = m.bus;
        const double vi = x.v[i - 1];
        double sum = 0.0;
        for (int j : adm.neighbors(i)) {
            const double tij = x.theta[i - 1] - x.theta[j - 1];
            sum += x.v[j - 1] * (adm.g(i, j) * std::cos(tij) + adm.b(i, j) * std::sin(tij));
        }
        return vi * sum;
    }
    case MeasurementKind::ReactiveInjection: {
        const int i = m.bus;
        const double vi = x.v[i - 1];
        double sum = 0.0;
        for (int j : adm.neighbors(i)) {
            const double tij = x.theta[i - 1] - x.theta[j - 1];
            sum += x.v[j - 1] * (adm.g(i, j) * std::sin(tij) - adm.b(i, j) * std::cos(tij));
        }
        return vi * sum;
    }
    }
    throw Error("unreachable measurement kind");
}

JacobianRow jacobian_row(const Measurement& m, const StateVector& x,
                         const AdmittanceEntries& adm, const NetworkCase& net) {
    check_state(m, x, net);
    JacobianRow row;
    switch (m.kind) {
    case MeasurementKind::VoltageMagnitude:
        row.entries = {{StateVarId::magnitude(m.bus), 1.0}};
        return row;
    case MeasurementKind::VoltageAngle:
        row.entries = {{StateVarId::angle(m.bus), 1.0}};
        return row;
    case MeasurementKind::ActivePowerFlow: {
        const BranchSide side = branch_side(m, net);
        const double vi = x.v[m.from - 1], vj = x.v[m.to - 1];
        const double tij = x.theta[m.from - 1] - x.theta[m.to - 1];
        const double g = side.branch->g, b = side.branch->b;
        const double dtheta = vi * vj * (g * std::sin(tij) - b * std::cos(tij));
        row.entries = {
            {StateVarId::angle(m.from), dtheta},
            {StateVarId::angle(m.to), -dtheta},
            {StateVarId::magnitude(m.from),
             -vj * (g * std::cos(tij) + b * std::sin(tij)) + 2.0 * vi * (g + side.g_s)},
            {StateVarId::magnitude(m.to), -vi * (g * std::cos(tij) + b * std::sin(tij))},
        };
        break;
    }
    case MeasurementKind::ReactivePowerFlow: {
        const BranchSide side = branch_side(m, net);
        const double vi = x.v[m.from - 1], vj = x.v[m.to - 1];
        const double tij = x.theta[m.from - 1] - x.theta[m.to - 1];
        const double g = side.branch->g, b = side.branch->b;
        const double dtheta = -vi * vj * (g * std::cos(tij) + b * std::sin(tij));
        row.entries = {
            {StateVarId::angle(m.from), dtheta},
            {StateVarId::angle(m.to), -dtheta},
            {StateVarId::magnitude(m.from),
             -vj * (g * std::sin(tij) - b * std::cos(tij)) - 2.0 * vi * (b + side.b_s)},
            {StateVarId::magnitude(m.to), -vi * (g * std::sin(tij) - b * std::cos(tij))},
        };
        break;
    }
    case MeasurementKind::CurrentMagnitude: {
        const BranchSide side = branch_side(m, net);
        const CurrentConstants k = current_constants(side);
        const double h = evaluate_h(m, x, adm, net);
        if (h < kCurrentEpsilon) {
            throw CurrentSingularity("current magnitude " + std::to_string(h) +
                                     " below epsilon on branch " + std::to_string(m.from) +
                                     "-" + std::to_string(m.to));
        }
        const double vi = x.v[m.from - 1], vj = x.v[m.to - 1];
        const double tij = x.theta[m.from - 1] - x.theta[m.to - 1];
        const double dtheta = vi * vj * (k.d * std::cos(tij) + k.c * std::sin(tij)) / h;
        row.entries = {
            {StateVarId::angle(m.from), dtheta},
            {StateVarId::angle(m.to), -dtheta},
            {StateVarId::magnitude(m.from),
             (vj * (k.d * std::sin(tij) - k.c * std::cos(tij)) + k.a * vi) / h},
            {StateVarId::magnitude(m.to),
             (vi * (k.d * std::sin(tij) - k.c * std::cos(tij)) + k.b * vj) / h},
        };
        break;
    }
    case MeasurementKind::ActiveInjection: {
        const int i = m.bus;
        const double vi = x.v[i - 1];
        double dti = 0.0, dvi = 2.0 * vi * adm.g(i, i);
        row.entries.reserve(2 * adm.neighbors(i).size());
        for (int j : adm.neighbors(i)) {
            if (j == i) continue;
            const double tij = x.theta[i - 1] - x.theta[j - 1];
            const double vj = x.v[j - 1];
            const double gij = adm.g(i, j), bij = adm.b(i, j);
            dti += vj * (-gij * std::sin(tij) + bij * std::cos(tij));
            dvi += vj * (gij * std::cos(tij) + bij * std::sin(tij));
            row.entries.push_back(
                {StateVarId::angle(j), vi * vj * (gij * std::sin(tij) - bij * std::cos(tij))});
            row.entries.push_back(
                {StateVarId::magnitude(j), vi * (gij * std::cos(tij) + bij * std::sin(tij))});
        }
        row.entries.push_back({StateVarId::angle(i), vi * dti});
        row.entries.push_back({StateVarId::magnitude(i), dvi});
        break;
    }
    case MeasurementKind::ReactiveInjection: {
        const int i = m.bus;
        const double vi = x.v[i - 1];
        double dti = 0.0, dvi = -2.0 * vi * adm.b(i, i);
        row.entries.reserve(2 * adm.neighbors(i).size());
        for (int j : adm.neighbors(i)) {
            if (j == i) continue;
            const double tij = x.theta[i - 1] - x.theta[j - 1];
            const double vj = x.v[j - 1];
            const double gij = adm.g(i, j), bij = adm.b(i, j);
            dti += vj * (gij * std::cos(tij) + bij * std::sin(tij));
            dvi += vj * (gij * std::sin(tij) - bij * std::cos(tij));
            row.entries.push_back(
                {StateVarId::angle(j), vi * vj * (-gij * std::cos(tij) - bij * std::sin(tij))});
            row.entries.push_back(
                {StateVarId::magnitude(j), vi * (gij * std::sin(tij) - bij * std::cos(tij))});
        }
        row.entries.push_back({StateVarId::angle(i), vi * dti});
        row.entries.push_back({StateVarId::magnitude(i), dvi});
        break;
    }
    }
    const int n = net.bus_count();
    std::sort(row.entries.begin(), row.entries.end(),
              [n](const auto& lhs, const auto& rhs) {
                  return lhs.first.flat_index(n) < rhs.first.flat_index(n);
              });
    return row;
}

std::vector<Device> devices_from_json(const nlohmann::json& doc) {
    if (!doc.is_array()) throw ParseError("device list: expected a JSON array");
    std::vector<Device> devices;
    int index = 0;
    for (const auto& item : doc) {
        const std::string where = "devices[" + std::to_string(index++) + "]";
        if (!item.is_object() || !item.contains("kind")) {
            throw ParseError(where + ": expected object with 'kind'");
        }
        Device dev;
        dev.kind = kind_from_name(item["kind"].get<std::string>());
        if (is_branch_kind(dev.kind)) {
            if (!item.contains("from") || !item.contains("to")) {
                throw ParseError(where + ": branch kind requires 'from' and 'to'");
            }
            dev.from = item["from"].get<int>();
            dev.to = item["to"].get<int>();
        } else {
            if (!item.contains("bus")) throw ParseError(where + ": bus kind requires 'bus'");
            dev.bus = item["bus"].get<int>();
        }
        if (item.contains("sigma2")) dev.sigma2 = item["sigma2"].get<double>();
        devices.push_back(dev);
    }
    return devices;
}

std::vector<Device> load_devices(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open device list: " + path.string());
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    return devices_from_json(doc);
}

std::vector<Measurement> generate_measurements(const NetworkCase& net,
                                               std::span<const Device> devices, double sigma2,
                                               std::uint64_t seed, double noise_scale) {
    if (!(sigma2 > 0.0)) throw ValidationError("sigma2 must be positive");
    const AdmittanceEntries adm = build_admittance(net);
    StateVector truth;
    truth.theta.reserve(net.bus_count());
    truth.v.reserve(net.bus_count());
    for (const Bus& bus : net.buses) {
        truth.theta.push_back(bus.theta_true);
        truth.v.push_back(bus.v_true);
    }

    std::vector<Measurement> out;
    out.reserve(devices.size());
    for (std::size_t k = 0; k < devices.size(); ++k) {
        const Device& dev = devices[k];
        Measurement m;
        m.kind = dev.kind;
        m.bus = dev.bus;
        m.from = dev.from;
        m.to = dev.to;
        m.variance = dev.sigma2.value_or(sigma2);
        if (!(m.variance > 0.0)) {
            throw ValidationError("devices[" + std::to_string(k) + "]: sigma2 must be positive");
        }
        const double h = evaluate_h(m, truth, adm, net); // also validates the location
        m.value = h + noise_scale * std::sqrt(m.variance) * rng::standard_normal(seed, k);
        out.push_back(m);
    }
    return out;
}

} // namespace sebp
