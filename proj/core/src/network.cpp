#include "sebp/network.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "sebp/errors.hpp"

namespace sebp {

namespace {

double require_number(const nlohmann::json& obj, const char* key, const std::string& where) {
    if (!obj.contains(key) || !obj[key].is_number()) {
        throw ParseError(where + ": missing or non-numeric field '" + key + "'");
    }
    return obj[key].get<double>();
}

double optional_number(const nlohmann::json& obj, const char* key, double fallback) {
    if (!obj.contains(key)) return fallback;
    return obj[key].get<double>();
}

} // namespace

int NetworkCase::slack_bus() const {
    for (const Bus& bus : buses) {
        if (bus.is_slack) return bus.id;
    }
    return 0;
}

const Branch* NetworkCase::find_branch(int i, int j) const {
    for (const Branch& br : branches) {
        if ((br.from == i && br.to == j) || (br.from == j && br.to == i)) return &br;
    }
    return nullptr;
}

NetworkCase case_from_json(const nlohmann::json& doc) {
    if (!doc.is_object() || !doc.contains("buses") || !doc.contains("branches")) {
        throw ParseError("case file: expected object with 'buses' and 'branches'");
    }
    NetworkCase net;
    int index = 0;
    for (const auto& item : doc["buses"]) {
        const std::string where = "buses[" + std::to_string(index++) + "]";
        if (!item.is_object()) throw ParseError(where + ": expected object");
        Bus bus;
        bus.id = static_cast<int>(require_number(item, "id", where));
        bus.is_slack = item.value("slack", false);
        bus.v_true = require_number(item, "v_true", where);
        bus.theta_true = require_number(item, "theta_true", where);
        net.buses.push_back(bus);
    }
    index = 0;
    for (const auto& item : doc["branches"]) {
        const std::string where = "branches[" + std::to_string(index++) + "]";
        if (!item.is_object()) throw ParseError(where + ": expected object");
        Branch br;
        br.from = static_cast<int>(require_number(item, "from", where));
        br.to = static_cast<int>(require_number(item, "to", where));
        br.g = require_number(item, "g", where);
        br.b = require_number(item, "b", where);
        br.g_sf = optional_number(item, "g_sf", 0.0);
        br.b_sf = optional_number(item, "b_sf", 0.0);
        br.g_st = optional_number(item, "g_st", 0.0);
        br.b_st = optional_number(item, "b_st", 0.0);
        net.branches.push_back(br);
    }
    validate_case(net);
    return net;
}

NetworkCase load_case(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open case file: " + path.string());
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    return case_from_json(doc);
}

nlohmann::ordered_json case_to_json(const NetworkCase& net) {
    nlohmann::ordered_json doc;
    doc["buses"] = nlohmann::ordered_json::array();
    for (const Bus& bus : net.buses) {
        doc["buses"].push_back({{"id", bus.id},
                                {"slack", bus.is_slack},
                                {"v_true", bus.v_true},
                                {"theta_true", bus.theta_true}});
    }
    doc["branches"] = nlohmann::ordered_json::array();
    for (const Branch& br : net.branches) {
        doc["branches"].push_back({{"from", br.from},
                                   {"to", br.to},
                                   {"g", br.g},
                                   {"b", br.b},
                                   {"g_sf", br.g_sf},
                                   {"b_sf", br.b_sf},
                                   {"g_st", br.g_st},
                                   {"b_st", br.b_st}});
    }
    return doc;
}

void save_case(const NetworkCase& net, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write case file: " + path.string());
    out << case_to_json(net).dump(2) << '\n';
}

void validate_case(const NetworkCase& net) {
    const int n = net.bus_count();
    if (n == 0) throw ValidationError("case has no buses");

    std::set<int> seen;
    int slack_count = 0;
    for (std::size_t k = 0; k < net.buses.size(); ++k) {
        const Bus& bus = net.buses[k];
        const std::string where = "buses[" + std::to_string(k) + "]";
        if (!seen.insert(bus.id).second) {
            throw ValidationError(where + ": duplicate bus id " + std::to_string(bus.id));
        }
        if (bus.id < 1 || bus.id > n) {
            throw ValidationError(where + ": bus id " + std::to_string(bus.id) +
                                  " outside 1.." + std::to_string(n));
        }
        if (!(bus.v_true > 0.0) || !std::isfinite(bus.v_true)) {
            throw ValidationError(where + ": v_true must be positive and finite");
        }
        if (bus.is_slack) ++slack_count;
    }
    if (slack_count == 0) throw ValidationError("no slack bus designated");
    if (slack_count > 1) throw ValidationError("multiple slack buses designated");

    std::set<std::pair<int, int>> pairs;
    for (std::size_t k = 0; k < net.branches.size(); ++k) {
        const Branch& br = net.branches[k];
        const std::string where = "branches[" + std::to_string(k) + "]";
        if (br.from == br.to) {
            throw ValidationError(where + ": self-loop at bus " + std::to_string(br.from));
        }
        if (!seen.count(br.from) || !seen.count(br.to)) {
            throw ValidationError(where + ": endpoint references unknown bus");
        }
        if (br.g == 0.0 && br.b == 0.0) {
            throw ValidationError(where + ": series admittance must be nonzero");
        }
        auto key = std::minmax(br.from, br.to);
        if (!pairs.insert(key).second) {
            throw ValidationError(where + ": parallel branch between buses " +
                                  std::to_string(key.first) + " and " +
                                  std::to_string(key.second));
        }
    }

    // Connectivity over the undirected branch graph.
    std::vector<std::vector<int>> adj(n + 1);
    for (const Branch& br : net.branches) {
        adj[br.from].push_back(br.to);
        adj[br.to].push_back(br.from);
    }
    std::vector<bool> visited(n + 1, false);
    std::vector<int> stack{net.buses.front().id};
    visited[stack.front()] = true;
    int reached = 0;
    while (!stack.empty()) {
        int u = stack.back();
        stack.pop_back();
        ++reached;
        for (int v : adj[u]) {
            if (!visited[v]) {
                visited[v] = true;
                stack.push_back(v);
            }
        }
    }
    if (reached != n) {
        throw ValidationError("branch graph is disconnected (" + std::to_string(reached) +
                              " of " + std::to_string(n) + " buses reachable)");
    }
}

AdmittanceEntries build_admittance(const NetworkCase& net) {
    AdmittanceEntries adm;
    const int n = net.bus_count();
    adm.neighbor_sets.assign(n + 1, {});
    for (const Bus& bus : net.buses) {
        adm.G[{bus.id, bus.id}] = 0.0;
        adm.B[{bus.id, bus.id}] = 0.0;
        adm.neighbor_sets[bus.id].push_back(bus.id);
    }
    for (const Branch& br : net.branches) {
        adm.G[{br.from, br.from}] += br.g + br.g_sf;
        adm.B[{br.from, br.from}] += br.b + br.b_sf;
        adm.G[{br.to, br.to}] += br.g + br.g_st;
        adm.B[{br.to, br.to}] += br.b + br.b_st;
        adm.G[{br.from, br.to}] = -br.g;
        adm.G[{br.to, br.from}] = -br.g;
        adm.B[{br.from, br.to}] = -br.b;
        adm.B[{br.to, br.from}] = -br.b;
        adm.neighbor_sets[br.from].push_back(br.to);
        adm.neighbor_sets[br.to].push_back(br.from);
    }
    for (auto& set : adm.neighbor_sets) {
        std::sort(set.begin(), set.end());
    }
    return adm;
}

} // namespace sebp
