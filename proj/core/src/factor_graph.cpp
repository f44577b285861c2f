#include "sebp/factor_graph.hpp"

#include <algorithm>
#include <ostream>
#include <string>

#include "sebp/errors.hpp"

namespace sebp {

std::string_view factor_kind_name(FactorKind kind) {
    switch (kind) {
    case FactorKind::Slack: return "slack";
    case FactorKind::Direct: return "direct";
    case FactorKind::Indirect: return "indirect";
    case FactorKind::Initialization: return "initialization";
    case FactorKind::Virtual: return "virtual";
    }
    return "unknown";
}

int FactorGraph::edge_count() const {
    int edges = 0;
    for (const FactorNode& f : factors) edges += static_cast<int>(f.incident.size());
    return edges;
}

FactorGraph build_graph(const NetworkCase& net, std::span<const Measurement> measurements) {
    const int n = net.bus_count();
    const AdmittanceEntries adm = build_admittance(net);

    FactorGraph graph;
    graph.n_buses = n;
    graph.variables.reserve(2 * n);
    for (int bus = 1; bus <= n; ++bus) graph.variables.push_back(StateVarId::angle(bus));
    for (int bus = 1; bus <= n; ++bus) graph.variables.push_back(StateVarId::magnitude(bus));

    const int slack = net.slack_bus();
    graph.factors.push_back({FactorKind::Slack, std::nullopt, {StateVarId::angle(slack)}});

    // The incident set of an indirect factor equals the argument list of its
    // measurement function: both endpoints for branch kinds, the bus and all
    // its neighbors for injections.
    for (const Measurement& m : measurements) {
        FactorNode node;
        node.measurement = m;
        if (m.kind == MeasurementKind::VoltageMagnitude) {
            node.kind = FactorKind::Direct;
            node.incident = {StateVarId::magnitude(m.bus)};
        } else if (m.kind == MeasurementKind::VoltageAngle) {
            node.kind = FactorKind::Direct;
            node.incident = {StateVarId::angle(m.bus)};
        } else {
            node.kind = FactorKind::Indirect;
            if (is_branch_kind(m.kind)) {
                node.incident = {StateVarId::angle(m.from), StateVarId::angle(m.to),
                                 StateVarId::magnitude(m.from), StateVarId::magnitude(m.to)};
                if (net.find_branch(m.from, m.to) == nullptr) {
                    throw ValidationError("measurement on missing branch " +
                                          std::to_string(m.from) + "-" + std::to_string(m.to));
                }
            } else {
                if (m.bus < 1 || m.bus > n) {
                    throw ValidationError("measurement on missing bus " + std::to_string(m.bus));
                }
                for (int j : adm.neighbors(m.bus)) {
                    node.incident.push_back(StateVarId::angle(j));
                    node.incident.push_back(StateVarId::magnitude(j));
                }
            }
            std::sort(node.incident.begin(), node.incident.end(),
                      [n](StateVarId lhs, StateVarId rhs) {
                          return lhs.flat_index(n) < rhs.flat_index(n);
                      });
        }
        graph.factors.push_back(std::move(node));
    }

    // Per-variable degree bookkeeping over what exists so far.
    std::vector<int> indirect_degree(2 * n, 0);
    std::vector<bool> has_local(2 * n, false);
    for (const FactorNode& f : graph.factors) {
        for (StateVarId var : f.incident) {
            const int idx = var.flat_index(n);
            if (f.kind == FactorKind::Indirect) ++indirect_degree[idx];
            else has_local[idx] = true;
        }
    }

    for (int idx = 0; idx < 2 * n; ++idx) {
        if (has_local[idx]) continue;
        const StateVarId var = graph.variables[idx];
        if (indirect_degree[idx] == 0) {
            throw IsolatedVariable("state variable " + var.name() +
                                   " is touched by no measurement", idx);
        }
        const FactorKind kind =
            indirect_degree[idx] <= 1 ? FactorKind::Virtual : FactorKind::Initialization;
        graph.factors.push_back({kind, std::nullopt, {var}});
    }

    graph.factors_of_variable.assign(2 * n, {});
    for (int f = 0; f < graph.factor_count(); ++f) {
        for (StateVarId var : graph.factors[f].incident) {
            graph.factors_of_variable[var.flat_index(n)].push_back(f);
        }
    }
    return graph;
}

bool is_tree(const FactorGraph& graph) {
    // Bipartite node set: variables then factors.
    const int nv = graph.variable_count();
    const int total = nv + graph.factor_count();
    if (graph.edge_count() != total - 1) return false;

    std::vector<bool> visited(total, false);
    std::vector<int> stack{0};
    visited[0] = true;
    int reached = 0;
    while (!stack.empty()) {
        const int node = stack.back();
        stack.pop_back();
        ++reached;
        if (node < nv) {
            for (int f : graph.factors_of_variable[node]) {
                if (!visited[nv + f]) {
                    visited[nv + f] = true;
                    stack.push_back(nv + f);
                }
            }
        } else {
            for (StateVarId var : graph.factors[node - nv].incident) {
                const int idx = var.flat_index(graph.n_buses);
                if (!visited[idx]) {
                    visited[idx] = true;
                    stack.push_back(idx);
                }
            }
        }
    }
    return reached == total;
}

void dump_edges(const FactorGraph& graph, std::ostream& out) {
    out << "# factors\n";
    for (int f = 0; f < graph.factor_count(); ++f) {
        const FactorNode& node = graph.factors[f];
        out << "# " << f << ' ' << factor_kind_name(node.kind);
        if (node.measurement) {
            const Measurement& m = *node.measurement;
            out << ' ' << kind_name(m.kind);
            if (is_branch_kind(m.kind)) out << ' ' << m.from << '-' << m.to;
            else out << ' ' << m.bus;
        }
        out << '\n';
    }
    out << "# variables\n";
    for (int v = 0; v < graph.variable_count(); ++v) {
        out << "# " << v << ' ' << graph.variables[v].name() << '\n';
    }
    for (int f = 0; f < graph.factor_count(); ++f) {
        for (StateVarId var : graph.factors[f].incident) {
            out << f << ' ' << var.flat_index(graph.n_buses) << '\n';
        }
    }
}

} // namespace sebp
