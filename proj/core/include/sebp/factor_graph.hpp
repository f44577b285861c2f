#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "sebp/measurement.hpp"

namespace sebp {

enum class FactorKind { Slack, Direct, Indirect, Initialization, Virtual };

std::string_view factor_kind_name(FactorKind kind);

struct FactorNode {
    FactorKind kind = FactorKind::Virtual;
    std::optional<Measurement> measurement; // present iff Direct or Indirect
    std::vector<StateVarId> incident;       // ordered by canonical flat index
};

/// Bipartite graph of state-increment variables and measurement-residual
/// factors. Variables are in canonical order (angles of buses 1..N, then
/// magnitudes), so a StateVarId's flat index addresses `variables` directly.
struct FactorGraph {
    int n_buses = 0;
    std::vector<StateVarId> variables;
    std::vector<FactorNode> factors;
    std::vector<std::vector<int>> factors_of_variable; // variable flat index -> factor indices

    int variable_count() const { return static_cast<int>(variables.size()); }
    int factor_count() const { return static_cast<int>(factors.size()); }
    int edge_count() const;
};

/// Classifies and wires up the factor graph for a measurement set:
/// one Slack factor on the slack angle, one Direct factor per voltage
/// magnitude/angle measurement, one Indirect factor per other measurement,
/// and an Initialization or Virtual factor on every variable left without a
/// Slack/Direct factor (Virtual when its Indirect degree is at most 1).
/// Throws IsolatedVariable if some variable is touched by nothing.
FactorGraph build_graph(const NetworkCase& net, std::span<const Measurement> measurements);

/// True iff the bipartite graph is connected and acyclic.
bool is_tree(const FactorGraph& graph);

/// One "factor_id variable_id" pair per line; '#' lines name the nodes.
void dump_edges(const FactorGraph& graph, std::ostream& out);

} // namespace sebp
