#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <span>
#include <vector>

#include "sebp/factor_graph.hpp"
#include "sebp/measurement.hpp"
#include "sebp/network.hpp"

namespace sebp {

/// Scalar Gaussian in mean/variance form. Variance 0 encodes an exact value
/// (only the slack pin produces it); variance +inf encodes a vacuous message,
/// whose mean is 0 by convention. All combination arithmetic runs in
/// precision form, so both limits are exact.
struct GaussianMessage {
    double mean = 0.0;
    double variance = std::numeric_limits<double>::infinity();

    bool is_vacuous() const { return variance == std::numeric_limits<double>::infinity(); }
    bool is_exact() const { return variance == 0.0; }

    static GaussianMessage vacuous() { return {}; }

    bool operator==(const GaussianMessage&) const = default;
};

/// Message from a singly-connected factor: residual and variance plus the
/// state value the residual was computed at.
struct StateTriplet {
    double residual = 0.0;
    double variance = 0.0;
    double state_value = 0.0;

    GaussianMessage message() const { return {residual, variance}; }
};

/// Precision-weighted product of Gaussian messages. Vacuous inputs contribute
/// nothing; a zero-variance input dominates exactly. Throws ExactConflict on
/// two zero-variance inputs with different means.
GaussianMessage combine_messages(std::span<const GaussianMessage> incoming);

/// Message a variable sends to one factor: the product of everything arriving
/// from its other factors. Empty or all-vacuous input gives a vacuous message.
GaussianMessage variable_to_factor(std::span<const GaussianMessage> incoming);

/// Linearized form of one indirect factor at the current outer iterate.
struct EdgeCoefficients {
    double residual = 0.0; // z - h(x)
    double variance = 0.0; // measurement sigma^2
    std::vector<std::pair<StateVarId, double>> coeffs;
};

/// A coefficient of smaller magnitude makes the factor send a vacuous message
/// along that edge for the current outer iteration.
inline constexpr double kCoeffEpsilon = 1e-12;

/// Message an indirect factor sends to the variable at `target_pos`, formed
/// from the other variables' messages (aligned with fs.coeffs; the entry at
/// target_pos is ignored). Any vacuous input, or a degenerate target
/// coefficient, gives a vacuous output.
GaussianMessage factor_to_variable(const EdgeCoefficients& fs, std::size_t target_pos,
                                   std::span<const GaussianMessage> incoming);

struct DampingConfig {
    double p = 0.5;     // per-edge Bernoulli probability of mixing
    double alpha = 0.5; // mixing weight
    std::uint64_t seed = 0;
    bool damp_variances = false; // default: means only, variances stay fresh
    bool enabled = true;
};

/// Randomized mixing of consecutive factor-to-variable messages:
/// mean = (1-delta)*fresh + delta*alpha*(prev + fresh). A vacuous fresh
/// message stays vacuous.
GaussianMessage apply_damping(const GaussianMessage& prev, const GaussianMessage& fresh,
                              const DampingConfig& cfg, bool delta);

/// Posterior of one state increment: the product over all incoming factor
/// messages, virtual factors excluded. Throws AllVacuous when no information
/// arrived.
GaussianMessage marginal(std::span<const GaussianMessage> incoming);

struct Schedule {
    int q = 4;          // inner iterations per outer iteration: tau(nu) = nu^q
    int nu_max = 20;
    double tol = 1e-8;  // stop when max|increment| falls below; 0 disables
};

struct TraceEntry {
    int nu = 0;
    int tau = 0;
    StateVector state;             // iterate after applying this increment
    std::vector<double> increment; // canonical flat order
    double max_abs_increment = 0.0;
    double rmse = std::numeric_limits<double>::quiet_NaN(); // filled by the harness
};

struct ConvergenceTrace {
    std::vector<TraceEntry> entries;

    long long total_inner_iterations() const;
};

/// Header: nu,tau,rmse,max_abs_increment
void write_trace_csv(const ConvergenceTrace& trace, std::ostream& out);
/// Header: nu,theta_1..theta_N,v_1..v_N
void write_states_csv(const ConvergenceTrace& trace, std::ostream& out);

struct OuterResult {
    std::vector<double> increment;        // canonical flat order, slack angle exactly 0
    StateVector next_state;
    std::vector<GaussianMessage> marginals; // per variable, canonical flat order
};

/// Two-level iterative estimator: an outer relinearization loop around a
/// synchronous (flooding) Gaussian message-passing inner loop.
///
/// The referenced graph, network and admittance entries must outlive the
/// engine. An engine instance is not shareable across threads during a run.
class GbpEngine {
public:
    GbpEngine(const FactorGraph& graph, const NetworkCase& net, const AdmittanceEntries& adm,
              Schedule schedule, DampingConfig damping);

    /// One linearize-iterate-update cycle with an explicit inner iteration
    /// count. Call with nu = 1 to start fresh; nu >= 2 continues from the
    /// previous call's messages. Throws UnobservableVariable if some variable
    /// receives no information.
    OuterResult outer_iteration(const StateVector& x, int nu, int tau);

    /// Full run from x0: outer iterations nu = 1..nu_max with tau = nu^q,
    /// stopping early once max|increment| < tol.
    ConvergenceTrace run(const StateVector& x0);

    /// Marginals of the most recent outer iteration.
    const std::vector<GaussianMessage>& last_marginals() const { return marginals_; }

private:
    struct IndirectFactor {
        int factor_index = 0;
        const Measurement* measurement = nullptr;
        std::vector<int> var_flat;   // incident variables, canonical flat indices
        int edge_offset = 0;         // first edge id of this factor
        bool active = true;          // cleared when a current factor is singular at x
        EdgeCoefficients lin;        // recomputed each outer iteration
    };

    struct VariableEdges {
        std::vector<int> edge_ids; // edges whose variable end is this one
    };

    void linearize(const StateVector& x);
    void seed_variable_messages(int nu);
    void inner_pass(int nu, int rho);
    std::span<const GaussianMessage> collect_at_variable(int var, int skip_edge) const;
    GaussianMessage combine_at_variable(int var, int skip_edge) const;

    const FactorGraph& graph_;
    const NetworkCase& net_;
    const AdmittanceEntries& adm_;
    Schedule schedule_;
    DampingConfig damping_;

    std::vector<IndirectFactor> indirect_;
    std::vector<VariableEdges> var_edges_;             // per variable flat index
    std::vector<std::vector<StateTriplet>> local_;     // slack/direct triplets per variable
    std::vector<bool> has_anchor_;                     // variable has a slack/direct factor
    std::vector<bool> is_virtual_;                     // variable carries a virtual factor
    int n_edges_ = 0;

    std::vector<GaussianMessage> f2v_;
    std::vector<GaussianMessage> v2f_;
    std::vector<GaussianMessage> marginals_;
    mutable std::vector<GaussianMessage> scratch_;
};

} // namespace sebp
