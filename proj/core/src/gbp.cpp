#include "sebp/gbp.hpp"

#include <cmath>
#include <ostream>

#include "sebp/csv.hpp"
#include "sebp/errors.hpp"
#include "sebp/rng.hpp"

namespace sebp {

namespace {

void check_variance(double variance) {
    if (variance < 0.0 || std::isnan(variance)) {
        throw NumericalError("message variance left [0, +inf]");
    }
}

long long ipow(int base, int exp) {
    long long out = 1;
    for (int k = 0; k < exp; ++k) out *= base;
    return out;
}

} // namespace

GaussianMessage combine_messages(std::span<const GaussianMessage> incoming) {
    bool exact = false;
    double exact_mean = 0.0;
    for (const GaussianMessage& msg : incoming) {
        if (msg.is_exact()) {
            if (exact && msg.mean != exact_mean) {
                throw ExactConflict("conflicting exact priors: " + csv::format_double(exact_mean) +
                                    " vs " + csv::format_double(msg.mean));
            }
            exact = true;
            exact_mean = msg.mean;
        }
    }
    if (exact) return {exact_mean, 0.0};

    double precision = 0.0;
    double weighted_mean = 0.0;
    for (const GaussianMessage& msg : incoming) {
        precision += 1.0 / msg.variance;       // vacuous contributes exactly 0
        weighted_mean += msg.mean / msg.variance;
    }
    if (precision == 0.0) return GaussianMessage::vacuous();
    const double variance = 1.0 / precision;
    check_variance(variance);
    return {weighted_mean * variance, variance};
}

GaussianMessage variable_to_factor(std::span<const GaussianMessage> incoming) {
    return combine_messages(incoming);
}

GaussianMessage factor_to_variable(const EdgeCoefficients& fs, std::size_t target_pos,
                                   std::span<const GaussianMessage> incoming) {
    const double c_target = fs.coeffs[target_pos].second;
    if (std::abs(c_target) < kCoeffEpsilon) return GaussianMessage::vacuous();

    double mean_acc = fs.residual;
    double var_acc = fs.variance;
    for (std::size_t pos = 0; pos < fs.coeffs.size(); ++pos) {
        if (pos == target_pos) continue;
        const GaussianMessage& msg = incoming[pos];
        if (msg.is_vacuous()) return GaussianMessage::vacuous();
        const double c = fs.coeffs[pos].second;
        mean_acc -= c * msg.mean;
        var_acc += c * c * msg.variance;
    }
    const double variance = var_acc / (c_target * c_target);
    check_variance(variance);
    return {mean_acc / c_target, variance};
}

GaussianMessage apply_damping(const GaussianMessage& prev, const GaussianMessage& fresh,
                              const DampingConfig& cfg, bool delta) {
    if (!delta) return fresh;
    if (fresh.is_vacuous()) return fresh;
    GaussianMessage out;
    out.mean = cfg.alpha * (prev.mean + fresh.mean);
    if (cfg.damp_variances) {
        if (prev.is_vacuous()) return GaussianMessage::vacuous();
        out.variance = cfg.alpha * (prev.variance + fresh.variance);
    } else {
        out.variance = fresh.variance;
    }
    return out;
}

GaussianMessage marginal(std::span<const GaussianMessage> incoming) {
    const GaussianMessage result = combine_messages(incoming);
    if (result.is_vacuous()) {
        throw AllVacuous("all incoming messages vacuous");
    }
    return result;
}

long long ConvergenceTrace::total_inner_iterations() const {
    long long total = 0;
    for (const TraceEntry& entry : entries) total += entry.tau;
    return total;
}

void write_trace_csv(const ConvergenceTrace& trace, std::ostream& out) {
    out << "nu,tau,rmse,max_abs_increment\n";
    for (const TraceEntry& entry : trace.entries) {
        out << entry.nu << ',' << entry.tau << ',' << csv::format_double(entry.rmse) << ','
            << csv::format_double(entry.max_abs_increment) << '\n';
    }
}

void write_states_csv(const ConvergenceTrace& trace, std::ostream& out) {
    if (trace.entries.empty()) return;
    const int n = trace.entries.front().state.bus_count();
    out << "nu";
    for (int i = 1; i <= n; ++i) out << ",theta_" << i;
    for (int i = 1; i <= n; ++i) out << ",v_" << i;
    out << '\n';
    for (const TraceEntry& entry : trace.entries) {
        out << entry.nu;
        for (double t : entry.state.theta) out << ',' << csv::format_double(t);
        for (double v : entry.state.v) out << ',' << csv::format_double(v);
        out << '\n';
    }
}

GbpEngine::GbpEngine(const FactorGraph& graph, const NetworkCase& net,
                     const AdmittanceEntries& adm, Schedule schedule, DampingConfig damping)
    : graph_(graph), net_(net), adm_(adm), schedule_(schedule), damping_(damping) {
    if (schedule_.q < 1 || schedule_.nu_max < 1 || schedule_.tol < 0.0) {
        throw ValidationError("schedule requires q >= 1, nu_max >= 1, tol >= 0");
    }
    if (damping_.p < 0.0 || damping_.p > 1.0 || damping_.alpha <= 0.0 || damping_.alpha > 1.0) {
        throw ValidationError("damping requires p in [0,1] and alpha in (0,1]");
    }
    const int n_vars = graph_.variable_count();
    var_edges_.resize(n_vars);
    local_.resize(n_vars);
    has_anchor_.assign(n_vars, false);
    is_virtual_.assign(n_vars, false);

    for (int f = 0; f < graph_.factor_count(); ++f) {
        const FactorNode& node = graph_.factors[f];
        const int first_var = node.incident.front().flat_index(graph_.n_buses);
        switch (node.kind) {
        case FactorKind::Slack:
        case FactorKind::Direct:
            has_anchor_[first_var] = true;
            break;
        case FactorKind::Virtual:
            is_virtual_[first_var] = true;
            break;
        case FactorKind::Initialization:
            break;
        case FactorKind::Indirect: {
            IndirectFactor entry;
            entry.factor_index = f;
            entry.measurement = &*node.measurement;
            entry.edge_offset = n_edges_;
            for (StateVarId var : node.incident) {
                const int flat = var.flat_index(graph_.n_buses);
                entry.var_flat.push_back(flat);
                var_edges_[flat].edge_ids.push_back(n_edges_);
                ++n_edges_;
            }
            indirect_.push_back(std::move(entry));
            break;
        }
        }
    }
    f2v_.assign(n_edges_, GaussianMessage::vacuous());
    v2f_.assign(n_edges_, GaussianMessage::vacuous());
    marginals_.assign(n_vars, GaussianMessage::vacuous());
}

void GbpEngine::linearize(const StateVector& x) {
    // Local factors: the slack pin and the direct measurements.
    for (auto& list : local_) list.clear();
    const int slack_var = StateVarId::angle(net_.slack_bus()).flat_index(graph_.n_buses);
    for (const FactorNode& node : graph_.factors) {
        if (node.kind == FactorKind::Slack) {
            local_[slack_var].push_back({0.0, 0.0, x.value(node.incident.front())});
        } else if (node.kind == FactorKind::Direct) {
            const StateVarId var = node.incident.front();
            const double value = x.value(var);
            local_[var.flat_index(graph_.n_buses)].push_back(
                {node.measurement->value - value, node.measurement->variance, value});
        }
    }

    // Indirect factors: residual and Jacobian coefficients at x. A singular
    // current-magnitude factor goes quiet for this outer iteration.
    for (IndirectFactor& fac : indirect_) {
        const Measurement& m = *fac.measurement;
        const double h = evaluate_h(m, x, adm_, net_);
        if (m.kind == MeasurementKind::CurrentMagnitude && h < kCurrentEpsilon) {
            fac.active = false;
            continue;
        }
        fac.active = true;
        fac.lin.residual = m.value - h;
        fac.lin.variance = m.variance;
        fac.lin.coeffs = jacobian_row(m, x, adm_, net_).entries;
        // positions must line up with the factor's edge slots
        if (fac.lin.coeffs.size() != fac.var_flat.size()) {
            throw NumericalError("gradient sparsity does not match the factor's incidence");
        }
    }
}

std::span<const GaussianMessage> GbpEngine::collect_at_variable(int var, int skip_edge) const {
    scratch_.clear();
    for (const StateTriplet& triplet : local_[var]) scratch_.push_back(triplet.message());
    for (int edge : var_edges_[var].edge_ids) {
        if (edge != skip_edge) scratch_.push_back(f2v_[edge]);
    }
    return scratch_;
}

GaussianMessage GbpEngine::combine_at_variable(int var, int skip_edge) const {
    return combine_messages(collect_at_variable(var, skip_edge));
}

void GbpEngine::seed_variable_messages(int nu) {
    for (int var = 0; var < graph_.variable_count(); ++var) {
        const VariableEdges& edges = var_edges_[var];
        if (has_anchor_[var]) {
            // Forward the local information along every incident edge.
            std::vector<GaussianMessage> incoming;
            for (const StateTriplet& triplet : local_[var]) incoming.push_back(triplet.message());
            const GaussianMessage msg = combine_messages(incoming);
            for (int edge : edges.edge_ids) v2f_[edge] = msg;
        } else if (is_virtual_[var] || nu == 1) {
            // A virtual factor repeats its vacuous message; in the first
            // outer iteration the initialization factors do the same.
            for (int edge : edges.edge_ids) v2f_[edge] = GaussianMessage::vacuous();
        } else {
            // Initialization factors are gone: seed from the factor-to-variable
            // messages left over from the previous outer iteration.
            for (int edge : edges.edge_ids) v2f_[edge] = combine_at_variable(var, edge);
        }
    }
}

void GbpEngine::inner_pass(int nu, int rho) {
    // Factor-to-variable half: everything reads the v2f snapshot.
    std::vector<GaussianMessage> incoming;
    for (const IndirectFactor& fac : indirect_) {
        const std::size_t arity = fac.var_flat.size();
        incoming.assign(arity, GaussianMessage::vacuous());
        if (fac.active) {
            for (std::size_t pos = 0; pos < arity; ++pos) {
                incoming[pos] = v2f_[fac.edge_offset + static_cast<int>(pos)];
            }
        }
        for (std::size_t pos = 0; pos < arity; ++pos) {
            const int edge = fac.edge_offset + static_cast<int>(pos);
            const GaussianMessage fresh =
                fac.active ? factor_to_variable(fac.lin, pos, incoming)
                           : GaussianMessage::vacuous();
            if (!damping_.enabled || damping_.p == 0.0) {
                f2v_[edge] = fresh;
            } else {
                const GaussianMessage prev = (rho == 1) ? fresh : f2v_[edge];
                const bool delta = rng::bernoulli(damping_.p, damping_.seed,
                                                  static_cast<std::uint64_t>(nu),
                                                  static_cast<std::uint64_t>(rho),
                                                  static_cast<std::uint64_t>(edge));
                f2v_[edge] = apply_damping(prev, fresh, damping_, delta);
            }
        }
    }

    // Variable-to-factor half: everything reads the f2v snapshot.
    for (int var = 0; var < graph_.variable_count(); ++var) {
        for (int edge : var_edges_[var].edge_ids) {
            v2f_[edge] = combine_at_variable(var, edge);
        }
    }
}

OuterResult GbpEngine::outer_iteration(const StateVector& x, int nu, int tau) {
    if (nu < 1 || tau < 1) throw ValidationError("outer_iteration requires nu >= 1, tau >= 1");
    linearize(x);
    seed_variable_messages(nu);
    for (int rho = 1; rho <= tau; ++rho) inner_pass(nu, rho);

    OuterResult result;
    result.increment.assign(graph_.variable_count(), 0.0);
    for (int var = 0; var < graph_.variable_count(); ++var) {
        try {
            marginals_[var] = marginal(collect_at_variable(var, -1));
        } catch (const AllVacuous&) {
            throw UnobservableVariable("state variable " + graph_.variables[var].name() +
                                           " received no information in outer iteration " +
                                           std::to_string(nu),
                                       var);
        }
        result.increment[var] = marginals_[var].mean;
    }
    result.next_state = apply_increment(x, result.increment);
    result.marginals = marginals_;
    return result;
}

ConvergenceTrace GbpEngine::run(const StateVector& x0) {
    ConvergenceTrace trace;
    StateVector x = x0;
    for (int nu = 1; nu <= schedule_.nu_max; ++nu) {
        const long long tau = ipow(nu, schedule_.q);
        if (tau > std::numeric_limits<int>::max()) {
            throw ValidationError("inner iteration count nu^q overflows");
        }
        OuterResult result = outer_iteration(x, nu, static_cast<int>(tau));

        TraceEntry entry;
        entry.nu = nu;
        entry.tau = static_cast<int>(tau);
        entry.increment = result.increment;
        double max_abs = 0.0;
        for (double d : entry.increment) max_abs = std::max(max_abs, std::abs(d));
        entry.max_abs_increment = max_abs;
        entry.state = result.next_state;
        x = std::move(result.next_state);
        trace.entries.push_back(std::move(entry));

        if (schedule_.tol > 0.0 && max_abs < schedule_.tol) break;
    }
    return trace;
}

} // namespace sebp
