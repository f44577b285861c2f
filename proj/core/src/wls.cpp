#include "sebp/wls.hpp"

#include <cmath>

#include "sebp/errors.hpp"

namespace sebp {

namespace {
constexpr double kPivotEpsilon = 1e-10;
} // namespace

int reduced_index(StateVarId id, int n_buses, int slack_bus) {
    const int flat = id.flat_index(n_buses);
    const int slack_flat = StateVarId::angle(slack_bus).flat_index(n_buses);
    if (flat == slack_flat) return -1;
    return flat < slack_flat ? flat : flat - 1;
}

Eigen::MatrixXd LinearSystemBundle::dense_jacobian() const {
    Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(row_count(), reduced_dimension());
    for (int r = 0; r < row_count(); ++r) {
        for (const auto& [var, coeff] : rows[r].entries) {
            const int col = reduced_index(var, n_buses, slack_bus);
            if (col >= 0) jac(r, col) = coeff;
        }
    }
    return jac;
}

Eigen::VectorXd LinearSystemBundle::residual_vector() const {
    return Eigen::Map<const Eigen::VectorXd>(residuals.data(), row_count());
}

Eigen::VectorXd LinearSystemBundle::weight_vector() const {
    return Eigen::Map<const Eigen::VectorXd>(weights.data(), row_count());
}

LinearSystemBundle assemble(const NetworkCase& net, std::span<const Measurement> measurements,
                            const StateVector& x, const AdmittanceEntries& adm) {
    LinearSystemBundle bundle;
    bundle.n_buses = net.bus_count();
    bundle.slack_bus = net.slack_bus();

    for (std::size_t k = 0; k < measurements.size(); ++k) {
        const Measurement& m = measurements[k];
        const double h = evaluate_h(m, x, adm, net);
        if (m.kind == MeasurementKind::CurrentMagnitude && h < kCurrentEpsilon) {
            bundle.dropped_measurements.push_back(static_cast<int>(k));
            continue;
        }
        JacobianRow row = jacobian_row(m, x, adm, net);
        std::erase_if(row.entries, [&](const auto& entry) {
            return reduced_index(entry.first, bundle.n_buses, bundle.slack_bus) < 0;
        });
        bundle.rows.push_back(std::move(row));
        bundle.weights.push_back(1.0 / m.variance);
        bundle.residuals.push_back(m.value - h);
        bundle.measurement_index.push_back(static_cast<int>(k));
    }
    return bundle;
}

namespace {

Eigen::LDLT<Eigen::MatrixXd> factorize_gain(const LinearSystemBundle& bundle) {
    const Eigen::MatrixXd jac = bundle.dense_jacobian();
    const Eigen::MatrixXd gain =
        jac.transpose() * bundle.weight_vector().asDiagonal() * jac;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(gain);
    if (ldlt.info() != Eigen::Success || ldlt.vectorD().minCoeff() < kPivotEpsilon) {
        throw RankDeficient("gain matrix pivot below 1e-10: system not observable");
    }
    return ldlt;
}

} // namespace

std::vector<double> solve_linear_wls(const LinearSystemBundle& bundle) {
    const Eigen::MatrixXd jac = bundle.dense_jacobian();
    const Eigen::VectorXd weights = bundle.weight_vector();
    const Eigen::MatrixXd gain = jac.transpose() * weights.asDiagonal() * jac;
    const Eigen::VectorXd rhs =
        jac.transpose() * weights.cwiseProduct(bundle.residual_vector());

    Eigen::LDLT<Eigen::MatrixXd> ldlt(gain);
    if (ldlt.info() != Eigen::Success || ldlt.vectorD().minCoeff() < kPivotEpsilon) {
        throw RankDeficient("gain matrix pivot below 1e-10: system not observable");
    }
    const Eigen::VectorXd dx = ldlt.solve(rhs);

    const double defect = (gain * dx - rhs).lpNorm<Eigen::Infinity>();
    const double scale = rhs.lpNorm<Eigen::Infinity>();
    if (defect > 1e-9 * scale) {
        throw NumericalError("normal-equation solve failed the residual check");
    }
    return {dx.data(), dx.data() + dx.size()};
}

std::vector<double> covariance_diagonal(const LinearSystemBundle& bundle) {
    const auto ldlt = factorize_gain(bundle);
    const int dim = bundle.reduced_dimension();
    const Eigen::MatrixXd cov = ldlt.solve(Eigen::MatrixXd::Identity(dim, dim));
    std::vector<double> diag(dim);
    for (int i = 0; i < dim; ++i) diag[i] = cov(i, i);
    return diag;
}

bool full_column_rank(const LinearSystemBundle& bundle) {
    try {
        factorize_gain(bundle);
        return true;
    } catch (const RankDeficient&) {
        return false;
    }
}

WlsSolution gauss_newton(const NetworkCase& net, std::span<const Measurement> measurements,
                         const StateVector& x0, double tol, int max_iter) {
    const AdmittanceEntries adm = build_admittance(net);
    WlsSolution solution;
    solution.state = x0;

    for (int iter = 1; iter <= max_iter; ++iter) {
        const LinearSystemBundle bundle = assemble(net, measurements, solution.state, adm);
        const std::vector<double> dx = solve_linear_wls(bundle);

        std::vector<double> full(2 * bundle.n_buses, 0.0);
        double max_abs = 0.0;
        for (int flat = 0; flat < 2 * bundle.n_buses; ++flat) {
            const StateVarId var = flat < bundle.n_buses
                                       ? StateVarId::angle(flat + 1)
                                       : StateVarId::magnitude(flat - bundle.n_buses + 1);
            const int col = reduced_index(var, bundle.n_buses, bundle.slack_bus);
            if (col >= 0) {
                full[flat] = dx[col];
                max_abs = std::max(max_abs, std::abs(dx[col]));
            }
        }
        solution.state = apply_increment(solution.state, full);
        solution.iterations = iter;
        solution.final_max_increment = max_abs;
        if (max_abs < tol) {
            solution.converged = true;
            return solution;
        }
    }
    return solution;
}

double optimality_residual_inf(const NetworkCase& net, std::span<const Measurement> measurements,
                               const StateVector& x, const AdmittanceEntries& adm) {
    const LinearSystemBundle bundle = assemble(net, measurements, x, adm);
    const Eigen::MatrixXd jac = bundle.dense_jacobian();
    const Eigen::VectorXd grad =
        jac.transpose() * bundle.weight_vector().cwiseProduct(bundle.residual_vector());
    return grad.lpNorm<Eigen::Infinity>();
}

} // namespace sebp
