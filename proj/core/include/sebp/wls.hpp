#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "sebp/measurement.hpp"
#include "sebp/network.hpp"

namespace sebp {

/// Flat index into the slack-reduced state: canonical order with the slack
/// angle column removed. Returns -1 for the slack angle itself.
int reduced_index(StateVarId id, int n_buses, int slack_bus);

/// Linearized weighted least-squares system at one iterate. Rows whose
/// Jacobian is singular (current magnitude at zero flow) are dropped and
/// reported in `dropped_measurements`.
struct LinearSystemBundle {
    std::vector<JacobianRow> rows;       // slack angle column already removed
    std::vector<double> weights;         // 1 / sigma^2
    std::vector<double> residuals;       // z - h(x)
    std::vector<int> measurement_index;  // original index per kept row
    std::vector<int> dropped_measurements;
    int n_buses = 0;
    int slack_bus = 0;

    int reduced_dimension() const { return 2 * n_buses - 1; }
    int row_count() const { return static_cast<int>(rows.size()); }

    Eigen::MatrixXd dense_jacobian() const;
    Eigen::VectorXd residual_vector() const;
    Eigen::VectorXd weight_vector() const;
};

LinearSystemBundle assemble(const NetworkCase& net, std::span<const Measurement> measurements,
                            const StateVector& x, const AdmittanceEntries& adm);

/// Solves the weighted normal equations J^T W J dx = J^T W r by a dense
/// symmetric factorization. Throws RankDeficient when a pivot falls below
/// 1e-10; verifies the solution against the normal equations before
/// returning.
std::vector<double> solve_linear_wls(const LinearSystemBundle& bundle);

/// Diagonal of (J^T W J)^{-1}, the estimation error covariance at the
/// current linearization.
std::vector<double> covariance_diagonal(const LinearSystemBundle& bundle);

bool full_column_rank(const LinearSystemBundle& bundle);

struct WlsSolution {
    StateVector state;
    int iterations = 0;
    bool converged = false;
    double final_max_increment = 0.0;
};

/// Centralized estimator: repeated linearization and normal-equation solves
/// from x0 until max|dx| < tol or max_iter. Non-convergence is reported in
/// the flag, never thrown; rank deficiency propagates.
WlsSolution gauss_newton(const NetworkCase& net, std::span<const Measurement> measurements,
                         const StateVector& x0, double tol, int max_iter);

/// Infinity norm of J^T W r at x: first-order optimality of the estimate.
double optimality_residual_inf(const NetworkCase& net, std::span<const Measurement> measurements,
                               const StateVector& x, const AdmittanceEntries& adm);

} // namespace sebp
