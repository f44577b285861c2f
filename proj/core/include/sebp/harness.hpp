#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sebp/gbp.hpp"
#include "sebp/measurement.hpp"

namespace sebp {

struct RunConfig {
    std::filesystem::path case_path;
    std::filesystem::path devices_path;
    std::vector<double> sigma2_set;
    int trials = 100;
    int q = 4;
    int nu_max = 7;
    double p = 0.5;
    double alpha = 0.5;
    std::uint64_t seed = 1;
    double tol = 0.0;          // engine early-stop; 0 keeps the full schedule
    double noise_scale = 1.0;  // 0 generates noise-free measurement values
    int threads = 1;
    std::vector<int> q_list;   // exponents compared by the q sweep
    std::filesystem::path output_dir;
};

RunConfig load_run_config(const std::filesystem::path& path);

struct RmseRecord {
    int trial = 0;
    double sigma2 = 0.0;
    int nu = 0;
    double rmse = 0.0;
};

struct AnomalyRecord {
    double sigma2 = 0.0;
    int trial = 0;
    std::string error;
};

struct SummaryRow {
    double sigma2 = 0.0;
    int nu = 0;
    double median_rmse = 0.0;
    double mean_rmse = 0.0;
};

/// Distance between the estimate and an iterate, normalized by the state
/// dimension n (not sqrt(n)): ||x_hat - x_nu||_2 / n.
double rmse(const StateVector& x_hat, const StateVector& x_nu);

struct MonteCarloResult {
    std::vector<RmseRecord> records;
    std::vector<AnomalyRecord> anomalies;
    std::vector<SummaryRow> summary;
};

/// For every (sigma^2, trial): generates a measurement set, solves it with
/// the centralized estimator, runs the message-passing estimator from flat
/// start, and records the per-outer-iteration distance between the two.
/// Writes rmse_records.csv, summary.csv and anomalies.csv into
/// cfg.output_dir (unless it is empty). Per-trial failures are recorded as
/// anomalies, never thrown. Output is byte-identical for a fixed
/// (config, seed) regardless of cfg.threads.
MonteCarloResult monte_carlo(const RunConfig& cfg);

struct QSweepRow {
    int q = 0;
    int nu = 0;
    long long cumulative_inner = 0;
    double median_rmse = 0.0;
    double mean_rmse = 0.0;
};

/// Compares inner-iteration exponents from cfg.q_list at a matched total
/// inner-iteration budget (the budget of cfg.q, cfg.nu_max) and the fixed
/// variance cfg.sigma2_set.front(). Writes qsweep.csv into cfg.output_dir.
std::vector<QSweepRow> sweep_q(const RunConfig& cfg);

/// Total inner iterations of the schedule: sum of nu^q for nu = 1..nu_max.
long long inner_iteration_budget(int q, int nu_max);

/// Smallest nu_max whose schedule reaches at least `budget` inner iterations.
int smallest_nu_max_for_budget(int q, long long budget);

} // namespace sebp
