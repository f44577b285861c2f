#include "sebp/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "sebp/csv.hpp"
#include "sebp/errors.hpp"
#include "sebp/rng.hpp"
#include "sebp/wls.hpp"

namespace sebp {

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open run config: " + path.string());
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    RunConfig cfg;
    try {
        cfg.case_path = doc.at("case").get<std::string>();
        cfg.devices_path = doc.at("devices").get<std::string>();
        cfg.sigma2_set = doc.at("sigma2").get<std::vector<double>>();
        cfg.trials = doc.value("trials", cfg.trials);
        cfg.q = doc.value("q", cfg.q);
        cfg.nu_max = doc.value("nu_max", cfg.nu_max);
        cfg.p = doc.value("p", cfg.p);
        cfg.alpha = doc.value("alpha", cfg.alpha);
        cfg.seed = doc.value("seed", cfg.seed);
        cfg.tol = doc.value("tol", cfg.tol);
        cfg.noise_scale = doc.value("noise_scale", cfg.noise_scale);
        cfg.threads = doc.value("threads", cfg.threads);
        if (doc.contains("q_list")) cfg.q_list = doc["q_list"].get<std::vector<int>>();
        if (doc.contains("output_dir")) {
            cfg.output_dir = doc["output_dir"].get<std::string>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    if (cfg.trials < 1) throw ValidationError("trials must be >= 1");
    for (double s2 : cfg.sigma2_set) {
        if (!(s2 > 0.0)) throw ValidationError("sigma2 values must be > 0");
    }
    return cfg;
}

double rmse(const StateVector& x_hat, const StateVector& x_nu) {
    if (x_hat.theta.size() != x_nu.theta.size() || x_hat.v.size() != x_nu.v.size()) {
        throw ValidationError("rmse: state dimensions differ");
    }
    double sum = 0.0;
    for (int i = 0; i < x_hat.bus_count(); ++i) {
        const double dt = x_hat.theta[i] - x_nu.theta[i];
        const double dv = x_hat.v[i] - x_nu.v[i];
        sum += dt * dt + dv * dv;
    }
    return std::sqrt(sum) / static_cast<double>(x_hat.dimension());
}

long long inner_iteration_budget(int q, int nu_max) {
    long long total = 0;
    for (int nu = 1; nu <= nu_max; ++nu) {
        long long tau = 1;
        for (int k = 0; k < q; ++k) tau *= nu;
        total += tau;
    }
    return total;
}

int smallest_nu_max_for_budget(int q, long long budget) {
    int nu_max = 0;
    long long total = 0;
    while (total < budget) {
        ++nu_max;
        long long tau = 1;
        for (int k = 0; k < q; ++k) tau *= nu_max;
        total += tau;
    }
    return nu_max;
}

namespace {

struct TrialOutcome {
    bool ok = false;
    std::string error;
    std::vector<double> rmse_by_nu; // index 0 -> nu = 1
};

// One Monte-Carlo trial: draw a measurement set, solve centrally, run the
// message-passing estimator, compare per outer iteration.
TrialOutcome run_trial(const NetworkCase& net, const AdmittanceEntries& adm,
                       std::span<const Device> devices, double sigma2, int q, int nu_max,
                       double p, double alpha, double tol, double noise_scale,
                       std::uint64_t trial_seed) {
    TrialOutcome outcome;
    try {
        const std::vector<Measurement> measurements =
            generate_measurements(net, devices, sigma2, rng::mix(trial_seed, 1), noise_scale);

        const StateVector flat = StateVector::flat_start(net.bus_count());
        const WlsSolution wls = gauss_newton(net, measurements, flat, 1e-10, 50);
        if (!wls.converged) {
            outcome.error = "gauss_newton did not converge";
            return outcome;
        }

        const FactorGraph graph = build_graph(net, measurements);
        GbpEngine engine(graph, net, adm, Schedule{q, nu_max, tol},
                         DampingConfig{p, alpha, rng::mix(trial_seed, 2)});
        const ConvergenceTrace trace = engine.run(flat);

        outcome.rmse_by_nu.reserve(trace.entries.size());
        for (const TraceEntry& entry : trace.entries) {
            outcome.rmse_by_nu.push_back(rmse(wls.state, entry.state));
        }
        outcome.ok = true;
    } catch (const std::exception& e) {
        outcome.error = e.what();
    }
    return outcome;
}

// Runs one job per (sigma index, trial) slot on cfg.threads workers. Slots
// are preassigned, so results land in a fixed order no matter which worker
// gets there first.
std::vector<TrialOutcome> run_all_trials(const RunConfig& cfg, const NetworkCase& net,
                                         const AdmittanceEntries& adm,
                                         std::span<const Device> devices,
                                         std::span<const double> sigma2_set) {
    const int total = static_cast<int>(sigma2_set.size()) * cfg.trials;
    std::vector<TrialOutcome> outcomes(total);

    auto job = [&](int slot) {
        const int sigma_idx = slot / cfg.trials;
        const int trial = slot % cfg.trials;
        const std::uint64_t trial_seed =
            rng::mix(cfg.seed, static_cast<std::uint64_t>(sigma_idx),
                     static_cast<std::uint64_t>(trial));
        outcomes[slot] = run_trial(net, adm, devices, sigma2_set[sigma_idx], cfg.q, cfg.nu_max,
                                   cfg.p, cfg.alpha, cfg.tol, cfg.noise_scale, trial_seed);
    };

    const int workers = std::max(1, cfg.threads);
    if (workers == 1) {
        for (int slot = 0; slot < total; ++slot) job(slot);
    } else {
        std::atomic<int> next{0};
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (int slot = next.fetch_add(1); slot < total; slot = next.fetch_add(1)) {
                    job(slot);
                }
            });
        }
        for (std::thread& t : pool) t.join();
    }
    return outcomes;
}

double median(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    if (n == 0) return std::numeric_limits<double>::quiet_NaN();
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double mean(const std::vector<double>& values) {
    if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
    double sum = 0.0;
    for (double v : values) sum += v;
    return sum / static_cast<double>(values.size());
}

std::ofstream open_output(const std::filesystem::path& dir, const char* name) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw Error("cannot write " + (dir / name).string());
    return out;
}

} // namespace

MonteCarloResult monte_carlo(const RunConfig& cfg) {
    const NetworkCase net = load_case(cfg.case_path);
    const AdmittanceEntries adm = build_admittance(net);
    const std::vector<Device> devices = load_devices(cfg.devices_path);

    const std::vector<TrialOutcome> outcomes =
        run_all_trials(cfg, net, adm, devices, cfg.sigma2_set);

    MonteCarloResult result;
    for (std::size_t sigma_idx = 0; sigma_idx < cfg.sigma2_set.size(); ++sigma_idx) {
        const double sigma2 = cfg.sigma2_set[sigma_idx];
        for (int trial = 0; trial < cfg.trials; ++trial) {
            const TrialOutcome& outcome = outcomes[sigma_idx * cfg.trials + trial];
            if (!outcome.ok) {
                result.anomalies.push_back({sigma2, trial, outcome.error});
                continue;
            }
            for (std::size_t k = 0; k < outcome.rmse_by_nu.size(); ++k) {
                result.records.push_back(
                    {trial, sigma2, static_cast<int>(k) + 1, outcome.rmse_by_nu[k]});
            }
        }
        // Per-nu summary over the trials that produced this iteration.
        for (int nu = 1; nu <= cfg.nu_max; ++nu) {
            std::vector<double> values;
            for (int trial = 0; trial < cfg.trials; ++trial) {
                const TrialOutcome& outcome = outcomes[sigma_idx * cfg.trials + trial];
                if (outcome.ok && nu <= static_cast<int>(outcome.rmse_by_nu.size())) {
                    values.push_back(outcome.rmse_by_nu[nu - 1]);
                }
            }
            if (!values.empty()) {
                result.summary.push_back({sigma2, nu, median(values), mean(values)});
            }
        }
    }

    if (!cfg.output_dir.empty()) {
        std::filesystem::create_directories(cfg.output_dir);
        auto records = open_output(cfg.output_dir, "rmse_records.csv");
        records << "sigma2,trial,nu,rmse\n";
        for (const RmseRecord& rec : result.records) {
            records << csv::format_double(rec.sigma2) << ',' << rec.trial << ',' << rec.nu << ','
                    << csv::format_double(rec.rmse) << '\n';
        }
        auto summary = open_output(cfg.output_dir, "summary.csv");
        summary << "sigma2,nu,median_rmse,mean_rmse\n";
        for (const SummaryRow& row : result.summary) {
            summary << csv::format_double(row.sigma2) << ',' << row.nu << ','
                    << csv::format_double(row.median_rmse) << ','
                    << csv::format_double(row.mean_rmse) << '\n';
        }
        auto anomalies = open_output(cfg.output_dir, "anomalies.csv");
        anomalies << "sigma2,trial,error\n";
        for (const AnomalyRecord& rec : result.anomalies) {
            anomalies << csv::format_double(rec.sigma2) << ',' << rec.trial << ",\"" << rec.error
                      << "\"\n";
        }
    }
    return result;
}

std::vector<QSweepRow> sweep_q(const RunConfig& cfg) {
    if (cfg.q_list.empty()) throw ValidationError("sweep_q: q_list is empty");
    if (cfg.sigma2_set.empty()) throw ValidationError("sweep_q: sigma2 set is empty");
    for (int q : cfg.q_list) {
        if (q < 1) throw ValidationError("sweep_q: exponents must be >= 1");
    }

    const NetworkCase net = load_case(cfg.case_path);
    const AdmittanceEntries adm = build_admittance(net);
    const std::vector<Device> devices = load_devices(cfg.devices_path);

    const long long budget = inner_iteration_budget(cfg.q, cfg.nu_max);
    const double sigma2 = cfg.sigma2_set.front();
    const std::vector<double> one_sigma{sigma2};

    std::vector<QSweepRow> rows;
    for (int q : cfg.q_list) {
        RunConfig sub = cfg;
        sub.q = q;
        sub.nu_max = smallest_nu_max_for_budget(q, budget);
        // Same trial seeds for every q: the exponents see identical
        // measurement draws.
        const std::vector<TrialOutcome> outcomes =
            run_all_trials(sub, net, adm, devices, one_sigma);

        long long cumulative = 0;
        for (int nu = 1; nu <= sub.nu_max; ++nu) {
            long long tau = 1;
            for (int k = 0; k < q; ++k) tau *= nu;
            cumulative += tau;
            std::vector<double> values;
            for (const TrialOutcome& outcome : outcomes) {
                if (outcome.ok && nu <= static_cast<int>(outcome.rmse_by_nu.size())) {
                    values.push_back(outcome.rmse_by_nu[nu - 1]);
                }
            }
            if (!values.empty()) {
                rows.push_back({q, nu, cumulative, median(values), mean(values)});
            }
        }
    }

    if (!cfg.output_dir.empty()) {
        std::filesystem::create_directories(cfg.output_dir);
        auto out = open_output(cfg.output_dir, "qsweep.csv");
        out << "q,nu,cumulative_inner,median_rmse,mean_rmse\n";
        for (const QSweepRow& row : rows) {
            out << row.q << ',' << row.nu << ',' << row.cumulative_inner << ','
                << csv::format_double(row.median_rmse) << ',' << csv::format_double(row.mean_rmse)
                << '\n';
        }
    }
    return rows;
}

} // namespace sebp
