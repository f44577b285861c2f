#pragma once

#include <filesystem>
#include <map>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace sebp {

struct Bus {
    int id = 0;
    bool is_slack = false;
    double v_true = 1.0;      // per-unit magnitude at the true operating point
    double theta_true = 0.0;  // radians

    bool operator==(const Bus&) const = default;
};

/// Branch between two buses. Series admittance g + jb plus one shunt
/// admittance per end (the end named by `from` carries g_sf, b_sf).
struct Branch {
    int from = 0;
    int to = 0;
    double g = 0.0;
    double b = 0.0;
    double g_sf = 0.0;
    double b_sf = 0.0;
    double g_st = 0.0;
    double b_st = 0.0;

    bool operator==(const Branch&) const = default;
};

struct NetworkCase {
    std::vector<Bus> buses;
    std::vector<Branch> branches;

    int bus_count() const { return static_cast<int>(buses.size()); }
    int slack_bus() const;

    /// Branch connecting buses i and j in either orientation, or nullptr.
    const Branch* find_branch(int i, int j) const;

    bool operator==(const NetworkCase&) const = default;
};

/// Loads and validates a case file. Throws ParseError on malformed input,
/// ValidationError on invariant violations (duplicate ids, slack count != 1,
/// dangling or parallel branches, disconnected graph).
NetworkCase load_case(const std::filesystem::path& path);

NetworkCase case_from_json(const nlohmann::json& doc);
nlohmann::ordered_json case_to_json(const NetworkCase& net);
void save_case(const NetworkCase& net, const std::filesystem::path& path);

void validate_case(const NetworkCase& net);

/// Sparse bus-admittance entries. Entries exist only on the diagonal and on
/// pairs joined by a branch; both (i,j) and (j,i) are stored.
struct AdmittanceEntries {
    std::map<std::pair<int, int>, double> G;
    std::map<std::pair<int, int>, double> B;
    /// Per bus id (1-based): sorted incident buses, including the bus itself.
    std::vector<std::vector<int>> neighbor_sets;

    double g(int i, int j) const { return G.at({i, j}); }
    double b(int i, int j) const { return B.at({i, j}); }
    const std::vector<int>& neighbors(int bus) const { return neighbor_sets[bus]; }
};

AdmittanceEntries build_admittance(const NetworkCase& net);

} // namespace sebp
