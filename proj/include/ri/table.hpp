#pragma once

#include <cstdlib>
#include <map>
#include <sstream>

#include "ri/population.hpp"

namespace ri {

// Monte Carlo estimates of the conditional mean choice data over the covariate
// grid, with paired value-function estimates. The CSV form is the interchange
// format between the simulate and identify commands.
struct TableEntry {
    std::string id;
    CovariatePoint x;
    PointStats stats;
};

struct ConditionalMeanTable {
    std::vector<TableEntry> entries;
    bool latent = false;
    long draws = 0;
    std::uint64_t seed = 0;

    const TableEntry& at(std::size_t i) const { return entries.at(i); }

    const TableEntry* find(const CovariatePoint& x, double tol = 1e-12) const {
        for (const TableEntry& e : entries) {
            double d = 0.0;
            for (std::size_t a = 0; a < x.size(); ++a)
                for (std::size_t p = 0; p < x[a].size(); ++p)
                    d = std::max(d, std::abs(e.x[a][p] - x[a][p]));
            if (d <= tol) return &e;
        }
        return nullptr;
    }
};

// Simulate the whole grid in one pass so every point shares the draw stream.
inline ConditionalMeanTable simulate_table(const Scenario& sc, const SimOptions& opt = {}) {
    std::vector<CovariatePoint> pts = enumerate_grid(sc);
    if (pts.empty()) throw ConfigError("simulate_table: scenario has an empty covariate grid");
    MultiStats ms = simulate_multi(sc, pts, {}, opt);
    ConditionalMeanTable table;
    table.latent = sc.is_latent();
    table.draws = ms.draws_used;
    table.seed = opt.seed ? opt.seed : sc.seed;
    for (std::size_t p = 0; p < pts.size(); ++p)
        table.entries.push_back({point_id(p), pts[p], std::move(ms.points[p])});
    return table;
}

// CSV schema: x_id,alternative,state,mean_cond,mean_marg,se,value_mean.
// Latent-variant tables are marginal-only: one row per (x, alternative) with
// state '-', mean_cond echoing the marginal, and se the marginal's SE.
inline std::string table_to_csv(const ConditionalMeanTable& table, const Scenario& sc) {
    std::ostringstream os;
    os << "x_id,alternative,state,mean_cond,mean_marg,se,value_mean\n";
    for (const TableEntry& e : table.entries) {
        for (std::size_t a = 0; a < sc.num_alternatives(); ++a) {
            if (table.latent) {
                os << e.id << ',' << sc.alternatives[a] << ",-,"
                   << fmt17(e.stats.mean_marg[a]) << ',' << fmt17(e.stats.mean_marg[a]) << ','
                   << fmt17(e.stats.se_marg[a]) << ',' << fmt17(e.stats.value_mean) << '\n';
            } else {
                for (std::size_t j = 0; j < sc.num_states(); ++j)
                    os << e.id << ',' << sc.alternatives[a] << ',' << sc.states[j] << ','
                       << fmt17(e.stats.mean_cond[a][j]) << ',' << fmt17(e.stats.mean_marg[a])
                       << ',' << fmt17(e.stats.se_cond[a][j]) << ','
                       << fmt17(e.stats.value_mean) << '\n';
            }
        }
    }
    return os.str();
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

}  // namespace detail

// Rebuild a table from its CSV against the scenario that produced it; grid
// coordinates come from re-enumerating the scenario's grid in file order.
inline ConditionalMeanTable table_from_csv(const std::string& csv, const Scenario& sc) {
    std::vector<CovariatePoint> pts = enumerate_grid(sc);
    const std::size_t K = sc.num_alternatives(), J = sc.num_states();
    ConditionalMeanTable table;
    table.latent = sc.is_latent();
    std::map<std::string, std::size_t> index;
    std::istringstream is(csv);
    std::string line;
    if (!std::getline(is, line) ||
        line.rfind("x_id,alternative,state,mean_cond,mean_marg,se,value_mean", 0) != 0)
        throw ConfigError("means file: unexpected header");
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        auto f = detail::split_csv_line(line);
        if (f.size() != 7) throw ConfigError("means file: malformed row '" + line + "'");
        for (int c : {3, 4, 5, 6}) {
            char* end = nullptr;
            std::strtod(f[c].c_str(), &end);
            if (end == f[c].c_str() || *end != '\0')
                throw ConfigError("means file: non-numeric field '" + f[c] + "'");
        }
        const std::string& id = f[0];
        if (!index.count(id)) {
            const std::size_t p = table.entries.size();
            if (p >= pts.size())
                throw ConfigError("means file: more grid points than the scenario defines");
            index[id] = p;
            TableEntry e;
            e.id = id;
            e.x = pts[p];
            e.stats.mean_cond = zeros(K, J);
            e.stats.se_cond = zeros(K, J);
            e.stats.mean_marg.assign(K, 0.0);
            e.stats.se_marg.assign(K, 0.0);
            table.entries.push_back(std::move(e));
        }
        TableEntry& e = table.entries[index[id]];
        const auto ait = std::find(sc.alternatives.begin(), sc.alternatives.end(), f[1]);
        if (ait == sc.alternatives.end())
            throw ConfigError("means file: unknown alternative '" + f[1] + "'");
        const std::size_t a = static_cast<std::size_t>(ait - sc.alternatives.begin());
        e.stats.value_mean = std::stod(f[6]);
        e.stats.mean_marg[a] = std::stod(f[4]);
        if (f[2] == "-") {
            if (!table.latent) throw ConfigError("means file: marginal row in a state table");
            e.stats.se_marg[a] = std::stod(f[5]);
        } else {
            if (table.latent) throw ConfigError("means file: state row in a marginal table");
            const auto sit = std::find(sc.states.begin(), sc.states.end(), f[2]);
            if (sit == sc.states.end())
                throw ConfigError("means file: unknown state '" + f[2] + "'");
            const std::size_t j = static_cast<std::size_t>(sit - sc.states.begin());
            e.stats.mean_cond[a][j] = std::stod(f[3]);
            e.stats.se_cond[a][j] = std::stod(f[5]);
        }
    }
    if (table.entries.size() != pts.size())
        throw ConfigError("means file: grid point count does not match the scenario");
    return table;
}

}  // namespace ri
