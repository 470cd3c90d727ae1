// Command-line front end: solve one draw, run the equivalence experiment,
// simulate conditional mean tables, run the identification pipeline, and
// verify the invariant battery. Every command writes a manifest with SHA-256
// digests of its outputs, whether it succeeds or fails.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

#include "ri/identification.hpp"
#include "ri/manifest.hpp"
#include "ri/random_instance.hpp"

namespace fs = std::filesystem;
using namespace ri;

namespace {

constexpr const char* kVersion = "ri 0.1.0";

// exit-code contract: 0 ok, 2 config, 3 numeric failure, 4 invariant failure,
// 5 identification precondition failure
int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return 2;
    if (dynamic_cast<const VariantMismatch*>(&e)) return 2;
    if (dynamic_cast<const GridNotRectangular*>(&e)) return 2;
    if (dynamic_cast<const NotPaired*>(&e)) return 5;
    if (dynamic_cast<const Error*>(&e)) return 3;
    return 3;
}

struct OutputSink {
    fs::path dir;
    RunManifest manifest;

    explicit OutputSink(const std::string& out_dir, const std::string& command) {
        dir = out_dir;
        fs::create_directories(dir);
        manifest.command = command;
        manifest.tool_version = kVersion;
        manifest.started = iso_timestamp();
    }

    std::string write(const std::string& name, const std::string& content) {
        const fs::path p = dir / name;
        write_file(p.string(), content);
        manifest.outputs.push_back({name, sha256_hex(content)});
        return p.string();
    }

    void finish(const std::string& status) {
        manifest.finished = iso_timestamp();
        manifest.status = status;
        write_file((dir / (manifest.command + "_manifest.json")).string(),
                   manifest.to_json());
    }
};

std::uint64_t effective_seed(const Scenario& sc, std::uint64_t flag_seed) {
    if (flag_seed) return flag_seed;
    if (const char* env = std::getenv("RI_SEED")) {
        char* end = nullptr;
        const unsigned long long v = std::strtoull(env, &end, 10);
        if (end && *end == '\0' && v > 0) return static_cast<std::uint64_t>(v);
    }
    return sc.seed;
}

std::size_t alternative_index(const Scenario& sc, const std::string& name) {
    auto it = std::find(sc.alternatives.begin(), sc.alternatives.end(), name);
    if (it == sc.alternatives.end())
        throw ConfigError("unknown alternative '" + name + "'");
    return static_cast<std::size_t>(it - sc.alternatives.begin());
}

std::size_t state_index(const Scenario& sc, const std::string& name) {
    auto it = std::find(sc.states.begin(), sc.states.end(), name);
    if (it == sc.states.end()) throw ConfigError("unknown state '" + name + "'");
    return static_cast<std::size_t>(it - sc.states.begin());
}

Instance instance_at(const Scenario& sc, const CovariatePoint& x, const Draw& d) {
    return Instance{sc.alternatives, sc.states, sc.prior, sc.utility_at(x), d.e,
                    AttentionCost(sc.het.cost_family, d.kappa, sc.prior)};
}

CovariatePoint solve_point(const Scenario& sc) {
    if (!sc.has_covariates()) return sc.zero_point();
    CovariatePoint x = sc.zero_point();
    for (const GridAxis& ax : sc.axes)
        x[ax.alt][ax.attr] = ax.values[(ax.values.size() - 1) / 2];
    return x;
}

// --- SVG plot of the two-state envelope geometry ------------------------------

std::string envelope_svg(const Instance& inst, const EnvelopeSolution& env) {
    const int W = 640, H = 440, ML = 50, MR = 20, MT = 20, MB = 40;
    const int n_samples = 240;
    auto evs = make_evaluators(inst);
    std::vector<Vec> curves(inst.num_alternatives(), Vec(n_samples + 1));
    double ymin = kPosInf, ymax = kNegInf;
    for (int s = 0; s <= n_samples; ++s) {
        const double g = static_cast<double>(s) / n_samples;
        Belief gb({g, 1.0 - g});
        for (std::size_t a = 0; a < inst.num_alternatives(); ++a) {
            const double v = net_utility(inst, a, gb);
            curves[a][s] = v;
            if (std::isfinite(v)) {
                ymin = std::min(ymin, v);
                ymax = std::max(ymax, v);
            }
        }
    }
    const double pad = 0.08 * (ymax - ymin + 1e-9);
    ymin -= pad;
    ymax += pad;
    auto X = [&](double g) { return ML + g * (W - ML - MR); };
    auto Y = [&](double v) { return H - MB - (v - ymin) / (ymax - ymin) * (H - MT - MB); };
    std::ostringstream os;
    os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H
       << "'>\n<rect width='100%' height='100%' fill='white'/>\n";
    os << "<line x1='" << X(0) << "' y1='" << Y(ymin) << "' x2='" << X(0) << "' y2='"
       << Y(ymax) << "' stroke='black'/>\n";
    os << "<line x1='" << X(0) << "' y1='" << H - MB << "' x2='" << X(1) << "' y2='"
       << H - MB << "' stroke='black'/>\n";
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b"};
    for (std::size_t a = 0; a < curves.size(); ++a) {
        os << "<polyline fill='none' stroke='" << colors[a % 5] << "' points='";
        for (int s = 0; s <= n_samples; ++s) {
            if (!std::isfinite(curves[a][s])) continue;
            os << X(static_cast<double>(s) / n_samples) << ',' << Y(curves[a][s]) << ' ';
        }
        os << "'/>\n";
    }
    // tangent hyperplane at the solved direction
    const double theta = env.optimal_direction.theta[0];
    double delta = kNegInf;
    for (std::size_t i = 0; i < env.posteriors.size(); ++i)
        delta = std::max(delta, env.values_at_posteriors[i] - theta * env.posteriors[i].p[0]);
    os << "<line x1='" << X(0) << "' y1='" << Y(delta) << "' x2='" << X(1) << "' y2='"
       << Y(theta + delta) << "' stroke='#555' stroke-dasharray='6,4'/>\n";
    for (std::size_t i = 0; i < env.posteriors.size(); ++i)
        os << "<circle cx='" << X(env.posteriors[i].p[0]) << "' cy='"
           << Y(env.values_at_posteriors[i]) << "' r='4' fill='black'/>\n";
    os << "<circle cx='" << X(inst.prior.p[0]) << "' cy='" << Y(delta + theta * inst.prior.p[0])
       << "' r='4' fill='none' stroke='black'/>\n";
    os << "<text x='" << X(1) - 8 << "' y='" << H - MB + 16
       << "' font-size='12'>belief in state 1</text>\n";
    os << "</svg>\n";
    return os.str();
}

// --- subcommands ---------------------------------------------------------------

int cmd_solve(const std::string& scenario_path, long draw_index, bool plot,
              const std::string& out_dir) {
    OutputSink sink(out_dir, "solve");
    try {
        Scenario sc = load_scenario(scenario_path);
        sink.manifest.scenario_path = scenario_path;
        sink.manifest.scenario_digest = sha256_hex(read_file(scenario_path));
        sc.seed = effective_seed(sc, 0);
        sink.manifest.seed = sc.seed;
        if (draw_index < 0) throw ConfigError("--draw-index must be >= 0");
        Draw d = sample_draw(sc, static_cast<std::uint64_t>(draw_index));
        Instance inst = instance_at(sc, solve_point(sc), d);
        AssumptionReport rep = verify_assumptions(inst);
        EnvelopeSolution env = solve_ri_envelope(inst);

        std::ostringstream pol;
        pol << "posterior_index";
        for (const std::string& s : sc.states) pol << ",gamma_" << s;
        pol << ",weight,choice,value\n";
        for (std::size_t i = 0; i < env.posteriors.size(); ++i) {
            pol << i;
            for (double g : env.posteriors[i].p) pol << ',' << fmt17(g);
            pol << ',' << fmt17(env.weights[i]) << ',' << sc.alternatives[env.alternatives[i]]
                << ',' << fmt17(env.value) << '\n';
        }
        sink.write("policy.csv", pol.str());

        std::ostringstream ar;
        ar << "finite_disturbance: " << (rep.finite_disturbance ? "pass" : "fail") << '\n'
           << "supported_rank: " << (rep.supported_rank_ok ? "pass" : "fail") << '\n'
           << "distinct_differences: " << (rep.distinct_differences ? "pass" : "fail") << '\n';
        if (!rep.detail.empty()) ar << "detail: " << rep.detail << '\n';
        sink.write("assumptions.txt", ar.str());

        {
            PosteriorPolicy p;
            p.posteriors = env.posteriors;
            p.weights = env.weights;
            p.choice.resize(env.posteriors.size());
            for (std::size_t i = 0; i < env.posteriors.size(); ++i)
                p.choice[i] = {{env.alternatives[i], 1.0}};
            sink.write("sdsc.csv",
                       sdsc_to_csv(generate_sdsc(p, sc.prior), sc.alternatives, sc.states));
        }
        if (plot && sc.num_states() == 2) sink.write("envelope.svg", envelope_svg(inst, env));
        sink.finish("ok");
        std::cout << "value " << fmt17(env.value) << ", " << env.posteriors.size()
                  << " posterior(s)\n";
        return 0;
    } catch (const std::exception& e) {
        sink.finish(std::string("error: ") + e.what());
        std::cerr << "solve: " << e.what() << '\n';
        return exit_code_for(e);
    }
}

int cmd_equivalence(const std::string& scenario_path, int instances, double tol,
                    const std::string& out_dir) {
    OutputSink sink(out_dir, "equivalence");
    try {
        Scenario sc = load_scenario(scenario_path);
        sink.manifest.scenario_path = scenario_path;
        sink.manifest.scenario_digest = sha256_hex(read_file(scenario_path));
        sc.seed = effective_seed(sc, 0);
        sink.manifest.seed = sc.seed;
        if (instances < 1) throw ConfigError("--instances must be >= 1");

        std::ostringstream csv;
        csv << "instance,policy_route,generated_route,direct_route,revealed_route,"
               "matrix_gap,pass\n";
        int failures = 0;
        double worst_gap = 0.0;
        for (int i = 0; i < instances; ++i) {
            Instance inst =
                i == 0 && sc.kind == UtilityKind::table
                    ? instance_at(sc, sc.zero_point(), sample_draw(sc, 0))
                    : make_random_instance(sc.num_states(),
                                           std::min<std::size_t>(sc.num_alternatives() + 2, 4),
                                           sc.het.cost_family, sc.seed + i);
            EquivalenceReport rep = check_equivalence(inst, tol);
            const bool pass = rep.assumptions_ok && rep.values_within(tol);
            if (!pass) ++failures;
            const double spread =
                std::max({rep.policy_route, rep.generated_route, rep.direct_route,
                          rep.revealed_route}) -
                std::min({rep.policy_route, rep.generated_route, rep.direct_route,
                          rep.revealed_route});
            worst_gap = std::max(worst_gap, spread);
            csv << i << ',' << fmt17(rep.policy_route) << ',' << fmt17(rep.generated_route)
                << ',' << fmt17(rep.direct_route) << ',' << fmt17(rep.revealed_route) << ','
                << fmt17(rep.matrix_gap) << ',' << (pass ? "1" : "0") << '\n';
        }
        sink.write("equivalence.csv", csv.str());
        std::cout << "pass rate " << (instances - failures) << "/" << instances
                  << ", worst value spread " << fmt17(worst_gap) << "\n";
        sink.finish(failures == 0 ? "ok" : "equivalence failures");
        return failures == 0 ? 0 : 4;
    } catch (const std::exception& e) {
        sink.finish(std::string("error: ") + e.what());
        std::cerr << "equivalence: " << e.what() << '\n';
        return exit_code_for(e);
    }
}

int cmd_simulate(const std::string& scenario_path, long draws, std::uint64_t seed,
                 int threads, const std::string& out_dir) {
    OutputSink sink(out_dir, "simulate");
    try {
        Scenario sc = load_scenario(scenario_path);
        sink.manifest.scenario_path = scenario_path;
        sink.manifest.scenario_digest = sha256_hex(read_file(scenario_path));
        if (!sc.has_covariates() || sc.axes.empty())
            throw ConfigError("simulate requires a scenario with a covariate grid");
        SimOptions so;
        so.draws = draws;
        so.seed = effective_seed(sc, seed);
        so.threads = threads;
        sink.manifest.seed = so.seed;
        ConditionalMeanTable table = simulate_table(sc, so);
        const double reject_rate =
            static_cast<double>(table.entries[0].stats.rejected) /
            std::max(1.0, static_cast<double>(table.entries[0].stats.draws_used));
        if (reject_rate > 1e-3)
            throw SolverFailure("rejection rate " + fmt17(reject_rate) +
                                " above the 0.1% budget");
        sink.write("means.csv", table_to_csv(table, sc));
        nlohmann::json meta;
        meta["scenario_sha256"] = sink.manifest.scenario_digest;
        meta["variant"] = table.latent ? "market" : "state";
        meta["draws"] = table.draws;
        meta["seed"] = table.seed;
        sink.write("means.meta.json", meta.dump(2) + "\n");
        sink.finish("ok");
        std::cout << "simulated " << table.entries.size() << " grid points, " << table.draws
                  << " draws, " << table.entries[0].stats.rejected << " rejected\n";
        return 0;
    } catch (const std::exception& e) {
        sink.finish(std::string("error: ") + e.what());
        std::cerr << "simulate: " << e.what() << '\n';
        return exit_code_for(e);
    }
}

struct IdentifyFlags {
    std::string means_path;
    std::string mode = "state";
    std::string anchor_alt, anchor_state;
    double anchor_value = kNegInf;
    int sign = -1;
    long draws = -1;
    int threads = 0;
    std::vector<std::string> welfare_pairs;
    std::string queries_path;
};

int cmd_identify(const std::string& scenario_path, const IdentifyFlags& flags,
                 const std::string& out_dir) {
    OutputSink sink(out_dir, "identify");
    try {
        Scenario sc = load_scenario(scenario_path);
        sink.manifest.scenario_path = scenario_path;
        sink.manifest.scenario_digest = sha256_hex(read_file(scenario_path));
        sink.manifest.seed = sc.seed;
        const IdMode mode = flags.mode == "market" ? IdMode::market : IdMode::state;
        if (flags.mode != "market" && flags.mode != "state")
            throw ConfigError("--mode must be 'state' or 'market'");

        // digest and variant checks against the means file's sidecar
        const fs::path meta_path = fs::path(flags.means_path).parent_path() / "means.meta.json";
        if (!fs::exists(meta_path))
            throw ConfigError("means metadata '" + meta_path.string() + "' not found");
        nlohmann::json meta = nlohmann::json::parse(read_file(meta_path.string()));
        if (meta.value("scenario_sha256", "") != sink.manifest.scenario_digest)
            throw ConfigError("means file was produced from a different scenario (digest mismatch)");
        const std::string variant = meta.value("variant", "state");
        if ((mode == IdMode::market) != (variant == "market"))
            throw ConfigError("means file variant '" + variant + "' does not match --mode " +
                              flags.mode);

        ConditionalMeanTable table = table_from_csv(read_file(flags.means_path), sc);
        IdOptions opt;
        opt.draws = flags.draws > 0 ? flags.draws : table.draws;
        opt.seed = meta.value("seed", sc.seed);
        opt.threads = flags.threads;

        Normalization norm;
        norm.anchor_alt = flags.anchor_alt.empty() ? std::min<std::size_t>(1, sc.num_alternatives() - 1)
                                                   : alternative_index(sc, flags.anchor_alt);
        norm.anchor_attr = 0;
        const GridAxis& ax_b = detail::axis_of(sc, norm.anchor_alt, 0);
        norm.anchor_value = flags.anchor_value == kNegInf
                                ? ax_b.values[(ax_b.values.size() - 1) / 2]
                                : flags.anchor_value;
        norm.sign = flags.sign;
        norm.state = flags.anchor_state.empty() ? 0 : state_index(sc, flags.anchor_state);
        norm.price_anchor = norm.sign == -1;

        // ratio table at every interior grid point
        std::ostringstream ratios;
        ratios << "x_id,alt_a,alt_b,state,ratio,se,numerator,denominator\n";
        for (std::size_t e = 0; e < table.entries.size(); ++e) {
            const CovariatePoint& x = table.entries[e].x;
            for (std::size_t a = 0; a < sc.num_alternatives(); ++a) {
                if (a == norm.anchor_alt) continue;
                RatioResult r;
                try {
                    r = mode == IdMode::market
                            ? market_utility_ratio(sc, x, a, 0, norm.anchor_alt, 0, opt)
                            : utility_ratio(sc, x, a, 0, norm.anchor_alt, 0, norm.state, opt);
                } catch (const ConfigError&) {
                    continue;  // edge point: no interior differences available
                }
                ratios << table.entries[e].id << ',' << sc.alternatives[a] << ','
                       << sc.alternatives[norm.anchor_alt] << ','
                       << (mode == IdMode::market ? std::string("-") : sc.states[norm.state])
                       << ',' << fmt17(r.ratio) << ',' << fmt17(r.se) << ','
                       << fmt17(r.numerator) << ',' << fmt17(r.denominator) << '\n';
            }
        }
        sink.write("ratios.csv", ratios.str());

        RecoveredUtility rec = recover_utilities(sc, norm, mode, opt);
        std::ostringstream rcsv;
        rcsv << "alternative,attribute,x,u,se,units\n";
        const char* units = norm.price_anchor ? "dollars" : "utils";
        for (std::size_t a = 0; a < rec.recovered.size(); ++a)
            for (std::size_t p = 0; p < rec.recovered[a].size(); ++p)
                for (const RecoveredPoint& rp : rec.recovered[a][p])
                    rcsv << sc.alternatives[a] << ',' << p << ',' << fmt17(rp.x) << ','
                         << fmt17(rp.u) << ',' << fmt17(rp.se) << ',' << units << '\n';
        sink.write("recovered.csv", rcsv.str());

        if (!flags.welfare_pairs.empty()) {
            std::ostringstream wcsv;
            wcsv << "from,to,dV,dV_se,dD,dD_se,direct_diff,direct_se,units\n";
            for (const std::string& pair : flags.welfare_pairs) {
                const auto colon = pair.find(':');
                if (colon == std::string::npos)
                    throw ConfigError("--welfare expects 'x_id:x_id', got '" + pair + "'");
                auto find_id = [&](const std::string& id) -> const TableEntry& {
                    for (const TableEntry& t : table.entries)
                        if (t.id == id) return t;
                    throw ConfigError("unknown grid point id '" + id + "'");
                };
                const TableEntry& from = find_id(pair.substr(0, colon));
                const TableEntry& to = find_id(pair.substr(colon + 1));
                WelfareResult w = welfare_difference(sc, from.x, to.x, mode, opt);
                wcsv << from.id << ',' << to.id << ',' << fmt17(w.dV) << ',' << fmt17(w.dV_se)
                     << ',' << fmt17(w.dD) << ',' << fmt17(w.dD_se) << ','
                     << fmt17(w.direct_diff) << ',' << fmt17(w.direct_se) << ',' << units
                     << '\n';
            }
            sink.write("welfare.csv", wcsv.str());
        }

        if (!flags.queries_path.empty()) {
            nlohmann::json qj = nlohmann::json::parse(read_file(flags.queries_path));
            std::ostringstream bcsv;
            bcsv << "query,lhs,rhs,se,satisfied\n";
            std::size_t qi = 0;
            for (const auto& q : qj.at("queries")) {
                CounterfactualQuery query;
                query.x0 = sc.zero_point();
                for (const auto& [alt, vals] : q.at("x0").items()) {
                    const std::size_t a = alternative_index(sc, alt);
                    std::size_t p = 0;
                    for (const auto& v : vals) query.x0[a][p++] = v.get<double>();
                }
                for (const auto& id : q.at("path")) {
                    bool found = false;
                    for (std::size_t t = 0; t < table.entries.size(); ++t)
                        if (table.entries[t].id == id.get<std::string>()) {
                            query.path.push_back(t);
                            found = true;
                            break;
                        }
                    if (!found)
                        throw PathPointMissing("bound query path id '" +
                                               id.get<std::string>() + "' not in the table");
                }
                if (mode == IdMode::state) {
                    for (const auto& row : q.at("candidate_cond")) {
                        Vec r;
                        for (const auto& v : row) r.push_back(v.get<double>());
                        query.candidate_cond.push_back(std::move(r));
                    }
                } else {
                    for (const auto& v : q.at("candidate_marg"))
                        query.candidate_marg.push_back(v.get<double>());
                }
                BoundResult b = counterfactual_bound(sc, table, query, mode, opt);
                bcsv << qi++ << ',' << fmt17(b.lhs) << ',' << fmt17(b.rhs) << ','
                     << fmt17(b.se) << ',' << (b.satisfied ? "1" : "0") << '\n';
            }
            sink.write("bounds.csv", bcsv.str());
        }

        sink.finish("ok");
        std::cout << "identification outputs written to " << out_dir << "\n";
        return 0;
    } catch (const std::exception& e) {
        sink.finish(std::string("error: ") + e.what());
        std::cerr << "identify: " << e.what() << '\n';
        return exit_code_for(e);
    }
}

int cmd_verify(const std::string& scenario_path, const std::string& out_dir, long draws) {
    OutputSink sink(out_dir, "verify");
    std::ostringstream report;
    int failures = 0;
    auto check = [&](const std::string& name, double residual, double threshold) {
        const bool ok = residual <= threshold;
        if (!ok) ++failures;
        std::ostringstream line;
        line << (ok ? "pass" : "FAIL") << "  " << name << "  residual " << fmt17(residual)
             << "  threshold " << fmt17(threshold);
        report << line.str() << '\n';
        std::cout << line.str() << '\n';
    };
    try {
        Scenario sc = load_scenario(scenario_path);
        sink.manifest.scenario_path = scenario_path;
        sink.manifest.scenario_digest = sha256_hex(read_file(scenario_path));
        sc.seed = effective_seed(sc, 0);
        sink.manifest.seed = sc.seed;
        const CovariatePoint x0 = solve_point(sc);

        // per-draw solve invariants
        double worst_bayes = 0.0, worst_value_gap = 0.0, worst_cert = 0.0;
        bool assumption_issue = false;
        for (int i = 0; i < 8; ++i) {
            Draw d = sample_draw(sc, static_cast<std::uint64_t>(i));
            Instance inst = instance_at(sc, x0, d);
            AssumptionReport ar = verify_assumptions(inst);
            if (!ar.all()) {
                assumption_issue = true;
                report << "note: assumption check failed on draw " << i << " (" << ar.detail
                       << "); dependent invariants skipped\n";
                break;
            }
            EnvelopeSolution env = solve_ri_envelope(inst);
            PosteriorPolicy pol = solve_ri(inst);
            worst_bayes = std::max(worst_bayes, bayes_residual(pol, inst.prior));
            worst_value_gap =
                std::max(worst_value_gap, std::abs(policy_value(inst, pol) - env.value));
            // tangency certificate against a belief grid
            double plane_gap = 0.0;
            for (const Belief& g : simplex_grid(static_cast<int>(sc.num_states()), 1e-3)) {
                const double lhs = objective_upper_envelope(inst, g).first -
                                   env.optimal_direction.dot_belief(g);
                const double rhs = env.values_at_posteriors[0] -
                                   env.optimal_direction.dot_belief(env.posteriors[0]);
                plane_gap = std::max(plane_gap, lhs - rhs);
            }
            worst_cert = std::max(worst_cert, plane_gap);
        }
        if (!assumption_issue) {
            check("bayes_plausibility", worst_bayes, 1e-8);
            check("policy_value_matches_envelope", worst_value_gap, 1e-8);
            check("tangency_certificate", worst_cert, 1e-6);

            // SDSC round trip + aggregation identity
            double worst_rt = 0.0, worst_agg = 0.0, worst_marg = 0.0;
            for (int i = 0; i < 8; ++i) {
                Draw d = sample_draw(sc, static_cast<std::uint64_t>(i));
                Instance inst = instance_at(sc, x0, d);
                PosteriorPolicy pol = solve_ri(inst);
                SDSCFunction rho = generate_sdsc(pol, sc.prior);
                RevealedObjects rev = revealed_objects(rho, sc.prior);
                Vec mix(sc.num_states(), 0.0);
                for (std::size_t a = 0; a < rho.num_alternatives(); ++a) {
                    if (!(rho.marginal[a] > 0)) continue;
                    for (std::size_t j = 0; j < sc.num_states(); ++j)
                        mix[j] += rho.marginal[a] * rev.posteriors[a]->p[j];
                }
                worst_agg = std::max(worst_agg, linf_dist(mix, sc.prior.p));
                for (std::size_t a = 0; a < rho.num_alternatives(); ++a) {
                    double m = 0.0;
                    for (std::size_t j = 0; j < sc.num_states(); ++j)
                        m += sc.prior.p[j] * rho.cond[a][j];
                    worst_marg = std::max(worst_marg, std::abs(m - rho.marginal[a]));
                }
                PosteriorPolicy rebuilt = policy_from_revealed(rev);
                worst_rt = std::max(worst_rt,
                                    std::abs(policy_value(inst, rebuilt, 1e-4) -
                                             policy_value(inst, pol)));
            }
            check("revealed_aggregation_identity", worst_agg, 1e-10);
            check("marginal_identity", worst_marg, 1e-10);
            check("round_trip_value", worst_rt, 1e-8);

            // equivalence sample
            double worst_spread = 0.0, worst_mat = 0.0;
            for (int i = 0; i < 3; ++i) {
                Instance inst = make_random_instance(sc.num_states(), 3, sc.het.cost_family,
                                                     sc.seed + 100 + i);
                EquivalenceReport rep = check_equivalence(inst);
                const double spread =
                    std::max({rep.policy_route, rep.generated_route, rep.direct_route,
                              rep.revealed_route}) -
                    std::min({rep.policy_route, rep.generated_route, rep.direct_route,
                              rep.revealed_route});
                worst_spread = std::max(worst_spread, spread);
                worst_mat = std::max(worst_mat, rep.matrix_gap);
            }
            check("equivalence_value_spread", worst_spread, 1e-6);
            check("equivalence_matrix_gap", worst_mat, 1e-5);
        }

        if (sc.has_covariates()) {
            IdOptions opt;
            opt.draws = draws > 0 ? draws : std::min<long>(sc.draws, 2000);
            RoyResult roy = roy_residual(sc, x0, 0, 0, 1e-2, opt);
            check("envelope_derivative", roy.residual,
                  std::max(1e-4, opt.band * roy.band_se));
            SlutskyResult slut = slutsky_check(sc, x0, 1e-2, opt);
            check("hessian_symmetry", slut.symmetry_residual,
                  std::max(1e-4, opt.band * slut.symmetry_band_se));
            check("hessian_psd", std::max(0.0, -slut.min_eigenvalue), 1e-6);
            const std::vector<CovariatePoint> pts = enumerate_grid(sc);
            WelfareResult w =
                welfare_difference(sc, pts.front(), pts.back(),
                                   sc.is_latent() ? IdMode::market : IdMode::state, opt);
            check("welfare_consistency", std::abs(w.dV - w.direct_diff),
                  std::max(1e-4, opt.band * w.discrepancy_se));
        }

        sink.write("verify.txt", report.str());
        sink.finish(failures == 0 ? "ok" : "invariant failures");
        std::cout << (failures == 0 ? "all invariants pass\n" : "invariant failures\n");
        return failures == 0 ? 0 : 4;
    } catch (const std::exception& e) {
        sink.write("verify.txt", report.str());
        sink.finish(std::string("error: ") + e.what());
        std::cerr << "verify: " << e.what() << '\n';
        return exit_code_for(e);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"finite rational-inattention solver, simulator, and identification toolkit"};
    app.require_subcommand(1);
    std::string scenario_path, out_dir = ".";

    auto* solve = app.add_subcommand("solve", "solve one heterogeneity draw");
    long draw_index = 0;
    bool plot = false;
    solve->add_option("scenario", scenario_path, "scenario JSON file")->required();
    solve->add_option("--draw-index", draw_index, "heterogeneity draw index");
    solve->add_flag("--plot", plot, "emit an SVG of the two-state envelope");
    solve->add_option("--out-dir", out_dir, "output directory");

    auto* equiv = app.add_subcommand("equivalence", "two-solver agreement experiment");
    int instances = 50;
    double tol = 1e-6;
    equiv->add_option("scenario", scenario_path, "scenario JSON file")->required();
    equiv->add_option("--instances", instances, "number of random instances");
    equiv->add_option("--tol", tol, "value agreement tolerance");
    equiv->add_option("--out-dir", out_dir, "output directory");

    auto* sim = app.add_subcommand("simulate", "conditional mean table over the grid");
    long draws = -1;
    std::uint64_t seed = 0;
    int threads = 0;
    sim->add_option("scenario", scenario_path, "scenario JSON file")->required();
    sim->add_option("--draws", draws, "Monte Carlo draw count");
    sim->add_option("--seed", seed, "master seed override");
    sim->add_option("--threads", threads, "worker thread count");
    sim->add_option("--out-dir", out_dir, "output directory");

    auto* ident = app.add_subcommand("identify", "identification pipeline from a means table");
    IdentifyFlags flags;
    ident->add_option("scenario", scenario_path, "scenario JSON file")->required();
    ident->add_option("--means", flags.means_path, "means CSV from simulate")->required();
    ident->add_option("--mode", flags.mode, "state or market");
    ident->add_option("--anchor-alt", flags.anchor_alt, "scale-anchor alternative");
    ident->add_option("--anchor-value", flags.anchor_value, "anchor covariate value");
    ident->add_option("--sign", flags.sign, "pinned slope sign (+1 or -1)");
    ident->add_option("--state", flags.anchor_state, "state channel for ratios");
    ident->add_option("--draws", flags.draws, "draw count for derivative re-simulation");
    ident->add_option("--threads", flags.threads, "worker thread count");
    ident->add_option("--welfare", flags.welfare_pairs, "welfare pair 'x_id:x_id'");
    ident->add_option("--queries", flags.queries_path, "counterfactual bound queries JSON");
    ident->add_option("--out-dir", out_dir, "output directory");

    auto* verify = app.add_subcommand("verify", "run the invariant battery");
    long vdraws = -1;
    verify->add_option("scenario", scenario_path, "scenario JSON file")->required();
    verify->add_option("--draws", vdraws, "draw count for stochastic checks");
    verify->add_option("--out-dir", out_dir, "output directory");

    CLI11_PARSE(app, argc, argv);

    if (solve->parsed()) return cmd_solve(scenario_path, draw_index, plot, out_dir);
    if (equiv->parsed()) return cmd_equivalence(scenario_path, instances, tol, out_dir);
    if (sim->parsed()) return cmd_simulate(scenario_path, draws, seed, threads, out_dir);
    if (ident->parsed()) return cmd_identify(scenario_path, flags, out_dir);
    if (verify->parsed()) return cmd_verify(scenario_path, out_dir, vdraws);
    return 2;
}
