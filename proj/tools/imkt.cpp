#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <sstream>

#include "imkt/io.hpp"

using namespace imkt;

namespace {

std::string read_input(const std::string& path) {
    if (path == "-") {
        std::ostringstream ss;
        ss << std::cin.rdbuf();
        return ss.str();
    }
    std::ifstream f(path);
    if (!f) throw ParseError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

Rat rat_flag(const std::string& text, const char* name) {
    try {
        return parse_rat(text);
    } catch (const std::exception& e) {
        throw ParseError(std::string("--") + name + ": " + e.what());
    }
}

PhiPoint uniform_start(const Market& market) {
    PhiPoint start;
    int h = market.goods;
    start.prices.values.assign(h, rat(1, (long)h));
    start.prices.normalized = true;
    std::vector<Rat> supply = market.supply();
    long m = (long)market.traders.size();
    for (const auto& t : market.traders) {
        std::vector<Rat> bundle(h);
        for (int i = 0; i < h; ++i) bundle[i] = supply[i] / m;
        start.profile.set(t.id, std::move(bundle));
    }
    return start;
}

int emit_diagnostics(const Diagnostics& diag) {
    if (diag.ok()) {
        std::cout << "ok\n";
        return 0;
    }
    for (const auto& issue : diag.issues) std::cout << issue << "\n";
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"exchange markets with social influence: validate, verify, solve, reduce"};
    app.require_subcommand(1);

    int jobs = 1;
    app.add_option("--jobs", jobs, "cap on worker count (execution is sequential)")
        ->check(CLI::PositiveNumber);

    std::string input = "-";
    std::string market_file, candidate_file, labeling_file;
    std::string eps_text = "0", tau_text, damping_text = "1/2";
    std::string alpha_text, beta_text, gamma_text, scale_text;
    long grid_n = 1;
    long lift_n = 3, game_n = 3;
    int steps = 200;
    unsigned long seed = 1;
    bool planar = false;
    bool machine = false;
    long plm_n = 3;

    auto* validate = app.add_subcommand("validate", "structural validation of a document");
    validate->add_option("input", input, "document file or - for stdin");
    validate->add_option("--n", plm_n, "parameter n for plm-spec validation");

    auto* verify = app.add_subcommand("verify", "check a candidate against a market");
    verify->add_option("--market", market_file, "market document")->required();
    verify->add_option("--candidate", candidate_file, "candidate document")->required();
    verify->add_option("--eps", eps_text, "tolerance p/q");
    verify->add_flag("--machine", machine, "machine-readable report");

    auto* brute = app.add_subcommand("solve-brute", "grid brute-force equilibrium search");
    brute->add_option("input", input, "market document or - for stdin");
    brute->add_option("--grid", grid_n, "grid denominator N")->required();
    brute->add_option("--eps", eps_text, "tolerance p/q");

    auto* tree = app.add_subcommand("solve-tree", "hierarchical divide-and-conquer solver");
    tree->add_option("input", input, "market document or - for stdin");
    tree->add_option("--labeling", labeling_file, "labeling document")->required();
    tree->add_option("--grid", grid_n, "grid denominator N")->required();
    tree->add_option("--eps", eps_text, "tolerance p/q");

    auto* reduce = app.add_subcommand("reduce", "compile a game into a linear-influence market");
    reduce->add_option("input", input, "game document or - for stdin");
    reduce->add_option("--alpha", alpha_text, "override alpha");
    reduce->add_option("--beta", beta_text, "override beta");
    reduce->add_option("--gamma", gamma_text, "override gamma");
    reduce->add_option("--scale", scale_text, "override slope scale");
    reduce->add_flag("--planar-defaults", planar, "use the planar parameter defaults");

    auto* extract = app.add_subcommand("extract", "read strategies off a market candidate");
    extract->add_option("--market", market_file, "market document with roles")->required();
    extract->add_option("--candidate", candidate_file, "candidate document")->required();
    extract->add_option("--tau", tau_text, "rounding threshold p/q")->required();

    auto* lift = app.add_subcommand("lift", "threshold-lift a separable PLM spec");
    lift->add_option("input", input, "plm-spec document or - for stdin");
    lift->add_option("--n", lift_n, "lift parameter n")->required();

    auto* gadget = app.add_subcommand("gadget", "emit the four-good crossing fragment");
    gadget->add_option("--n", game_n, "parameter n for planar defaults");

    auto* gen = app.add_subcommand("gen-game", "generate a normalized sparse game");
    gen->add_option("--n", game_n, "matrix size")->required();
    gen->add_option("--seed", seed, "rng seed")->required();

    auto* oracle = app.add_subcommand("nash-oracle", "exact Nash equilibrium (n <= 6)");
    oracle->add_option("input", input, "game document or - for stdin");

    auto* phi = app.add_subcommand("phi-iterate", "damped fixed-point iteration");
    phi->add_option("input", input, "market document or - for stdin");
    phi->add_option("--steps", steps, "iteration budget");
    phi->add_option("--damping", damping_text, "damping factor p/q in (0,1]");

    CLI11_PARSE(app, argc, argv);
    (void)jobs;

    try {
        if (*validate) {
            InstanceDocument doc = parse_instance(read_input(input));
            if (doc.kind == "market") return emit_diagnostics(validate_market(doc.market()));
            if (doc.kind == "game") return emit_diagnostics(validate_game(doc.game(), true, true));
            if (doc.kind == "plm-spec")
                return emit_diagnostics(validate_plm_spec(doc.plm_spec(), plm_n));
            throw ParseError("validate: unsupported kind '" + doc.kind + "'");
        }
        if (*verify) {
            Market mkt = parse_instance(read_input(market_file)).market();
            EquilibriumCandidate cand = parse_instance(read_input(candidate_file)).candidate();
            VerificationReport rep =
                verify_candidate(mkt, cand, rat_flag(eps_text, "eps"));
            std::cout << emit_report(rep, machine ? ReportFormat::Machine : ReportFormat::Text);
            return rep.verdict ? 0 : 1;
        }
        if (*brute) {
            Market mkt = parse_instance(read_input(input)).market();
            SolveStats stats;
            auto cand = solve_bruteforce(mkt, GridSpec(grid_n), rat_flag(eps_text, "eps"),
                                         200000000L, &stats);
            std::cerr << "candidates_verified=" << stats.candidates_verified << "\n";
            if (!stats.diagnostic.empty()) std::cerr << stats.diagnostic << "\n";
            if (!cand) {
                std::cout << "none\n";
                return 1;
            }
            std::cout << emit_instance(make_candidate_doc(*cand));
            return 0;
        }
        if (*tree) {
            Market mkt = parse_instance(read_input(input)).market();
            HierarchicalLabeling lab = parse_instance(read_input(labeling_file)).labeling();
            SolveStats stats;
            auto cand = solve_hierarchical(mkt, lab, GridSpec(grid_n),
                                           rat_flag(eps_text, "eps"), &stats);
            for (const auto& [depth, count] : stats.expansions_by_depth)
                std::cerr << "expansions depth " << depth << ": " << count << "\n";
            std::cerr << "memo_hits=" << stats.memo_hits
                      << " candidates_verified=" << stats.candidates_verified << "\n";
            if (!stats.diagnostic.empty()) std::cerr << stats.diagnostic << "\n";
            if (!cand) {
                std::cout << "none\n";
                return 1;
            }
            std::cout << emit_instance(make_candidate_doc(*cand));
            return 0;
        }
        if (*reduce) {
            BimatrixGame game = parse_instance(read_input(input)).game();
            ReductionParams params = planar ? ReductionParams::planar_defaults(game.n)
                                            : ReductionParams::defaults(game.n);
            if (!alpha_text.empty()) params.alpha = rat_flag(alpha_text, "alpha");
            if (!beta_text.empty()) params.beta = rat_flag(beta_text, "beta");
            if (!gamma_text.empty()) params.gamma = rat_flag(gamma_text, "gamma");
            if (!scale_text.empty()) params.slope_scale = rat_flag(scale_text, "scale");
            BuiltMarket built = build_linear_market(game, params);
            std::cout << emit_instance(make_market_doc(built.market, built.roles));
            return 0;
        }
        if (*extract) {
            InstanceDocument mdoc = parse_instance(read_input(market_file));
            EquilibriumCandidate cand = parse_instance(read_input(candidate_file)).candidate();
            MixedStrategyPair pair = extract_strategies(mdoc.market(), mdoc.roles, cand,
                                                        rat_flag(tau_text, "tau"));
            std::cout << emit_instance(make_strategies_doc(pair));
            return 0;
        }
        if (*lift) {
            SeparablePLMSpec spec = parse_instance(read_input(input)).plm_spec();
            LiftedMarket lifted = threshold_lift(spec, lift_n);
            std::cout << emit_instance(make_market_doc(lifted.market, lifted.roles));
            return 0;
        }
        if (*gadget) {
            Market fragment = crossing_gadget("S1S", "SS2", "S3S", "SS4", "S",
                                              ReductionParams::planar_defaults((int)game_n));
            std::cout << emit_instance(make_market_doc(fragment));
            return 0;
        }
        if (*gen) {
            std::cout << emit_instance(make_game_doc(gen_sparse_game((int)game_n, seed)));
            return 0;
        }
        if (*oracle) {
            BimatrixGame game = parse_instance(read_input(input)).game();
            std::cout << emit_instance(make_strategies_doc(nash_oracle(game)));
            return 0;
        }
        if (*phi) {
            Market mkt = parse_instance(read_input(input)).market();
            PhiConstants consts = phi_constants(mkt);
            PhiTrace trace = phi_iterate(mkt, uniform_start(mkt), consts, steps,
                                         rat_flag(damping_text, "damping"));
            std::cerr << "best_residual=" << rat_str(trace.best_residual) << "\n";
            EquilibriumCandidate cand;
            cand.prices = trace.best.prices;
            cand.profile = trace.best.profile;
            std::cout << emit_instance(make_candidate_doc(cand));
            return 0;
        }
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::domain_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
