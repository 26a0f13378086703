// Acceptance suite for the influence-market toolchain. Each criterion prints
// exactly one PASS/FAIL line; the process exits 0 iff every criterion passes.
//
// All tolerances are pinned constants. Randomized criteria use fixed seeds so
// every run checks the identical scenario set.

#include <chrono>
#include <cstdio>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "imkt/equilibrium.hpp"
#include "imkt/hsolver.hpp"
#include "imkt/io.hpp"
#include "imkt/market.hpp"
#include "imkt/rational.hpp"
#include "imkt/reduction.hpp"
#include "test_helpers.hpp"

using namespace imkt;
using namespace testutil;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(long n) { return std::to_string(n); }

// ---------------------------------------------------------------------------
// Criterion 1: the swap market's exact equilibrium is accepted at eps = 0 and
// twenty scripted single-entry perturbations each fail the condition they
// target (price normalization, budgets, optimality, clearing).

const ConditionResult& condition(const VerificationReport& r, int idx) {
    switch (idx) {
        case 0: return r.prices_normalized;
        case 1: return r.budgets;
        case 2: return r.optimality;
        default: return r.clearing;
    }
}

Outcome criterion_verifier_ground_truth() {
    Market m = swap_market();
    EquilibriumCandidate exact = swap_equilibrium();
    VerificationReport base = verify_candidate(m, exact, rat(0));
    if (!base.verdict) return {false, "exact equilibrium rejected at eps=0"};

    struct Perturb {
        const char* what;
        int cond;       // condition expected to fail
        Rat eps;
        bool exclusive;  // the other three conditions must still pass
        std::function<void(EquilibriumCandidate&)> apply;
    };
    auto set_price = [](int g, const Rat& v) {
        return [g, v](EquilibriumCandidate& c) { c.prices.values[g] = v; };
    };
    auto set_alloc = [](const char* id, int g, const Rat& v) {
        return [id, g, v](EquilibriumCandidate& c) {
            std::vector<Rat> b = *c.profile.get(id);
            b[g] = v;
            c.profile.set(id, b);
        };
    };

    const std::vector<Perturb> table = {
        // price sum != 1
        {"p0=3/4", 0, rat(0), false, set_price(0, rat(3, 4))},
        {"p1=1/4", 0, rat(0), false, set_price(1, rat(1, 4))},
        {"p0=0", 0, rat(0), false, set_price(0, rat(0))},
        {"p1=1", 0, rat(0), false, set_price(1, rat(1))},
        {"p0=13/25", 0, rat(0), false, set_price(0, rat(13, 25))},
        // budget overspend
        {"x1[1]=11/10", 1, rat(0), false, set_alloc("T1", 1, rat(11, 10))},
        {"x1[0]=1/2", 1, rat(0), false, set_alloc("T1", 0, rat(1, 2))},
        {"x2[0]=3/2", 1, rat(0), false, set_alloc("T2", 0, rat(3, 2))},
        {"x2[1]=1/4", 1, rat(0), false, set_alloc("T2", 1, rat(1, 4))},
        {"x1[1]=2", 1, rat(0), false, set_alloc("T1", 1, rat(2))},
        // suboptimal bundles
        {"x1[1]=1/2", 2, rat(0), false, set_alloc("T1", 1, rat(1, 2))},
        {"x2[0]=0", 2, rat(0), false, set_alloc("T2", 0, rat(0))},
        {"x2[0]=9/10", 2, rat(0), false, set_alloc("T2", 0, rat(9, 10))},
        {"x1[1]=0", 2, rat(0), false, set_alloc("T1", 1, rat(0))},
        {"x1[1]=99/100", 2, rat(0), false, set_alloc("T1", 1, rat(99, 100))},
        // clearing only: surplus of the trader's worthless good, sized so the
        // budget excess stays within eps while the supply excess does not
        {"x1[0]=1/50 @1/100", 3, rat(1, 100), true, set_alloc("T1", 0, rat(1, 50))},
        {"x2[1]=1/50 @1/100", 3, rat(1, 100), true, set_alloc("T2", 1, rat(1, 50))},
        {"x2[1]=1/10 @1/15", 3, rat(1, 15), true, set_alloc("T2", 1, rat(1, 10))},
        {"x1[0]=1/8 @1/15", 3, rat(1, 15), true, set_alloc("T1", 0, rat(1, 8))},
        {"x2[1]=1/200 @1/300", 3, rat(1, 300), true, set_alloc("T2", 1, rat(1, 200))},
    };

    if (table.size() != 20) return {false, "internal: expected 20 perturbations"};
    int hit = 0;
    for (const auto& p : table) {
        EquilibriumCandidate cand = exact;
        p.apply(cand);
        VerificationReport rep = verify_candidate(m, cand, p.eps);
        bool ok = !condition(rep, p.cond).pass && !rep.verdict;
        if (ok && p.exclusive)
            for (int other = 0; other < 4; ++other)
                if (other != p.cond && !condition(rep, other).pass) ok = false;
        if (!ok) return {false, std::string("perturbation '") + p.what + "' missed its target"};
        ++hit;
    }
    return {true, "exact equilibrium accepted; " + fmt(hit) +
                      "/20 perturbations fail their intended condition"};
}

// ---------------------------------------------------------------------------
// Criterion 2: greedy optimal_bundle dominates every feasible grid bundle
// (step 1/64, box [0,1]) on 500 seeded markets, with equality whenever the
// greedy bundle itself lies on the grid. Exact rational comparisons.

Outcome criterion_bundle_oracle() {
    std::mt19937_64 rng(4242);
    const long step = 64;
    long on_grid_hits = 0;
    for (int iter = 0; iter < 500; ++iter) {
        int traders = 1 + (int)(rng() % 3);
        int goods = 1 + (int)(rng() % 3);
        std::vector<std::pair<int, int>> edges;
        if (traders >= 2 && rng() % 2 == 0) edges.push_back({0, 1});
        if (traders == 3 && rng() % 2 == 0) edges.push_back({1, 2});
        Market m = random_market(rng, traders, goods, edges);
        AllocationProfile profile = random_profile(rng, m, 8, 8);

        PriceVector prices;
        prices.values.resize(goods);
        Rat sum(0);
        std::vector<long> units(goods);
        for (int g = 0; g < goods; ++g) {
            units[g] = 1 + (long)(rng() % 4);
            sum += units[g];
        }
        for (int g = 0; g < goods; ++g) prices.values[g] = units[g] / sum;
        prices.normalized = true;

        const Trader& t = m.traders[iter % traders];
        Rat budget(0);
        for (int g = 0; g < goods; ++g) budget += t.endowment[g] * prices.values[g];

        BundleResult greedy = optimal_bundle(m, t.id, prices, profile, rat(1));
        if (greedy.unbounded) return {false, "unbounded at positive prices (iter " + fmt(iter) + ")"};

        const auto* lin = std::get_if<LinearUtility>(&t.utility);
        const std::vector<LinearForm>& forms =
            lin ? lin->influence : std::get<ThresholdUtility>(t.utility).influence;
        std::vector<Rat> fvals(goods);
        for (int g = 0; g < goods; ++g) fvals[g] = oracle_form_value(forms[g], profile);

        Rat grid_best = grid_best_value(t.utility, fvals, prices.values, budget, step);
        if (greedy.value < grid_best)
            return {false, "greedy value below grid optimum (iter " + fmt(iter) + ")"};
        bool grid_aligned = true;
        for (const Rat& v : greedy.bundle)
            if (!on_grid(v, step)) grid_aligned = false;
        if (grid_aligned) {
            ++on_grid_hits;
            if (greedy.value != grid_best)
                return {false, "on-grid greedy bundle misses grid optimum (iter " + fmt(iter) + ")"};
        }
    }
    return {true, "500 markets dominated; equality confirmed on " + fmt(on_grid_hits) +
                      " grid-aligned bundles"};
}

// ---------------------------------------------------------------------------
// Criterion 3: rounding exact equilibria onto the 1/N grid (N = ceil(m^6))
// and renormalizing prices keeps them verifiable at eps = 1/m.

Outcome criterion_grid_rounding() {
    struct Case {
        const char* name;
        Market market;
        EquilibriumCandidate exact;
        int m;
    };
    const std::vector<Case> cases = {
        {"swap", swap_market(), swap_equilibrium(), 2},
        {"three-trader", three_trader_market(), three_trader_equilibrium(), 3},
        {"four-trader", four_trader_market(), four_trader_equilibrium(), 4},
    };
    std::string sizes;
    for (const auto& c : cases) {
        GridSpec grid = GridSpec::from_exponents(c.m, 1, 1);
        EquilibriumCandidate rounded = round_to_grid(c.exact, grid);
        Rat sum(0);
        for (const Rat& p : rounded.prices.values) sum += p;
        if (sum <= 0) return {false, std::string(c.name) + ": degenerate rounded prices"};
        for (Rat& p : rounded.prices.values) p /= sum;
        rounded.prices.normalized = true;
        VerificationReport rep = verify_candidate(c.market, rounded, rat(1, c.m));
        if (!rep.verdict)
            return {false, std::string(c.name) + ": rounded candidate rejected at eps=1/" +
                               fmt(c.m)};
        if (!sizes.empty()) sizes += ",";
        sizes += fmt(grid.denom);
    }
    return {true, "markets m=2,3,4 verified at eps=1/m after rounding (N=" + sizes + ")"};
}

// ---------------------------------------------------------------------------
// Criterion 4: the divide-and-conquer tree solver and the brute-force grid
// solver agree on existence over seeded 2-good tree markets (m <= 3, N <= 4),
// and every returned candidate passes the verifier at the stated eps.

HierarchicalLabeling leaf_labeling(const Market& m) {
    HierarchicalLabeling lab;
    HierarchicalLabeling::Node node;
    node.id = "root";
    lab.nodes.push_back(node);
    lab.root = 0;
    lab.width_k = 1;
    for (const auto& t : m.traders) lab.label_of[t.id] = "root";
    return lab;
}

HierarchicalLabeling chain_labeling(const std::vector<std::string>& traders) {
    HierarchicalLabeling lab;
    for (size_t i = 0; i < traders.size(); ++i) {
        HierarchicalLabeling::Node node;
        node.id = "n" + std::to_string(i);
        if (i + 1 < traders.size()) node.children = {(int)i + 1};
        lab.nodes.push_back(node);
        lab.label_of[traders[i]] = node.id;
    }
    lab.root = 0;
    lab.width_k = 1;
    return lab;
}

Outcome criterion_tree_vs_bruteforce() {
    std::mt19937_64 rng(777);
    int runs = 0, found = 0;
    for (int m = 1; m <= 3; ++m) {
        for (int topology = 0; topology < (m == 1 ? 1 : 2); ++topology) {
            for (int seed_round = 0; seed_round < 4; ++seed_round) {
                std::vector<std::pair<int, int>> edges;
                if (topology == 1)
                    for (int k = 0; k + 1 < m; ++k) edges.push_back({k, k + 1});
                Market mkt = random_market(rng, m, 2, edges);
                std::vector<std::string> ids;
                for (const auto& t : mkt.traders) ids.push_back(t.id);
                HierarchicalLabeling lab =
                    topology == 1 ? chain_labeling(ids) : leaf_labeling(mkt);

                for (long N : {2L, 3L, 4L}) {
                    for (const Rat& eps : {rat(1, 4), rat(1, 2)}) {
                        GridSpec grid(N);
                        auto tree = solve_hierarchical(mkt, lab, grid, eps);
                        auto brute = solve_bruteforce(mkt, grid, eps);
                        ++runs;
                        if (tree.has_value() != brute.has_value())
                            return {false, "existence mismatch (m=" + fmt(m) + " topo=" +
                                               fmt(topology) + " N=" + fmt(N) + " eps=" +
                                               rat_str(eps) + ")"};
                        for (const auto& cand : {tree, brute}) {
                            if (!cand) continue;
                            ++found;
                            if (!verify_candidate(mkt, *cand, eps).verdict)
                                return {false, "returned candidate fails verification (m=" +
                                                   fmt(m) + " N=" + fmt(N) + ")"};
                        }
                    }
                }
            }
        }
    }
    return {true, fmt(runs) + " solver pairs agree on existence; " + fmt(found) +
                      " returned candidates verified"};
}

// ---------------------------------------------------------------------------
// Criterion 5: structural properties of the game-to-market build for
// n = 3, 4, 5, plus the exact comparator-weight identity on random pairs.

Outcome criterion_reduction_structure() {
    for (int n : {3, 4, 5}) {
        for (unsigned long seed : {21UL, 22UL}) {
            BimatrixGame g = gen_sparse_game(n, seed);
            BuiltMarket built = build_linear_market(g, ReductionParams::defaults(n));
            long expected = 1 + 2L * n + 2L * n * (n - 1) + 2L * n * (n - 2);
            if ((long)built.market.traders.size() != expected)
                return {false, "trader count != " + fmt(expected) + " for n=" + fmt(n)};
            if (!validate_market(built.market).ok())
                return {false, "validator rejects built market (n=" + fmt(n) + ")"};
            if (!check_existence_conditions(built.market).satisfied())
                return {false, "existence conditions fail (n=" + fmt(n) + ")"};
            DirectedGraph infl = build_influence_graph(built.market);
            std::vector<int> ind = infl.in_degree(), outd = infl.out_degree();
            for (size_t v = 0; v < infl.vertices.size(); ++v)
                if (ind[v] + outd[v] > 20)
                    return {false, "influence degree " + fmt(ind[v] + outd[v]) + " > 20 at '" +
                                       infl.vertices[v] + "' (n=" + fmt(n) + ")"};
        }
    }

    std::mt19937_64 rng(555);
    static const std::vector<Rat> vals{rat(-1), rat(-1, 2), rat(-1, 3), rat(0),
                                       rat(1, 4), rat(1, 2), rat(1)};
    for (int iter = 0; iter < 100; ++iter) {
        int n = 2 + (int)(rng() % 5);
        std::vector<std::vector<Rat>> A(n, std::vector<Rat>(n));
        for (auto& row : A)
            for (auto& v : row) v = pick(rng, vals);
        int i = (int)(rng() % n), j = (int)(rng() % n);
        if (i == j) j = (j + 1) % n;
        auto [C, D] = cd_weights(A, i, j);
        for (int l = 0; l < n; ++l)
            if (A[i][l] - A[j][l] != 2 * (C[l] - D[l]) || C[l] < 0 || D[l] < 0)
                return {false, "comparator weight identity broken (iter " + fmt(iter) + ")"};
    }
    return {true, "trader census, degree cap 20, existence and validator clean for n=3,4,5; "
                  "weight identity exact on 100 pairs"};
}

// ---------------------------------------------------------------------------
// Criterion 6: over all 2x2 games with entries in {-1,0,1}, the exact Nash
// oracle passes the well-supported check at eps = 0, while random profiles
// with deviation margin > 1/10 fail it at eps = 1/20.

Rat wsne_margin(const BimatrixGame& g, const MixedStrategyPair& pair) {
    int n = g.n;
    std::vector<Rat> row(n, Rat(0)), col(n, Rat(0));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            row[i] += g.A[i][j] * pair.y[j];
            col[j] += pair.x[i] * g.B[i][j];
        }
    Rat best_row = row[0], best_col = col[0];
    for (int i = 1; i < n; ++i) {
        if (row[i] > best_row) best_row = row[i];
        if (col[i] > best_col) best_col = col[i];
    }
    Rat margin(0);
    for (int i = 0; i < n; ++i) {
        if (pair.x[i] != 0 && best_row - row[i] > margin) margin = best_row - row[i];
        if (pair.y[i] != 0 && best_col - col[i] > margin) margin = best_col - col[i];
    }
    return margin;
}

Outcome criterion_wsne_oracle() {
    std::mt19937_64 rng(606);
    const Rat third_vals[3] = {rat(-1), rat(0), rat(1)};
    long games = 0, pairs_checked = 0;
    for (long code = 0; code < 6561; ++code) {
        long c = code;
        BimatrixGame g;
        g.n = 2;
        g.A.assign(2, std::vector<Rat>(2));
        g.B.assign(2, std::vector<Rat>(2));
        for (int e = 0; e < 8; ++e) {
            Rat v = third_vals[c % 3];
            c /= 3;
            if (e < 4) g.A[e / 2][e % 2] = v;
            else g.B[(e - 4) / 2][(e - 4) % 2] = v;
        }
        ++games;

        MixedStrategyPair nash = nash_oracle(g);
        if (!verify_wsne(g, nash, rat(0)).ok)
            return {false, "oracle output rejected at eps=0 (game " + fmt(code) + ")"};

        int hits = 0;
        for (int attempt = 0; attempt < 200 && hits < 50; ++attempt) {
            long kx = (long)(rng() % 9), ky = (long)(rng() % 9);
            MixedStrategyPair pair{{rat(kx, 8), rat(8 - kx, 8)}, {rat(ky, 8), rat(8 - ky, 8)}};
            if (wsne_margin(g, pair) <= rat(1, 10)) continue;
            ++hits;
            ++pairs_checked;
            if (verify_wsne(g, pair, rat(1, 20)).ok)
                return {false, "margin>1/10 profile accepted at eps=1/20 (game " + fmt(code) + ")"};
        }
    }
    if (pairs_checked < 100000)
        return {false, "too few high-margin profiles sampled (" + fmt(pairs_checked) + ")"};
    return {true, fmt(games) + " games: oracle exact at eps=0; " + fmt(pairs_checked) +
                      " high-margin profiles correctly rejected"};
}

// ---------------------------------------------------------------------------
// Criterion 7: strategy extraction matches hand-computed zero-then-normalize
// arithmetic, is idempotent, and reports degenerate all-below-threshold sides.

std::pair<Market, RoleMap> strategy_carrier(const std::vector<Rat>& x, const std::vector<Rat>& y,
                                            EquilibriumCandidate& cand) {
    Market m;
    m.goods = 2;
    RoleMap roles;
    cand.prices.values = {rat(1, 2), rat(1, 2)};
    cand.prices.normalized = true;
    for (int i = 0; i < (int)x.size(); ++i) {
        std::string xid = "X" + std::to_string(i), yid = "Y" + std::to_string(i);
        Trader tx, ty;
        tx.id = xid;
        ty.id = yid;
        tx.endowment = ty.endowment = {rat(0), rat(0)};
        LinearUtility zero;
        zero.base = {rat(0), rat(0)};
        zero.influence.assign(2, LinearForm{});
        tx.utility = zero;
        ty.utility = zero;
        m.traders.push_back(tx);
        m.traders.push_back(ty);
        roles[xid] = Role{"X", i, 0, ""};
        roles[yid] = Role{"Y", i, 0, ""};
        cand.profile.set(xid, {x[i], rat(0)});
        cand.profile.set(yid, {y[i], rat(0)});
    }
    return {m, roles};
}

std::vector<Rat> zero_then_normalize(std::vector<Rat> v, const Rat& tau) {
    Rat sum(0);
    for (Rat& e : v) {
        if (e < tau) e = 0;
        sum += e;
    }
    for (Rat& e : v) e /= sum;  // caller guarantees a surviving entry
    return v;
}

Outcome criterion_extraction() {
    std::mt19937_64 rng(31337);
    static const std::vector<Rat> body{rat(0),    rat(1, 8), rat(1, 5), rat(1, 4),
                                       rat(1, 2), rat(3, 4), rat(1),    rat(5, 4)};
    static const std::vector<Rat> noise{rat(1, 10000000), rat(1, 9999999), rat(1, 20000000)};
    const Rat tau = rat(1) / Rat(531441);  // 3^12

    for (int iter = 0; iter < 100; ++iter) {
        int n = 2 + (int)(rng() % 4);
        std::vector<Rat> x(n), y(n);
        for (int i = 0; i < n; ++i) {
            x[i] = rng() % 5 == 0 ? pick(rng, noise) : pick(rng, body);
            y[i] = rng() % 5 == 0 ? pick(rng, noise) : pick(rng, body);
        }
        x[(int)(rng() % n)] = rat(1, 2);  // guarantee a surviving entry per side
        y[(int)(rng() % n)] = rat(1, 2);

        EquilibriumCandidate cand;
        auto [m, roles] = strategy_carrier(x, y, cand);
        MixedStrategyPair got = extract_strategies(m, roles, cand, tau);
        if (got.x != zero_then_normalize(x, tau) || got.y != zero_then_normalize(y, tau))
            return {false, "extraction differs from hand arithmetic (iter " + fmt(iter) + ")"};

        EquilibriumCandidate cand2;
        auto [m2, roles2] = strategy_carrier(got.x, got.y, cand2);
        MixedStrategyPair again = extract_strategies(m2, roles2, cand2, tau);
        if (again.x != got.x || again.y != got.y)
            return {false, "extraction not idempotent (iter " + fmt(iter) + ")"};
    }

    for (int side = 0; side < 2; ++side) {
        std::vector<Rat> lo(3, rat(1, 10000000)), hi{rat(1, 2), rat(1, 4), rat(1, 4)};
        EquilibriumCandidate cand;
        auto [m, roles] = strategy_carrier(side == 0 ? lo : hi, side == 0 ? hi : lo, cand);
        bool threw = false;
        try {
            extract_strategies(m, roles, cand, tau);
        } catch (const std::domain_error&) {
            threw = true;
        }
        if (!threw) return {false, "all-below-threshold side did not raise domain_error"};
    }
    return {true, "100 random vectors match exactly; idempotent; degenerate sides rejected"};
}

// ---------------------------------------------------------------------------
// Criterion 8: with companions pinned at (1/n^4)e_i, lifted threshold traders
// reproduce the original separable piecewise-linear utility exactly.

Outcome criterion_lift_fidelity() {
    std::mt19937_64 rng(808);
    static const std::vector<Rat> peaks{rat(1, 4), rat(1, 2), rat(1), rat(3, 2), rat(2)};
    const long n = 3;
    const Rat pin = rat(1, 81);  // 1/n^4
    long evals = 0;
    for (int iter = 0; iter < 50; ++iter) {
        SeparablePLMSpec spec;
        spec.goods = 3;
        PLMTrader t;
        t.id = "orig";
        t.endowment = {rat(1), rat(1), rat(1)};
        for (int g = 0; g < 3; ++g) {
            if (rng() % 4 == 0) continue;
            Rat a = pick(rng, peaks), b = pick(rng, peaks);
            if (b > a) std::swap(a, b);
            t.pieces[g] = PLMPiece{a, b, rat((long)(rng() % 82), 6561)};
        }
        if (t.pieces.empty()) t.pieces[0] = PLMPiece{rat(1), rat(1, 2), rat(1, 81)};
        spec.traders.push_back(t);

        LiftedMarket lifted = threshold_lift(spec, n);
        Rat scale = lifted.scale.at("orig");

        AllocationProfile profile;
        for (const auto& [id, role] : lifted.roles)
            if (role.kind == "companion") {
                std::vector<Rat> pinned(3, rat(0));
                pinned[role.j] = pin;
                profile.set(id, pinned);
            }
        for (int sample = 0; sample < 1000; ++sample) {
            std::vector<Rat> x(3);
            for (Rat& v : x) v = rat((long)(rng() % 129), 64);
            profile.set("orig", x);
            Rat expect(0);
            for (const auto& [g, piece] : t.pieces) {
                if (x[g] <= piece.theta)
                    expect += piece.a * x[g];
                else
                    expect += piece.a * piece.theta + piece.b * (x[g] - piece.theta);
            }
            if (eval_utility(lifted.market, "orig", profile) != scale * expect)
                return {false, "lifted utility differs (iter " + fmt(iter) + " sample " +
                                   fmt(sample) + ")"};
            ++evals;
        }
    }
    return {true, fmt(evals) + " bundle evaluations equal the original exactly"};
}

// ---------------------------------------------------------------------------
// Criterion 9: copy regression in the crossing fragment. With the two source
// bundles frozen to (s, 4a-s) patterns and prices fixed at 1/4 each, averaged
// best responses converge so the first follower's matching coordinate lands
// within the frozen tolerance of the first source value on every grid point.
// (The all-or-nothing greedy response resolves ties toward the first good
// pair, so only that wire is driven; the second source value still varies
// across the grid to confirm the copy is insensitive to it.)

const Rat kCopyTolerance = rat(1, 256);  // calibrated: observed worst error 1/320

Outcome criterion_crossing_copy() {
    ReductionParams params = ReductionParams::defaults(4);
    const Rat alpha = params.alpha;
    Market m = crossing_gadget("S1S", "SS2", "S3S", "SS4", "S", params);
    PriceVector prices;
    prices.values.assign(4, rat(1, 4));
    prices.normalized = true;

    Rat worst(0);
    const std::vector<std::string> movers = {"S", "SS2", "SS4"};
    for (int i1 = 0; i1 <= 4; ++i1) {
        for (int i3 = 0; i3 <= 4; ++i3) {
            Rat s11 = i1 * alpha, s31 = i3 * alpha;
            AllocationProfile profile;
            profile.set("S1S", {s11, 4 * alpha - s11, rat(0), rat(0)});
            profile.set("S3S", {rat(0), rat(0), s31, 4 * alpha - s31});
            for (const auto& id : movers) profile.set(id, std::vector<Rat>(4, alpha));

            for (int t = 0; t < 100; ++t) {
                std::map<std::string, std::vector<Rat>> response;
                for (const auto& id : movers)
                    response[id] = optimal_bundle(m, id, prices, profile).bundle;
                for (const auto& id : movers) {
                    std::vector<Rat> mixed = *profile.get(id);
                    for (int g = 0; g < 4; ++g)
                        mixed[g] = (t * mixed[g] + response[id][g]) / (t + 1);
                    profile.set(id, mixed);
                }
            }
            Rat err = rat_abs((*profile.get("SS2"))[0] - s11);
            if (err > worst) worst = err;
        }
    }
    if (worst > kCopyTolerance)
        return {false, "copy error " + rat_str(worst) + " exceeds tolerance " +
                           rat_str(kCopyTolerance)};
    return {true, "25 grid points converge; worst copy error " + rat_str(worst) +
                      " within " + rat_str(kCopyTolerance)};
}

// ---------------------------------------------------------------------------
// Criterion 10: the fixed-point residual vanishes at the swap equilibrium,
// and damped iteration from a uniform start reaches residual < 1/100 within
// 200 steps, yielding a verifiable eps = 1/10 candidate.

Outcome criterion_phi_soundness() {
    Market m = swap_market();
    PhiConstants consts = phi_constants(m);

    PhiPoint eq;
    eq.profile = swap_equilibrium().profile;
    eq.prices.values = {rat(1, 2), rat(1, 2)};
    eq.prices.normalized = true;
    if (fixed_point_residual(m, eq, consts) != 0)
        return {false, "nonzero residual at the exact equilibrium"};

    PhiPoint start;
    start.prices.values = {rat(1, 2), rat(1, 2)};
    start.prices.normalized = true;
    start.profile.set("T1", {rat(1, 2), rat(1, 2)});
    start.profile.set("T2", {rat(1, 2), rat(1, 2)});
    PhiTrace trace = phi_iterate(m, start, consts, 200, rat(1, 2));
    if (trace.best_residual >= rat(1, 100))
        return {false, "best residual " + rat_str(trace.best_residual) + " not below 1/100"};

    EquilibriumCandidate cand;
    cand.profile = trace.best.profile;
    cand.prices = trace.best.prices;
    Rat sum(0);
    for (const Rat& p : cand.prices.values) sum += p;
    for (Rat& p : cand.prices.values) p /= sum;
    cand.prices.normalized = true;
    if (!verify_candidate(m, cand, rat(1, 10)).verdict)
        return {false, "low-residual point rejected at eps=1/10"};
    char buf[64];
    snprintf(buf, sizeof buf, "%.2e", trace.best_residual.get_d());
    return {true, std::string("residual 0 at equilibrium; iteration residual ") + buf +
                      " < 1/100 verifies at eps=1/10"};
}

// ---------------------------------------------------------------------------
// Criterion 11: expansion counts on complete binary tree markets (depths 2-5,
// N=2) grow by a bounded per-depth factor and are identical across reruns.

Market binary_tree_market(int depth) {
    int m = (1 << (depth + 1)) - 1;
    Market mkt;
    mkt.goods = 2;
    for (int i = 0; i < m; ++i) {
        std::vector<int> neighbors;
        if (i > 0) neighbors.push_back((i - 1) / 2);
        if (2 * i + 1 < m) neighbors.push_back(2 * i + 1);
        if (2 * i + 2 < m) neighbors.push_back(2 * i + 2);
        std::vector<LinearForm> forms(2);
        for (int nb : neighbors)
            forms[0].terms.push_back(FormTerm{"b" + std::to_string(nb), 0, rat(1, 4)});
        mkt.traders.push_back(linear_trader("b" + std::to_string(i),
                                            {rat(1, m), rat(1, m)},
                                            {rat(1, 2), rat(1, 2)}, forms));
    }
    return mkt;
}

HierarchicalLabeling binary_tree_labeling(int depth) {
    int m = (1 << (depth + 1)) - 1;
    HierarchicalLabeling lab;
    for (int i = 0; i < m; ++i) {
        HierarchicalLabeling::Node node;
        node.id = "n" + std::to_string(i);
        if (2 * i + 1 < m) node.children.push_back(2 * i + 1);
        if (2 * i + 2 < m) node.children.push_back(2 * i + 2);
        lab.nodes.push_back(node);
        lab.label_of["b" + std::to_string(i)] = node.id;
    }
    lab.root = 0;
    lab.width_k = 1;
    return lab;
}

Outcome criterion_expansion_shape() {
    const double kFactorBound = 64.0;
    std::vector<long> totals;
    std::vector<std::map<int, long>> per_depth_runs[2];
    for (int run = 0; run < 2; ++run) {
        for (int depth = 2; depth <= 5; ++depth) {
            Market mkt = binary_tree_market(depth);
            HierarchicalLabeling lab = binary_tree_labeling(depth);
            SolveStats stats;
            solve_hierarchical(mkt, lab, GridSpec(2), rat(1, 2), &stats);
            per_depth_runs[run].push_back(stats.expansions_by_depth);
            if (run == 0) {
                long total = 0;
                for (const auto& [level, count] : stats.expansions_by_depth) total += count;
                if (total <= 0)
                    return {false, "no expansions logged at depth " + fmt(depth)};
                totals.push_back(total);
            }
        }
    }
    if (per_depth_runs[0] != per_depth_runs[1])
        return {false, "expansion counts differ between identical runs"};

    std::string factors;
    double max_factor = 0;
    for (size_t i = 0; i + 1 < totals.size(); ++i) {
        double f = (double)totals[i + 1] / (double)totals[i];
        if (f > max_factor) max_factor = f;
        char buf[32];
        snprintf(buf, sizeof buf, "%s%.2f", factors.empty() ? "" : ",", f);
        factors += buf;
    }
    if (max_factor > kFactorBound) {
        char buf[64];
        snprintf(buf, sizeof buf, "per-depth factor %.2f exceeds bound %.0f", max_factor,
                 kFactorBound);
        return {false, buf};
    }
    std::string detail = "expansions";
    for (long t : totals) detail += " " + fmt(t);
    return {true, detail + "; per-depth growth factors " + factors + " (bound 64); "
                           "deterministic across reruns"};
}

}  // namespace

int main() {
    struct Entry {
        int id;
        const char* label;
        Outcome (*run)();
    };
    const Entry entries[] = {
        {1, "verifier ground truth", criterion_verifier_ground_truth},
        {2, "optimal-bundle grid dominance", criterion_bundle_oracle},
        {3, "grid rounding keeps equilibria verifiable", criterion_grid_rounding},
        {4, "tree solver equals brute force", criterion_tree_vs_bruteforce},
        {5, "reduction structure and weight identity", criterion_reduction_structure},
        {6, "well-supported check vs exact oracle", criterion_wsne_oracle},
        {7, "strategy extraction arithmetic", criterion_extraction},
        {8, "threshold lift fidelity", criterion_lift_fidelity},
        {9, "crossing fragment copy regression", criterion_crossing_copy},
        {10, "fixed-point residual soundness", criterion_phi_soundness},
        {11, "expansion growth shape", criterion_expansion_shape},
    };

    bool all_pass = true;
    for (const Entry& e : entries) {
        auto t0 = std::chrono::steady_clock::now();
        Outcome out;
        try {
            out = e.run();
        } catch (const std::exception& ex) {
            out = {false, std::string("unexpected exception: ") + ex.what()};
        }
        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("criterion %2d: %s  %s — %s  (%.2f s)\n", e.id,
                    out.pass ? "PASS" : "FAIL", e.label, out.detail.c_str(), secs);
        std::fflush(stdout);
        if (!out.pass) all_pass = false;
    }
    return all_pass ? 0 : 1;
}
