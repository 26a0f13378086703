#include "imkt/reduction.hpp"

#include <algorithm>
#include <random>
#include <set>
#include <stdexcept>

#include "imkt/lp.hpp"

namespace imkt {

namespace {

Rat inv_pow(long base, unsigned long e) {
    mpz_class z;
    mpz_ui_pow_ui(z.get_mpz_t(), (unsigned long)base, e);
    Rat r(mpz_class(1), z);
    r.canonicalize();
    return r;
}

void require_square(const BimatrixGame& game) {
    if (game.n < 1) throw std::invalid_argument("game: n must be >= 1");
    if ((int)game.A.size() != game.n || (int)game.B.size() != game.n)
        throw std::invalid_argument("game: matrices must be n x n");
    for (int i = 0; i < game.n; ++i)
        if ((int)game.A[i].size() != game.n || (int)game.B[i].size() != game.n)
            throw std::invalid_argument("game: matrices must be n x n");
}

void require_distribution(const std::vector<Rat>& v, int n, const char* who) {
    if ((int)v.size() != n)
        throw std::invalid_argument(std::string(who) + ": dimension mismatch");
    Rat sum(0);
    for (const auto& e : v) {
        if (e < 0) throw std::invalid_argument(std::string(who) + ": negative entry");
        sum += e;
    }
    if (sum != 1) throw std::invalid_argument(std::string(who) + ": entries must sum to 1");
}

}  // namespace

ReductionParams ReductionParams::defaults(int n) {
    if (n < 1) throw std::invalid_argument("ReductionParams: n must be >= 1");
    ReductionParams p;
    p.n = n;
    p.alpha = inv_pow(n, 3);
    p.beta = inv_pow(n, 10);
    p.gamma = inv_pow(n, 4);
    p.slope_scale = rat(1, 8);
    p.rounding_threshold = inv_pow(n, 12);
    return p;
}

ReductionParams ReductionParams::planar_defaults(int n) {
    if (n < 1) throw std::invalid_argument("ReductionParams: n must be >= 1");
    ReductionParams p;
    p.n = n;
    p.alpha = inv_pow(n, 9);
    p.beta = inv_pow(n, 16);
    p.gamma = inv_pow(n, 10);
    p.slope_scale = rat(1, 8);
    p.rounding_threshold = inv_pow(n, 12);
    return p;
}

Diagnostics validate_game(const BimatrixGame& game, bool require_normalized,
                          bool require_sparse) {
    require_square(game);
    Diagnostics diag;
    auto scan = [&](const std::vector<std::vector<Rat>>& M, const char* name) {
        std::vector<int> row_nz(game.n, 0), col_nz(game.n, 0);
        for (int i = 0; i < game.n; ++i)
            for (int j = 0; j < game.n; ++j) {
                const Rat& e = M[i][j];
                if (require_normalized && (e < -1 || e > 1))
                    diag.issues.push_back(std::string(name) + "[" + std::to_string(i) + "][" +
                                          std::to_string(j) + "] = " + rat_str(e) +
                                          " outside [-1,1]");
                if (e != 0) {
                    ++row_nz[i];
                    ++col_nz[j];
                }
            }
        if (require_sparse)
            for (int i = 0; i < game.n; ++i) {
                if (row_nz[i] > 10)
                    diag.issues.push_back(std::string(name) + " row " + std::to_string(i) +
                                          " has " + std::to_string(row_nz[i]) +
                                          " nonzeros (max 10)");
                if (col_nz[i] > 10)
                    diag.issues.push_back(std::string(name) + " column " + std::to_string(i) +
                                          " has " + std::to_string(col_nz[i]) +
                                          " nonzeros (max 10)");
            }
    };
    scan(game.A, "A");
    scan(game.B, "B");
    return diag;
}

WsneReport verify_wsne(const BimatrixGame& game, const MixedStrategyPair& pair, const Rat& eps) {
    require_square(game);
    require_distribution(pair.x, game.n, "x");
    require_distribution(pair.y, game.n, "y");
    if (eps < 0) throw std::invalid_argument("verify_wsne: negative epsilon");

    std::vector<Rat> Ay(game.n, Rat(0)), xB(game.n, Rat(0));
    for (int i = 0; i < game.n; ++i)
        for (int j = 0; j < game.n; ++j) {
            Ay[i] += game.A[i][j] * pair.y[j];
            xB[j] += pair.x[i] * game.B[i][j];
        }

    WsneReport rep;
    rep.worst_row_violation = 0;
    rep.worst_col_violation = 0;
    for (int i = 0; i < game.n; ++i) {
        if (pair.x[i] == 0) continue;
        for (int j = 0; j < game.n; ++j) {
            Rat gap = Ay[j] - Ay[i];
            if (gap > eps && gap > rep.worst_row_violation) {
                rep.worst_row_violation = gap;
                if (rep.note.empty())
                    rep.note = "row " + std::to_string(i) + " is played but beaten by row " +
                               std::to_string(j) + " (margin " + rat_str(gap) + ")";
            }
        }
    }
    for (int i = 0; i < game.n; ++i) {
        if (pair.y[i] == 0) continue;
        for (int j = 0; j < game.n; ++j) {
            Rat gap = xB[j] - xB[i];
            if (gap > eps && gap > rep.worst_col_violation) {
                rep.worst_col_violation = gap;
                if (rep.note.empty())
                    rep.note = "column " + std::to_string(i) + " is played but beaten by column " +
                               std::to_string(j) + " (margin " + rat_str(gap) + ")";
            }
        }
    }
    rep.ok = rep.worst_row_violation == 0 && rep.worst_col_violation == 0;
    return rep;
}

MixedStrategyPair nash_oracle(const BimatrixGame& game) {
    require_square(game);
    if (game.n > 6) throw std::invalid_argument("nash_oracle: n > 6 unsupported");
    int n = game.n;

    // For a support pair, a feasible y must make all supported rows payoff-
    // equal and at least as good as unsupported rows; symmetric for x. The
    // common payoff is a free variable, split into a nonnegative pair.
    auto side = [&](unsigned long own, unsigned long other, bool row_player)
        -> std::optional<std::vector<Rat>> {
        std::vector<int> vars;  // strategies of the *other* player in the mix
        for (int j = 0; j < n; ++j)
            if (other >> j & 1) vars.push_back(j);
        LinFeasProblem prob;
        prob.nvars = (int)vars.size() + 2;  // mix weights, v+, v-
        std::vector<Rat> simplex_row(prob.nvars, Rat(0));
        for (int k = 0; k < (int)vars.size(); ++k) simplex_row[k] = 1;
        prob.eq_rows.push_back({simplex_row, Rat(1)});
        auto payoff_row = [&](int i) {
            std::vector<Rat> row(prob.nvars, Rat(0));
            for (int k = 0; k < (int)vars.size(); ++k)
                row[k] = row_player ? game.A[i][vars[k]] : game.B[vars[k]][i];
            row[prob.nvars - 2] = -1;
            row[prob.nvars - 1] = 1;
            return row;
        };
        for (int i = 0; i < n; ++i) {
            if (own >> i & 1)
                prob.eq_rows.push_back({payoff_row(i), Rat(0)});
            else
                prob.le_rows.push_back({payoff_row(i), Rat(0)});
        }
        auto sol = solve_feasibility(prob);
        if (!sol) return std::nullopt;
        std::vector<Rat> mix(n, Rat(0));
        for (int k = 0; k < (int)vars.size(); ++k) mix[vars[k]] = (*sol)[k];
        return mix;
    };

    for (unsigned long sx = 1; sx < (1ul << n); ++sx) {
        for (unsigned long sy = 1; sy < (1ul << n); ++sy) {
            auto y = side(sx, sy, true);
            if (!y) continue;
            auto x = side(sy, sx, false);
            if (!x) continue;
            MixedStrategyPair pair{*x, *y};
            if (verify_wsne(game, pair, Rat(0)).ok) return pair;
        }
    }
    throw std::logic_error("nash_oracle: no equilibrium found (internal bug)");
}

std::pair<std::vector<Rat>, std::vector<Rat>> cd_weights(const std::vector<std::vector<Rat>>& A,
                                                         int i, int j) {
    if (i == j) throw std::invalid_argument("cd_weights: i == j");
    if (i < 0 || j < 0 || i >= (int)A.size() || j >= (int)A.size())
        throw std::invalid_argument("cd_weights: row index out of range");
    int n = (int)A[i].size();
    if ((int)A[j].size() != n) throw std::invalid_argument("cd_weights: ragged matrix");
    std::vector<Rat> C(n, Rat(0)), D(n, Rat(0));
    for (int l = 0; l < n; ++l) {
        Rat diff = A[i][l] - A[j][l];
        if (diff > 0) C[l] = diff / 2;
        if (diff < 0) D[l] = -diff / 2;
        if (C[l] > 1 || D[l] > 1)
            throw std::invalid_argument("cd_weights: entries outside [-1,1]");
        if (A[i][l] - A[j][l] != 2 * (C[l] - D[l]))
            throw std::logic_error("cd_weights: identity violated (internal bug)");
    }
    return {C, D};
}

namespace {

std::string idx_name(const char* prefix, int i) { return std::string(prefix) + std::to_string(i); }
std::string pair_name(const char* prefix, int i, int j) {
    return std::string(prefix) + std::to_string(i) + "_" + std::to_string(j);
}

}  // namespace

BuiltMarket build_linear_market(const BimatrixGame& game, const ReductionParams& params) {
    Diagnostics gd = validate_game(game, true, true);
    if (!gd.ok()) throw std::invalid_argument("build_linear_market: " + gd.issues.front());
    int n = game.n;
    if (n < 3) throw std::invalid_argument("build_linear_market: n must be >= 3");
    if (params.alpha <= 0 || params.beta <= 0 || params.gamma <= 0 || params.slope_scale <= 0)
        throw std::invalid_argument("build_linear_market: parameters must be positive");
    const Rat& s = params.slope_scale;
    if (s > 1 || s * (1 + params.beta) > 1 || s * (1 + params.gamma) > 1)
        throw std::invalid_argument("build_linear_market: slope_scale cannot normalize slopes");

    BuiltMarket out;
    out.params = params;
    Market& mkt = out.market;
    mkt.goods = 2;

    std::vector<Rat> unit_endowment{Rat(1), Rat(1)};
    std::vector<Rat> alpha_endowment{params.alpha, params.alpha};

    auto add = [&](const std::string& id, const std::vector<Rat>& w, std::vector<Rat> base,
                   std::vector<LinearForm> influence, Role role) {
        Trader t;
        t.id = id;
        t.endowment = w;
        LinearUtility u;
        u.base = std::move(base);
        u.influence = std::move(influence);
        t.utility = std::move(u);
        mkt.traders.push_back(std::move(t));
        out.roles[id] = std::move(role);
    };
    auto term = [&](const std::string& trader, const Rat& weight) {
        return FormTerm{trader, 0, weight};  // every reference targets a good-0 variable
    };

    add("T", unit_endowment, {s, s}, {LinearForm{}, LinearForm{}}, Role{"T", 0, 0, ""});

    for (int i = 0; i < n; ++i)
        add(idx_name("X", i), alpha_endowment, {s * (1 + params.gamma), s},
            {LinearForm{}, LinearForm{{term(pair_name("A", i, 0), s)}}}, Role{"X", i, 0, ""});
    for (int i = 0; i < n; ++i)
        add(idx_name("Y", i), alpha_endowment, {s * (1 + params.gamma), s},
            {LinearForm{}, LinearForm{{term(pair_name("B", i, 0), s)}}}, Role{"Y", i, 0, ""});

    // Bt[i][j] = B[j][i]: the column player's payoff matrix by columns.
    std::vector<std::vector<Rat>> Bt(n, std::vector<Rat>(n));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) Bt[i][j] = game.B[j][i];

    auto add_comparator = [&](const char* prefix, const char* var_prefix,
                              const std::vector<std::vector<Rat>>& M, int i, int j) {
        auto [C, D] = cd_weights(M, i, j);
        LinearForm f1, f2;
        for (int l = 0; l < n; ++l) {
            if (D[l] > 0) f1.terms.push_back(term(idx_name(var_prefix, l), s * D[l]));
            if (C[l] > 0) f2.terms.push_back(term(idx_name(var_prefix, l), s * C[l]));
        }
        add(pair_name(prefix, i, j), alpha_endowment, {s, s * (1 + params.beta)},
            {std::move(f1), std::move(f2)}, Role{prefix, i, j, ""});
    };
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (i != j) add_comparator("U", "Y", game.A, i, j);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (i != j) add_comparator("V", "X", Bt, i, j);

    auto add_chain = [&](const char* prefix, const char* cmp_prefix, int i) {
        std::vector<int> js;
        for (int j = 0; j < n; ++j)
            if (j != i) js.push_back(j);
        for (int k = 0; k <= n - 3; ++k) {
            LinearForm f1;
            if (k == n - 3) {
                f1.terms.push_back(term(pair_name(cmp_prefix, i, js[n - 3]), s));
                f1.terms.push_back(term(pair_name(cmp_prefix, i, js[n - 2]), s));
            } else {
                f1.terms.push_back(term(pair_name(prefix, i, k + 1), s));
                f1.terms.push_back(term(pair_name(cmp_prefix, i, js[k]), s));
            }
            add(pair_name(prefix, i, k), alpha_endowment, {s, s * (1 + params.gamma)},
                {std::move(f1), LinearForm{}}, Role{prefix, i, k, ""});
        }
    };
    for (int i = 0; i < n; ++i) add_chain("A", "U", i);
    for (int i = 0; i < n; ++i) add_chain("B", "V", i);

    long expected = 1 + 2L * n + 2L * n * (n - 1) + 2L * n * (n - 2);
    if ((long)mkt.traders.size() != expected)
        throw std::logic_error("build_linear_market: trader count mismatch (internal bug)");
    Diagnostics md = validate_market(mkt);
    if (!md.ok())
        throw std::logic_error("build_linear_market: invalid output market: " + md.issues.front());
    DirectedGraph ig = build_influence_graph(mkt);
    for (int d : ig.in_degree())
        if (d > 20)
            throw std::logic_error("build_linear_market: influence in-degree exceeds 20");
    if (!check_existence_conditions(mkt).satisfied())
        throw std::logic_error("build_linear_market: existence conditions violated");
    return out;
}

MixedStrategyPair extract_strategies(const Market& market, const RoleMap& roles,
                                     const EquilibriumCandidate& cand, const Rat& tau) {
    if (tau <= 0) throw std::invalid_argument("extract_strategies: tau must be positive");
    std::map<int, std::string> xs, ys;
    for (const auto& [id, role] : roles) {
        if (role.kind == "X") xs[role.i] = id;
        if (role.kind == "Y") ys[role.i] = id;
    }
    int n = (int)xs.size();
    if (n == 0 || (int)ys.size() != n)
        throw std::invalid_argument("extract_strategies: role map lacks X/Y traders");

    auto read = [&](const std::map<int, std::string>& side, const char* who) {
        std::vector<Rat> raw(n);
        for (const auto& [i, id] : side) {
            if (i < 0 || i >= n)
                throw std::invalid_argument("extract_strategies: non-contiguous role indices");
            if (!market.find(id))
                throw std::invalid_argument("extract_strategies: role trader '" + id +
                                            "' not in market");
            const std::vector<Rat>* bundle = cand.profile.get(id);
            if (!bundle || bundle->empty())
                throw std::invalid_argument("extract_strategies: candidate misses trader '" + id +
                                            "'");
            raw[i] = (*bundle)[0];
        }
        Rat sum(0);
        for (auto& v : raw) {
            if (v < tau) v = 0;
            sum += v;
        }
        if (sum == 0)
            throw std::domain_error(std::string("extract_strategies: all ") + who +
                                    " entries fall below the rounding threshold");
        for (auto& v : raw) v /= sum;
        return raw;
    };
    return MixedStrategyPair{read(xs, "row"), read(ys, "column")};
}

Market crossing_gadget(const std::string& s1s, const std::string& ss2, const std::string& s3s,
                       const std::string& ss4, const std::string& s_id,
                       const ReductionParams& params) {
    std::set<std::string> ids{s1s, ss2, s3s, ss4, s_id};
    if (ids.size() != 5) throw std::invalid_argument("crossing_gadget: trader ids must differ");
    if (params.alpha <= 0 || params.slope_scale <= 0)
        throw std::invalid_argument("crossing_gadget: parameters must be positive");
    const Rat& s = params.slope_scale;

    Market mkt;
    mkt.goods = 4;
    std::vector<Rat> w(4, params.alpha);
    auto add = [&](const std::string& id, std::vector<Rat> base,
                   std::vector<LinearForm> influence) {
        Trader t;
        t.id = id;
        t.endowment = w;
        LinearUtility u;
        u.base = std::move(base);
        u.influence = std::move(influence);
        t.utility = std::move(u);
        mkt.traders.push_back(std::move(t));
    };
    auto term = [&](const std::string& trader, int good) { return FormTerm{trader, good, s}; };

    add(s1s, {Rat(0), Rat(0), Rat(0), Rat(0)}, std::vector<LinearForm>(4));
    add(ss2, {s, s, Rat(0), Rat(0)},
        {LinearForm{{term(s_id, 0)}}, LinearForm{{term(s_id, 1)}}, LinearForm{}, LinearForm{}});
    add(s3s, {Rat(0), Rat(0), Rat(0), Rat(0)}, std::vector<LinearForm>(4));
    add(ss4, {s, s, Rat(0), Rat(0)},
        {LinearForm{{term(s_id, 2)}}, LinearForm{{term(s_id, 3)}}, LinearForm{}, LinearForm{}});
    add(s_id, {s, s, s, s},
        {LinearForm{{term(s1s, 0), term(ss2, 1)}}, LinearForm{{term(ss2, 0), term(s1s, 1)}},
         LinearForm{{term(s3s, 0), term(ss4, 1)}}, LinearForm{{term(ss4, 0), term(s3s, 1)}}});
    return mkt;
}

Diagnostics validate_plm_spec(const SeparablePLMSpec& spec, long n) {
    Diagnostics diag;
    if (spec.goods < 1) diag.issues.push_back("goods must be >= 1");
    if (n < 1) diag.issues.push_back("n must be >= 1");
    if (!diag.ok()) return diag;
    Rat theta_cap = inv_pow(n, 4);
    std::set<std::string> seen;
    for (const auto& t : spec.traders) {
        if (t.id.empty()) diag.issues.push_back("empty trader id");
        if (!seen.insert(t.id).second) diag.issues.push_back("duplicate trader id '" + t.id + "'");
        if ((int)t.endowment.size() != spec.goods)
            diag.issues.push_back("trader '" + t.id + "': endowment dimension mismatch");
        for (const auto& e : t.endowment)
            if (e < 0) diag.issues.push_back("trader '" + t.id + "': negative endowment");
        if ((int)t.pieces.size() > 10)
            diag.issues.push_back("trader '" + t.id + "': more than 10 nonzero goods");
        for (const auto& [good, piece] : t.pieces) {
            std::string where = "trader '" + t.id + "' good " + std::to_string(good);
            if (good < 0 || good >= spec.goods) {
                diag.issues.push_back(where + ": good index out of range");
                continue;
            }
            if (piece.b <= 0) diag.issues.push_back(where + ": requires b > 0");
            if (piece.a < piece.b) diag.issues.push_back(where + ": requires a >= b");
            if (piece.theta < 0 || piece.theta > theta_cap)
                diag.issues.push_back(where + ": theta outside [0, 1/n^4]");
        }
    }
    return diag;
}

LiftedMarket threshold_lift(const SeparablePLMSpec& spec, long n) {
    Diagnostics diag = validate_plm_spec(spec, n);
    if (!diag.ok()) throw std::invalid_argument("threshold_lift: " + diag.issues.front());
    mpz_class n4z;
    mpz_ui_pow_ui(n4z.get_mpz_t(), (unsigned long)n, 4);
    Rat n4(n4z);
    Rat companion_share = Rat(1) / n4;

    LiftedMarket out;
    out.market.goods = spec.goods;
    for (const auto& t : spec.traders) {
        Rat max_peak(1);
        for (const auto& [good, piece] : t.pieces)
            if (piece.a > max_peak) max_peak = piece.a;
        Rat scale = Rat(1) / max_peak;
        out.scale[t.id] = scale;

        ThresholdUtility u;
        u.peak.assign(spec.goods, Rat(0));
        u.drop.assign(spec.goods, Rat(0));
        u.influence.assign(spec.goods, LinearForm{});
        for (const auto& [good, piece] : t.pieces) {
            std::string companion = t.id + "#" + std::to_string(good);
            Rat d = scale * (piece.a - piece.b);
            u.peak[good] = scale * piece.a;
            u.drop[good] = d;
            if (d > 0) u.influence[good].terms.push_back(FormTerm{companion, good, piece.theta * d * n4});

            Trader comp;
            comp.id = companion;
            comp.endowment.assign(spec.goods, Rat(0));
            comp.endowment[good] = companion_share;
            LinearUtility cu;
            cu.base.assign(spec.goods, Rat(0));
            cu.base[good] = 1;
            cu.influence.assign(spec.goods, LinearForm{});
            comp.utility = std::move(cu);
            out.market.traders.push_back(std::move(comp));
            out.roles[companion] = Role{"companion", 0, good, t.id};
        }

        Trader main;
        main.id = t.id;
        main.endowment = t.endowment;
        main.utility = std::move(u);
        out.market.traders.push_back(std::move(main));
        out.roles[t.id] = Role{"main", 0, 0, t.id};
    }
    return out;
}

BimatrixGame gen_sparse_game(int n, unsigned long seed) {
    if (n < 1) throw std::invalid_argument("gen_sparse_game: n must be >= 1");
    std::mt19937_64 gen(seed);
    const Rat values[4] = {rat(-1), rat(-1, 2), rat(1, 2), rat(1)};
    auto fill = [&]() {
        std::vector<std::vector<Rat>> M(n, std::vector<Rat>(n, Rat(0)));
        std::vector<int> col_nz(n, 0);
        for (int i = 0; i < n; ++i) {
            int want = 1 + (int)(gen() % 3);
            std::vector<int> open;
            for (int j = 0; j < n; ++j)
                if (col_nz[j] < 3) open.push_back(j);
            for (int k = 0; k < want && !open.empty(); ++k) {
                size_t pick = gen() % open.size();
                int j = open[pick];
                open.erase(open.begin() + pick);
                M[i][j] = values[gen() % 4];
                ++col_nz[j];
            }
        }
        return M;
    };
    BimatrixGame game;
    game.n = n;
    game.A = fill();
    game.B = fill();
    return game;
}

}  // namespace imkt
