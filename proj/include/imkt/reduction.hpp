#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "imkt/equilibrium.hpp"
#include "imkt/market.hpp"
#include "imkt/rational.hpp"

namespace imkt {

struct BimatrixGame {
    int n = 0;
    std::vector<std::vector<Rat>> A;  // row player payoffs
    std::vector<std::vector<Rat>> B;  // column player payoffs
};

struct MixedStrategyPair {
    std::vector<Rat> x;
    std::vector<Rat> y;
};

struct ReductionParams {
    int n = 0;
    Rat alpha;
    Rat beta;
    Rat gamma;
    Rat slope_scale;
    Rat rounding_threshold;

    static ReductionParams defaults(int n);
    static ReductionParams planar_defaults(int n);
};

// Entry-range check (entries in [-1,1]) and sparsity check (at most 10
// nonzero entries per row and per column of each matrix).
Diagnostics validate_game(const BimatrixGame& game, bool require_normalized, bool require_sparse);

struct WsneReport {
    bool ok = true;
    Rat worst_row_violation;  // largest gap of a violated row condition, 0 if none
    Rat worst_col_violation;
    std::string note;  // first violation, empty when ok
};

// Well-supported check: whenever a pure strategy is beaten by more than eps,
// it must carry zero probability.
WsneReport verify_wsne(const BimatrixGame& game, const MixedStrategyPair& pair, const Rat& eps);

// Exact Nash equilibrium by support enumeration; guarded to n <= 6.
MixedStrategyPair nash_oracle(const BimatrixGame& game);

// C_l = max(0, A[i][l] - A[j][l]) / 2, D_l = max(0, A[j][l] - A[i][l]) / 2.
std::pair<std::vector<Rat>, std::vector<Rat>> cd_weights(const std::vector<std::vector<Rat>>& A,
                                                         int i, int j);

struct Role {
    std::string kind;  // "T","X","Y","U","V","A","B","main","companion"
    int i = 0;
    int j = 0;               // second index; good index for companions
    std::string origin;      // lift roles: original trader id
};
using RoleMap = std::map<std::string, Role>;

struct BuiltMarket {
    Market market;
    RoleMap roles;
    ReductionParams params;
};

// Compile a normalized sparse game into a 2-good linear-influence market.
BuiltMarket build_linear_market(const BimatrixGame& game, const ReductionParams& params);

// Read off the mixed strategies from a candidate: good-0 allocations of the
// X_i / Y_i traders, entries below tau zeroed, then normalized.
MixedStrategyPair extract_strategies(const Market& market, const RoleMap& roles,
                                     const EquilibriumCandidate& cand, const Rat& tau);

// Five-trader, four-good crossing fragment. The first four ids take the
// boundary roles; the last is the crossing trader.
Market crossing_gadget(const std::string& s1s, const std::string& ss2, const std::string& s3s,
                       const std::string& ss4, const std::string& s,
                       const ReductionParams& params);

struct PLMPiece {
    Rat a;
    Rat b;
    Rat theta;
};

struct PLMTrader {
    std::string id;
    std::vector<Rat> endowment;
    std::map<int, PLMPiece> pieces;  // good index -> 2-piecewise-linear piece
};

struct SeparablePLMSpec {
    int goods = 0;
    std::vector<PLMTrader> traders;
};

Diagnostics validate_plm_spec(const SeparablePLMSpec& spec, long n);

struct LiftedMarket {
    Market market;
    RoleMap roles;
    std::map<std::string, Rat> scale;  // per-main-trader utility scale factor
};

// Rebuild each separable piecewise-linear trader as a threshold-influence
// trader plus one companion per nonzero good; with companions holding
// (1/n^4)e_i the lifted utility equals scale * original exactly.
LiftedMarket threshold_lift(const SeparablePLMSpec& spec, long n);

// Deterministic generator of normalized sparse games: at most 3 nonzero
// entries per row and column, values in {-1, -1/2, 1/2, 1}.
BimatrixGame gen_sparse_game(int n, unsigned long seed);

}  // namespace imkt
