#pragma once

#include "imkt/equilibrium.hpp"
#include "imkt/market.hpp"

namespace imkt {

// Discretization: prices and allocations live on multiples of 1/denom,
// raw prices range over the band [1,2] before normalization, and per-good
// allocations are capped at 2.
struct GridSpec {
    long denom = 1;

    explicit GridSpec(long n) : denom(n) {
        if (n < 1) throw std::invalid_argument("GridSpec: denominator must be >= 1");
    }
    static Rat band_lo() { return Rat(1); }
    static Rat band_hi() { return Rat(2); }
    static Rat alloc_cap() { return Rat(2); }

    // Helper choice denom = ceil(m^(2a+b+3)) for an m-trader market.
    static GridSpec from_exponents(long traders, long a, long b);
};

// Rounds every price and allocation entry up to the next grid multiple.
// Output prices are raw band values (normalized flag cleared).
EquilibriumCandidate round_to_grid(const EquilibriumCandidate& cand, const GridSpec& grid);

// All grid price vectors with entries in [0,2] and sum in [1,2], in
// lexicographic order.
std::vector<std::vector<Rat>> enumerate_price_grid(int goods, const GridSpec& grid);

// Rooted tree whose nodes are single traders (children indexed into nodes).
struct TraderTree {
    std::vector<std::string> trader;          // node -> trader id
    std::vector<std::vector<int>> children;   // node -> child node indices
    int root = 0;
};

// Rooted label tree plus a trader -> node assignment. Non-leaf nodes may
// carry at most width_k traders; leaf nodes any number.
struct HierarchicalLabeling {
    struct Node {
        std::string id;
        std::vector<int> children;
    };
    std::vector<Node> nodes;
    int root = 0;
    int width_k = 1;
    std::map<std::string, std::string> label_of;  // trader id -> node id

    int node_index(const std::string& id) const;
};

struct HierValidation {
    bool ok = false;
    std::string violation;
};

// Checks the hierarchical-graph conditions: non-leaf multiplicities in
// [1, k]; same non-leaf label => edges both ways; same leaf label => no
// edges; cross-label edges (both directions) exactly when the labels are
// adjacent in the tree. Throws on unlabeled vertices or malformed trees.
HierValidation validate_hierarchical(const DirectedGraph& graph,
                                     const HierarchicalLabeling& labeling);

struct SolveStats {
    std::map<int, long> expansions_by_depth;  // non-memoized node expansions
    long memo_hits = 0;
    long candidates_verified = 0;
    std::string diagnostic;
};

// Feasible joint behaviour of a group of traders who are influenced only by
// the frozen parent context: reachable total consumption vectors together
// with the group's per-(referencing trader, good) influence-form
// contribution, plus one witness assignment per state.
struct LeafGroupState {
    std::vector<Rat> total;
    std::map<std::pair<std::string, int>, Rat> contribution;
    AllocationProfile witness;
};

std::vector<LeafGroupState> leaf_group_feasible_totals(const Market& market,
                                                       const std::vector<std::string>& group,
                                                       const AllocationProfile& parent_allocs,
                                                       const PriceVector& prices, const Rat& eps,
                                                       const GridSpec& grid);

// Divide-and-conquer feasibility check over a trader tree: is there an
// assignment of grid bundles to the subtree with root bundle x, subtree
// total y, every trader eps-budget-feasible and eps-optimal against the
// prices, the assignment and the frozen boundary? Memoizes on (subtree,
// root bundle, total, boundary slice).
std::optional<AllocationProfile> check_tree(const Market& market, const TraderTree& tree,
                                            const PriceVector& prices, const std::vector<Rat>& x,
                                            const std::vector<Rat>& y,
                                            const AllocationProfile& frozen, const Rat& eps,
                                            const GridSpec& grid, SolveStats* stats = nullptr,
                                            bool use_memo = true);

// Grid search for an eps-approximate equilibrium of a market whose
// influence graph is hierarchical under the given labeling: enumerates band
// prices (normalized exactly before every check) and supply-matching grid
// totals, then runs the tree decomposition. Returns the first candidate
// that passes verify_candidate(eps).
std::optional<EquilibriumCandidate> solve_hierarchical(const Market& market,
                                                       const HierarchicalLabeling& labeling,
                                                       const GridSpec& grid, const Rat& eps,
                                                       SolveStats* stats = nullptr,
                                                       bool use_memo = true);

// Reference oracle: exhaustively enumerates all grid (prices, profile)
// pairs within the band and caps and returns the first candidate passing
// verify_candidate(eps). Refuses when the nominal state count exceeds the
// limit.
std::optional<EquilibriumCandidate> solve_bruteforce(const Market& market, const GridSpec& grid,
                                                     const Rat& eps,
                                                     long state_limit = 200000000L,
                                                     SolveStats* stats = nullptr);

}  // namespace imkt
