#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "imkt/rational.hpp"

namespace imkt {

// One weighted reference to another trader's allocation variable.
struct FormTerm {
    std::string trader;
    int good = 0;
    Rat weight;
};

// Nonnegative-weight linear form over neighbour allocation variables.
struct LinearForm {
    std::vector<FormTerm> terms;
};

// Per-good slope c_i plus a linear influence form; the effective slope of
// good i is c_i + f_i(neighbour allocations).
struct LinearUtility {
    std::vector<Rat> base;            // c, one per good
    std::vector<LinearForm> influence;  // f, one per good
};

// Per-good peak slope c_i, drop d_i (0 <= d <= c) and threshold form f_i.
// Good i contributes c_i*x + min(0, f_i - d_i*x): slope c_i up to x = f_i/d_i,
// slope c_i - d_i beyond it.
struct ThresholdUtility {
    std::vector<Rat> peak;             // c
    std::vector<Rat> drop;             // d
    std::vector<LinearForm> influence;  // f
};

using Utility = std::variant<LinearUtility, ThresholdUtility>;

struct Trader {
    std::string id;
    std::vector<Rat> endowment;
    Utility utility;
};

struct Market {
    int goods = 0;
    std::vector<Trader> traders;

    const Trader* find(const std::string& id) const;
    const Trader& at(const std::string& id) const;
    std::vector<Rat> supply() const;  // per-good endowment totals
};

// Partial or full map from trader id to a bundle (length = market.goods).
struct AllocationProfile {
    std::map<std::string, std::vector<Rat>> bundles;

    const std::vector<Rat>* get(const std::string& id) const;
    void set(const std::string& id, std::vector<Rat> bundle);
};

struct PriceVector {
    std::vector<Rat> values;
    bool normalized = false;
};

// Directed graph over trader ids; vertex order is lexicographic and edges
// are kept sorted so identical markets always produce identical graphs.
struct DirectedGraph {
    std::vector<std::string> vertices;
    std::vector<std::pair<int, int>> edges;  // (from, to) vertex indices

    int index_of(const std::string& id) const;
    bool has_edge(const std::string& from, const std::string& to) const;
    bool strongly_connected() const;
    std::vector<int> out_degree() const;
    std::vector<int> in_degree() const;
};

// One linear piece of a per-good utility curve. cap is the cumulative
// consumption level where the piece ends (absent = unbounded tail).
struct Segment {
    Rat slope;
    std::optional<Rat> cap;
};

struct Diagnostics {
    std::vector<std::string> issues;
    bool ok() const { return issues.empty(); }
};

enum class SupplyRule { Band, ExactlyOne };

// Structural validation: dimensions, parameter ranges ([0,1] slopes and
// weights, d <= c), form references resolve and never hit the owner, and
// per-good supply in [1/2, 2] (or exactly 1 under SupplyRule::ExactlyOne).
Diagnostics validate_market(const Market& market, SupplyRule supply_rule = SupplyRule::Band);

// Value of f given the referenced allocations; throws if one is missing.
Rat eval_form(const LinearForm& form, const AllocationProfile& profile);

// u_k at the profile (which must cover k and every referenced neighbour).
Rat eval_utility(const Market& market, const std::string& trader_id,
                 const AllocationProfile& profile);

// Per-good piecewise-linear curve of trader k's utility in her own bundle,
// with neighbour allocations substituted from profile_others. Linear goods
// yield one unbounded segment; threshold goods with d > 0 yield the peak
// segment capped at f/d followed by the unbounded tail.
std::vector<std::vector<Segment>> effective_segments(const Market& market,
                                                     const std::string& trader_id,
                                                     const AllocationProfile& profile_others);

// Same curve machinery with the per-good form values already evaluated.
std::vector<std::vector<Segment>> segments_from_form_values(const Utility& utility,
                                                            const std::vector<Rat>& form_values);

// Utility of consuming x units of one good, integrating the segment slopes.
Rat segments_value_at(const std::vector<Segment>& segments, const Rat& x);

// Edge j -> k iff u_k carries a strictly positive weight on one of T_j's
// variables.
DirectedGraph build_influence_graph(const Market& market);

// True when the utility keeps a strictly positive tail slope for the good
// regardless of influence values (linear: c > 0; threshold: c - d > 0).
bool is_nonsatiated(const Utility& utility, int good);

// Edge j -> k iff some good i has w_{j,i} > 0 and k nonsatiated in i.
DirectedGraph build_economy_graph(const Market& market);

struct ExistenceReport {
    bool economy_strongly_connected = false;
    bool every_good_wanted = false;  // each good nonsatiated for some trader
    bool satisfied() const { return economy_strongly_connected && every_good_wanted; }
};

// Sufficient conditions under which an exchange market with social influence
// admits an approximate equilibrium.
ExistenceReport check_existence_conditions(const Market& market);

}  // namespace imkt
