#pragma once

#include "imkt/market.hpp"

namespace imkt {

struct EquilibriumCandidate {
    PriceVector prices;
    AllocationProfile profile;
};

// Result of a single-trader demand computation. unbounded is only possible
// with an infinite box: some good has price 0 and a positive-slope
// unbounded segment.
struct BundleResult {
    bool unbounded = false;
    Rat value;
    std::vector<Rat> bundle;
};

// Greedy bang-per-buck fill over the per-good segment curves: price-0
// positive-slope segments first, then slope/price descending, ties broken
// by lower good index then earlier segment. Spends at most the budget and
// never exceeds box_cap per coordinate.
BundleResult optimal_bundle_core(const std::vector<std::vector<Segment>>& segments,
                                 const std::vector<Rat>& prices, Rat budget,
                                 const std::optional<Rat>& box_cap);

// Demand of trader k at the given prices with neighbour allocations taken
// from profile_others; budget is w_k . p.
BundleResult optimal_bundle(const Market& market, const std::string& trader_id,
                            const PriceVector& prices, const AllocationProfile& profile_others,
                            const std::optional<Rat>& box_cap = std::nullopt);

struct ConditionResult {
    bool pass = false;
    Rat violation;      // raw excess over the condition's base bound (0 when met)
    std::string where;  // offending trader or good, empty when none
    std::string note;
};

struct VerificationReport {
    Rat epsilon;
    ConditionResult prices_normalized;   // sum p_i = 1 exactly
    ConditionResult budgets;             // x_k.p <= w_k.p + eps
    ConditionResult optimality;          // u_k(x) >= opt_k - eps
    ConditionResult clearing;            // |supply_i - total_i| <= eps
    bool verdict = false;
};

// Checks the four approximate-equilibrium conditions; prices must carry the
// normalized flag (unnormalized input is a contract error, not a failed
// condition).
VerificationReport verify_candidate(const Market& market, const EquilibriumCandidate& cand,
                                    const Rat& eps);

// Domain constants for the fixed-point correspondence: allocations range
// over [0, 11/10]^goods and prices over the truncated simplex
// {p : sum p_i = 1, p_i >= floor_c}.
struct PhiConstants {
    unsigned long level = 0;  // L
    Rat floor_c;              // price floor c = 1/(m * 2^(3mL))
};

// level is the smallest L with 2^L >= 4*m*h^2, every positive tail-slope gap
// >= 2^-L and every positive endowment entry >= 2^-L.
PhiConstants phi_constants(const Market& market);

struct PhiPoint {
    AllocationProfile profile;
    PriceVector prices;
};

// One application of the correspondence with canonical selections: prices
// best-respond to aggregate demand (floor everywhere, remaining mass on the
// lowest-index argmax good; uniform when all aggregates tie), allocations
// best-respond to the old prices under the [0, 11/10] box.
PhiPoint phi_step(const Market& market, const PhiPoint& point, const PhiConstants& consts);

// L-infinity distance between the point and its phi_step image.
Rat fixed_point_residual(const Market& market, const PhiPoint& point, const PhiConstants& consts);

struct PhiTrace {
    std::vector<PhiPoint> points;
    std::vector<Rat> residuals;  // residual of each visited point
    PhiPoint best;
    Rat best_residual;
};

// Damped iteration heuristic: next = (1-damping)*current + damping*image,
// clamped back into the domain. Records the residual at every visited point
// and returns the minimal-residual point; max_steps = 0 just scores start.
PhiTrace phi_iterate(const Market& market, const PhiPoint& start, const PhiConstants& consts,
                     int max_steps, const Rat& damping);

}  // namespace imkt
