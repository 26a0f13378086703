#pragma once

#include <optional>
#include <vector>

#include "imkt/rational.hpp"

namespace imkt {

// Feasibility problem over nonnegative variables:
//   eq_rows:   a . x == b
//   le_rows:   a . x <= b
// Each row is (coefficients, rhs) with coefficients.size() == nvars.
struct LinFeasProblem {
    int nvars = 0;
    std::vector<std::pair<std::vector<Rat>, Rat>> eq_rows;
    std::vector<std::pair<std::vector<Rat>, Rat>> le_rows;
};

// Exact phase-1 simplex with Bland's rule. Returns a feasible point or
// nullopt when the system is infeasible.
std::optional<std::vector<Rat>> solve_feasibility(const LinFeasProblem& problem);

}  // namespace imkt
