#include "imkt/lp.hpp"

#include <stdexcept>

namespace imkt {

std::optional<std::vector<Rat>> solve_feasibility(const LinFeasProblem& problem) {
    int n = problem.nvars;
    for (const auto& row : problem.eq_rows)
        if ((int)row.first.size() != n) throw std::invalid_argument("lp: row width mismatch");
    for (const auto& row : problem.le_rows)
        if ((int)row.first.size() != n) throw std::invalid_argument("lp: row width mismatch");

    int n_eq = (int)problem.eq_rows.size();
    int n_le = (int)problem.le_rows.size();
    int rows = n_eq + n_le;
    if (rows == 0) return std::vector<Rat>(n, Rat(0));

    int slack0 = n;
    int art0 = n + n_le;
    int cols = n + n_le + rows;  // structural, slack, artificial

    std::vector<std::vector<Rat>> T(rows, std::vector<Rat>(cols + 1, Rat(0)));
    auto load = [&](int r, const std::vector<Rat>& a, const Rat& b, int slack) {
        for (int j = 0; j < n; ++j) T[r][j] = a[j];
        if (slack >= 0) T[r][slack] = 1;
        T[r][cols] = b;
        if (T[r][cols] < 0)
            for (int j = 0; j <= cols; ++j) T[r][j] = -T[r][j];
        T[r][art0 + r] = 1;
    };
    for (int i = 0; i < n_eq; ++i)
        load(i, problem.eq_rows[i].first, problem.eq_rows[i].second, -1);
    for (int i = 0; i < n_le; ++i)
        load(n_eq + i, problem.le_rows[i].first, problem.le_rows[i].second, slack0 + i);

    std::vector<int> basis(rows);
    for (int r = 0; r < rows; ++r) basis[r] = art0 + r;

    // phase-1 objective: minimize the sum of artificials; obj[j] holds the
    // reduced cost, obj[cols] the current objective value
    std::vector<Rat> obj(cols + 1, Rat(0));
    for (int r = 0; r < rows; ++r)
        for (int j = 0; j <= cols; ++j) obj[j] += T[r][j];
    for (int r = 0; r < rows; ++r) obj[art0 + r] = 0;

    while (true) {
        int enter = -1;
        for (int j = 0; j < art0; ++j)
            if (obj[j] > 0) {
                enter = j;
                break;
            }
        if (enter < 0) break;
        int leave = -1;
        Rat best;
        for (int r = 0; r < rows; ++r) {
            if (T[r][enter] <= 0) continue;
            Rat ratio = T[r][cols] / T[r][enter];
            if (leave < 0 || ratio < best || (ratio == best && basis[r] < basis[leave])) {
                leave = r;
                best = ratio;
            }
        }
        if (leave < 0) throw std::logic_error("lp: phase-1 objective unbounded");
        Rat piv = T[leave][enter];
        for (int j = 0; j <= cols; ++j) T[leave][j] /= piv;
        for (int r = 0; r < rows; ++r) {
            if (r == leave || T[r][enter] == 0) continue;
            Rat f = T[r][enter];
            for (int j = 0; j <= cols; ++j) T[r][j] -= f * T[leave][j];
        }
        if (obj[enter] != 0) {
            Rat f = obj[enter];
            for (int j = 0; j <= cols; ++j) obj[j] -= f * T[leave][j];
        }
        basis[leave] = enter;
    }

    if (obj[cols] != 0) return std::nullopt;

    std::vector<Rat> x(n, Rat(0));
    for (int r = 0; r < rows; ++r)
        if (basis[r] < n) x[basis[r]] = T[r][cols];
    return x;
}

}  // namespace imkt
