#include "mrrmb/matching.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace mrrmb {

std::vector<int> hungarian_min_cost(const Eigen::MatrixXd& cost) {
    const int rows = static_cast<int>(cost.rows());
    const int cols = static_cast<int>(cost.cols());
    if (rows > cols) throw std::invalid_argument("hungarian_min_cost: rows > cols");
    constexpr double inf = std::numeric_limits<double>::infinity();

    // Potentials and matching use 1-based indices; column 0 is a sentinel.
    std::vector<double> u(rows + 1, 0.0), v(cols + 1, 0.0);
    std::vector<int> match(cols + 1, 0), way(cols + 1, 0);
    std::vector<double> minv(cols + 1);
    std::vector<char> used(cols + 1);

    for (int i = 1; i <= rows; ++i) {
        match[0] = i;
        int j0 = 0;
        std::fill(minv.begin(), minv.end(), inf);
        std::fill(used.begin(), used.end(), 0);
        do {
            used[j0] = 1;
            const int i0 = match[j0];
            double delta = inf;
            int j1 = 0;
            for (int j = 1; j <= cols; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= cols; ++j) {
                if (used[j]) {
                    u[match[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (match[j0] != 0);
        do {
            const int j1 = way[j0];
            match[j0] = match[j1];
            j0 = j1;
        } while (j0 != 0);
    }

    std::vector<int> row_to_col(rows, -1);
    for (int j = 1; j <= cols; ++j)
        if (match[j] != 0) row_to_col[match[j] - 1] = j - 1;
    return row_to_col;
}

namespace {

void validate(const WeightMatrix& w, const CapacityVector& caps) {
    if (w.rows() < 1 || w.cols() < 1)
        throw std::invalid_argument("matching: need N >= 1 and H >= 1");
    if (static_cast<Eigen::Index>(caps.size()) != w.cols())
        throw std::invalid_argument("matching: capacity vector length != H");
    for (int c : caps)
        if (c < 0) throw std::invalid_argument("matching: negative capacity");
    if (!w.allFinite()) throw std::invalid_argument("matching: non-finite weight");
}

// Optimal assignment of arms [first, N) under `caps`, via slot expansion.
Assignment solve_suffix(const WeightMatrix& w, const CapacityVector& caps, int first) {
    const int n_arms = static_cast<int>(w.rows()) - first;
    const int n_res = static_cast<int>(w.cols());
    Assignment out;
    if (n_arms <= 0) return out;

    std::vector<int> slot_resource;
    for (int h = 0; h < n_res; ++h)
        for (int c = 0; c < std::min(caps[h], n_arms); ++c) slot_resource.push_back(h + 1);
    const int real_slots = static_cast<int>(slot_resource.size());
    slot_resource.resize(real_slots + n_arms, 0);

    Eigen::MatrixXd cost = Eigen::MatrixXd::Zero(n_arms, real_slots + n_arms);
    for (int i = 0; i < n_arms; ++i)
        for (int j = 0; j < real_slots; ++j) cost(i, j) = -w(first + i, slot_resource[j] - 1);

    const auto cols = hungarian_min_cost(cost);
    out.resize(n_arms);
    for (int i = 0; i < n_arms; ++i) out[i] = slot_resource[cols[i]];
    return out;
}

double suffix_weight(const WeightMatrix& w, const Assignment& a, int first) {
    double t = 0.0;
    for (int i = 0; i < static_cast<int>(a.size()); ++i)
        if (a[i] > 0) t += w(first + i, a[i] - 1);
    return t;
}

} // namespace

double total_weight(const WeightMatrix& weights, const Assignment& a) {
    return suffix_weight(weights, a, 0);
}

bool is_feasible(const Assignment& a, const CapacityVector& caps) {
    std::vector<int> used(caps.size(), 0);
    for (int x : a) {
        if (x < 0 || x > static_cast<int>(caps.size())) return false;
        if (x > 0 && ++used[x - 1] > caps[x - 1]) return false;
    }
    return true;
}

Assignment max_weight_assign(const WeightMatrix& weights, const CapacityVector& caps) {
    validate(weights, caps);
    const int n_arms = static_cast<int>(weights.rows());
    const int n_res = static_cast<int>(weights.cols());

    const double best = total_weight(weights, solve_suffix(weights, caps, 0));
    const double tol = 1e-9 * (1.0 + weights.cwiseAbs().sum());

    // Fix arms one at a time to the smallest resource id that still admits
    // an optimal completion.
    Assignment result(n_arms, 0);
    CapacityVector remaining = caps;
    double fixed = 0.0;
    for (int n = 0; n < n_arms; ++n) {
        bool placed = false;
        for (int a = 0; a <= n_res && !placed; ++a) {
            if (a > 0 && remaining[a - 1] == 0) continue;
            const double gain = a > 0 ? weights(n, a - 1) : 0.0;
            if (a > 0) --remaining[a - 1];
            const auto rest = solve_suffix(weights, remaining, n + 1);
            if (fixed + gain + suffix_weight(weights, rest, n + 1) >= best - tol) {
                result[n] = a;
                fixed += gain;
                placed = true;
            } else if (a > 0) {
                ++remaining[a - 1];
            }
        }
        if (!placed) throw std::logic_error("max_weight_assign: no optimal completion found");
    }
    return result;
}

Assignment brute_force_assign(const WeightMatrix& weights, const CapacityVector& caps) {
    validate(weights, caps);
    const int n_arms = static_cast<int>(weights.rows());
    const int n_act = static_cast<int>(weights.cols()) + 1;
    if (n_arms > 8) throw std::invalid_argument("brute_force_assign: instance too large (N > 8)");

    Assignment cur(n_arms, 0), best_a;
    double best = -std::numeric_limits<double>::infinity();
    // Odometer in lexicographic order; strict improvement keeps the first
    // (lexicographically smallest) optimum.
    while (true) {
        if (is_feasible(cur, caps)) {
            const double t = total_weight(weights, cur);
            if (t > best) {
                best = t;
                best_a = cur;
            }
        }
        int i = n_arms - 1;
        while (i >= 0 && ++cur[i] == n_act) cur[i--] = 0;
        if (i < 0) break;
    }
    return best_a;
}

} // namespace mrrmb
