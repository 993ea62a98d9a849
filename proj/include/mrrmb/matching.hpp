#pragma once

#include <Eigen/Core>

#include <vector>

namespace mrrmb {

/// w(n, h-1) is the weight of matching arm n to resource h. The null
/// resource is implicit with weight 0 and unbounded capacity.
using WeightMatrix = Eigen::MatrixXd;

/// caps[h-1] = C_h >= 0.
using CapacityVector = std::vector<int>;

/// a[n] in {0..H}; 0 means idle.
using Assignment = std::vector<int>;

/// Exact max-weight capacitated assignment. Each resource is expanded into
/// C_h unit slots plus N null slots and the rectangular problem is solved by
/// the Hungarian method. Among optimal assignments the lexicographically
/// smallest vector is returned.
Assignment max_weight_assign(const WeightMatrix& weights, const CapacityVector& caps);

/// Exhaustive search over all (H+1)^N assignments (N <= 8). Test oracle.
Assignment brute_force_assign(const WeightMatrix& weights, const CapacityVector& caps);

/// Sum of w(n, a[n]-1) over matched arms, in arm order.
double total_weight(const WeightMatrix& weights, const Assignment& a);

bool is_feasible(const Assignment& a, const CapacityVector& caps);

/// Minimum-cost assignment of every row of `cost` to a distinct column
/// (rows <= cols). Returns the column of each row.
std::vector<int> hungarian_min_cost(const Eigen::MatrixXd& cost);

} // namespace mrrmb
