#pragma once

#include <cstdint>
#include <vector>

namespace bogexp {

// Binomial coefficient as a 64-bit integer; callers stay well inside the
// overflow-free range (basis dimensions are resource-guarded).
std::int64_t binomial(int n, int k);

// Compositions of `total` into `parts` strictly positive integers, in
// lexicographic order. Count: C(total-1, parts-1).
std::vector<std::vector<int>> compositions(int total, int parts);

// Weak compositions of `total` into `parts` non-negative integers, in
// lexicographic order. Count: C(total+parts-1, parts-1).
std::vector<std::vector<int>> weak_compositions(int total, int parts);

// Occupation vectors (n_0,...,n_{modes-1}) with sum exactly `total`,
// lexicographically increasing.
std::vector<std::vector<int>> occupations_with_sum(int modes, int total);

}  // namespace bogexp
