#include "bogexp/combinatorics.hpp"

#include <stdexcept>

namespace bogexp {

std::int64_t binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  if (2 * k > n) k = n - k;
  std::int64_t r = 1;
  for (int i = 1; i <= k; ++i) {
    r = r * (n - k + i) / i;  // exact: r*(n-k+i) is divisible by i at each step
  }
  return r;
}

namespace {

void compose_rec(int total, int parts, int minval, std::vector<int>& buf,
                 std::vector<std::vector<int>>& out) {
  if (parts == 1) {
    if (total >= minval) {
      buf.push_back(total);
      out.push_back(buf);
      buf.pop_back();
    }
    return;
  }
  for (int v = minval; v <= total - minval * (parts - 1); ++v) {
    buf.push_back(v);
    compose_rec(total - v, parts - 1, minval, buf, out);
    buf.pop_back();
  }
}

}  // namespace

std::vector<std::vector<int>> compositions(int total, int parts) {
  std::vector<std::vector<int>> out;
  if (parts <= 0 || total < parts) return out;
  std::vector<int> buf;
  compose_rec(total, parts, 1, buf, out);
  return out;
}

std::vector<std::vector<int>> weak_compositions(int total, int parts) {
  std::vector<std::vector<int>> out;
  if (parts < 0 || total < 0) return out;
  if (parts == 0) {
    if (total == 0) out.push_back({});
    return out;
  }
  std::vector<int> buf;
  compose_rec(total, parts, 0, buf, out);
  return out;
}

std::vector<std::vector<int>> occupations_with_sum(int modes, int total) {
  return weak_compositions(total, modes);
}

}  // namespace bogexp
