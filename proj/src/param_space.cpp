#include "fmm/param_space.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace fmm {

bool CoordinateInterval::contains(double x) const {
  if (std::isnan(x)) return false;
  const bool above = lower_closed ? x >= lower : x > lower;
  const bool below = upper_closed ? x <= upper : x < upper;
  return above && below;
}

bool ParamDomain::contains(std::span<const double> v) const {
  if (v.size() != coords.size()) return false;
  for (std::size_t d = 0; d < v.size(); ++d) {
    if (!coords[d].contains(v[d])) return false;
  }
  return true;
}

MixtureParams::MixtureParams(std::vector<double> w, std::vector<double> v, std::size_t param_dim)
    : w_(std::move(w)), v_(std::move(v)), dim_(param_dim) {
  if (w_.empty()) throw std::invalid_argument("MixtureParams: k must be >= 1");
  if (dim_ == 0) throw std::invalid_argument("MixtureParams: param_dim must be >= 1");
  if (v_.size() != w_.size() * dim_) {
    throw std::invalid_argument("MixtureParams: v must have k * param_dim entries");
  }
}

static std::vector<double> flatten_rows(const std::vector<std::vector<double>>& rows) {
  std::vector<double> flat;
  for (const auto& r : rows) {
    if (r.size() != rows.front().size()) {
      throw std::invalid_argument("MixtureParams: ragged parameter rows");
    }
    flat.insert(flat.end(), r.begin(), r.end());
  }
  return flat;
}

MixtureParams::MixtureParams(std::vector<double> w, const std::vector<std::vector<double>>& rows)
    : MixtureParams(std::move(w), flatten_rows(rows), rows.empty() ? 0 : rows.front().size()) {
  if (rows.size() != k()) throw std::invalid_argument("MixtureParams: row count differs from k");
}

MixtureParams MixtureParams::normalized(std::vector<double> w, std::vector<double> v,
                                        std::size_t param_dim) {
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  if (!(std::abs(total - 1.0) <= kRenormalizeTolerance)) {
    std::ostringstream msg;
    msg << "MixtureParams: weights sum to " << total << ", too far from 1 to renormalize";
    throw std::invalid_argument(msg.str());
  }
  for (double& x : w) x /= total;
  return MixtureParams(std::move(w), std::move(v), param_dim);
}

Permutation::Permutation(std::vector<std::size_t> sigma) : sigma_(std::move(sigma)) {
  std::vector<std::size_t> sorted = sigma_;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (sorted[i] != i) throw std::invalid_argument("Permutation: not a bijection of {0..k-1}");
  }
}

Permutation Permutation::identity(std::size_t k) {
  std::vector<std::size_t> s(k);
  std::iota(s.begin(), s.end(), std::size_t{0});
  return Permutation(std::move(s));
}

Permutation Permutation::inverse() const {
  std::vector<std::size_t> inv(sigma_.size());
  for (std::size_t i = 0; i < sigma_.size(); ++i) inv[sigma_[i]] = i;
  return Permutation(std::move(inv));
}

NeighborhoodSpec::NeighborhoodSpec(MixtureParams c, double r) : center(std::move(c)), radius(r) {
  if (!(radius > 0.0)) throw std::invalid_argument("NeighborhoodSpec: radius must be > 0");
}

ValidationReport validate(const MixtureParams& theta, const ParamDomain& domain) {
  std::ostringstream msg;
  if (theta.param_dim() != domain.dim()) {
    msg << "parameter dimension " << theta.param_dim() << " differs from family dimension "
        << domain.dim();
    return {false, msg.str()};
  }
  double total = 0.0;
  for (std::size_t i = 0; i < theta.k(); ++i) {
    const double wi = theta.weight(i);
    if (!(wi > 0.0) || !(wi < 1.0 || theta.k() == 1)) {
      msg << "weight w[" << i << "] = " << wi << " outside (0,1)";
      return {false, msg.str()};
    }
    total += wi;
  }
  if (!(std::abs(total - 1.0) <= kSimplexTolerance)) {
    msg << "weights sum " << total;
    return {false, msg.str()};
  }
  for (std::size_t i = 0; i < theta.k(); ++i) {
    if (!domain.contains(theta.row(i))) {
      msg << "v row " << i << " outside V";
      return {false, msg.str()};
    }
  }
  return {};
}

MixtureParams permute(const MixtureParams& theta, const Permutation& sigma) {
  if (sigma.size() != theta.k()) {
    throw std::invalid_argument("permute: permutation length differs from k");
  }
  const std::size_t dim = theta.param_dim();
  std::vector<double> w(theta.k());
  std::vector<double> v(theta.k() * dim);
  for (std::size_t i = 0; i < theta.k(); ++i) {
    w[i] = theta.weight(sigma[i]);
    const auto src = theta.row(sigma[i]);
    std::copy(src.begin(), src.end(), v.begin() + static_cast<std::ptrdiff_t>(i * dim));
  }
  return MixtureParams(std::move(w), std::move(v), dim);
}

namespace {

// Squared distance between component i of a and component j of b.
double pair_cost(const MixtureParams& a, std::size_t i, const MixtureParams& b, std::size_t j) {
  const double dw = a.weight(i) - b.weight(j);
  double c = dw * dw;
  const auto va = a.row(i);
  const auto vb = b.row(j);
  for (std::size_t d = 0; d < va.size(); ++d) c += (va[d] - vb[d]) * (va[d] - vb[d]);
  return c;
}

// Summing the per-component costs in sorted order makes the result independent
// of how the components are labeled, bit for bit.
double capped_root_of_sum(std::vector<double>& costs) {
  std::sort(costs.begin(), costs.end());
  double sq = 0.0;
  for (double c : costs) sq += c;
  return std::min(std::sqrt(sq), 1.0);
}

}  // namespace

double d_theta(const MixtureParams& a, const MixtureParams& b) {
  if (a.k() != b.k() || a.param_dim() != b.param_dim()) return 1.0;
  std::vector<double> costs(a.k());
  for (std::size_t i = 0; i < a.k(); ++i) costs[i] = pair_cost(a, i, b, i);
  return capped_root_of_sum(costs);
}

double min_perm_distance_exhaustive(const MixtureParams& theta, const MixtureParams& theta0) {
  if (theta.k() != theta0.k() || theta.param_dim() != theta0.param_dim()) return 1.0;
  const std::size_t k = theta0.k();
  std::vector<double> cost(k * k);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) cost[i * k + j] = pair_cost(theta, i, theta0, j);
  }
  std::vector<std::size_t> sigma(k);
  std::iota(sigma.begin(), sigma.end(), std::size_t{0});
  std::vector<double> picked(k);
  double best = 1.0;
  do {
    for (std::size_t i = 0; i < k; ++i) picked[i] = cost[i * k + sigma[i]];
    best = std::min(best, capped_root_of_sum(picked));
  } while (best > 0.0 && std::next_permutation(sigma.begin(), sigma.end()));
  return best;
}

Permutation optimal_alignment(const MixtureParams& theta, const MixtureParams& theta0) {
  if (theta.k() != theta0.k() || theta.param_dim() != theta0.param_dim()) {
    throw std::invalid_argument("optimal_alignment: dimension mismatch");
  }
  const std::size_t k = theta.k();
  std::vector<double> cost(k * k);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) cost[i * k + j] = pair_cost(theta, i, theta0, j);
  }
  return Permutation(solve_assignment(cost, k));
}

double min_perm_distance_hungarian(const MixtureParams& theta, const MixtureParams& theta0) {
  if (theta.k() != theta0.k() || theta.param_dim() != theta0.param_dim()) return 1.0;
  return d_theta(theta, permute(theta0, optimal_alignment(theta, theta0)));
}

double min_perm_distance(const MixtureParams& theta, const MixtureParams& theta0) {
  return theta0.k() <= 6 ? min_perm_distance_exhaustive(theta, theta0)
                         : min_perm_distance_hungarian(theta, theta0);
}

bool in_neighborhood(const MixtureParams& theta, const NeighborhoodSpec& nbhd) {
  if (theta.k() != nbhd.center.k() || theta.param_dim() != nbhd.center.param_dim()) return false;
  if (nbhd.radius >= 1.0) return true;
  return min_perm_distance(theta, nbhd.center) < nbhd.radius;
}

LexOrder lex_compare(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw std::invalid_argument("lex_compare: length mismatch");
  for (std::size_t d = 0; d < u.size(); ++d) {
    if (u[d] < v[d]) return LexOrder::less;
    if (u[d] > v[d]) return LexOrder::greater;
  }
  return LexOrder::equal;
}

MixtureParams collapse(const MixtureParams& theta) {
  std::vector<std::size_t> order(theta.k());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return lex_compare(theta.row(a), theta.row(b)) == LexOrder::less;
  });
  for (std::size_t i = 1; i < order.size(); ++i) {
    if (lex_compare(theta.row(order[i - 1]), theta.row(order[i])) == LexOrder::equal) {
      return theta;
    }
  }
  return permute(theta, Permutation(std::move(order)));
}

bool is_canonical(const MixtureParams& theta) {
  for (std::size_t i = 1; i < theta.k(); ++i) {
    if (lex_compare(theta.row(i - 1), theta.row(i)) != LexOrder::less) return false;
  }
  return true;
}

bool has_distinct_rows(const MixtureParams& theta) {
  for (std::size_t i = 0; i < theta.k(); ++i) {
    for (std::size_t j = i + 1; j < theta.k(); ++j) {
      if (lex_compare(theta.row(i), theta.row(j)) == LexOrder::equal) return false;
    }
  }
  return true;
}

// Shortest-augmenting-path Hungarian method with row/column potentials,
// O(n^3). Indices are 1-based internally; slot 0 is the virtual column.
std::vector<std::size_t> solve_assignment(std::span<const double> cost, std::size_t n) {
  if (cost.size() != n * n) throw std::invalid_argument("solve_assignment: cost must be n x n");
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
  for (std::size_t row = 1; row <= n; ++row) {
    match[0] = row;
    std::size_t col0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[col0] = 1;
      const std::size_t r = match[col0];
      double delta = inf;
      std::size_t col1 = 0;
      for (std::size_t c = 1; c <= n; ++c) {
        if (used[c]) continue;
        const double cur = cost[(r - 1) * n + (c - 1)] - u[r] - v[c];
        if (cur < minv[c]) {
          minv[c] = cur;
          way[c] = col0;
        }
        if (minv[c] < delta) {
          delta = minv[c];
          col1 = c;
        }
      }
      for (std::size_t c = 0; c <= n; ++c) {
        if (used[c]) {
          u[match[c]] += delta;
          v[c] -= delta;
        } else {
          minv[c] -= delta;
        }
      }
      col0 = col1;
    } while (match[col0] != 0);
    do {
      const std::size_t col1 = way[col0];
      match[col0] = match[col1];
      col0 = col1;
    } while (col0 != 0);
  }
  std::vector<std::size_t> assignment(n);
  for (std::size_t c = 1; c <= n; ++c) assignment[match[c] - 1] = c - 1;
  return assignment;
}

}  // namespace fmm
