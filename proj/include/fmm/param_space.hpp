#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fmm {

inline constexpr double kSimplexTolerance = 1e-12;
inline constexpr double kRenormalizeTolerance = 1e-9;

/// Interval constraint on one coordinate of a parameter vector. Bounds are
/// open unless the matching `closed` flag is set; infinite bounds are allowed.
struct CoordinateInterval {
  double lower;
  double upper;
  bool lower_closed = false;
  bool upper_closed = false;

  bool contains(double x) const;
};

/// The parameter set V as a conjunction of per-coordinate intervals.
struct ParamDomain {
  std::vector<CoordinateInterval> coords;

  std::size_t dim() const { return coords.size(); }
  bool contains(std::span<const double> v) const;
};

/// A point of the disjoint-union space: k weights and a k x D parameter
/// matrix, row-major. The plain constructor only checks shapes; use
/// `normalized` when the weights come from arithmetic that may drift off the
/// simplex, and `validate` to check the full set of invariants.
class MixtureParams {
 public:
  MixtureParams(std::vector<double> w, std::vector<double> v, std::size_t param_dim);
  MixtureParams(std::vector<double> w, const std::vector<std::vector<double>>& rows);

  /// Rescales w by its sum when |sum - 1| <= 1e-9; throws otherwise.
  static MixtureParams normalized(std::vector<double> w, std::vector<double> v,
                                  std::size_t param_dim);

  std::size_t k() const { return w_.size(); }
  std::size_t param_dim() const { return dim_; }
  std::span<const double> weights() const { return w_; }
  double weight(std::size_t i) const { return w_[i]; }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(v_).subspan(i * dim_, dim_);
  }
  std::span<const double> params() const { return v_; }

  bool operator==(const MixtureParams&) const = default;

 private:
  std::vector<double> w_;
  std::vector<double> v_;
  std::size_t dim_;
};

/// Bijection of {0..k-1}; sigma[i] names the source component placed at slot i.
class Permutation {
 public:
  explicit Permutation(std::vector<std::size_t> sigma);
  static Permutation identity(std::size_t k);

  std::size_t size() const { return sigma_.size(); }
  std::size_t operator[](std::size_t i) const { return sigma_[i]; }
  std::span<const std::size_t> indices() const { return sigma_; }
  Permutation inverse() const;

 private:
  std::vector<std::size_t> sigma_;
};

struct NeighborhoodSpec {
  MixtureParams center;
  double radius;

  NeighborhoodSpec(MixtureParams c, double r);
};

struct ValidationReport {
  bool ok = true;
  std::string violation;

  explicit operator bool() const { return ok; }
};

ValidationReport validate(const MixtureParams& theta, const ParamDomain& domain);

/// theta[sigma] = (w_sigma, v_sigma). Throws std::invalid_argument on size mismatch.
MixtureParams permute(const MixtureParams& theta, const Permutation& sigma);

/// Capped Euclidean distance on the concatenated (w, v) vector; 1 across k.
double d_theta(const MixtureParams& a, const MixtureParams& b);

/// min over sigma of d_theta(theta, theta0[sigma]). Exhaustive for k <= 6,
/// Hungarian assignment above that.
double min_perm_distance(const MixtureParams& theta, const MixtureParams& theta0);
double min_perm_distance_exhaustive(const MixtureParams& theta, const MixtureParams& theta0);
double min_perm_distance_hungarian(const MixtureParams& theta, const MixtureParams& theta0);

/// Optimal sigma for min_perm_distance via the Hungarian method on the
/// squared-distance cost matrix. Requires equal k and param_dim.
Permutation optimal_alignment(const MixtureParams& theta, const MixtureParams& theta0);

/// Membership in the permutation-closed ball around the center. The ball is
/// restricted to components of the center's k; a radius >= 1 covers that
/// whole stratum (the metric is capped at 1).
bool in_neighborhood(const MixtureParams& theta, const NeighborhoodSpec& nbhd);

enum class LexOrder { less, equal, greater };

LexOrder lex_compare(std::span<const double> u, std::span<const double> v);

/// Relabels theta so rows are strictly increasing in dictionary order; returns
/// theta unchanged when two rows tie.
MixtureParams collapse(const MixtureParams& theta);

bool is_canonical(const MixtureParams& theta);

bool has_distinct_rows(const MixtureParams& theta);

/// Solves the square assignment problem min_sigma sum_i cost[i][sigma[i]].
/// `cost` is row-major n x n.
std::vector<std::size_t> solve_assignment(std::span<const double> cost, std::size_t n);

}  // namespace fmm
