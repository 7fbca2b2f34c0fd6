#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace tribody {

// One xi/L curve for a single system size.
struct CurvePoint {
  double T = 0.0;
  double y = 0.0;
  double err = 0.0;
};

struct Curve {
  int L = 0;
  std::vector<CurvePoint> points;  // strictly increasing T
};

enum class CrossingStatus { crossing, no_crossing, uncertain };

const char* status_name(CrossingStatus s);
CrossingStatus parse_status(const std::string& s);

struct CrossingEstimate {
  int L1 = 0, L2 = 0;  // L1 < L2
  CrossingStatus status = CrossingStatus::no_crossing;
  double T_cross = 0.0;  // NaN unless a root was located
  double err = 0.0;
  double T_lo = 0.0, T_hi = 0.0;  // fit window
  int order = 3;
  int n_points = 0;                // common temperatures inside the window
  double chi2_dof[2] = {0.0, 0.0};  // per curve, smaller L first
  double condition = 0.0;           // of the scaled design matrix
  int widenings = 0;
  double boot_failure = 0.0;  // fraction of resamples without a root in the window
  std::string note;
};

struct CrossingOptions {
  int min_points = 5;
  double max_chi2_dof = 2.0;
  double max_condition = 1e8;
  int max_widenings = 2;
  int n_boot = 400;
  double max_boot_failure = 0.1;
  std::uint64_t seed = 0x5eed;
};

/// Crossing of two xi/L curves from weighted cubic fits on their common
/// temperatures. The result does not depend on the argument order.
/// Throws InsufficientDataError with fewer than min_points common
/// temperatures and DomainError when both curves have the same L.
CrossingEstimate find_crossing(const Curve& a, const Curve& b, const CrossingOptions& opt = {});

// Penalized cubic B-spline fit on [0, 1]: minimizes
//   sum w_i (y_i - s(x_i))^2 + lambda * (scale) * |D2 a|^2
// with the penalty scaled by trace(B^T W B) / trace(D^T D) so that lambda
// is dimensionless.
class SmoothingSpline {
 public:
  SmoothingSpline(const std::vector<double>& x, const std::vector<double>& y, const std::vector<double>& w,
                  int segments, double lambda);
  double operator()(double x) const;

 private:
  int segments_;
  std::vector<double> coef_;
};

struct CollapsePoint {
  int L = 0;
  double T = 0.0, x = 0.0, y = 0.0, err = 0.0;
};

struct CollapseOptions {
  int spline_segments = 8;
  double lambda = 1e-4;
  int min_overlap_points = 3;  // per size
  int max_evaluations = 4000;
  double tolerance = 1e-9;     // simplex extent in (T_c, nu)
  double step_T = 0.02;
  double step_nu = 0.1;
  int n_boot = 100;
  std::uint64_t seed = 0xc011a75e;
};

struct CollapseResult {
  double T_c = 0.0, nu = 0.0;
  double T_c_err = 0.0, nu_err = 0.0;
  double cost = 0.0, initial_cost = 0.0;
  int evaluations = 0;
  bool converged = false;
  // Cost at T_c +- step_T and nu +- step_nu around the optimum.
  double landscape[4] = {0, 0, 0, 0};
  std::vector<CollapsePoint> points;  // every input point rescaled at the optimum
};

/// Collapse cost: mean squared normalized deviation from a smoothing spline
/// through the rescaled points x = L^(1/nu) (T - T_c) that fall inside the
/// x range shared by all sizes. Infinite when the overlap is too thin.
double collapse_cost(const std::vector<Curve>& curves, double T_c, double nu, const CollapseOptions& opt = {});

/// Nelder-Mead minimization of collapse_cost from (T_c_init, nu_init).
/// Throws InsufficientDataError with fewer than three sizes.
CollapseResult scaling_collapse(const std::vector<Curve>& curves, double T_c_init, double nu_init,
                                const CollapseOptions& opt = {});

struct BoundaryPoint {
  double p = 0.0;
  double T_c = 0.0;  // NaN when no pair crosses
  double T_c_err = 0.0;
  CrossingStatus status = CrossingStatus::no_crossing;
  int n_pairs = 0;
  int n_crossing = 0;
};

struct NuEstimate {
  double p = 0.0, nu = 0.0, err = 0.0;
  bool converged = false;
};

struct CriticalPoint {
  enum class Method { nishimori_intersection, bracket };
  Method method = Method::bracket;
  double p_c = 0.0;  // NaN for a bracket-only estimate
  double err = 0.0;
  double lo = 0.0, hi = 0.0;  // bracket; hi is NaN when nothing above lo was simulated
};

const char* method_name(CriticalPoint::Method m);

struct PhaseBoundary {
  std::vector<BoundaryPoint> points;  // sorted by p
  CriticalPoint p_c;
  std::vector<NuEstimate> nu_estimates;
  std::vector<std::string> warnings;
};

struct BoundaryOptions {
  bool drift_correction = false;  // extrapolate pair crossings linearly in 1/(L1 + L2)
  int n_boot = 1000;
  std::uint64_t seed = 0xb0da;
};

/// Per-p boundary points: pair crossings combined by inverse-variance
/// weighting. Status is crossing when every pair crosses, no-crossing when
/// the pair of largest sizes does not, uncertain otherwise.
std::vector<BoundaryPoint> boundary_points(const std::map<double, std::vector<CrossingEstimate>>& crossings,
                                           const BoundaryOptions& opt = {});

/// Throws InsufficientDataError unless at least two p values have status
/// crossing.
PhaseBoundary build_phase_boundary(const std::map<double, std::vector<CrossingEstimate>>& crossings,
                                   const BoundaryOptions& opt = {});

struct BoundaryDeviation {
  double p = 0.0;
  double deviation = 0.0;  // (T_a - T_b) / T_b
  double err = 0.0;
};

/// b is interpolated onto the crossing points of a; points of a outside b's
/// range are skipped. Throws DomainError when nothing overlaps.
std::vector<BoundaryDeviation> compare_boundaries(const PhaseBoundary& a, const PhaseBoundary& b);

// Monotone piecewise cubic Hermite interpolation (Fritsch-Carlson).
class MonotoneInterpolant {
 public:
  MonotoneInterpolant(std::vector<double> x, std::vector<double> y);
  double operator()(double x) const;
  double lo() const { return x_.front(); }
  double hi() const { return x_.back(); }

 private:
  std::vector<double> x_, y_, d_;
};

}  // namespace tribody
