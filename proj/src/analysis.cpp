#include "tribody/analysis.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>

#include "tribody/disorder.hpp"
#include "tribody/errors.hpp"
#include "tribody/rng.hpp"

namespace tribody {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kCentral = 0.6826894921370859;

class Normal {
 public:
  explicit Normal(std::uint64_t seed) : g_(seed) {}
  double operator()() {
    if (have_) {
      have_ = false;
      return spare_;
    }
    double u1 = g_.uniform();
    while (u1 <= 0.0) u1 = g_.uniform();
    const double u2 = g_.uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * M_PI * u2);
    have_ = true;
    return r * std::cos(2.0 * M_PI * u2);
  }

 private:
  Xoshiro256 g_;
  double spare_ = 0.0;
  bool have_ = false;
};

double quantile_sorted(const std::vector<double>& v, double q) {
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto i = static_cast<std::size_t>(std::floor(pos));
  const double f = pos - static_cast<double>(i);
  if (i + 1 >= v.size()) return v.back();
  return v[i] * (1.0 - f) + v[i + 1] * f;
}

double central_half_width(std::vector<double> v) {
  if (v.size() < 2) return 0.0;
  std::sort(v.begin(), v.end());
  const double a = 0.5 * (1.0 - kCentral);
  return 0.5 * (quantile_sorted(v, 1.0 - a) - quantile_sorted(v, a));
}

// The Nishimori line reaches T = 0 at p = 0.
double t_nishimori(double p) { return p == 0.0 ? 0.0 : nishimori_temperature(p); }

double sigma_of(double err, double y) { return std::max(err, 1e-12 * std::max(1.0, std::abs(y))); }

struct CubicFit {
  std::array<double, 4> c{};  // in t = (T - center) / half
  double chi2 = 0.0;
  double condition = 0.0;
  int dof = 0;
  double eval(double t) const { return c[0] + t * (c[1] + t * (c[2] + t * c[3])); }
};

CubicFit fit_cubic(const std::vector<double>& t, const std::vector<double>& y, const std::vector<double>& sigma) {
  const int n = static_cast<int>(t.size());
  Eigen::MatrixXd A(n, 4);
  Eigen::VectorXd b(n);
  for (int i = 0; i < n; ++i) {
    const double w = 1.0 / sigma[static_cast<std::size_t>(i)];
    double pw = 1.0;
    for (int k = 0; k < 4; ++k) {
      A(i, k) = w * pw;
      pw *= t[static_cast<std::size_t>(i)];
    }
    b(i) = w * y[static_cast<std::size_t>(i)];
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  CubicFit f;
  f.condition = s(3) > 0 ? s(0) / s(3) : kInf;
  const Eigen::VectorXd c = svd.solve(b);
  for (int k = 0; k < 4; ++k) f.c[static_cast<std::size_t>(k)] = c(k);
  const Eigen::VectorXd r = A * c - b;
  f.chi2 = r.squaredNorm();
  f.dof = n - 4;
  return f;
}

struct PairData {
  std::vector<double> T, y1, y2, s1, s2;
};

// Real roots of a cubic on [-1, 1] by scanning and bisection.
std::vector<double> roots_in_unit(const std::array<double, 4>& c) {
  auto f = [&](double t) { return c[0] + t * (c[1] + t * (c[2] + t * c[3])); };
  std::vector<double> roots;
  constexpr int kScan = 512;
  double a = -1.0, fa = f(a);
  for (int i = 1; i <= kScan; ++i) {
    const double b = -1.0 + 2.0 * i / kScan;
    const double fb = f(b);
    if (fa == 0.0) {
      roots.push_back(a);
    } else if (fa * fb < 0.0) {
      double lo = a, hi = b, flo = fa;
      for (int it = 0; it < 80; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double fm = f(mid);
        if (fm == 0.0) {
          lo = hi = mid;
          break;
        }
        if ((fm < 0) == (flo < 0)) {
          lo = mid;
          flo = fm;
        } else {
          hi = mid;
        }
      }
      roots.push_back(0.5 * (lo + hi));
    }
    a = b;
    fa = fb;
  }
  if (fa == 0.0) roots.push_back(1.0);
  return roots;
}

struct WindowFit {
  int lo = 0, hi = 0;
  double center = 0.0, half = 1.0;
  CubicFit f1, f2;
};

WindowFit fit_window(const PairData& d, int lo, int hi) {
  WindowFit w;
  w.lo = lo;
  w.hi = hi;
  const auto ulo = static_cast<std::size_t>(lo), uhi = static_cast<std::size_t>(hi);
  w.center = 0.5 * (d.T[ulo] + d.T[uhi]);
  w.half = 0.5 * (d.T[uhi] - d.T[ulo]);
  std::vector<double> t, y1, y2, s1, s2;
  for (std::size_t i = ulo; i <= uhi; ++i) {
    t.push_back((d.T[i] - w.center) / w.half);
    y1.push_back(d.y1[i]);
    y2.push_back(d.y2[i]);
    s1.push_back(d.s1[i]);
    s2.push_back(d.s2[i]);
  }
  w.f1 = fit_cubic(t, y1, s1);
  w.f2 = fit_cubic(t, y2, s2);
  return w;
}

double chi2_dof(const CubicFit& f) { return f.dof > 0 ? f.chi2 / f.dof : 0.0; }

// Root of the fitted difference nearest to `target` (in T), or NaN.
double nearest_root(const CubicFit& f1, const CubicFit& f2, double center, double half, double target) {
  std::array<double, 4> c{};
  for (std::size_t k = 0; k < 4; ++k) c[k] = f1.c[k] - f2.c[k];
  double best = kNaN, dist = kInf;
  for (double t : roots_in_unit(c)) {
    const double T = center + half * t;
    if (std::abs(T - target) < dist) {
      dist = std::abs(T - target);
      best = T;
    }
  }
  return best;
}

}  // namespace

const char* status_name(CrossingStatus s) {
  switch (s) {
    case CrossingStatus::crossing:
      return "crossing";
    case CrossingStatus::no_crossing:
      return "no-crossing";
    case CrossingStatus::uncertain:
      return "uncertain";
  }
  return "?";
}

CrossingStatus parse_status(const std::string& s) {
  if (s == "crossing") return CrossingStatus::crossing;
  if (s == "no-crossing") return CrossingStatus::no_crossing;
  if (s == "uncertain") return CrossingStatus::uncertain;
  throw DomainError("unknown crossing status '" + s + "'");
}

CrossingEstimate find_crossing(const Curve& a_in, const Curve& b_in, const CrossingOptions& opt) {
  if (a_in.L == b_in.L) throw DomainError("find_crossing needs two different system sizes");
  const Curve& a = a_in.L < b_in.L ? a_in : b_in;
  const Curve& b = a_in.L < b_in.L ? b_in : a_in;

  PairData d;
  for (const auto& pa : a.points) {
    for (const auto& pb : b.points) {
      if (std::abs(pa.T - pb.T) <= 1e-9 * std::max(1.0, std::abs(pa.T))) {
        d.T.push_back(pa.T);
        d.y1.push_back(pa.y);
        d.y2.push_back(pb.y);
        d.s1.push_back(sigma_of(pa.err, pa.y));
        d.s2.push_back(sigma_of(pb.err, pb.y));
        break;
      }
    }
  }
  const int n = static_cast<int>(d.T.size());
  if (n < opt.min_points)
    throw InsufficientDataError("curves L=" + std::to_string(a.L) + " and L=" + std::to_string(b.L) + " share " +
                                std::to_string(n) + " temperatures, need " + std::to_string(opt.min_points));

  CrossingEstimate est;
  est.L1 = a.L;
  est.L2 = b.L;
  est.T_cross = kNaN;
  est.err = kNaN;
  est.T_lo = d.T.front();
  est.T_hi = d.T.back();
  est.n_points = n;

  // Most decisive sign change of the raw difference.
  int bracket = -1;
  double best_jump = -1.0;
  for (int i = 0; i + 1 < n; ++i) {
    const auto u = static_cast<std::size_t>(i);
    const double d0 = d.y1[u] - d.y2[u], d1 = d.y1[u + 1] - d.y2[u + 1];
    if (!(d0 * d1 < 0.0 || (d0 == 0.0 && d1 != 0.0))) continue;
    const double jump = std::abs(d1 - d0) / std::hypot(std::hypot(d.s1[u], d.s2[u]), std::hypot(d.s1[u + 1], d.s2[u + 1]));
    if (jump > best_jump) {
      best_jump = jump;
      bracket = i;
    }
  }
  if (bracket < 0) {
    est.status = CrossingStatus::no_crossing;
    est.note = "difference has no sign change";
    return est;
  }
  const auto ub = static_cast<std::size_t>(bracket);
  const double d0 = d.y1[ub] - d.y2[ub], d1 = d.y1[ub + 1] - d.y2[ub + 1];
  const double raw = d.T[ub] + (d.T[ub + 1] - d.T[ub]) * d0 / (d0 - d1);

  // Widest window around the sign change whose fits pass the chi^2 bound.
  std::optional<WindowFit> chosen;
  for (int width = n; width >= opt.min_points && !chosen; --width) {
    double best_off = kInf;
    for (int lo = std::max(0, bracket + 2 - width); lo <= bracket && lo + width - 1 < n; ++lo) {
      const int hi = lo + width - 1;
      if (hi < bracket + 1) continue;
      WindowFit w = fit_window(d, lo, hi);
      if (chi2_dof(w.f1) > opt.max_chi2_dof || chi2_dof(w.f2) > opt.max_chi2_dof) continue;
      const double off = std::abs(0.5 * (lo + hi) - (bracket + 0.5));
      if (off < best_off) {
        best_off = off;
        chosen = w;
      }
    }
  }
  bool uncertain = false;
  if (!chosen) {
    int lo = std::max(0, bracket - (opt.min_points - 2) / 2);
    lo = std::min(lo, n - opt.min_points);
    chosen = fit_window(d, lo, lo + opt.min_points - 1);
    uncertain = true;
    est.note = "no window satisfies the chi2/dof bound";
  }
  WindowFit w = *chosen;
  while (std::max(w.f1.condition, w.f2.condition) > opt.max_condition) {
    if (est.widenings >= opt.max_widenings || (w.lo == 0 && w.hi == n - 1)) {
      uncertain = true;
      est.note = "ill-conditioned fit";
      break;
    }
    ++est.widenings;
    w = fit_window(d, std::max(0, w.lo - 1), std::min(n - 1, w.hi + 1));
  }

  est.T_lo = d.T[static_cast<std::size_t>(w.lo)];
  est.T_hi = d.T[static_cast<std::size_t>(w.hi)];
  est.n_points = w.hi - w.lo + 1;
  est.chi2_dof[0] = chi2_dof(w.f1);
  est.chi2_dof[1] = chi2_dof(w.f2);
  est.condition = std::max(w.f1.condition, w.f2.condition);

  double T = nearest_root(w.f1, w.f2, w.center, w.half, raw);
  if (std::isnan(T)) {
    uncertain = true;
    est.note = "fitted difference has no root in the window";
    T = raw;
  }
  est.T_cross = T;

  // Parametric resampling of both curves from their error bars.
  Normal z(derive_seed({opt.seed, static_cast<std::uint64_t>(a.L), static_cast<std::uint64_t>(b.L)}));
  PairData r = d;
  std::vector<double> roots;
  int failures = 0;
  for (int k = 0; k < opt.n_boot; ++k) {
    for (int i = w.lo; i <= w.hi; ++i) {
      const auto u = static_cast<std::size_t>(i);
      r.y1[u] = d.y1[u] + d.s1[u] * z();
      r.y2[u] = d.y2[u] + d.s2[u] * z();
    }
    const WindowFit rw = fit_window(r, w.lo, w.hi);
    const double rt = nearest_root(rw.f1, rw.f2, rw.center, rw.half, T);
    if (std::isnan(rt))
      ++failures;
    else
      roots.push_back(rt);
  }
  est.boot_failure = opt.n_boot > 0 ? static_cast<double>(failures) / opt.n_boot : 0.0;
  est.err = std::max(central_half_width(roots), 1e-12 * (est.T_hi - est.T_lo));
  if (est.boot_failure > opt.max_boot_failure) {
    uncertain = true;
    if (est.note.empty()) est.note = "crossing not resolved under resampling";
  }
  est.status = uncertain ? CrossingStatus::uncertain : CrossingStatus::crossing;
  return est;
}

SmoothingSpline::SmoothingSpline(const std::vector<double>& x, const std::vector<double>& y,
                                 const std::vector<double>& w, int segments, double lambda)
    : segments_(segments) {
  const int nb = segments + 3;
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(nb, nb);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(nb);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double s = std::clamp(x[i], 0.0, 1.0) * segments;
    const int j = std::min(static_cast<int>(s), segments - 1);
    const double u = s - j;
    const double b[4] = {(1 - u) * (1 - u) * (1 - u) / 6, (3 * u * u * u - 6 * u * u + 4) / 6,
                         (-3 * u * u * u + 3 * u * u + 3 * u + 1) / 6, u * u * u / 6};
    for (int p = 0; p < 4; ++p) {
      rhs(j + p) += w[i] * b[p] * y[i];
      for (int q = 0; q < 4; ++q) M(j + p, j + q) += w[i] * b[p] * b[q];
    }
  }
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(nb - 2, nb);
  for (int r = 0; r < nb - 2; ++r) {
    D(r, r) = 1;
    D(r, r + 1) = -2;
    D(r, r + 2) = 1;
  }
  const Eigen::MatrixXd P = D.transpose() * D;
  const double scale = M.trace() / P.trace();
  M += lambda * scale * P;
  const Eigen::VectorXd c = M.ldlt().solve(rhs);
  coef_.assign(c.data(), c.data() + nb);
}

double SmoothingSpline::operator()(double x) const {
  const double s = std::clamp(x, 0.0, 1.0) * segments_;
  const int j = std::min(static_cast<int>(s), segments_ - 1);
  const double u = s - j;
  const auto J = static_cast<std::size_t>(j);
  return coef_[J] * (1 - u) * (1 - u) * (1 - u) / 6 + coef_[J + 1] * (3 * u * u * u - 6 * u * u + 4) / 6 +
         coef_[J + 2] * (-3 * u * u * u + 3 * u * u + 3 * u + 1) / 6 + coef_[J + 3] * u * u * u / 6;
}

double collapse_cost(const std::vector<Curve>& curves, double T_c, double nu, const CollapseOptions& opt) {
  if (!(nu > 0.0) || !std::isfinite(nu) || !std::isfinite(T_c)) return kInf;
  double ov_lo = -kInf, ov_hi = kInf;
  for (const auto& c : curves) {
    if (c.points.empty()) return kInf;
    const double s = std::pow(static_cast<double>(c.L), 1.0 / nu);
    ov_lo = std::max(ov_lo, s * (c.points.front().T - T_c));
    ov_hi = std::min(ov_hi, s * (c.points.back().T - T_c));
  }
  if (!(ov_hi > ov_lo)) return kInf;
  std::vector<double> x, y, w;
  for (const auto& c : curves) {
    const double s = std::pow(static_cast<double>(c.L), 1.0 / nu);
    int inside = 0;
    for (const auto& p : c.points) {
      const double xi = s * (p.T - T_c);
      if (xi < ov_lo || xi > ov_hi) continue;
      ++inside;
      x.push_back((xi - ov_lo) / (ov_hi - ov_lo));
      y.push_back(p.y);
      const double sg = sigma_of(p.err, p.y);
      w.push_back(1.0 / (sg * sg));
    }
    if (inside < opt.min_overlap_points) return kInf;
  }
  const SmoothingSpline sp(x, y, w, opt.spline_segments, opt.lambda);
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - sp(x[i]);
    sum += w[i] * r * r;
  }
  const double cost = sum / static_cast<double>(x.size());
  return std::isfinite(cost) ? cost : kInf;
}

namespace {

struct Simplex {
  double T_c, nu, cost;
  int evaluations;
  bool converged;
};

Simplex nelder_mead(const std::vector<Curve>& curves, double T0, double nu0, double sT, double snu,
                    const CollapseOptions& opt, int budget) {
  using P = std::array<double, 2>;
  int evals = 0;
  auto f = [&](const P& p) {
    ++evals;
    return collapse_cost(curves, p[0], p[1], opt);
  };
  std::array<P, 3> v{P{T0, nu0}, P{T0 + sT, nu0}, P{T0, nu0 + snu}};
  std::array<double, 3> fv{f(v[0]), f(v[1]), f(v[2])};
  bool converged = false;
  int restarts = 0;
  while (evals < budget) {
    std::array<int, 3> idx{0, 1, 2};
    std::sort(idx.begin(), idx.end(), [&](int i, int j) {
      return fv[static_cast<std::size_t>(i)] < fv[static_cast<std::size_t>(j)];
    });
    std::array<P, 3> sv;
    std::array<double, 3> sf;
    for (std::size_t k = 0; k < 3; ++k) {
      sv[k] = v[static_cast<std::size_t>(idx[k])];
      sf[k] = fv[static_cast<std::size_t>(idx[k])];
    }
    v = sv;
    fv = sf;
    double extent = 0.0;
    for (std::size_t k = 1; k < 3; ++k)
      extent = std::max({extent, std::abs(v[k][0] - v[0][0]), std::abs(v[k][1] - v[0][1])});
    if (extent < opt.tolerance) {
      // One restart around the best vertex guards against a collapsed simplex.
      if (restarts == 0 && std::isfinite(fv[0])) {
        ++restarts;
        v[1] = P{v[0][0] + 0.1 * sT, v[0][1]};
        v[2] = P{v[0][0], v[0][1] + 0.1 * snu};
        fv[1] = f(v[1]);
        fv[2] = f(v[2]);
        continue;
      }
      converged = true;
      break;
    }
    const P c{0.5 * (v[0][0] + v[1][0]), 0.5 * (v[0][1] + v[1][1])};
    auto along = [&](double t) { return P{c[0] + t * (v[2][0] - c[0]), c[1] + t * (v[2][1] - c[1])}; };
    const P xr = along(-1.0);
    const double fr = f(xr);
    if (fr < fv[0]) {
      const P xe = along(-2.0);
      const double fe = f(xe);
      if (fe < fr) {
        v[2] = xe;
        fv[2] = fe;
      } else {
        v[2] = xr;
        fv[2] = fr;
      }
    } else if (fr < fv[1]) {
      v[2] = xr;
      fv[2] = fr;
    } else {
      const bool outside = fr < fv[2];
      const P xc = along(outside ? -0.5 : 0.5);
      const double fc = f(xc);
      if (fc < (outside ? fr : fv[2])) {
        v[2] = xc;
        fv[2] = fc;
      } else {
        for (std::size_t k = 1; k < 3; ++k) {
          v[k] = P{v[0][0] + 0.5 * (v[k][0] - v[0][0]), v[0][1] + 0.5 * (v[k][1] - v[0][1])};
          fv[k] = f(v[k]);
        }
      }
    }
  }
  std::size_t best = 0;
  for (std::size_t k = 1; k < 3; ++k)
    if (fv[k] < fv[best]) best = k;
  return {v[best][0], v[best][1], fv[best], evals, converged};
}

}  // namespace

CollapseResult scaling_collapse(const std::vector<Curve>& curves, double T_c_init, double nu_init,
                                const CollapseOptions& opt) {
  if (curves.size() < 3) throw InsufficientDataError("scaling collapse needs at least three system sizes");
  CollapseResult res;
  res.initial_cost = collapse_cost(curves, T_c_init, nu_init, opt);
  const Simplex s = nelder_mead(curves, T_c_init, nu_init, opt.step_T, opt.step_nu, opt, opt.max_evaluations);
  res.T_c = s.T_c;
  res.nu = s.nu;
  res.cost = s.cost;
  res.evaluations = s.evaluations;
  res.converged = s.converged;
  res.landscape[0] = collapse_cost(curves, s.T_c - opt.step_T, s.nu, opt);
  res.landscape[1] = collapse_cost(curves, s.T_c + opt.step_T, s.nu, opt);
  res.landscape[2] = collapse_cost(curves, s.T_c, s.nu - opt.step_nu, opt);
  res.landscape[3] = collapse_cost(curves, s.T_c, s.nu + opt.step_nu, opt);

  std::uint64_t h = opt.seed;
  for (const auto& c : curves) h = derive_seed({h, static_cast<std::uint64_t>(c.L), c.points.size()});
  Normal z(h);
  std::vector<double> tcs, nus;
  std::vector<Curve> r = curves;
  for (int k = 0; k < opt.n_boot; ++k) {
    for (std::size_t c = 0; c < curves.size(); ++c)
      for (std::size_t i = 0; i < curves[c].points.size(); ++i) {
        const auto& p = curves[c].points[i];
        r[c].points[i].y = p.y + sigma_of(p.err, p.y) * z();
      }
    const Simplex b = nelder_mead(r, s.T_c, s.nu, 0.25 * opt.step_T, 0.25 * opt.step_nu, opt, opt.max_evaluations / 4);
    if (std::isfinite(b.cost)) {
      tcs.push_back(b.T_c);
      nus.push_back(b.nu);
    }
  }
  res.T_c_err = central_half_width(tcs);
  res.nu_err = central_half_width(nus);

  for (const auto& c : curves) {
    const double sc = std::pow(static_cast<double>(c.L), 1.0 / res.nu);
    for (const auto& p : c.points) res.points.push_back({c.L, p.T, sc * (p.T - res.T_c), p.y, p.err});
  }
  return res;
}

const char* method_name(CriticalPoint::Method m) {
  return m == CriticalPoint::Method::nishimori_intersection ? "nishimori-intersection" : "bracket";
}

MonotoneInterpolant::MonotoneInterpolant(std::vector<double> x, std::vector<double> y)
    : x_(std::move(x)), y_(std::move(y)) {
  const std::size_t n = x_.size();
  if (n < 2 || y_.size() != n) throw InsufficientDataError("interpolation needs at least two nodes");
  for (std::size_t i = 1; i < n; ++i)
    if (!(x_[i] > x_[i - 1])) throw DomainError("interpolation nodes must be strictly increasing");
  std::vector<double> delta(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) delta[i] = (y_[i + 1] - y_[i]) / (x_[i + 1] - x_[i]);
  d_.assign(n, 0.0);
  d_[0] = delta[0];
  d_[n - 1] = delta[n - 2];
  for (std::size_t i = 1; i + 1 < n; ++i) d_[i] = delta[i - 1] * delta[i] > 0 ? 0.5 * (delta[i - 1] + delta[i]) : 0.0;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    if (delta[i] == 0.0) {
      d_[i] = d_[i + 1] = 0.0;
      continue;
    }
    const double a = d_[i] / delta[i], b = d_[i + 1] / delta[i];
    const double r = a * a + b * b;
    if (r > 9.0) {
      const double t = 3.0 / std::sqrt(r);
      d_[i] = t * a * delta[i];
      d_[i + 1] = t * b * delta[i];
    }
  }
}

double MonotoneInterpolant::operator()(double x) const {
  if (x <= x_.front()) return y_.front() + d_.front() * (x - x_.front());
  if (x >= x_.back()) return y_.back() + d_.back() * (x - x_.back());
  const auto it = std::upper_bound(x_.begin(), x_.end(), x);
  const auto i = static_cast<std::size_t>(it - x_.begin()) - 1;
  if (x == x_[i]) return y_[i];
  const double h = x_[i + 1] - x_[i];
  const double t = (x - x_[i]) / h;
  const double h00 = (1 + 2 * t) * (1 - t) * (1 - t), h10 = t * (1 - t) * (1 - t);
  const double h01 = t * t * (3 - 2 * t), h11 = t * t * (t - 1);
  return h00 * y_[i] + h10 * h * d_[i] + h01 * y_[i + 1] + h11 * h * d_[i + 1];
}

namespace {

struct Combined {
  double T = kNaN, err = kNaN;
};

Combined combine(const std::vector<const CrossingEstimate*>& xs, bool drift) {
  Combined c;
  if (xs.empty()) return c;
  if (drift && xs.size() >= 2) {
    // Weighted line T = a + b / (L1 + L2); T_c = a.
    double S = 0, Sx = 0, Sy = 0, Sxx = 0, Sxy = 0;
    for (const auto* e : xs) {
      const double w = 1.0 / (e->err * e->err), x = 1.0 / (e->L1 + e->L2);
      S += w;
      Sx += w * x;
      Sy += w * e->T_cross;
      Sxx += w * x * x;
      Sxy += w * x * e->T_cross;
    }
    const double det = S * Sxx - Sx * Sx;
    if (det > 1e-12 * S * Sxx) {
      c.T = (Sxx * Sy - Sx * Sxy) / det;
      c.err = std::sqrt(Sxx / det);
      return c;
    }
  }
  double sw = 0, swy = 0;
  for (const auto* e : xs) {
    const double w = 1.0 / (e->err * e->err);
    sw += w;
    swy += w * e->T_cross;
  }
  c.T = swy / sw;
  c.err = 1.0 / std::sqrt(sw);
  if (xs.size() >= 2) {
    double chi2 = 0;
    for (const auto* e : xs) chi2 += (e->T_cross - c.T) * (e->T_cross - c.T) / (e->err * e->err);
    const double scale = chi2 / static_cast<double>(xs.size() - 1);
    if (scale > 1.0) c.err *= std::sqrt(scale);
  }
  return c;
}

// First root of boundary(p) - T_N(p) between consecutive nodes, or NaN.
double nishimori_root(const std::vector<double>& p, const std::vector<double>& T, int* interval) {
  const MonotoneInterpolant f(p, T);
  auto g = [&](double x) { return f(x) - t_nishimori(x); };
  for (std::size_t i = 0; i + 1 < p.size(); ++i) {
    double lo = p[i], hi = p[i + 1];
    double glo = g(lo);
    const double ghi = g(hi);
    if (glo > 0 && ghi <= 0) {
      for (int it = 0; it < 100; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double gm = g(mid);
        if (gm > 0) {
          lo = mid;
          glo = gm;
        } else {
          hi = mid;
        }
      }
      if (interval) *interval = static_cast<int>(i);
      return 0.5 * (lo + hi);
    }
  }
  return kNaN;
}

}  // namespace

std::vector<BoundaryPoint> boundary_points(const std::map<double, std::vector<CrossingEstimate>>& crossings,
                                           const BoundaryOptions& opt) {
  std::vector<BoundaryPoint> points;
  for (const auto& [p, list] : crossings) {
    if (list.empty()) continue;
    BoundaryPoint bp;
    bp.p = p;
    bp.n_pairs = static_cast<int>(list.size());
    std::vector<const CrossingEstimate*> good;
    const CrossingEstimate* largest = &list.front();
    for (const auto& e : list) {
      if (e.status == CrossingStatus::crossing) good.push_back(&e);
      if (std::make_pair(e.L2, e.L1) > std::make_pair(largest->L2, largest->L1)) largest = &e;
    }
    bp.n_crossing = static_cast<int>(good.size());
    if (bp.n_crossing == bp.n_pairs)
      bp.status = CrossingStatus::crossing;
    else if (largest->status == CrossingStatus::no_crossing)
      bp.status = CrossingStatus::no_crossing;
    else
      bp.status = CrossingStatus::uncertain;
    const Combined c = combine(good, opt.drift_correction);
    bp.T_c = c.T;
    bp.T_c_err = c.err;
    points.push_back(bp);
  }
  return points;
}

PhaseBoundary build_phase_boundary(const std::map<double, std::vector<CrossingEstimate>>& crossings,
                                   const BoundaryOptions& opt) {
  PhaseBoundary pb;
  pb.points = boundary_points(crossings, opt);

  std::vector<double> cp, cT, ce;
  for (const auto& bp : pb.points)
    if (bp.status == CrossingStatus::crossing) {
      cp.push_back(bp.p);
      cT.push_back(bp.T_c);
      ce.push_back(bp.T_c_err);
    }
  if (cp.size() < 2)
    throw InsufficientDataError("phase boundary needs at least two p values with crossings, got " +
                                std::to_string(cp.size()));

  for (std::size_t i = 0; i + 1 < cp.size(); ++i)
    if (cT[i + 1] - cT[i] > 2.0 * std::hypot(ce[i], ce[i + 1]))
      pb.warnings.push_back("T_c increases between p=" + std::to_string(cp[i]) + " and p=" + std::to_string(cp[i + 1]) +
                            " beyond error bars");

  CriticalPoint& pc = pb.p_c;
  int interval = -1;
  const double root = nishimori_root(cp, cT, &interval);
  if (!std::isnan(root)) {
    pc.method = CriticalPoint::Method::nishimori_intersection;
    pc.p_c = root;
    pc.lo = cp[static_cast<std::size_t>(interval)];
    pc.hi = cp[static_cast<std::size_t>(interval) + 1];
    Normal z(derive_seed({opt.seed, cp.size()}));
    std::vector<double> roots, T(cT.size());
    for (int k = 0; k < opt.n_boot; ++k) {
      for (std::size_t i = 0; i < T.size(); ++i) T[i] = cT[i] + ce[i] * z();
      const double r = nishimori_root(cp, T, nullptr);
      if (!std::isnan(r)) roots.push_back(r);
    }
    pc.err = central_half_width(roots);
    return pb;
  }

  pc.method = CriticalPoint::Method::bracket;
  if (cT.front() <= t_nishimori(cp.front())) {
    pb.warnings.push_back("boundary starts below the Nishimori line");
    pc.lo = 0.0;
    pc.hi = cp.front();
  } else {
    pc.lo = cp.back();
    pc.hi = kNaN;
    for (const auto& bp : pb.points)
      if (bp.p > pc.lo && bp.status != CrossingStatus::crossing) {
        pc.hi = bp.p;
        break;
      }
  }
  pc.p_c = std::isnan(pc.hi) ? kNaN : 0.5 * (pc.lo + pc.hi);
  pc.err = std::isnan(pc.hi) ? kNaN : 0.5 * (pc.hi - pc.lo);
  return pb;
}

std::vector<BoundaryDeviation> compare_boundaries(const PhaseBoundary& a, const PhaseBoundary& b) {
  std::vector<double> bp, bT, be;
  for (const auto& pt : b.points)
    if (pt.status == CrossingStatus::crossing) {
      bp.push_back(pt.p);
      bT.push_back(pt.T_c);
      be.push_back(pt.T_c_err);
    }
  if (bp.empty()) throw DomainError("reference boundary has no crossing points");
  std::optional<MonotoneInterpolant> f;
  if (bp.size() >= 2) f.emplace(bp, bT);
  std::vector<BoundaryDeviation> out;
  for (const auto& pt : a.points) {
    if (pt.status != CrossingStatus::crossing) continue;
    if (pt.p < bp.front() || pt.p > bp.back()) continue;
    double Tb, eb;
    const auto it = std::lower_bound(bp.begin(), bp.end(), pt.p);
    const auto i = static_cast<std::size_t>(it - bp.begin());
    if (it != bp.end() && *it == pt.p) {
      Tb = bT[i];
      eb = be[i];
    } else {
      Tb = (*f)(pt.p);
      const double t = (pt.p - bp[i - 1]) / (bp[i] - bp[i - 1]);
      eb = (1 - t) * be[i - 1] + t * be[i];
    }
    BoundaryDeviation d;
    d.p = pt.p;
    d.deviation = (pt.T_c - Tb) / Tb;
    d.err = std::abs(pt.T_c / Tb) * std::hypot(pt.T_c_err / pt.T_c, eb / Tb);
    out.push_back(d);
  }
  if (out.empty()) throw DomainError("boundaries have disjoint p ranges");
  return out;
}

}  // namespace tribody
