#include "doctest.h"

#include <cmath>
#include <cstring>
#include <random>

#include "tribody/analysis.hpp"
#include "tribody/errors.hpp"

using namespace tribody;

namespace {

constexpr double kTstar = 2.2692;

Curve fixture(int L, double nu, double err, double t0 = 2.2, double t1 = 2.35, int n = 31, std::uint64_t noise = 0) {
  Curve c;
  c.L = L;
  std::mt19937_64 g(noise + static_cast<std::uint64_t>(L));
  std::normal_distribution<double> z;
  for (int i = 0; i < n; ++i) {
    const double T = t0 + (t1 - t0) * i / (n - 1);
    const double x = std::pow(L, 1.0 / nu) * (T - kTstar);
    double y = 0.6 - 0.3 * std::tanh(0.5 * x);
    if (noise) y += err * z(g);
    c.points.push_back({T, y, err});
  }
  return c;
}

CrossingEstimate pair(int l1, int l2, CrossingStatus s, double T, double err) {
  CrossingEstimate e;
  e.L1 = l1;
  e.L2 = l2;
  e.status = s;
  e.T_cross = T;
  e.err = err;
  return e;
}

std::vector<CrossingEstimate> all_cross(double T, double err) {
  return {pair(12, 18, CrossingStatus::crossing, T, err), pair(12, 24, CrossingStatus::crossing, T, err),
          pair(18, 24, CrossingStatus::crossing, T, err)};
}

double tn(double p) { return p == 0.0 ? 0.0 : 2.0 / std::log((1 - p) / p); }

}  // namespace

TEST_CASE("crossing of exact scaling curves") {
  for (double nu : {0.75, 1.0}) {
    const auto a = fixture(12, nu, 1e-3), b = fixture(24, nu, 1e-3);
    const auto e = find_crossing(a, b);
    CHECK(e.status == CrossingStatus::crossing);
    CHECK(std::abs(e.T_cross - kTstar) < 1e-3);
    CHECK(e.T_lo <= e.T_cross);
    CHECK(e.T_hi >= e.T_cross);
    CHECK(e.n_points >= 5);
    CHECK(e.err > 0);
    CHECK(e.L1 == 12);
    CHECK(e.L2 == 24);
  }
}

TEST_CASE("crossing with noisy data stays within its error") {
  const auto a = fixture(12, 1.0, 2e-3, 2.2, 2.35, 31, 91), b = fixture(18, 1.0, 2e-3, 2.2, 2.35, 31, 92);
  const auto e = find_crossing(a, b);
  REQUIRE(e.status != CrossingStatus::no_crossing);
  CHECK(std::abs(e.T_cross - kTstar) < 4 * e.err + 1e-3);
}

TEST_CASE("crossing does not depend on argument order") {
  const auto a = fixture(12, 1.0, 2e-3, 2.2, 2.35, 31, 5), b = fixture(18, 1.0, 2e-3, 2.2, 2.35, 31, 6);
  const auto x = find_crossing(a, b), y = find_crossing(b, a);
  CHECK(std::memcmp(&x.T_cross, &y.T_cross, sizeof(double)) == 0);
  CHECK(std::memcmp(&x.err, &y.err, sizeof(double)) == 0);
  CHECK(x.status == y.status);
  CHECK(x.L1 == y.L1);
  CHECK(x.T_lo == y.T_lo);
}

TEST_CASE("separated curves have no crossing") {
  auto a = fixture(12, 1.0, 1e-3);
  auto b = fixture(24, 1.0, 1e-3);
  for (auto& pt : b.points) pt.y = a.points[&pt - b.points.data()].y + 0.05;
  const auto e = find_crossing(a, b);
  CHECK(e.status == CrossingStatus::no_crossing);
  CHECK(std::isnan(e.T_cross));
}

TEST_CASE("crossing input errors") {
  const auto a = fixture(12, 1.0, 1e-3, 2.2, 2.35, 4), b = fixture(18, 1.0, 1e-3, 2.2, 2.35, 4);
  CHECK_THROWS_AS(find_crossing(a, b), InsufficientDataError);
  CHECK_THROWS_AS(find_crossing(fixture(12, 1.0, 1e-3), fixture(12, 1.0, 1e-3)), DomainError);
  // disjoint temperature grids share no point
  CHECK_THROWS_AS(find_crossing(fixture(12, 1.0, 1e-3, 1.0, 1.5), fixture(18, 1.0, 1e-3, 2.0, 2.5)),
                  InsufficientDataError);
  CHECK(parse_status(status_name(CrossingStatus::uncertain)) == CrossingStatus::uncertain);
  CHECK(std::string(status_name(CrossingStatus::no_crossing)) == "no-crossing");
}

TEST_CASE("smoothing spline reproduces a cubic") {
  std::vector<double> x, y, w;
  for (int i = 0; i <= 40; ++i) {
    x.push_back(i / 40.0);
    y.push_back(1 - 2 * x.back() + 0.5 * std::pow(x.back(), 3));
    w.push_back(1.0);
  }
  const SmoothingSpline s(x, y, w, 8, 1e-4);
  for (double t : {0.0, 0.13, 0.5, 0.77, 1.0}) CHECK(s(t) == doctest::Approx(1 - 2 * t + 0.5 * t * t * t).epsilon(1e-3));
}

TEST_CASE("scaling collapse recovers the fixture exponents") {
  for (double nu : {0.75, 1.0}) {
    std::vector<Curve> cs;
    for (int L : {12, 18, 24, 30}) cs.push_back(fixture(L, nu, 1e-3));
    const auto r = scaling_collapse(cs, kTstar + 0.01, 1.0);
    CHECK(r.cost <= r.initial_cost);
    CHECK(std::abs(r.T_c - kTstar) < 1e-3);
    CHECK(std::abs(r.nu - nu) / nu < 0.01);
    CHECK(r.points.size() == 4 * 31);
    for (double c : r.landscape) CHECK(c >= r.cost);
  }
}

TEST_CASE("collapse cost is minimal at the true parameters") {
  std::vector<Curve> cs;
  for (int L : {12, 18, 24}) cs.push_back(fixture(L, 1.0, 1e-3));
  const double best = collapse_cost(cs, kTstar, 1.0);
  CHECK(best < collapse_cost(cs, kTstar + 0.005, 1.0));
  CHECK(best < collapse_cost(cs, kTstar, 1.3));
  CHECK(std::isinf(collapse_cost(cs, 5.0, 1.0)));
  CHECK_THROWS_AS(scaling_collapse({cs[0], cs[1]}, kTstar, 1.0), InsufficientDataError);
}

TEST_CASE("boundary point combination and status") {
  std::map<double, std::vector<CrossingEstimate>> m;
  m[0.0] = {pair(12, 18, CrossingStatus::crossing, 2.26, 0.01), pair(12, 24, CrossingStatus::crossing, 2.28, 0.02),
            pair(18, 24, CrossingStatus::crossing, 2.27, 0.01)};
  m[0.12] = {pair(12, 18, CrossingStatus::crossing, 1.0, 0.1), pair(12, 24, CrossingStatus::uncertain, 1.0, 0.1),
             pair(18, 24, CrossingStatus::no_crossing, NAN, 0)};
  m[0.13] = {pair(12, 18, CrossingStatus::crossing, 1.0, 0.1), pair(12, 24, CrossingStatus::no_crossing, NAN, 0),
             pair(18, 24, CrossingStatus::uncertain, 1.0, 0.1)};
  const auto pts = boundary_points(m);
  REQUIRE(pts.size() == 3);
  CHECK(pts[0].status == CrossingStatus::crossing);
  const double w1 = 1 / 1e-4, w2 = 1 / 4e-4;
  const double want = (w1 * 2.26 + w2 * 2.28 + w1 * 2.27) / (2 * w1 + w2);
  CHECK(pts[0].T_c == doctest::Approx(want).epsilon(1e-12));
  CHECK(pts[0].T_c_err >= 1 / std::sqrt(2 * w1 + w2) * (1 - 1e-12));
  CHECK(pts[1].status == CrossingStatus::no_crossing);
  CHECK(pts[2].status == CrossingStatus::uncertain);
  CHECK(pts[1].n_crossing == 1);
}

TEST_CASE("phase boundary meets the nishimori line") {
  // linear boundary T = 2.269 - 10 p; its intersection is found by bisection here
  std::map<double, std::vector<CrossingEstimate>> m;
  for (double p : {0.0, 0.05, 0.1, 0.15}) m[p] = all_cross(2.269 - 10 * p, 1e-3);
  double lo = 0.1, hi = 0.15;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (2.269 - 10 * mid - tn(mid) > 0 ? lo : hi) = mid;
  }
  const auto pb = build_phase_boundary(m);
  CHECK(pb.p_c.method == CriticalPoint::Method::nishimori_intersection);
  CHECK(std::abs(pb.p_c.p_c - lo) < 1e-4);
  CHECK(pb.p_c.lo == 0.1);
  CHECK(pb.p_c.hi == 0.15);
  CHECK(pb.p_c.err > 0);
  CHECK(pb.p_c.err < 1e-3);
  CHECK(std::string(method_name(pb.p_c.method)) == "nishimori-intersection");
}

TEST_CASE("phase boundary bracket without intersection") {
  std::map<double, std::vector<CrossingEstimate>> m;
  m[0.0] = all_cross(2.269, 0.003);
  m[0.08] = all_cross(1.72, 0.01);
  m[0.12] = {pair(12, 18, CrossingStatus::no_crossing, NAN, 0), pair(12, 24, CrossingStatus::no_crossing, NAN, 0),
             pair(18, 24, CrossingStatus::no_crossing, NAN, 0)};
  const auto pb = build_phase_boundary(m);
  CHECK(pb.p_c.method == CriticalPoint::Method::bracket);
  CHECK(pb.p_c.lo == 0.08);
  CHECK(pb.p_c.hi == 0.12);
  CHECK(pb.p_c.p_c == doctest::Approx(0.1));
}

TEST_CASE("phase boundary needs two crossing points") {
  std::map<double, std::vector<CrossingEstimate>> m;
  m[0.0] = all_cross(2.269, 0.003);
  CHECK_THROWS_AS(build_phase_boundary(m), InsufficientDataError);
}

TEST_CASE("boundary comparison") {
  std::map<double, std::vector<CrossingEstimate>> m, far;
  for (double p : {0.0, 0.05, 0.1}) m[p] = all_cross(2.269 - 5 * p, 1e-3);
  for (double p : {0.3, 0.35}) far[p] = all_cross(1.0 - p, 1e-3);
  const auto a = build_phase_boundary(m);
  for (const auto& d : compare_boundaries(a, a)) CHECK(d.deviation == 0.0);
  CHECK_THROWS_AS(compare_boundaries(a, build_phase_boundary(far)), DomainError);
}

TEST_CASE("monotone interpolation") {
  const MonotoneInterpolant f({0, 1, 2, 3}, {0, 1, 1, 5});
  CHECK(f(1.0) == 1.0);
  for (double x = 1.0; x <= 2.0; x += 0.05) {
    CHECK(f(x) >= 1.0 - 1e-14);
    CHECK(f(x) <= 1.0 + 1e-14);
  }
  const MonotoneInterpolant lin({0, 1, 2}, {3, 1, -1});
  CHECK(lin(0.3) == doctest::Approx(2.4));
  CHECK_THROWS_AS(MonotoneInterpolant({0, 0}, {1, 2}), DomainError);
}
