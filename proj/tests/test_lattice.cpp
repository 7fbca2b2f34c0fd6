#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <set>

#include "tribody/errors.hpp"
#include "tribody/lattice.hpp"

using namespace tribody;

TEST_CASE("union jack counts and coordination") {
  for (int L : {2, 4, 6, 12}) {
    const Lattice lat = build_union_jack(L);
    CHECK(lat.num_sites() == 2 * L * L);
    CHECK(lat.num_triangles() == 4 * L * L);
    const auto rep = verify_lattice(lat);
    CHECK(rep.ok());
    CHECK(rep.multiple_of_four_applicable);
    CHECK(rep.coordination_histogram.at(8) == L * L);
    CHECK(rep.coordination_histogram.at(4) == L * L);
    for (int s = 0; s < L * L; ++s) CHECK(lat.incidence(s).size() == 8);
    for (int s = L * L; s < 2 * L * L; ++s) CHECK(lat.incidence(s).size() == 4);
  }
}

TEST_CASE("triangular counts and coordination") {
  for (int L : {3, 6, 9}) {
    const Lattice lat = build_triangular(L);
    CHECK(lat.num_sites() == L * L);
    CHECK(lat.num_triangles() == 2 * L * L);
    const auto rep = verify_lattice(lat);
    CHECK(rep.ok());
    CHECK(rep.coordination_histogram.size() == 1);
    CHECK(rep.coordination_histogram.at(6) == L * L);
  }
}

TEST_CASE("every triangle carries one vertex of each color") {
  for (const Lattice& lat : {build_union_jack(6), build_triangular(6)}) {
    for (const auto& t : lat.triangles()) {
      std::set<int> colors;
      for (int v : t) colors.insert(static_cast<int>(lat.site(v).color));
      CHECK(colors.size() == 3);
    }
  }
}

TEST_CASE("incidence agrees with the triangle list") {
  const Lattice lat = build_union_jack(4);
  long total = 0;
  for (int s = 0; s < lat.num_sites(); ++s) {
    auto inc = lat.incidence(s);
    total += static_cast<long>(inc.size());
    CHECK(std::is_sorted(inc.begin(), inc.end()));
    for (int t : inc) {
      const auto& tri = lat.triangle(t);
      CHECK(std::find(tri.begin(), tri.end(), s) != tri.end());
    }
  }
  CHECK(total == 3L * lat.num_triangles());
}

TEST_CASE("union jack site numbering") {
  const int L = 4;
  const Lattice lat = build_union_jack(L);
  for (int y = 0; y < L; ++y)
    for (int x = 0; x < L; ++x) {
      const Site& c = lat.site(y * L + x);
      CHECK(c.x == doctest::Approx(x));
      CHECK(c.y == doctest::Approx(y));
      const Site& m = lat.site(L * L + y * L + x);
      CHECK(m.x == doctest::Approx(x + 0.5));
      CHECK(m.y == doctest::Approx(y + 0.5));
    }
}

TEST_CASE("inadmissible sizes are rejected") {
  CHECK_THROWS_AS(build_union_jack(13), SizeError);
  CHECK_THROWS_AS(build_union_jack(0), SizeError);
  CHECK_THROWS_AS(build_triangular(4), SizeError);
  CHECK_THROWS_AS(check_lattice_size(LatticeKind::union_jack, 5), SizeError);
  CHECK_NOTHROW(check_lattice_size(LatticeKind::triangular, 9));
  try {
    build_union_jack(13);
  } catch (const SizeError& e) {
    CHECK(std::string(e.what()).find("even") != std::string::npos);
  }
}

TEST_CASE("corrupted coloring is detected") {
  Lattice lat = build_union_jack(4);
  const auto& tri = lat.triangle(lat.incidence(0)[0]);
  const int other = tri[0] == 0 ? tri[1] : tri[0];
  lat.recolor_site_for_testing(0, lat.site(other).color);
  CHECK_FALSE(verify_lattice(lat).three_coloring);
  CHECK_FALSE(verify_lattice(lat).ok());
}

TEST_CASE("smallest wave vector") {
  CHECK(build_union_jack(8).k_min() == doctest::Approx(2 * 3.14159265358979323846 / 8));
  CHECK(build_triangular(6).k_min() == doctest::Approx(4 * 3.14159265358979323846 / (std::sqrt(3.0) * 6)));
  CHECK(build_union_jack(4).max_abs_delta_energy() == 16);
}

TEST_CASE("construction is deterministic") {
  CHECK(build_union_jack(6).hash() == build_union_jack(6).hash());
  CHECK(build_union_jack(6).hash() != build_union_jack(8).hash());
  CHECK(lattice_to_json(build_triangular(3)) == lattice_to_json(build_triangular(3)));
  CHECK(parse_lattice_kind(to_string(LatticeKind::triangular)) == LatticeKind::triangular);
  const std::string js = lattice_to_json(build_union_jack(2));
  CHECK(js.find("\"triangles\"") != std::string::npos);
  CHECK(js.find("\"sites\"") != std::string::npos);
}
