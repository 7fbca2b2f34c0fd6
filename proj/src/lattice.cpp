#include "tribody/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "json.hpp"

#include "tribody/errors.hpp"
#include "tribody/rng.hpp"

namespace tribody {

std::string to_string(LatticeKind kind) {
  return kind == LatticeKind::union_jack ? "union_jack" : "triangular";
}

LatticeKind parse_lattice_kind(const std::string& name) {
  if (name == "union_jack" || name == "uj" || name == "UJ") return LatticeKind::union_jack;
  if (name == "triangular" || name == "tr" || name == "TR") return LatticeKind::triangular;
  throw ConfigError("unknown lattice kind '" + name + "' (expected union_jack or triangular)");
}

Lattice::Lattice(LatticeKind kind, int L, std::vector<Site> sites, std::vector<Triangle> tris,
                 std::vector<double> wave_x, std::vector<double> wave_y)
    : kind_(kind),
      L_(L),
      sites_(std::move(sites)),
      triangles_(std::move(tris)),
      wave_x_(std::move(wave_x)),
      wave_y_(std::move(wave_y)) {
  const std::size_t n = sites_.size();
  std::vector<int> count(n, 0);
  for (const auto& t : triangles_)
    for (int v : t) ++count[static_cast<std::size_t>(v)];
  inc_offset_.assign(n + 1, 0);
  for (std::size_t s = 0; s < n; ++s) inc_offset_[s + 1] = inc_offset_[s] + static_cast<std::size_t>(count[s]);
  inc_.assign(inc_offset_.back(), 0);
  std::vector<std::size_t> fill(inc_offset_.begin(), inc_offset_.end() - 1);
  for (std::size_t t = 0; t < triangles_.size(); ++t)
    for (int v : triangles_[t]) inc_[fill[static_cast<std::size_t>(v)]++] = static_cast<int>(t);
  for (std::size_t s = 0; s < n; ++s) {
    sites_[s].coordination = count[s];
    max_coordination_ = std::max(max_coordination_, count[s]);
  }

  Fnv1a h;
  h.add(static_cast<int>(kind_));
  h.add(L_);
  for (const auto& t : triangles_) h.add(t);
  hash_ = h.value();
}

double Lattice::k_min() const noexcept {
  const double base = 2.0 * std::numbers::pi / L_;
  return kind_ == LatticeKind::union_jack ? base : base * 2.0 / std::sqrt(3.0);
}

void check_lattice_size(LatticeKind kind, int L) {
  if (kind == LatticeKind::union_jack) {
    if (L < 2 || L % 2 != 0)
      throw SizeError("Union Jack lattice needs an even L >= 2 (checkerboard coloring of the "
                      "corner sublattice must close around the torus), got L = " +
                      std::to_string(L));
  } else {
    if (L < 3 || L % 3 != 0)
      throw SizeError("triangular lattice needs L to be a positive multiple of 3 (periodic "
                      "three-coloring), got L = " +
                      std::to_string(L));
  }
}

Lattice build_union_jack(int L) {
  check_lattice_size(LatticeKind::union_jack, L);
  const int cells = L * L;
  std::vector<Site> sites(static_cast<std::size_t>(2 * cells));
  std::vector<double> wx(sites.size()), wy(sites.size());
  auto corner = [L](int x, int y) { return ((y + L) % L) * L + ((x + L) % L); };
  for (int y = 0; y < L; ++y) {
    for (int x = 0; x < L; ++x) {
      const int c = corner(x, y);
      sites[static_cast<std::size_t>(c)] = {c, double(x), double(y), (x + y) % 2 == 0 ? Color::A : Color::B, 0};
      const int m = cells + y * L + x;
      sites[static_cast<std::size_t>(m)] = {m, x + 0.5, y + 0.5, Color::C, 0};
    }
  }
  for (const auto& s : sites) {
    wx[static_cast<std::size_t>(s.id)] = s.x;
    wy[static_cast<std::size_t>(s.id)] = s.y;
  }

  std::vector<Triangle> tris;
  tris.reserve(static_cast<std::size_t>(4 * cells));
  for (int y = 0; y < L; ++y) {
    for (int x = 0; x < L; ++x) {
      const int m = cells + y * L + x;
      const int c00 = corner(x, y), c10 = corner(x + 1, y);
      const int c11 = corner(x + 1, y + 1), c01 = corner(x, y + 1);
      tris.push_back({m, c00, c10});
      tris.push_back({m, c10, c11});
      tris.push_back({m, c11, c01});
      tris.push_back({m, c01, c00});
    }
  }
  return Lattice(LatticeKind::union_jack, L, std::move(sites), std::move(tris), std::move(wx), std::move(wy));
}

Lattice build_triangular(int L) {
  check_lattice_size(LatticeKind::triangular, L);
  // Bravais vectors a1 = (1, 0), a2 = (1/2, sqrt(3)/2); sublattice color (x + 2y) mod 3.
  const double h = std::sqrt(3.0) / 2.0;
  std::vector<Site> sites(static_cast<std::size_t>(L * L));
  std::vector<double> wx(sites.size()), wy(sites.size());
  auto id = [L](int x, int y) { return ((y + L) % L) * L + ((x + L) % L); };
  for (int y = 0; y < L; ++y) {
    for (int x = 0; x < L; ++x) {
      const int s = id(x, y);
      sites[static_cast<std::size_t>(s)] = {s, x + 0.5 * y, h * y, static_cast<Color>((x + 2 * y) % 3), 0};
      wx[static_cast<std::size_t>(s)] = x;
      wy[static_cast<std::size_t>(s)] = y;
    }
  }
  std::vector<Triangle> tris;
  tris.reserve(static_cast<std::size_t>(2 * L * L));
  for (int y = 0; y < L; ++y) {
    for (int x = 0; x < L; ++x) {
      tris.push_back({id(x, y), id(x + 1, y), id(x, y + 1)});
      tris.push_back({id(x + 1, y), id(x + 1, y + 1), id(x, y + 1)});
    }
  }
  return Lattice(LatticeKind::triangular, L, std::move(sites), std::move(tris), std::move(wx), std::move(wy));
}

Lattice build_lattice(LatticeKind kind, int L) {
  return kind == LatticeKind::union_jack ? build_union_jack(L) : build_triangular(L);
}

ValidationReport verify_lattice(const Lattice& lat) {
  ValidationReport r;
  const auto sites = lat.sites();
  const auto tris = lat.triangles();

  r.three_coloring = true;
  r.distinct_vertices = true;
  for (const auto& t : tris) {
    std::set<int> verts(t.begin(), t.end());
    if (verts.size() != 3) r.distinct_vertices = false;
    std::set<Color> colors;
    for (int v : t) colors.insert(sites[static_cast<std::size_t>(v)].color);
    if (colors.size() != 3) r.three_coloring = false;
  }

  std::size_t total = 0;
  r.incidence_consistent = true;
  for (int s = 0; s < lat.num_sites(); ++s) {
    const auto inc = lat.incidence(s);
    total += inc.size();
    ++r.coordination_histogram[static_cast<int>(inc.size())];
    for (int t : inc) {
      const auto& tri = tris[static_cast<std::size_t>(t)];
      if (std::find(tri.begin(), tri.end(), s) == tri.end()) r.incidence_consistent = false;
    }
  }
  for (std::size_t t = 0; t < tris.size(); ++t) {
    for (int v : tris[t]) {
      const auto inc = lat.incidence(v);
      if (std::find(inc.begin(), inc.end(), static_cast<int>(t)) == inc.end()) r.incidence_consistent = false;
    }
  }
  r.incidence_sum = total == 3 * tris.size();

  const int L = lat.L();
  if (lat.kind() == LatticeKind::union_jack) {
    r.coordination_expected = r.coordination_histogram == std::map<int, int>{{4, L * L}, {8, L * L}};
    r.multiple_of_four_applicable = true;
    r.multiple_of_four = std::all_of(r.coordination_histogram.begin(), r.coordination_histogram.end(),
                                     [](const auto& kv) { return kv.first % 4 == 0; });
  } else {
    r.coordination_expected = r.coordination_histogram == std::map<int, int>{{6, L * L}};
  }
  return r;
}

std::string lattice_to_json(const Lattice& lat) {
  nlohmann::json j;
  j["kind"] = to_string(lat.kind());
  j["L"] = lat.L();
  auto& sites = j["sites"] = nlohmann::json::array();
  for (const auto& s : lat.sites()) {
    const char* c = s.color == Color::A ? "A" : s.color == Color::B ? "B" : "C";
    sites.push_back({{"id", s.id}, {"x", s.x}, {"y", s.y}, {"color", c}});
  }
  auto& tris = j["triangles"] = nlohmann::json::array();
  for (const auto& t : lat.triangles()) tris.push_back({t[0], t[1], t[2]});
  return j.dump();
}

}  // namespace tribody
