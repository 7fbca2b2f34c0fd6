#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace tribody {

enum class LatticeKind { union_jack, triangular };

enum class Color : std::uint8_t { A = 0, B = 1, C = 2 };

std::string to_string(LatticeKind kind);
LatticeKind parse_lattice_kind(const std::string& name);

struct Site {
  int id = 0;
  double x = 0.0;
  double y = 0.0;
  Color color = Color::A;
  int coordination = 0;
};

using Triangle = std::array<int, 3>;

// Periodic two-dimensional lattice whose plaquettes are triangles with
// three-colorable vertices. Immutable after construction.
//
// L is the number of unit squares per side (Union Jack) or sites per side
// (triangular). Union Jack ids are row-major, corners first (id = y*L + x at
// integer coordinates), then centers (id = L^2 + y*L + x at half-integers).
class Lattice {
 public:
  LatticeKind kind() const noexcept { return kind_; }
  int L() const noexcept { return L_; }
  int num_sites() const noexcept { return static_cast<int>(sites_.size()); }
  int num_triangles() const noexcept { return static_cast<int>(triangles_.size()); }

  std::span<const Site> sites() const noexcept { return sites_; }
  std::span<const Triangle> triangles() const noexcept { return triangles_; }
  const Site& site(int i) const { return sites_.at(static_cast<std::size_t>(i)); }
  const Triangle& triangle(int t) const { return triangles_.at(static_cast<std::size_t>(t)); }

  /// Triangles containing site s, in increasing triangle id.
  std::span<const int> incidence(int s) const noexcept {
    const auto b = inc_offset_[static_cast<std::size_t>(s)];
    const auto e = inc_offset_[static_cast<std::size_t>(s) + 1];
    return {inc_.data() + b, e - b};
  }

  /// Phase coordinates of each site along the two smallest reciprocal
  /// vectors, in units of the period: exp(i k_x . R_s) = exp(2 pi i wave_x[s] / L).
  std::span<const double> wave_x() const noexcept { return wave_x_; }
  std::span<const double> wave_y() const noexcept { return wave_y_; }

  /// Euclidean length of the smallest nonzero wave vector (2 pi / L on the
  /// square Union Jack cell, 4 pi / (sqrt(3) L) on the triangular lattice).
  double k_min() const noexcept;

  /// Largest possible |dE| for a single spin flip: 2 * max coordination.
  int max_abs_delta_energy() const noexcept { return 2 * max_coordination_; }

  /// Fingerprint over kind, L, and triangle list.
  std::uint64_t hash() const noexcept { return hash_; }

  // Escape hatch for fault-injection tests; rebuilds nothing.
  void recolor_site_for_testing(int s, Color c) { sites_.at(static_cast<std::size_t>(s)).color = c; }

 private:
  friend Lattice build_union_jack(int L);
  friend Lattice build_triangular(int L);
  Lattice(LatticeKind kind, int L, std::vector<Site> sites, std::vector<Triangle> tris,
          std::vector<double> wave_x, std::vector<double> wave_y);

  LatticeKind kind_;
  int L_;
  std::vector<Site> sites_;
  std::vector<Triangle> triangles_;
  std::vector<int> inc_;
  std::vector<std::size_t> inc_offset_;
  std::vector<double> wave_x_;
  std::vector<double> wave_y_;
  int max_coordination_ = 0;
  std::uint64_t hash_ = 0;
};

/// Union Jack lattice on an L x L torus; L must be even and >= 2.
Lattice build_union_jack(int L);

/// Triangular lattice on an L x L torus; L must be a positive multiple of 3.
Lattice build_triangular(int L);

Lattice build_lattice(LatticeKind kind, int L);

/// Throws SizeError if L is not admissible for the given kind.
void check_lattice_size(LatticeKind kind, int L);

struct ValidationReport {
  bool three_coloring = false;
  bool incidence_sum = false;     // sum of incidence counts == 3 * N_tri
  bool incidence_consistent = false;
  bool distinct_vertices = false;
  bool coordination_expected = false;
  // Every vertex stabilizer has support on a multiple of four triangles;
  // only meaningful for Union Jack.
  bool multiple_of_four_applicable = false;
  bool multiple_of_four = false;
  std::map<int, int> coordination_histogram;

  bool ok() const noexcept {
    return three_coloring && incidence_sum && incidence_consistent && distinct_vertices &&
           coordination_expected && (!multiple_of_four_applicable || multiple_of_four);
  }
};

ValidationReport verify_lattice(const Lattice& lat);

/// JSON dump {kind, L, sites:[{id,x,y,color}], triangles:[[i,j,k]]}.
std::string lattice_to_json(const Lattice& lat);

}  // namespace tribody
