#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "wbary/quadrature.hpp"
#include "wbary/tensor.hpp"

namespace wbary {

/// Box space-time mesh description: [0, T] x prod_a [0, lengths[a]] with
/// uniform cells per axis and polynomial degree k for the multipliers.
struct MeshSpec {
  int dim = 1;
  std::vector<int> n_cells;
  std::vector<double> lengths;
  int n_t = 1;
  double T = 1.0;
  int k = 1;

  /// Throws std::invalid_argument naming the first offending field.
  void validate() const;
  bool operator==(const MeshSpec&) const = default;
};

/// One tensor axis (time or a space direction) of the mesh.
///
/// Discontinuous data lives on the k Gauss-Legendre points per cell;
/// continuous data on the k * cells + 1 Gauss-Lobatto nodes, with cell c
/// owning nodes c*k .. c*k + k. All matrices act on global indices.
struct AxisLattice {
  int cells = 0;
  int k = 0;
  double length = 0.0;

  std::vector<double> quad_points;
  std::vector<double> quad_weights;  // cell-length scaled
  std::vector<double> nodes;

  AxisOperator interp;     // node coefficients -> values at quadrature points
  AxisOperator deriv;      // node coefficients -> derivative at quadrature points
  AxisOperator mass;       // exact integral of products of node basis functions
  AxisOperator stiffness;  // exact integral of products of derivatives
  AxisOperator interp_t;   // transposes, used when scattering to the nodes
  AxisOperator deriv_t;

  [[nodiscard]] double cell_width() const { return length / cells; }
  [[nodiscard]] int n_quad() const { return static_cast<int>(quad_points.size()); }
  [[nodiscard]] int n_nodes() const { return static_cast<int>(nodes.size()); }
  /// Row operator evaluating a continuous function at the coordinate x.
  [[nodiscard]] AxisOperator point_evaluation(double x) const;
  /// Row operator evaluating a discontinuous (quadrature-collocated)
  /// function at x; at a shared cell boundary the two one-sided values are
  /// averaged.
  [[nodiscard]] AxisOperator dg_point_evaluation(double x) const;
};

AxisLattice build_axis(int cells, double length, int k);

class SpaceTimeMesh {
 public:
  explicit SpaceTimeMesh(MeshSpec spec);

  [[nodiscard]] const MeshSpec& spec() const { return spec_; }
  [[nodiscard]] int dim() const { return spec_.dim; }
  [[nodiscard]] int degree() const { return spec_.k; }
  [[nodiscard]] double terminal_time() const { return spec_.T; }

  [[nodiscard]] const AxisLattice& time_axis() const { return time_; }
  [[nodiscard]] const AxisLattice& space_axis(int a) const { return space_[a]; }

  [[nodiscard]] std::size_t n_time_pts() const { return static_cast<std::size_t>(time_.n_quad()); }
  [[nodiscard]] std::size_t n_space_pts() const { return n_space_pts_; }
  [[nodiscard]] std::size_t n_space_nodes() const { return n_space_nodes_; }
  [[nodiscard]] std::size_t cg_dof_count() const { return n_space_nodes_ * time_.n_nodes(); }
  [[nodiscard]] std::size_t dg_size() const { return n_time_pts() * n_space_pts_; }

  /// Tensor shapes: axis 0 is time (when present), then space axes in
  /// order, last axis fastest.
  [[nodiscard]] Shape dg_shape() const;
  [[nodiscard]] Shape cg_shape() const;
  [[nodiscard]] Shape space_quad_shape() const;
  [[nodiscard]] Shape space_node_shape() const;

  [[nodiscard]] std::span<const double> spatial_weights() const { return spatial_weights_; }
  [[nodiscard]] std::span<const double> temporal_weights() const { return time_.quad_weights; }
  [[nodiscard]] std::span<const double> temporal_points() const { return time_.quad_points; }

  /// Coordinates of spatial quadrature point `is` (unused components 0).
  [[nodiscard]] std::array<double, 3> spatial_point(std::size_t is) const;
  [[nodiscard]] double domain_volume() const;

  /// Global continuous-node indices of the (k+1)^(d+1) nodes of one
  /// space-time element, ordered like the cg tensor (time slowest).
  [[nodiscard]] std::vector<std::size_t> element_nodes(int time_cell, std::span<const int> space_cell) const;

 private:
  MeshSpec spec_;
  AxisLattice time_;
  std::vector<AxisLattice> space_;
  std::size_t n_space_pts_ = 0;
  std::size_t n_space_nodes_ = 0;
  std::vector<double> spatial_weights_;
};

SpaceTimeMesh build_mesh(const MeshSpec& spec);

/// (temporal quadrature points, spatial quadrature points).
std::pair<std::size_t, std::size_t> dg_point_count(const SpaceTimeMesh& mesh);
std::size_t cg_dof_count(const SpaceTimeMesh& mesh);

/// Flattened (n_space_pts x dim) coordinates of the spatial quadrature lattice.
std::vector<double> spatial_quad_coords(const SpaceTimeMesh& mesh);
std::vector<double> temporal_quad_coords(const SpaceTimeMesh& mesh);

}  // namespace wbary
