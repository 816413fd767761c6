#pragma once

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

#include "wbary/fields.hpp"
#include "wbary/mesh.hpp"
#include "wbary/model.hpp"
#include "wbary/pdhg.hpp"

namespace wbary {

enum class GammaKind { cyclic, none, identity };

struct DensitySpec {
  enum class Kind { gaussian, voxel };
  Kind kind = Kind::gaussian;
  std::vector<double> center;  // gaussian
  double sharpness = 50.0;
  double amplitude = 1.0;
  std::string path;            // voxel
  bool normalize = false;

  bool operator==(const DensitySpec&) const = default;
};

/// Everything a run needs. Written as `key = value` lines grouped under
/// [mesh], [model], [pdhg], [initial.<i>], [target.<i>] and [output]
/// headers; `#` starts a comment. Lists are space or comma separated.
struct RunConfig {
  MeshSpec mesh;

  int n_species = 1;
  double alpha = 0.0;
  std::vector<double> beta;
  GammaKind gamma = GammaKind::none;
  ReactionMobility mobility = ReactionMobility::log_mean;
  double rho_min = 1e-6;
  double rho_max = 40.0;
  RunMode mode = RunMode::barycenter;

  double tol = 1e-5;
  int max_iter = 20000;
  double sigma_u = 1.0;
  double sigma_phi = 1.0;
  bool clamp_varrho = false;
  int prox_sweeps = 1;
  int diagnostics_every = 10;
  Preconditioner preconditioner = Preconditioner::kronecker;
  double linear_tol = 1e-10;
  int linear_max_iter = 5000;
  double brent_tol = 1e-8;

  std::vector<DensitySpec> initial;
  std::vector<DensitySpec> target;

  std::string output_dir = "out";
  std::vector<double> snapshots;
  bool write_vtk = true;
  bool write_csv = true;

  /// Directory that relative voxel paths are resolved against.
  std::string base_dir = ".";

  bool operator==(const RunConfig&) const = default;
  /// Throws ConfigError naming the offending field.
  void validate() const;
};

RunConfig parse_config(const std::string& path);
RunConfig parse_config_string(const std::string& text, const std::string& base_dir = ".");
std::string serialize_config(const RunConfig& config);

ModelParams model_params(const RunConfig& config);
PDHGConfig pdhg_config(const RunConfig& config);

/// amplitude * exp(-sharpness |x - center|^2) at the spatial quadrature
/// points, then floored at rho_min. With `normalize` the part above the
/// floor is rescaled so that the quadrature integral is exactly 1.
TerminalField gaussian_density(std::span<const double> center, double sharpness, double amplitude,
                               const SpaceTimeMesh& mesh, double rho_min = 1e-6, bool normalize = false);

/// Voxel text file: header "VOXEL nx ny nz" then nx*ny*nz reals, x fastest.
/// The voxel grid spans the mesh box; sampling is nearest-voxel. Missing
/// axes of a lower-dimensional mesh sample the middle voxel layer.
TerminalField read_voxel_density(const std::string& path, const SpaceTimeMesh& mesh, bool normalize,
                                 double rho_min = 1e-6);

TerminalField build_density(const DensitySpec& spec, const SpaceTimeMesh& mesh, double rho_min,
                            const std::string& base_dir);

/// A scalar array on the uniform vertex grid (cells + 1 per axis).
struct NamedArray {
  std::string name;
  std::vector<double> values;  // vertex tensor, last axis fastest
};

/// Per-axis vertex counts of the spatial mesh.
std::vector<std::size_t> vertex_shape(const SpaceTimeMesh& mesh);
/// A quadrature-collocated field evaluated at time t on the vertex grid;
/// at shared cell boundaries the one-sided values are averaged.
std::vector<double> resample_at_vertices(const SpaceTimeMesh& mesh, const DGField& field, double t);
std::vector<double> resample_at_vertices(const SpaceTimeMesh& mesh, const TerminalField& field);

/// Legacy ASCII STRUCTURED_POINTS file with one SCALARS block per array.
void write_vtk_snapshot(const std::string& path, const SpaceTimeMesh& mesh, const std::vector<NamedArray>& arrays,
                        const std::string& title);
/// Reads the SCALARS blocks of a file written by write_vtk_snapshot
/// (values in VTK order, x fastest).
std::vector<NamedArray> read_vtk_scalars(const std::string& path);

void write_convergence_csv(const std::vector<HistoryRecord>& history, const std::string& path);

/// initialize -> iterate -> export. Returns 0 on convergence, 2 when
/// max_iter is reached and 1 on error (message on `err`).
int run(const RunConfig& config, std::ostream& out, std::ostream& err);

}  // namespace wbary
