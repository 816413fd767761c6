#include "wbary/io.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "wbary/errors.hpp"

namespace wbary {

namespace fs = std::filesystem;

// ---- config text ----

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

struct Entry {
  std::string value;
  int line = 0;
};

[[noreturn]] void fail_at(int line, const std::string& msg) {
  throw ConfigError("line " + std::to_string(line) + ": " + msg);
}

double to_double(const Entry& e, const std::string& key) {
  try {
    std::size_t used = 0;
    const double v = std::stod(e.value, &used);
    if (trim(e.value.substr(used)).empty()) return v;
  } catch (const std::exception&) {
  }
  fail_at(e.line, "'" + key + "' expects a number, got '" + e.value + "'");
}

int to_int(const Entry& e, const std::string& key) {
  try {
    std::size_t used = 0;
    const long v = std::stol(e.value, &used);
    if (trim(e.value.substr(used)).empty() && v >= INT32_MIN && v <= INT32_MAX) return static_cast<int>(v);
  } catch (const std::exception&) {
  }
  fail_at(e.line, "'" + key + "' expects an integer, got '" + e.value + "'");
}

bool to_bool(const Entry& e, const std::string& key) {
  const auto v = lower(e.value);
  if (v == "true" || v == "yes" || v == "on" || v == "1") return true;
  if (v == "false" || v == "no" || v == "off" || v == "0") return false;
  fail_at(e.line, "'" + key + "' expects true or false, got '" + e.value + "'");
}

std::vector<std::string> split_list(const std::string& s) {
  std::string t = s;
  std::replace(t.begin(), t.end(), ',', ' ');
  std::istringstream in(t);
  std::vector<std::string> out;
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

std::vector<double> to_doubles(const Entry& e, const std::string& key) {
  std::vector<double> out;
  for (const auto& w : split_list(e.value)) out.push_back(to_double(Entry{w, e.line}, key));
  return out;
}

std::vector<int> to_ints(const Entry& e, const std::string& key) {
  std::vector<int> out;
  for (const auto& w : split_list(e.value)) out.push_back(to_int(Entry{w, e.line}, key));
  return out;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string join(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + fmt(v[i]);
  return s;
}

std::string join(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + std::to_string(v[i]);
  return s;
}

using Section = std::map<std::string, Entry>;

// Takes `key` out of the section; unknown leftovers are reported later.
const Entry* take(Section& sec, const std::string& key) {
  auto it = sec.find(key);
  return it == sec.end() ? nullptr : &it->second;
}

void reject_unknown(const Section& sec, const std::vector<std::string>& known, const std::string& name) {
  for (const auto& [key, e] : sec) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      fail_at(e.line, "unknown key '" + key + "' in [" + name + "]");
    }
  }
}

DensitySpec parse_density(Section& sec, const std::string& name) {
  reject_unknown(sec, {"type", "center", "sharpness", "amplitude", "path", "normalize"}, name);
  DensitySpec d;
  if (const auto* e = take(sec, "type")) {
    const auto v = lower(e->value);
    if (v == "gaussian") {
      d.kind = DensitySpec::Kind::gaussian;
    } else if (v == "voxel") {
      d.kind = DensitySpec::Kind::voxel;
    } else {
      fail_at(e->line, "type must be gaussian or voxel");
    }
  }
  if (const auto* e = take(sec, "center")) d.center = to_doubles(*e, "center");
  if (const auto* e = take(sec, "sharpness")) d.sharpness = to_double(*e, "sharpness");
  if (const auto* e = take(sec, "amplitude")) d.amplitude = to_double(*e, "amplitude");
  if (const auto* e = take(sec, "path")) d.path = e->value;
  if (const auto* e = take(sec, "normalize")) d.normalize = to_bool(*e, "normalize");
  return d;
}

void write_density(std::ostream& out, const std::string& header, const DensitySpec& d) {
  out << "\n[" << header << "]\n";
  if (d.kind == DensitySpec::Kind::gaussian) {
    out << "type = gaussian\n";
    out << "center = " << join(d.center) << "\n";
    out << "sharpness = " << fmt(d.sharpness) << "\n";
    out << "amplitude = " << fmt(d.amplitude) << "\n";
  } else {
    out << "type = voxel\n";
    out << "path = " << d.path << "\n";
  }
  out << "normalize = " << (d.normalize ? "true" : "false") << "\n";
}

const char* gamma_name(GammaKind g) {
  switch (g) {
    case GammaKind::cyclic: return "cyclic";
    case GammaKind::identity: return "identity";
    case GammaKind::none: break;
  }
  return "none";
}

}  // namespace

void RunConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  try {
    mesh.validate();
  } catch (const std::invalid_argument& e) {
    fail(e.what());
  }
  if (n_species < 1) fail("species must be >= 1");
  if (!(alpha >= 0.0)) fail("alpha must be >= 0");
  if (static_cast<int>(beta.size()) != n_species) fail("beta needs one value per species");
  for (double b : beta) {
    if (!(b >= 0.0)) fail("beta must be >= 0");
  }
  if (gamma == GammaKind::cyclic && n_species < 2) fail("gamma = cyclic needs at least 2 species");
  if (mode == RunMode::barycenter && gamma == GammaKind::identity) {
    fail("gamma = identity does not conserve mass; use it in geodesic mode only");
  }
  if (alpha > 0.0 && mobility == ReactionMobility::log_mean && gamma != GammaKind::cyclic) {
    fail("mobility = log_mean with alpha > 0 needs gamma = cyclic");
  }
  if (!(rho_min > 0.0)) fail("rho_min must be > 0");
  if (!(rho_max > rho_min)) fail("rho_max must exceed rho_min");
  if (!(tol > 0.0)) fail("tol must be > 0");
  if (max_iter < 1) fail("max_iter must be >= 1");
  if (!(sigma_u > 0.0)) fail("sigma_u must be > 0");
  if (!(sigma_phi > 0.0)) fail("sigma_phi must be > 0");
  if (prox_sweeps < 1) fail("prox_sweeps must be >= 1");
  if (diagnostics_every < 1) fail("diagnostics_every must be >= 1");
  if (!(linear_tol > 0.0)) fail("linear_tol must be > 0");
  if (linear_max_iter < 1) fail("linear_max_iter must be >= 1");
  if (!(brent_tol > 0.0)) fail("brent_tol must be > 0");
  if (static_cast<int>(initial.size()) != n_species) fail("need one [initial.<i>] section per species");
  if (mode == RunMode::geodesic && static_cast<int>(target.size()) != n_species) {
    fail("geodesic mode needs one [target.<i>] section per species");
  }
  if (mode == RunMode::barycenter && !target.empty()) fail("[target.<i>] sections are only used in geodesic mode");
  auto check_density = [&](const DensitySpec& d, const std::string& where) {
    if (d.kind == DensitySpec::Kind::gaussian) {
      if (static_cast<int>(d.center.size()) != mesh.dim) fail(where + ": center needs one coordinate per dimension");
      if (!(d.sharpness > 0.0)) fail(where + ": sharpness must be > 0");
      if (!(d.amplitude > 0.0)) fail(where + ": amplitude must be > 0");
    } else if (d.path.empty()) {
      fail(where + ": voxel density needs a path");
    }
  };
  for (std::size_t i = 0; i < initial.size(); ++i) check_density(initial[i], "initial." + std::to_string(i + 1));
  for (std::size_t i = 0; i < target.size(); ++i) check_density(target[i], "target." + std::to_string(i + 1));
  for (double t : snapshots) {
    if (!(t >= 0.0 && t <= mesh.T)) fail("snapshot times must lie in [0, T]");
  }
  if (output_dir.empty()) fail("output directory must not be empty");
}

RunConfig parse_config_string(const std::string& text, const std::string& base_dir) {
  std::map<std::string, Section> sections;
  std::string current;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail_at(line_no, "malformed section header");
      current = lower(trim(line.substr(1, line.size() - 2)));
      const bool fixed = current == "mesh" || current == "model" || current == "pdhg" || current == "output";
      const bool indexed = current.rfind("initial.", 0) == 0 || current.rfind("target.", 0) == 0;
      if (!fixed && !indexed) fail_at(line_no, "unknown section [" + current + "]");
      if (sections.count(current) != 0) fail_at(line_no, "duplicate section [" + current + "]");
      sections[current];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail_at(line_no, "expected 'key = value'");
    if (current.empty()) fail_at(line_no, "key outside of any section");
    const std::string key = lower(trim(line.substr(0, eq)));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) fail_at(line_no, "empty key");
    auto& sec = sections[current];
    if (sec.count(key) != 0) fail_at(line_no, "duplicate key '" + key + "'");
    sec[key] = Entry{value, line_no};
  }

  RunConfig c;
  c.base_dir = base_dir;
  c.mesh = MeshSpec{};
  c.mesh.n_cells.clear();
  c.mesh.lengths.clear();
  bool gamma_set = false, mobility_set = false, beta_set = false, species_set = false;

  if (auto it = sections.find("mesh"); it != sections.end()) {
    auto& s = it->second;
    reject_unknown(s, {"dim", "n_cells", "lengths", "n_t", "t", "k"}, "mesh");
    if (const auto* e = take(s, "dim")) c.mesh.dim = to_int(*e, "dim");
    if (const auto* e = take(s, "n_cells")) c.mesh.n_cells = to_ints(*e, "n_cells");
    if (const auto* e = take(s, "lengths")) c.mesh.lengths = to_doubles(*e, "lengths");
    if (const auto* e = take(s, "n_t")) c.mesh.n_t = to_int(*e, "n_t");
    if (const auto* e = take(s, "t")) c.mesh.T = to_double(*e, "T");
    if (const auto* e = take(s, "k")) c.mesh.k = to_int(*e, "k");
  } else {
    throw ConfigError("missing [mesh] section");
  }
  if (c.mesh.n_cells.size() == 1 && c.mesh.dim > 1) c.mesh.n_cells.assign(c.mesh.dim, c.mesh.n_cells[0]);
  if (c.mesh.lengths.empty()) c.mesh.lengths.assign(std::max(c.mesh.dim, 0), 1.0);
  if (c.mesh.lengths.size() == 1 && c.mesh.dim > 1) c.mesh.lengths.assign(c.mesh.dim, c.mesh.lengths[0]);

  auto collect = [&](const std::string& prefix, std::vector<DensitySpec>& out) {
    std::map<int, DensitySpec> found;
    for (auto& [name, sec] : sections) {
      if (name.rfind(prefix, 0) != 0) continue;
      const std::string idx = name.substr(prefix.size());
      int i = 0;
      try {
        std::size_t used = 0;
        i = std::stoi(idx, &used);
        if (used != idx.size()) throw std::invalid_argument(idx);
      } catch (const std::exception&) {
        throw ConfigError("section [" + name + "] needs a numeric species index");
      }
      found[i] = parse_density(sec, name);
    }
    int expect = 1;
    for (auto& [i, d] : found) {
      if (i != expect) throw ConfigError(prefix + " sections must be numbered 1..N without gaps");
      out.push_back(std::move(d));
      ++expect;
    }
  };
  collect("initial.", c.initial);
  collect("target.", c.target);

  if (auto it = sections.find("model"); it != sections.end()) {
    auto& s = it->second;
    reject_unknown(s, {"species", "alpha", "beta", "gamma", "mobility", "rho_min", "rho_max", "mode"}, "model");
    if (const auto* e = take(s, "species")) {
      c.n_species = to_int(*e, "species");
      species_set = true;
    }
    if (const auto* e = take(s, "alpha")) c.alpha = to_double(*e, "alpha");
    if (const auto* e = take(s, "beta")) {
      c.beta = to_doubles(*e, "beta");
      beta_set = true;
    }
    if (const auto* e = take(s, "gamma")) {
      const auto v = lower(e->value);
      if (v == "cyclic") c.gamma = GammaKind::cyclic;
      else if (v == "none") c.gamma = GammaKind::none;
      else if (v == "identity") c.gamma = GammaKind::identity;
      else fail_at(e->line, "gamma must be cyclic, none or identity");
      gamma_set = true;
    }
    if (const auto* e = take(s, "mobility")) {
      const auto v = lower(e->value);
      if (v == "log_mean") c.mobility = ReactionMobility::log_mean;
      else if (v == "linear") c.mobility = ReactionMobility::linear;
      else fail_at(e->line, "mobility must be log_mean or linear");
      mobility_set = true;
    }
    if (const auto* e = take(s, "rho_min")) c.rho_min = to_double(*e, "rho_min");
    if (const auto* e = take(s, "rho_max")) c.rho_max = to_double(*e, "rho_max");
    if (const auto* e = take(s, "mode")) {
      const auto v = lower(e->value);
      if (v == "barycenter") c.mode = RunMode::barycenter;
      else if (v == "geodesic") c.mode = RunMode::geodesic;
      else fail_at(e->line, "mode must be barycenter or geodesic");
    }
  }
  // Without an explicit count, one species per [initial.<i>] section.
  if (!species_set && !c.initial.empty()) c.n_species = static_cast<int>(c.initial.size());
  if (!beta_set) c.beta.assign(std::max(c.n_species, 0), 0.0);
  if (c.beta.size() == 1 && c.n_species > 1) c.beta.assign(c.n_species, c.beta[0]);
  if (!gamma_set) {
    if (c.mode == RunMode::geodesic) c.gamma = c.n_species >= 2 ? GammaKind::cyclic : GammaKind::identity;
    else c.gamma = c.n_species >= 2 ? GammaKind::cyclic : GammaKind::none;
  }
  if (!mobility_set) c.mobility = c.gamma == GammaKind::cyclic ? ReactionMobility::log_mean : ReactionMobility::linear;

  if (auto it = sections.find("pdhg"); it != sections.end()) {
    auto& s = it->second;
    reject_unknown(s,
                   {"tol", "max_iter", "sigma_u", "sigma_phi", "clamp_varrho", "prox_sweeps", "diagnostics_every",
                    "preconditioner", "linear_tol", "linear_max_iter", "brent_tol"},
                   "pdhg");
    if (const auto* e = take(s, "tol")) c.tol = to_double(*e, "tol");
    if (const auto* e = take(s, "max_iter")) c.max_iter = to_int(*e, "max_iter");
    if (const auto* e = take(s, "sigma_u")) c.sigma_u = to_double(*e, "sigma_u");
    if (const auto* e = take(s, "sigma_phi")) c.sigma_phi = to_double(*e, "sigma_phi");
    if (const auto* e = take(s, "clamp_varrho")) c.clamp_varrho = to_bool(*e, "clamp_varrho");
    if (const auto* e = take(s, "prox_sweeps")) c.prox_sweeps = to_int(*e, "prox_sweeps");
    if (const auto* e = take(s, "diagnostics_every")) c.diagnostics_every = to_int(*e, "diagnostics_every");
    if (const auto* e = take(s, "preconditioner")) {
      const auto v = lower(e->value);
      if (v == "kronecker") c.preconditioner = Preconditioner::kronecker;
      else if (v == "jacobi") c.preconditioner = Preconditioner::jacobi;
      else fail_at(e->line, "preconditioner must be kronecker or jacobi");
    }
    if (const auto* e = take(s, "linear_tol")) c.linear_tol = to_double(*e, "linear_tol");
    if (const auto* e = take(s, "linear_max_iter")) c.linear_max_iter = to_int(*e, "linear_max_iter");
    if (const auto* e = take(s, "brent_tol")) c.brent_tol = to_double(*e, "brent_tol");
  }

  if (auto it = sections.find("output"); it != sections.end()) {
    auto& s = it->second;
    reject_unknown(s, {"directory", "snapshots", "formats"}, "output");
    if (const auto* e = take(s, "directory")) c.output_dir = e->value;
    if (const auto* e = take(s, "snapshots")) c.snapshots = to_doubles(*e, "snapshots");
    if (const auto* e = take(s, "formats")) {
      c.write_vtk = c.write_csv = false;
      for (const auto& w : split_list(lower(e->value))) {
        if (w == "vtk") c.write_vtk = true;
        else if (w == "csv") c.write_csv = true;
        else fail_at(e->line, "formats accepts vtk and csv");
      }
    }
  }

  c.validate();
  return c;
}

RunConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  const auto parent = fs::path(path).parent_path();
  return parse_config_string(buf.str(), parent.empty() ? "." : parent.string());
}

std::string serialize_config(const RunConfig& c) {
  std::ostringstream out;
  out << "[mesh]\n";
  out << "dim = " << c.mesh.dim << "\n";
  out << "n_cells = " << join(c.mesh.n_cells) << "\n";
  out << "lengths = " << join(c.mesh.lengths) << "\n";
  out << "n_t = " << c.mesh.n_t << "\n";
  out << "T = " << fmt(c.mesh.T) << "\n";
  out << "k = " << c.mesh.k << "\n";
  out << "\n[model]\n";
  out << "species = " << c.n_species << "\n";
  out << "alpha = " << fmt(c.alpha) << "\n";
  out << "beta = " << join(c.beta) << "\n";
  out << "gamma = " << gamma_name(c.gamma) << "\n";
  out << "mobility = " << (c.mobility == ReactionMobility::linear ? "linear" : "log_mean") << "\n";
  out << "rho_min = " << fmt(c.rho_min) << "\n";
  out << "rho_max = " << fmt(c.rho_max) << "\n";
  out << "mode = " << (c.mode == RunMode::geodesic ? "geodesic" : "barycenter") << "\n";
  out << "\n[pdhg]\n";
  out << "tol = " << fmt(c.tol) << "\n";
  out << "max_iter = " << c.max_iter << "\n";
  out << "sigma_u = " << fmt(c.sigma_u) << "\n";
  out << "sigma_phi = " << fmt(c.sigma_phi) << "\n";
  out << "clamp_varrho = " << (c.clamp_varrho ? "true" : "false") << "\n";
  out << "prox_sweeps = " << c.prox_sweeps << "\n";
  out << "diagnostics_every = " << c.diagnostics_every << "\n";
  out << "preconditioner = " << (c.preconditioner == Preconditioner::jacobi ? "jacobi" : "kronecker") << "\n";
  out << "linear_tol = " << fmt(c.linear_tol) << "\n";
  out << "linear_max_iter = " << c.linear_max_iter << "\n";
  out << "brent_tol = " << fmt(c.brent_tol) << "\n";
  for (std::size_t i = 0; i < c.initial.size(); ++i) write_density(out, "initial." + std::to_string(i + 1), c.initial[i]);
  for (std::size_t i = 0; i < c.target.size(); ++i) write_density(out, "target." + std::to_string(i + 1), c.target[i]);
  out << "\n[output]\n";
  out << "directory = " << c.output_dir << "\n";
  out << "snapshots = " << join(c.snapshots) << "\n";
  std::string formats;
  if (c.write_vtk) formats += "vtk";
  if (c.write_csv) formats += formats.empty() ? "csv" : " csv";
  out << "formats = " << formats << "\n";
  return out.str();
}

ModelParams model_params(const RunConfig& c) {
  ModelParams p;
  p.n_species = c.n_species;
  switch (c.gamma) {
    case GammaKind::cyclic: p.gamma = gamma_cyclic(c.n_species); break;
    case GammaKind::none: p.gamma = ReactionMatrix(c.n_species, 0); break;
    case GammaKind::identity: {
      p.gamma = ReactionMatrix(c.n_species, c.n_species);
      for (int i = 0; i < c.n_species; ++i) p.gamma(i, i) = 1.0;
      break;
    }
  }
  p.alpha = c.alpha;
  p.beta = c.beta;
  p.mobility = c.mobility;
  p.rho_min = c.rho_min;
  p.rho_max = c.rho_max;
  p.sigma_u = c.sigma_u;
  p.sigma_phi = c.sigma_phi;
  p.prox_sweeps = c.prox_sweeps;
  p.brent_tol = c.brent_tol;
  return p;
}

PDHGConfig pdhg_config(const RunConfig& c) {
  PDHGConfig p;
  p.tol = c.tol;
  p.max_iter = c.max_iter;
  p.diagnostics_every = c.diagnostics_every;
  p.mode = c.mode;
  p.clamp_varrho = c.clamp_varrho;
  p.linear.tol = c.linear_tol;
  p.linear.max_iter = c.linear_max_iter;
  p.linear.preconditioner = c.preconditioner;
  return p;
}

// ---- densities ----

namespace {

// Floors at rho_min; with `normalize` rescales the part above the floor so
// the quadrature integral is exactly one.
void finish_density(TerminalField& f, const SpaceTimeMesh& mesh, double rho_min, bool normalize) {
  for (double& v : f.values) {
    if (!std::isfinite(v)) throw NumericalError("density: non-finite value");
    v = std::max(v, rho_min);
  }
  if (!normalize) return;
  const auto lambda = mesh.spatial_weights();
  double excess = 0.0;
  for (std::size_t j = 0; j < f.size(); ++j) excess += lambda[j] * (f.values[j] - rho_min);
  const double floor_mass = rho_min * mesh.domain_volume();
  if (!(excess > 0.0) || floor_mass >= 1.0) throw std::invalid_argument("density: cannot normalize to unit mass");
  const double scale = (1.0 - floor_mass) / excess;
  for (double& v : f.values) v = rho_min + scale * (v - rho_min);
}

}  // namespace

TerminalField gaussian_density(std::span<const double> center, double sharpness, double amplitude,
                               const SpaceTimeMesh& mesh, double rho_min, bool normalize) {
  if (static_cast<int>(center.size()) != mesh.dim()) throw ShapeError("gaussian: center dimension mismatch");
  if (!(sharpness > 0.0)) throw std::invalid_argument("gaussian: sharpness must be > 0");
  TerminalField f = TerminalField::zeros(mesh);
  for (std::size_t j = 0; j < f.size(); ++j) {
    const auto x = mesh.spatial_point(j);
    double r2 = 0.0;
    for (int a = 0; a < mesh.dim(); ++a) r2 += (x[a] - center[a]) * (x[a] - center[a]);
    f.values[j] = amplitude * std::exp(-sharpness * r2);
  }
  finish_density(f, mesh, rho_min, normalize);
  return f;
}

TerminalField read_voxel_density(const std::string& path, const SpaceTimeMesh& mesh, bool normalize, double rho_min) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open voxel file '" + path + "'");
  std::string tag;
  long n[3] = {0, 0, 0};
  if (!(in >> tag >> n[0] >> n[1] >> n[2]) || tag != "VOXEL" || n[0] < 1 || n[1] < 1 || n[2] < 1) {
    throw ConfigError("voxel file '" + path + "': malformed header, expected 'VOXEL nx ny nz'");
  }
  const std::size_t count = static_cast<std::size_t>(n[0]) * n[1] * n[2];
  std::vector<double> data;
  data.reserve(count);
  std::string word;
  while (in >> word) {
    double v = 0.0;
    try {
      std::size_t used = 0;
      v = std::stod(word, &used);
      if (used != word.size()) throw std::invalid_argument(word);
    } catch (const std::exception&) {
      throw ConfigError("voxel file '" + path + "': bad value '" + word + "'");
    }
    if (!std::isfinite(v)) throw ConfigError("voxel file '" + path + "': non-finite value");
    data.push_back(v);
  }
  if (data.size() != count) {
    throw ConfigError("voxel file '" + path + "': count mismatch, header says " + std::to_string(count) + " values, found " +
                      std::to_string(data.size()));
  }
  TerminalField f = TerminalField::zeros(mesh);
  for (std::size_t j = 0; j < f.size(); ++j) {
    const auto x = mesh.spatial_point(j);
    long idx[3];
    for (int a = 0; a < 3; ++a) {
      if (a < mesh.dim()) {
        const double u = x[a] / mesh.space_axis(a).length;
        idx[a] = std::clamp(static_cast<long>(std::floor(u * n[a])), 0L, n[a] - 1);
      } else {
        idx[a] = n[a] / 2;
      }
    }
    f.values[j] = data[static_cast<std::size_t>((idx[2] * n[1] + idx[1]) * n[0] + idx[0])];
  }
  finish_density(f, mesh, rho_min, normalize);
  return f;
}

TerminalField build_density(const DensitySpec& spec, const SpaceTimeMesh& mesh, double rho_min,
                            const std::string& base_dir) {
  if (spec.kind == DensitySpec::Kind::gaussian) {
    return gaussian_density(spec.center, spec.sharpness, spec.amplitude, mesh, rho_min, spec.normalize);
  }
  fs::path p(spec.path);
  if (p.is_relative()) p = fs::path(base_dir) / p;
  return read_voxel_density(p.string(), mesh, spec.normalize, rho_min);
}

// ---- VTK ----

std::vector<std::size_t> vertex_shape(const SpaceTimeMesh& mesh) {
  std::vector<std::size_t> s;
  for (int a = 0; a < mesh.dim(); ++a) s.push_back(static_cast<std::size_t>(mesh.space_axis(a).cells) + 1);
  return s;
}

namespace {

std::vector<AxisOperator> vertex_operators(const SpaceTimeMesh& mesh) {
  std::vector<AxisOperator> ops;
  for (int a = 0; a < mesh.dim(); ++a) {
    const auto& ax = mesh.space_axis(a);
    const int nv = ax.cells + 1;
    std::vector<double> dense(static_cast<std::size_t>(nv) * ax.n_quad(), 0.0);
    for (int v = 0; v < nv; ++v) {
      const auto row = ax.dg_point_evaluation(v * ax.cell_width()).to_dense();
      std::copy(row.begin(), row.end(), dense.begin() + static_cast<std::ptrdiff_t>(v) * ax.n_quad());
    }
    ops.push_back(AxisOperator::from_dense(nv, ax.n_quad(), dense));
  }
  return ops;
}

}  // namespace

std::vector<double> resample_at_vertices(const SpaceTimeMesh& mesh, const TerminalField& field) {
  if (field.size() != mesh.n_space_pts()) throw ShapeError("resample: field does not match the mesh");
  const auto ops = vertex_operators(mesh);
  std::vector<const AxisOperator*> ptrs;
  for (const auto& op : ops) ptrs.push_back(&op);
  return apply_tensor_product(ptrs, field.values, mesh.space_quad_shape()).data;
}

std::vector<double> resample_at_vertices(const SpaceTimeMesh& mesh, const DGField& field, double t) {
  if (field.size() != mesh.dg_size()) throw ShapeError("resample: field does not match the mesh");
  if (!(t >= 0.0 && t <= mesh.terminal_time())) throw std::invalid_argument("resample: time outside [0, T]");
  const auto time_row = mesh.time_axis().dg_point_evaluation(t);
  const auto ops = vertex_operators(mesh);
  std::vector<const AxisOperator*> ptrs{&time_row};
  for (const auto& op : ops) ptrs.push_back(&op);
  return apply_tensor_product(ptrs, field.values, mesh.dg_shape()).data;
}

void write_vtk_snapshot(const std::string& path, const SpaceTimeMesh& mesh, const std::vector<NamedArray>& arrays,
                        const std::string& title) {
  const auto shape = vertex_shape(mesh);
  std::size_t n = 1;
  for (auto s : shape) n *= s;
  std::size_t dims[3] = {1, 1, 1};
  double spacing[3] = {1.0, 1.0, 1.0};
  for (int a = 0; a < mesh.dim(); ++a) {
    dims[a] = shape[a];
    spacing[a] = mesh.space_axis(a).cell_width();
  }
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (f == nullptr) throw std::runtime_error("cannot write '" + path + "'");
  std::fprintf(f, "# vtk DataFile Version 3.0\n%s\nASCII\nDATASET STRUCTURED_POINTS\n", title.c_str());
  std::fprintf(f, "DIMENSIONS %zu %zu %zu\n", dims[0], dims[1], dims[2]);
  std::fprintf(f, "ORIGIN 0 0 0\n");
  std::fprintf(f, "SPACING %.8e %.8e %.8e\n", spacing[0], spacing[1], spacing[2]);
  std::fprintf(f, "POINT_DATA %zu\n", n);
  for (const auto& arr : arrays) {
    if (arr.values.size() != n) {
      std::fclose(f);
      throw ShapeError("write_vtk_snapshot: array '" + arr.name + "' has the wrong size");
    }
    std::fprintf(f, "SCALARS %s double 1\nLOOKUP_TABLE default\n", arr.name.c_str());
    // Our tensors run last axis fastest; VTK wants x fastest.
    for (std::size_t k = 0; k < dims[2]; ++k) {
      for (std::size_t j = 0; j < dims[1]; ++j) {
        for (std::size_t i = 0; i < dims[0]; ++i) {
          std::size_t flat = i;
          if (mesh.dim() >= 2) flat = flat * dims[1] + j;
          if (mesh.dim() >= 3) flat = flat * dims[2] + k;
          std::fprintf(f, "%.8e\n", arr.values[flat]);
        }
      }
    }
  }
  if (std::fclose(f) != 0) throw std::runtime_error("error writing '" + path + "'");
}

std::vector<NamedArray> read_vtk_scalars(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::vector<NamedArray> out;
  std::size_t n = 0;
  std::string word;
  while (in >> word) {
    if (word == "POINT_DATA") {
      in >> n;
    } else if (word == "SCALARS") {
      NamedArray a;
      std::string type, lut, name;
      int comps = 0;
      in >> a.name >> type >> comps >> lut >> name;
      a.values.resize(n);
      for (auto& v : a.values) in >> v;
      if (!in) throw std::runtime_error("'" + path + "': truncated SCALARS block");
      out.push_back(std::move(a));
    }
  }
  return out;
}

// ---- CSV ----

void write_convergence_csv(const std::vector<HistoryRecord>& history, const std::string& path) {
  if (history.empty()) throw std::invalid_argument("write_convergence_csv: empty history");
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (f == nullptr) throw std::runtime_error("cannot write '" + path + "'");
  auto num = [&](double v) {
    if (std::isnan(v)) {
      std::fputs(",nan", f);
    } else {
      std::fprintf(f, ",%.6e", v);
    }
  };
  std::fputs("iter,err,objective,kkt_m,kkt_s,mass_drift,phi_T_sum\n", f);
  for (const auto& r : history) {
    std::fprintf(f, "%d", r.iter);
    num(r.err);
    num(r.objective);
    num(r.kkt_m);
    num(r.kkt_s);
    num(r.mass_drift);
    num(r.phi_T_sum);
    std::fputc('\n', f);
  }
  if (std::fclose(f) != 0) throw std::runtime_error("error writing '" + path + "'");
}

// ---- run ----

int run(const RunConfig& config, std::ostream& out, std::ostream& err) {
  try {
    config.validate();
    const auto start = std::chrono::steady_clock::now();
    const SpaceTimeMesh mesh(config.mesh);
    std::vector<TerminalField> rho0, rho1;
    for (const auto& d : config.initial) rho0.push_back(build_density(d, mesh, config.rho_min, config.base_dir));
    for (const auto& d : config.target) rho1.push_back(build_density(d, mesh, config.rho_min, config.base_dir));
    const Solver solver(mesh, model_params(config), pdhg_config(config), rho0, rho1);
    auto state = solver.initialize();
    solver.iterate(state);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    fs::create_directories(config.output_dir);
    if (config.write_csv) write_convergence_csv(state.history, (fs::path(config.output_dir) / "convergence.csv").string());
    if (config.write_vtk) {
      for (std::size_t s = 0; s < config.snapshots.size(); ++s) {
        const double t = config.snapshots[s];
        std::vector<NamedArray> arrays;
        for (int i = 0; i < config.n_species; ++i) {
          arrays.push_back({"rho" + std::to_string(i + 1), resample_at_vertices(mesh, state.u.rho[i], t)});
        }
        if (config.mode == RunMode::barycenter) arrays.push_back({"varrho", resample_at_vertices(mesh, state.varrho)});
        char name[64];
        std::snprintf(name, sizeof(name), "snapshot_%03zu.vtk", s);
        char title[64];
        std::snprintf(title, sizeof(title), "wbary t=%.6g", t);
        write_vtk_snapshot((fs::path(config.output_dir) / name).string(), mesh, arrays, title);
      }
    }
    const auto& last = state.history.back();
    char line[256];
    std::snprintf(line, sizeof(line), "%s iterations=%d err=%.6e objective=%.6e time=%.2fs",
                  state.converged ? "converged" : "max_iter reached", state.iteration, state.err, last.objective, secs);
    out << line;
    if (config.mode == RunMode::geodesic) {
      std::snprintf(line, sizeof(line), " distance=%.6e", solver.distance(state));
      out << line;
    }
    if (state.linear_failure) out << " (warning: a linear solve hit its iteration limit)";
    out << "\n";
    return state.converged ? 0 : 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace wbary
