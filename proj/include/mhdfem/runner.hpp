#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mhdfem/analysis.hpp"

namespace mhdfem {

/// One mesh source: a structured n or a tetgen .node/.ele pair.
struct MeshSource {
  int structured_n = 0;
  std::string node_file;
  std::string ele_file;
  std::string id;
};

/// Flat key=value experiment configuration (see parse_config_text for keys).
struct RunConfig {
  int degree = 1;
  std::vector<MeshSource> meshes;
  PhysicalParams params;
  StabParams stab;
  bool mu_a_set = false;  // unset: 10 for k=1, 20 for k=2
  bool chi_is_u = true;
  bool theta_is_B = true;
  std::vector<double> nu_sweep;
  bool gate = false;
  std::string output = "-";
  std::string rate_h = "max";  // abscissa for rates: max | min | mean
  bool timings = true;         // write 0 in the timing columns when off
  int n_threads = 1;

  // gate thresholds (artifact choices for the paper's qualitative claims)
  double gate_stab_rate_min = 0.75;
  double gate_stab_rate_max = 1e30;
  double gate_b_rate_min = 0.75;
  double gate_b_rate_max = 1e30;
  double gate_p_rate_min = 0.75;
  double gate_sweep_ratio_max = 2.0;
  double gate_compare_ratio_min = 1.5;
  double gate_compare_agree = 0.10;
  double gate_compare_u_rate_min = 0.9;

  double mu_a_effective() const {
    return mu_a_set ? stab.mu_a : (degree == 1 ? 10.0 : 20.0);
  }
};

inline RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  std::string pending_node;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  int mesh_count = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      std::istringstream probe(line);
      std::string tok;
      if (probe >> tok)
        throw ConfigError("config: expected key = value on line " +
                          std::to_string(line_no));
      continue;
    }
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    auto as_double = [&](const char* name) {
      try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
      } catch (const std::exception&) {
        throw ConfigError(std::string("config: ") + name + ": invalid number '" +
                          value + "'");
      }
    };
    auto as_bool = [&](const char* name) {
      if (value == "1" || value == "true" || value == "on") return true;
      if (value == "0" || value == "false" || value == "off") return false;
      throw ConfigError(std::string("config: ") + name + ": invalid flag '" + value + "'");
    };

    if (key == "degree") {
      cfg.degree = static_cast<int>(as_double("degree"));
      if (cfg.degree != 1 && cfg.degree != 2)
        throw ConfigError("config: degree: must be 1 or 2, got " + value);
    } else if (key == "mesh.structured_n") {
      MeshSource src;
      src.structured_n = static_cast<int>(as_double("mesh.structured_n"));
      if (src.structured_n < 1)
        throw ConfigError("config: mesh.structured_n: must be >= 1");
      src.id = "n" + std::to_string(src.structured_n);
      cfg.meshes.push_back(src);
      ++mesh_count;
    } else if (key == "mesh.node_file") {
      if (!pending_node.empty())
        throw ConfigError("config: mesh.node_file: previous node file has no ele file");
      pending_node = value;
    } else if (key == "mesh.ele_file") {
      if (pending_node.empty())
        throw ConfigError("config: mesh.ele_file: no preceding mesh.node_file");
      MeshSource src;
      src.node_file = pending_node;
      src.ele_file = value;
      const auto slash = pending_node.find_last_of('/');
      std::string stem =
          slash == std::string::npos ? pending_node : pending_node.substr(slash + 1);
      const auto dot = stem.rfind(".node");
      if (dot != std::string::npos) stem.erase(dot);
      src.id = stem;
      cfg.meshes.push_back(src);
      pending_node.clear();
      ++mesh_count;
    } else if (key == "nu_s") {
      cfg.params.nu_s = as_double("nu_s");
    } else if (key == "nu_m") {
      cfg.params.nu_m = as_double("nu_m");
    } else if (key == "sigma_s") {
      cfg.params.sigma_s = as_double("sigma_s");
    } else if (key == "sigma_m") {
      cfg.params.sigma_m = as_double("sigma_m");
    } else if (key == "mu_a") {
      cfg.stab.mu_a = as_double("mu_a");
      cfg.mu_a_set = true;
    } else if (key == "mu_c") {
      cfg.stab.mu_c = as_double("mu_c");
    } else if (key == "mu_j1") {
      cfg.stab.mu_j1 = as_double("mu_j1");
    } else if (key == "mu_j2") {
      cfg.stab.mu_j2 = as_double("mu_j2");
    } else if (key == "scheme") {
      if (value == "mfStab")
        cfg.stab.scheme = Scheme::mfStab;
      else if (value == "fStab")
        cfg.stab.scheme = Scheme::fStab;
      else
        throw ConfigError("config: scheme: expected mfStab or fStab, got '" + value + "'");
    } else if (key == "forms") {
      if (value == "full")
        cfg.stab.variant = FormVariant::full;
      else if (value == "simplified")
        cfg.stab.variant = FormVariant::simplified;
      else
        throw ConfigError("config: forms: expected full or simplified, got '" + value + "'");
    } else if (key == "chi") {
      if (value == "u")
        cfg.chi_is_u = true;
      else if (value == "zero")
        cfg.chi_is_u = false;
      else
        throw ConfigError("config: chi: expected u or zero, got '" + value + "'");
    } else if (key == "theta") {
      if (value == "B")
        cfg.theta_is_B = true;
      else if (value == "zero")
        cfg.theta_is_B = false;
      else
        throw ConfigError("config: theta: expected B or zero, got '" + value + "'");
    } else if (key == "nu_sweep") {
      cfg.nu_sweep.clear();
      std::istringstream vs(value);
      std::string tok;
      while (std::getline(vs, tok, ',')) {
        try {
          cfg.nu_sweep.push_back(std::stod(tok));
        } catch (const std::exception&) {
          throw ConfigError("config: nu_sweep: invalid number '" + tok + "'");
        }
      }
      if (cfg.nu_sweep.empty()) throw ConfigError("config: nu_sweep: empty list");
    } else if (key == "gate") {
      cfg.gate = as_bool("gate");
    } else if (key == "output") {
      cfg.output = value;
    } else if (key == "rate_h") {
      if (value != "max" && value != "min" && value != "mean")
        throw ConfigError("config: rate_h: expected max, min or mean");
      cfg.rate_h = value;
    } else if (key == "timings") {
      cfg.timings = as_bool("timings");
    } else if (key == "threads") {
      cfg.n_threads = std::max(1, static_cast<int>(as_double("threads")));
    } else if (key == "gate.stab_rate_min") {
      cfg.gate_stab_rate_min = as_double(key.c_str());
    } else if (key == "gate.stab_rate_max") {
      cfg.gate_stab_rate_max = as_double(key.c_str());
    } else if (key == "gate.b_rate_min") {
      cfg.gate_b_rate_min = as_double(key.c_str());
    } else if (key == "gate.b_rate_max") {
      cfg.gate_b_rate_max = as_double(key.c_str());
    } else if (key == "gate.p_rate_min") {
      cfg.gate_p_rate_min = as_double(key.c_str());
    } else if (key == "gate.sweep_ratio_max") {
      cfg.gate_sweep_ratio_max = as_double(key.c_str());
    } else if (key == "gate.compare_ratio_min") {
      cfg.gate_compare_ratio_min = as_double(key.c_str());
    } else if (key == "gate.compare_agree") {
      cfg.gate_compare_agree = as_double(key.c_str());
    } else if (key == "gate.compare_u_rate_min") {
      cfg.gate_compare_u_rate_min = as_double(key.c_str());
    } else {
      throw ConfigError("config: unknown key '" + key + "' on line " +
                        std::to_string(line_no));
    }
  }
  if (!pending_node.empty())
    throw ConfigError("config: mesh.node_file without matching mesh.ele_file");
  if (cfg.params.nu_s <= 0 || cfg.params.nu_m <= 0 || cfg.params.sigma_s <= 0 ||
      cfg.params.sigma_m <= 0)
    throw ConfigError("config: physical parameters must be positive");
  (void)mesh_count;
  return cfg;
}

inline RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

inline TetMesh load_mesh(const MeshSource& src) {
  if (src.structured_n > 0) return generate_structured_cube(src.structured_n);
  auto slurp = [](const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open mesh file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
  };
  return load_tetgen(slurp(src.node_file), slurp(src.ele_file));
}

/// One CSV row worth of results.
struct RunRow {
  std::string mesh_id;
  MeshMetrics metrics;
  int ndof_u = 0, ndof_p = 0, ndof_B = 0;
  double nu_s = 0, nu_m = 0;
  std::string scheme;
  ErrorReport errors;
  RegimeDiagnostics regime;
  double residual = 0.0;
  double t_assemble = 0.0, t_solve = 0.0;
  double div_check = 0.0;  // max elementwise ||div u_h||_L2(E)
  double u_1h = 0.0;       // ||u_h||_{1,h}
};

inline const char* kCsvHeader =
    "mesh_id,h_max,h_min,h_mean,ndof_u,ndof_p,ndof_B,nu_s,nu_m,scheme,"
    "err_u_L2,err_u_H1,err_u_S,err_u_upw,err_u_cip,err_u_stab,err_p_L2,"
    "err_B_L2,err_B_H1,err_B_M,lambda_S,lambda_M,residual,t_assemble_s,t_solve_s";

inline std::string format_csv_row(const RunRow& row) {
  char buf[1024];
  std::snprintf(
      buf, sizeof(buf),
      "%s,%.12e,%.12e,%.12e,%d,%d,%d,%.12e,%.12e,%s,%.12e,%.12e,%.12e,%.12e,%.12e,"
      "%.12e,%.12e,%.12e,%.12e,%.12e,%.12e,%.12e,%.12e,%.6f,%.6f",
      row.mesh_id.c_str(), row.metrics.h_max, row.metrics.h_min, row.metrics.h_mean,
      row.ndof_u, row.ndof_p, row.ndof_B, row.nu_s, row.nu_m, row.scheme.c_str(),
      row.errors.err_u_L2, row.errors.err_u_H1, row.errors.err_u_S, row.errors.err_u_upw,
      row.errors.err_u_cip, row.errors.err_u_stab, row.errors.err_p_L2,
      row.errors.err_B_L2, row.errors.err_B_H1, row.errors.err_B_M, row.regime.lambda_S,
      row.regime.lambda_M, row.residual, row.t_assemble, row.t_solve);
  return std::string(buf);
}

/// Assemble, constrain, solve and measure one case on a prebuilt mesh.
inline RunRow run_case(const TetMesh& mesh, const std::string& mesh_id,
                       const RunConfig& cfg, const PhysicalParams& params,
                       const StabParams& stab) {
  using clock = std::chrono::steady_clock;
  auto ex = exact_solution();
  auto fields = advection_fields(ex, cfg.chi_is_u, cfg.theta_is_B);
  auto loads = forcing(params, ex, fields);
  auto bc = boundary_data(ex);

  const auto t0 = clock::now();
  FESpaceTriple spaces(mesh, cfg.degree);
  auto sys = assemble_system(spaces, params, stab, fields, loads, bc, cfg.n_threads);
  apply_constraints(sys);
  const auto t1 = clock::now();
  Solution sol = solve(sys);
  const auto t2 = clock::now();

  RunRow row;
  row.mesh_id = mesh_id;
  row.metrics = mesh_metrics(mesh);
  row.ndof_u = spaces.velocity.n_dofs();
  row.ndof_p = spaces.pressure.n_dofs();
  row.ndof_B = spaces.magnetic.n_dofs();
  row.nu_s = params.nu_s;
  row.nu_m = params.nu_m;
  row.scheme = stab.scheme == Scheme::mfStab ? "mfStab" : "fStab";
  row.errors = compute_errors(spaces, sol, ex, bc, params, stab, fields);
  row.regime = regime_diagnostics(params, stab, fields, mesh);
  row.residual = sol.residual;
  if (cfg.timings) {
    row.t_assemble = std::chrono::duration<double>(t1 - t0).count();
    row.t_solve = std::chrono::duration<double>(t2 - t1).count();
  }
  row.div_check = check_discrete_divergence(sol.u, spaces.velocity);
  auto self = compute_errors(spaces, sol, zero_exact_solution(),
                             homogeneous_boundary_data(), params, stab, fields);
  row.u_1h = self.err_u_1h;
  return row;
}

inline double rate_abscissa(const RunRow& row, const std::string& which) {
  if (which == "min") return row.metrics.h_min;
  if (which == "mean") return row.metrics.h_mean;
  return row.metrics.h_max;
}

inline std::string format_rate_csv(const RateTable& table,
                                   const std::vector<std::string>& level_ids) {
  std::ostringstream out;
  out << "norm";
  for (std::size_t i = 1; i < level_ids.size(); ++i)
    out << ",rate_" << level_ids[i - 1] << "_to_" << level_ids[i];
  out << ",rate_lsq\n";
  char buf[64];
  for (std::size_t n = 0; n < table.norms.size(); ++n) {
    out << table.norms[n];
    for (double r : table.pairwise[n]) {
      std::snprintf(buf, sizeof(buf), ",%.6f", r);
      out << buf;
    }
    std::snprintf(buf, sizeof(buf), ",%.6f", table.least_squares[n]);
    out << buf << "\n";
  }
  return out.str();
}

struct GateReport {
  bool passed = true;
  std::vector<std::string> failures;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      passed = false;
      failures.push_back(what);
    }
  }
};

struct SingleResult {
  std::string csv;
  RunRow row;
};

inline SingleResult run_single(const RunConfig& cfg) {
  if (cfg.meshes.empty()) throw ConfigError("config: mesh: at least one mesh required");
  StabParams stab = cfg.stab;
  stab.mu_a = cfg.mu_a_effective();
  TetMesh mesh = load_mesh(cfg.meshes.front());
  SingleResult res;
  res.row = run_case(mesh, cfg.meshes.front().id, cfg, cfg.params, stab);
  res.csv = std::string(kCsvHeader) + "\n" + format_csv_row(res.row) + "\n";
  return res;
}

struct ConvergenceResult {
  std::string csv;
  std::string rates_csv;
  RateTable table;
  std::vector<RunRow> rows;
  GateReport gates;
};

inline ConvergenceResult run_convergence(const RunConfig& cfg) {
  if (cfg.meshes.size() < 2)
    throw ConfigError("config: mesh: convergence study needs at least two meshes");
  StabParams stab = cfg.stab;
  stab.mu_a = cfg.mu_a_effective();

  ConvergenceResult res;
  std::ostringstream csv;
  csv << kCsvHeader << "\n";
  std::vector<std::pair<double, ErrorReport>> levels;
  std::vector<std::string> ids;
  for (const auto& src : cfg.meshes) {
    TetMesh mesh = load_mesh(src);
    RunRow row = run_case(mesh, src.id, cfg, cfg.params, stab);
    csv << format_csv_row(row) << "\n";
    levels.emplace_back(rate_abscissa(row, cfg.rate_h), row.errors);
    ids.push_back(src.id);
    res.rows.push_back(std::move(row));
  }
  res.csv = csv.str();
  res.table = convergence_rates(levels);
  res.rates_csv = format_rate_csv(res.table, ids);

  auto lsq = [&](const std::string& norm) {
    for (std::size_t n = 0; n < res.table.norms.size(); ++n)
      if (res.table.norms[n] == norm) return res.table.least_squares[n];
    return 0.0;
  };
  res.gates.check(lsq("err_u_stab") >= cfg.gate_stab_rate_min,
                  "err_u_stab rate below " + std::to_string(cfg.gate_stab_rate_min));
  res.gates.check(lsq("err_u_stab") <= cfg.gate_stab_rate_max,
                  "err_u_stab rate above " + std::to_string(cfg.gate_stab_rate_max));
  res.gates.check(lsq("err_B_H1") >= cfg.gate_b_rate_min,
                  "err_B_H1 rate below " + std::to_string(cfg.gate_b_rate_min));
  res.gates.check(lsq("err_B_H1") <= cfg.gate_b_rate_max,
                  "err_B_H1 rate above " + std::to_string(cfg.gate_b_rate_max));
  res.gates.check(lsq("err_p_L2") >= cfg.gate_p_rate_min,
                  "err_p_L2 rate below " + std::to_string(cfg.gate_p_rate_min));
  return res;
}

struct SweepResult {
  std::string csv;
  std::vector<RunRow> rows;
  GateReport gates;
};

inline SweepResult run_nu_sweep(const RunConfig& cfg) {
  if (cfg.meshes.empty()) throw ConfigError("config: mesh: at least one mesh required");
  std::vector<double> nus = cfg.nu_sweep;
  if (nus.empty()) nus = {1e-1, 1e-3, 1e-5, 1e-7, 1e-9, 1e-11};
  StabParams stab = cfg.stab;
  stab.mu_a = cfg.mu_a_effective();
  TetMesh mesh = load_mesh(cfg.meshes.front());

  SweepResult res;
  std::ostringstream csv;
  csv << kCsvHeader << "\n";
  for (double nu : nus) {
    PhysicalParams params = cfg.params;
    params.nu_s = nu;
    params.nu_m = nu;
    RunRow row = run_case(mesh, cfg.meshes.front().id, cfg, params, stab);
    csv << format_csv_row(row) << "\n";
    res.rows.push_back(std::move(row));
  }
  res.csv = csv.str();

  auto ratio = [&](auto getter) {
    double lo = std::numeric_limits<double>::max(), hi = 0.0;
    for (const auto& row : res.rows) {
      lo = std::min(lo, getter(row));
      hi = std::max(hi, getter(row));
    }
    return hi / lo;
  };
  res.gates.check(
      ratio([](const RunRow& r) { return r.errors.err_u_H1; }) <= cfg.gate_sweep_ratio_max,
      "err_u_H1 max/min over sweep exceeds ratio gate");
  res.gates.check(
      ratio([](const RunRow& r) { return r.errors.err_B_H1; }) <= cfg.gate_sweep_ratio_max,
      "err_B_H1 max/min over sweep exceeds ratio gate");
  res.gates.check(
      ratio([](const RunRow& r) { return r.errors.err_p_L2; }) <= cfg.gate_sweep_ratio_max,
      "err_p_L2 max/min over sweep exceeds ratio gate");
  return res;
}

struct CompareResult {
  std::string csv;        // paired rows, mfStab then fStab per mesh
  std::string ratio_csv;  // fStab / mfStab error ratios per mesh
  std::vector<RunRow> mf_rows;
  std::vector<RunRow> f_rows;
  GateReport gates;
};

inline CompareResult run_comparison(const RunConfig& cfg) {
  if (cfg.meshes.empty()) throw ConfigError("config: mesh: at least one mesh required");
  StabParams mf = cfg.stab;
  mf.mu_a = cfg.mu_a_effective();
  mf.scheme = Scheme::mfStab;
  StabParams fs = mf;
  fs.scheme = Scheme::fStab;

  CompareResult res;
  std::ostringstream csv, ratio;
  csv << kCsvHeader << "\n";
  ratio << "mesh_id,h_max,ratio_u_H1,ratio_u_stab,ratio_B_H1,ratio_p_L2\n";
  char buf[256];
  for (const auto& src : cfg.meshes) {
    TetMesh mesh = load_mesh(src);
    RunRow a = run_case(mesh, src.id, cfg, cfg.params, mf);
    RunRow b = run_case(mesh, src.id, cfg, cfg.params, fs);
    csv << format_csv_row(a) << "\n" << format_csv_row(b) << "\n";
    std::snprintf(buf, sizeof(buf), "%s,%.12e,%.6f,%.6f,%.6f,%.6f", src.id.c_str(),
                  a.metrics.h_max, b.errors.err_u_H1 / a.errors.err_u_H1,
                  b.errors.err_u_stab / a.errors.err_u_stab,
                  b.errors.err_B_H1 / a.errors.err_B_H1,
                  b.errors.err_p_L2 / a.errors.err_p_L2);
    ratio << buf << "\n";
    res.mf_rows.push_back(std::move(a));
    res.f_rows.push_back(std::move(b));
  }
  res.csv = csv.str();
  res.ratio_csv = ratio.str();

  const RunRow& mf_fine = res.mf_rows.back();
  const RunRow& f_fine = res.f_rows.back();
  res.gates.check(f_fine.errors.err_u_H1 / mf_fine.errors.err_u_H1 >=
                      cfg.gate_compare_ratio_min,
                  "fStab/mfStab velocity error ratio below gate on finest mesh");
  res.gates.check(std::abs(f_fine.errors.err_B_H1 / mf_fine.errors.err_B_H1 - 1.0) <=
                      cfg.gate_compare_agree,
                  "schemes disagree on err_B_H1 beyond gate");
  res.gates.check(std::abs(f_fine.errors.err_p_L2 / mf_fine.errors.err_p_L2 - 1.0) <=
                      cfg.gate_compare_agree,
                  "schemes disagree on err_p_L2 beyond gate");
  if (res.mf_rows.size() >= 2) {
    const RunRow& c = res.mf_rows[res.mf_rows.size() - 2];
    const double rate =
        std::log(c.errors.err_u_H1 / mf_fine.errors.err_u_H1) /
        std::log(rate_abscissa(c, cfg.rate_h) / rate_abscissa(mf_fine, cfg.rate_h));
    res.gates.check(rate >= cfg.gate_compare_u_rate_min,
                    "mfStab err_u_H1 rate below gate");
  }
  return res;
}

}  // namespace mhdfem
