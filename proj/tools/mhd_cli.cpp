// Experiment driver: manufactured-solution runs of the stabilized MHD scheme.
// Subcommands: run, convergence, sweep-nu, compare. Each takes a flat
// key=value config file; CSV goes to the configured output ("-" = stdout).

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "mhdfem/runner.hpp"

namespace {

void write_output(const std::string& path, const std::string& content) {
  if (path == "-") {
    std::cout << content;
    return;
  }
  std::ofstream out(path);
  if (!out) throw mhdfem::ConfigError("config: cannot write output '" + path + "'");
  out << content;
}

std::string sibling(const std::string& path, const std::string& suffix) {
  if (path == "-") return "-";
  return path + suffix;
}

int report_gates(const mhdfem::GateReport& gates, bool gate_enabled) {
  for (const auto& f : gates.failures) std::cerr << "gate: " << f << "\n";
  if (!gate_enabled) return 0;
  return gates.passed ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stabilized H(div) MHD solver, manufactured-solution experiments"};
  app.require_subcommand(1);

  std::string config_path;
  bool gate_flag = false;
  for (const char* name : {"run", "convergence", "sweep-nu", "compare"}) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "key=value config file")->required();
    sub->add_flag("--gate", gate_flag, "exit nonzero when gates fail");
  }

  CLI11_PARSE(app, argc, argv);
  const std::string cmd = app.get_subcommands().front()->get_name();

  try {
    mhdfem::RunConfig cfg = mhdfem::parse_config_file(config_path);
    const bool gate = gate_flag || cfg.gate;

    if (cmd == "run") {
      auto res = mhdfem::run_single(cfg);
      write_output(cfg.output, res.csv);
      return 0;
    }
    if (cmd == "convergence") {
      auto res = mhdfem::run_convergence(cfg);
      write_output(cfg.output, res.csv);
      if (cfg.output == "-")
        std::cout << "\n" << res.rates_csv;
      else
        write_output(sibling(cfg.output, ".rates.csv"), res.rates_csv);
      return report_gates(res.gates, gate);
    }
    if (cmd == "sweep-nu") {
      auto res = mhdfem::run_nu_sweep(cfg);
      write_output(cfg.output, res.csv);
      return report_gates(res.gates, gate);
    }
    if (cmd == "compare") {
      auto res = mhdfem::run_comparison(cfg);
      write_output(cfg.output, res.csv);
      if (cfg.output == "-")
        std::cout << "\n" << res.ratio_csv;
      else
        write_output(sibling(cfg.output, ".ratio.csv"), res.ratio_csv);
      return report_gates(res.gates, gate);
    }
  } catch (const mhdfem::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const mhdfem::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const mhdfem::SolverError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
