// Command-line front end: model validation, switch-class inspection, exact
// micro simulation, deterministic limit integration, invasion analysis, the
// evolution-sequence sampler, and Monte Carlo cross-validation of the
// analytic invasion probability.
//
// Exit codes: 0 success, 1 I/O or parse error, 2 model validation /
// structural failure, 3 numerical non-convergence.

#include <CLI11.hpp>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "plasticity/mc.hpp"
#include "plasticity/model_io.hpp"

namespace {

using namespace plasticity;

struct ExitWithCode {
  int code;
  std::string message;
};

void write_output(const std::string& path, const std::string& content) {
  if (path.empty()) {
    std::cout << content;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot open output file '" + path + "'");
  out << content;
}

ModelFile load_validated(const std::string& config) {
  ModelFile file = load_model_file(config);
  const ValidationReport report = validate_model(file.params);
  if (!report.valid()) {
    std::string msg = "model validation failed:";
    for (const auto& v : report.violations) msg += "\n  - " + v;
    throw ExitWithCode{2, msg};
  }
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
  return file;
}

// Residents for an invasion analysis: the reachable closure of the positive
// initial traits minus the mutant's own class.
struct ResidentSetup {
  std::vector<int> support;
  Eigen::VectorXd equilibrium;
};

ResidentSetup resident_equilibrium(const ModelFile& file, const ClassTable& classes,
                                   int mutant_trait) {
  const ModelParams& m = file.params;
  const int g = m.space.geno_of(mutant_trait);
  std::vector<int> class_traits;
  for (int q : classes.class_members(g, m.space.pheno_of(mutant_trait)))
    class_traits.push_back(m.space.trait(g, q));

  std::vector<int> residents;
  for (int trait : file.positive_initial_support()) {
    bool in_class = false;
    for (int ct : class_traits) in_class = in_class || ct == trait;
    if (!in_class) residents.push_back(trait);
  }
  if (residents.empty()) throw ExitWithCode{2, "no resident traits besides the mutant class"};
  residents = classes.reachable_traits(residents);

  Eigen::VectorXd x0(static_cast<int>(residents.size()));
  for (std::size_t i = 0; i < residents.size(); ++i)
    x0[static_cast<int>(i)] = file.initial_density[residents[i]];
  auto [coexists, report] = check_coexistence(m, classes, residents, x0);
  if (!report.converged)
    throw ExitWithCode{3, "resident system did not reach an equilibrium (residual " +
                              std::to_string(report.residual) + ")"};
  if (!coexists)
    throw ExitWithCode{2, "resident support is not a coexistence state (rightmost eigenvalue " +
                              std::to_string(report.eigenvalue_max_real) + ")"};
  return {residents, report.equilibrium};
}

std::vector<double> sample_grid(double t_end, double dt) {
  std::vector<double> times;
  for (double t = 0.0; t < t_end; t += dt) times.push_back(t);
  times.push_back(t_end);
  return times;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Individual-based population dynamics with phenotypic plasticity"};
  app.require_subcommand(1);

  std::string config, out, mutant;
  std::uint64_t seed = 1;
  double t_end = 10.0, sample_dt = 0.1, eps = 0.1, tol = 1e-8, t_max = 500.0;
  long replicates = 1000;
  unsigned threads = 0;

  auto add_common = [&](CLI::App* cmd, bool needs_mutant = false) {
    cmd->add_option("--config", config, "model JSON file")->required();
    cmd->add_option("--out", out, "output path (default: stdout)");
    if (needs_mutant)
      cmd->add_option("--mutant", mutant, "mutant trait as 'genotype,phenotype'")->required();
    return cmd;
  };

  auto* cmd_validate = add_common(app.add_subcommand("validate", "check model invariants"));
  auto* cmd_classes =
      add_common(app.add_subcommand("classes", "per-genotype switch classes as JSON"));
  auto* cmd_micro =
      add_common(app.add_subcommand("micro", "exact stochastic simulation, trajectory CSV"));
  cmd_micro->add_option("--seed", seed, "RNG seed");
  cmd_micro->add_option("--t-end", t_end, "simulation horizon");
  cmd_micro->add_option("--sample-dt", sample_dt, "trajectory sampling interval");
  auto* cmd_lvs = add_common(
      app.add_subcommand("lvs", "deterministic limit: trajectory CSV plus equilibrium JSON"));
  cmd_lvs->add_option("--t-end", t_end, "integration horizon for the CSV");
  cmd_lvs->add_option("--sample-dt", sample_dt, "trajectory sampling interval");
  cmd_lvs->add_option("--tol", tol, "equilibrium residual tolerance");
  cmd_lvs->add_option("--t-max", t_max, "equilibrium search horizon");
  auto* cmd_fitness = add_common(
      app.add_subcommand("fitness", "mutant class generator, fitness and invasion probability"),
      true);
  auto* cmd_qvec =
      add_common(app.add_subcommand("qvec", "extinction vector report (same as fitness)"), true);
  auto* cmd_pesp =
      add_common(app.add_subcommand("pesp", "evolution-sequence jump log (JSON lines)"));
  cmd_pesp->add_option("--seed", seed, "RNG seed");
  cmd_pesp->add_option("--t-end", t_end, "evolutionary time horizon");
  cmd_pesp->add_option("--eps", eps, "mutant-class initialization scale");
  auto* cmd_mc = add_common(
      app.add_subcommand("mc-invasion", "analytic vs simulated invasion probability"), true);
  cmd_mc->add_option("--seed", seed, "base RNG seed");
  cmd_mc->add_option("--replicates", replicates, "number of seeded micro replicates");
  cmd_mc->add_option("--eps", eps, "fixation threshold on the mutant-class density");
  cmd_mc->add_option("--threads", threads, "worker count (0 = hardware)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (cmd_validate->parsed()) {
      ModelFile file = load_model_file(config);
      const ValidationReport report = validate_model(file.params);
      write_output(out, validation_json(report).dump(2) + "\n");
      return report.valid() ? 0 : 2;
    }

    if (cmd_classes->parsed()) {
      ModelFile file = load_validated(config);
      ClassTable classes(file.params);
      write_output(out, classes_json(file.params, classes).dump(2) + "\n");
      return 0;
    }

    if (cmd_micro->parsed()) {
      ModelFile file = load_validated(config);
      PopulationState state = file.initial_state();
      Rng rng(seed);
      const Trajectory traj = simulate(state, file.params, t_end, rng, sample_dt);
      write_output(out, trajectory_csv(file.params.space, traj));
      return 0;
    }

    if (cmd_lvs->parsed()) {
      ModelFile file = load_validated(config);
      DynamicsField field = full_field(file.params);
      Eigen::VectorXd x0(file.params.n_traits());
      for (int x = 0; x < file.params.n_traits(); ++x) x0[x] = file.initial_density[x];

      OdeTrajectory traj;
      Eigen::VectorXd x_final =
          integrate(field, x0, 0.0, t_end, sample_grid(t_end, sample_dt), {}, &traj);
      std::vector<int> all(file.params.n_traits());
      for (int x = 0; x < file.params.n_traits(); ++x) all[x] = x;
      const std::string csv = ode_trajectory_csv(file.params.space, all, traj);

      EquilibriumOptions opt;
      opt.tol = tol;
      opt.t_max = t_max;
      EquilibriumReport report = find_equilibrium(field, x_final, opt);
      if (out.empty()) {
        std::cout << csv;
        std::cout << equilibrium_json(file.params.space, report).dump(2) << "\n";
      } else {
        write_output(out, csv);
        std::cout << equilibrium_json(file.params.space, report).dump(2) << "\n";
      }
      return report.converged ? 0 : 3;
    }

    if (cmd_fitness->parsed() || cmd_qvec->parsed()) {
      ModelFile file = load_validated(config);
      ClassTable classes(file.params);
      classes.require_recurrent();
      const int mutant_trait = parse_trait(file.params.space, mutant, "--mutant");
      const ResidentSetup residents = resident_equilibrium(file, classes, mutant_trait);
      const BranchingSpec spec = build_branching_spec(file.params, classes, residents.support,
                                                      residents.equilibrium, mutant_trait);
      const Eigen::MatrixXd a = generator_matrix(spec);
      const PerronRoot perron = perron_root(a);
      const ExtinctionVector ext = extinction_vector(spec);
      write_output(out, branching_json(file.params, spec, a, perron, ext, residents.support,
                                       residents.equilibrium)
                                .dump(2) +
                            "\n");
      return 0;
    }

    if (cmd_pesp->parsed()) {
      ModelFile file = load_validated(config);
      ClassTable classes(file.params);
      classes.require_recurrent();
      PespOptions opt;
      opt.mutant_epsilon = eps;
      const std::vector<int> support = classes.reachable_traits(file.positive_initial_support());
      Eigen::VectorXd x0(static_cast<int>(support.size()));
      for (std::size_t i = 0; i < support.size(); ++i)
        x0[static_cast<int>(i)] = file.initial_density[support[i]];
      const PespState state0 = initial_pesp_state(file.params, classes, support, x0, opt);
      Rng rng(seed);
      const PespChain chain = simulate_pesp(state0, file.params, classes, t_end, rng, opt);
      std::string lines;
      for (const auto& entry : chain.entries)
        lines += pesp_entry_json(file.params.space, entry).dump() + "\n";
      if (chain.extinct)
        lines += Json{{"time", chain.final_time}, {"event", "extinct"}}.dump() + "\n";
      write_output(out, lines);
      return 0;
    }

    if (cmd_mc->parsed()) {
      ModelFile file = load_validated(config);
      ClassTable classes(file.params);
      classes.require_recurrent();
      const int mutant_trait = parse_trait(file.params.space, mutant, "--mutant");
      const ResidentSetup residents = resident_equilibrium(file, classes, mutant_trait);
      const McInvasionResult result =
          mc_invasion(file.params, classes, residents.support, residents.equilibrium,
                      mutant_trait, eps, replicates, seed, threads);
      Json j{{"analytic", result.analytic},
             {"empirical", result.empirical},
             {"fixations", result.fixations},
             {"replicates", result.replicates},
             {"ci95", Json::array({result.ci95.first, result.ci95.second})},
             {"eps", result.epsilon},
             {"K", result.K}};
      write_output(out, j.dump(2) + "\n");
      return 0;
    }
  } catch (const ExitWithCode& e) {
    std::cerr << "error: " << e.message << "\n";
    return e.code;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const SupportError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
