#pragma once

// The limiting evolution sequence: on the time scale of mutations, the
// population sits at a coexistence equilibrium, mutants arrive as a thinned
// Poisson stream, and each surviving invasion moves the state to the stable
// equilibrium of the enlarged system. Mutants whose class is subcritical
// never fix (thinning probability 0), so the chain jumps with rate
//   m(g_parent) b(p_parent) nbar_parent (1 - q) M(parent, mutant).

#include <Eigen/Dense>
#include <algorithm>
#include <limits>
#include <map>
#include <utility>
#include <vector>

#include "plasticity/branching.hpp"
#include "plasticity/errors.hpp"
#include "plasticity/model.hpp"
#include "plasticity/ode.hpp"
#include "plasticity/rng.hpp"
#include "plasticity/switch_graph.hpp"

namespace plasticity {

struct PespState {
  std::vector<int> support;     // closed trait set, ascending
  Eigen::VectorXd equilibrium;  // coexistence equilibrium on the support
  double time = 0.0;            // evolutionary clock, units of 1/(K u_K)
};

struct JumpCandidate {
  int parent = -1;  // trait in the support
  int mutant = -1;  // trait outside the support
  double rate = 0.0;
  double q = 1.0;
  double lambda_max = 0.0;
};

struct PespOptions {
  double mutant_epsilon = 1e-3;   // initial mutant-class density scale
  double zero_threshold = 1e-6;   // coordinates below this die out
  CoexistenceOptions coexistence{};
};

struct BranchingInfo {
  double lambda_max = 0.0;
  bool supercritical = false;
  Eigen::VectorXd q;            // per class phenotype
  Eigen::VectorXd composition;  // limiting type proportions
  std::vector<int> class_phenotypes;
};

// Branching results are deterministic per (support, mutant) pair, so chains
// memoize them.
class BranchingCache {
 public:
  const BranchingInfo& lookup(const ModelParams& params, const ClassTable& classes,
                              const PespState& state, int mutant_trait) {
    const auto key = std::make_pair(state.support, mutant_trait);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;

    const BranchingSpec spec =
        build_branching_spec(params, classes, state.support, state.equilibrium, mutant_trait);
    BranchingInfo info;
    info.class_phenotypes = spec.class_phenotypes;
    const Eigen::MatrixXd a = generator_matrix(spec);
    const PerronRoot perron = perron_root(a);
    info.lambda_max = perron.lambda;
    info.composition = perron.composition;
    const ExtinctionVector ext = extinction_vector(spec);
    info.supercritical = ext.supercritical;
    info.q = ext.q;
    return cache_.emplace(key, std::move(info)).first->second;
  }

 private:
  std::map<std::pair<std::vector<int>, int>, BranchingInfo> cache_;
};

// One candidate per (parent, mutant) pair with positive mutation mass and
// the mutant outside the support; a subcritical mutant keeps its candidate
// with rate zero. Mutations onto traits already in the support are handled
// as null events by the stepping routine, not listed here.
inline std::vector<JumpCandidate> jump_rates(const PespState& state, const ModelParams& params,
                                             const ClassTable& classes, BranchingCache& cache) {
  std::vector<JumpCandidate> candidates;
  for (std::size_t i = 0; i < state.support.size(); ++i) {
    const int parent = state.support[i];
    const int g = params.space.geno_of(parent);
    const double mg = params.mutation_prob[g];
    if (mg <= 0.0) continue;
    const double intensity =
        mg * params.birth[params.space.pheno_of(parent)] * state.equilibrium[static_cast<int>(i)];
    for (int target = 0; target < params.n_traits(); ++target) {
      const double law = params.mut_law(parent, target);
      if (law <= 0.0) continue;
      if (std::binary_search(state.support.begin(), state.support.end(), target)) continue;
      const BranchingInfo& info = cache.lookup(params, classes, state, target);
      JumpCandidate c;
      c.parent = parent;
      c.mutant = target;
      c.lambda_max = info.lambda_max;
      const int idx = static_cast<int>(
          std::find(info.class_phenotypes.begin(), info.class_phenotypes.end(),
                    params.space.pheno_of(target)) -
          info.class_phenotypes.begin());
      c.q = info.supercritical ? info.q[idx] : 1.0;
      c.rate = intensity * (1.0 - c.q) * law;
      candidates.push_back(c);
    }
  }
  return candidates;
}

// Equilibrium of the enlarged system after a successful invasion. The
// mutant class starts at epsilon times its limiting branching composition
// (the proportions a surviving small population has reached by the time it
// becomes macroscopic). Coordinates below the threshold are zeroed -- they
// belong to subcritical classes that die out -- and the zeroed point must
// still be strictly stable.
inline EquilibriumReport post_invasion_equilibrium(const PespState& state, int mutant_trait,
                                                   const ModelParams& params,
                                                   const ClassTable& classes,
                                                   const PespOptions& opt = {}) {
  const BranchingSpec spec =
      build_branching_spec(params, classes, state.support, state.equilibrium, mutant_trait);
  const PerronRoot perron = perron_root(generator_matrix(spec));
  if (!(perron.lambda > 0.0))
    throw SupportError("post-invasion equilibrium requested for a subcritical mutant");

  const int g = spec.genotype;
  std::vector<int> extended = state.support;
  for (int q : spec.class_phenotypes) extended.push_back(params.space.trait(g, q));
  std::sort(extended.begin(), extended.end());

  Eigen::VectorXd x0 = Eigen::VectorXd::Zero(static_cast<int>(extended.size()));
  for (std::size_t i = 0; i < extended.size(); ++i) {
    const int trait = extended[i];
    const auto res =
        std::lower_bound(state.support.begin(), state.support.end(), trait);
    if (res != state.support.end() && *res == trait) {
      x0[static_cast<int>(i)] =
          state.equilibrium[static_cast<int>(res - state.support.begin())];
    } else {
      const int idx = spec.index_of(params.space.pheno_of(trait));
      x0[static_cast<int>(i)] = opt.mutant_epsilon * perron.composition[idx];
    }
  }

  DynamicsField field = lvs_field(params, classes, extended);
  EquilibriumReport report = find_equilibrium(field, std::move(x0), opt.coexistence.equilibrium);
  if (!report.converged)
    throw NonConvergenceError(
        "post-invasion system did not reach a stationary point (residual " +
        std::to_string(report.residual) + " at t=" + std::to_string(report.t_reached) + ")");

  for (int i = 0; i < report.equilibrium.size(); ++i)
    if (report.equilibrium[i] < opt.zero_threshold) report.equilibrium[i] = 0.0;

  // Extinction respects classes: a zeroed trait must take its whole
  // same-genotype class down with it.
  for (std::size_t i = 0; i < extended.size(); ++i) {
    if (report.equilibrium[static_cast<int>(i)] != 0.0) continue;
    const int gi = params.space.geno_of(extended[i]);
    for (int q : classes.class_members(gi, params.space.pheno_of(extended[i]))) {
      const int sibling = params.space.trait(gi, q);
      const auto it = std::lower_bound(extended.begin(), extended.end(), sibling);
      if (it != extended.end() && *it == sibling &&
          report.equilibrium[static_cast<int>(it - extended.begin())] != 0.0)
        throw UnstableTargetError("post-invasion equilibrium zeroes only part of a class");
    }
  }

  report.residual = field(report.equilibrium).lpNorm<Eigen::Infinity>();
  report.converged = report.residual <= opt.coexistence.equilibrium.tol * 10.0;
  report.jacobian = field.jacobian(report.equilibrium);
  report.eigenvalue_max_real = rightmost_real_part(report.jacobian);
  if (!(report.eigenvalue_max_real < -opt.coexistence.stability_margin))
    throw UnstableTargetError("post-invasion equilibrium is not strictly stable (rightmost " +
                              std::to_string(report.eigenvalue_max_real) + ")");
  return report;
}

enum class PespEventKind { Jump, NoJump, NullInSupport };

struct PespStepResult {
  PespEventKind kind = PespEventKind::NoJump;
  PespState state;          // state after the event
  double waiting_time = 0.0;
  int parent = -1;
  int mutant = -1;
  double lambda_max = 0.0;
  double q = 1.0;
};

// One mutation event of the chain. The waiting time is exponential in the
// total mutation intensity sum m(g) b(p) nbar; the mutant survives with
// probability 1-q, in which case the state jumps to the post-invasion
// equilibrium. Failed invasions and mutations onto the current support only
// advance the clock.
inline PespStepResult pesp_step(const PespState& state, const ModelParams& params,
                                const ClassTable& classes, Rng& rng, BranchingCache& cache,
                                const PespOptions& opt = {}) {
  PespStepResult result;
  result.state = state;

  const int n = static_cast<int>(state.support.size());
  std::vector<double> weights(n);
  double intensity = 0.0;
  for (int i = 0; i < n; ++i) {
    const int trait = state.support[i];
    weights[i] = params.mutation_prob[params.space.geno_of(trait)] *
                 params.birth[params.space.pheno_of(trait)] * state.equilibrium[i];
    intensity += weights[i];
  }
  if (!(intensity > 0.0)) {
    result.kind = PespEventKind::NoJump;
    result.waiting_time = std::numeric_limits<double>::infinity();
    return result;
  }

  result.waiting_time = rng.next_exponential(intensity);
  result.state.time += result.waiting_time;

  const int parent = state.support[rng.next_index(weights, intensity)];
  result.parent = parent;

  double u = rng.next_unit();
  int target = -1;
  for (int j = 0; j < params.n_traits(); ++j) {
    const double p = params.mut_law(parent, j);
    if (p > 0.0) {
      target = j;
      if (u < p) break;
      u -= p;
    }
  }
  if (target < 0) {  // m(g) > 0 but empty law row; nothing is born mutant
    result.kind = PespEventKind::NoJump;
    return result;
  }
  result.mutant = target;

  if (std::binary_search(state.support.begin(), state.support.end(), target)) {
    result.kind = PespEventKind::NullInSupport;
    return result;
  }

  const BranchingInfo& info = cache.lookup(params, classes, state, target);
  result.lambda_max = info.lambda_max;
  const int idx = static_cast<int>(
      std::find(info.class_phenotypes.begin(), info.class_phenotypes.end(),
                params.space.pheno_of(target)) -
      info.class_phenotypes.begin());
  result.q = info.supercritical ? info.q[idx] : 1.0;

  if (!rng.next_bernoulli(1.0 - result.q)) {
    result.kind = PespEventKind::NoJump;
    return result;
  }

  const EquilibriumReport report =
      post_invasion_equilibrium(state, target, params, classes, opt);
  PespState next;
  next.time = result.state.time;
  for (std::size_t i = 0; i < report.support.size(); ++i) {
    if (report.equilibrium[static_cast<int>(i)] > 0.0) {
      next.support.push_back(report.support[i]);
    }
  }
  if (next.support.empty()) throw ExtinctError();
  next.equilibrium.resize(static_cast<int>(next.support.size()));
  int k = 0;
  for (std::size_t i = 0; i < report.support.size(); ++i)
    if (report.equilibrium[static_cast<int>(i)] > 0.0)
      next.equilibrium[k++] = report.equilibrium[static_cast<int>(i)];

  // Re-verify the new state is a coexistence state before emitting it.
  auto [ok, check] = check_coexistence(params, classes, next.support, next.equilibrium,
                                       opt.coexistence);
  if (!ok)
    throw UnstableTargetError("post-jump support fails the coexistence check");
  next.equilibrium = check.equilibrium;
  result.kind = PespEventKind::Jump;
  result.state = std::move(next);
  result.state.time = state.time + result.waiting_time;
  return result;
}

struct PespChainEntry {
  double time = 0.0;
  PespEventKind kind = PespEventKind::Jump;
  std::vector<int> support;
  Eigen::VectorXd equilibrium;
  int parent = -1;
  int mutant = -1;
  double lambda_max = 0.0;
  double q = 1.0;
};

struct PespChain {
  std::vector<PespChainEntry> entries;  // initial state, jumps, null events
  double final_time = 0.0;
  bool extinct = false;
};

// Verifies the initial support and equilibrium and stamps a PespState.
inline PespState initial_pesp_state(const ModelParams& params, const ClassTable& classes,
                                    const std::vector<int>& support, const Eigen::VectorXd& x0,
                                    const PespOptions& opt = {}) {
  auto [ok, report] = check_coexistence(params, classes, support, x0, opt.coexistence);
  if (!ok)
    throw SupportError("initial support is not a coexistence state (residual " +
                       std::to_string(report.residual) + ", rightmost eigenvalue " +
                       std::to_string(report.eigenvalue_max_real) + ")");
  PespState state;
  state.support = support;
  state.equilibrium = report.equilibrium;
  state.time = 0.0;
  return state;
}

// Runs the chain to t_end on the evolutionary clock. Events beyond t_end
// are discarded and the clock truncated.
inline PespChain simulate_pesp(const PespState& state0, const ModelParams& params,
                               const ClassTable& classes, double t_end, Rng& rng,
                               const PespOptions& opt = {}) {
  PespChain chain;
  BranchingCache cache;
  PespState state = state0;
  chain.entries.push_back({state.time, PespEventKind::Jump, state.support, state.equilibrium,
                           -1, -1, 0.0, 1.0});
  while (state.time < t_end) {
    PespStepResult step;
    try {
      step = pesp_step(state, params, classes, rng, cache, opt);
    } catch (const ExtinctError&) {
      chain.extinct = true;
      break;
    }
    if (!(step.waiting_time < std::numeric_limits<double>::infinity())) {
      state.time = t_end;
      break;
    }
    if (step.state.time > t_end) {
      state.time = t_end;
      break;
    }
    state = std::move(step.state);
    if (step.kind == PespEventKind::Jump || step.kind == PespEventKind::NullInSupport) {
      chain.entries.push_back({state.time, step.kind, state.support, state.equilibrium,
                               step.parent, step.mutant, step.lambda_max, step.q});
    }
  }
  chain.final_time = state.time;
  return chain;
}

}  // namespace plasticity
