#pragma once

// Multi-type branching analysis of a mutant class in a frozen resident
// background. While the mutant population is small the residents sit at
// their equilibrium, so each mutant individual of phenotype p_i branches
// independently with
//   birth  b(p_i)
//   death  D(p_i) = d(p_i) + sum_resident c(p_i, p) nbar_(g,p)
//   switch S(p_i, p_j) = s_nat(p_i,p_j) + sum_resident s_ind(p_i,p_j)(p) nbar
// The class generator A (rows indexed by the source type) decides
// everything: the invasion fitness is its dominant eigenvalue, and the
// extinction probabilities solve the quadratic generating-function system.

#include <Eigen/Dense>
#include <cassert>
#include <cstdint>
#include <vector>

#include "plasticity/errors.hpp"
#include "plasticity/linalg.hpp"
#include "plasticity/model.hpp"
#include "plasticity/rng.hpp"
#include "plasticity/switch_graph.hpp"

namespace plasticity {

struct BranchingSpec {
  int genotype = -1;
  std::vector<int> class_phenotypes;  // ascending phenotype indices
  Eigen::VectorXd birth;
  Eigen::VectorXd death_total;
  Eigen::MatrixXd switch_rates;  // zero diagonal, [i][j] = rate i -> j

  int size() const { return static_cast<int>(class_phenotypes.size()); }
  int index_of(int pheno) const {
    for (int i = 0; i < size(); ++i)
      if (class_phenotypes[i] == pheno) return i;
    throw SupportError("phenotype not in the mutant class");
  }
};

// Freezes the resident background into per-type rates for the mutant class.
inline BranchingSpec build_branching_spec(const ModelParams& params, const ClassTable& classes,
                                          const std::vector<int>& resident_support,
                                          const Eigen::VectorXd& resident_eq, int mutant_trait) {
  for (int trait : resident_support)
    if (trait == mutant_trait)
      throw SupportError("mutant trait already belongs to the resident support");

  const int g = params.space.geno_of(mutant_trait);
  const auto& members = classes.class_members(g, params.space.pheno_of(mutant_trait));
  for (int q : members)
    for (int trait : resident_support)
      if (trait == params.space.trait(g, q))
        throw SupportError("mutant class intersects the resident support");

  std::vector<double> mar(params.n_pheno(), 0.0);
  for (std::size_t i = 0; i < resident_support.size(); ++i)
    mar[params.space.pheno_of(resident_support[i])] += resident_eq[static_cast<int>(i)];

  const int k = static_cast<int>(members.size());
  BranchingSpec spec;
  spec.genotype = g;
  spec.class_phenotypes = members;
  spec.birth.resize(k);
  spec.death_total.resize(k);
  spec.switch_rates = Eigen::MatrixXd::Zero(k, k);
  for (int i = 0; i < k; ++i) {
    const int p = members[i];
    spec.birth[i] = params.birth[p];
    double death = params.death[p];
    for (int q = 0; q < params.n_pheno(); ++q) death += params.comp(p, q) * mar[q];
    spec.death_total[i] = death;
    for (int j = 0; j < k; ++j) {
      if (j == i) continue;
      double rate = params.s_nat(g, p, members[j]);
      for (int r = 0; r < params.n_pheno(); ++r)
        rate += params.s_ind(g, p, members[j], r) * mar[r];
      spec.switch_rates(i, j) = rate;
    }
  }
  return spec;
}

// Generator of the mean semigroup M(t) = exp(A t). The diagonal holds the
// apparent per-type fitness b - D - (outgoing switches); off-diagonals hold
// the switch rates, row = source type.
inline Eigen::MatrixXd generator_matrix(const BranchingSpec& spec) {
  const int k = spec.size();
  Eigen::MatrixXd a = spec.switch_rates;
  for (int i = 0; i < k; ++i) {
    double out = 0.0;
    for (int j = 0; j < k; ++j)
      if (j != i) out += spec.switch_rates(i, j);
    a(i, i) = spec.birth[i] - spec.death_total[i] - out;
  }
  return a;
}

inline Eigen::MatrixXd mean_matrix(const BranchingSpec& spec, double t) {
  return expm(generator_matrix(spec) * t);
}

struct ExtinctionVector {
  Eigen::VectorXd q;
  bool supercritical = false;
  long iterations = 0;
};

// Generating-function system whose root in the unit cube is the extinction
// vector: u_i(y) = b_i y_i^2 + sum_j S_ij y_j + D_i - (b_i + sum_j S_ij + D_i) y_i.
inline Eigen::VectorXd extinction_residual(const BranchingSpec& spec, const Eigen::VectorXd& y) {
  const int k = spec.size();
  Eigen::VectorXd u(k);
  for (int i = 0; i < k; ++i) {
    double cross = 0.0, total_switch = 0.0;
    for (int j = 0; j < k; ++j) {
      cross += spec.switch_rates(i, j) * y[j];
      total_switch += spec.switch_rates(i, j);
    }
    const double rate = spec.birth[i] + total_switch + spec.death_total[i];
    u[i] = spec.birth[i] * y[i] * y[i] + cross + spec.death_total[i] - rate * y[i];
  }
  return u;
}

struct ExtinctionOptions {
  double tol = 1e-12;          // sup-norm change per sweep
  long max_iterations = 1000000;
  double critical_band = 1e-10;  // |lambda_max| below this counts as critical
};

// Componentwise-minimal root of u(y) = 0 in the unit cube, found by the
// monotone fixed-point iteration from y = 0. The iterates are nondecreasing
// and bounded by 1, so they converge to the minimal root; subcritical and
// critical classes get q = (1,...,1) outright.
inline ExtinctionVector extinction_vector(const BranchingSpec& spec,
                                          const ExtinctionOptions& opt = {}) {
  const int k = spec.size();
  ExtinctionVector result;
  const double lambda = perron_root(generator_matrix(spec)).lambda;
  if (lambda <= opt.critical_band) {
    result.q = Eigen::VectorXd::Ones(k);
    result.supercritical = false;
    return result;
  }
  result.supercritical = true;

  Eigen::VectorXd total_rate(k);
  for (int i = 0; i < k; ++i) {
    double total_switch = 0.0;
    for (int j = 0; j < k; ++j) total_switch += spec.switch_rates(i, j);
    total_rate[i] = spec.birth[i] + total_switch + spec.death_total[i];
    if (!(total_rate[i] > 0.0))
      throw NumericalError("branching type with zero total rate in a supercritical class");
  }

  Eigen::VectorXd y = Eigen::VectorXd::Zero(k);
  for (long iter = 0; iter < opt.max_iterations; ++iter) {
    Eigen::VectorXd next(k);
    for (int i = 0; i < k; ++i) {
      double cross = 0.0;
      for (int j = 0; j < k; ++j) cross += spec.switch_rates(i, j) * y[j];
      next[i] = (spec.birth[i] * y[i] * y[i] + cross + spec.death_total[i]) / total_rate[i];
      assert(next[i] >= y[i] - 1e-15 && next[i] <= 1.0 + 1e-15);
      if (next[i] > 1.0) next[i] = 1.0;
    }
    const double delta = (next - y).lpNorm<Eigen::Infinity>();
    y = std::move(next);
    result.iterations = iter + 1;
    if (delta <= opt.tol) {
      result.q = std::move(y);
      return result;
    }
  }
  throw IterationLimitError("extinction fixed-point iteration hit the iteration cap");
}

// Probability that a single mutant of the given trait, born into residents
// at equilibrium, founds a surviving population: 1 - q at the mutant's own
// phenotype.
inline double invasion_probability(const ModelParams& params, const ClassTable& classes,
                                   const std::vector<int>& resident_support,
                                   const Eigen::VectorXd& resident_eq, int mutant_trait) {
  const BranchingSpec spec =
      build_branching_spec(params, classes, resident_support, resident_eq, mutant_trait);
  const ExtinctionVector ext = extinction_vector(spec);
  if (!ext.supercritical) return 0.0;
  return 1.0 - ext.q[spec.index_of(params.space.pheno_of(mutant_trait))];
}

struct BranchingRunResult {
  bool reached_cap = false;
  std::vector<std::int64_t> counts;  // per class type, at the stopping time
  double time = 0.0;
};

// Direct simulation of the class branching process, for distributional
// checks: runs until extinction or until the total population reaches
// size_cap.
inline BranchingRunResult simulate_branching(const BranchingSpec& spec, int start_index, Rng& rng,
                                             std::int64_t size_cap) {
  const int k = spec.size();
  BranchingRunResult run;
  std::vector<std::int64_t> z(k, 0);
  z[start_index] = 1;
  std::int64_t total = 1;
  double t = 0.0;
  std::vector<double> weights(k * (k + 2));
  while (total > 0 && total < size_cap) {
    double total_rate = 0.0;
    for (int i = 0; i < k; ++i) {
      const auto zi = static_cast<double>(z[i]);
      weights[i * (k + 2)] = spec.birth[i] * zi;
      weights[i * (k + 2) + 1] = spec.death_total[i] * zi;
      for (int j = 0; j < k; ++j) weights[i * (k + 2) + 2 + j] = spec.switch_rates(i, j) * zi;
      for (int s = 0; s < k + 2; ++s) total_rate += weights[i * (k + 2) + s];
    }
    if (!(total_rate > 0.0)) break;
    t += rng.next_exponential(total_rate);
    const std::size_t pick = rng.next_index(weights, total_rate);
    const int i = static_cast<int>(pick / (k + 2));
    const int slot = static_cast<int>(pick % (k + 2));
    if (slot == 0) {
      ++z[i];
      ++total;
    } else if (slot == 1) {
      --z[i];
      --total;
    } else {
      --z[i];
      ++z[slot - 2];
    }
  }
  run.reached_cap = total >= size_cap;
  run.counts = std::move(z);
  run.time = t;
  return run;
}

}  // namespace plasticity
