#pragma once

// Trait space and model parameters for individual-based population dynamics
// with phenotypic plasticity. Individuals carry a (genotype, phenotype)
// trait; phenotypes switch within a genotype at natural rates plus rates
// induced by the ambient phenotype densities, and genotypes change only by
// mutation at birth.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "plasticity/errors.hpp"

namespace plasticity {

struct TraitSpace {
  std::vector<std::string> genotypes;
  std::vector<std::string> phenotypes;

  int n_geno() const { return static_cast<int>(genotypes.size()); }
  int n_pheno() const { return static_cast<int>(phenotypes.size()); }
  int n_traits() const { return n_geno() * n_pheno(); }

  // Traits are ordered genotype-major; this order is the column order of
  // every trajectory and the row order of the mutation law.
  int trait(int g, int p) const { return g * n_pheno() + p; }
  int geno_of(int trait) const { return trait / n_pheno(); }
  int pheno_of(int trait) const { return trait % n_pheno(); }

  std::string trait_name(int trait) const {
    return genotypes[geno_of(trait)] + ":" + phenotypes[pheno_of(trait)];
  }

  int find_genotype(const std::string& name) const {
    auto it = std::find(genotypes.begin(), genotypes.end(), name);
    if (it == genotypes.end()) throw SupportError("unknown genotype '" + name + "'");
    return static_cast<int>(it - genotypes.begin());
  }
  int find_phenotype(const std::string& name) const {
    auto it = std::find(phenotypes.begin(), phenotypes.end(), name);
    if (it == phenotypes.end()) throw SupportError("unknown phenotype '" + name + "'");
    return static_cast<int>(it - phenotypes.begin());
  }
};

// All rate kernels of the model. Rates are per unit time; the competition
// kernel and the induced switch kernel are per unit density (their 1/K
// scaling in the microscopic process is applied by the simulator, which
// works with densities).
struct ModelParams {
  TraitSpace space;

  std::vector<double> birth;  // per phenotype
  std::vector<double> death;  // per phenotype

  // competition[p * P + q] = pressure a p-individual feels per unit density
  // of phenotype q.
  std::vector<double> competition;

  // switch_natural[g][p * P + q] = rate of switching p -> q under genotype
  // g. Diagonal forced to zero at construction (a self-switch is a no-op).
  std::vector<std::vector<double>> switch_natural;

  // switch_induced[g][(p * P + q) * P + r] = rate per unit density of the
  // inducing phenotype r. Same zero pattern as switch_natural by model
  // assumption; diagonal (p == q) forced to zero.
  std::vector<std::vector<double>> switch_induced;

  std::vector<double> mutation_prob;  // m(g), scaled by u_K at birth
  std::vector<double> mutation_law;   // |X| x |X| row-stochastic where m(g) > 0

  std::int64_t K = 1;
  double u_K = 0.0;

  int n_pheno() const { return space.n_pheno(); }
  int n_traits() const { return space.n_traits(); }

  double comp(int p, int q) const { return competition[p * n_pheno() + q]; }
  double s_nat(int g, int p, int q) const { return switch_natural[g][p * n_pheno() + q]; }
  double s_ind(int g, int p, int q, int r) const {
    return switch_induced[g][(p * n_pheno() + q) * n_pheno() + r];
  }
  double mut_law(int from_trait, int to_trait) const {
    return mutation_law[from_trait * n_traits() + to_trait];
  }

  // Zeroes the diagonal of both switch kernels; call after filling tables.
  void normalize_switch_diagonals() {
    const int P = n_pheno();
    for (auto& table : switch_natural)
      for (int p = 0; p < P; ++p) table[p * P + p] = 0.0;
    for (auto& table : switch_induced)
      for (int p = 0; p < P; ++p)
        for (int r = 0; r < P; ++r) table[(p * P + p) * P + r] = 0.0;
  }
};

inline ModelParams make_empty_params(TraitSpace space) {
  ModelParams m;
  m.space = std::move(space);
  const int P = m.space.n_pheno();
  const int G = m.space.n_geno();
  const int X = m.space.n_traits();
  m.birth.assign(P, 0.0);
  m.death.assign(P, 0.0);
  m.competition.assign(P * P, 0.0);
  m.switch_natural.assign(G, std::vector<double>(P * P, 0.0));
  m.switch_induced.assign(G, std::vector<double>(P * P * P, 0.0));
  m.mutation_prob.assign(G, 0.0);
  m.mutation_law.assign(X * X, 0.0);
  return m;
}

// Microscopic state: integer individual counts per trait. density(x) is
// counts(x)/K, matching the rescaled point measure the process lives on.
struct PopulationState {
  std::vector<std::int64_t> counts;
  std::int64_t K = 1;
  double time = 0.0;

  double density(int trait) const { return static_cast<double>(counts[trait]) / static_cast<double>(K); }
  std::int64_t total_count() const {
    std::int64_t n = 0;
    for (auto c : counts) n += c;
    return n;
  }
};

// Nonnegative densities on an ordered trait subset (ODE state, equilibria).
struct DensityVector {
  std::vector<int> support;   // trait indices, strictly increasing
  std::vector<double> values;
};

struct ValidationReport {
  std::vector<std::string> violations;
  std::vector<std::string> warnings;
  bool valid() const { return violations.empty(); }
};

// Checks every structural invariant of the parameters and reports all
// violations; never aborts on the first one.
inline ValidationReport validate_model(const ModelParams& m) {
  ValidationReport report;
  auto bad = [&report](std::string msg) { report.violations.push_back(std::move(msg)); };

  const int P = m.space.n_pheno();
  const int G = m.space.n_geno();
  const int X = m.space.n_traits();

  if (m.space.genotypes.empty()) bad("genotype list is empty");
  if (m.space.phenotypes.empty()) bad("phenotype list is empty");
  for (int g = 0; g < G; ++g)
    for (int h = g + 1; h < G; ++h)
      if (m.space.genotypes[g] == m.space.genotypes[h])
        bad("duplicate genotype '" + m.space.genotypes[g] + "'");
  for (int p = 0; p < P; ++p)
    for (int q = p + 1; q < P; ++q)
      if (m.space.phenotypes[p] == m.space.phenotypes[q])
        bad("duplicate phenotype '" + m.space.phenotypes[p] + "'");

  auto check_rate = [&](double v, const std::string& what) {
    if (!(v >= 0.0) || !std::isfinite(v)) bad(what + " must be a finite nonnegative rate");
  };
  for (int p = 0; p < P; ++p) {
    check_rate(m.birth[p], "birth(" + m.space.phenotypes[p] + ")");
    check_rate(m.death[p], "death(" + m.space.phenotypes[p] + ")");
    for (int q = 0; q < P; ++q)
      check_rate(m.comp(p, q),
                 "competition(" + m.space.phenotypes[p] + "," + m.space.phenotypes[q] + ")");
  }
  for (int g = 0; g < G; ++g) {
    for (int p = 0; p < P; ++p)
      for (int q = 0; q < P; ++q) {
        check_rate(m.s_nat(g, p, q), "switch_natural^" + m.space.genotypes[g] + "(" +
                                         m.space.phenotypes[p] + "," + m.space.phenotypes[q] + ")");
        for (int r = 0; r < P; ++r)
          check_rate(m.s_ind(g, p, q, r),
                     "switch_induced^" + m.space.genotypes[g] + "(" + m.space.phenotypes[p] + "," +
                         m.space.phenotypes[q] + ")(" + m.space.phenotypes[r] + ")");
      }
  }

  // Induced switching is only allowed where natural switching is possible:
  // the environment may scale the total switch rate up or down but must not
  // turn a zero rate into a nonzero one.
  for (int g = 0; g < G; ++g)
    for (int p = 0; p < P; ++p)
      for (int q = 0; q < P; ++q)
        if (m.s_nat(g, p, q) == 0.0)
          for (int r = 0; r < P; ++r)
            if (m.s_ind(g, p, q, r) != 0.0) {
              bad("induced switch without natural switch: genotype " + m.space.genotypes[g] +
                  ", " + m.space.phenotypes[p] + "->" + m.space.phenotypes[q]);
              break;
            }

  for (int g = 0; g < G; ++g) {
    const double mg = m.mutation_prob[g];
    if (!(mg >= 0.0 && mg <= 1.0))
      bad("mutation_prob(" + m.space.genotypes[g] + ") must lie in [0,1]");
  }
  if (!(m.u_K >= 0.0 && m.u_K <= 1.0)) bad("u_K must lie in [0,1]");
  if (m.K <= 0) bad("K must be a positive integer");

  for (int i = 0; i < X; ++i)
    for (int j = 0; j < X; ++j) {
      const double v = m.mut_law(i, j);
      if (!(v >= 0.0 && v <= 1.0)) {
        bad("mutation law entry " + m.space.trait_name(i) + " -> " + m.space.trait_name(j) +
            " must lie in [0,1]");
      }
    }
  for (int i = 0; i < X; ++i) {
    if (m.mutation_prob[m.space.geno_of(i)] == 0.0) continue;
    double row = 0.0;
    for (int j = 0; j < X; ++j) row += m.mut_law(i, j);
    if (std::abs(row - 1.0) > 1e-12)
      bad("mutation law row not stochastic for trait " + m.space.trait_name(i) +
          " (sums to " + std::to_string(row) + ")");
  }

  // The separation-of-time-scales regime wants u_K well below 1/(K ln K).
  // That is an asymptotic statement, so a violation is only a warning.
  if (m.u_K > 0.0 && m.K > 1) {
    const double kl = m.u_K * static_cast<double>(m.K) * std::log(static_cast<double>(m.K));
    if (kl >= 1.0)
      report.warnings.push_back(
          "u_K * K * ln(K) = " + std::to_string(kl) +
          " >= 1; mutations may not be rare on the ecological time scale");
  }

  return report;
}

// Sum of densities over genotypes, per phenotype.
inline std::vector<double> phenotype_marginal(const TraitSpace& space,
                                              const PopulationState& state) {
  std::vector<double> marginal(space.n_pheno(), 0.0);
  for (int x = 0; x < space.n_traits(); ++x)
    marginal[space.pheno_of(x)] += state.density(x);
  return marginal;
}

inline std::vector<double> phenotype_marginal(const TraitSpace& space, const DensityVector& dv) {
  std::vector<double> marginal(space.n_pheno(), 0.0);
  for (std::size_t i = 0; i < dv.support.size(); ++i)
    marginal[space.pheno_of(dv.support[i])] += dv.values[i];
  return marginal;
}

}  // namespace plasticity
