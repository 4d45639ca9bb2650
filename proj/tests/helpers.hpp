#pragma once

// Shared fixtures and independent oracles for the test suites.

#include <cmath>
#include <functional>
#include <vector>

#include "plasticity/model.hpp"
#include "plasticity/ode.hpp"
#include "plasticity/rng.hpp"

namespace testing_support {

using namespace plasticity;

// Two coexisting resident phenotypes (switching 1 and 2), a fitter mutant
// class (switching 1.5 and 2), uniform cross-competition 0.7.
inline ModelParams table1_params() {
  TraitSpace sp{{"g", "gt"}, {"p1", "p2", "pt1", "pt2"}};
  auto m = make_empty_params(sp);
  m.birth = {3, 3, 5, 4};
  m.death = {1, 1, 1, 1};
  const double c[4][4] = {{1, 0.7, 0.7, 0.7},
                          {0.7, 1, 0.7, 0.7},
                          {0.7, 0.7, 1, 0.7},
                          {0.7, 0.7, 0.7, 1}};
  for (int p = 0; p < 4; ++p)
    for (int q = 0; q < 4; ++q) m.competition[p * 4 + q] = c[p][q];
  m.switch_natural[0][0 * 4 + 1] = 1;
  m.switch_natural[0][1 * 4 + 0] = 2;
  m.switch_natural[1][2 * 4 + 3] = 1.5;
  m.switch_natural[1][3 * 4 + 2] = 2;
  m.K = 2000;
  m.u_K = 0;
  return m;
}

// Table 1 restricted to the resident genotype (for large-K limit checks).
inline ModelParams table1_residents_params() {
  TraitSpace sp{{"g"}, {"p1", "p2"}};
  auto m = make_empty_params(sp);
  m.birth = {3, 3};
  m.death = {1, 1};
  m.competition = {1, 0.7, 0.7, 1};
  m.switch_natural[0][0 * 2 + 1] = 1;
  m.switch_natural[0][1 * 2 + 0] = 2;
  m.K = 10000;
  m.u_K = 0;
  return m;
}

// Single resident phenotype at equilibrium 2, a two-phenotype mutant class.
// back_switch = 0.6 is the weak-backswitch example, 2 the strong one.
inline ModelParams example_params(double back_switch) {
  TraitSpace sp{{"g", "gt"}, {"p", "pt1", "pt2"}};
  auto m = make_empty_params(sp);
  m.birth = {3, 2, 4};
  m.death = {1, 1, 1};
  const double c[3][3] = {{1, 1, 0.7}, {1, 1, 0.5}, {0.7, 0.5, 1}};
  for (int p = 0; p < 3; ++p)
    for (int q = 0; q < 3; ++q) m.competition[p * 3 + q] = c[p][q];
  m.switch_natural[1][1 * 3 + 2] = 2;
  m.switch_natural[1][2 * 3 + 1] = back_switch;
  m.K = 1000;
  m.u_K = 0;
  return m;
}

inline ModelParams exampleA_params() { return example_params(0.6); }
inline ModelParams exampleB_params() { return example_params(2.0); }

// Ten phenotypes in four closed classes: a 4-cycle with a chord, a 3-cycle,
// an isolated state and a 2-cycle.
inline ModelParams fig1_params() {
  TraitSpace sp{{"g"},
                {"p1", "p2", "p3", "p4", "p5", "p6", "p7", "p8", "p9", "p10"}};
  auto m = make_empty_params(sp);
  m.birth.assign(10, 2);
  m.death.assign(10, 1);
  for (int p = 0; p < 10; ++p) m.competition[p * 10 + p] = 1;
  auto edge = [&](int a, int b, double rate) { m.switch_natural[0][a * 10 + b] = rate; };
  edge(0, 1, 1);
  edge(1, 2, 1);
  edge(2, 3, 1);
  edge(3, 0, 1);
  edge(0, 2, 0.5);
  edge(4, 5, 1);
  edge(5, 6, 1);
  edge(6, 4, 1);
  edge(8, 9, 1);
  edge(9, 8, 1);
  m.K = 1000;
  return m;
}

// Table 1 plus a deterministic mutation channel from the residents to the
// mutant class, for evolution-sequence tests. Every trait of the mutating
// genotype needs a stochastic law row, including the never-populated ones.
inline ModelParams ladder_params() {
  auto m = table1_params();
  m.mutation_prob[0] = 1.0;
  const int to = m.space.trait(1, 2);
  for (int p = 0; p < m.n_pheno(); ++p)
    m.mutation_law[m.space.trait(0, p) * m.n_traits() + to] = 1.0;
  m.u_K = 1e-5;
  return m;
}

// Central-difference Jacobian, the independent oracle for the analytic one.
template <typename Field>
Matrix fd_jacobian(const Field& field, const Vector& x, double h = 1e-5) {
  const int n = static_cast<int>(x.size());
  Matrix j(n, n);
  for (int k = 0; k < n; ++k) {
    Vector hi = x, lo = x;
    hi[k] += h;
    lo[k] -= h;
    j.col(k) = (field(hi) - field(lo)) / (2 * h);
  }
  return j;
}

// Random valid parameter set. Natural switch patterns are made symmetric
// (p->q iff q->p) so every communicating class is closed; induced switches
// share the natural zero pattern; mutation-law rows are stochastic wherever
// the genotype mutates.
inline ModelParams random_params(Rng& rng, bool with_mutation = true) {
  const int G = 1 + static_cast<int>(rng.next_u64() % 3);
  const int P = 2 + static_cast<int>(rng.next_u64() % 3);
  TraitSpace sp;
  for (int g = 0; g < G; ++g) sp.genotypes.push_back("g" + std::to_string(g));
  for (int p = 0; p < P; ++p) sp.phenotypes.push_back("p" + std::to_string(p));
  auto m = make_empty_params(sp);
  for (int p = 0; p < P; ++p) {
    m.birth[p] = 0.5 + 4.0 * rng.next_unit();
    m.death[p] = 0.2 + 1.5 * rng.next_unit();
    for (int q = 0; q < P; ++q) m.competition[p * P + q] = rng.next_unit();
  }
  for (int g = 0; g < G; ++g)
    for (int p = 0; p < P; ++p)
      for (int q = p + 1; q < P; ++q)
        if (rng.next_unit() < 0.6) {
          m.switch_natural[g][p * P + q] = 0.2 + 2.0 * rng.next_unit();
          m.switch_natural[g][q * P + p] = 0.2 + 2.0 * rng.next_unit();
          for (int r = 0; r < P; ++r) {
            if (rng.next_unit() < 0.5) m.switch_induced[g][(p * P + q) * P + r] = rng.next_unit();
            if (rng.next_unit() < 0.5) m.switch_induced[g][(q * P + p) * P + r] = rng.next_unit();
          }
        }
  if (with_mutation) {
    const int X = m.n_traits();
    for (int g = 0; g < G; ++g) m.mutation_prob[g] = rng.next_unit() < 0.5 ? rng.next_unit() : 0.0;
    for (int i = 0; i < X; ++i) {
      if (m.mutation_prob[sp.geno_of(i)] == 0.0) continue;
      double total = 0.0;
      std::vector<double> row(X);
      for (int j = 0; j < X; ++j) total += row[j] = rng.next_unit();
      for (int j = 0; j < X; ++j) m.mutation_law[i * X + j] = row[j] / total;
    }
  }
  m.K = 100 + static_cast<std::int64_t>(rng.next_u64() % 1000);
  m.u_K = with_mutation ? rng.next_unit() : 0.0;
  return m;
}

// Kolmogorov-Smirnov statistic of samples against an exponential(rate) law.
inline double ks_exponential(std::vector<double> samples, double rate) {
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double cdf = 1.0 - std::exp(-rate * samples[i]);
    d = std::max(d, std::abs(cdf - static_cast<double>(i) / n));
    d = std::max(d, std::abs(static_cast<double>(i + 1) / n - cdf));
  }
  return d;
}

}  // namespace testing_support
