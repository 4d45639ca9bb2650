#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"
#include "plasticity/branching.hpp"
#include "plasticity/ode.hpp"

using namespace plasticity;
using namespace testing_support;

namespace {

struct WorkedCase {
  ModelParams params;
  ClassTable classes;
  std::vector<int> residents;
  Vector equilibrium;
  explicit WorkedCase(ModelParams m, std::vector<int> support, Vector x0)
      : params(std::move(m)), classes(params), residents(std::move(support)) {
    auto [ok, report] = check_coexistence(params, classes, residents, std::move(x0));
    REQUIRE(ok);
    equilibrium = report.equilibrium;
  }
};

WorkedCase table1_case() {
  Vector x0(2);
  x0 << 1.5, 0.8;
  return WorkedCase(table1_params(), {0, 1}, x0);
}

WorkedCase exampleA_case() {
  Vector x0(1);
  x0 << 2.0;
  return WorkedCase(exampleA_params(), {0}, x0);
}

WorkedCase exampleB_case() {
  Vector x0(1);
  x0 << 2.0;
  return WorkedCase(exampleB_params(), {0}, x0);
}

BranchingSpec singleton_spec(double b, double d) {
  BranchingSpec spec;
  spec.genotype = 0;
  spec.class_phenotypes = {0};
  spec.birth = Vector::Constant(1, b);
  spec.death_total = Vector::Constant(1, d);
  spec.switch_rates = Matrix::Zero(1, 1);
  return spec;
}

// Random positive spec with an irreducible switch pattern (a full cycle
// plus random extras).
BranchingSpec random_spec(Rng& rng) {
  const int k = 1 + static_cast<int>(rng.next_u64() % 4);
  BranchingSpec spec;
  spec.genotype = 0;
  spec.birth.resize(k);
  spec.death_total.resize(k);
  spec.switch_rates = Matrix::Zero(k, k);
  for (int i = 0; i < k; ++i) {
    spec.class_phenotypes.push_back(i);
    spec.birth[i] = 0.2 + 4.0 * rng.next_unit();
    spec.death_total[i] = 0.2 + 4.0 * rng.next_unit();
    if (k > 1) spec.switch_rates(i, (i + 1) % k) = 0.2 + 2.0 * rng.next_unit();
    for (int j = 0; j < k; ++j)
      if (j != i && rng.next_unit() < 0.3) spec.switch_rates(i, j) = 2.0 * rng.next_unit();
  }
  return spec;
}

}  // namespace

TEST_CASE("frozen-background rates of the worked examples") {
  auto t1 = table1_case();
  const auto spec = build_branching_spec(t1.params, t1.classes, t1.residents, t1.equilibrium,
                                         t1.params.space.trait(1, 2));
  CHECK(spec.birth[0] == 5.0);
  CHECK(spec.birth[1] == 4.0);
  CHECK(spec.death_total[0] == Catch::Approx(2.621).margin(2e-3));
  CHECK(spec.death_total[1] == Catch::Approx(2.621).margin(2e-3));
  CHECK(spec.switch_rates(0, 1) == 1.5);
  CHECK(spec.switch_rates(1, 0) == 2.0);
  CHECK(spec.switch_rates(0, 0) == 0.0);

  auto ea = exampleA_case();
  const auto sa = build_branching_spec(ea.params, ea.classes, ea.residents, ea.equilibrium,
                                       ea.params.space.trait(1, 1));
  CHECK(sa.birth[0] == 2.0);
  CHECK(sa.birth[1] == 4.0);
  CHECK(sa.death_total[0] == Catch::Approx(3.0).margin(1e-9));
  CHECK(sa.death_total[1] == Catch::Approx(2.4).margin(1e-9));
  CHECK(sa.switch_rates(0, 1) == 2.0);
  CHECK(sa.switch_rates(1, 0) == 0.6);
}

TEST_CASE("a switchless mutant forms a singleton class") {
  auto ea = exampleA_case();
  // the resident phenotype under the mutant genotype never switches
  const auto spec = build_branching_spec(ea.params, ea.classes, ea.residents, ea.equilibrium,
                                         ea.params.space.trait(1, 0));
  CHECK(spec.size() == 1);
  CHECK(spec.birth[0] == 3.0);
}

TEST_CASE("mutants inside or overlapping the residents are rejected") {
  auto t1 = table1_case();
  CHECK_THROWS_AS(build_branching_spec(t1.params, t1.classes, t1.residents, t1.equilibrium,
                                       t1.params.space.trait(0, 0)),
                  SupportError);
  // same class as a resident, different phenotype
  CHECK_THROWS_AS(build_branching_spec(t1.params, t1.classes, {t1.params.space.trait(0, 0)},
                                       Vector::Constant(1, 1.0), t1.params.space.trait(0, 1)),
                  SupportError);
}

TEST_CASE("generator matrices of the worked examples") {
  auto t1 = table1_case();
  const auto a = generator_matrix(build_branching_spec(
      t1.params, t1.classes, t1.residents, t1.equilibrium, t1.params.space.trait(1, 2)));
  CHECK(a(0, 0) == Catch::Approx(0.879).margin(2e-3));
  CHECK(a(0, 1) == Catch::Approx(1.5).margin(2e-3));
  CHECK(a(1, 0) == Catch::Approx(2.0).margin(2e-3));
  CHECK(a(1, 1) == Catch::Approx(-0.621).margin(2e-3));

  auto eb = exampleB_case();
  const auto ab = generator_matrix(build_branching_spec(
      eb.params, eb.classes, eb.residents, eb.equilibrium, eb.params.space.trait(1, 1)));
  CHECK(ab(0, 0) == Catch::Approx(-3.0).margin(1e-9));
  CHECK(ab(0, 1) == Catch::Approx(2.0).margin(1e-9));
  CHECK(ab(1, 0) == Catch::Approx(2.0).margin(1e-9));
  CHECK(ab(1, 1) == Catch::Approx(-0.4).margin(1e-9));
}

TEST_CASE("third-step generator for the doomed residents") {
  // After the invasion the old residents sit in the new background; their
  // class generator has the worked diagonal and the switch rates 1 (p1->p2)
  // and 2 (p2->p1) on the off-diagonal, row = source type.
  auto m = table1_params();
  ClassTable classes(m);
  std::vector<int> new_residents = {m.space.trait(1, 2), m.space.trait(1, 3)};
  Vector nstar(2);
  nstar << 2.608, 1.608;
  const auto a = generator_matrix(
      build_branching_spec(m, classes, new_residents, nstar, m.space.trait(0, 0)));
  CHECK(a(0, 0) == Catch::Approx(-1.951).margin(2e-3));
  CHECK(a(0, 1) == Catch::Approx(1.0).margin(2e-3));
  CHECK(a(1, 0) == Catch::Approx(2.0).margin(2e-3));
  CHECK(a(1, 1) == Catch::Approx(-2.951).margin(2e-3));
  CHECK(perron_root(a).lambda == Catch::Approx(-0.951).margin(2e-3));
}

TEST_CASE("dominant eigenvalues of the worked matrices") {
  Matrix a(2, 2);
  a << 0.879, 1.5, 2, -0.621;
  CHECK(perron_root(a).lambda == Catch::Approx(2.016).margin(2e-3));
  a << -3, 2, 0.6, 1;
  CHECK(perron_root(a).lambda == Catch::Approx(1.280).margin(2e-3));
  a << -1.951, 2, 1, -2.951;
  CHECK(perron_root(a).lambda == Catch::Approx(-0.951).margin(2e-3));
}

TEST_CASE("perron eigenpairs solve both orientations") {
  Rng rng(13);
  for (int round = 0; round < 50; ++round) {
    const auto spec = random_spec(rng);
    const Matrix a = generator_matrix(spec);
    const auto perron = perron_root(a);
    const double norm = std::max(1.0, a.cwiseAbs().rowwise().sum().maxCoeff());
    CHECK((a * perron.reproductive_value - perron.lambda * perron.reproductive_value)
              .lpNorm<Eigen::Infinity>() <= 1e-10 * norm);
    CHECK((a.transpose() * perron.composition - perron.lambda * perron.composition)
              .lpNorm<Eigen::Infinity>() <= 1e-10 * norm);
    CHECK(perron.composition.sum() == Catch::Approx(1.0).margin(1e-12));
    CHECK(perron.reproductive_value.sum() == Catch::Approx(1.0).margin(1e-12));
  }
}

TEST_CASE("a reducible class is refused") {
  // two non-communicating types with distinct growth rates: the iteration
  // drives the slower type's weight to zero
  BranchingSpec spec;
  spec.genotype = 0;
  spec.class_phenotypes = {0, 1};
  spec.birth = Vector::Constant(2, 2.0);
  spec.birth[1] = 1.0;
  spec.death_total = Vector::Constant(2, 1.0);
  spec.death_total[1] = 1.5;
  spec.switch_rates = Matrix::Zero(2, 2);  // no communication at all
  CHECK_THROWS_AS(perron_root(generator_matrix(spec)), NonIrreducibleError);
}

TEST_CASE("extinction probabilities of the weak-backswitch example") {
  auto ea = exampleA_case();
  const auto spec = build_branching_spec(ea.params, ea.classes, ea.residents, ea.equilibrium,
                                         ea.params.space.trait(1, 1));
  const auto ext = extinction_vector(spec);
  REQUIRE(ext.supercritical);
  CHECK(1.0 - ext.q[0] == Catch::Approx(0.199).margin(2e-3));
  CHECK(1.0 - ext.q[1] == Catch::Approx(0.338).margin(2e-3));

  // the literal quadratic system from the worked example
  const double y1 = ext.q[0], y2 = ext.q[1];
  CHECK(std::abs(2 * y1 * y1 + 2 * y2 + 3 - 7 * y1) <= 1e-9);
  CHECK(std::abs(4 * y2 * y2 + 0.6 * y1 + 2.4 - 7 * y2) <= 1e-9);
  CHECK(extinction_residual(spec, ext.q).lpNorm<Eigen::Infinity>() <= 1e-9);
}

TEST_CASE("extinction probabilities of the strong-backswitch example") {
  auto eb = exampleB_case();
  const auto spec = build_branching_spec(eb.params, eb.classes, eb.residents, eb.equilibrium,
                                         eb.params.space.trait(1, 1));
  const auto ext = extinction_vector(spec);
  REQUIRE(ext.supercritical);
  CHECK(1.0 - ext.q[0] == Catch::Approx(0.127).margin(2e-3));
  CHECK(1.0 - ext.q[1] == Catch::Approx(0.207).margin(2e-3));
}

TEST_CASE("subcritical and scalar extinction") {
  const auto sub = extinction_vector(singleton_spec(2.0, 3.0));
  CHECK_FALSE(sub.supercritical);
  CHECK(sub.q[0] == 1.0);

  // scalar quadratic b y^2 + D - (b + D) y has roots {1, D/b}
  const auto super = extinction_vector(singleton_spec(4.0, 2.0));
  REQUIRE(super.supercritical);
  CHECK(super.q[0] == Catch::Approx(0.5).margin(1e-12));
}

TEST_CASE("invasion probability starts from the mutant's own phenotype") {
  auto ea = exampleA_case();
  CHECK(invasion_probability(ea.params, ea.classes, ea.residents, ea.equilibrium,
                             ea.params.space.trait(1, 1)) ==
        Catch::Approx(0.199).margin(2e-3));
  CHECK(invasion_probability(ea.params, ea.classes, ea.residents, ea.equilibrium,
                             ea.params.space.trait(1, 2)) ==
        Catch::Approx(0.338).margin(2e-3));

  // a mutant identical to the resident phenotype is exactly critical
  CHECK(invasion_probability(ea.params, ea.classes, ea.residents, ea.equilibrium,
                             ea.params.space.trait(1, 0)) == 0.0);
}

TEST_CASE("mean matrix identities") {
  auto ea = exampleA_case();
  const auto spec = build_branching_spec(ea.params, ea.classes, ea.residents, ea.equilibrium,
                                         ea.params.space.trait(1, 1));
  const Matrix m0 = mean_matrix(spec, 0.0);
  CHECK((m0 - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() <= 1e-14);

  Rng rng(17);
  for (int round = 0; round < 20; ++round) {
    const double s = 3.0 * rng.next_unit(), t = 3.0 * rng.next_unit();
    const Matrix lhs = mean_matrix(spec, s + t);
    const Matrix rhs = mean_matrix(spec, s) * mean_matrix(spec, t);
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-9 * std::max(1.0, lhs.cwiseAbs().maxCoeff()));
  }

  // total-progeny growth has log-slope lambda_max
  const double lambda = perron_root(generator_matrix(spec)).lambda;
  const double m5 = (mean_matrix(spec, 5.0) * Vector::Ones(2)).sum();
  const double m6 = (mean_matrix(spec, 6.0) * Vector::Ones(2)).sum();
  CHECK(std::log(m6 / m5) == Catch::Approx(lambda).epsilon(0.01));
}

TEST_CASE("supercriticality is equivalent to partial extinction") {
  Rng rng(19);
  for (int round = 0; round < 100; ++round) {
    const auto spec = random_spec(rng);
    const double lambda = perron_root(generator_matrix(spec)).lambda;
    const auto ext = extinction_vector(spec);
    if (lambda > 1e-10) {
      CHECK(ext.supercritical);
      for (int i = 0; i < spec.size(); ++i) CHECK(ext.q[i] < 1.0);
    } else {
      CHECK_FALSE(ext.supercritical);
      for (int i = 0; i < spec.size(); ++i) CHECK(ext.q[i] == 1.0);
    }
    if (ext.supercritical)
      CHECK(extinction_residual(spec, ext.q).lpNorm<Eigen::Infinity>() <= 1e-9);
  }
}

TEST_CASE("the fixed-point iteration is monotone from zero") {
  auto ea = exampleA_case();
  const auto spec = build_branching_spec(ea.params, ea.classes, ea.residents, ea.equilibrium,
                                         ea.params.space.trait(1, 1));
  // independent re-implementation of the sweep, asserting monotonicity
  const int k = spec.size();
  Vector y = Vector::Zero(k);
  for (int iter = 0; iter < 100000; ++iter) {
    Vector next(k);
    for (int i = 0; i < k; ++i) {
      double cross = 0.0, total_switch = 0.0;
      for (int j = 0; j < k; ++j) {
        cross += spec.switch_rates(i, j) * y[j];
        total_switch += spec.switch_rates(i, j);
      }
      const double rate = spec.birth[i] + total_switch + spec.death_total[i];
      next[i] = (spec.birth[i] * y[i] * y[i] + cross + spec.death_total[i]) / rate;
      REQUIRE(next[i] >= y[i] - 1e-15);
      REQUIRE(next[i] <= 1.0 + 1e-15);
    }
    if ((next - y).lpNorm<Eigen::Infinity>() <= 1e-13) break;
    y = next;
  }
  const auto ext = extinction_vector(spec);
  CHECK((y - ext.q).lpNorm<Eigen::Infinity>() <= 1e-10);
}

TEST_CASE("extinction is invariant under uniform time rescaling") {
  Rng rng(29);
  for (int round = 0; round < 20; ++round) {
    auto spec = random_spec(rng);
    const auto base = extinction_vector(spec);
    auto scaled = spec;
    const double factor = 0.25 + 4.0 * rng.next_unit();
    scaled.birth *= factor;
    scaled.death_total *= factor;
    scaled.switch_rates *= factor;
    const auto rescaled = extinction_vector(scaled);
    CHECK((base.q - rescaled.q).lpNorm<Eigen::Infinity>() <= 1e-12);
  }
}

TEST_CASE("surviving populations reach the dominant composition") {
  auto ea = exampleA_case();
  const auto spec = build_branching_spec(ea.params, ea.classes, ea.residents, ea.equilibrium,
                                         ea.params.space.trait(1, 1));
  const auto perron = perron_root(generator_matrix(spec));

  Rng rng(4711);
  const std::int64_t cap = 500;
  int survivors = 0;
  Vector mean_prop = Vector::Zero(2);
  while (survivors < 300) {
    Rng run_rng = rng.split();
    const auto run = simulate_branching(spec, 0, run_rng, cap);
    if (!run.reached_cap) continue;
    ++survivors;
    const double total = static_cast<double>(run.counts[0] + run.counts[1]);
    mean_prop[0] += run.counts[0] / total;
    mean_prop[1] += run.counts[1] / total;
  }
  mean_prop /= survivors;
  CHECK(std::abs(mean_prop[0] - perron.composition[0]) <= 0.05);
  CHECK(std::abs(mean_prop[1] - perron.composition[1]) <= 0.05);
}
