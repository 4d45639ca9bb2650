#pragma once

// Monte Carlo cross-validation of the branching theory against the exact
// microscopic process: release one mutant into residents at equilibrium and
// measure how often its class density reaches a fixation threshold before
// dying out. Replicates are deterministic per (seed, index) and fan out
// over a small worker pool.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <thread>
#include <utility>
#include <vector>

#include "plasticity/branching.hpp"
#include "plasticity/gillespie.hpp"
#include "plasticity/model.hpp"
#include "plasticity/ode.hpp"
#include "plasticity/rng.hpp"
#include "plasticity/stats.hpp"
#include "plasticity/switch_graph.hpp"

namespace plasticity {

struct McInvasionResult {
  double analytic = 0.0;   // 1 - q for the released mutant
  double empirical = 0.0;  // fixation fraction over the replicates
  long fixations = 0;
  long replicates = 0;
  std::pair<double, double> ci95{0.0, 0.0};  // exact binomial CI on empirical
  double epsilon = 0.0;
  std::int64_t K = 0;
};

// One replicate: true iff the mutant class density reaches eps before the
// class dies out. Mutation is switched off; the replicate probes the pure
// invasion dynamics the branching approximation describes.
inline bool invasion_replicate(const ModelParams& params_no_mut,
                               const std::vector<std::int64_t>& resident_counts, int mutant_trait,
                               const std::vector<int>& class_traits, double eps, Rng rng) {
  PopulationState state;
  state.K = params_no_mut.K;
  state.counts = resident_counts;
  state.counts[mutant_trait] += 1;

  const auto threshold =
      static_cast<std::int64_t>(std::ceil(eps * static_cast<double>(state.K)));
  RateCache cache(state, params_no_mut);
  while (true) {
    std::int64_t class_count = 0;
    for (int trait : class_traits) class_count += state.counts[trait];
    if (class_count == 0) return false;
    if (class_count >= threshold) return true;
    if (!(cache.total_rate() > 0.0)) return false;
    rng.next_exponential(cache.total_rate());  // advance the clock draw
    SimEvent ev = sample_event(cache.table(), cache.targets(), params_no_mut, rng);
    cache.apply(state, ev);
  }
}

inline McInvasionResult mc_invasion(const ModelParams& params, const ClassTable& classes,
                                    const std::vector<int>& resident_support,
                                    const Eigen::VectorXd& resident_eq, int mutant_trait,
                                    double eps, long replicates, std::uint64_t seed,
                                    unsigned n_threads = 0) {
  McInvasionResult result;
  result.epsilon = eps;
  result.K = params.K;
  result.replicates = replicates;
  result.analytic =
      invasion_probability(params, classes, resident_support, resident_eq, mutant_trait);

  ModelParams quenched = params;
  quenched.u_K = 0.0;

  std::vector<std::int64_t> resident_counts(params.n_traits(), 0);
  for (std::size_t i = 0; i < resident_support.size(); ++i)
    resident_counts[resident_support[i]] = static_cast<std::int64_t>(
        std::llround(resident_eq[static_cast<int>(i)] * static_cast<double>(params.K)));

  const int g = params.space.geno_of(mutant_trait);
  std::vector<int> class_traits;
  for (int q : classes.class_members(g, params.space.pheno_of(mutant_trait)))
    class_traits.push_back(params.space.trait(g, q));

  if (n_threads == 0) n_threads = std::max(1u, std::thread::hardware_concurrency());
  std::atomic<long> next{0};
  std::atomic<long> fixed{0};
  auto worker = [&]() {
    for (;;) {
      const long i = next.fetch_add(1);
      if (i >= replicates) return;
      if (invasion_replicate(quenched, resident_counts, mutant_trait, class_traits, eps,
                             Rng::for_replicate(seed, static_cast<std::uint64_t>(i))))
        fixed.fetch_add(1);
    }
  };
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  result.fixations = fixed.load();
  result.empirical = static_cast<double>(result.fixations) / static_cast<double>(replicates);
  result.ci95 = clopper_pearson(result.fixations, replicates, 0.05);
  return result;
}

}  // namespace plasticity
