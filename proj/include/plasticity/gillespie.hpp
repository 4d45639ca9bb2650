#pragma once

// Exact event-driven simulation of the microscopic Markov process. The
// embedded-jump-chain (Gillespie direct) sampler has the same law as the
// Poisson-point-measure construction of the process: waiting times are
// exponential in the total rate and the next event is chosen proportional
// to its rate.

#include <cassert>
#include <cstdint>
#include <span>
#include <vector>

#include "plasticity/errors.hpp"
#include "plasticity/model.hpp"
#include "plasticity/rng.hpp"

namespace plasticity {

enum class EventKind { CleanBirth, MutantBirth, Death, Switch };

struct SimEvent {
  EventKind kind = EventKind::CleanBirth;
  int trait = -1;   // acting trait (g,p)
  int target = -1;  // mutant target trait, or switch target trait
  double dt = 0.0;  // waiting time before the event
};

// Per-trait event rates at a given state. With density nu = count/K the
// entries are exactly the generator rates:
//   birth_clean = (1 - u_K m(g)) b(p) K nu(g,p)
//   birth_mutant = u_K m(g) b(p) K nu(g,p)
//   death = (d(p) + sum_q c(p,q) nu(q)) K nu(g,p)
//   switch(p->q) = (s_nat + sum_r s_ind(p,q)(r) nu(r)) K nu(g,p)
struct EventRateTable {
  struct Row {
    double birth_clean = 0.0;
    double birth_mutant = 0.0;
    double death = 0.0;
    std::vector<double> switch_rates;  // aligned with targets(trait)
    double total = 0.0;
  };
  std::vector<Row> rows;
  double total_rate = 0.0;
};

namespace detail {
// Switch targets per trait: phenotypes with a positive natural switch rate.
// Any induced rate shares that zero pattern, so other targets carry rate 0.
inline std::vector<std::vector<int>> switch_targets(const ModelParams& m) {
  const int P = m.n_pheno();
  std::vector<std::vector<int>> targets(m.n_traits());
  for (int x = 0; x < m.n_traits(); ++x) {
    const int g = m.space.geno_of(x);
    const int p = m.space.pheno_of(x);
    for (int q = 0; q < P; ++q)
      if (q != p && m.s_nat(g, p, q) > 0.0) targets[x].push_back(q);
  }
  return targets;
}
}  // namespace detail

// Maintains the rate table across events. apply() updates the phenotype
// marginals and per-capita rate components by deltas instead of rebuilding
// the marginal sums; a periodic full resync bounds the floating-point drift
// (its agreement with fresh rebuilds is tested at 1e-9 relative).
class RateCache {
 public:
  RateCache(const PopulationState& state, const ModelParams& params)
      : params_(&params), targets_(detail::switch_targets(params)) {
    rebuild(state);
  }

  void rebuild(const PopulationState& state) {
    const int X = params_->n_traits();
    const int P = params_->n_pheno();
    marginal_counts_.assign(P, 0);
    for (int x = 0; x < X; ++x) marginal_counts_[params_->space.pheno_of(x)] += state.counts[x];

    death_percap_.assign(X, 0.0);
    switch_percap_.assign(X, {});
    table_.rows.assign(X, {});
    for (int x = 0; x < X; ++x) {
      const int g = params_->space.geno_of(x);
      const int p = params_->space.pheno_of(x);
      double dp = params_->death[p];
      for (int q = 0; q < P; ++q) dp += params_->comp(p, q) * marginal_density(state.K, q);
      death_percap_[x] = dp;
      auto& sw = switch_percap_[x];
      sw.resize(targets_[x].size());
      for (std::size_t s = 0; s < targets_[x].size(); ++s) {
        const int q = targets_[x][s];
        double rate = params_->s_nat(g, p, q);
        for (int r = 0; r < P; ++r)
          rate += params_->s_ind(g, p, q, r) * marginal_density(state.K, r);
        sw[s] = rate;
      }
      table_.rows[x].switch_rates.resize(targets_[x].size());
    }
    refresh_rows(state);
    events_since_resync_ = 0;
  }

  const EventRateTable& table() const { return table_; }
  const std::vector<std::vector<int>>& targets() const { return targets_; }
  double total_rate() const { return table_.total_rate; }

  // Applies the event to the state and updates the cached rates.
  void apply(PopulationState& state, const SimEvent& ev) {
    switch (ev.kind) {
      case EventKind::CleanBirth:
        add(state, ev.trait, +1);
        break;
      case EventKind::MutantBirth:
        add(state, ev.target, +1);
        break;
      case EventKind::Death:
        add(state, ev.trait, -1);
        break;
      case EventKind::Switch:
        add(state, ev.trait, -1);
        add(state, ev.target, +1);
        break;
    }
    if (++events_since_resync_ >= kResyncInterval)
      rebuild(state);
    else
      refresh_rows(state);
  }

 private:
  static constexpr int kResyncInterval = 1 << 16;

  double marginal_density(std::int64_t K, int pheno) const {
    return static_cast<double>(marginal_counts_[pheno]) / static_cast<double>(K);
  }

  void add(PopulationState& state, int trait, int delta) {
    assert(state.counts[trait] + delta >= 0);
    state.counts[trait] += delta;
    const int pheno = params_->space.pheno_of(trait);
    marginal_counts_[pheno] += delta;
    const double ddens = static_cast<double>(delta) / static_cast<double>(state.K);
    const int X = params_->n_traits();
    for (int x = 0; x < X; ++x) {
      const int p = params_->space.pheno_of(x);
      const int g = params_->space.geno_of(x);
      death_percap_[x] += params_->comp(p, pheno) * ddens;
      if (death_percap_[x] < 0.0) death_percap_[x] = 0.0;
      auto& sw = switch_percap_[x];
      for (std::size_t s = 0; s < sw.size(); ++s) {
        const double sind = params_->s_ind(g, p, targets_[x][s], pheno);
        if (sind != 0.0) {
          sw[s] += sind * ddens;
          if (sw[s] < 0.0) sw[s] = 0.0;
        }
      }
    }
  }

  void refresh_rows(const PopulationState& state) {
    const int X = params_->n_traits();
    double total = 0.0;
    for (int x = 0; x < X; ++x) {
      auto& row = table_.rows[x];
      const auto count = static_cast<double>(state.counts[x]);
      if (count == 0.0) {
        row.birth_clean = row.birth_mutant = row.death = 0.0;
        std::fill(row.switch_rates.begin(), row.switch_rates.end(), 0.0);
        row.total = 0.0;
        continue;
      }
      const int g = params_->space.geno_of(x);
      const int p = params_->space.pheno_of(x);
      const double mut = params_->u_K * params_->mutation_prob[g];
      row.birth_clean = (1.0 - mut) * params_->birth[p] * count;
      row.birth_mutant = mut * params_->birth[p] * count;
      row.death = death_percap_[x] * count;
      double row_total = row.birth_clean + row.birth_mutant + row.death;
      for (std::size_t s = 0; s < switch_percap_[x].size(); ++s) {
        row.switch_rates[s] = switch_percap_[x][s] * count;
        row_total += row.switch_rates[s];
      }
      row.total = row_total;
      total += row_total;
    }
    table_.total_rate = total;
  }

  const ModelParams* params_;
  std::vector<std::vector<int>> targets_;
  std::vector<std::int64_t> marginal_counts_;
  std::vector<double> death_percap_;
  std::vector<std::vector<double>> switch_percap_;
  EventRateTable table_;
  int events_since_resync_ = 0;
};

// Reference rate table, rebuilt from scratch. The incremental cache is
// tested against this.
inline EventRateTable event_rates(const PopulationState& state, const ModelParams& params) {
  RateCache cache(state, params);
  return cache.table();
}

// Picks the next event proportional to the rates (waiting time not drawn
// here). The walk order is fixed: traits ascending, within a trait
// birth_clean, birth_mutant, death, then switch targets ascending. A mutant
// target is drawn from the cumulative mutation-law row with one uniform.
inline SimEvent sample_event(const EventRateTable& table,
                             const std::vector<std::vector<int>>& targets,
                             const ModelParams& params, Rng& rng) {
  const int X = params.n_traits();
  auto entry = [&](int x, int slot) -> SimEvent {
    switch (slot) {
      case 0:
        return SimEvent{EventKind::CleanBirth, x, -1, 0.0};
      case 1:
        return SimEvent{EventKind::MutantBirth, x, -1, 0.0};
      case 2:
        return SimEvent{EventKind::Death, x, -1, 0.0};
      default:
        return SimEvent{EventKind::Switch, x,
                        params.space.trait(params.space.geno_of(x), targets[x][slot - 3]), 0.0};
    }
  };
  auto rate_of = [&](int x, int slot) -> double {
    const auto& row = table.rows[x];
    switch (slot) {
      case 0:
        return row.birth_clean;
      case 1:
        return row.birth_mutant;
      case 2:
        return row.death;
      default:
        return row.switch_rates[slot - 3];
    }
  };

  double r = rng.next_unit() * table.total_rate;
  bool chosen = false;
  SimEvent ev{};
  for (int x = 0; x < X && !chosen; ++x) {
    const auto& row = table.rows[x];
    if (row.total <= 0.0) continue;
    if (r >= row.total) {
      r -= row.total;
      continue;
    }
    const int slots = 3 + static_cast<int>(row.switch_rates.size());
    for (int s = 0; s < slots; ++s) {
      const double rate = rate_of(x, s);
      if (rate <= 0.0) continue;
      if (r < rate) {
        ev = entry(x, s);
        chosen = true;
        break;
      }
      r -= rate;
    }
  }
  if (!chosen) {
    // terminal rounding overshoot: take the last positive entry
    for (int x = X - 1; x >= 0 && !chosen; --x) {
      const auto& row = table.rows[x];
      if (row.total <= 0.0) continue;
      const int slots = 3 + static_cast<int>(row.switch_rates.size());
      for (int s = slots - 1; s >= 0; --s)
        if (rate_of(x, s) > 0.0) {
          ev = entry(x, s);
          chosen = true;
          break;
        }
    }
  }
  if (!chosen) throw AbsorbedError();

  if (ev.kind == EventKind::MutantBirth) {
    const int X2 = params.n_traits();
    double u = rng.next_unit();
    int target = -1;
    for (int j = 0; j < X2; ++j) {
      const double p = params.mut_law(ev.trait, j);
      if (p > 0.0) {
        target = j;
        if (u < p) break;
        u -= p;
      }
    }
    ev.target = target >= 0 ? target : ev.trait;
  }
  return ev;
}

inline void apply_event(PopulationState& state, const SimEvent& ev) {
  switch (ev.kind) {
    case EventKind::CleanBirth:
      state.counts[ev.trait] += 1;
      break;
    case EventKind::MutantBirth:
      state.counts[ev.target] += 1;
      break;
    case EventKind::Death:
      assert(state.counts[ev.trait] > 0);
      state.counts[ev.trait] -= 1;
      break;
    case EventKind::Switch:
      assert(state.counts[ev.trait] > 0);
      state.counts[ev.trait] -= 1;
      state.counts[ev.target] += 1;
      break;
  }
}

// One exact step: rates from a fresh table, dt ~ Exp(total_rate), event
// proportional to its rate, state updated in place.
inline SimEvent step(PopulationState& state, const ModelParams& params, Rng& rng) {
  const EventRateTable table = event_rates(state, params);
  if (!(table.total_rate > 0.0)) throw AbsorbedError();
  const double dt = rng.next_exponential(table.total_rate);
  SimEvent ev = sample_event(table, detail::switch_targets(params), params, rng);
  ev.dt = dt;
  apply_event(state, ev);
  state.time += dt;
  return ev;
}

struct Trajectory {
  std::vector<double> times;
  std::vector<std::vector<double>> densities;  // one row per sample, |X| wide
  bool absorbed = false;
  double final_time = 0.0;
};

// Runs the jump chain to t_end, sampling densities every sample_dt plus the
// final state. Absorption (total rate zero) terminates the trajectory early
// and sets the flag; it is not an error. Bit-reproducible for a fixed seed.
inline Trajectory simulate(PopulationState& state, const ModelParams& params, double t_end,
                           Rng& rng, double sample_dt) {
  Trajectory traj;
  auto snapshot = [&](double t) {
    std::vector<double> row(params.n_traits());
    for (int x = 0; x < params.n_traits(); ++x) row[x] = state.density(x);
    traj.times.push_back(t);
    traj.densities.push_back(std::move(row));
  };

  RateCache cache(state, params);
  snapshot(state.time);
  double next_sample = state.time + sample_dt;

  while (state.time < t_end) {
    if (!(cache.total_rate() > 0.0)) {
      traj.absorbed = true;
      break;
    }
    const double dt = rng.next_exponential(cache.total_rate());
    const double t_event = state.time + dt;
    while (next_sample < t_event && next_sample <= t_end) {
      snapshot(next_sample);
      next_sample += sample_dt;
    }
    if (t_event >= t_end) {
      state.time = t_end;
      break;
    }
    SimEvent ev = sample_event(cache.table(), cache.targets(), params, rng);
    ev.dt = dt;
    cache.apply(state, ev);
    state.time = t_event;
  }

  traj.final_time = state.time;
  if (traj.times.empty() || traj.times.back() != state.time) snapshot(state.time);
  return traj;
}

}  // namespace plasticity
