#pragma once

// Per-genotype switch chains and their communicating classes. The chain of a
// genotype is the embedded jump chain of its natural switch kernel; only its
// zero pattern matters downstream, since induced switching shares that
// pattern by model assumption. A population started on one trait can visit
// exactly the traits of its communicating class, so every support used by
// the deterministic systems is a union of classes.

#include <algorithm>
#include <string>
#include <vector>

#include "plasticity/errors.hpp"
#include "plasticity/model.hpp"

namespace plasticity {

struct SwitchChain {
  int genotype = 0;
  int n = 0;
  std::vector<double> transition;  // row-stochastic, n x n

  double prob(int p, int q) const { return transition[p * n + q]; }
};

struct ClassPartition {
  std::vector<std::vector<int>> classes;  // disjoint phenotype sets covering P
  std::vector<int> class_of;              // phenotype -> class index
};

// Rows are the normalized natural switch kernel where the phenotype has any
// outgoing switch; phenotypes without one self-loop with probability 1.
inline SwitchChain build_switch_chain(const ModelParams& m, int genotype) {
  const int P = m.n_pheno();
  SwitchChain chain;
  chain.genotype = genotype;
  chain.n = P;
  chain.transition.assign(P * P, 0.0);
  for (int p = 0; p < P; ++p) {
    double out = 0.0;
    for (int q = 0; q < P; ++q) out += m.s_nat(genotype, p, q);
    if (out > 0.0) {
      for (int q = 0; q < P; ++q) chain.transition[p * P + q] = m.s_nat(genotype, p, q) / out;
    } else {
      chain.transition[p * P + p] = 1.0;
    }
  }
  return chain;
}

// Strongly connected components of the positive-transition digraph.
// Iterative Tarjan; self-loops do not create edges that matter here.
// Classes are sorted by their smallest phenotype index, members ascending.
inline ClassPartition communicating_classes(const SwitchChain& chain) {
  const int n = chain.n;
  std::vector<std::vector<int>> adjacency(n);
  for (int p = 0; p < n; ++p)
    for (int q = 0; q < n; ++q)
      if (q != p && chain.prob(p, q) > 0.0) adjacency[p].push_back(q);

  std::vector<int> index(n, -1), lowlink(n, 0), component(n, -1);
  std::vector<bool> on_stack(n, false);
  std::vector<int> stack;
  std::vector<std::vector<int>> raw_classes;
  int counter = 0;

  struct Frame {
    int node;
    std::size_t next_edge;
  };
  for (int root = 0; root < n; ++root) {
    if (index[root] != -1) continue;
    std::vector<Frame> call_stack{{root, 0}};
    index[root] = lowlink[root] = counter++;
    stack.push_back(root);
    on_stack[root] = true;
    while (!call_stack.empty()) {
      Frame& frame = call_stack.back();
      const int v = frame.node;
      if (frame.next_edge < adjacency[v].size()) {
        const int w = adjacency[v][frame.next_edge++];
        if (index[w] == -1) {
          index[w] = lowlink[w] = counter++;
          stack.push_back(w);
          on_stack[w] = true;
          call_stack.push_back({w, 0});
        } else if (on_stack[w]) {
          lowlink[v] = std::min(lowlink[v], index[w]);
        }
      } else {
        if (lowlink[v] == index[v]) {
          std::vector<int> members;
          int w;
          do {
            w = stack.back();
            stack.pop_back();
            on_stack[w] = false;
            members.push_back(w);
          } while (w != v);
          raw_classes.push_back(std::move(members));
        }
        call_stack.pop_back();
        if (!call_stack.empty()) {
          const int parent = call_stack.back().node;
          lowlink[parent] = std::min(lowlink[parent], lowlink[v]);
        }
      }
    }
  }

  for (auto& members : raw_classes) std::sort(members.begin(), members.end());
  std::sort(raw_classes.begin(), raw_classes.end(),
            [](const auto& a, const auto& b) { return a.front() < b.front(); });

  ClassPartition partition;
  partition.classes = std::move(raw_classes);
  partition.class_of.assign(n, -1);
  for (std::size_t c = 0; c < partition.classes.size(); ++c)
    for (int p : partition.classes[c]) partition.class_of[p] = static_cast<int>(c);
  return partition;
}

// For a finite chain, every communicating class is recurrent iff it is
// closed. Returns the indices of classes with a positive transition leaving
// them; models with a nonempty result are refused by the deterministic and
// branching layers.
inline std::vector<int> check_recurrence(const ClassPartition& partition,
                                         const SwitchChain& chain) {
  std::vector<int> open_classes;
  for (std::size_t c = 0; c < partition.classes.size(); ++c) {
    bool closed = true;
    for (int p : partition.classes[c]) {
      for (int q = 0; q < chain.n && closed; ++q)
        if (q != p && chain.prob(p, q) > 0.0 &&
            partition.class_of[q] != static_cast<int>(c))
          closed = false;
      if (!closed) break;
    }
    if (!closed) open_classes.push_back(static_cast<int>(c));
  }
  return open_classes;
}

// Switch chains and class partitions for every genotype, built once per
// model and shared by the simulator, the ODE layer and the branching layer.
class ClassTable {
 public:
  explicit ClassTable(const ModelParams& m) {
    const int G = m.space.n_geno();
    chains_.reserve(G);
    partitions_.reserve(G);
    for (int g = 0; g < G; ++g) {
      chains_.push_back(build_switch_chain(m, g));
      partitions_.push_back(communicating_classes(chains_.back()));
    }
    space_ = m.space;
  }

  const SwitchChain& chain(int g) const { return chains_[g]; }
  const ClassPartition& partition(int g) const { return partitions_[g]; }

  // Phenotypes of [p]_g, ascending.
  const std::vector<int>& class_members(int g, int p) const {
    return partitions_[g].classes[partitions_[g].class_of[p]];
  }

  bool recurrent() const {
    for (std::size_t g = 0; g < chains_.size(); ++g)
      if (!check_recurrence(partitions_[g], chains_[g]).empty()) return false;
    return true;
  }

  void require_recurrent() const {
    for (std::size_t g = 0; g < chains_.size(); ++g)
      if (!check_recurrence(partitions_[g], chains_[g]).empty())
        throw SupportError("switch chain of genotype '" + space_.genotypes[g] +
                           "' has a non-closed communicating class; refusing model");
  }

  // Union over the support of {g} x [p]_g, as sorted trait indices.
  std::vector<int> reachable_traits(const std::vector<int>& support) const {
    std::vector<char> in_set(space_.n_traits(), 0);
    for (int trait : support) {
      if (trait < 0 || trait >= space_.n_traits())
        throw SupportError("trait index " + std::to_string(trait) + " outside the trait space");
      const int g = space_.geno_of(trait);
      for (int q : class_members(g, space_.pheno_of(trait))) in_set[space_.trait(g, q)] = 1;
    }
    std::vector<int> result;
    for (int x = 0; x < space_.n_traits(); ++x)
      if (in_set[x]) result.push_back(x);
    return result;
  }

  bool is_closed(const std::vector<int>& support) const {
    return reachable_traits(support) == support;
  }

 private:
  TraitSpace space_;
  std::vector<SwitchChain> chains_;
  std::vector<ClassPartition> partitions_;
};

}  // namespace plasticity
