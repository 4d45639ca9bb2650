#pragma once

// Deterministic large-population dynamics. One field implementation covers
// both the full limit system (with mutation terms, on the whole trait
// space) and the mutation-free system on a reachable support; the latter is
// algebraically the restriction of the former. Fields are polynomial of
// degree two in the densities, so the Jacobian is assembled analytically.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "plasticity/errors.hpp"
#include "plasticity/model.hpp"
#include "plasticity/switch_graph.hpp"

namespace plasticity {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

class DynamicsField {
 public:
  // support must be sorted trait indices. include_mutation selects the full
  // limit system; without it the field is the plasticity Lotka-Volterra
  // system of the support.
  DynamicsField(const ModelParams& params, std::vector<int> support, bool include_mutation)
      : params_(&params), support_(std::move(support)), mutation_(include_mutation) {
    const int P = params.n_pheno();
    const int n = dim();
    pheno_.resize(n);
    geno_.resize(n);
    growth_.resize(n);
    std::vector<int> support_index(params.n_traits(), -1);
    for (int i = 0; i < n; ++i) support_index[support_[i]] = i;

    for (int i = 0; i < n; ++i) {
      const int x = support_[i];
      const int g = params.space.geno_of(x);
      const int p = params.space.pheno_of(x);
      geno_[i] = g;
      pheno_[i] = p;
      const double b = params.birth[p];
      growth_[i] = (mutation_ ? (1.0 - params.mutation_prob[g]) * b : b) - params.death[p];
      for (int q = 0; q < P; ++q) {
        if (q == p) continue;
        if (params.s_nat(g, p, q) > 0.0) out_.push_back({i, q, -1});
        if (params.s_nat(g, q, p) > 0.0) {
          const int j = support_index[params.space.trait(g, q)];
          if (j >= 0) in_.push_back({i, q, j});
        }
      }
    }
    if (mutation_) {
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          const double coef = params.mutation_prob[geno_[j]] * params.birth[pheno_[j]] *
                              params.mut_law(support_[j], support_[i]);
          if (coef != 0.0) mut_edges_.push_back({i, j, coef});
        }
    }
  }

  int dim() const { return static_cast<int>(support_.size()); }
  const std::vector<int>& support() const { return support_; }

  std::vector<double> marginals(const Vector& x) const {
    std::vector<double> mar(params_->n_pheno(), 0.0);
    for (int i = 0; i < dim(); ++i) mar[pheno_[i]] += x[i];
    return mar;
  }

  Vector operator()(const Vector& x) const {
    const int n = dim();
    const auto mar = marginals(x);
    Vector f = Vector::Zero(n);
    for (int i = 0; i < n; ++i) {
      double percap = growth_[i];
      for (int q = 0; q < params_->n_pheno(); ++q)
        percap -= params_->comp(pheno_[i], q) * mar[q];
      f[i] = x[i] * percap;
    }
    for (const auto& e : out_) f[e.i] -= x[e.i] * switch_rate(geno_[e.i], pheno_[e.i], e.pheno, mar);
    for (const auto& e : in_) f[e.i] += x[e.j] * switch_rate(geno_[e.i], e.pheno, pheno_[e.i], mar);
    for (const auto& e : mut_edges_) f[e.i] += e.coef * x[e.j];
    return f;
  }

  Matrix jacobian(const Vector& x) const {
    const int n = dim();
    const int P = params_->n_pheno();
    const auto mar = marginals(x);
    Matrix J = Matrix::Zero(n, n);

    std::vector<double> percap(n);
    for (int i = 0; i < n; ++i) {
      double v = growth_[i];
      for (int q = 0; q < P; ++q) v -= params_->comp(pheno_[i], q) * mar[q];
      percap[i] = v;
    }
    for (const auto& e : out_)
      percap[e.i] -= switch_rate(geno_[e.i], pheno_[e.i], e.pheno, mar);
    for (int i = 0; i < n; ++i) J(i, i) += percap[i];

    for (int i = 0; i < n; ++i)
      for (int k = 0; k < n; ++k) J(i, k) -= x[i] * params_->comp(pheno_[i], pheno_[k]);
    for (const auto& e : out_)
      for (int k = 0; k < n; ++k)
        J(e.i, k) -= x[e.i] * params_->s_ind(geno_[e.i], pheno_[e.i], e.pheno, pheno_[k]);
    for (const auto& e : in_) {
      J(e.i, e.j) += switch_rate(geno_[e.i], e.pheno, pheno_[e.i], mar);
      for (int k = 0; k < n; ++k)
        J(e.i, k) += x[e.j] * params_->s_ind(geno_[e.i], e.pheno, pheno_[e.i], pheno_[k]);
    }
    for (const auto& e : mut_edges_) J(e.i, e.j) += e.coef;
    return J;
  }

 private:
  struct SwitchEdge {
    int i;      // support index the edge acts on
    int pheno;  // the other phenotype (target for out, source for in)
    int j;      // support index of the source (in-edges only)
  };
  struct MutEdge {
    int i, j;
    double coef;
  };

  double switch_rate(int g, int from, int to, const std::vector<double>& mar) const {
    double rate = params_->s_nat(g, from, to);
    for (int r = 0; r < params_->n_pheno(); ++r)
      rate += params_->s_ind(g, from, to, r) * mar[r];
    return rate;
  }

  const ModelParams* params_;
  std::vector<int> support_;
  bool mutation_;
  std::vector<int> pheno_, geno_;
  std::vector<double> growth_;
  std::vector<SwitchEdge> out_, in_;
  std::vector<MutEdge> mut_edges_;
};

// Full limit system on the whole trait space, mutation included.
inline DynamicsField full_field(const ModelParams& params) {
  std::vector<int> all(params.n_traits());
  for (int x = 0; x < params.n_traits(); ++x) all[x] = x;
  return DynamicsField(params, std::move(all), true);
}

// Mutation-free system on a reachable support. The support must be closed
// under the communicating classes and the classes must all be recurrent.
inline DynamicsField lvs_field(const ModelParams& params, const ClassTable& classes,
                               const std::vector<int>& support) {
  classes.require_recurrent();
  if (!classes.is_closed(support))
    throw SupportError("support is not closed under the switch classes");
  return DynamicsField(params, support, false);
}

struct OdeOptions {
  double rel = 1e-8;
  double abs = 1e-10;
  double h_init = 1e-4;
  long max_steps = 200000000L;
  bool clamp_negative = true;
};

struct OdeTrajectory {
  std::vector<double> times;
  std::vector<Vector> states;
};

// Adaptive embedded Runge-Kutta 5(4) (Dormand-Prince pair). Sample times
// must be ascending within [t0, t_end]; the integrator lands on them
// exactly. Small negative undershoots are clamped to zero after accepted
// steps, keeping the state in the admissible cone.
template <typename Field>
Vector integrate(const Field& field, Vector y, double t0, double t_end,
                 const std::vector<double>& sample_times, const OdeOptions& opt,
                 OdeTrajectory* out = nullptr) {
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                          a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                          a64 = 49.0 / 176, a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                          b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  static constexpr double e1 = 35.0 / 384 - 5179.0 / 57600, e3 = 500.0 / 1113 - 7571.0 / 16695,
                          e4 = 125.0 / 192 - 393.0 / 640, e5 = -2187.0 / 6784 + 92097.0 / 339200,
                          e6 = 11.0 / 84 - 187.0 / 2100, e7 = -1.0 / 40;

  double t = t0;
  double h = opt.h_init;
  std::size_t next_sample = 0;
  auto emit_samples_at = [&](double time, const Vector& y_now) {
    while (next_sample < sample_times.size() && sample_times[next_sample] <= time) {
      if (out) {
        out->times.push_back(sample_times[next_sample]);
        out->states.push_back(y_now);
      }
      ++next_sample;
    }
  };
  emit_samples_at(t, y);

  const int n = static_cast<int>(y.size());
  if (n == 0 || t_end <= t0) return y;

  Vector k1 = field(y);
  long steps = 0;
  while (t < t_end) {
    if (++steps > opt.max_steps) throw IterationLimitError("ODE step budget exhausted");
    const double snap = 1e-14 * std::max(1.0, std::abs(t));
    double target = t_end;
    if (next_sample < sample_times.size()) target = std::min(target, sample_times[next_sample]);
    if (target - t <= snap) {
      t = target > t ? target : t + snap;
      emit_samples_at(t, y);
      continue;
    }
    if (!(h > snap)) throw StepSizeUnderflow(t);
    const double h_step = std::min(h, target - t);

    Vector k2 = field(y + h_step * (a21 * k1));
    Vector k3 = field(y + h_step * (a31 * k1 + a32 * k2));
    Vector k4 = field(y + h_step * (a41 * k1 + a42 * k2 + a43 * k3));
    Vector k5 = field(y + h_step * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
    Vector k6 = field(y + h_step * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
    Vector y_new = y + h_step * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    Vector k7 = field(y_new);
    Vector err_vec = h_step * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

    double err = 0.0;
    for (int i = 0; i < n; ++i) {
      const double sc = opt.abs + opt.rel * std::max(std::abs(y[i]), std::abs(y_new[i]));
      const double q = err_vec[i] / sc;
      err += q * q;
    }
    err = std::sqrt(err / n);

    if (err <= 1.0) {
      t += h_step;
      y = std::move(y_new);
      if (opt.clamp_negative)
        for (int i = 0; i < n; ++i)
          if (y[i] < 0.0) y[i] = 0.0;
      k1 = opt.clamp_negative ? field(y) : std::move(k7);
      emit_samples_at(t, y);
    }
    const double factor = err > 0.0 ? 0.9 * std::pow(err, -0.2) : 5.0;
    h = h_step * std::clamp(factor, 0.2, 5.0);
  }
  return y;
}

struct EquilibriumReport {
  std::vector<int> support;
  Vector equilibrium;
  Matrix jacobian;
  double eigenvalue_max_real = 0.0;
  bool converged = false;
  double residual = 0.0;
  double t_reached = 0.0;
};

struct EquilibriumOptions {
  double tol = 1e-8;           // max |field| at the reported point
  double t_max = 500.0;        // give up (converged=false) beyond this
  double check_dt = 1.0;       // residual check interval
  double polish_from = 1e-6;   // Newton polish once the residual is this small
  OdeOptions ode{};
};

inline double rightmost_real_part(const Matrix& m) {
  if (m.rows() == 0) return 0.0;
  Eigen::EigenSolver<Matrix> solver(m, /*computeEigenvectors=*/false);
  double rightmost = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < m.rows(); ++i)
    rightmost = std::max(rightmost, solver.eigenvalues()[i].real());
  return rightmost;
}

// Finds an attracting equilibrium by forward integration to stationarity.
// Integration cannot settle on a repelling root, and the Newton polish is
// only engaged once the trajectory is already nearly stationary, so it
// refines rather than relocates the point.
template <typename Field>
EquilibriumReport find_equilibrium(const Field& field, Vector x0, const EquilibriumOptions& opt) {
  EquilibriumReport report;
  Vector x = std::move(x0);
  double t = 0.0;
  auto residual_of = [&](const Vector& v) { return field(v).template lpNorm<Eigen::Infinity>(); };

  auto try_polish = [&](Vector v) -> std::pair<bool, Vector> {
    for (int iter = 0; iter < 30; ++iter) {
      Vector f = field(v);
      if (f.template lpNorm<Eigen::Infinity>() <= std::min(opt.tol, 1e-12)) return {true, v};
      Matrix J = field.jacobian(v);
      Eigen::PartialPivLU<Matrix> lu(J);
      Vector delta = lu.solve(-f);
      if (!delta.allFinite()) return {false, v};
      Vector next = v + delta;
      for (int i = 0; i < next.size(); ++i) {
        if (next[i] < 0.0) {
          if (next[i] < -1e-9) return {false, v};
          next[i] = 0.0;
        }
      }
      v = std::move(next);
    }
    return {residual_of(v) <= opt.tol, v};
  };

  double residual = residual_of(x);
  while (t < opt.t_max) {
    if (residual <= opt.polish_from) {
      auto [ok, polished] = try_polish(x);
      if (ok) {
        x = polished;
        residual = residual_of(x);
        if (residual <= opt.tol) break;
      } else if (residual <= opt.tol) {
        break;
      }
    }
    const double t_next = std::min(t + opt.check_dt, opt.t_max);
    x = integrate(field, std::move(x), t, t_next, {}, opt.ode);
    t = t_next;
    residual = residual_of(x);
  }

  report.equilibrium = x;
  report.residual = residual;
  report.converged = residual <= opt.tol;
  report.t_reached = t;
  report.jacobian = field.jacobian(x);
  report.eigenvalue_max_real = rightmost_real_part(report.jacobian);
  return report;
}

inline EquilibriumReport find_equilibrium(const DynamicsField& field, Vector x0,
                                          const EquilibriumOptions& opt = {}) {
  auto report = find_equilibrium<DynamicsField>(field, std::move(x0), opt);
  report.support = field.support();
  return report;
}

struct CoexistenceOptions {
  EquilibriumOptions equilibrium{};
  double positivity = 1e-6;       // all coordinates must exceed this
  double stability_margin = 1e-8; // rightmost eigenvalue must be below -margin
};

// Coexistence on a closed support: a reachable equilibrium with all
// coordinates positive and a strictly stable Jacobian.
inline std::pair<bool, EquilibriumReport> check_coexistence(const ModelParams& params,
                                                            const ClassTable& classes,
                                                            const std::vector<int>& support,
                                                            Vector x0,
                                                            const CoexistenceOptions& opt = {}) {
  DynamicsField field = lvs_field(params, classes, support);
  EquilibriumReport report = find_equilibrium(field, std::move(x0), opt.equilibrium);
  bool ok = report.converged;
  if (ok)
    for (int i = 0; i < report.equilibrium.size(); ++i)
      if (!(report.equilibrium[i] > opt.positivity)) ok = false;
  if (ok && !(report.eigenvalue_max_real < -opt.stability_margin)) ok = false;
  return {ok, std::move(report)};
}

}  // namespace plasticity
