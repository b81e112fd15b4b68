// Copyright 2026 The rulekd Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace rulekd {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

class InfeasibleConstraints : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// log(sum(exp(x))) with max subtraction; -inf for an empty or all -inf input.
inline double log_sum_exp(std::span<const double> x) {
  double m = kNegInf;
  for (double v : x) m = std::max(m, v);
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (double v : x)
    if (v != kNegInf) s += std::exp(v - m);
  return m + std::log(s);
}

/// Log-weight contribution of one grounding: -C * lambda * (1 - r), or an
/// exact mask for a violated hard rule. Hard rules mask regardless of C.
inline double log_penalty(double lambda, double c, double truth) {
  if (std::isinf(lambda)) return truth < 1.0 ? kNegInf : 0.0;
  return -c * lambda * (1.0 - truth);
}

/// One grounding r_lg with its rule's confidence, evaluated on every candidate.
struct Grounding {
  double lambda = 1.0;
  std::vector<double> truth;  // per candidate
};

struct ProjectionProblem {
  std::vector<double> base_log_probs;  // log p(Y|X) per candidate
  std::vector<Grounding> groundings;
  double c = 6.0;

  [[nodiscard]] std::size_t num_candidates() const { return base_log_probs.size(); }

  void validate() const {
    if (base_log_probs.empty()) throw std::invalid_argument("projection: empty candidate set");
    if (!(c >= 0.0) || std::isinf(c)) throw std::invalid_argument("projection: C must be finite and >= 0");
    const double lz = log_sum_exp(base_log_probs);
    if (!(std::abs(lz) < 1e-9)) {
      std::ostringstream os;
      os << "projection: base probabilities sum to exp(" << lz << ")";
      throw std::invalid_argument(os.str());
    }
    for (const auto& g : groundings) {
      if (!(g.lambda >= 0.0)) throw std::invalid_argument("projection: lambda must be >= 0");
      if (g.truth.size() != num_candidates())
        throw std::invalid_argument("projection: grounding/candidate size mismatch");
      for (double r : g.truth) {
        if (!(r >= 0.0 && r <= 1.0)) throw std::invalid_argument("projection: truth value out of [0,1]");
      }
    }
  }
};

struct TeacherPosterior {
  std::vector<double> log_q;  // normalized
  double log_z = 0.0;         // log of the normalizer of p * exp(-penalty)

  [[nodiscard]] std::vector<double> probs() const {
    std::vector<double> q(log_q.size());
    std::transform(log_q.begin(), log_q.end(), q.begin(), [](double v) { return std::exp(v); });
    return q;
  }
};

/// Unnormalized log-weights log p(Y) - sum C lambda (1 - r(Y)).
inline std::vector<double> penalized_log_weights(const ProjectionProblem& problem) {
  std::vector<double> w = problem.base_log_probs;
  for (const auto& g : problem.groundings) {
    for (std::size_t y = 0; y < w.size(); ++y) w[y] += log_penalty(g.lambda, problem.c, g.truth[y]);
  }
  return w;
}

/// Closed-form teacher: q(Y) proportional to p(Y) exp{-sum C lambda_l (1 - r_lg(Y))}.
inline TeacherPosterior project(const ProjectionProblem& problem) {
  problem.validate();
  TeacherPosterior out;
  out.log_q = penalized_log_weights(problem);
  out.log_z = log_sum_exp(out.log_q);
  if (out.log_z == kNegInf) throw InfeasibleConstraints("infeasible constraint set: every candidate is masked");
  for (auto& v : out.log_q) v -= out.log_z;
  return out;
}

// ---------------------------------------------------------------------------
// Numeric primal oracle

struct OracleOptions {
  double step = 0.5;
  std::size_t max_iters = 20000;
  double stationarity_tol = 1e-13;
};

struct OptimalityReport {
  bool converged = false;
  bool passed = false;
  std::size_t iterations = 0;
  double kl_numeric_to_closed = std::numeric_limits<double>::infinity();
  double objective_closed = 0.0;
  double objective_numeric = 0.0;
  double objective_gap = 0.0;  // closed - numeric
};

namespace detail {

/// Primal objective with the slack eliminated:
/// KL(q || p) + C * sum_g max{0, lambda_g (1 - E_q[r_g])} over finite-lambda groundings.
inline double primal_objective(const ProjectionProblem& pr, std::span<const double> q,
                               const std::vector<char>& support) {
  double kl = 0.0;
  for (std::size_t y = 0; y < q.size(); ++y) {
    if (!support[y] || q[y] <= 0.0) continue;
    kl += q[y] * (std::log(q[y]) - pr.base_log_probs[y]);
  }
  double slack = 0.0;
  for (const auto& g : pr.groundings) {
    if (std::isinf(g.lambda)) continue;
    double expect = 0.0;
    for (std::size_t y = 0; y < q.size(); ++y) expect += q[y] * g.truth[y];
    slack += std::max(0.0, g.lambda * (1.0 - expect));
  }
  return kl + pr.c * slack;
}

}  // namespace detail

/// Minimizes the primal directly by exponentiated-gradient descent on the
/// simplex and compares the optimum with `closed`. Hard rules restrict the
/// feasible support. A run that does not reach stationarity is reported as
/// inconclusive (`converged == false`, `passed == false`).
inline OptimalityReport verify_optimality(const ProjectionProblem& problem, const TeacherPosterior& closed,
                                          double tolerance, const OracleOptions& opt = {}) {
  problem.validate();
  const std::size_t n = problem.num_candidates();
  if (closed.log_q.size() != n) throw std::invalid_argument("verify_optimality: posterior size mismatch");

  std::vector<char> support(n, 1);
  for (std::size_t y = 0; y < n; ++y) {
    if (problem.base_log_probs[y] == kNegInf) support[y] = 0;
    for (const auto& g : problem.groundings) {
      if (std::isinf(g.lambda) && g.truth[y] < 1.0) support[y] = 0;
    }
  }
  std::size_t live = std::count(support.begin(), support.end(), 1);
  OptimalityReport rep;
  if (live == 0) return rep;

  // Start from the uniform distribution over the feasible support.
  std::vector<double> log_q(n, kNegInf);
  for (std::size_t y = 0; y < n; ++y)
    if (support[y]) log_q[y] = -std::log(static_cast<double>(live));

  std::vector<double> q(n), grad(n), next(n);
  for (rep.iterations = 0; rep.iterations < opt.max_iters; ++rep.iterations) {
    for (std::size_t y = 0; y < n; ++y) q[y] = support[y] ? std::exp(log_q[y]) : 0.0;
    // Gradient of the objective w.r.t. q on the support (the +1 from KL is absorbed by normalization).
    for (std::size_t y = 0; y < n; ++y) grad[y] = support[y] ? log_q[y] - problem.base_log_probs[y] : 0.0;
    for (const auto& g : problem.groundings) {
      if (std::isinf(g.lambda)) continue;
      double expect = 0.0;
      for (std::size_t y = 0; y < n; ++y) expect += q[y] * g.truth[y];
      if (g.lambda * (1.0 - expect) <= 0.0) continue;  // inactive hinge
      for (std::size_t y = 0; y < n; ++y) grad[y] -= problem.c * g.lambda * g.truth[y];
    }
    for (std::size_t y = 0; y < n; ++y) next[y] = support[y] ? log_q[y] - opt.step * grad[y] : kNegInf;
    const double lz = log_sum_exp(next);
    double change = 0.0;
    for (std::size_t y = 0; y < n; ++y) {
      if (!support[y]) continue;
      next[y] -= lz;
      change = std::max(change, std::abs(next[y] - log_q[y]));
    }
    log_q.swap(next);
    if (change < opt.stationarity_tol) {
      rep.converged = true;
      ++rep.iterations;
      break;
    }
  }

  for (std::size_t y = 0; y < n; ++y) q[y] = support[y] ? std::exp(log_q[y]) : 0.0;
  double kl = 0.0;
  for (std::size_t y = 0; y < n; ++y) {
    if (q[y] <= 0.0) continue;
    if (closed.log_q[y] == kNegInf) {
      kl = std::numeric_limits<double>::infinity();
      break;
    }
    kl += q[y] * (log_q[y] - closed.log_q[y]);
  }
  rep.kl_numeric_to_closed = std::max(kl, 0.0);
  const auto q_closed = closed.probs();
  rep.objective_numeric = detail::primal_objective(problem, q, support);
  rep.objective_closed = detail::primal_objective(problem, q_closed, support);
  rep.objective_gap = rep.objective_closed - rep.objective_numeric;
  rep.passed = rep.converged && rep.kl_numeric_to_closed < tolerance;
  return rep;
}

// ---------------------------------------------------------------------------
// Randomized sweep

struct RandomProblemSpec {
  std::size_t max_candidates = 4;
  std::size_t max_rules = 3;
  std::size_t max_groundings_per_rule = 2;
  std::vector<double> lambdas{0.5, 1.0, 2.0};
  double c = 6.0;
};

inline ProjectionProblem random_projection_problem(std::mt19937_64& rng, const RandomProblemSpec& spec = {}) {
  std::uniform_int_distribution<std::size_t> k_dist(2, spec.max_candidates);
  std::uniform_int_distribution<std::size_t> l_dist(1, spec.max_rules);
  std::uniform_int_distribution<std::size_t> g_dist(1, spec.max_groundings_per_rule);
  std::uniform_int_distribution<std::size_t> lam_dist(0, spec.lambdas.size() - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::exponential_distribution<double> gamma1(1.0);

  ProjectionProblem pr;
  pr.c = spec.c;
  const std::size_t k = k_dist(rng);
  std::vector<double> w(k);
  for (auto& v : w) v = gamma1(rng) + 1e-3;
  double s = 0.0;
  for (double v : w) s += v;
  for (double v : w) pr.base_log_probs.push_back(std::log(v / s));

  const std::size_t rules = l_dist(rng);
  for (std::size_t l = 0; l < rules; ++l) {
    const double lambda = spec.lambdas[lam_dist(rng)];
    const std::size_t groundings = g_dist(rng);
    for (std::size_t g = 0; g < groundings; ++g) {
      Grounding gr;
      gr.lambda = lambda;
      for (std::size_t y = 0; y < k; ++y) gr.truth.push_back(unit(rng) < 0.25 ? 1.0 : unit(rng));
      pr.groundings.push_back(std::move(gr));
    }
  }
  return pr;
}

struct SweepResult {
  std::size_t trials = 0;
  std::size_t failures = 0;
  double worst_kl = 0.0;
  std::size_t worst_trial = 0;
  ProjectionProblem worst_problem;
  OptimalityReport worst_report;

  [[nodiscard]] bool passed() const { return failures == 0; }
};

/// Closed form vs numeric optimum on `trials` random problems.
inline SweepResult sweep_projection_oracle(std::uint64_t seed, std::size_t trials, double tolerance,
                                           const RandomProblemSpec& spec = {}) {
  std::mt19937_64 rng(seed);
  SweepResult res;
  res.trials = trials;
  bool have_worst = false;
  for (std::size_t t = 0; t < trials; ++t) {
    auto pr = random_projection_problem(rng, spec);
    auto rep = verify_optimality(pr, project(pr), tolerance);
    if (!rep.passed) ++res.failures;
    // Failures rank above passes; ties broken by KL.
    const bool worse = !have_worst || (!rep.passed && res.worst_report.passed) ||
                       (rep.passed == res.worst_report.passed && rep.kl_numeric_to_closed > res.worst_kl);
    if (worse) {
      res.worst_kl = rep.kl_numeric_to_closed;
      res.worst_trial = t;
      res.worst_problem = pr;
      res.worst_report = rep;
      have_worst = true;
    }
  }
  return res;
}

}  // namespace rulekd
