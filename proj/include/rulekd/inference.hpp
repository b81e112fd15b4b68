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
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <utility>
#include <variant>
#include <vector>

#include "rulekd/projection.hpp"
#include "rulekd/rules.hpp"

namespace rulekd {

/// Row-major T x K table of log-weights or probabilities.
using Table = std::vector<std::vector<double>>;

// ---------------------------------------------------------------------------
// Factorized rules

struct FactorizedTeacherQuery {
  Table base_log_probs;  // T x K
  Table log_penalties;   // T x K, each entry <= 0 (may be -inf); empty means none
};

struct FactorizedResult {
  Table probs;
  /// Positions where every label was masked; those keep the base distribution.
  std::vector<std::size_t> infeasible_positions;
};

/// Per-position renormalization of p * exp(penalty).
inline FactorizedResult soft_predict_factorized(const FactorizedTeacherQuery& q) {
  FactorizedResult out;
  out.probs.resize(q.base_log_probs.size());
  for (std::size_t t = 0; t < q.base_log_probs.size(); ++t) {
    std::vector<double> w = q.base_log_probs[t];
    if (!q.log_penalties.empty()) {
      if (q.log_penalties.at(t).size() != w.size()) throw std::invalid_argument("factorized: penalty width");
      for (std::size_t k = 0; k < w.size(); ++k) w[k] += q.log_penalties[t][k];
    }
    double lz = log_sum_exp(w);
    if (lz == kNegInf) {
      out.infeasible_positions.push_back(t);
      w = q.base_log_probs[t];
      lz = log_sum_exp(w);
    }
    out.probs[t].resize(w.size());
    for (std::size_t k = 0; k < w.size(); ++k) out.probs[t][k] = std::exp(w[k] - lz);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Bigram (chain) rules

/// Log-penalties of bigram-scope groundings: start[k], transition[j][k], end[j].
struct ChainPenalties {
  std::vector<double> start;
  Table transition;
  std::vector<double> end;

  static ChainPenalties none(std::size_t k) {
    return ChainPenalties{std::vector<double>(k, 0.0), Table(k, std::vector<double>(k, 0.0)),
                          std::vector<double>(k, 0.0)};
  }

  /// Sums C * lambda * (1 - r) over every rule's groundings on each bigram.
  template <class Context>
  static ChainPenalties from_rules(std::span<const Rule<Context, TagBigram>> rules, std::size_t k, double c,
                                   const Context& ctx = {}) {
    ChainPenalties p = none(k);
    const int kk = static_cast<int>(k);
    auto add = [&](int prev, int cur, double& slot) {
      for (const auto& r : rules) {
        for (auto v : r.ground(ctx, TagBigram{prev, cur})) slot += log_penalty(r.lambda, c, v.value());
      }
    };
    for (int y = 0; y < kk; ++y) {
      add(TagSet::kBoundary, y, p.start[static_cast<std::size_t>(y)]);
      add(y, TagSet::kBoundary, p.end[static_cast<std::size_t>(y)]);
      for (int z = 0; z < kk; ++z) add(y, z, p.transition[static_cast<std::size_t>(y)][static_cast<std::size_t>(z)]);
    }
    return p;
  }

  [[nodiscard]] std::size_t size() const { return start.size(); }
};

namespace detail {

inline void check_chain_shapes(const Table& unary, const ChainPenalties& pen) {
  if (unary.empty()) throw std::invalid_argument("chain: empty sequence");
  const std::size_t k = pen.size();
  if (pen.end.size() != k || pen.transition.size() != k) throw std::invalid_argument("chain: penalty shape");
  for (const auto& row : pen.transition)
    if (row.size() != k) throw std::invalid_argument("chain: penalty shape");
  for (const auto& row : unary)
    if (row.size() != k) throw std::invalid_argument("chain: label count mismatch");
}

inline Table chain_forward(const Table& u, const ChainPenalties& pen) {
  const std::size_t n = u.size(), k = pen.size();
  Table alpha(n, std::vector<double>(k, kNegInf));
  std::vector<double> buf(k);
  for (std::size_t y = 0; y < k; ++y) alpha[0][y] = pen.start[y] + u[0][y];
  // Masked transitions are skipped; under BIOES most of them are.
  std::vector<std::vector<std::size_t>> from(k);
  for (std::size_t j = 0; j < k; ++j)
    for (std::size_t y = 0; y < k; ++y)
      if (pen.transition[j][y] != kNegInf) from[y].push_back(j);
  for (std::size_t t = 1; t < n; ++t) {
    for (std::size_t y = 0; y < k; ++y) {
      buf.clear();
      for (std::size_t j : from[y]) buf.push_back(alpha[t - 1][j] + pen.transition[j][y]);
      alpha[t][y] = u[t][y] + log_sum_exp(buf);
    }
  }
  return alpha;
}

inline double chain_log_partition(const Table& alpha, const ChainPenalties& pen) {
  const std::size_t k = pen.size();
  std::vector<double> buf(k);
  for (std::size_t y = 0; y < k; ++y) buf[y] = alpha.back()[y] + pen.end[y];
  return log_sum_exp(buf);
}

inline Table chain_marginals(const Table& u, const ChainPenalties& pen, const Table& alpha, double lz) {
  const std::size_t n = u.size(), k = pen.size();
  if (lz == kNegInf) throw InfeasibleConstraints("chain: no feasible label sequence");
  Table beta(n, std::vector<double>(k, kNegInf));
  std::vector<double> buf(k);
  beta[n - 1] = pen.end;
  std::vector<std::vector<std::size_t>> to(k);
  for (std::size_t j = 0; j < k; ++j)
    for (std::size_t y = 0; y < k; ++y)
      if (pen.transition[j][y] != kNegInf) to[j].push_back(y);
  for (std::size_t t = n - 1; t-- > 0;) {
    for (std::size_t j = 0; j < k; ++j) {
      buf.clear();
      for (std::size_t y : to[j]) buf.push_back(pen.transition[j][y] + u[t + 1][y] + beta[t + 1][y]);
      beta[t][j] = log_sum_exp(buf);
    }
  }
  Table marg(n, std::vector<double>(k));
  for (std::size_t t = 0; t < n; ++t) {
    double s = 0.0;
    for (std::size_t y = 0; y < k; ++y) {
      const double lv = alpha[t][y] + beta[t][y] - lz;
      marg[t][y] = lv == kNegInf ? 0.0 : std::exp(lv);
      s += marg[t][y];
    }
    for (auto& v : marg[t]) v /= s;
  }
  return marg;
}

inline Table chain_marginals(const Table& u, const ChainPenalties& pen) {
  const Table alpha = chain_forward(u, pen);
  return chain_marginals(u, pen, alpha, chain_log_partition(alpha, pen));
}

inline std::vector<int> chain_viterbi(const Table& u, const ChainPenalties& pen) {
  const std::size_t n = u.size(), k = pen.size();
  Table delta(n, std::vector<double>(k, kNegInf));
  std::vector<std::vector<int>> back(n, std::vector<int>(k, -1));
  for (std::size_t y = 0; y < k; ++y) delta[0][y] = pen.start[y] + u[0][y];
  for (std::size_t t = 1; t < n; ++t) {
    for (std::size_t y = 0; y < k; ++y) {
      double best = kNegInf;
      int arg = -1;
      for (std::size_t j = 0; j < k; ++j) {
        const double v = delta[t - 1][j] + pen.transition[j][y];
        if (v > best) {  // strict: ties keep the lower index
          best = v;
          arg = static_cast<int>(j);
        }
      }
      delta[t][y] = best + u[t][y];
      back[t][y] = arg;
    }
  }
  double best = kNegInf;
  int arg = -1;
  for (std::size_t y = 0; y < k; ++y) {
    const double v = delta[n - 1][y] + pen.end[y];
    if (v > best) {
      best = v;
      arg = static_cast<int>(y);
    }
  }
  if (arg < 0) throw InfeasibleConstraints("chain: no feasible label sequence");
  std::vector<int> path(n);
  path[n - 1] = arg;
  for (std::size_t t = n - 1; t > 0; --t) path[t - 1] = back[t][static_cast<std::size_t>(path[t])];
  return path;
}

/// Unnormalized log-weight of one label sequence.
inline double chain_score(const Table& u, const ChainPenalties& pen, std::span<const int> y) {
  double s = pen.start[static_cast<std::size_t>(y[0])] + u[0][static_cast<std::size_t>(y[0])];
  for (std::size_t t = 1; t < y.size(); ++t)
    s += pen.transition[static_cast<std::size_t>(y[t - 1])][static_cast<std::size_t>(y[t])] +
         u[t][static_cast<std::size_t>(y[t])];
  return s + pen.end[static_cast<std::size_t>(y.back())];
}

/// Forward-filtering backward-sampling. Returns the sample and its log-probability.
template <class Rng>
std::pair<std::vector<int>, double> chain_sample(const Table& u, const ChainPenalties& pen, const Table& alpha,
                                                 double lz, Rng& rng) {
  const std::size_t n = u.size(), k = pen.size();
  if (lz == kNegInf) throw InfeasibleConstraints("chain: no feasible label sequence");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto draw = [&](const std::vector<double>& logw) {
    const double z = log_sum_exp(logw);
    double r = unit(rng), acc = 0.0;
    int last = -1;
    for (std::size_t y = 0; y < logw.size(); ++y) {
      if (logw[y] == kNegInf) continue;
      last = static_cast<int>(y);
      acc += std::exp(logw[y] - z);
      if (r < acc) return static_cast<int>(y);
    }
    return last;
  };
  std::vector<int> y(n);
  std::vector<double> w(k);
  for (std::size_t j = 0; j < k; ++j) w[j] = alpha[n - 1][j] + pen.end[j];
  y[n - 1] = draw(w);
  for (std::size_t t = n - 1; t > 0; --t) {
    for (std::size_t j = 0; j < k; ++j) w[j] = alpha[t - 1][j] + pen.transition[j][static_cast<std::size_t>(y[t])];
    y[t - 1] = draw(w);
  }
  return {y, chain_score(u, pen, y) - lz};
}

template <class Rng>
std::pair<std::vector<int>, double> chain_sample(const Table& u, const ChainPenalties& pen, Rng& rng) {
  const Table alpha = chain_forward(u, pen);
  return chain_sample(u, pen, alpha, chain_log_partition(alpha, pen), rng);
}

}  // namespace detail

/// Label chain whose teacher weight is p(Y) times bigram penalties.
class ChainTeacherQuery {
 public:
  ChainTeacherQuery(Table base_log_probs, ChainPenalties penalties)
      : base_(std::move(base_log_probs)), pen_(std::move(penalties)) {
    detail::check_chain_shapes(base_, pen_);
    log_z_ = detail::chain_log_partition(detail::chain_forward(base_, pen_), pen_);
    if (log_z_ == kNegInf) throw InfeasibleConstraints("chain: no feasible label sequence");
  }

  [[nodiscard]] const Table& base_log_probs() const { return base_; }
  [[nodiscard]] const ChainPenalties& penalties() const { return pen_; }
  [[nodiscard]] std::size_t length() const { return base_.size(); }
  [[nodiscard]] std::size_t labels() const { return pen_.size(); }
  [[nodiscard]] double log_partition() const { return log_z_; }

  /// log q(Y) for a full sequence.
  [[nodiscard]] double log_prob(std::span<const int> y) const { return detail::chain_score(base_, pen_, y) - log_z_; }

 private:
  Table base_;
  ChainPenalties pen_;
  double log_z_;
};

/// Exact unigram marginals by forward-backward in log space.
inline Table chain_marginals(const ChainTeacherQuery& q) {
  return detail::chain_marginals(q.base_log_probs(), q.penalties());
}

/// Max-product decode; ties resolve to the lower label index.
inline std::vector<int> chain_map_decode(const ChainTeacherQuery& q) {
  return detail::chain_viterbi(q.base_log_probs(), q.penalties());
}

// ---------------------------------------------------------------------------
// Cross-instance groups

/// Pairwise grounding between position `pos_x` of member `member_x` and
/// position `pos_a` of member `member_a`; log_penalty[y_x][y_a] is finite.
struct CounterpartLink {
  std::size_t member_x = 0, pos_x = 0;
  std::size_t member_a = 0, pos_a = 0;
  Table log_penalty;
};

/// K x K log-penalty table of a label-pair rule.
template <class Context>
Table pair_penalty_table(const Rule<Context, LabelPair>& rule, std::size_t k, double c, const Context& ctx = {}) {
  Table t(k, std::vector<double>(k, 0.0));
  for (std::size_t x = 0; x < k; ++x)
    for (std::size_t a = 0; a < k; ++a)
      for (auto v : rule.ground(ctx, LabelPair{static_cast<int>(x), static_cast<int>(a)}))
        t[x][a] += log_penalty(rule.lambda, c, v.value());
  return t;
}

struct GibbsSettings {
  std::size_t sweeps = 200;
  std::optional<std::size_t> burn_in;  // default: 20% of sweeps
  std::uint64_t seed = 0;

  [[nodiscard]] std::size_t effective_burn_in() const { return burn_in.value_or(sweeps / 5); }
};

struct GroupTeacherQuery {
  std::vector<Table> members;  // per-member base log-probs, T_m x K
  ChainPenalties penalties;    // shared bigram penalties
  std::vector<CounterpartLink> links;
  GibbsSettings settings;
};

/// Blocked Gibbs over member label sequences. A member with no links to
/// itself is resampled exactly from its chain conditional and contributes
/// that conditional's marginals (Rao-Blackwellized); a member with
/// self-links is updated by Metropolis-Hastings with a chain proposal and
/// contributes sample indicators. Each sweep ends with a joint
/// independence move that redraws every member from its unlinked chain and
/// accepts on the link-score ratio, so modes separated by strong links
/// (whole lists switching category together) stay reachable.
inline std::vector<Table> gibbs_soft_predict(const GroupTeacherQuery& q) {
  const std::size_t k = q.penalties.size();
  const std::size_t m_count = q.members.size();
  if (q.settings.sweeps == 0) throw std::invalid_argument("gibbs: sweeps must be >= 1");
  for (const auto& m : q.members) detail::check_chain_shapes(m, q.penalties);
  for (const auto& l : q.links) {
    if (l.member_x >= m_count || l.member_a >= m_count || l.pos_x >= q.members[l.member_x].size() ||
        l.pos_a >= q.members[l.member_a].size())
      throw std::invalid_argument("gibbs: link references a position outside the group");
    if (l.log_penalty.size() != k) throw std::invalid_argument("gibbs: link table shape");
    for (const auto& row : l.log_penalty) {
      if (row.size() != k) throw std::invalid_argument("gibbs: link table shape");
      for (double v : row)
        if (!std::isfinite(v)) throw std::invalid_argument("gibbs: link penalties must be finite");
    }
  }

  std::mt19937_64 rng(q.settings.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<std::vector<int>> state(m_count);
  for (std::size_t m = 0; m < m_count; ++m) state[m] = detail::chain_viterbi(q.members[m], q.penalties);

  std::vector<Table> acc(m_count);
  for (std::size_t m = 0; m < m_count; ++m) acc[m].assign(q.members[m].size(), std::vector<double>(k, 0.0));

  // Per member: links to other members, and links within itself.
  std::vector<std::vector<std::size_t>> cross(m_count), self(m_count);
  for (std::size_t i = 0; i < q.links.size(); ++i) {
    const auto& l = q.links[i];
    if (l.member_x == l.member_a) {
      self[l.member_x].push_back(i);
    } else {
      cross[l.member_x].push_back(i);
      cross[l.member_a].push_back(i);
    }
  }

  auto self_score = [&](std::size_t m, std::span<const int> y) {
    double s = 0.0;
    for (std::size_t i : self[m]) {
      const auto& l = q.links[i];
      s += l.log_penalty[static_cast<std::size_t>(y[l.pos_x])][static_cast<std::size_t>(y[l.pos_a])];
    }
    return s;
  };
  // Proposal unary for a self-linked member: each end sees the other end's value in `anchor`.
  auto proposal_unary = [&](std::size_t m, const Table& u, std::span<const int> anchor) {
    Table v = u;
    for (std::size_t i : self[m]) {
      const auto& l = q.links[i];
      for (std::size_t y = 0; y < k; ++y) {
        v[l.pos_x][y] += l.log_penalty[y][static_cast<std::size_t>(anchor[l.pos_a])];
        v[l.pos_a][y] += l.log_penalty[static_cast<std::size_t>(anchor[l.pos_x])][y];
      }
    }
    return v;
  };
  auto log_proposal = [&](const Table& v, std::span<const int> y) {
    return detail::chain_score(v, q.penalties, y) -
           detail::chain_log_partition(detail::chain_forward(v, q.penalties), q.penalties);
  };

  auto link_score = [&](const std::vector<std::vector<int>>& y) {
    double s = 0.0;
    for (const auto& l : q.links)
      s += l.log_penalty[static_cast<std::size_t>(y[l.member_x][l.pos_x])]
                        [static_cast<std::size_t>(y[l.member_a][l.pos_a])];
    return s;
  };

  // Unlinked chains, fixed across sweeps, feed the joint move.
  std::vector<Table> free_alpha(m_count);
  std::vector<double> free_lz(m_count, 0.0);
  if (!q.links.empty()) {
    for (std::size_t m = 0; m < m_count; ++m) {
      free_alpha[m] = detail::chain_forward(q.members[m], q.penalties);
      free_lz[m] = detail::chain_log_partition(free_alpha[m], q.penalties);
    }
  }

  const std::size_t burn = std::min(q.settings.effective_burn_in(), q.settings.sweeps - 1);
  std::size_t kept = 0;
  for (std::size_t sweep = 0; sweep < q.settings.sweeps; ++sweep) {
    const bool record = sweep >= burn;
    for (std::size_t m = 0; m < m_count; ++m) {
      Table u = q.members[m];
      for (std::size_t i : cross[m]) {
        const auto& l = q.links[i];
        if (l.member_x == m) {
          const auto ya = static_cast<std::size_t>(state[l.member_a][l.pos_a]);
          for (std::size_t y = 0; y < k; ++y) u[l.pos_x][y] += l.log_penalty[y][ya];
        } else {
          const auto yx = static_cast<std::size_t>(state[l.member_x][l.pos_x]);
          for (std::size_t y = 0; y < k; ++y) u[l.pos_a][y] += l.log_penalty[yx][y];
        }
      }
      if (self[m].empty()) {
        const Table alpha = detail::chain_forward(u, q.penalties);
        const double lz = detail::chain_log_partition(alpha, q.penalties);
        if (record) {
          const Table marg = detail::chain_marginals(u, q.penalties, alpha, lz);
          for (std::size_t t = 0; t < marg.size(); ++t)
            for (std::size_t y = 0; y < k; ++y) acc[m][t][y] += marg[t][y];
        }
        state[m] = detail::chain_sample(u, q.penalties, alpha, lz, rng).first;
      } else {
        const auto& cur = state[m];
        const Table v_cur = proposal_unary(m, u, cur);
        auto proposed = detail::chain_sample(v_cur, q.penalties, rng).first;
        const Table v_prop = proposal_unary(m, u, proposed);
        const double log_target_new = detail::chain_score(u, q.penalties, proposed) + self_score(m, proposed);
        const double log_target_old = detail::chain_score(u, q.penalties, cur) + self_score(m, cur);
        const double log_ratio = log_target_new - log_target_old + log_proposal(v_prop, cur) -
                                 log_proposal(v_cur, proposed);
        if (log_ratio >= 0.0 || unit(rng) < std::exp(log_ratio)) state[m] = std::move(proposed);
        if (record) {
          for (std::size_t t = 0; t < state[m].size(); ++t) acc[m][t][static_cast<std::size_t>(state[m][t])] += 1.0;
        }
      }
    }
    if (!q.links.empty()) {
      std::vector<std::vector<int>> proposed(m_count);
      for (std::size_t m = 0; m < m_count; ++m)
        proposed[m] = detail::chain_sample(q.members[m], q.penalties, free_alpha[m], free_lz[m], rng).first;
      const double log_ratio = link_score(proposed) - link_score(state);
      if (log_ratio >= 0.0 || unit(rng) < std::exp(log_ratio)) state = std::move(proposed);
    }
    if (record) ++kept;
  }

  for (auto& member : acc)
    for (auto& row : member)
      for (auto& v : row) v /= static_cast<double>(kept);
  return acc;
}

struct GroupPartition {
  std::vector<std::vector<std::size_t>> groups;  // sorted members, groups ordered by first member
  std::vector<std::size_t> kept_links;
  std::vector<std::size_t> removed_links;
};

/// Connected components of the link graph over `n` instances, splitting any
/// component larger than `g_max` by removing uniformly random links.
inline GroupPartition form_groups(std::size_t n, std::span<const std::pair<std::size_t, std::size_t>> links,
                                  std::size_t g_max, std::uint64_t seed) {
  if (g_max == 0) throw std::invalid_argument("form_groups: G_max must be >= 1");
  for (const auto& [a, b] : links)
    if (a >= n || b >= n) throw std::invalid_argument("form_groups: link outside the batch");

  std::vector<char> alive(links.size(), 1);
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> parent(n);

  auto components = [&]() {
    std::iota(parent.begin(), parent.end(), std::size_t{0});
    auto find = [&](std::size_t x) {
      while (parent[x] != x) x = parent[x] = parent[parent[x]];
      return x;
    };
    for (std::size_t i = 0; i < links.size(); ++i) {
      if (!alive[i]) continue;
      const auto ra = find(links[i].first), rb = find(links[i].second);
      if (ra != rb) parent[std::max(ra, rb)] = std::min(ra, rb);
    }
    for (std::size_t x = 0; x < n; ++x) parent[x] = find(x);
  };

  GroupPartition out;
  for (;;) {
    components();
    std::vector<std::size_t> size(n, 0);
    for (std::size_t x = 0; x < n; ++x) ++size[parent[x]];
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < links.size(); ++i) {
      if (alive[i] && links[i].first != links[i].second && size[parent[links[i].first]] > g_max)
        candidates.push_back(i);
    }
    if (candidates.empty()) break;
    std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
    const std::size_t victim = candidates[pick(rng)];
    alive[victim] = 0;
    out.removed_links.push_back(victim);
  }

  std::vector<std::ptrdiff_t> group_of(n, -1);
  for (std::size_t x = 0; x < n; ++x) {
    const std::size_t root = parent[x];
    if (group_of[root] < 0) {
      group_of[root] = static_cast<std::ptrdiff_t>(out.groups.size());
      out.groups.emplace_back();
    }
    out.groups[static_cast<std::size_t>(group_of[root])].push_back(x);
  }
  for (std::size_t i = 0; i < links.size(); ++i)
    if (alive[i]) out.kept_links.push_back(i);
  return out;
}

}  // namespace rulekd
