// Copyright 2026 The KernelForge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace kernelforge {

// Trajectory math on recorded episodes: GAE, value-pretraining loss, the
// asymmetric clipped PPO surrogate, importance-ratio diagnostics and the
// rejection fine-tuning loss. All sequence arguments are Eigen arrays of
// equal length T; masks select the policy-bearing (action) tokens.

template <typename Scalar>
using Seq = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
using Mask = Eigen::Array<bool, Eigen::Dynamic, 1>;

/// One recorded episode. Rewards are zero except at the last step.
template <typename Scalar>
struct TrajectoryTensors {
  Seq<Scalar> rewards;
  Seq<Scalar> values;
  Seq<Scalar> logp_old;
  Seq<Scalar> logp_new;
  Mask loss_mask;

  Eigen::Index size() const { return rewards.size(); }
};

struct GaeParams {
  double gamma = 1.0;
  double lambda = 0.95;
};

struct ClipParams {
  double eps_lower = 0.2;
  double eps_higher = 0.28;
};

/// Ratio whose value is not finite; carries the token index.
class NonFiniteRatioError : public std::domain_error {
 public:
  NonFiniteRatioError(Eigen::Index index)
      : std::domain_error("non-finite importance ratio at token " + std::to_string(index)),
        index_(index) {}
  Eigen::Index index() const { return index_; }

 private:
  Eigen::Index index_;
};

namespace detail {

inline void require_same_length(Eigen::Index a, Eigen::Index b, const char* what) {
  if (a != b) {
    throw std::invalid_argument(std::string(what) + ": length mismatch (" + std::to_string(a) +
                                " vs " + std::to_string(b) + ")");
  }
}

/// Pairwise (tree) summation; the reduction order depends only on n.
template <typename Scalar>
Scalar pairwise_sum(const Scalar* x, std::size_t n) {
  if (n == 0) return Scalar(0);
  if (n == 1) return x[0];
  const std::size_t h = n / 2;
  return pairwise_sum(x, h) + pairwise_sum(x + h, n - h);
}

}  // namespace detail

template <typename Scalar>
struct GaeResult {
  Seq<Scalar> advantages;
  Seq<Scalar> targets;
};

/// Backward recursion A_t = delta_t + gamma * lambda * A_{t+1}, with
/// delta_t = r_t + gamma * V_{t+1} - V_t and V_T = 0. Targets are V_t + A_t.
template <typename DerivedR, typename DerivedV>
GaeResult<typename DerivedR::Scalar> gae(const Eigen::ArrayBase<DerivedR>& rewards,
                                         const Eigen::ArrayBase<DerivedV>& values,
                                         const GaeParams& p = {}) {
  using Scalar = typename DerivedR::Scalar;
  detail::require_same_length(rewards.size(), values.size(), "gae");
  if (rewards.size() == 0) throw std::invalid_argument("gae: empty trajectory");
  const Eigen::Index T = rewards.size();
  const Scalar gamma(p.gamma);
  const Scalar gl(p.gamma * p.lambda);
  GaeResult<Scalar> out;
  out.advantages.resize(T);
  Scalar next_adv(0);
  for (Eigen::Index t = T - 1; t >= 0; --t) {
    const Scalar next_v = t + 1 < T ? Scalar(values[t + 1]) : Scalar(0);
    const Scalar delta = rewards[t] + gamma * next_v - values[t];
    next_adv = delta + gl * next_adv;
    out.advantages[t] = next_adv;
  }
  out.targets = values.derived().template cast<Scalar>() + out.advantages;
  return out;
}

/// Half the mean squared error over masked entries.
template <typename DerivedV, typename DerivedT>
typename DerivedV::Scalar value_loss(const Eigen::ArrayBase<DerivedV>& values,
                                     const Eigen::ArrayBase<DerivedT>& targets, const Mask& mask) {
  using Scalar = typename DerivedV::Scalar;
  detail::require_same_length(values.size(), targets.size(), "value_loss");
  detail::require_same_length(values.size(), mask.size(), "value_loss");
  const auto n = mask.count();
  if (n == 0) throw std::invalid_argument("value_loss: empty mask");
  const Seq<Scalar> sq = mask.select((values - targets).square(), Scalar(0));
  return Scalar(0.5) * detail::pairwise_sum(sq.data(), static_cast<std::size_t>(sq.size())) /
         Scalar(n);
}

/// exp(logp_new - logp_old) per token. Throws NonFiniteRatioError naming
/// the first masked token whose ratio is not finite.
template <typename DerivedA, typename DerivedB>
Seq<typename DerivedA::Scalar> importance_ratios(const Eigen::ArrayBase<DerivedA>& logp_old,
                                                 const Eigen::ArrayBase<DerivedB>& logp_new,
                                                 const Mask& mask) {
  detail::require_same_length(logp_old.size(), logp_new.size(), "importance_ratios");
  detail::require_same_length(logp_old.size(), mask.size(), "importance_ratios");
  Seq<typename DerivedA::Scalar> rho = (logp_new - logp_old).exp();
  for (Eigen::Index t = 0; t < rho.size(); ++t) {
    if (mask[t] && !std::isfinite(rho[t])) throw NonFiniteRatioError(t);
  }
  return rho;
}

/// Per-token min(rho * A, clip(rho, 1 - eps_lower, 1 + eps_higher) * A).
template <typename DerivedR, typename DerivedA>
Seq<typename DerivedR::Scalar> ppo_terms(const Eigen::ArrayBase<DerivedR>& rho,
                                         const Eigen::ArrayBase<DerivedA>& adv,
                                         const ClipParams& p = {}) {
  using Scalar = typename DerivedR::Scalar;
  detail::require_same_length(rho.size(), adv.size(), "ppo_terms");
  const Seq<Scalar> clipped = rho.cwiseMax(Scalar(1 - p.eps_lower)).cwiseMin(Scalar(1 + p.eps_higher));
  return (rho * adv).cwiseMin(clipped * adv);
}

/// Clipped surrogate objective (to be maximized) of one sequence: mean of
/// ppo_terms over masked tokens.
template <typename DerivedO, typename DerivedN, typename DerivedA>
typename DerivedO::Scalar ppo_surrogate(const Eigen::ArrayBase<DerivedO>& logp_old,
                                        const Eigen::ArrayBase<DerivedN>& logp_new,
                                        const Eigen::ArrayBase<DerivedA>& adv, const Mask& mask,
                                        const ClipParams& p = {}) {
  using Scalar = typename DerivedO::Scalar;
  detail::require_same_length(logp_old.size(), adv.size(), "ppo_surrogate");
  const auto n = mask.count();
  if (n == 0) throw std::invalid_argument("ppo_surrogate: empty mask");
  const auto rho = importance_ratios(logp_old, logp_new, mask);
  const Seq<Scalar> terms = mask.select(ppo_terms(rho, adv, p), Scalar(0));
  return detail::pairwise_sum(terms.data(), static_cast<std::size_t>(terms.size())) / Scalar(n);
}

/// Advantages standardized over masked tokens (mean 0, unit variance);
/// unmasked entries are left as they are.
template <typename DerivedA>
Seq<typename DerivedA::Scalar> normalize_advantages(const Eigen::ArrayBase<DerivedA>& adv,
                                                    const Mask& mask) {
  using Scalar = typename DerivedA::Scalar;
  detail::require_same_length(adv.size(), mask.size(), "normalize_advantages");
  const auto n = mask.count();
  Seq<Scalar> out = adv;
  if (n == 0) return out;
  const Scalar mean = mask.select(adv, Scalar(0)).sum() / Scalar(n);
  const Scalar var = mask.select((adv - mean).square(), Scalar(0)).sum() / Scalar(n);
  const Scalar sd = std::sqrt(var) + Scalar(1e-8);
  for (Eigen::Index t = 0; t < out.size(); ++t) {
    if (mask[t]) out[t] = (adv[t] - mean) / sd;
  }
  return out;
}

inline const double kDefaultFloorLogp = std::log(1e-8);

struct RatioStats {
  int n_floor_tokens = 0;
  double max_ratio = 0.0;
  double ratio_variance = 0.0;
  std::vector<Eigen::Index> flagged;  // tokens with logp_old below the floor
};

/// Measures ratio spread and flags tokens whose behaviour log-probability
/// sits below `floor_logp`. Non-finite ratios are skipped in the moments.
template <typename DerivedA, typename DerivedB>
RatioStats ratio_diagnostics(const Eigen::ArrayBase<DerivedA>& logp_old,
                             const Eigen::ArrayBase<DerivedB>& logp_new,
                             double floor_logp = kDefaultFloorLogp) {
  detail::require_same_length(logp_old.size(), logp_new.size(), "ratio_diagnostics");
  RatioStats s;
  std::vector<double> ratios;
  for (Eigen::Index t = 0; t < logp_old.size(); ++t) {
    if (static_cast<double>(logp_old[t]) < floor_logp) {
      ++s.n_floor_tokens;
      s.flagged.push_back(t);
    }
    const double r = std::exp(static_cast<double>(logp_new[t]) - static_cast<double>(logp_old[t]));
    if (std::isfinite(r)) ratios.push_back(r);
  }
  if (ratios.empty()) return s;
  double mean = detail::pairwise_sum(ratios.data(), ratios.size()) / static_cast<double>(ratios.size());
  std::vector<double> sq;
  sq.reserve(ratios.size());
  for (double r : ratios) {
    s.max_ratio = std::max(s.max_ratio, r);
    sq.push_back((r - mean) * (r - mean));
  }
  s.ratio_variance = detail::pairwise_sum(sq.data(), sq.size()) / static_cast<double>(sq.size());
  return s;
}

/// Negative sum of masked log-probabilities of one trajectory.
template <typename DerivedL>
typename DerivedL::Scalar rft_loss(const Eigen::ArrayBase<DerivedL>& logp, const Mask& mask) {
  using Scalar = typename DerivedL::Scalar;
  detail::require_same_length(logp.size(), mask.size(), "rft_loss");
  if (mask.count() == 0) throw std::invalid_argument("rft_loss: empty mask");
  const Seq<Scalar> kept = mask.select(logp, Scalar(0));
  return -detail::pairwise_sum(kept.data(), static_cast<std::size_t>(kept.size()));
}

// Batch forms over recorded trajectories (double precision).

using Trajectory = TrajectoryTensors<double>;

/// Mean over trajectories of the per-sequence surrogate, advantages from
/// gae(). `normalize` standardizes each sequence's advantages first.
double ppo_batch_objective(const std::vector<Trajectory>& batch, const GaeParams& gp = {},
                           const ClipParams& cp = {}, bool normalize = false);
double value_loss_batch(const std::vector<Trajectory>& batch, const GaeParams& gp = {});
double rft_loss_batch(const std::vector<Trajectory>& batch);

/// {T, rewards, values, logp_old, logp_new, loss_mask}. Throws DataError on
/// length mismatch or a nonzero reward before the last step.
nlohmann::json trajectory_to_json(const Trajectory& t);
Trajectory trajectory_from_json(const nlohmann::json& j);
/// A file holds one trajectory object, an array of them, or one per line.
std::vector<Trajectory> load_trajectories(const std::string& path);

// Rejection fine-tuning filter.

struct RftTurn {
  std::string tool;  // "Submit" and "Stop" for non-tool actions
  std::string args;  // canonical JSON
  std::string observation_digest;
  bool schema_violation = false;
};

struct RftVerdict {
  bool kept = false;
  std::vector<std::string> reasons;  // nonpositive_reward, redundant_loop, schema_violation
};

inline constexpr int kRedundantLoopThreshold = 3;

RftVerdict rft_filter(const std::vector<RftTurn>& turns, double reward,
                      int loop_threshold = kRedundantLoopThreshold);

}  // namespace kernelforge
