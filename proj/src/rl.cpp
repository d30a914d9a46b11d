// Copyright 2026 The KernelForge Authors
// SPDX-License-Identifier: Apache-2.0

#include "kernelforge/rl.hpp"

#include <fstream>
#include <sstream>

#include "kernelforge/task_io.hpp"

namespace kernelforge {

using nlohmann::json;

namespace {

double batch_mean(std::vector<double> xs, const char* what) {
  if (xs.empty()) throw std::invalid_argument(std::string(what) + ": empty batch");
  return detail::pairwise_sum(xs.data(), xs.size()) / static_cast<double>(xs.size());
}

}  // namespace

double ppo_batch_objective(const std::vector<Trajectory>& batch, const GaeParams& gp,
                           const ClipParams& cp, bool normalize) {
  std::vector<double> per;
  for (const auto& t : batch) {
    auto adv = gae(t.rewards, t.values, gp).advantages;
    if (normalize) adv = normalize_advantages(adv, t.loss_mask);
    per.push_back(ppo_surrogate(t.logp_old, t.logp_new, adv, t.loss_mask, cp));
  }
  return batch_mean(std::move(per), "ppo");
}

double value_loss_batch(const std::vector<Trajectory>& batch, const GaeParams& gp) {
  std::vector<double> per;
  for (const auto& t : batch) {
    per.push_back(value_loss(t.values, gae(t.rewards, t.values, gp).targets, t.loss_mask));
  }
  return batch_mean(std::move(per), "value-loss");
}

double rft_loss_batch(const std::vector<Trajectory>& batch) {
  std::vector<double> per;
  for (const auto& t : batch) per.push_back(rft_loss(t.logp_new, t.loss_mask));
  return batch_mean(std::move(per), "rft-loss");
}

json trajectory_to_json(const Trajectory& t) {
  auto vec = [](const Seq<double>& s) { return std::vector<double>(s.data(), s.data() + s.size()); };
  std::vector<bool> mask(t.loss_mask.data(), t.loss_mask.data() + t.loss_mask.size());
  return json{{"T", t.size()},          {"rewards", vec(t.rewards)},   {"values", vec(t.values)},
              {"logp_old", vec(t.logp_old)}, {"logp_new", vec(t.logp_new)}, {"loss_mask", mask}};
}

Trajectory trajectory_from_json(const json& j) {
  Trajectory t;
  try {
    const auto T = j.at("T").get<Eigen::Index>();
    if (T < 1) throw DataError("trajectory: T must be >= 1");
    auto seq = [&](const char* key) {
      const auto v = j.at(key).get<std::vector<double>>();
      if (static_cast<Eigen::Index>(v.size()) != T) {
        throw DataError(std::string("trajectory: ") + key + " has length " +
                        std::to_string(v.size()) + ", expected " + std::to_string(T));
      }
      return Seq<double>(Eigen::Map<const Seq<double>>(v.data(), T));
    };
    t.rewards = seq("rewards");
    t.values = seq("values");
    t.logp_old = seq("logp_old");
    t.logp_new = seq("logp_new");
    const auto& m = j.at("loss_mask");
    if (!m.is_array() || static_cast<Eigen::Index>(m.size()) != T) {
      throw DataError("trajectory: loss_mask must have length " + std::to_string(T));
    }
    t.loss_mask.resize(T);
    for (Eigen::Index i = 0; i < T; ++i) {
      const auto& e = m[static_cast<std::size_t>(i)];
      t.loss_mask[i] = e.is_boolean() ? e.get<bool>() : e.get<double>() != 0.0;
    }
    for (Eigen::Index i = 0; i + 1 < T; ++i) {
      if (t.rewards[i] != 0.0) {
        throw DataError("trajectory: reward at step " + std::to_string(i) +
                        " is nonzero; only the final step is rewarded");
      }
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("trajectory: ") + e.what());
  }
  return t;
}

std::vector<Trajectory> load_trajectories(const std::string& path) {
  const auto text = read_text_file(path);
  std::vector<Trajectory> out;
  try {
    const auto j = json::parse(text);
    if (j.is_array()) {
      for (const auto& e : j) out.push_back(trajectory_from_json(e));
    } else {
      out.push_back(trajectory_from_json(j));
    }
    return out;
  } catch (const json::parse_error&) {
    // Not a single document; fall through to one record per line.
  }
  std::istringstream in(text);
  std::string line;
  for (int n = 1; std::getline(in, line); ++n) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(trajectory_from_json(json::parse(line)));
    } catch (const json::parse_error& e) {
      throw DataError(path + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

RftVerdict rft_filter(const std::vector<RftTurn>& turns, double reward, int loop_threshold) {
  RftVerdict v;
  if (!(reward > 0.0)) v.reasons.push_back("nonpositive_reward");
  int run = 0;
  for (std::size_t i = 0; i < turns.size(); ++i) {
    const bool same = i > 0 && turns[i].tool == turns[i - 1].tool &&
                      turns[i].args == turns[i - 1].args &&
                      turns[i].observation_digest == turns[i - 1].observation_digest;
    run = same ? run + 1 : 1;
    if (run >= loop_threshold) {
      v.reasons.push_back("redundant_loop");
      break;
    }
  }
  for (const auto& t : turns) {
    if (t.schema_violation) {
      v.reasons.push_back("schema_violation");
      break;
    }
  }
  v.kept = v.reasons.empty();
  return v;
}

}  // namespace kernelforge
