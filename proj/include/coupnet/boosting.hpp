#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "coupnet/error.hpp"
#include "coupnet/tree.hpp"

namespace coupnet {

struct BoostingParams {
  std::size_t rounds = 50;
  std::size_t max_depth = 3;
  std::size_t min_leaf = 1;
  bool operator==(const BoostingParams&) const = default;
};

struct BoostingStage {
  DecisionTree tree;
  double weight = 0.0;
  double weighted_error = 0.0;  // error under the instance weights it was trained on
  bool operator==(const BoostingStage&) const = default;
};

// Stage weight used when a round fits its weighted sample perfectly.
inline const double kPerfectStageWeight = std::log(1e9);

inline constexpr int kEnsembleFormatVersion = 1;

class BoostedEnsemble {
 public:
  BoostedEnsemble() = default;
  BoostedEnsemble(std::vector<BoostingStage> stages, std::size_t rounds_run)
      : stages_(std::move(stages)), rounds_run_(rounds_run) {
    for (const auto& s : stages_) {
      if (!(s.weight > 0.0)) throw ValidationError("BoostedEnsemble: stage weights must be positive");
    }
  }

  const std::vector<BoostingStage>& stages() const noexcept { return stages_; }
  std::size_t rounds_run() const noexcept { return rounds_run_; }
  bool empty() const noexcept { return stages_.empty(); }
  std::size_t arity() const { return stages_.empty() ? 0 : stages_.front().tree.arity(); }

  // Weighted vote in [-1, 1]: each stage votes +1 for label 1, -1 otherwise.
  double score(std::span<const double> x) const {
    if (stages_.empty()) throw ValidationError("cannot score with an empty ensemble");
    double vote = 0.0;
    double total = 0.0;
    for (const auto& s : stages_) {
      vote += s.weight * (s.tree.predict(x) == 1 ? 1.0 : -1.0);
      total += s.weight;
    }
    return vote / total;
  }

  // score == 0 maps to the negative class.
  int label(std::span<const double> x) const { return score(x) > 0.0 ? 1 : 0; }

  bool operator==(const BoostedEnsemble&) const = default;

 private:
  std::vector<BoostingStage> stages_;
  std::size_t rounds_run_ = 0;
};

inline double predict_score(const BoostedEnsemble& e, std::span<const double> x) { return e.score(x); }
inline int predict_label(const BoostedEnsemble& e, std::span<const double> x) { return e.label(x); }

struct BoostingRound {
  std::size_t round;  // 1-based
  const DecisionTree& tree;
  double weighted_error;
  bool kept;
  std::span<const double> weights_after;
};

using BoostingObserver = std::function<void(const BoostingRound&)>;

// Discrete two-class AdaBoost over gain-ratio trees. Stops early on a perfect
// round (kept with kPerfectStageWeight) or on a round no better than chance
// (discarded).
inline BoostedEnsemble train_boosted(const LabeledDataset& d, const BoostingParams& params,
                                     const BoostingObserver& observer = {}) {
  detail::check_trainable(d);
  if (params.rounds == 0) throw ValidationError("boosting needs at least one round");
  const std::size_t n = d.size();
  std::vector<double> w(n, 1.0 / static_cast<double>(n));
  std::vector<BoostingStage> stages;
  std::vector<char> wrong(n);
  std::size_t rounds_run = 0;

  for (std::size_t t = 1; t <= params.rounds; ++t) {
    rounds_run = t;
    auto tree = detail::TreeGrower(d, w, params.max_depth, params.min_leaf).grow();
    double eps = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      wrong[i] = tree.predict(d.row(i)) != d.label(i);
      if (wrong[i]) eps += w[i];
    }
    if (eps <= 0.0) {
      stages.push_back({std::move(tree), kPerfectStageWeight, 0.0});
      if (observer) observer({t, stages.back().tree, 0.0, true, w});
      break;
    }
    if (eps >= 0.5) {
      if (observer) observer({t, tree, eps, false, w});
      break;
    }
    const double factor = (1.0 - eps) / eps;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (wrong[i]) w[i] *= factor;
      total += w[i];
    }
    for (double& x : w) x /= total;
    stages.push_back({std::move(tree), std::log(factor), eps});
    if (observer) observer({t, stages.back().tree, eps, true, w});
  }
  if (stages.empty()) throw TrainingError("weak learner no better than chance");
  return BoostedEnsemble(std::move(stages), rounds_run);
}

inline BoostedEnsemble train_boosted(const LabeledDataset& d, std::size_t rounds, std::size_t max_depth) {
  return train_boosted(d, BoostingParams{rounds, max_depth});
}

inline nlohmann::json ensemble_to_json(const BoostedEnsemble& e) {
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& s : e.stages()) {
    stages.push_back({{"weight", s.weight}, {"weighted_error", s.weighted_error}, {"tree", tree_to_json(s.tree)}});
  }
  return {{"format", "coupnet.boosted_ensemble"},
          {"format_version", kEnsembleFormatVersion},
          {"rounds_run", e.rounds_run()},
          {"stages", std::move(stages)}};
}

inline BoostedEnsemble ensemble_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "coupnet.boosted_ensemble") throw ValidationError("not a boosted ensemble file");
  if (j.at("format_version").get<int>() != kEnsembleFormatVersion) {
    throw ValidationError("unsupported ensemble format_version " + j.at("format_version").dump());
  }
  std::vector<BoostingStage> stages;
  for (const auto& s : j.at("stages")) {
    stages.push_back({tree_from_json(s.at("tree")), s.at("weight").get<double>(), s.at("weighted_error").get<double>()});
  }
  return BoostedEnsemble(std::move(stages), j.at("rounds_run").get<std::size_t>());
}

}  // namespace coupnet
