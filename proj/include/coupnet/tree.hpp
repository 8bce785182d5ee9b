#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "coupnet/error.hpp"

namespace coupnet {

// Row-major feature table with binary labels and instance weights.
class LabeledDataset {
 public:
  explicit LabeledDataset(std::size_t arity) : arity_(arity) {}

  void add(std::span<const double> x, int label) {
    if (x.size() != arity_) throw ValidationError("LabeledDataset: row arity mismatch");
    if (label != 0 && label != 1) throw ValidationError("LabeledDataset: label must be 0 or 1");
    values_.insert(values_.end(), x.begin(), x.end());
    labels_.push_back(static_cast<std::uint8_t>(label));
    reset_weights();
  }

  std::size_t arity() const noexcept { return arity_; }
  std::size_t size() const noexcept { return labels_.size(); }
  bool empty() const noexcept { return labels_.empty(); }

  std::span<const double> row(std::size_t i) const { return {values_.data() + i * arity_, arity_}; }
  double value(std::size_t i, std::size_t f) const { return values_[i * arity_ + f]; }
  int label(std::size_t i) const { return labels_[i]; }
  std::span<const double> weights() const noexcept { return weights_; }

  void reset_weights() {
    weights_.assign(labels_.size(), labels_.empty() ? 0.0 : 1.0 / static_cast<double>(labels_.size()));
  }

  // Weights must be strictly positive; they are rescaled to sum to 1.
  void set_weights(std::vector<double> w) {
    if (w.size() != size()) throw ValidationError("LabeledDataset: weight count mismatch");
    double total = 0.0;
    for (double x : w) {
      if (!(x > 0.0) || !std::isfinite(x)) throw ValidationError("LabeledDataset: weights must be positive");
      total += x;
    }
    for (double& x : w) x /= total;
    weights_ = std::move(w);
  }

 private:
  std::size_t arity_;
  std::vector<double> values_;
  std::vector<std::uint8_t> labels_;
  std::vector<double> weights_;
};

// Internal nodes send x[feature] <= threshold left. Leaves have feature == -1.
struct TreeNode {
  std::int32_t feature = -1;
  double threshold = 0.0;
  std::uint32_t left = 0;
  std::uint32_t right = 0;
  std::uint8_t label = 0;
  double confidence = 1.0;

  bool is_leaf() const noexcept { return feature < 0; }
  bool operator==(const TreeNode&) const = default;
};

class DecisionTree {
 public:
  DecisionTree() = default;

  // Validates that child links point forward and stay in range.
  DecisionTree(std::vector<TreeNode> nodes, std::size_t arity) : nodes_(std::move(nodes)), arity_(arity) {
    if (nodes_.empty()) throw ValidationError("DecisionTree: no nodes");
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      const auto& n = nodes_[i];
      if (n.label > 1) throw ValidationError("DecisionTree: leaf label must be 0 or 1");
      if (n.is_leaf()) continue;
      if (static_cast<std::size_t>(n.feature) >= arity_ || n.left <= i || n.right <= i ||
          n.left >= nodes_.size() || n.right >= nodes_.size()) {
        throw ValidationError("DecisionTree: malformed node " + std::to_string(i));
      }
    }
  }

  int predict(std::span<const double> x) const {
    if (x.size() != arity_) {
      throw ValidationError("DecisionTree: expected " + std::to_string(arity_) + " features, got " +
                            std::to_string(x.size()));
    }
    std::size_t i = 0;
    while (!nodes_[i].is_leaf()) {
      const auto& n = nodes_[i];
      i = x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
    }
    return nodes_[i].label;
  }

  std::size_t depth() const { return nodes_.empty() ? 0 : depth_from(0); }
  std::size_t arity() const noexcept { return arity_; }
  const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }

  bool operator==(const DecisionTree&) const = default;

 private:
  std::size_t depth_from(std::size_t i) const {
    const auto& n = nodes_[i];
    if (n.is_leaf()) return 0;
    return 1 + std::max(depth_from(n.left), depth_from(n.right));
  }

  std::vector<TreeNode> nodes_;
  std::size_t arity_ = 0;
};

namespace detail {

inline double binary_entropy(double w0, double w1) {
  const double total = w0 + w1;
  if (total <= 0.0) return 0.0;
  double h = 0.0;
  for (double w : {w0, w1}) {
    const double p = w / total;
    if (p > 0.0) h -= p * std::log2(p);
  }
  return h;
}

inline constexpr double kMinSplitInfo = 1e-12;
inline constexpr double kMinGain = 1e-12;

class TreeGrower {
 public:
  TreeGrower(const LabeledDataset& d, std::span<const double> weights, std::size_t max_depth,
             std::size_t min_leaf)
      : data_(d), weights_(weights), max_depth_(max_depth), min_leaf_(std::max<std::size_t>(1, min_leaf)) {}

  DecisionTree grow() {
    std::vector<std::size_t> all(data_.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    build(all, 0);
    return DecisionTree(std::move(nodes_), data_.arity());
  }

 private:
  struct Split {
    std::size_t feature = 0;
    double threshold = 0.0;
    double gain_ratio = -1.0;
  };

  std::uint32_t build(std::vector<std::size_t>& rows, std::size_t depth) {
    double w0 = 0.0;
    double w1 = 0.0;
    for (std::size_t r : rows) (data_.label(r) ? w1 : w0) += weights_[r];
    const auto id = static_cast<std::uint32_t>(nodes_.size());
    TreeNode node;
    node.label = w1 > w0 ? 1 : 0;
    node.confidence = std::max(w0, w1) / (w0 + w1);
    nodes_.push_back(node);
    if (depth >= max_depth_ || w0 == 0.0 || w1 == 0.0) return id;

    const auto split = best_split(rows, w0, w1);
    if (split.gain_ratio < 0.0) return id;

    std::vector<std::size_t> left;
    std::vector<std::size_t> right;
    for (std::size_t r : rows) (data_.value(r, split.feature) <= split.threshold ? left : right).push_back(r);
    rows.clear();
    rows.shrink_to_fit();
    const auto l = build(left, depth + 1);
    const auto rgt = build(right, depth + 1);
    auto& n = nodes_[id];
    n.feature = static_cast<std::int32_t>(split.feature);
    n.threshold = split.threshold;
    n.left = l;
    n.right = rgt;
    return id;
  }

  // Highest gain ratio over midpoints of consecutive distinct values. Scans
  // features and thresholds in ascending order and only replaces the
  // incumbent on a strictly better ratio.
  Split best_split(const std::vector<std::size_t>& rows, double w0, double w1) const {
    const double total = w0 + w1;
    const double parent = binary_entropy(w0, w1);
    Split best;
    std::vector<std::size_t> order(rows);
    for (std::size_t f = 0; f < data_.arity(); ++f) {
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double va = data_.value(a, f);
        const double vb = data_.value(b, f);
        return va < vb || (va == vb && a < b);
      });
      double l0 = 0.0;
      double l1 = 0.0;
      for (std::size_t p = 0; p + 1 < order.size(); ++p) {
        const std::size_t r = order[p];
        (data_.label(r) ? l1 : l0) += weights_[r];
        const double lo = data_.value(r, f);
        const double hi = data_.value(order[p + 1], f);
        if (lo == hi || p + 1 < min_leaf_ || order.size() - (p + 1) < min_leaf_) continue;
        const double r0 = std::max(0.0, w0 - l0);
        const double r1 = std::max(0.0, w1 - l1);
        const double wl = l0 + l1;
        const double wr = r0 + r1;
        const double split_info = binary_entropy(wl, wr);
        if (split_info < kMinSplitInfo) continue;
        const double gain = parent - (wl / total) * binary_entropy(l0, l1) - (wr / total) * binary_entropy(r0, r1);
        if (gain <= kMinGain) continue;
        const double ratio = gain / split_info;
        if (ratio > best.gain_ratio) {
          double mid = lo + (hi - lo) / 2.0;
          if (!(mid < hi)) mid = lo;
          best = {f, mid, ratio};
        }
      }
    }
    return best;
  }

  const LabeledDataset& data_;
  std::span<const double> weights_;
  std::size_t max_depth_;
  std::size_t min_leaf_;
  std::vector<TreeNode> nodes_;
};

inline void check_trainable(const LabeledDataset& d) {
  if (d.empty()) throw TrainingError("cannot train on an empty dataset");
  for (std::size_t i = 0; i < d.size(); ++i) {
    for (double v : d.row(i)) {
      if (std::isnan(v)) throw TrainingError("NaN feature value in row " + std::to_string(i));
    }
  }
}

}  // namespace detail

// Greedy gain-ratio tree on continuous features using the dataset's weights.
// A split is only considered when both sides keep at least `min_leaf`
// instances. Leaf label is the weighted majority, ties going to 0.
inline DecisionTree train_tree(const LabeledDataset& d, std::size_t max_depth, std::size_t min_leaf = 1) {
  detail::check_trainable(d);
  return detail::TreeGrower(d, d.weights(), max_depth, min_leaf).grow();
}

inline nlohmann::json tree_to_json(const DecisionTree& t) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : t.nodes()) {
    nodes.push_back({{"feature", n.feature},
                     {"threshold", n.threshold},
                     {"left", n.left},
                     {"right", n.right},
                     {"label", n.label},
                     {"confidence", n.confidence}});
  }
  return {{"arity", t.arity()}, {"nodes", std::move(nodes)}};
}

inline DecisionTree tree_from_json(const nlohmann::json& j) {
  std::vector<TreeNode> nodes;
  for (const auto& n : j.at("nodes")) {
    TreeNode node;
    node.feature = n.at("feature").get<std::int32_t>();
    node.threshold = n.at("threshold").get<double>();
    node.left = n.at("left").get<std::uint32_t>();
    node.right = n.at("right").get<std::uint32_t>();
    node.label = n.at("label").get<std::uint8_t>();
    node.confidence = n.at("confidence").get<double>();
    nodes.push_back(node);
  }
  return DecisionTree(std::move(nodes), j.at("arity").get<std::size_t>());
}

}  // namespace coupnet
