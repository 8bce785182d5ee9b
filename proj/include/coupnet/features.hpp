#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "coupnet/error.hpp"
#include "coupnet/graph.hpp"
#include "coupnet/rng.hpp"
#include "coupnet/text.hpp"

namespace coupnet {

enum class Layer { social, behavioral };

// Column order of a FeatureVector: five social-layer components followed by
// the same five on the behavioral layer.
enum Component : std::size_t {
  kSocialActivity,
  kSocialAvgNeighborActivity,
  kSocialClustering,
  kSocialAssortativity,
  kSocialDiscrimination,
  kBehavioralActivity,
  kBehavioralAvgNeighborActivity,
  kBehavioralClustering,
  kBehavioralAssortativity,
  kBehavioralDiscrimination,
  kComponentCount
};

inline constexpr std::size_t kLayerWidth = 5;

inline constexpr std::array<std::string_view, kComponentCount> kComponentNames = {
    "sA", "sAN", "sC", "sAC", "sD", "bA", "bAN", "bC", "bAC", "bD"};

struct FeatureVector {
  std::array<double, kComponentCount> values{};

  double& operator[](std::size_t c) { return values[c]; }
  double operator[](std::size_t c) const { return values[c]; }

  std::span<const double, kLayerWidth> social() const {
    return std::span<const double, kLayerWidth>(values.data(), kLayerWidth);
  }
  std::span<const double, kLayerWidth> behavioral() const {
    return std::span<const double, kLayerWidth>(values.data() + kLayerWidth, kLayerWidth);
  }

  bool operator==(const FeatureVector&) const = default;
};

struct NormalizationParams {
  std::array<double, kComponentCount> min{};
  std::array<double, kComponentCount> max{};
  bool operator==(const NormalizationParams&) const = default;
};

struct FeatureMatrix {
  std::vector<FeatureVector> rows;
  std::optional<NormalizationParams> normalization;

  std::size_t size() const noexcept { return rows.size(); }
  bool operator==(const FeatureMatrix&) const = default;
};

// Users with more rated items than this get a sampled behavioral clustering
// estimate over kClusteringPairCap ordered item pairs.
inline constexpr std::size_t kClusteringItemCap = 200;
inline constexpr std::size_t kClusteringPairCap = kClusteringItemCap * (kClusteringItemCap - 1);

namespace detail {

inline std::size_t sorted_intersection_size(std::span<const UserIndex> a, std::span<const UserIndex> b) {
  std::size_t count = 0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia < *ib) {
      ++ia;
    } else if (*ib < *ia) {
      ++ib;
    } else {
      ++count;
      ++ia;
      ++ib;
    }
  }
  return count;
}

inline double jaccard(std::size_t inter, std::size_t size_a, std::size_t size_b) {
  const std::size_t uni = size_a + size_b - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

// Neighbor activities of `user` in `layer`: friend degrees, or item popularities.
inline std::vector<double> neighbor_activities(const CoupledNetwork& net, UserIndex user, Layer layer) {
  std::vector<double> out;
  if (layer == Layer::social) {
    const auto& g = net.social();
    for (UserIndex v : g.neighbors(user)) out.push_back(static_cast<double>(g.degree(v)));
  } else {
    const auto& b = net.behavioral();
    for (const auto& r : b.user_items(user)) out.push_back(static_cast<double>(b.item_popularity(r.item)));
  }
  return out;
}

// Mean Jaccard similarity over ordered pairs of distinct items, exact up to
// the cap and sampled above it. `intersect(j, k)` returns |U_j ∩ U_k|.
template <typename Intersect>
double behavioral_clustering(const BehavioralGraph& b, UserIndex user, std::uint64_t seed,
                             Intersect&& intersect) {
  const auto items = b.user_items(user);
  const std::size_t a = items.size();
  if (a <= 1) return 0.0;
  auto sim = [&](std::size_t x, std::size_t y) {
    const ItemIndex j = items[x].item;
    const ItemIndex k = items[y].item;
    return jaccard(intersect(j, k), b.item_popularity(j), b.item_popularity(k));
  };
  if (a <= kClusteringItemCap) {
    double half = 0.0;
    for (std::size_t x = 0; x < a; ++x) {
      for (std::size_t y = x + 1; y < a; ++y) half += sim(x, y);
    }
    return 2.0 * half / (static_cast<double>(a) * static_cast<double>(a - 1));
  }
  Rng rng(derive_seed(seed, user));
  const std::uint64_t total = static_cast<std::uint64_t>(a) * (a - 1);
  double sum = 0.0;
  for (std::uint64_t p : rng.sample_without_replacement(total, kClusteringPairCap)) {
    const std::size_t x = p / (a - 1);
    const std::size_t r = p % (a - 1);
    sum += sim(x, r < x ? r : r + 1);
  }
  return sum / static_cast<double>(kClusteringPairCap);
}

}  // namespace detail

// Item audiences for fast intersection counting. Items whose audience covers
// at least 1/32 of all users are also held as bitsets, which is never larger
// than the sorted list it shadows.
class AudienceIndex {
 public:
  explicit AudienceIndex(const BehavioralGraph& b) : graph_(&b), slot_(b.item_count(), kNoIndex) {
    const std::size_t n = b.user_count();
    words_ = (n + 63) / 64;
    for (ItemIndex j = 0; j < b.item_count(); ++j) {
      if (b.item_popularity(j) * 32 < n || words_ == 0) continue;
      slot_[j] = static_cast<std::uint32_t>(bits_.size() / words_);
      bits_.resize(bits_.size() + words_, 0);
      std::uint64_t* row = bits_.data() + static_cast<std::size_t>(slot_[j]) * words_;
      for (UserIndex u : b.item_users(j)) row[u / 64] |= std::uint64_t{1} << (u % 64);
    }
  }

  std::size_t intersection_size(ItemIndex j, ItemIndex k) const {
    const bool dj = slot_[j] != kNoIndex;
    const bool dk = slot_[k] != kNoIndex;
    if (dj && dk) {
      const std::uint64_t* a = row(j);
      const std::uint64_t* c = row(k);
      std::size_t count = 0;
      for (std::size_t w = 0; w < words_; ++w) count += std::popcount(a[w] & c[w]);
      return count;
    }
    if (dj || dk) {
      const std::uint64_t* dense = dj ? row(j) : row(k);
      std::size_t count = 0;
      for (UserIndex u : graph_->item_users(dj ? k : j)) count += (dense[u / 64] >> (u % 64)) & 1u;
      return count;
    }
    return detail::sorted_intersection_size(graph_->item_users(j), graph_->item_users(k));
  }

 private:
  const std::uint64_t* row(ItemIndex j) const {
    return bits_.data() + static_cast<std::size_t>(slot_[j]) * words_;
  }

  const BehavioralGraph* graph_;
  std::vector<std::uint32_t> slot_;
  std::vector<std::uint64_t> bits_;
  std::size_t words_ = 0;
};

inline double activity(const CoupledNetwork& net, UserIndex user, Layer layer) {
  return layer == Layer::social ? static_cast<double>(net.social().degree(user))
                                : static_cast<double>(net.behavioral().user_degree(user));
}

inline double avg_neighbor_activity(const CoupledNetwork& net, UserIndex user, Layer layer) {
  const double a = activity(net, user, layer);
  if (a == 0.0) return 0.0;
  double sum = 0.0;
  for (double x : detail::neighbor_activities(net, user, layer)) sum += x;
  return sum / a;
}

// `seed` only matters for behavioral users above kClusteringItemCap.
inline double clustering(const CoupledNetwork& net, UserIndex user, Layer layer, std::uint64_t seed = 0) {
  if (layer == Layer::social) {
    const auto& g = net.social();
    const auto nb = g.neighbors(user);
    const std::size_t a = nb.size();
    if (a <= 1) return 0.0;
    std::size_t closed = 0;  // ordered neighbor pairs that are linked
    for (UserIndex j : nb) closed += detail::sorted_intersection_size(nb, g.neighbors(j));
    return static_cast<double>(closed) / (static_cast<double>(a) * static_cast<double>(a - 1));
  }
  const auto& b = net.behavioral();
  return detail::behavioral_clustering(b, user, seed, [&](ItemIndex j, ItemIndex k) {
    return detail::sorted_intersection_size(b.item_users(j), b.item_users(k));
  });
}

inline double assortativity(const CoupledNetwork& net, UserIndex user, Layer layer) {
  const auto neighbors = detail::neighbor_activities(net, user, layer);
  if (neighbors.size() <= 1) return 0.0;
  const double ai = activity(net, user, layer);
  const double count = static_cast<double>(neighbors.size());
  double product = 0.0;
  double mean = 0.0;
  double square = 0.0;
  for (double aj : neighbors) {
    product += ai * aj;
    mean += 0.5 * (ai + aj);
    square += 0.5 * (ai * ai + aj * aj);
  }
  product /= count;
  mean /= count;
  square /= count;
  const double denom = square - mean * mean;
  if (denom <= 1e-12) return 0.0;
  return std::clamp((product - mean * mean) / denom, -1.0, 1.0);
}

// Gini-Simpson diversity of the neighbor activity multiset.
inline double discrimination(const CoupledNetwork& net, UserIndex user, Layer layer) {
  auto neighbors = detail::neighbor_activities(net, user, layer);
  if (neighbors.empty()) return 0.0;
  std::sort(neighbors.begin(), neighbors.end());
  const double n = static_cast<double>(neighbors.size());
  double concentration = 0.0;
  for (std::size_t i = 0; i < neighbors.size();) {
    std::size_t j = i;
    while (j < neighbors.size() && neighbors[j] == neighbors[i]) ++j;
    const double p = static_cast<double>(j - i) / n;
    concentration += p * p;
    i = j;
  }
  return 1.0 - concentration;
}

namespace detail {

inline void fill_layer(const CoupledNetwork& net, UserIndex u, Layer layer, double clustering_value,
                       FeatureVector& row) {
  const std::size_t base = layer == Layer::social ? 0 : kLayerWidth;
  row[base + 0] = activity(net, u, layer);
  row[base + 1] = avg_neighbor_activity(net, u, layer);
  row[base + 2] = clustering_value;
  row[base + 3] = assortativity(net, u, layer);
  row[base + 4] = discrimination(net, u, layer);
}

}  // namespace detail

// Runs fn(begin, end) over [0, n) in fixed-size chunks on up to `workers`
// threads. Callers must only write to disjoint per-index slots.
template <typename Fn>
void parallel_chunks(std::size_t n, unsigned workers, Fn&& fn, std::size_t chunk = 64) {
  workers = std::max(1u, workers);
  if (workers == 1 || n <= chunk) {
    fn(std::size_t{0}, n);
    return;
  }
  std::atomic<std::size_t> next{0};
  auto run = [&] {
    for (std::size_t begin; (begin = next.fetch_add(chunk)) < n;) fn(begin, std::min(n, begin + chunk));
  };
  std::vector<std::jthread> pool;
  for (unsigned w = 1; w < workers; ++w) pool.emplace_back(run);
  run();
}

inline FeatureMatrix compute_matrix(const CoupledNetwork& net, std::uint64_t seed = 0, unsigned workers = 1) {
  FeatureMatrix m;
  m.rows.resize(net.user_count());
  const AudienceIndex audience(net.behavioral());
  parallel_chunks(net.user_count(), workers, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto u = static_cast<UserIndex>(i);
      auto& row = m.rows[i];
      detail::fill_layer(net, u, Layer::social, clustering(net, u, Layer::social), row);
      const double bc = detail::behavioral_clustering(
          net.behavioral(), u, seed,
          [&](ItemIndex j, ItemIndex k) { return audience.intersection_size(j, k); });
      detail::fill_layer(net, u, Layer::behavioral, bc, row);
    }
  });
  return m;
}

inline NormalizationParams fit_normalization(const FeatureMatrix& m, std::span<const std::size_t> fit_rows) {
  if (fit_rows.empty()) throw ValidationError("fit_normalization: no rows to fit on");
  NormalizationParams p;
  p.min.fill(std::numeric_limits<double>::infinity());
  p.max.fill(-std::numeric_limits<double>::infinity());
  for (std::size_t r : fit_rows) {
    const auto& row = m.rows.at(r);
    for (std::size_t c = 0; c < kComponentCount; ++c) {
      p.min[c] = std::min(p.min[c], row[c]);
      p.max[c] = std::max(p.max[c], row[c]);
    }
  }
  return p;
}

inline double normalize_value(double v, double lo, double hi) {
  if (!(hi > lo)) return 0.0;
  return std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
}

inline FeatureMatrix apply_normalization(const FeatureMatrix& m, const NormalizationParams& p) {
  FeatureMatrix out;
  out.rows.reserve(m.rows.size());
  for (const auto& row : m.rows) {
    FeatureVector scaled;
    for (std::size_t c = 0; c < kComponentCount; ++c) scaled[c] = normalize_value(row[c], p.min[c], p.max[c]);
    out.rows.push_back(scaled);
  }
  out.normalization = p;
  return out;
}

inline void write_feature_csv(std::ostream& out, const FeatureMatrix& m) {
  out << "user_index";
  for (auto name : kComponentNames) out << ',' << name;
  out << '\n';
  for (std::size_t i = 0; i < m.rows.size(); ++i) {
    out << i;
    for (double v : m.rows[i].values) out << ',' << text::format_double(v);
    out << '\n';
  }
}

inline FeatureMatrix read_feature_csv(std::istream& in, const std::string& source) {
  FeatureMatrix m;
  std::string line;
  std::size_t lineno = 0;
  std::string expected_header = "user_index";
  for (auto name : kComponentNames) (expected_header += ',') += name;
  while (std::getline(in, line)) {
    ++lineno;
    const auto view = text::chomp(line);
    if (lineno == 1) {
      if (view != expected_header) throw ParseError(source, lineno, "unexpected feature header");
      continue;
    }
    if (view.empty()) continue;
    const auto f = text::split(view, ',');
    if (f.size() != kComponentCount + 1) throw ParseError(source, lineno, "expected 11 fields");
    const auto idx = text::parse_int<std::size_t>(f[0]);
    if (!idx || *idx != m.rows.size()) throw ParseError(source, lineno, "rows must be sorted by user_index from 0");
    FeatureVector row;
    for (std::size_t c = 0; c < kComponentCount; ++c) {
      const auto v = text::parse_double(f[c + 1]);
      if (!v) throw ParseError(source, lineno, "unparsable value '" + std::string(f[c + 1]) + "'");
      row[c] = *v;
    }
    m.rows.push_back(row);
  }
  if (lineno == 0) throw ParseError(source, 0, "empty feature file");
  return m;
}

}  // namespace coupnet
