#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "coupnet/blend.hpp"
#include "coupnet/error.hpp"
#include "coupnet/features.hpp"
#include "coupnet/graph.hpp"
#include "coupnet/rng.hpp"
#include "coupnet/text.hpp"

namespace coupnet {

namespace detail {
// ceil(fraction * n), tolerant of products like 0.7 * 10 landing just above 7.
inline std::size_t ceil_fraction(double fraction, std::size_t n) {
  return static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Labeling

struct LabelingConfig {
  std::size_t target_count = 10;
  double popularity_pool_fraction = 0.01;
  double rating_threshold = 3.0;
  std::uint64_t seed = 0;
};

// Items ranked by watcher count (descending, ties to the lower index).
inline std::vector<ItemIndex> popularity_pool(const BehavioralGraph& b, double pool_fraction) {
  if (!(pool_fraction > 0.0 && pool_fraction <= 1.0)) {
    throw ValidationError("popularity pool fraction must lie in (0, 1]");
  }
  std::vector<ItemIndex> items(b.item_count());
  std::iota(items.begin(), items.end(), ItemIndex{0});
  std::stable_sort(items.begin(), items.end(),
                   [&](ItemIndex x, ItemIndex y) { return b.item_popularity(x) > b.item_popularity(y); });
  const std::size_t pool = b.item_count() == 0 ? 0 : std::max<std::size_t>(1, detail::ceil_fraction(pool_fraction, b.item_count()));
  items.resize(pool);
  return items;
}

// k items drawn uniformly without replacement from the popularity pool,
// returned in ascending index order.
inline std::vector<ItemIndex> select_target_movies(const BehavioralGraph& b, const LabelingConfig& c) {
  if (c.target_count == 0) throw ValidationError("target_count must be at least 1");
  const auto pool = popularity_pool(b, c.popularity_pool_fraction);
  if (c.target_count > pool.size()) {
    throw ValidationError("target_count " + std::to_string(c.target_count) + " exceeds popularity pool of " +
                          std::to_string(pool.size()) + " items");
  }
  Rng rng(c.seed);
  std::vector<ItemIndex> out;
  for (auto p : rng.sample_without_replacement(pool.size(), c.target_count)) out.push_back(pool[p]);
  std::sort(out.begin(), out.end());
  return out;
}

// 1 iff the user rated some target above the threshold and so did at least
// one of their friends.
inline std::vector<int> label_users(const CoupledNetwork& net, std::span<const ItemIndex> targets,
                                    double rating_threshold) {
  if (targets.empty()) throw ValidationError("label_users: no target items");
  const auto& b = net.behavioral();
  std::vector<char> is_target(b.item_count(), 0);
  for (ItemIndex j : targets) is_target.at(j) = 1;
  std::vector<char> qualifies(net.user_count(), 0);
  for (UserIndex u = 0; u < net.user_count(); ++u) {
    for (const auto& r : b.user_items(u)) {
      if (is_target[r.item] && r.rating > rating_threshold) {
        qualifies[u] = 1;
        break;
      }
    }
  }
  std::vector<int> labels(net.user_count(), 0);
  for (UserIndex u = 0; u < net.user_count(); ++u) {
    if (!qualifies[u]) continue;
    const auto nb = net.social().neighbors(u);
    labels[u] = std::any_of(nb.begin(), nb.end(), [&](UserIndex v) { return qualifies[v] != 0; }) ? 1 : 0;
  }
  return labels;
}

// ---------------------------------------------------------------------------
// Splitting and precision

struct SplitConfig {
  double train_ratio = 0.8;
  std::uint64_t seed = 0;
  bool stratified = true;
};

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  bool operator==(const Split&) const = default;
};

// Shuffle split taking ceil(r * n_c) rows of each class c (or ceil(r * n)
// overall when not stratified) for training. Both halves come back sorted.
inline Split split_rows(std::size_t n, const SplitConfig& c, std::span<const int> labels) {
  if (n < 2) throw ValidationError("split needs at least 2 rows");
  if (!(c.train_ratio > 0.0 && c.train_ratio < 1.0)) throw ValidationError("train ratio must lie in (0, 1)");
  if (labels.size() != n) throw ValidationError("split: label count does not match row count");
  Rng rng(c.seed);
  Split s;
  auto take = [&](std::vector<std::size_t> rows) {
    rng.shuffle(rows);
    const std::size_t k = detail::ceil_fraction(c.train_ratio, rows.size());
    s.train.insert(s.train.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(k));
    s.test.insert(s.test.end(), rows.begin() + static_cast<std::ptrdiff_t>(k), rows.end());
  };
  if (c.stratified) {
    std::vector<std::size_t> by_class[2];
    for (std::size_t i = 0; i < n; ++i) by_class[labels[i] ? 1 : 0].push_back(i);
    for (int cls : {0, 1}) {
      if (by_class[cls].empty()) {
        throw ValidationError("stratified split: class " + std::to_string(cls) +
                              " has no rows; disable stratification to split anyway");
      }
    }
    take(std::move(by_class[0]));
    take(std::move(by_class[1]));
  } else {
    std::vector<std::size_t> rows(n);
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    take(std::move(rows));
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

struct PrecisionResult {
  double precision = 0.0;
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
  bool undefined = false;  // no positive predictions; precision reported as 0

  std::size_t positive_predictions() const noexcept { return true_positives + false_positives; }
  bool operator==(const PrecisionResult&) const = default;
};

inline PrecisionResult precision(std::span<const int> predicted, std::span<const int> actual) {
  if (predicted.size() != actual.size()) {
    throw ValidationError("precision: " + std::to_string(predicted.size()) + " predictions for " +
                          std::to_string(actual.size()) + " labels");
  }
  PrecisionResult p;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (predicted[i] != 1) continue;
    (actual[i] == 1 ? p.true_positives : p.false_positives) += 1;
  }
  if (p.positive_predictions() == 0) {
    p.undefined = true;
  } else {
    p.precision = static_cast<double>(p.true_positives) / static_cast<double>(p.positive_predictions());
  }
  return p;
}

// ---------------------------------------------------------------------------
// Sweep

struct SweepRow {
  double alpha = 0.0;
  double r = 0.0;
  double precision = 0.0;
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
  std::size_t positive_predictions = 0;
  std::size_t test_size = 0;
  bool undefined = false;
  bool operator==(const SweepRow&) const = default;
};

struct SweepResult {
  std::vector<SweepRow> rows;  // sorted by (r, alpha)
  bool operator==(const SweepResult&) const = default;
};

inline std::vector<double> default_alpha_grid() {
  std::vector<double> grid;
  for (int i = 0; i <= 10; ++i) grid.push_back(i / 10.0);
  return grid;
}

struct SweepConfig {
  LabelingConfig labeling;
  std::vector<double> train_ratios{0.8};
  std::vector<double> alphas = default_alpha_grid();
  BoostingParams boosting;
  bool stratified = true;
  std::uint64_t seed = 0;
  unsigned workers = 1;
};

// Everything needed to recompute any sweep row after the fact.
struct RatioArtifacts {
  double r = 0.0;
  Split split;
  NormalizationParams normalization;
  HybridModels models;
};

struct SweepOutcome {
  SweepResult result;
  std::vector<ItemIndex> targets;
  std::vector<int> labels;
  std::vector<RatioArtifacts> per_ratio;
};

inline PrecisionResult evaluate_hybrid(const HybridClassifier& h, const FeatureMatrix& normalized,
                                       std::span<const int> labels, std::span<const std::size_t> rows) {
  std::vector<int> predicted;
  std::vector<int> actual;
  predicted.reserve(rows.size());
  actual.reserve(rows.size());
  for (std::size_t r : rows) {
    predicted.push_back(h.label(normalized.rows.at(r)));
    actual.push_back(labels[r]);
  }
  return precision(predicted, actual);
}

inline std::vector<double> sorted_unique(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

// One split and one normalization fit per train ratio, shared by every alpha.
// The sub-models do not depend on alpha, so they are trained once per ratio;
// each cell's HybridClassifier is identical to train_hybrid at that alpha.
inline SweepOutcome run_sweep(const CoupledNetwork& net, const FeatureMatrix& raw_features, const SweepConfig& c) {
  if (c.train_ratios.empty() || c.alphas.empty()) throw ValidationError("sweep grids must be nonempty");
  if (raw_features.size() != net.user_count()) throw ValidationError("feature rows do not match network users");
  const auto ratios = sorted_unique(c.train_ratios);
  const auto alphas = sorted_unique(c.alphas);
  for (double a : alphas) {
    if (!(a >= 0.0 && a <= 1.0)) throw ValidationError("alpha grid values must lie in [0, 1]");
  }

  SweepOutcome out;
  out.targets = select_target_movies(net.behavioral(), c.labeling);
  out.labels = label_users(net, out.targets, c.labeling.rating_threshold);

  for (std::size_t ri = 0; ri < ratios.size(); ++ri) {
    RatioArtifacts art;
    art.r = ratios[ri];
    art.split = split_rows(net.user_count(), {ratios[ri], derive_seed(c.seed, ri), c.stratified}, out.labels);
    art.normalization = fit_normalization(raw_features, art.split.train);
    const auto normalized = apply_normalization(raw_features, art.normalization);
    art.models = train_layer_models(normalized, out.labels, art.split.train, c.boosting, c.workers);
    for (double alpha : alphas) {
      const HybridClassifier h(art.models.social, art.models.behavioral, alpha);
      const auto p = evaluate_hybrid(h, normalized, out.labels, art.split.test);
      out.result.rows.push_back({alpha, art.r, p.precision, p.true_positives, p.false_positives,
                                 p.positive_predictions(), art.split.test.size(), p.undefined});
    }
    out.per_ratio.push_back(std::move(art));
  }
  return out;
}

inline SweepOutcome run_sweep(const CoupledNetwork& net, const SweepConfig& c) {
  return run_sweep(net, compute_matrix(net, c.seed, c.workers), c);
}

inline constexpr std::string_view kSweepHeader = "alpha,r,precision,tp,fp,pos_pred,test_size,undefined";

inline void write_sweep_csv(std::ostream& out, const SweepResult& s) {
  out << kSweepHeader << '\n';
  for (const auto& row : s.rows) {
    out << text::format_double(row.alpha) << ',' << text::format_double(row.r) << ','
        << text::format_double(row.precision) << ',' << row.true_positives << ',' << row.false_positives << ','
        << row.positive_predictions << ',' << row.test_size << ',' << (row.undefined ? 1 : 0) << '\n';
  }
}

inline SweepResult read_sweep_csv(std::istream& in, const std::string& source) {
  SweepResult s;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto view = text::chomp(line);
    if (lineno == 1) {
      if (view != kSweepHeader) throw ParseError(source, lineno, "unexpected sweep header");
      continue;
    }
    if (view.empty()) continue;
    const auto f = text::split(view, ',');
    if (f.size() != 8) throw ParseError(source, lineno, "expected 8 fields");
    SweepRow row;
    auto num = [&](std::string_view v) {
      const auto d = text::parse_double(v);
      if (!d) throw ParseError(source, lineno, "unparsable number '" + std::string(v) + "'");
      return *d;
    };
    auto count = [&](std::string_view v) {
      const auto d = text::parse_int<std::size_t>(v);
      if (!d) throw ParseError(source, lineno, "unparsable count '" + std::string(v) + "'");
      return *d;
    };
    row.alpha = num(f[0]);
    row.r = num(f[1]);
    row.precision = num(f[2]);
    row.true_positives = count(f[3]);
    row.false_positives = count(f[4]);
    row.positive_predictions = count(f[5]);
    row.test_size = count(f[6]);
    row.undefined = count(f[7]) != 0;
    s.rows.push_back(row);
  }
  return s;
}

inline void write_labels_csv(std::ostream& out, std::span<const int> labels) {
  out << "user_index,label\n";
  for (std::size_t i = 0; i < labels.size(); ++i) out << i << ',' << labels[i] << '\n';
}

inline std::vector<int> read_labels_csv(std::istream& in, const std::string& source) {
  std::vector<int> labels;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto view = text::chomp(line);
    if (lineno == 1) {
      if (view != "user_index,label") throw ParseError(source, lineno, "unexpected labels header");
      continue;
    }
    if (view.empty()) continue;
    const auto f = text::split(view, ',');
    const auto idx = f.size() == 2 ? text::parse_int<std::size_t>(f[0]) : std::nullopt;
    const auto lab = f.size() == 2 ? text::parse_int<int>(f[1]) : std::nullopt;
    if (!idx || !lab || *idx != labels.size() || (*lab != 0 && *lab != 1)) {
      throw ParseError(source, lineno, "expected user_index,label with consecutive indices");
    }
    labels.push_back(*lab);
  }
  return labels;
}

inline void write_split_csv(std::ostream& out, const Split& s) {
  std::vector<std::pair<std::size_t, bool>> rows;
  for (auto r : s.train) rows.emplace_back(r, true);
  for (auto r : s.test) rows.emplace_back(r, false);
  std::sort(rows.begin(), rows.end());
  out << "user_index,partition\n";
  for (const auto& [r, train] : rows) out << r << ',' << (train ? "train" : "test") << '\n';
}

inline Split read_split_csv(std::istream& in, const std::string& source) {
  Split s;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto view = text::chomp(line);
    if (lineno == 1) {
      if (view != "user_index,partition") throw ParseError(source, lineno, "unexpected split header");
      continue;
    }
    if (view.empty()) continue;
    const auto f = text::split(view, ',');
    const auto idx = f.size() == 2 ? text::parse_int<std::size_t>(f[0]) : std::nullopt;
    if (!idx || (f[1] != "train" && f[1] != "test")) throw ParseError(source, lineno, "expected user_index,partition");
    (f[1] == "train" ? s.train : s.test).push_back(*idx);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Synthetic coupled networks

struct SyntheticConfig {
  std::size_t user_count = 5000;
  std::size_t item_count = 1000;
  std::size_t mean_social_degree = 10;
  std::size_t mean_items_per_user = 20;
  double homophily = 0.5;
  Layer signal_layer = Layer::behavioral;
  double popular_pool_fraction = 0.01;
  std::uint64_t seed = 1;
};

// Fraction of "fans" (users who rate every popular-pool item above 3) among
// the top activity quartile of the signal layer and among everyone else.
inline constexpr double kBoostedFanProbability = 0.9;
inline constexpr double kBaselineFanProbability = 0.3;

namespace detail {

inline std::vector<std::vector<UserIndex>> preferential_attachment(std::size_t n, std::size_t edges_per_user,
                                                                   Rng& rng) {
  std::vector<std::vector<UserIndex>> adj(n);
  std::vector<UserIndex> endpoints;  // each node repeated once per incident edge
  std::vector<UserIndex> picks;
  for (UserIndex t = 1; t < n; ++t) {
    const std::size_t k = std::min<std::size_t>(edges_per_user, t);
    picks.clear();
    while (picks.size() < k) {
      const UserIndex v = endpoints.empty() ? static_cast<UserIndex>(rng.below(t))
                                            : endpoints[rng.below(endpoints.size())];
      if (std::find(picks.begin(), picks.end(), v) == picks.end()) picks.push_back(v);
    }
    for (UserIndex v : picks) {
      adj[t].push_back(v);
      adj[v].push_back(t);
      endpoints.push_back(t);
      endpoints.push_back(v);
    }
  }
  return adj;
}

// Users ranked by activity (descending, ties to the lower index); the first
// ceil(n / 4) are flagged.
inline std::vector<char> top_quartile(std::span<const std::size_t> activity) {
  std::vector<std::size_t> order(activity.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return activity[a] > activity[b]; });
  std::vector<char> flag(activity.size(), 0);
  const std::size_t top = (activity.size() + 3) / 4;
  for (std::size_t i = 0; i < top; ++i) flag[order[i]] = 1;
  return flag;
}

}  // namespace detail

inline CoupledNetwork synthesize(const SyntheticConfig& c) {
  if (c.user_count == 0 || c.item_count == 0 || c.mean_social_degree == 0 || c.mean_items_per_user == 0) {
    throw ValidationError("synthetic counts must all be at least 1");
  }
  if (!(c.homophily >= 0.0 && c.homophily <= 1.0)) throw ValidationError("homophily must lie in [0, 1]");
  if (!(c.popular_pool_fraction > 0.0 && c.popular_pool_fraction <= 1.0)) {
    throw ValidationError("popular_pool_fraction must lie in (0, 1]");
  }
  const std::size_t n = c.user_count;
  Rng social_rng(derive_seed(c.seed, 1));
  Rng behavior_rng(derive_seed(c.seed, 2));
  Rng rating_rng(derive_seed(c.seed, 3));

  const auto adj = detail::preferential_attachment(n, std::max<std::size_t>(1, c.mean_social_degree / 2), social_rng);

  // Item urn: every item once plus once per watch, so draws are proportional
  // to popularity + 1 (uniform at cold start).
  std::vector<ItemIndex> urn(c.item_count);
  std::iota(urn.begin(), urn.end(), ItemIndex{0});
  std::vector<std::vector<ItemIndex>> rated(n);
  std::vector<ItemIndex> chosen;
  std::vector<UserIndex> donors;
  for (UserIndex u = 0; u < n; ++u) {
    const std::size_t want =
        std::min(c.item_count, 1 + behavior_rng.poisson(static_cast<double>(c.mean_items_per_user - 1)));
    donors.clear();
    for (UserIndex v : adj[u]) {
      if (!rated[v].empty()) donors.push_back(v);
    }
    chosen.clear();
    for (std::size_t attempt = 0; chosen.size() < want && attempt < 20 * want; ++attempt) {
      ItemIndex j;
      if (!donors.empty() && behavior_rng.bernoulli(c.homophily)) {
        const auto& pool = rated[donors[behavior_rng.below(donors.size())]];
        j = pool[behavior_rng.below(pool.size())];
      } else {
        j = urn[behavior_rng.below(urn.size())];
      }
      if (std::find(chosen.begin(), chosen.end(), j) != chosen.end()) continue;
      chosen.push_back(j);
    }
    rated[u] = chosen;
    urn.insert(urn.end(), chosen.begin(), chosen.end());
  }

  std::vector<std::size_t> popularity(c.item_count, 0);
  for (const auto& list : rated) {
    for (ItemIndex j : list) ++popularity[j];
  }
  std::vector<ItemIndex> by_popularity(c.item_count);
  std::iota(by_popularity.begin(), by_popularity.end(), ItemIndex{0});
  std::stable_sort(by_popularity.begin(), by_popularity.end(),
                   [&](ItemIndex a, ItemIndex b) { return popularity[a] > popularity[b]; });
  std::vector<char> in_pool(c.item_count, 0);
  const std::size_t pool_size = std::max<std::size_t>(1, detail::ceil_fraction(c.popular_pool_fraction, c.item_count));
  for (std::size_t i = 0; i < pool_size; ++i) in_pool[by_popularity[i]] = 1;

  std::vector<std::size_t> signal_activity(n);
  for (UserIndex u = 0; u < n; ++u) {
    signal_activity[u] = c.signal_layer == Layer::social ? adj[u].size() : rated[u].size();
  }
  const auto boosted = detail::top_quartile(signal_activity);

  IdMap users;
  for (UserIndex u = 0; u < n; ++u) users.intern("u" + std::to_string(u));
  IdMap items;
  for (ItemIndex j = 0; j < c.item_count; ++j) items.intern("m" + std::to_string(j));

  // Half-star grid: index 0..9 -> 0.5..5.0; index >= 6 is above 3.
  auto star = [](std::uint64_t idx) { return 0.5 * static_cast<double>(idx + 1); };
  std::vector<std::vector<RatedItem>> user_items(n);
  for (UserIndex u = 0; u < n; ++u) {
    const bool fan = rating_rng.bernoulli(boosted[u] ? kBoostedFanProbability : kBaselineFanProbability);
    for (ItemIndex j : rated[u]) {
      double r;
      if (in_pool[j]) {
        r = fan ? star(6 + rating_rng.below(4)) : star(rating_rng.below(6));
      } else {
        r = star(rating_rng.below(10));
      }
      user_items[u].push_back({j, r});
    }
  }
  auto social = SocialGraph::from_adjacency(adj, std::move(users));
  auto behavioral = BehavioralGraph::from_user_items(std::move(user_items), std::move(items));
  // Drops items nobody picked.
  behavioral = align_behavioral(behavioral, IndexRemap::identity(n));
  return couple(std::move(social), std::move(behavioral));
}

}  // namespace coupnet
