#pragma once

#include <algorithm>
#include <cstdint>
#include <istream>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <queue>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "coupnet/error.hpp"
#include "coupnet/text.hpp"

namespace coupnet {

using UserIndex = std::uint32_t;
using ItemIndex = std::uint32_t;

inline constexpr std::uint32_t kNoIndex = std::numeric_limits<std::uint32_t>::max();

// Dense index <-> external identifier, assigned in order of first appearance.
class IdMap {
 public:
  std::uint32_t intern(std::string_view id) {
    auto it = index_.find(std::string(id));
    if (it != index_.end()) return it->second;
    const auto idx = static_cast<std::uint32_t>(ids_.size());
    ids_.emplace_back(id);
    index_.emplace(ids_.back(), idx);
    return idx;
  }

  std::optional<std::uint32_t> find(std::string_view id) const {
    auto it = index_.find(std::string(id));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  const std::string& id(std::uint32_t idx) const { return ids_.at(idx); }
  std::size_t size() const noexcept { return ids_.size(); }
  const std::vector<std::string>& ids() const noexcept { return ids_; }

  bool operator==(const IdMap& o) const { return ids_ == o.ids_; }

 private:
  std::vector<std::string> ids_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

// old dense index -> new dense index (kNoIndex when dropped), and back.
struct IndexRemap {
  std::vector<std::uint32_t> old_to_new;
  std::vector<std::uint32_t> new_to_old;

  static IndexRemap identity(std::size_t n) {
    IndexRemap r;
    r.old_to_new.resize(n);
    std::iota(r.old_to_new.begin(), r.old_to_new.end(), 0u);
    r.new_to_old = r.old_to_new;
    return r;
  }

  bool is_identity() const {
    if (old_to_new.size() != new_to_old.size()) return false;
    for (std::size_t i = 0; i < old_to_new.size(); ++i) {
      if (old_to_new[i] != i) return false;
    }
    return true;
  }

  bool operator==(const IndexRemap&) const = default;
};

// Undirected simple graph in compressed sparse row form.
class SocialGraph {
 public:
  SocialGraph() : offsets_{0} {}

  // Adjacency lists are symmetrized, sorted and deduplicated; self-loops dropped.
  static SocialGraph from_adjacency(std::vector<std::vector<UserIndex>> adj, IdMap ids) {
    if (ids.size() != adj.size()) {
      throw ValidationError("SocialGraph: id map size does not match user count");
    }
    const std::size_t n = adj.size();
    for (UserIndex u = 0; u < n; ++u) {
      for (UserIndex v : adj[u]) {
        if (v >= n) throw ValidationError("SocialGraph: neighbor index out of range");
      }
    }
    std::vector<std::vector<UserIndex>> sym(n);
    for (UserIndex u = 0; u < n; ++u) {
      for (UserIndex v : adj[u]) {
        if (u == v) continue;
        sym[u].push_back(v);
        sym[v].push_back(u);
      }
    }
    SocialGraph g;
    g.ids_ = std::move(ids);
    g.offsets_.assign(n + 1, 0);
    for (UserIndex u = 0; u < n; ++u) {
      auto& list = sym[u];
      std::sort(list.begin(), list.end());
      list.erase(std::unique(list.begin(), list.end()), list.end());
      g.offsets_[u + 1] = g.offsets_[u] + list.size();
    }
    g.targets_.reserve(g.offsets_[n]);
    for (auto& list : sym) g.targets_.insert(g.targets_.end(), list.begin(), list.end());
    return g;
  }

  std::size_t user_count() const noexcept { return offsets_.size() - 1; }
  std::size_t edge_count() const noexcept { return targets_.size() / 2; }

  std::span<const UserIndex> neighbors(UserIndex u) const {
    return {targets_.data() + offsets_[u], targets_.data() + offsets_[u + 1]};
  }
  std::size_t degree(UserIndex u) const { return offsets_[u + 1] - offsets_[u]; }

  bool has_edge(UserIndex u, UserIndex v) const {
    const auto nb = neighbors(u);
    return std::binary_search(nb.begin(), nb.end(), v);
  }

  const IdMap& ids() const noexcept { return ids_; }

  // Undirected edges (u < v) in ascending order.
  std::vector<std::pair<UserIndex, UserIndex>> edges() const {
    std::vector<std::pair<UserIndex, UserIndex>> out;
    out.reserve(edge_count());
    for (UserIndex u = 0; u < user_count(); ++u) {
      for (UserIndex v : neighbors(u)) {
        if (u < v) out.emplace_back(u, v);
      }
    }
    return out;
  }

 private:
  IdMap ids_;
  std::vector<std::size_t> offsets_;
  std::vector<UserIndex> targets_;
};

struct RatedItem {
  ItemIndex item;
  double rating;
  bool operator==(const RatedItem&) const = default;
};

// Bipartite user-item graph. User indices live in the social layer's index space.
class BehavioralGraph {
 public:
  BehavioralGraph() : user_offsets_{0}, item_offsets_{0} {}

  // user_items[u] may be unsorted but must hold each item at most once.
  static BehavioralGraph from_user_items(std::vector<std::vector<RatedItem>> user_items,
                                         IdMap items) {
    BehavioralGraph b;
    const std::size_t n_users = user_items.size();
    const std::size_t n_items = items.size();
    b.items_ = std::move(items);
    b.user_offsets_.assign(n_users + 1, 0);
    std::vector<std::size_t> item_degree(n_items, 0);
    for (std::size_t u = 0; u < n_users; ++u) {
      auto& list = user_items[u];
      std::sort(list.begin(), list.end(),
                [](const RatedItem& a, const RatedItem& c) { return a.item < c.item; });
      for (std::size_t k = 0; k < list.size(); ++k) {
        if (list[k].item >= n_items) throw ValidationError("BehavioralGraph: item index out of range");
        if (k > 0 && list[k].item == list[k - 1].item) {
          throw ValidationError("BehavioralGraph: duplicate (user, item) pair");
        }
        if (!(list[k].rating >= 0.5 && list[k].rating <= 5.0)) {
          throw ValidationError("BehavioralGraph: rating outside [0.5, 5.0]");
        }
        ++item_degree[list[k].item];
      }
      b.user_offsets_[u + 1] = b.user_offsets_[u] + list.size();
    }
    b.ratings_.reserve(b.user_offsets_[n_users]);
    for (auto& list : user_items) b.ratings_.insert(b.ratings_.end(), list.begin(), list.end());

    b.item_offsets_.assign(n_items + 1, 0);
    for (std::size_t j = 0; j < n_items; ++j) {
      b.item_offsets_[j + 1] = b.item_offsets_[j] + item_degree[j];
    }
    b.watchers_.resize(b.ratings_.size());
    std::vector<std::size_t> cursor(b.item_offsets_.begin(), b.item_offsets_.end() - 1);
    // Users visited in ascending order, so each watcher list comes out sorted.
    for (UserIndex u = 0; u < n_users; ++u) {
      for (const auto& r : b.user_items(u)) b.watchers_[cursor[r.item]++] = u;
    }
    return b;
  }

  std::size_t user_count() const noexcept { return user_offsets_.size() - 1; }
  std::size_t item_count() const noexcept { return item_offsets_.size() - 1; }
  std::size_t record_count() const noexcept { return ratings_.size(); }

  std::span<const RatedItem> user_items(UserIndex u) const {
    return {ratings_.data() + user_offsets_[u], ratings_.data() + user_offsets_[u + 1]};
  }
  std::span<const UserIndex> item_users(ItemIndex j) const {
    return {watchers_.data() + item_offsets_[j], watchers_.data() + item_offsets_[j + 1]};
  }
  std::size_t user_degree(UserIndex u) const { return user_offsets_[u + 1] - user_offsets_[u]; }
  std::size_t item_popularity(ItemIndex j) const { return item_offsets_[j + 1] - item_offsets_[j]; }

  std::optional<double> rating(UserIndex u, ItemIndex j) const {
    const auto items = user_items(u);
    auto it = std::lower_bound(items.begin(), items.end(), j,
                               [](const RatedItem& r, ItemIndex x) { return r.item < x; });
    if (it == items.end() || it->item != j) return std::nullopt;
    return it->rating;
  }

  const IdMap& item_ids() const noexcept { return items_; }

 private:
  IdMap items_;
  std::vector<std::size_t> user_offsets_;
  std::vector<RatedItem> ratings_;
  std::vector<std::size_t> item_offsets_;
  std::vector<UserIndex> watchers_;
};

// Social and behavioral layers sharing one user index space.
class CoupledNetwork {
 public:
  const SocialGraph& social() const noexcept { return social_; }
  const BehavioralGraph& behavioral() const noexcept { return behavioral_; }
  std::size_t user_count() const noexcept { return social_.user_count(); }

 private:
  friend CoupledNetwork couple(SocialGraph s, BehavioralGraph b);
  CoupledNetwork(SocialGraph s, BehavioralGraph b)
      : social_(std::move(s)), behavioral_(std::move(b)) {}

  SocialGraph social_;
  BehavioralGraph behavioral_;
};

inline CoupledNetwork couple(SocialGraph s, BehavioralGraph b) {
  if (s.user_count() != b.user_count()) {
    throw CouplingError("cannot couple layers: social graph has " + std::to_string(s.user_count()) +
                        " users, behavioral graph has " + std::to_string(b.user_count()));
  }
  return CoupledNetwork(std::move(s), std::move(b));
}

struct EdgeRecord {
  std::string a;
  std::string b;
};

struct RatingRecord {
  std::string user;
  std::string item;
  double rating;
};

// Ids already present in `seed` keep their indices; new ids are appended in
// order of first appearance.
inline SocialGraph build_social(std::span<const EdgeRecord> records, IdMap seed = {}) {
  IdMap ids = std::move(seed);
  std::vector<std::vector<UserIndex>> adj(ids.size());
  for (const auto& e : records) {
    const auto u = ids.intern(e.a);
    const auto v = ids.intern(e.b);
    if (adj.size() < ids.size()) adj.resize(ids.size());
    if (u != v) adj[u].push_back(v);
  }
  return SocialGraph::from_adjacency(std::move(adj), std::move(ids));
}

// Ratings of users unknown to `users` are dropped (absent from the social
// layer). Duplicate (user, item) pairs keep the last occurrence.
inline BehavioralGraph build_behavioral(std::span<const RatingRecord> records, const IdMap& users,
                                        IdMap item_seed = {}) {
  IdMap items = std::move(item_seed);
  std::vector<std::unordered_map<ItemIndex, double>> latest(users.size());
  std::vector<std::vector<ItemIndex>> order(users.size());
  for (const auto& r : records) {
    if (!(r.rating >= 0.5 && r.rating <= 5.0)) {
      throw ValidationError("rating " + text::format_double(r.rating) + " outside [0.5, 5.0]");
    }
    const auto u = users.find(r.user);
    if (!u) continue;
    const auto j = items.intern(r.item);
    auto [it, inserted] = latest[*u].insert_or_assign(j, r.rating);
    if (inserted) order[*u].push_back(j);
  }
  std::vector<std::vector<RatedItem>> user_items(users.size());
  for (std::size_t u = 0; u < users.size(); ++u) {
    for (ItemIndex j : order[u]) user_items[u].push_back({j, latest[u].at(j)});
  }
  return BehavioralGraph::from_user_items(std::move(user_items), std::move(items));
}

inline std::vector<EdgeRecord> read_edge_records(std::istream& in, const std::string& source) {
  std::vector<EdgeRecord> out;
  text::for_each_record_line(in, [&](std::size_t lineno, std::string_view line) {
    const auto f = text::split(line, '\t');
    if (f.size() != 2) {
      throw ParseError(source, lineno, "expected 2 tab-separated fields, got " + std::to_string(f.size()));
    }
    if (f[0].empty() || f[1].empty()) throw ParseError(source, lineno, "empty user id");
    out.push_back({std::string(f[0]), std::string(f[1])});
  });
  return out;
}

inline std::vector<RatingRecord> read_rating_records(std::istream& in, const std::string& source) {
  std::vector<RatingRecord> out;
  text::for_each_record_line(in, [&](std::size_t lineno, std::string_view line) {
    const auto f = text::split(line, '\t');
    if (f.size() != 3) {
      throw ParseError(source, lineno, "expected 3 tab-separated fields, got " + std::to_string(f.size()));
    }
    if (f[0].empty() || f[1].empty()) throw ParseError(source, lineno, "empty user or item id");
    const auto rating = text::parse_double(f[2]);
    if (!rating) throw ParseError(source, lineno, "unparsable rating '" + std::string(f[2]) + "'");
    if (!(*rating >= 0.5 && *rating <= 5.0)) {
      throw ParseError(source, lineno, "rating " + std::string(f[2]) + " outside [0.5, 5.0]");
    }
    out.push_back({std::string(f[0]), std::string(f[1]), *rating});
  });
  return out;
}

struct ComponentResult {
  SocialGraph graph;
  IndexRemap remap;
};

// Keeps the largest connected component. Equal-size components are broken in
// favor of the one holding the smallest dense index. Surviving users keep
// their relative order.
inline ComponentResult largest_connected_component(const SocialGraph& g) {
  const std::size_t n = g.user_count();
  if (n == 0) return {SocialGraph{}, IndexRemap{}};

  std::vector<std::uint32_t> component(n, kNoIndex);
  std::uint32_t best = kNoIndex;
  std::size_t best_size = 0;
  std::uint32_t next_label = 0;
  std::queue<UserIndex> frontier;
  for (UserIndex start = 0; start < n; ++start) {
    if (component[start] != kNoIndex) continue;
    const auto label = next_label++;
    std::size_t size = 0;
    component[start] = label;
    frontier.push(start);
    while (!frontier.empty()) {
      const auto u = frontier.front();
      frontier.pop();
      ++size;
      for (UserIndex v : g.neighbors(u)) {
        if (component[v] == kNoIndex) {
          component[v] = label;
          frontier.push(v);
        }
      }
    }
    if (size > best_size) {
      best_size = size;
      best = label;
    }
  }

  IndexRemap remap;
  remap.old_to_new.assign(n, kNoIndex);
  IdMap ids;
  for (UserIndex u = 0; u < n; ++u) {
    if (component[u] != best) continue;
    remap.old_to_new[u] = static_cast<std::uint32_t>(remap.new_to_old.size());
    remap.new_to_old.push_back(u);
    ids.intern(g.ids().id(u));
  }
  std::vector<std::vector<UserIndex>> adj(remap.new_to_old.size());
  for (std::size_t nu = 0; nu < adj.size(); ++nu) {
    for (UserIndex v : g.neighbors(remap.new_to_old[nu])) adj[nu].push_back(remap.old_to_new[v]);
  }
  return {SocialGraph::from_adjacency(std::move(adj), std::move(ids)), std::move(remap)};
}

// Drops users absent from the remap, then items left without watchers.
// Surviving items keep their relative order.
inline BehavioralGraph align_behavioral(const BehavioralGraph& b, const IndexRemap& surviving_users) {
  if (surviving_users.old_to_new.size() != b.user_count()) {
    throw CouplingError("align_behavioral: remap covers " +
                        std::to_string(surviving_users.old_to_new.size()) + " users, graph has " +
                        std::to_string(b.user_count()));
  }
  std::vector<bool> watched(b.item_count(), false);
  for (UserIndex old_u : surviving_users.new_to_old) {
    for (const auto& r : b.user_items(old_u)) watched[r.item] = true;
  }
  std::vector<ItemIndex> item_remap(b.item_count(), kNoIndex);
  IdMap items;
  for (ItemIndex j = 0; j < b.item_count(); ++j) {
    if (watched[j]) item_remap[j] = items.intern(b.item_ids().id(j));
  }
  std::vector<std::vector<RatedItem>> user_items(surviving_users.new_to_old.size());
  for (std::size_t nu = 0; nu < user_items.size(); ++nu) {
    for (const auto& r : b.user_items(surviving_users.new_to_old[nu])) {
      user_items[nu].push_back({item_remap[r.item], r.rating});
    }
  }
  return BehavioralGraph::from_user_items(std::move(user_items), std::move(items));
}

inline void write_social_edges(std::ostream& out, const SocialGraph& g) {
  for (const auto& [u, v] : g.edges()) out << g.ids().id(u) << '\t' << g.ids().id(v) << '\n';
}

// Users are listed in ascending dense index, items in ascending item index.
inline void write_ratings(std::ostream& out, const BehavioralGraph& b, const IdMap& users) {
  for (UserIndex u = 0; u < b.user_count(); ++u) {
    for (const auto& r : b.user_items(u)) {
      out << users.id(u) << '\t' << b.item_ids().id(r.item) << '\t' << text::format_double(r.rating)
          << '\n';
    }
  }
}

inline void write_id_map_csv(std::ostream& out, const IdMap& ids) {
  out << "original_id,dense_index\n";
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out << text::csv_field(ids.id(static_cast<std::uint32_t>(i))) << ',' << i << '\n';
  }
}

inline IdMap read_id_map_csv(std::istream& in, const std::string& source) {
  IdMap ids;
  std::string line;
  std::size_t lineno = 0;
  bool header = true;
  while (std::getline(in, line)) {
    ++lineno;
    const auto view = text::chomp(line);
    if (header) {
      if (view != "original_id,dense_index") throw ParseError(source, lineno, "unexpected header");
      header = false;
      continue;
    }
    if (view.empty()) continue;
    const auto f = text::parse_csv_line(view);
    if (!f || f->size() != 2) throw ParseError(source, lineno, "expected original_id,dense_index");
    const auto idx = text::parse_int<std::uint32_t>((*f)[1]);
    if (!idx || *idx != ids.size()) throw ParseError(source, lineno, "dense indices must be 0..n-1 in order");
    if (ids.intern((*f)[0]) != *idx) throw ParseError(source, lineno, "duplicate original id");
  }
  if (header) throw ParseError(source, 0, "missing header");
  return ids;
}

}  // namespace coupnet
