#pragma once

// File-backed pipeline behind the command-line tool: synth -> preprocess ->
// featurize -> sweep. Every command writes its artifacts under one output
// directory plus a manifest of checksums.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>
#include <nlohmann/json.hpp>

#include "coupnet/blend.hpp"
#include "coupnet/error.hpp"
#include "coupnet/experiment.hpp"
#include "coupnet/features.hpp"
#include "coupnet/graph.hpp"

namespace coupnet::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr int kManifestFormatVersion = 1;
inline constexpr const char* kOutputDirEnv = "COUPNET_OUT";

struct InputPaths {
  fs::path social_edges;
  fs::path ratings;
};

struct RunConfig {
  std::uint64_t seed = 1;
  fs::path output_dir = "coupnet_out";
  unsigned workers = 1;
  std::optional<InputPaths> input;
  std::optional<SyntheticConfig> synthetic;
  LabelingConfig labeling;
  std::vector<double> train_ratios{0.8};
  bool stratified = true;
  std::vector<double> alphas = default_alpha_grid();
  BoostingParams learner;
};

// ---------------------------------------------------------------------------
// Config

namespace detail {

inline Layer parse_layer(const std::string& s) {
  if (s == "social") return Layer::social;
  if (s == "behavioral") return Layer::behavioral;
  throw ValidationError("signal_layer must be \"social\" or \"behavioral\", got \"" + s + "\"");
}

inline std::string layer_name(Layer l) { return l == Layer::social ? "social" : "behavioral"; }

template <typename T>
void read_key(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

inline void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    bool known = false;
    for (const char* a : allowed) known = known || key == a;
    if (!known) throw ValidationError("unknown config key \"" + key + "\" in " + where);
  }
}

}  // namespace detail

// Schema (all keys optional except one of "input" / "synthetic"):
//   seed, output_dir, workers,
//   input {social_edges, ratings},
//   synthetic {user_count, item_count, mean_social_degree, mean_items_per_user,
//              homophily, signal_layer, popular_pool_fraction},
//   labeling {target_count, popularity_pool_fraction, rating_threshold},
//   split {train_ratios, stratified}, sweep {alphas}, learner {rounds, max_depth, min_leaf}
inline RunConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  detail::check_keys(j, {"seed", "output_dir", "workers", "input", "synthetic", "labeling", "split", "sweep", "learner"},
                     "config");
  RunConfig c;
  detail::read_key(j, "seed", c.seed);
  if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
  detail::read_key(j, "workers", c.workers);
  if (j.contains("input")) {
    const auto& in = j.at("input");
    detail::check_keys(in, {"social_edges", "ratings"}, "input");
    c.input = InputPaths{in.at("social_edges").get<std::string>(), in.at("ratings").get<std::string>()};
  }
  if (j.contains("synthetic")) {
    const auto& s = j.at("synthetic");
    detail::check_keys(s, {"user_count", "item_count", "mean_social_degree", "mean_items_per_user", "homophily",
                           "signal_layer", "popular_pool_fraction"},
                       "synthetic");
    SyntheticConfig sc;
    detail::read_key(s, "user_count", sc.user_count);
    detail::read_key(s, "item_count", sc.item_count);
    detail::read_key(s, "mean_social_degree", sc.mean_social_degree);
    detail::read_key(s, "mean_items_per_user", sc.mean_items_per_user);
    detail::read_key(s, "homophily", sc.homophily);
    detail::read_key(s, "popular_pool_fraction", sc.popular_pool_fraction);
    if (s.contains("signal_layer")) sc.signal_layer = detail::parse_layer(s.at("signal_layer").get<std::string>());
    c.synthetic = sc;
  }
  if (c.input.has_value() == c.synthetic.has_value()) {
    throw ValidationError("config must contain exactly one of \"input\" and \"synthetic\"");
  }
  if (j.contains("labeling")) {
    const auto& l = j.at("labeling");
    detail::check_keys(l, {"target_count", "popularity_pool_fraction", "rating_threshold"}, "labeling");
    detail::read_key(l, "target_count", c.labeling.target_count);
    detail::read_key(l, "popularity_pool_fraction", c.labeling.popularity_pool_fraction);
    detail::read_key(l, "rating_threshold", c.labeling.rating_threshold);
  }
  if (j.contains("split")) {
    const auto& s = j.at("split");
    detail::check_keys(s, {"train_ratios", "stratified"}, "split");
    detail::read_key(s, "train_ratios", c.train_ratios);
    detail::read_key(s, "stratified", c.stratified);
  }
  if (j.contains("sweep")) {
    detail::check_keys(j.at("sweep"), {"alphas"}, "sweep");
    detail::read_key(j.at("sweep"), "alphas", c.alphas);
  }
  if (j.contains("learner")) {
    const auto& l = j.at("learner");
    detail::check_keys(l, {"rounds", "max_depth", "min_leaf"}, "learner");
    detail::read_key(l, "rounds", c.learner.rounds);
    detail::read_key(l, "max_depth", c.learner.max_depth);
    detail::read_key(l, "min_leaf", c.learner.min_leaf);
  }
  return c;
}

// Canonical form of the settings that determine outputs. Output location and
// worker count are excluded: neither changes any artifact.
inline json result_affecting_config(const RunConfig& c) {
  json j = {{"seed", c.seed},
            {"labeling",
             {{"target_count", c.labeling.target_count},
              {"popularity_pool_fraction", c.labeling.popularity_pool_fraction},
              {"rating_threshold", c.labeling.rating_threshold}}},
            {"split", {{"train_ratios", c.train_ratios}, {"stratified", c.stratified}}},
            {"sweep", {{"alphas", c.alphas}}},
            {"learner",
             {{"rounds", c.learner.rounds}, {"max_depth", c.learner.max_depth}, {"min_leaf", c.learner.min_leaf}}}};
  if (c.input) {
    j["input"] = {{"social_edges", c.input->social_edges.string()}, {"ratings", c.input->ratings.string()}};
  }
  if (c.synthetic) {
    const auto& s = *c.synthetic;
    j["synthetic"] = {{"user_count", s.user_count},
                      {"item_count", s.item_count},
                      {"mean_social_degree", s.mean_social_degree},
                      {"mean_items_per_user", s.mean_items_per_user},
                      {"homophily", s.homophily},
                      {"signal_layer", detail::layer_name(s.signal_layer)},
                      {"popular_pool_fraction", s.popular_pool_fraction}};
  }
  return j;
}

inline RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingInputError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string(), 0, e.what());
  }
  try {
    return config_from_json(j);
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Checksums and manifests

inline std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 failed");
  }
  std::ostringstream out;
  for (unsigned int i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << int{digest[i]};
  return out.str();
}

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw MissingInputError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Collects written artifacts for the command's manifest.
class ArtifactWriter {
 public:
  explicit ArtifactWriter(fs::path root) : root_(std::move(root)) {}

  void write(const fs::path& relative, const std::string& content) {
    const auto full = root_ / relative;
    fs::create_directories(full.parent_path());
    std::ofstream out(full, std::ios::binary | std::ios::trunc);
    out << content;
    out.close();
    if (!out) throw Error("failed to write " + full.string());
    artifacts_.push_back({relative.generic_string(), sha256_hex(content)});
  }

  template <typename Fn>
  void write_with(const fs::path& relative, Fn&& fn) {
    std::ostringstream ss;
    fn(ss);
    write(relative, ss.str());
  }

  json manifest(const std::string& command, const RunConfig& c) const {
    json artifacts = json::array();
    for (const auto& [path, sum] : artifacts_) artifacts.push_back({{"path", path}, {"sha256", sum}});
    return {{"format", "coupnet.manifest"},
            {"format_version", kManifestFormatVersion},
            {"command", command},
            {"seed", c.seed},
            {"config_hash", sha256_hex(result_affecting_config(c).dump())},
            {"artifacts", std::move(artifacts)}};
  }

  const fs::path& root() const noexcept { return root_; }

 private:
  fs::path root_;
  std::vector<std::pair<std::string, std::string>> artifacts_;
};

// The manifest holds only reproducible content; the run's wall-clock time
// goes to a separate timing file so identical runs keep identical manifests.
inline void finish(const ArtifactWriter& w, const std::string& command, const RunConfig& c,
                   std::chrono::steady_clock::time_point started) {
  const auto manifest = w.manifest(command, c).dump(2) + "\n";
  {
    std::ofstream out(w.root() / ("manifest_" + command + ".json"), std::ios::trunc);
    out << manifest;
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  std::ofstream timing(w.root() / ("timing_" + command + ".json"), std::ios::trunc);
  timing << json{{"command", command}, {"wall_clock_seconds", seconds}}.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// Artifact locations

inline const fs::path kSynthEdges = "synth/social_edges.tsv";
inline const fs::path kSynthRatings = "synth/ratings.tsv";
inline const fs::path kNetworkEdges = "network/social_edges.tsv";
inline const fs::path kNetworkRatings = "network/ratings.tsv";
inline const fs::path kUserRemap = "network/user_remap.csv";
inline const fs::path kItemRemap = "network/item_remap.csv";
inline const fs::path kFeatures = "features/features.csv";
inline const fs::path kSweepCsv = "sweep/sweep.csv";
inline const fs::path kLabelsCsv = "sweep/labels.csv";
inline const fs::path kTargetsCsv = "sweep/targets.csv";

inline std::string ratio_tag(double r) { return "r" + text::format_double(r); }
inline fs::path split_path(double r) { return "sweep/split_" + ratio_tag(r) + ".csv"; }
inline fs::path normalization_path(double r) { return "sweep/normalization_" + ratio_tag(r) + ".json"; }
inline fs::path model_path(double r, double alpha) {
  return "sweep/models/hybrid_" + ratio_tag(r) + "_a" + text::format_double(alpha) + ".json";
}

inline void require(const fs::path& p, const std::string& producer) {
  if (!fs::exists(p)) {
    throw MissingInputError("missing " + p.string() + "; run `" + producer + "` first");
  }
}

inline std::ifstream open_input(const fs::path& p) {
  if (!fs::exists(p)) throw MissingInputError("input file not found: " + p.string());
  std::ifstream in(p, std::ios::binary);
  if (!in) throw MissingInputError("cannot open input file: " + p.string());
  return in;
}

inline json normalization_to_json(const NormalizationParams& p) {
  return {{"components", kComponentNames}, {"min", p.min}, {"max", p.max}};
}

inline NormalizationParams normalization_from_json(const json& j) {
  NormalizationParams p;
  p.min = j.at("min").get<std::array<double, kComponentCount>>();
  p.max = j.at("max").get<std::array<double, kComponentCount>>();
  return p;
}

// Reloads the cleaned network with the exact dense indices preprocess assigned.
inline CoupledNetwork load_network(const fs::path& out_dir) {
  for (const auto& p : {kNetworkEdges, kNetworkRatings, kUserRemap, kItemRemap}) require(out_dir / p, "preprocess");
  auto user_in = open_input(out_dir / kUserRemap);
  auto users = read_id_map_csv(user_in, (out_dir / kUserRemap).string());
  auto item_in = open_input(out_dir / kItemRemap);
  auto items = read_id_map_csv(item_in, (out_dir / kItemRemap).string());
  auto edge_in = open_input(out_dir / kNetworkEdges);
  const auto edges = read_edge_records(edge_in, (out_dir / kNetworkEdges).string());
  auto rating_in = open_input(out_dir / kNetworkRatings);
  const auto ratings = read_rating_records(rating_in, (out_dir / kNetworkRatings).string());
  const std::size_t n_users = users.size();
  const std::size_t n_items = items.size();
  auto social = build_social(edges, users);
  auto behavioral = build_behavioral(ratings, social.ids(), std::move(items));
  if (social.user_count() != n_users || behavioral.item_count() != n_items) {
    throw CouplingError("network files reference ids missing from the remap files in " + out_dir.string());
  }
  return couple(std::move(social), std::move(behavioral));
}

// ---------------------------------------------------------------------------
// Commands

struct PreprocessSummary {
  std::size_t input_users = 0;
  std::size_t input_links = 0;
  std::size_t users = 0;
  std::size_t links = 0;
  std::size_t items = 0;
  std::size_t records = 0;
};

inline void cmd_synth(const RunConfig& c, std::ostream& log = std::cout) {
  const auto started = std::chrono::steady_clock::now();
  if (!c.synthetic) throw ValidationError("synth needs a \"synthetic\" section in the config");
  auto sc = *c.synthetic;
  sc.seed = c.seed;
  const auto net = synthesize(sc);
  ArtifactWriter w(c.output_dir);
  w.write_with(kSynthEdges, [&](std::ostream& o) { write_social_edges(o, net.social()); });
  w.write_with(kSynthRatings,
               [&](std::ostream& o) { write_ratings(o, net.behavioral(), net.social().ids()); });
  finish(w, "synth", c, started);
  log << "synth: " << net.user_count() << " users, " << net.social().edge_count() << " links, "
      << net.behavioral().item_count() << " items, " << net.behavioral().record_count() << " records\n";
}

inline PreprocessSummary cmd_preprocess(const RunConfig& c, std::ostream& log = std::cout) {
  const auto started = std::chrono::steady_clock::now();
  InputPaths paths;
  if (c.input) {
    paths = *c.input;
  } else {
    paths = {c.output_dir / kSynthEdges, c.output_dir / kSynthRatings};
    require(paths.social_edges, "synth");
    require(paths.ratings, "synth");
  }
  auto edge_in = open_input(paths.social_edges);
  auto rating_in = open_input(paths.ratings);
  const auto edges = read_edge_records(edge_in, paths.social_edges.string());
  const auto ratings = read_rating_records(rating_in, paths.ratings.string());

  const auto raw_social = build_social(edges);
  const auto raw_behavioral = build_behavioral(ratings, raw_social.ids());
  auto [social, remap] = largest_connected_component(raw_social);
  auto behavioral = align_behavioral(raw_behavioral, remap);
  const auto net = couple(std::move(social), std::move(behavioral));

  ArtifactWriter w(c.output_dir);
  w.write_with(kUserRemap, [&](std::ostream& o) { write_id_map_csv(o, net.social().ids()); });
  w.write_with(kItemRemap, [&](std::ostream& o) { write_id_map_csv(o, net.behavioral().item_ids()); });
  w.write_with(kNetworkEdges, [&](std::ostream& o) { write_social_edges(o, net.social()); });
  w.write_with(kNetworkRatings, [&](std::ostream& o) { write_ratings(o, net.behavioral(), net.social().ids()); });
  finish(w, "preprocess", c, started);

  PreprocessSummary s{raw_social.user_count(), raw_social.edge_count(), net.user_count(),
                      net.social().edge_count(), net.behavioral().item_count(), net.behavioral().record_count()};
  log << "preprocess: input " << s.input_users << " users, " << s.input_links << " links\n"
      << "preprocess: retained " << s.users << " users, " << s.links << " links, " << s.items << " items, "
      << s.records << " records\n";
  return s;
}

inline void cmd_featurize(const RunConfig& c, std::ostream& log = std::cout) {
  const auto started = std::chrono::steady_clock::now();
  const auto net = load_network(c.output_dir);
  const auto m = compute_matrix(net, c.seed, c.workers);
  ArtifactWriter w(c.output_dir);
  w.write_with(kFeatures, [&](std::ostream& o) { write_feature_csv(o, m); });
  finish(w, "featurize", c, started);
  log << "featurize: " << m.size() << " users x " << kComponentCount << " features\n";
}

inline SweepConfig sweep_config(const RunConfig& c) {
  SweepConfig s;
  s.labeling = c.labeling;
  s.labeling.seed = derive_seed(c.seed, 0x1abe1);
  s.train_ratios = c.train_ratios;
  s.alphas = c.alphas;
  s.boosting = c.learner;
  s.stratified = c.stratified;
  s.seed = c.seed;
  s.workers = c.workers;
  return s;
}

inline SweepResult cmd_sweep(const RunConfig& c, std::ostream& log = std::cout) {
  const auto started = std::chrono::steady_clock::now();
  require(c.output_dir / kFeatures, "featurize");
  const auto net = load_network(c.output_dir);
  auto feature_in = open_input(c.output_dir / kFeatures);
  const auto features = read_feature_csv(feature_in, (c.output_dir / kFeatures).string());
  if (features.size() != net.user_count()) {
    throw MissingInputError("features do not match the preprocessed network; rerun `featurize`");
  }
  const auto outcome = run_sweep(net, features, sweep_config(c));

  ArtifactWriter w(c.output_dir);
  w.write_with(kLabelsCsv, [&](std::ostream& o) { write_labels_csv(o, outcome.labels); });
  w.write_with(kTargetsCsv, [&](std::ostream& o) {
    o << "item_index,item_id\n";
    for (ItemIndex j : outcome.targets) o << j << ',' << text::csv_field(net.behavioral().item_ids().id(j)) << '\n';
  });
  for (const auto& art : outcome.per_ratio) {
    w.write_with(split_path(art.r), [&](std::ostream& o) { write_split_csv(o, art.split); });
    w.write(normalization_path(art.r), normalization_to_json(art.normalization).dump(2) + "\n");
    for (const auto& row : outcome.result.rows) {
      if (row.r != art.r) continue;
      const HybridClassifier h(art.models.social, art.models.behavioral, row.alpha);
      w.write(model_path(art.r, row.alpha), hybrid_to_json(h).dump() + "\n");
    }
  }
  w.write_with(kSweepCsv, [&](std::ostream& o) { write_sweep_csv(o, outcome.result); });
  finish(w, "sweep", c, started);

  std::size_t positives = 0;
  for (int l : outcome.labels) positives += l;
  log << "sweep: " << positives << " positive of " << outcome.labels.size() << " users; "
      << outcome.result.rows.size() << " rows written to " << (c.output_dir / kSweepCsv).string() << "\n";
  return outcome.result;
}

}  // namespace coupnet::pipeline
