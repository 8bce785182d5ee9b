#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "coupnet/pipeline.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using testing_support::TempDir;

namespace {

struct Run {
  int status;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& s) {
  fs::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << s;
}

Run cli(const TempDir& dir, const std::string& args) {
  const auto out = dir.path() / "stdout.txt";
  const auto err = dir.path() / "stderr.txt";
  const std::string cmd = std::string("env -u COUPNET_OUT '") + COUPNET_CLI_PATH + "' " + args + " >'" +
                          out.string() + "' 2>'" + err.string() + "'";
  const int raw = std::system(cmd.c_str());
  return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, slurp(out), slurp(err)};
}

fs::path write_config(const TempDir& dir, const nlohmann::json& j) {
  const auto p = dir.path() / "config.json";
  spit(p, j.dump(2));
  return p;
}

nlohmann::json small_synthetic(const fs::path& out) {
  return {{"seed", 5},
          {"output_dir", out.string()},
          {"synthetic", {{"user_count", 600}, {"item_count", 200}, {"signal_layer", "social"}}},
          {"labeling", {{"popularity_pool_fraction", 0.1}}},
          {"split", {{"train_ratios", {0.8, 0.6}}}},
          {"learner", {{"rounds", 10}}}};
}

}  // namespace

TEST(Cli, MissingRatingsFileExitsTwoAndNamesPath) {
  TempDir dir;
  spit(dir.path() / "edges.tsv", "a\tb\n");
  const auto missing = dir.path() / "nope" / "ratings.tsv";
  const auto cfg = write_config(dir, {{"output_dir", (dir.path() / "out").string()},
                                      {"input", {{"social_edges", (dir.path() / "edges.tsv").string()},
                                                 {"ratings", missing.string()}}}});
  const auto r = cli(dir, "--config '" + cfg.string() + "' preprocess");
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.err.find(missing.string()), std::string::npos) << r.err;
}

TEST(Cli, FeaturizeBeforePreprocessNamesPreprocess) {
  TempDir dir;
  const auto r = cli(dir, "--out '" + (dir.path() / "out").string() + "' featurize");
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.err.find("preprocess"), std::string::npos) << r.err;
  const auto s = cli(dir, "--out '" + (dir.path() / "out").string() + "' sweep");
  EXPECT_EQ(s.status, 2);
  EXPECT_NE(s.err.find("featurize"), std::string::npos) << s.err;
}

TEST(Cli, TinyFixtureRetainsLargestComponent) {
  TempDir dir;
  spit(dir.path() / "edges.tsv", "# friends\nalice\tbob\nbob\tcarol\ndave\terin\n");
  spit(dir.path() / "ratings.tsv", "alice\tm1\t4\nbob\tm1\t3.5\ncarol\tm2\t5\ndave\tm3\t2\n");
  const auto cfg = write_config(dir, {{"output_dir", (dir.path() / "out").string()},
                                      {"input", {{"social_edges", (dir.path() / "edges.tsv").string()},
                                                 {"ratings", (dir.path() / "ratings.tsv").string()}}}});
  const auto r = cli(dir, "--config '" + cfg.string() + "' preprocess");
  ASSERT_EQ(r.status, 0) << r.err;
  EXPECT_NE(r.out.find("retained 3 users, 2 links, 2 items, 3 records"), std::string::npos) << r.out;
  EXPECT_EQ(slurp(dir.path() / "out" / "network" / "user_remap.csv"),
            "original_id,dense_index\nalice,0\nbob,1\ncarol,2\n");
  const auto manifest = nlohmann::json::parse(slurp(dir.path() / "out" / "manifest_preprocess.json"));
  EXPECT_EQ(manifest.at("command"), "preprocess");
  for (const auto& a : manifest.at("artifacts")) {
    EXPECT_EQ(a.at("sha256"), coupnet::pipeline::sha256_hex(slurp(dir.path() / "out" / a.at("path").get<std::string>())));
  }
  EXPECT_TRUE(fs::exists(dir.path() / "out" / "timing_preprocess.json"));
}

TEST(Cli, MalformedInputReportsFileAndLine) {
  TempDir dir;
  spit(dir.path() / "edges.tsv", "a\tb\nb c\n");
  spit(dir.path() / "ratings.tsv", "a\tm\t4\n");
  const auto cfg = write_config(dir, {{"output_dir", (dir.path() / "out").string()},
                                      {"input", {{"social_edges", (dir.path() / "edges.tsv").string()},
                                                 {"ratings", (dir.path() / "ratings.tsv").string()}}}});
  const auto r = cli(dir, "--config '" + cfg.string() + "' preprocess");
  EXPECT_EQ(r.status, 3);
  EXPECT_NE(r.err.find("edges.tsv:2"), std::string::npos) << r.err;
}

TEST(Cli, BadConfigIsRejected) {
  TempDir dir;
  auto cfg = write_config(dir, {{"synthetic", nlohmann::json::object()}, {"colour", "blue"}});
  auto r = cli(dir, "--config '" + cfg.string() + "' synth");
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.err.find("colour"), std::string::npos) << r.err;
  cfg = write_config(dir, {{"seed", 1}});
  r = cli(dir, "--config '" + cfg.string() + "' synth");
  EXPECT_EQ(r.status, 2);
}

TEST(Cli, SynthOutputFeedsPreprocessAndFullPipelineIsDeterministic) {
  TempDir dir;
  const auto a = dir.path() / "a";
  const auto b = dir.path() / "b";
  const auto cfg = write_config(dir, small_synthetic(a));
  for (const auto& out : {a, b}) {
    for (const char* cmd : {"synth", "preprocess", "featurize", "sweep"}) {
      const auto r = cli(dir, "--config '" + cfg.string() + "' --out '" + out.string() + "' " + cmd);
      ASSERT_EQ(r.status, 0) << cmd << ": " << r.err;
    }
  }
  // Synth files parse cleanly through the ingestion path.
  std::ifstream edges(a / "synth" / "social_edges.tsv");
  EXPECT_NO_THROW(coupnet::read_edge_records(edges, "edges"));

  std::size_t compared = 0;
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), a);
    if (rel.filename().string().rfind("timing_", 0) == 0) continue;
    EXPECT_EQ(slurp(entry.path()), slurp(b / rel)) << rel;
    ++compared;
  }
  EXPECT_GT(compared, 30u);

  // Worker count changes nothing.
  const auto c = dir.path() / "c";
  for (const char* cmd : {"synth", "preprocess", "featurize", "sweep"}) {
    ASSERT_EQ(cli(dir, "--config '" + cfg.string() + "' --workers 3 --out '" + c.string() + "' " + cmd).status, 0);
  }
  EXPECT_EQ(slurp(a / "manifest_sweep.json"), slurp(c / "manifest_sweep.json"));
  EXPECT_EQ(slurp(a / "features" / "features.csv"), slurp(c / "features" / "features.csv"));
}

TEST(Cli, SeedFlagAndEnvironmentOverride) {
  TempDir dir;
  const auto cfg = write_config(dir, small_synthetic(dir.path() / "cfg_out"));
  const auto env_out = dir.path() / "env_out";
  const std::string cmd = "COUPNET_OUT='" + env_out.string() + "' '" + COUPNET_CLI_PATH + "' --config '" +
                          cfg.string() + "' --seed 6 synth >/dev/null 2>&1";
  ASSERT_EQ(std::system(cmd.c_str()), 0);
  EXPECT_TRUE(fs::exists(env_out / "synth" / "ratings.tsv"));
  EXPECT_FALSE(fs::exists(dir.path() / "cfg_out"));
  ASSERT_EQ(cli(dir, "--config '" + cfg.string() + "' synth").status, 0);
  EXPECT_NE(slurp(env_out / "synth" / "ratings.tsv"), slurp(dir.path() / "cfg_out" / "synth" / "ratings.tsv"));
  const auto manifest = nlohmann::json::parse(slurp(env_out / "manifest_synth.json"));
  EXPECT_EQ(manifest.at("seed"), 6);
}

// Every sweep row can be recomputed from the files on disk alone.
TEST(Cli, PersistedArtifactsReproduceSweepRows) {
  TempDir dir;
  const auto out = dir.path() / "out";
  const auto cfg = write_config(dir, small_synthetic(out));
  for (const char* cmd : {"synth", "preprocess", "featurize", "sweep"}) {
    ASSERT_EQ(cli(dir, "--config '" + cfg.string() + "' " + cmd).status, 0) << cmd;
  }
  using namespace coupnet;
  std::ifstream sweep_in(out / "sweep" / "sweep.csv");
  const auto sweep = read_sweep_csv(sweep_in, "sweep.csv");
  std::ifstream labels_in(out / "sweep" / "labels.csv");
  const auto labels = read_labels_csv(labels_in, "labels.csv");
  std::ifstream feature_in(out / "features" / "features.csv");
  const auto raw = read_feature_csv(feature_in, "features.csv");
  ASSERT_EQ(sweep.rows.size(), 22u);
  for (const auto& row : sweep.rows) {
    std::ifstream split_in(out / pipeline::split_path(row.r));
    const auto split = read_split_csv(split_in, "split");
    const auto norm = pipeline::normalization_from_json(nlohmann::json::parse(slurp(out / pipeline::normalization_path(row.r))));
    const auto h = hybrid_from_json(nlohmann::json::parse(slurp(out / pipeline::model_path(row.r, row.alpha))));
    EXPECT_EQ(h.alpha(), row.alpha);
    const auto p = evaluate_hybrid(h, apply_normalization(raw, norm), labels, split.test);
    EXPECT_EQ(p.precision, row.precision);
    EXPECT_EQ(p.positive_predictions(), row.positive_predictions);
    EXPECT_EQ(split.test.size(), row.test_size);
  }
}
