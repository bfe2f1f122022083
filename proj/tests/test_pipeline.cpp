#include <cstdlib>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "tumls/error.hpp"
#include "tumls/pipeline.hpp"
#include "tumls/synthetic.hpp"
#include "util.hpp"

using namespace tumls;
using namespace tumls::pipeline;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int cli(const std::string& args) {
    const std::string cmd = std::string(TUMLS_CLI) + " " + args + " 2>/dev/null";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// Small demo with a short training budget so the test stays quick.
fs::path small_demo(const std::string& name) {
    const auto dir = test::temp_dir(name);
    synthetic::write_demo(dir, 1024, 5);
    auto j = nlohmann::json::parse(std::ifstream(dir / "config.json"));
    j["train"]["max_epochs"] = 10;
    std::ofstream(dir / "config.json") << j.dump(2);
    return dir;
}

}  // namespace

TEST(Config, Eq1Consistency) {
    EXPECT_NO_THROW(validate_sizes({1024, 16, 6}));
    EXPECT_NO_THROW(validate_sizes({128, 16, 3}));
    EXPECT_THROW(validate_sizes({1024, 16, 5}), ConfigError);
    EXPECT_THROW(validate_sizes({1000, 16, 6}), ConfigError);
    EXPECT_THROW(validate_sizes({1024, 0, 6}), ConfigError);
    EXPECT_THROW(config_from_json({{"pyramid", {{"high", 512}, {"low", 16}, {"steps", 6}}}}), ConfigError);
}

TEST(Config, DefaultsAndUnknownSections) {
    const auto c = config_from_json(nlohmann::json::object());
    EXPECT_EQ(c.pyramid.high, 1024);
    EXPECT_EQ(c.pyramid.low, 16);
    EXPECT_EQ(c.pyramid.steps, 6);
    EXPECT_EQ(c.cluster.n_representatives, 5);
    EXPECT_EQ(c.train.batch_size, 128);
    EXPECT_THROW(config_from_json({{"trian", {}}}), ConfigError);
    EXPECT_THROW(config_from_json({{"train", {{"batch_size", "big"}}}}), ConfigError);
    EXPECT_THROW(config_from_json({{"features", {{"mask_variant", 4}}}}), ConfigError);
}

TEST(Config, SeedPropagatesUnlessOverridden) {
    const auto c = config_from_json({{"seed", 7}, {"cluster", {{"seed", 9}}}});
    EXPECT_EQ(c.train.rng_seed, 7u);
    EXPECT_EQ(c.cluster.seed, 9u);
}

TEST(Config, LoadResolvesRelativePaths) {
    const auto dir = test::temp_dir("config_load");
    std::ofstream(dir / "c.json") << R"({"input": {"image": "slide.png"}, "out": "o"})";
    const auto c = load_config(dir / "c.json");
    EXPECT_EQ(c.resolve(c.image), fs::absolute(dir) / "slide.png");
    std::ofstream(dir / "bad.json") << "{ nope";
    EXPECT_THROW(load_config(dir / "bad.json"), ConfigError);
    EXPECT_THROW(load_config(dir / "missing.json"), ConfigError);
}

TEST(Config, HashIsStableAndSensitive) {
    const auto a = config_from_json({{"seed", 1}});
    EXPECT_EQ(config_hash(a), config_hash(config_from_json({{"seed", 1}})));
    EXPECT_NE(config_hash(a), config_hash(config_from_json({{"seed", 2}})));
    EXPECT_EQ(config_hash(a).size(), 16u);
    EXPECT_EQ(config_hash(a), config_hash(config_from_json({{"seed", 1}, {"out", "elsewhere"}})));
    EXPECT_EQ(config_from_json(to_json(a)).seed, a.seed);
    EXPECT_EQ(to_json(config_from_json(to_json(a))), to_json(a));
}

TEST(Latents, RoundTrip) {
    const auto dir = test::temp_dir("latents");
    LatentSet s;
    s.addresses = {{3, 0, 0, 16}, {3, 1, 0, 16}};
    s.latents = {{0.1, 0.2, 1.0 / 3.0}, {4.0, 5.0, 6.0}};
    save_latents(dir / "l.json", s);
    const auto back = load_latents(dir / "l.json");
    EXPECT_EQ(back.addresses, s.addresses);
    EXPECT_EQ(back.latents, s.latents);
}

TEST(Pipeline, MissingInputIsAConfigError) {
    EXPECT_THROW(run_full(config_from_json({{"out", (test::temp_dir("noinput") / "o").string()}})), ConfigError);
}

TEST(Pipeline, StageChainMatchesRunFull) {
    const auto dir = small_demo("chain");
    const auto cfg = load_config(dir / "config.json");
    const auto report = run_full(cfg);
    EXPECT_TRUE(fs::exists(report / "index.html"));
    const fs::path run = dir / "run", man = dir / "manual";
    const std::string c = "--config " + (dir / "config.json").string();

    ASSERT_EQ(cli("pyramid " + c + " --out " + man.string()), 0);
    ASSERT_EQ(cli("filter " + c + " --patches " + (man / "patches").string() + " --out " + (man / "filter").string()), 0);
    ASSERT_EQ(cli("train " + c + " --patches " + (man / "filter").string() + " --out " + (man / "model" / "ae.ckpt").string()), 0);
    ASSERT_EQ(cli("embed --model " + (man / "model" / "ae.ckpt").string() + " --patches " + (man / "filter").string() +
                  " --out " + (man / "latents.json").string()), 0);
    ASSERT_EQ(cli("cluster " + c + " --latents " + (man / "latents.json").string() + " --out " +
                  (man / "cluster" / "clusters.json").string()), 0);
    for (const char* f : {"patches/manifest.json", "filter/stats.json", "filter/kept/manifest.json", "model/ae.ckpt",
                          "model/ae.ckpt.json", "latents.json", "cluster/clusters.json", "cluster/representatives.json",
                          "cluster/dendrogram.json"})
        EXPECT_EQ(slurp(run / f), slurp(man / f)) << f;

    ASSERT_EQ(cli("features " + c + " --patches " + (run / "segment" / "patches").string() + " --masks " +
                  (run / "segment").string() + " --out " + (man / "features.csv").string()), 0);
    const auto a = features::read_csv(run / "features.csv"), b = features::read_csv(man / "features.csv");
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].address, b[i].address);
        EXPECT_EQ(a[i].values(), b[i].values());
    }

    const auto high = pyramid::load_patchset(run / "segment" / "patches");
    ASSERT_FALSE(high.empty());
    const auto stem = fs::path(pyramid::patch_file_name(high.front().address)).stem().string();
    ASSERT_EQ(cli("segment " + c + " --in " + (run / "segment" / stem / "patch.png").string() + " --out-dir " +
                  (man / "seg").string()), 0);
    for (const char* f : {"mask_1.png", "mask_2.png", "mask_3.png", "segment.json"})
        EXPECT_EQ(slurp(run / "segment" / stem / f), slurp(man / "seg" / f)) << f;

    ASSERT_EQ(cli("report --bundle " + (report / "bundle.json").string() + " --root " + run.string() + " --out " +
                  (man / "report").string()), 0);
    for (const char* f : {"bundle.json", "comparison.csv", "distribution.json"})
        EXPECT_EQ(slurp(report / f), slurp(man / "report" / f)) << f;
}

TEST(Cli, ExitCodes) {
    const auto dir = test::temp_dir("cli_codes");
    std::ofstream(dir / "bad.json") << R"({"pyramid": {"high": 1000, "low": 16, "steps": 6}})";
    EXPECT_EQ(cli("run --config " + (dir / "bad.json").string()), 2);
    std::ofstream(dir / "nofile.json") << R"({"input": {"image": "absent.png"}, "out": "o"})";
    EXPECT_EQ(cli("run --config " + (dir / "nofile.json").string()), 3);
    EXPECT_EQ(cli("segment --in " + (dir / "absent.png").string() + " --out-dir " + (dir / "s").string()), 3);
}
