// Config parsing, typed accessors, the derived phantom/toy configs, and the
// run manifest layout.
#include <catch2/catch_amalgamated.hpp>

#include <fstream>

#include "lesionuq/config.hpp"
#include "lesionuq/manifest.hpp"

#include "test_util.hpp"

using namespace lesionuq;

TEST_CASE("config parsing fundamentals") {
    const Config cfg = Config::parse("# a comment\n"
                                     "config_version = 1\n"
                                     "\n"
                                     "  name =  phantom run \n"
                                     "count=12 # trailing comment\n",
                                     "unit");
    CHECK(cfg.get_string("name", "") == "phantom run");
    CHECK(cfg.get_int("count", 0) == 12);
    CHECK(cfg.get_int("absent", 7) == 7);
    CHECK_NOTHROW(cfg.reject_unknown_keys());
}

TEST_CASE("config rejects malformed input") {
    CHECK_THROWS_AS(Config::parse("no version here = 1\n"), format_error);
    CHECK_THROWS_AS(Config::parse("config_version = 2\n"), format_error);
    CHECK_THROWS_AS(Config::parse("config_version = 1\njust words\n"), format_error);
    CHECK_THROWS_AS(Config::parse("config_version = 1\n= orphan value\n"), format_error);
    CHECK_THROWS_AS(Config::parse("config_version = 1\nk = 1\nk = 2\n"), format_error);

    const Config cfg = Config::parse("config_version = 1\nseed = banana\nflag = maybe\n");
    CHECK_THROWS_AS(cfg.get_int("seed", 0), format_error);
    CHECK_THROWS_AS(cfg.get_u64("seed", 0), format_error);
    CHECK_THROWS_AS(cfg.get_double("seed", 0.0), format_error);
    CHECK_THROWS_AS(cfg.get_bool("flag", false), format_error);
    CHECK_THROWS_AS(cfg.get_doubles("seed", {}), format_error);
}

TEST_CASE("unknown keys are rejected only when untouched") {
    const Config cfg = Config::parse("config_version = 1\nseed = 3\nmystery = 9\n");
    (void)cfg.get_u64("seed", 0);
    try {
        cfg.reject_unknown_keys();
        FAIL("expected argument_error");
    } catch (const argument_error& e) {
        CHECK(std::string(e.what()).find("mystery") != std::string::npos);
    }
    (void)cfg.get_int("mystery", 0);
    CHECK_NOTHROW(cfg.reject_unknown_keys());
}

TEST_CASE("typed accessors parse values and lists") {
    const Config cfg = Config::parse("config_version = 1\n"
                                     "ratio = 0.25\n"
                                     "big = 18446744073709551615\n"
                                     "yes = true\n"
                                     "no = 0\n"
                                     "grid = 0.1 0.5   0.9\n");
    CHECK(cfg.get_double("ratio", 0.0) == 0.25);
    CHECK(cfg.get_u64("big", 0) == 18446744073709551615ULL);
    CHECK(cfg.get_bool("yes", false));
    CHECK_FALSE(cfg.get_bool("no", true));
    CHECK(cfg.get_doubles("grid", {}) == std::vector<double>{0.1, 0.5, 0.9});
    CHECK(cfg.get_doubles("absent", {1.0}) == std::vector<double>{1.0});
}

TEST_CASE("config loads from disk and reports missing files") {
    testutil::TempDir tmp("config_io");
    const auto path = tmp.path() / "run.cfg";
    {
        std::ofstream out(path);
        out << "config_version = 1\nseed = 99\n";
    }
    const Config cfg = Config::load(path);
    CHECK(cfg.get_u64("seed", 0) == 99);

    CHECK_THROWS_AS(Config::load(tmp.path() / "nothing.cfg"), io_error);
}

TEST_CASE("phantom config: defaults survive an empty config") {
    const Config cfg = Config::parse("config_version = 1\n");
    const PhantomConfig p = phantom_config_from(cfg);
    const PhantomConfig d;
    CHECK(p.dims == d.dims);
    CHECK(p.t_samples == d.t_samples);
    CHECK(p.with_variance == d.with_variance);
    CHECK(p.seed == d.seed);
    CHECK(p.small_fraction == d.small_fraction);
    CHECK(p.medium_count.lo == d.medium_count.lo);
    CHECK(p.medium_count.hi == d.medium_count.hi);
    CHECK(p.small.miss_rate == d.small.miss_rate);
    CHECK(p.large.boundary_jitter == d.large.boundary_jitter);
    CHECK_NOTHROW(cfg.reject_unknown_keys());
}

TEST_CASE("phantom config: explicit keys override") {
    const Config cfg = Config::parse("config_version = 1\n"
                                     "dims = 32 24 12\n"
                                     "t_samples = 6\n"
                                     "with_variance = false\n"
                                     "seed = 1234\n"
                                     "small_fraction = 0.5\n"
                                     "small_count = 7\n"
                                     "medium_count = 2 5\n"
                                     "large_count = 1 1\n"
                                     "small_noise = 0.2 1.5 0.1 0.4\n");
    const PhantomConfig p = phantom_config_from(cfg);
    CHECK(p.dims == Dims{32, 24, 12});
    CHECK(p.t_samples == 6);
    CHECK_FALSE(p.with_variance);
    CHECK(p.seed == 1234);
    CHECK(p.small_fraction == 0.5);
    CHECK(p.small_count.lo == 7);
    CHECK(p.small_count.hi == 7);
    CHECK(p.medium_count.lo == 2);
    CHECK(p.medium_count.hi == 5);
    CHECK(p.small.miss_rate == 0.2);
    CHECK(p.small.fp_rate == 1.5);
    CHECK(p.small.boundary_jitter == 0.1);
    CHECK(p.small.sample_disagreement == 0.4);
    CHECK_NOTHROW(cfg.reject_unknown_keys());
}

TEST_CASE("phantom config: arity and validation errors") {
    CHECK_THROWS_AS(
        phantom_config_from(Config::parse("config_version = 1\ndims = 32 32\n")),
        format_error);
    CHECK_THROWS_AS(
        phantom_config_from(Config::parse("config_version = 1\nmedium_count = 1 2 3\n")),
        format_error);
    CHECK_THROWS_AS(
        phantom_config_from(Config::parse("config_version = 1\nsmall_noise = 0.1 0.2\n")),
        format_error);
    CHECK_THROWS_AS(
        phantom_config_from(Config::parse("config_version = 1\ndims = 4 48 16\n")),
        validation_error);
    CHECK_THROWS_AS(
        phantom_config_from(Config::parse("config_version = 1\nmedium_count = 4 3\n")),
        validation_error);
}

TEST_CASE("toy config mapping") {
    const Config empty = Config::parse("config_version = 1\n");
    const ToyRunConfig d = toy_config_from(empty);
    CHECK(d.grid_n == 16);
    CHECK(d.patch_dim == 7);
    CHECK(d.train.steps == 2000);
    CHECK(d.train.t_train == 20);

    const Config cfg = Config::parse("config_version = 1\n"
                                     "grid_n = 10\n"
                                     "patch_dim = 5\n"
                                     "flip_rate = 0.4\n"
                                     "hidden_dim = 12\n"
                                     "dropout_p = 0.25\n"
                                     "data_seed = 21\n"
                                     "t_train = 6\n"
                                     "learning_rate = 0.05\n"
                                     "steps = 40\n"
                                     "class_weight = 2.5\n"
                                     "seed = 8\n"
                                     "t_predict = 12\n"
                                     "predict_seed = 13\n");
    const ToyRunConfig t = toy_config_from(cfg);
    CHECK(t.grid_n == 10);
    CHECK(t.patch_dim == 5);
    CHECK(t.flip_rate == 0.4);
    CHECK(t.hidden_dim == 12);
    CHECK(t.dropout_p == 0.25);
    CHECK(t.data_seed == 21);
    CHECK(t.train.t_train == 6);
    CHECK(t.train.learning_rate == 0.05);
    CHECK(t.train.steps == 40);
    CHECK(t.train.class_weight == 2.5);
    CHECK(t.train.seed == 8);
    CHECK(t.t_predict == 12);
    CHECK(t.predict_seed == 13);
    CHECK_NOTHROW(cfg.reject_unknown_keys());

    const nlohmann::json j = to_json(t);
    CHECK(j["grid_n"] == 10);
    CHECK(j["learning_rate"] == 0.05);
    CHECK(j["predict_seed"] == 13);
}

TEST_CASE("run manifest serialises every reproducibility field") {
    RunManifest m;
    m.subcommand = "generate";
    m.argv = {"lesionuq", "generate", "--out", "scenes"};
    m.config["seed"] = 42;
    m.inputs = {"run.cfg"};
    m.outputs = {"scenes/gt.uvol"};
    m.wall_time_seconds = 1.25;

    const nlohmann::json j = m.to_json();
    CHECK(j["tool"] == "lesionuq");
    CHECK(j["version"] == std::string(kVersion));
    CHECK(j["subcommand"] == "generate");
    CHECK(j["argv"].size() == 4);
    CHECK(j["config"]["seed"] == 42);
    CHECK(j["inputs"] == nlohmann::json::array({"run.cfg"}));
    CHECK(j["outputs"] == nlohmann::json::array({"scenes/gt.uvol"}));
    CHECK(j["wall_time_seconds"] == 1.25);

    testutil::TempDir tmp("manifest_io");
    const auto path = tmp.path() / "manifest.json";
    write_manifest(m, path);
    const std::string text = testutil::slurp(path);
    REQUIRE_FALSE(text.empty());
    CHECK(text.back() == '\n');
    CHECK(nlohmann::json::parse(text) == j);

    // Atomic write leaves no temporary files behind.
    std::size_t entries = 0;
    for (const auto& e : std::filesystem::directory_iterator(tmp.path())) {
        (void)e;
        ++entries;
    }
    CHECK(entries == 1);
}
