#include <doctest.h>

#include <algorithm>
#include <filesystem>

#include "ldc/config.hpp"
#include "ldc/image_io.hpp"

using namespace ldc;

TEST_SUITE("config") {
    TEST_CASE("parsing rules") {
        const KeyValueConfig kv = KeyValueConfig::parse(
            "# comment\n\n  seed = 9  \nlr=0.01 # trailing\nlr = 0.02\nnet.use_ricd = off\niaicd.mode = literal\n");
        CHECK(kv.get_uint("seed", 0) == 9);
        CHECK(kv.get_double("lr", 0) == 0.02);
        CHECK_FALSE(kv.get_bool("net.use_ricd", true));
        CHECK(kv.get_string("iaicd.mode", "") == "literal");
        CHECK(kv.get_int("epochs", 17) == 17);
        CHECK_THROWS_AS(KeyValueConfig::parse("no equals sign\n"), ConfigError);
        CHECK_THROWS_AS(KeyValueConfig::parse("lr = fast\n").get_double("lr", 0), ConfigError);
        CHECK_THROWS_AS(KeyValueConfig::parse("epochs = 2.5\n").get_int("epochs", 0), ConfigError);
        CHECK_THROWS_AS(KeyValueConfig::parse("flag = maybe\n").get_bool("flag", false), ConfigError);
        CHECK_THROWS_AS(KeyValueConfig::load("/nonexistent/run.cfg"), IoError);
    }

    TEST_CASE("unknown keys are rejected") {
        const auto& known = known_config_keys();
        for (const char* k : {"seed", "epochs", "batch_size", "lr", "alpha", "beta", "ricd.k1", "ricd.k2", "ricd.steps",
                              "iaicd.mode", "data.manifest", "out.dir"}) {
            CHECK(std::find(known.begin(), known.end(), k) != known.end());
        }
        KeyValueConfig kv = KeyValueConfig::parse("seed = 1\n");
        CHECK_NOTHROW(kv.require_known(known));
        kv.set("learning_rate", "0.1");
        CHECK_THROWS_AS(kv.require_known(known), ConfigError);
    }

    TEST_CASE("typed views") {
        const KeyValueConfig kv = KeyValueConfig::parse(
            "seed = 4\nepochs = 3\nbatch_size = 2\nlr = 5e-4\nalpha = 0.2\nbeta = 0.1\nricd.k1 = 7\nricd.k2 = 3\n"
            "ricd.steps = 2\niaicd.mode = literal\nnet.use_iaicd = false\ndata.manifest = d/manifest.json\n"
            "out.dir = runs/a\nscene.height = 32\nscene.width = 48\n");
        const TrainConfig t = train_config_from(kv);
        CHECK(t.seed == 4);
        CHECK(t.epochs == 3);
        CHECK(t.batch_size == 2);
        CHECK(t.lr == 5e-4);
        CHECK(t.weights.alpha == 0.2);
        CHECK(t.weights.beta == 0.1);
        CHECK(t.net.ricd.k_large == 7);
        CHECK(t.net.ricd.k_small == 3);
        CHECK(t.net.ricd.steps == 2);
        CHECK(t.net.center_mode == CenterMode::literal);
        CHECK_FALSE(t.net.use_iaicd);
        CHECK(t.manifest == "d/manifest.json");
        CHECK(t.out_dir == "runs/a");
        const SceneConfig s = scene_config_from(kv);
        CHECK(s.seed == 4);
        CHECK(s.width == 48);
        const TrainConfig defaults = train_config_from(KeyValueConfig{});
        CHECK(defaults.lr == 1e-3);
        CHECK(defaults.weights.alpha == 0.15);
        CHECK(defaults.weights.beta == 0.3);
        CHECK_THROWS_AS(train_config_from(KeyValueConfig::parse("ricd.k1 = 3\nricd.k2 = 5\n")), ConfigError);
        CHECK_THROWS_AS(train_config_from(KeyValueConfig::parse("epochs = 0\n")), ConfigError);
        CHECK_THROWS_AS(train_config_from(KeyValueConfig::parse("alpha = -1\n")), ConfigError);
        CHECK_THROWS_AS(net_config_from(KeyValueConfig::parse("iaicd.mode = other\n")), ConfigError);
    }

    TEST_CASE("files load like text") {
        const auto path = std::filesystem::temp_directory_path() / "ldc_unit_config.cfg";
        write_file(path.string(), "epochs = 4\n");
        CHECK(KeyValueConfig::load(path.string()).get_int("epochs", 0) == 4);
        std::filesystem::remove(path);
    }
}
