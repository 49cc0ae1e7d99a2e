/*
 * Copyright 2026 The ecunlearn Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <sys/wait.h>

#include "ecu/binary_io.hpp"
#include "ecu/config.hpp"
#include "ecu/error.hpp"
#include "ecu/pipeline.hpp"

using namespace ecu;
namespace fs = std::filesystem;

namespace {

std::string config_path(const char* name) { return std::string(ECU_SOURCE_DIR) + "/configs/" + name; }

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) : path(fs::temp_directory_path() / ("ecu_" + tag)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

int cli(const std::string& args, const fs::path& log) {
    const std::string cmd = std::string(ECU_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("shipped configs parse") {
    CHECK_NOTHROW(ExperimentConfig::load(config_path("blobs.cfg")));
    CHECK_NOTHROW(ExperimentConfig::load(config_path("smoke.cfg")));
    CHECK(ExperimentConfig::load(config_path("acceptance.cfg")).seeds.size() == 3);
}

TEST_CASE("unknown keys and bad values report their path and line") {
    try {
        ExperimentConfig::parse("[unlearn]\nlrr = 0.1\n", "bad.cfg");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.path() == "unlearn.lrr");
        CHECK(std::string(e.what()).find("bad.cfg:2") != std::string::npos);
    }
    CHECK_THROWS_AS(ExperimentConfig::parse("[arch]\nnum_stages = four\n"), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::parse("[nope]\n"), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::parse("[unlearn]\nlr = 1\nlr = 2\n"), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::parse("[unlearn]\nlayer_weights = 1, 2\n"), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::parse("[run]\nmethods = ec, dance\n"), ConfigError);
}

TEST_CASE("config hash ignores run bookkeeping and tracks hyperparameters") {
    const ExperimentConfig base = ExperimentConfig::parse("[unlearn]\nlr = 0.001\n");
    CHECK(base.hash() == ExperimentConfig::parse("[unlearn]\nlr = 0.001\n").hash());
    CHECK(base.hash() == ExperimentConfig::parse("# comment\n[unlearn]\nlr=0.001\n[run]\nseeds = 4, 5\n").hash());
    CHECK(base.hash() == ExperimentConfig::parse("[unlearn]\nlr = 0.001\nvariant = no-ec-modules\n").hash());
    CHECK(base.hash() != ExperimentConfig::parse("[unlearn]\nlr = 0.002\n").hash());
    CHECK(base.hash().size() == 16);
    CHECK(base.canonical() == ExperimentConfig::parse(base.canonical()).canonical());
}

TEST_CASE("a missing dataset file names the path") {
    const std::string text = "[data]\nsource = file\ntrain_file = /nonexistent/train.ulab\ntest_file = /nonexistent/test.ulab\n";
    const ExperimentConfig c = ExperimentConfig::parse(text);
    CHECK_THROWS_WITH(prepare_data(c, 0), doctest::Contains("/nonexistent/train.ulab"));
}

TEST_CASE("CLI exit codes and artifacts") {
    TempDir dir("cli_test");
    const std::string cfg = config_path("smoke.cfg");
    const std::string out = (dir.path / "out").string();
    const fs::path log = dir.path / "log.txt";

    CHECK(cli("unlearn --config " + cfg + " --out " + out, log) == 2);
    CHECK(io::read_file(log.string()).find("train-original") != std::string::npos);
    CHECK(cli("unlearn --config " + cfg + " --out " + out + " --method dance", log) == 1);
    CHECK(cli("train-original --config /nonexistent.cfg", log) == 1);

    REQUIRE(cli("train-original --config " + cfg + " --out " + out, log) == 0);
    const std::string hash = ExperimentConfig::load(cfg).hash();
    const RunPaths p = run_paths(out, hash, "original", 0);
    CHECK(fs::exists(p.checkpoint));
    const std::string header = artifact_header(hash, 0);
    CHECK(io::read_file(p.train_log).rfind(header, 0) == 0);

    CHECK(cli("hmean-replay", log) == 0);
    CHECK(io::read_file(log.string()).find("differs") != std::string::npos);
}
