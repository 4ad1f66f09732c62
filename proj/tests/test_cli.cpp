#include <doctest.h>

#include <cstdlib>
#include <filesystem>

#include "fnaf/cli.hpp"
#include "fnaf/grid_io.hpp"

using namespace fnaf;
namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "fnaf_test_cli";

const char* kConfig = R"({
  "seed": 3,
  "data": {"size": 64, "n_train": 4, "n_val": 3, "lesion_rate": 1.0},
  "train": {"epochs": 1, "batch_size": 2},
  "robust": {"epochs": 1, "n_candidates": 1},
  "attack": {"n_candidates": 3, "gamma": 0.05},
  "ip": {"n_injections": 20}
})";

int fnafctl(const std::string& args) {
    const std::string cmd = std::string(FNAFCTL_PATH) + " --jobs 1 " + args + " > " + (kRoot / "log.txt").string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string config_args(const fs::path& config, const fs::path& out) {
    return "--config " + config.string() + " --out " + out.string();
}

} // namespace

TEST_SUITE("cli") {

TEST_CASE("run directories are keyed by the canonical config") {
    const auto a = cli::parse_config(kConfig, std::nullopt, std::nullopt);
    const auto b = cli::parse_config(kConfig, std::nullopt, std::string("elsewhere"));
    CHECK(a.run_dir().filename() == b.run_dir().filename());
    const auto c = cli::parse_config(kConfig, 4, std::nullopt);
    CHECK(a.run_dir().filename() != c.run_dir().filename());
    CHECK(cli::exit_code(ErrorKind::Config) == 1);
    CHECK(cli::exit_code(ErrorKind::Divergence) == 3);
    CHECK(cli::exit_code(ErrorKind::MissingData) == 2);
}

TEST_CASE("end-to-end commands and exit codes") {
    fs::remove_all(kRoot);
    fs::create_directories(kRoot);
    const auto config = kRoot / "run.json";
    io::write_text(config, kConfig);
    const auto bad = kRoot / "bad.json";
    io::write_text(bad, R"({"seed": 1, "data": {"size": 64, "n_train": 2, "n_val": 2}, "train": {"batch_size": "four"}})");

    CHECK(fnafctl(config_args(kRoot / "missing.json", kRoot) + " gen-data") == 1);
    CHECK(fnafctl(config_args(bad, kRoot / "bad") + " gen-data") == 0);
    CHECK(fnafctl(config_args(bad, kRoot / "bad") + " train") == 1);
    CHECK(fnafctl(config_args(config, kRoot / "a") + " attack") == 2);

    const auto run_a = cli::load_config(config, std::nullopt, (kRoot / "a").string()).run_dir();
    const auto run_b = cli::load_config(config, std::nullopt, (kRoot / "b").string()).run_dir();
    for (const auto& out : {kRoot / "a", kRoot / "b"}) {
        REQUIRE(fnafctl(config_args(config, out) + " gen-data") == 0);
        REQUIRE(fnafctl(config_args(config, out) + " train") == 0);
        REQUIRE(fnafctl(config_args(config, out) + " attack") == 0);
        REQUIRE(fnafctl(config_args(config, out) + " --mode fnaf robust-train") == 0);
    }
    const auto attack = nlohmann::json::parse(io::read_text(run_a / "attack" / "standard_af4.json"));
    CHECK(attack.contains("attack_rate"));
    CHECK(attack["samples"].size() == 3);
    CHECK(io::read_text(run_a / "attack" / "standard_af4.json") == io::read_text(run_b / "attack" / "standard_af4.json"));
    CHECK(io::read_text(run_a / "models" / "fnaf_af4.ckpt") == io::read_text(run_b / "models" / "fnaf_af4.ckpt"));
    CHECK(fs::exists(run_a / "models" / "fnaf_af4_history.csv"));

    CHECK(fnafctl(config_args(config, kRoot / "a") + " --mode fnaf eval-global") == 0);
    CHECK(fnafctl(config_args(config, kRoot / "a") + " ip-verify") == 0);
    CHECK(fnafctl(config_args(config, kRoot / "a") + " eval-regions") == 0);
    CHECK(fnafctl(config_args(config, kRoot / "a") + " report") == 0);
    CHECK(fs::exists(run_a / "report" / "report.md"));
    CHECK(fnafctl(config_args(config, kRoot / "a") + " --af 5 attack") == 1);
    fs::remove_all(kRoot);
}

TEST_CASE("calibrated threshold is shared across models") {
    const auto root = kRoot / "calib";
    fs::remove_all(kRoot);
    fs::create_directories(root);
    auto cfg = nlohmann::json::parse(kConfig);
    cfg["attack"] = {{"n_candidates", 3}, {"gamma_quantile", 0.5}};
    const auto config = root / "run.json";
    io::write_text(config, cfg.dump());
    const auto run = cli::load_config(config, std::nullopt, root.string()).run_dir();
    REQUIRE(fnafctl(config_args(config, root) + " gen-data") == 0);
    REQUIRE(fnafctl(config_args(config, root) + " train") == 0);
    REQUIRE(fnafctl(config_args(config, root) + " --mode fnaf robust-train") == 0);
    REQUIRE(fnafctl(config_args(config, root) + " attack") == 0);
    REQUIRE(fnafctl(config_args(config, root) + " --mode fnaf attack") == 0);
    const auto a = nlohmann::json::parse(io::read_text(run / "attack" / "standard_af4.json"));
    const auto b = nlohmann::json::parse(io::read_text(run / "attack" / "fnaf_af4.json"));
    CHECK(a["gamma"].get<double>() > 0.0);
    CHECK(a["gamma"] == b["gamma"]);

    cfg["attack"]["gamma_quantile"] = 1.5;
    io::write_text(config, cfg.dump());
    CHECK(fnafctl(config_args(config, root) + " gen-data") == 0);
    CHECK(fnafctl(config_args(config, root) + " train") == 0);
    CHECK(fnafctl(config_args(config, root) + " attack") == 1);
    fs::remove_all(kRoot);
}

} // TEST_SUITE
