#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "cli/commands.hpp"
#include "cli/run_config.hpp"

using namespace rlalign;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result rl(std::vector<std::string> args)
{
    args.insert(args.begin(), "rlalign");
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

fs::path scratch(const std::string& name)
{
    const auto dir = fs::temp_directory_path() / ("rlalign_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

} // namespace

TEST_CASE("help and unknown commands")
{
    CHECK(rl({"--help"}).code == 0);
    CHECK(rl({"train", "--help"}).code == 0);
    CHECK(rl({"frobnicate"}).code != 0);
    CHECK(rl({}).code != 0);
}

TEST_CASE("configuration keys")
{
    cli::RunConfig cfg;
    cli::apply_assignment(cfg, "agent.gamma=0.5");
    CHECK(cfg.agent.gamma == 0.5);
    cli::apply_assignment(cfg, "agent.variant=double");
    CHECK(cfg.agent.variant == Variant::Double);
    cli::apply_assignment(cfg, "translations_only=true");
    CHECK(cfg.env.translations_only);
    CHECK(cfg.pair.translations_only);
    CHECK(cfg.baseline.translations_only);
    CHECK_THROWS_AS(cli::apply_assignment(cfg, "agent.gama=0.5"), ConfigError);
    CHECK_THROWS_AS(cli::apply_assignment(cfg, "agent.batch_size=\"big\""), ConfigError);
    CHECK_THROWS_AS(cli::apply_config_text(cfg, "{\"nope\": 1}", "inline"), ConfigError);
    CHECK_THROWS_AS(cli::apply_preset(cfg, "huge"), ConfigError);

    cli::RunConfig a, b;
    cli::apply_preset(a, "desk");
    cli::apply_config_text(b, cli::dump_config(a), "dump");
    CHECK(cli::dump_config(a) == cli::dump_config(b));
    for (const auto& key : cli::config_keys()) CHECK(cli::dump_config(a).find('"' + key + '"') != std::string::npos);
}

TEST_CASE("invalid arguments exit with the configuration code")
{
    const auto dir = scratch("args");
    CHECK(rl({"gen-data", "--out", (dir / "d").string(), "--pairs", "2", "--range", "6"}).code == 2);
    CHECK(rl({"gen-data", "--out", (dir / "d").string(), "--pairs", "2", "--set", "bogus.key=1"}).code == 2);
    CHECK(rl({"train", "--data", (dir / "missing").string(), "--out", (dir / "c.bin").string(),
              "--variant", "foo"}).code == 2);
    CHECK(rl({"train", "--data", (dir / "missing").string(), "--out", (dir / "c.bin").string(),
              "--reward-form", "squared"}).code == 2);
    CHECK(rl({"train", "--data", (dir / "missing").string(), "--out", (dir / "c.bin").string()}).code == 3);
    CHECK(rl({"report", (dir / "x.jsonl").string(), "--out", (dir / "r").string()}).code == 2);
}

TEST_CASE("pipeline outputs are byte-identical across runs")
{
    auto pipeline = [](const fs::path& dir) {
        const std::string data = (dir / "data").string();
        REQUIRE(rl({"gen-data", "--out", data, "--pairs", "4", "--seed", "5"}).code == 0);
        REQUIRE(rl({"train", "--data", data, "--out", (dir / "ck.bin").string(), "--preset", "smoke",
                    "--workers", "1", "--no-timing", "--log", (dir / "log.jsonl").string()}).code == 0);
        const auto al = rl({"align", "--fixed", (dir / "data" / "pair_00000_fixed.img1").string(), "--moving",
                            (dir / "data" / "pair_00000_moving.img1").string(), "--ckpt",
                            (dir / "ck.bin").string(), "--out", (dir / "al.img1").string()});
        REQUIRE(al.code == 0);
        REQUIRE(rl({"evaluate", "--data", data, "--ckpt", (dir / "ck.bin").string(), "--out",
                    (dir / "ev.jsonl").string(), "--no-timing"}).code == 0);
        REQUIRE(rl({"baseline", "--data", data, "--out", (dir / "bl.jsonl").string(), "--no-timing",
                    "--starts", "1", "--max-evals", "40"}).code == 0);
        REQUIRE(rl({"report", (dir / "ev.jsonl").string(), (dir / "bl.jsonl").string(), "--out",
                    (dir / "cmp").string()}).code == 0);
        return al.out;
    };
    const auto a = scratch("det_a");
    const auto b = scratch("det_b");
    const std::string align_a = pipeline(a);
    const std::string align_b = pipeline(b);
    CHECK(align_a == align_b);
    CHECK(align_a.find("tx ") != std::string::npos);
    for (const char* f : {"data/manifest.jsonl", "data/pair_00003_moving.img1", "ck.bin", "log.jsonl", "al.img1",
                          "ev.jsonl", "ev.summary.csv", "bl.jsonl", "cmp.csv"}) {
        CAPTURE(f);
        REQUIRE(fs::exists(a / f));
        CHECK(slurp(a / f) == slurp(b / f));
    }
}
