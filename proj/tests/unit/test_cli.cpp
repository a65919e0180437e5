#include <doctest.h>

#include <fstream>
#include <sstream>

#include "levelnavi/bench_runner.hpp"
#include "levelnavi/cli.hpp"
#include "unit/support.hpp"

using namespace levelnavi;
using namespace testsupport;

namespace {

struct Result {
    int code;
    std::string out, err;
};

Result cli(std::vector<std::string> args, std::map<std::string, std::string> env = {}) {
    std::ostringstream out, err;
    int code = run_cli(args, out, err, [env](const std::string& k) -> std::optional<std::string> {
        auto it = env.find(k);
        if (it == env.end()) return std::nullopt;
        return it->second;
    });
    return {code, out.str(), err.str()};
}

bool has(const std::string& hay, const std::string& needle) { return hay.find(needle) != std::string::npos; }

std::size_t line_count(const fs::path& p) {
    std::ifstream in(p);
    std::size_t n = 0;
    for (std::string line; std::getline(in, line);) n += !line.empty();
    return n;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("ask over the game awards fixture") {
    Result r = cli({"--fixtures", fixture("ga").string(), "--set", "agent.max_subquestions=8", "--no-timestamps", "ask",
                    "2023年TGA年度游戏提名的作品中，哪一款最早发售？"});
    CHECK(r.code == kExitOk);
    CHECK(has(r.out, "生化危机4"));
    CHECK(has(r.out, "status: completed"));
    CHECK(has(r.out, "searchers: 7"));
    CHECK_FALSE(has(r.out, "elapsed"));
}

TEST_CASE("ask writes a trace file") {
    TempDir dir;
    Result r = cli({"--fixtures", fixture("ga").string(), "ask", "2023年TGA年度游戏提名的作品中，哪一款最早发售？",
                    "--trace", (dir / "t.json").string()});
    CHECK(r.code == kExitOk);
    std::ifstream in(dir / "t.json");
    json j = json::parse(in);
    CHECK(task_trace_from_json(j).status == TaskStatus::completed);
}

TEST_CASE("ask with budget exhaustion exits 3") {
    Result r = cli({"--fixtures", fixture("budget").string(), "--max-iterations", "3", "ask", "宇宙中到底有多少颗恒星？"});
    CHECK(r.code == kExitTask);
    CHECK(has(r.out, "status: budget_exceeded"));
    CHECK(has(r.out, "iterations: 3"));
}

TEST_CASE("live mode without an API key exits 2 naming the variable") {
    Result r = cli({"--mode", "live", "ask", "你好"});
    CHECK(r.code == kExitConfig);
    CHECK(has(r.err, "LEVELNAVI_LLM_API_KEY"));
}

TEST_CASE("fixtures are replay only") {
    Result r = cli({"--fixtures", fixture("ga").string(), "--mode", "record", "ask", "x"});
    CHECK(r.code == kExitConfig);
}

TEST_CASE("usage errors exit 2") {
    CHECK(cli({}).code == kExitConfig);
    CHECK(cli({"bench"}).code == kExitConfig);
    CHECK(cli({"--set", "no-equals", "config", "show"}).code == kExitConfig);
    CHECK(cli({"--set", "no.such.key=1", "config", "show"}).code == kExitConfig);
    CHECK(cli({"--fewshot", "2", "--fixtures", fixture("ga").string(), "ask", "x"}).code == kExitConfig);
    CHECK(cli({"--help"}).code == kExitOk);
}

TEST_CASE("bench run, eval, report, compare") {
    TempDir dir;
    std::string runs = (dir / "runs").string();
    std::vector<std::string> common{"--fixtures", fixture("mini").string(), "--no-timestamps", "--runs-dir", runs};

    auto with = [&](std::vector<std::string> extra) {
        std::vector<std::string> a = common;
        a.insert(a.end(), extra.begin(), extra.end());
        return cli(a);
    };

    Result run = with({"--fewshot", "3", "--mode", "replay", "bench", "run", "--dataset",
                       fixture("web24-mini.jsonl").string(), "--run-dir", (dir / "a").string()});
    REQUIRE(run.code == kExitOk);
    CHECK(has(run.out, "10 tasks, 10 completed"));
    CHECK(line_count(dir / "a" / "traces.jsonl") == 10);
    CHECK(fs::exists(dir / "a" / "config.snapshot"));

    Result run_b = with({"--concurrency", "1", "bench", "run", "--dataset", fixture("web24-mini.jsonl").string()});
    REQUIRE(run_b.code == kExitOk);
    // default location: <runs-dir>/<run id>
    fs::path b_dir;
    for (const auto& e : fs::directory_iterator(dir / "runs")) b_dir = e.path();
    REQUIRE_FALSE(b_dir.empty());
    CHECK(has(b_dir.filename().string(), "run-"));

    Result ev = with({"bench", "eval", "--run", (dir / "a").string()});
    REQUIRE(ev.code == kExitOk);
    CHECK(has(ev.out, "| Run | S_final |"));
    REQUIRE(with({"bench", "eval", "--run", b_dir.string()}).code == kExitOk);

    Result rep = cli({"bench", "report", "--runs", (dir / "a").string() + "," + b_dir.string()});
    REQUIRE(rep.code == kExitOk);
    CHECK(has(rep.out, "| Run | S_final | S_co | S_rele | S_simi | S_c | Pass rate |"));
    std::size_t rows = 0;
    std::istringstream in(rep.out);
    for (std::string line; std::getline(in, line);) rows += line.rfind("| ", 0) == 0;
    CHECK(rows == 3);  // header + two runs

    Result cmp = cli({"bench", "compare", (dir / "a").string(), (dir / "a").string()});
    CHECK(cmp.code == kExitOk);
    CHECK(has(cmp.out, "Status transitions: 0"));
}

TEST_CASE("bench eval on a directory without traces exits 4") {
    TempDir dir;
    Result r = cli({"--fixtures", fixture("mini").string(), "bench", "eval", "--run", dir.path().string()});
    CHECK(r.code == kExitDataset);
    CHECK(cli({"bench", "report", "--runs", (dir / "nope").string()}).code == kExitDataset);
}

TEST_CASE("bench run on an invalid dataset exits 4") {
    TempDir dir;
    Result r = cli({"--fixtures", fixture("mini").string(), "--runs-dir", dir.path().string(), "bench", "run",
                    "--dataset", fixture("invalid.jsonl").string()});
    CHECK(r.code == kExitDataset);
}

TEST_CASE("dataset commands") {
    Result ok = cli({"dataset", "validate", fixture("web24-mini.jsonl").string()});
    CHECK(ok.code == kExitOk);
    CHECK(ok.out == "OK (10 records)\n");

    Result bad = cli({"dataset", "validate", fixture("invalid.jsonl").string()});
    CHECK(bad.code == kExitDataset);
    CHECK(has(bad.out, "line 2"));
    CHECK(has(bad.out, "NewsWithoutUrl"));

    Result stats = cli({"dataset", "stats", fixture("web24-mini.jsonl").string()});
    CHECK(stats.code == kExitOk);
    CHECK(has(stats.out, "10"));
}

TEST_CASE("config precedence and masking") {
    TempDir dir;
    {
        std::ofstream f(dir / "c.json");
        f << R"({"agent": {"max_iterations": 7, "fewshot": "one"}, "llm.api_key": "sk-file-secret"})";
    }
    Result r = cli({"--config", (dir / "c.json").string(), "--fewshot", "3", "config", "show"},
                   {{"LEVELNAVI_AGENT_MAX_ITERATIONS", "9"}});
    REQUIRE(r.code == kExitOk);
    CHECK(has(r.out, "agent.max_iterations = 9"));
    CHECK(has(r.out, "env:LEVELNAVI_AGENT_MAX_ITERATIONS"));
    CHECK(has(r.out, "agent.fewshot = 3"));
    CHECK_FALSE(has(r.out, "sk-file-secret"));

    CHECK(CliConfig::env_name("llm.api_key") == "LEVELNAVI_LLM_API_KEY");
    CliConfig c;
    c.set("llm.api_key", "secret", "flag");
    CHECK_FALSE(has(c.snapshot().dump(), "\"secret\""));
    CHECK_THROWS_AS(c.set("bogus", "1", "flag"), ConfigError);

    {
        std::ofstream f(dir / "bad.json");
        f << R"({"unknown": {"key": 1}})";
    }
    CHECK(cli({"--config", (dir / "bad.json").string(), "config", "show"}).code == kExitConfig);
}

}
