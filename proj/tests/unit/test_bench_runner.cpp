#include <doctest.h>

#include <atomic>
#include <cmath>
#include <fstream>
#include <set>
#include <thread>

#include "levelnavi/bench_runner.hpp"
#include "unit/support.hpp"

using namespace levelnavi;
using namespace testsupport;

namespace {

std::vector<QAPair> mini() { return load_dataset(fixture("web24-mini.jsonl")); }

// Completes every task with the gold answer; searcher_count is derived from the id.
TaskTrace echo_gold(const QAPair& q) {
    TaskTrace t;
    t.question = q.question;
    t.status = TaskStatus::completed;
    t.final_response = q.answer;
    t.searcher_count = q.id.back() == '1' ? 1 : 2;
    t.function_call_count = 1;
    return t;
}

std::string dump_traces(const RunRecord& r) {
    std::string out;
    for (std::size_t i = 0; i < r.ids.size(); ++i) out += r.ids[i] + to_json(r.traces[i]).dump() + "\n";
    return out;
}

std::vector<ScriptedChatProvider::Entry> judge_script(const std::vector<QAPair>& ds, const std::map<std::string, int>& raw) {
    std::vector<ScriptedChatProvider::Entry> e;
    for (const auto& q : ds) {
        auto it = raw.find(q.id);
        int score = it == raw.end() ? 10 : it->second;
        e.push_back(text_reply(json{{"score", score}}.dump(), "问题：" + q.question + "\n标准答案"));
    }
    return e;
}

std::vector<ScriptedChatProvider::Entry> generator_script(const std::vector<QAPair>& ds) {
    std::vector<ScriptedChatProvider::Entry> e;
    for (const auto& q : ds)
        e.push_back(text_reply(json{{"questions", json::array({q.question})}}.dump(), "回答内容：" + q.answer + "\n"));
    return e;
}

}  // namespace

TEST_SUITE("bench_runner") {

TEST_CASE("run id") {
    json cfg{{"a", 1}};
    std::string id = make_run_id(cfg, "20241201T000000Z");
    CHECK(id.rfind("20241201T000000Z-", 0) == 0);
    CHECK(id.size() == std::string("20241201T000000Z-").size() + 12);
    CHECK(make_run_id(cfg, "run") == make_run_id(cfg, "run"));
    CHECK(make_run_id(cfg, "run") != make_run_id(json{{"a", 2}}, "run"));
}

TEST_CASE("traces come back in dataset order") {
    auto ds = mini();
    RunOptions o;
    o.concurrency = 4;
    o.timestamps = false;
    RunRecord r = run_benchmark(ds, [](const QAPair& q) {
        // later ids finish first
        std::this_thread::sleep_for(std::chrono::milliseconds(q.id[0] == 'f' ? 20 : 1));
        return echo_gold(q);
    }, o);
    REQUIRE(r.traces.size() == 10);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        CHECK(r.ids[i] == ds[i].id);
        CHECK(r.traces[i].question == ds[i].question);
    }
    CHECK(std::set<std::string>(r.ids.begin(), r.ids.end()).size() == 10);
    CHECK(r.started_at.empty());
}

TEST_CASE("concurrency does not change results") {
    auto ds = mini();
    auto run = [&](std::size_t c) {
        RunOptions o;
        o.concurrency = c;
        o.timestamps = false;
        return run_benchmark(ds, echo_gold, o);
    };
    CHECK(dump_traces(run(1)) == dump_traces(run(8)));
}

TEST_CASE("executor exceptions become tool errors") {
    auto ds = mini();
    RunOptions o;
    o.timestamps = false;
    RunRecord r = run_benchmark(ds, [](const QAPair& q) -> TaskTrace {
        if (q.id == "g-002") throw std::runtime_error("exploded");
        return echo_gold(q);
    }, o);
    CHECK(r.traces[3].status == TaskStatus::tool_error);
    CHECK(r.traces[3].error == "exploded");
    CHECK(r.traces[4].status == TaskStatus::completed);
}

TEST_CASE("resume executes only missing ids") {
    auto ds = mini();
    TempDir full_dir, cut_dir;
    RunOptions o;
    o.timestamps = false;
    o.run_dir = full_dir.path();
    RunRecord full = run_benchmark(ds, echo_gold, o);

    // interrupted copy: four complete lines and a torn fifth
    fs::create_directories(cut_dir.path());
    {
        std::ifstream in(full_dir / "traces.jsonl");
        std::ofstream out(cut_dir / "traces.jsonl");
        std::string line;
        for (int i = 0; i < 4 && std::getline(in, line); ++i) out << line << "\n";
        std::getline(in, line);
        out << line.substr(0, line.size() / 2);
    }
    std::atomic<int> executed{0};
    std::mutex mu;
    std::set<std::string> ran;
    RunOptions o2 = o;
    o2.run_dir = cut_dir.path();
    RunRecord resumed = run_benchmark(ds, [&](const QAPair& q) {
        ++executed;
        std::lock_guard lk(mu);
        ran.insert(q.id);
        return echo_gold(q);
    }, o2);
    CHECK(executed == 6);
    CHECK(dump_traces(resumed) == dump_traces(full));
    CHECK(load_run(cut_dir.path()).traces == full.traces);

    // nothing left to do
    executed = 0;
    run_benchmark(ds, [&](const QAPair& q) { ++executed; return echo_gold(q); }, o2);
    CHECK(executed == 0);
}

TEST_CASE("evaluation endpoints: perfect answers") {
    auto ds = mini();
    RunOptions o;
    o.timestamps = false;
    RunRecord run = run_benchmark(ds, [](const QAPair& q) {
        TaskTrace t = echo_gold(q);
        t.searcher_count = 0;
        t.function_call_count = 0;
        return t;
    }, o);
    Scripted judge(judge_script(ds, {}));
    Scripted gen(generator_script(ds));
    Embedder emb(std::make_shared<HashingEmbeddingProvider>());
    EvalContext ctx(judge.gateway, gen.gateway, emb, PromptSet::defaults());
    ctx.concurrency = 3;
    evaluate_run(run, ds, ctx);
    REQUIRE(run.report);
    const MetricReport& r = *run.report;
    CHECK(*r.s_co == 1.0);
    CHECK(*r.s_simi == doctest::Approx(1.0));
    CHECK(r.pass_rate == 1.0);
    CHECK(r.s_c == 0.0);
    CHECK(*r.s_final == doctest::Approx(60 + 15 + 15 * *r.s_rele + 10));
    CHECK(*r.s_rele == doctest::Approx(1.0));
    CHECK(*r.f1 == 1.0);
    CHECK(*r.rouge_l == 1.0);
    CHECK(judge.provider->remaining() == 0);
}

TEST_CASE("evaluation with no completed tasks") {
    auto ds = mini();
    RunOptions o;
    o.timestamps = false;
    RunRecord run = run_benchmark(ds, [](const QAPair& q) {
        TaskTrace t;
        t.question = q.question;
        t.status = TaskStatus::budget_exceeded;
        return t;
    }, o);
    Scripted judge, gen;
    Embedder emb(std::make_shared<HashingEmbeddingProvider>());
    EvalContext ctx(judge.gateway, gen.gateway, emb, PromptSet::defaults());
    evaluate_run(run, ds, ctx);
    CHECK(run.report->pass_rate == 0.0);
    CHECK_FALSE(run.report->s_co.has_value());
    CHECK_FALSE(run.report->s_final.has_value());
    CHECK(judge.provider->log().empty());
}

TEST_CASE("hand-scored three tasks") {
    auto ds = mini();
    ds.resize(3);
    RunOptions o;
    o.timestamps = false;
    RunRecord run = run_benchmark(ds, echo_gold, o);  // searcher counts 1, 2, 1
    Scripted judge(judge_script(ds, {{"f-001", 10}, {"f-002", 4}, {"g-001", 7}}));
    Scripted gen(generator_script(ds));
    Embedder emb(std::make_shared<HashingEmbeddingProvider>());
    EvalContext ctx(judge.gateway, gen.gateway, emb, PromptSet::defaults());
    evaluate_run(run, ds, ctx);
    const MetricReport& r = *run.report;
    // (1 + 3/9 + 6/9) / 3
    CHECK(*r.s_co == doctest::Approx(2.0 / 3.0));
    CHECK(r.s_c == doctest::Approx(4.0 / 3.0));
    double expect = 60 * (2.0 / 3.0) + 15 * *r.s_simi + 15 * *r.s_rele + 10 * std::exp(-4.0 / 3.0);
    CHECK(*r.s_final == doctest::Approx(expect));
    CHECK(run.scores[1]->judge_raw == 4);
}

TEST_CASE("persisted run recomputes its report exactly") {
    auto ds = mini();
    TempDir dir;
    RunOptions o;
    o.timestamps = false;
    o.run_dir = dir.path();
    RunRecord run = run_benchmark(ds, echo_gold, o);
    Scripted judge(judge_script(ds, {{"m-001", 3}, {"e-002", 8}}));
    Scripted gen(generator_script(ds));
    Embedder emb(std::make_shared<HashingEmbeddingProvider>());
    EvalContext ctx(judge.gateway, gen.gateway, emb, PromptSet::defaults());
    ctx.run_dir = dir.path();
    evaluate_run(run, ds, ctx);

    RunRecord back = load_run(dir.path());
    REQUIRE(back.report);
    CHECK(to_json(*back.report) == to_json(*run.report));
    std::vector<TaskScores> flat;
    for (const auto& s : back.scores) flat.push_back(s.value_or(TaskScores{}));
    CHECK(to_json(aggregate_report(back.traces, flat)).dump() == to_json(*run.report).dump());

    // resumed evaluation with nothing pending makes no model calls
    Scripted judge2, gen2;
    EvalContext ctx2(judge2.gateway, gen2.gateway, emb, PromptSet::defaults());
    ctx2.run_dir = dir.path();
    ctx2.resume = true;
    evaluate_run(back, ds, ctx2);
    CHECK(judge2.provider->log().empty());
    CHECK(to_json(*back.report) == to_json(*run.report));
}

TEST_CASE("evaluation against the wrong dataset") {
    auto ds = mini();
    RunOptions o;
    o.timestamps = false;
    RunRecord run = run_benchmark(ds, echo_gold, o);
    Scripted judge, gen;
    Embedder emb(std::make_shared<HashingEmbeddingProvider>());
    EvalContext ctx(judge.gateway, gen.gateway, emb, PromptSet::defaults());
    auto other = ds;
    other.pop_back();
    CHECK_THROWS_AS(evaluate_run(run, other, ctx), DatasetMismatch);
}

TEST_CASE("report table") {
    MetricReport r;
    r.s_final = 71.30, r.s_co = 0.80, r.s_rele = 0.83, r.s_simi = 0.60, r.s_c = 1.69, r.pass_rate = 1.0;
    r.n_tasks = 481, r.n_completed = 481;
    std::string t = render_report({{"a", r}, {"b", r}});
    CHECK(t.find("| S_final | S_co | S_rele | S_simi | S_c | Pass rate |") != std::string::npos);
    CHECK(t.find("| a | 71.30 | 0.80 | 0.83 | 0.60 | 1.69 | 1.00 |") != std::string::npos);
    CHECK(t.find("| b | 71.30 |") != std::string::npos);
    CHECK(t.find("—") != std::string::npos);  // overconfidence undefined
    std::string narrow = render_report({{"a", r}}, false);
    CHECK(narrow.find("Overconfidence") == std::string::npos);
}

TEST_CASE("run comparison") {
    auto ds = mini();
    RunOptions o;
    o.timestamps = false;
    RunRecord a = run_benchmark(ds, echo_gold, o);
    a.report = aggregate_report(a.traces, std::vector<TaskScores>(a.traces.size()));

    RunComparison self = compare_runs(a, a);
    for (const auto& m : self.metrics)
        if (m.delta()) CHECK(*m.delta() == 0.0);
    CHECK(self.transitions.empty());

    RunRecord b = a;
    b.traces[5].status = TaskStatus::format_error;
    b.traces[5].final_response.reset();
    b.report = aggregate_report(b.traces, std::vector<TaskScores>(b.traces.size()));
    RunComparison c = compare_runs(a, b);
    REQUIRE(c.transitions.size() == 1);
    CHECK(c.transitions[0].id == ds[5].id);
    CHECK(render_comparison(c).find(ds[5].id + ": completed -> format_error") != std::string::npos);

    RunRecord other = a;
    other.ids.pop_back();
    other.traces.pop_back();
    CHECK_THROWS_AS(compare_runs(a, other), DatasetMismatch);
}

}
