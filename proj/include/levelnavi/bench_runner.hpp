#pragma once

// Benchmark runs. Execution and scoring are separate phases so one run can be
// scored under several judges.
//
// Run directory:
//   traces.jsonl     {"id", "trace"} per task, appended as tasks finish
//   scores.jsonl     {"id", "scores"} per scored task, appended during eval
//   config.snapshot  effective configuration (JSON)
//   report.json      {"run_id", "started_at", "finished_at", "report"}

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "levelnavi/domain.hpp"
#include "levelnavi/metrics.hpp"
#include "levelnavi/planner.hpp"

namespace levelnavi {

class DatasetMismatch : public Error {
public:
    using Error::Error;
};

struct RunRecord {
    std::string run_id;
    json config_snapshot = json::object();
    std::string started_at;
    std::string finished_at;
    std::vector<std::string> ids;   // dataset order
    std::vector<TaskTrace> traces;  // aligned with ids
    std::vector<std::optional<TaskScores>> scores;
    std::optional<MetricReport> report;
};

// "<UTC yyyymmddThhmmssZ>-<first 12 hex of sha256(config)>"
std::string make_run_id(const json& config, const std::string& utc_time);

using TaskExecutor = std::function<TaskTrace(const QAPair&)>;

struct RunOptions {
    std::size_t concurrency = 4;
    std::optional<std::filesystem::path> run_dir;  // no persistence when empty
    json config_snapshot = json::object();
    bool timestamps = true;  // false keeps started_at/finished_at empty
    std::string run_id;      // derived from the config and start time when empty
};

// Executes every item not already recorded in run_dir/traces.jsonl. An
// executor that throws yields a tool_error trace; the run continues.
RunRecord run_benchmark(const std::vector<QAPair>& dataset, const TaskExecutor& execute, const RunOptions& opts = {});

struct EvalContext {
    EvalContext(Gateway& judge_, Gateway& generator_, Embedder& embedder_, PromptSet prompts_)
        : judge(judge_), generator(generator_), embedder(embedder_), prompts(std::move(prompts_)) {}

    Gateway& judge;
    Gateway& generator;
    Embedder& embedder;
    PromptSet prompts;
    JudgeNormalization normalization = JudgeNormalization::affine;
    std::size_t n_questions = 3;
    Tokenizer tokenizer = default_tokenize;
    AggregateOptions aggregate;
    std::size_t concurrency = 4;
    std::optional<std::filesystem::path> run_dir;
    bool resume = false;  // keep scores already in run_dir/scores.jsonl
};

// Scores completed tasks against the gold answers and fills run.report.
// Transport/provider failures abort after persisting the scores finished so far.
TaskScores score_task(const QAPair& item, const TaskTrace& trace, EvalContext& ctx);
void evaluate_run(RunRecord& run, const std::vector<QAPair>& dataset, EvalContext& ctx);

void save_run(const RunRecord& run, const std::filesystem::path& dir);
RunRecord load_run(const std::filesystem::path& dir);

// Markdown table, two decimals, "—" for undefined cells.
std::string render_report(const std::vector<std::pair<std::string, MetricReport>>& rows, bool extra_columns = true);

struct MetricDelta {
    std::string name;
    std::optional<double> a, b;
    std::optional<double> delta() const { return a && b ? std::optional<double>(*b - *a) : std::nullopt; }
};

struct StatusTransition {
    std::string id;
    TaskStatus from, to;
};

struct RunComparison {
    std::vector<MetricDelta> metrics;
    std::vector<StatusTransition> transitions;
    std::vector<std::string> s_co_changed;  // |delta s_co| > 0.2
};

RunComparison compare_runs(const RunRecord& a, const RunRecord& b);
std::string render_comparison(const RunComparison& c);

}  // namespace levelnavi
