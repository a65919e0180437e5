#pragma once

// Scoring. The weighted final score combines correctness, semantic
// similarity, relevance and a decay of the mean searcher count; pass rate,
// token overlap, ROUGE-L, overconfidence and non-compliance are reported next
// to it.

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "levelnavi/llm_gateway.hpp"
#include "levelnavi/planner.hpp"
#include "levelnavi/prompts.hpp"

namespace levelnavi {

class JudgeFormatError : public Error {
public:
    using Error::Error;
};

class JudgeRangeError : public Error {
public:
    JudgeRangeError(long long score);
    long long score() const noexcept { return score_; }

private:
    long long score_;
};

class EmptyGold : public Error {
public:
    using Error::Error;
};

// 60*s_co + 15*s_simi + 15*s_rele + 10*exp(-s_c). DomainError outside the
// unit interval (or for negative s_c).
double final_score(double s_co, double s_simi, double s_rele, double s_c);
double searcher_decay(double s_c);

enum class JudgeNormalization { affine, tenth };  // (s-1)/9 or s/10
std::string_view to_string(JudgeNormalization n);
std::optional<JudgeNormalization> parse_judge_normalization(std::string_view s);
double normalize_judge_score(long long raw, JudgeNormalization n);

struct JudgeResult {
    long long raw = 0;
    double score = 0.0;
};

JudgeResult correctness_score(const std::string& question, const std::string& gold, const std::string& response,
                              Gateway& judge, const PromptSet& prompts,
                              JudgeNormalization norm = JudgeNormalization::affine, const ChatParams& params = {});

// Cosine of two vectors, clamped to [0, 1]; unit length is not assumed.
double clamped_cosine(const std::vector<double>& a, const std::vector<double>& b);
double semantic_similarity(const std::string& gold, const std::string& response, Embedder& embedder);

struct RelevanceResult {
    double score = 0.0;
    bool degraded = false;  // the generator produced no usable question
    std::vector<std::string> candidates;
    std::vector<double> similarities;
};

RelevanceResult relevance_score(const std::string& question, const std::string& response, Gateway& generator,
                                Embedder& embedder, const PromptSet& prompts, std::size_t n_questions = 3,
                                const ChatParams& params = {});

using Tokenizer = std::function<std::vector<std::string>(std::string_view)>;

// One token per CJK character or fullwidth punctuation mark, whitespace-delimited
// words for everything else.
std::vector<std::string> default_tokenize(std::string_view text);

struct TokenScores {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

TokenScores token_scores(const std::vector<std::string>& response, const std::vector<std::string>& gold);
TokenScores token_scores(std::string_view response, std::string_view gold, const Tokenizer& tok = default_tokenize);

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b);
double rouge_l(const std::vector<std::string>& response, const std::vector<std::string>& gold);
double rouge_l(std::string_view response, std::string_view gold, const Tokenizer& tok = default_tokenize);

double pass_rate(const std::vector<TaskTrace>& traces);
// sum(function calls) / sum(searcher invocations); nullopt when nothing was dispatched.
std::optional<double> overconfidence_ratio(const std::vector<TaskTrace>& traces);
bool is_noncompliant(const TaskTrace& t, const std::vector<std::string>& markers);
double noncompliance_rate(const std::vector<TaskTrace>& traces, const std::vector<std::string>& markers);

// Per-task quality scores; only filled for completed tasks.
struct TaskScores {
    std::optional<double> s_co;
    std::optional<long long> judge_raw;
    std::optional<double> s_simi;
    std::optional<double> s_rele;
    bool relevance_degraded = false;
    std::optional<TokenScores> tokens;
    std::optional<double> rouge_l;
    std::vector<std::string> errors;
};

json to_json(const TaskScores& s);
TaskScores task_scores_from_json(const json& j);

struct MetricReport {
    std::optional<double> s_co, s_simi, s_rele;
    double s_c = 0.0;
    std::optional<double> s_final;
    double pass_rate = 0.0;
    std::optional<double> f1, recall, rouge_l;
    std::optional<double> overconfidence_ratio;
    double noncompliance_rate = 0.0;
    std::size_t n_tasks = 0;
    std::size_t n_completed = 0;
};

json to_json(const MetricReport& r);
MetricReport metric_report_from_json(const json& j);

struct AggregateOptions {
    bool zero_fill = false;  // non-completed tasks count as zeros instead of being skipped
    std::vector<std::string> sentinel_markers = default_sentinel_markers();
};

// traces[i] and scores[i] describe the same task. Quality means run over the
// completed tasks (or all tasks with zero_fill); s_c always over all tasks.
MetricReport aggregate_report(const std::vector<TaskTrace>& traces, const std::vector<TaskScores>& scores,
                              const AggregateOptions& opts = {});

}  // namespace levelnavi
