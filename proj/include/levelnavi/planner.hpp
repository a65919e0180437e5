#pragma once

// The planning agent. Each step the model either lists the sub-questions to
// research next (all dispatched to searchers in parallel, answers appended to
// the history in list order) or gives the final response.

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "levelnavi/level_searcher.hpp"
#include "levelnavi/llm_gateway.hpp"
#include "levelnavi/prompts.hpp"

namespace levelnavi {

enum class FewshotMode { zero, one, three };
enum class TaskStatus { completed, format_error, tool_error, budget_exceeded };

std::string_view to_string(FewshotMode m);
std::string_view to_string(TaskStatus s);
std::optional<FewshotMode> parse_fewshot_mode(std::string_view s);  // "zero"/"0", "one"/"1", "three"/"3"
std::optional<TaskStatus> parse_task_status(std::string_view s);
std::size_t exemplar_count(FewshotMode m);

struct PlannerDecision {
    std::string thought;
    bool done = false;
    std::vector<std::string> sub_questions;  // non-empty iff !done
    std::string response;                    // non-empty iff done

    bool operator==(const PlannerDecision&) const = default;
};

json to_json(const PlannerDecision& d);
PlannerDecision planner_decision_from_json(const json& j);

struct Iteration {
    PlannerDecision decision;
    std::vector<std::pair<std::string, std::string>> feedback;  // sub-question -> answer, list order
    std::vector<LevelTrace> searches;
    std::vector<std::string> warnings;

    bool operator==(const Iteration&) const = default;
};

struct TaskTrace {
    std::string question;
    std::vector<Iteration> iterations;
    std::optional<std::string> final_response;
    std::size_t searcher_count = 0;
    std::size_t function_call_count = 0;
    std::size_t planner_calls = 0;
    TaskStatus status = TaskStatus::budget_exceeded;
    FewshotMode fewshot_mode = FewshotMode::zero;
    double wall_time = 0.0;  // seconds
    std::optional<std::string> error;
    bool provider_failure = false;

    bool operator==(const TaskTrace&) const = default;
};

json to_json(const TaskTrace& t);
TaskTrace task_trace_from_json(const json& j);

// Empty when the trace is internally consistent.
std::vector<std::string> task_invariant_violations(const TaskTrace& t, std::size_t max_search_calls);

struct PlannerConfig {
    FewshotMode mode = FewshotMode::zero;
    std::size_t max_iterations = 5;
    std::size_t max_subquestions_per_step = 5;
    std::size_t max_parallel_searchers = 5;
    bool record_timing = true;
    ChatParams chat;
};

class Planner {
public:
    Planner(Gateway& gateway, PromptSet prompts, PlannerConfig config = {});

    // system, exemplar exchanges, the question, then history in order.
    std::vector<ChatMessage> build_prompt(const std::string& question, const std::vector<ChatMessage>& history,
                                          FewshotMode mode) const;

    // One planner call (plus at most one format re-prompt).
    PlannerDecision plan_step(const std::string& question, const std::vector<ChatMessage>& history,
                              FewshotMode mode) const;

    // Never throws for model or tool failures; they end up in status.
    TaskTrace run_task(const std::string& question, SubQuestionSearcher& searcher) const;

    std::string feedback_message(std::size_t iteration,
                                 const std::vector<std::pair<std::string, std::string>>& pairs) const;

    const PlannerConfig& config() const noexcept { return config_; }

private:
    Gateway& gateway_;
    PromptSet prompts_;
    PlannerConfig config_;
};

// Parses and validates one planner reply; throws StructuredOutputError.
PlannerDecision parse_planner_decision(std::string_view reply);

}  // namespace levelnavi
