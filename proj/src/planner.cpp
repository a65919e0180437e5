#include "levelnavi/planner.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <chrono>

#include "levelnavi/concurrency.hpp"
#include "levelnavi/text_util.hpp"

namespace levelnavi {

std::string_view to_string(FewshotMode m) {
    switch (m) {
        case FewshotMode::zero: return "zero";
        case FewshotMode::one: return "one";
        case FewshotMode::three: return "three";
    }
    return "?";
}

std::string_view to_string(TaskStatus s) {
    switch (s) {
        case TaskStatus::completed: return "completed";
        case TaskStatus::format_error: return "format_error";
        case TaskStatus::tool_error: return "tool_error";
        case TaskStatus::budget_exceeded: return "budget_exceeded";
    }
    return "?";
}

std::optional<FewshotMode> parse_fewshot_mode(std::string_view s) {
    if (s == "zero" || s == "0") return FewshotMode::zero;
    if (s == "one" || s == "1") return FewshotMode::one;
    if (s == "three" || s == "3") return FewshotMode::three;
    return std::nullopt;
}

std::optional<TaskStatus> parse_task_status(std::string_view s) {
    for (TaskStatus v : {TaskStatus::completed, TaskStatus::format_error, TaskStatus::tool_error,
                         TaskStatus::budget_exceeded})
        if (to_string(v) == s) return v;
    return std::nullopt;
}

std::size_t exemplar_count(FewshotMode m) {
    switch (m) {
        case FewshotMode::zero: return 0;
        case FewshotMode::one: return 1;
        case FewshotMode::three: return 3;
    }
    return 0;
}

json to_json(const PlannerDecision& d) {
    json j{{"thought", d.thought}, {"done", d.done}};
    if (d.done)
        j["response"] = d.response;
    else
        j["sub_questions"] = d.sub_questions;
    return j;
}

PlannerDecision planner_decision_from_json(const json& j) {
    PlannerDecision d;
    d.thought = j.value("thought", "");
    d.done = j.at("done").get<bool>();
    if (d.done)
        d.response = j.at("response").get<std::string>();
    else
        d.sub_questions = j.at("sub_questions").get<std::vector<std::string>>();
    return d;
}

json to_json(const TaskTrace& t) {
    json iterations = json::array();
    for (const auto& it : t.iterations) {
        json feedback = json::array();
        for (const auto& [q, a] : it.feedback) feedback.push_back({{"sub_question", q}, {"answer", a}});
        json searches = json::array();
        for (const auto& s : it.searches) searches.push_back(to_json(s));
        json ij{{"decision", to_json(it.decision)}, {"feedback", feedback}, {"searches", searches}};
        if (!it.warnings.empty()) ij["warnings"] = it.warnings;
        iterations.push_back(std::move(ij));
    }
    json j{{"question", t.question},
           {"iterations", iterations},
           {"final_response", t.final_response ? json(*t.final_response) : json(nullptr)},
           {"searcher_count", t.searcher_count},
           {"function_call_count", t.function_call_count},
           {"planner_calls", t.planner_calls},
           {"status", to_string(t.status)},
           {"fewshot_mode", to_string(t.fewshot_mode)},
           {"wall_time", t.wall_time}};
    if (t.error) j["error"] = *t.error;
    if (t.provider_failure) j["provider_failure"] = true;
    return j;
}

TaskTrace task_trace_from_json(const json& j) {
    TaskTrace t;
    t.question = j.at("question").get<std::string>();
    for (const auto& ij : j.at("iterations")) {
        Iteration it;
        it.decision = planner_decision_from_json(ij.at("decision"));
        for (const auto& f : ij.at("feedback"))
            it.feedback.emplace_back(f.at("sub_question").get<std::string>(), f.at("answer").get<std::string>());
        for (const auto& s : ij.at("searches")) it.searches.push_back(level_trace_from_json(s));
        if (ij.contains("warnings")) it.warnings = ij["warnings"].get<std::vector<std::string>>();
        t.iterations.push_back(std::move(it));
    }
    if (j.contains("final_response") && !j["final_response"].is_null())
        t.final_response = j["final_response"].get<std::string>();
    t.searcher_count = j.at("searcher_count").get<std::size_t>();
    t.function_call_count = j.at("function_call_count").get<std::size_t>();
    t.planner_calls = j.value("planner_calls", std::size_t{0});
    auto status = parse_task_status(j.at("status").get<std::string>());
    if (!status) throw DomainError("unknown task status: " + j.at("status").get<std::string>());
    t.status = *status;
    auto mode = parse_fewshot_mode(j.at("fewshot_mode").get<std::string>());
    if (!mode) throw DomainError("unknown fewshot mode: " + j.at("fewshot_mode").get<std::string>());
    t.fewshot_mode = *mode;
    t.wall_time = j.value("wall_time", 0.0);
    if (j.contains("error")) t.error = j["error"].get<std::string>();
    t.provider_failure = j.value("provider_failure", false);
    return t;
}

std::vector<std::string> task_invariant_violations(const TaskTrace& t, std::size_t max_search_calls) {
    std::vector<std::string> v;
    if ((t.status == TaskStatus::completed) != t.final_response.has_value())
        v.push_back("completed status and final_response disagree");
    std::size_t dispatched = 0, calls = 0;
    for (std::size_t i = 0; i < t.iterations.size(); ++i) {
        const Iteration& it = t.iterations[i];
        const PlannerDecision& d = it.decision;
        if (d.done) {
            if (d.response.empty()) v.push_back(fmt::format("iteration {}: done without response", i + 1));
            if (!d.sub_questions.empty()) v.push_back(fmt::format("iteration {}: done with sub-questions", i + 1));
            if (i + 1 != t.iterations.size()) v.push_back(fmt::format("iteration {}: done before the last iteration", i + 1));
        } else {
            if (d.sub_questions.empty()) v.push_back(fmt::format("iteration {}: no sub-questions", i + 1));
            if (!d.response.empty()) v.push_back(fmt::format("iteration {}: response while not done", i + 1));
        }
        dispatched += d.sub_questions.size();
        if (it.searches.size() != d.sub_questions.size() || it.feedback.size() != d.sub_questions.size())
            v.push_back(fmt::format("iteration {}: dispatch count mismatch", i + 1));
        for (std::size_t k = 0; k < it.feedback.size() && k < d.sub_questions.size(); ++k) {
            if (it.feedback[k].first != d.sub_questions[k])
                v.push_back(fmt::format("iteration {}: feedback out of order at {}", i + 1, k));
        }
        for (const auto& s : it.searches) {
            calls += s.function_call_count;
            for (const auto& msg : level_invariant_violations(s))
                v.push_back(fmt::format("iteration {}: {}", i + 1, msg));
        }
    }
    if (t.searcher_count != dispatched)
        v.push_back(fmt::format("searcher_count {} != dispatched {}", t.searcher_count, dispatched));
    if (t.function_call_count != calls)
        v.push_back(fmt::format("function_call_count {} != searcher calls {}", t.function_call_count, calls));
    if (t.function_call_count > t.searcher_count * max_search_calls)
        v.push_back("function_call_count exceeds searcher_count x max_search_calls");
    if (t.planner_calls < t.iterations.size()) v.push_back("fewer planner calls than iterations");
    return v;
}

PlannerDecision parse_planner_decision(std::string_view reply) {
    json payload = extract_structured(reply, {"done"});
    PlannerDecision d;
    if (payload.contains("thought")) {
        const json& th = payload["thought"];
        d.thought = th.is_string() ? th.get<std::string>() : th.dump();
    }
    const json& done = payload["done"];
    if (done.is_boolean()) {
        d.done = done.get<bool>();
    } else if (done.is_string()) {
        std::string s = trim(done.get<std::string>());
        std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        if (s == "yes" || s == "true" || s == "是")
            d.done = true;
        else if (s == "no" || s == "false" || s == "否")
            d.done = false;
        else
            throw StructuredOutputError(StructuredErrorKind::MissingKeys, {"done"});
    } else {
        throw StructuredOutputError(StructuredErrorKind::MissingKeys, {"done"});
    }

    if (d.done) {
        if (payload.contains("response") && payload["response"].is_string())
            d.response = trim(payload["response"].get<std::string>());
        if (d.response.empty()) throw StructuredOutputError(StructuredErrorKind::MissingKeys, {"response"});
        return d;
    }

    json list = payload.contains("sub_questions") ? payload["sub_questions"] : json::array();
    if (list.is_string()) list = json::array({list});
    if (list.is_array()) {
        for (const auto& item : list) {
            if (!item.is_string()) continue;
            std::string q = trim(item.get<std::string>());
            if (q.empty() || std::find(d.sub_questions.begin(), d.sub_questions.end(), q) != d.sub_questions.end())
                continue;
            d.sub_questions.push_back(std::move(q));
        }
    }
    if (d.sub_questions.empty()) throw StructuredOutputError(StructuredErrorKind::MissingKeys, {"sub_questions"});
    return d;
}

Planner::Planner(Gateway& gateway, PromptSet prompts, PlannerConfig config)
    : gateway_(gateway), prompts_(std::move(prompts)), config_(config) {
    if (config_.max_iterations == 0) throw ConfigError("max_iterations must be at least 1");
    if (config_.max_subquestions_per_step == 0) throw ConfigError("max_subquestions_per_step must be at least 1");
}

std::vector<ChatMessage> Planner::build_prompt(const std::string& question, const std::vector<ChatMessage>& history,
                                               FewshotMode mode) const {
    if (is_blank(question)) throw EmptyInputError("planner: empty question");
    std::vector<ChatMessage> messages{ChatMessage::system(prompts_.planner_system)};
    std::size_t n = std::min(exemplar_count(mode), prompts_.planner_exemplars.size());
    for (std::size_t i = 0; i < n; ++i)
        for (const auto& m : prompts_.planner_exemplars[i].messages) messages.push_back(m);
    messages.push_back(ChatMessage::user(fill_slots(prompts_.planner_question, {{"question", question}})));
    messages.insert(messages.end(), history.begin(), history.end());
    return messages;
}

PlannerDecision Planner::plan_step(const std::string& question, const std::vector<ChatMessage>& history,
                                   FewshotMode mode) const {
    return chat_with_format_retry(gateway_, build_prompt(question, history, mode), {}, config_.chat,
                                  [](const AssistantTurn& turn) { return parse_planner_decision(turn.text.value_or("")); });
}

std::string Planner::feedback_message(std::size_t iteration,
                                      const std::vector<std::pair<std::string, std::string>>& pairs) const {
    std::string block;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        if (i) block += "\n\n";
        block += fill_slots(prompts_.planner_feedback_pair, {{"sub_question", pairs[i].first}, {"answer", pairs[i].second}});
    }
    return fill_slots(prompts_.planner_feedback, {{"iteration", std::to_string(iteration)}, {"pairs", block}});
}

TaskTrace Planner::run_task(const std::string& question, SubQuestionSearcher& searcher) const {
    const auto start = std::chrono::steady_clock::now();
    TaskTrace trace;
    trace.question = question;
    trace.fewshot_mode = config_.mode;
    trace.status = TaskStatus::budget_exceeded;

    auto finish = [&]() -> TaskTrace {
        if (config_.record_timing)
            trace.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        return trace;
    };

    if (is_blank(question)) {
        trace.status = TaskStatus::format_error;
        trace.error = "empty question";
        return finish();
    }

    std::vector<ChatMessage> history;
    for (std::size_t round = 1; round <= config_.max_iterations; ++round) {
        PlannerDecision decision;
        ++trace.planner_calls;
        try {
            decision = plan_step(question, history, config_.mode);
        } catch (const FormatError& e) {
            trace.status = TaskStatus::format_error;
            trace.error = e.what();
            return finish();
        } catch (const TransportError& e) {
            trace.status = TaskStatus::tool_error;
            trace.error = e.what();
            trace.provider_failure = true;
            return finish();
        } catch (const ProviderError& e) {
            trace.status = TaskStatus::tool_error;
            trace.error = e.what();
            trace.provider_failure = true;
            return finish();
        }

        Iteration it;
        if (decision.done) {
            trace.final_response = decision.response;
            trace.status = TaskStatus::completed;
            it.decision = std::move(decision);
            trace.iterations.push_back(std::move(it));
            return finish();
        }

        if (decision.sub_questions.size() > config_.max_subquestions_per_step) {
            it.warnings.push_back(fmt::format("truncated {} sub-questions to {}", decision.sub_questions.size(),
                                              config_.max_subquestions_per_step));
            decision.sub_questions.resize(config_.max_subquestions_per_step);
        }

        const auto& subs = decision.sub_questions;
        std::vector<LevelTrace> results(subs.size());
        bounded_for_each(subs.size(), config_.max_parallel_searchers, [&](std::size_t i) {
            try {
                results[i] = searcher.answer_subquestion(subs[i]);
            } catch (const std::exception& e) {
                LevelTrace failed;
                failed.sub_question = subs[i];
                failed.status = SearcherStatus::tool_error;
                failed.error = e.what();
                results[i] = std::move(failed);
            }
        });

        bool any_format = false, any_tool = false, any_provider = false;
        std::string first_error;
        for (std::size_t i = 0; i < subs.size(); ++i) {
            const LevelTrace& r = results[i];
            it.feedback.emplace_back(subs[i], r.answer);
            trace.function_call_count += r.function_call_count;
            if (r.status == SearcherStatus::format_error) any_format = true;
            if (r.status == SearcherStatus::tool_error) any_tool = true;
            if (r.provider_failure) any_provider = true;
            if (r.status != SearcherStatus::ok && first_error.empty())
                first_error = fmt::format("searcher '{}': {}", subs[i], r.error.value_or(std::string(to_string(r.status))));
        }
        trace.searcher_count += subs.size();

        history.push_back(ChatMessage::assistant(to_json(decision).dump()));
        history.push_back(ChatMessage::user(feedback_message(round, it.feedback)));
        it.decision = std::move(decision);
        it.searches = std::move(results);
        trace.iterations.push_back(std::move(it));

        if (any_format || any_tool) {
            trace.status = any_format ? TaskStatus::format_error : TaskStatus::tool_error;
            trace.error = first_error;
            trace.provider_failure = any_provider;
            return finish();
        }
    }
    trace.error = fmt::format("no final response within {} iterations", config_.max_iterations);
    return finish();
}

}  // namespace levelnavi
