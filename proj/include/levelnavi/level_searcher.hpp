#pragma once

// The searcher agent: answers one sub-question at the cheapest sufficient
// level.
//   L0  the model's own knowledge
//   L1  search-result snippets
//   L2  text of pages the model chose to open
// Pages are only opened after a search returned candidates.

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "levelnavi/llm_gateway.hpp"
#include "levelnavi/prompts.hpp"
#include "levelnavi/web_access.hpp"

namespace levelnavi {

enum class Level { L0, L1, L2 };
enum class SearcherStatus { ok, tool_error, format_error };

std::string_view to_string(Level l);
std::string_view to_string(SearcherStatus s);
std::optional<Level> parse_level(std::string_view s);
std::optional<SearcherStatus> parse_searcher_status(std::string_view s);

struct SearchRecord {
    std::string query;
    std::vector<SearchHit> hits;
    bool operator==(const SearchRecord&) const = default;
};

struct OpenedPage {
    std::string url;
    std::size_t chars_used = 0;
    bool operator==(const OpenedPage&) const = default;
};

struct LevelTrace {
    std::string sub_question;
    Level level = Level::L0;
    std::vector<SearchRecord> searches;
    std::vector<OpenedPage> opened;
    std::string answer;
    std::size_t function_call_count = 0;
    SearcherStatus status = SearcherStatus::ok;
    std::vector<std::string> warnings;
    std::optional<std::string> error;
    bool provider_failure = false;  // the LLM endpoint itself failed

    bool operator==(const LevelTrace&) const = default;
};

json to_json(const LevelTrace& t);
LevelTrace level_trace_from_json(const json& j);

// Empty when the trace honors every level invariant.
std::vector<std::string> level_invariant_violations(const LevelTrace& t);

struct SearcherConfig {
    std::size_t top_k = 5;
    std::size_t page_budget = 6000;  // characters per opened page
    std::size_t max_open = 3;
    std::size_t max_search_calls = 1;
    ChatParams chat;
    RetryPolicy web_retry{1, std::chrono::milliseconds{500}, 2.0};
};

// Tool schemas advertised to the model.
ToolSpec web_search_tool();
ToolSpec open_url_tool(std::size_t max_open);

class EmptySelection : public Error {
public:
    using Error::Error;
};

struct SelfCheck {
    bool need_search = false;
    std::string answer;  // when !need_search
    std::string query;   // when need_search
};

struct SnippetDecision {
    enum class Kind { answer, need_pages, search_again };
    Kind kind = Kind::answer;
    std::string answer;
    std::vector<std::string> urls;  // need_pages, in hit order
    std::string query;              // search_again
    std::vector<std::string> warnings;
};

// What the planner needs from a searcher.
class SubQuestionSearcher {
public:
    virtual ~SubQuestionSearcher() = default;
    virtual LevelTrace answer_subquestion(const std::string& sub_question) = 0;
};

class LevelSearcher final : public SubQuestionSearcher {
public:
    LevelSearcher(Gateway& gateway, WebTools& web, PromptSet prompts, SearcherConfig config = {});

    SelfCheck level0_self_check(const std::string& sub_question);
    SnippetDecision level1_snippet_answer(const std::string& sub_question, const std::vector<SearchHit>& hits,
                                          bool allow_search_again = false);
    std::string level2_page_answer(const std::string& sub_question, const std::vector<PageContent>& pages);

    LevelTrace answer_subquestion(const std::string& sub_question) override;

    const SearcherConfig& config() const noexcept { return config_; }

private:
    std::string fallback_answer(const std::string& sub_question, const std::string& material,
                                const std::string& caveat);

    Gateway& gateway_;
    WebTools& web_;
    PromptSet prompts_;
    SearcherConfig config_;
};

}  // namespace levelnavi
