#include "levelnavi/level_searcher.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <set>

#include "levelnavi/html_text.hpp"
#include "levelnavi/text_util.hpp"

namespace levelnavi {

std::string_view to_string(Level l) {
    switch (l) {
        case Level::L0: return "L0";
        case Level::L1: return "L1";
        case Level::L2: return "L2";
    }
    return "?";
}

std::string_view to_string(SearcherStatus s) {
    switch (s) {
        case SearcherStatus::ok: return "ok";
        case SearcherStatus::tool_error: return "tool_error";
        case SearcherStatus::format_error: return "format_error";
    }
    return "?";
}

std::optional<Level> parse_level(std::string_view s) {
    for (Level l : {Level::L0, Level::L1, Level::L2})
        if (to_string(l) == s) return l;
    return std::nullopt;
}

std::optional<SearcherStatus> parse_searcher_status(std::string_view s) {
    for (SearcherStatus v : {SearcherStatus::ok, SearcherStatus::tool_error, SearcherStatus::format_error})
        if (to_string(v) == s) return v;
    return std::nullopt;
}

json to_json(const LevelTrace& t) {
    json searches = json::array();
    for (const auto& s : t.searches) {
        json hits = json::array();
        for (const auto& h : s.hits) hits.push_back(to_json(h));
        searches.push_back({{"query", s.query}, {"hits", hits}});
    }
    json opened = json::array();
    for (const auto& o : t.opened) opened.push_back({{"url", o.url}, {"chars_used", o.chars_used}});
    json j{{"sub_question", t.sub_question},
           {"level", to_string(t.level)},
           {"searches", searches},
           {"opened", opened},
           {"answer", t.answer},
           {"function_call_count", t.function_call_count},
           {"status", to_string(t.status)}};
    if (!t.warnings.empty()) j["warnings"] = t.warnings;
    if (t.error) j["error"] = *t.error;
    if (t.provider_failure) j["provider_failure"] = true;
    return j;
}

LevelTrace level_trace_from_json(const json& j) {
    LevelTrace t;
    t.sub_question = j.at("sub_question").get<std::string>();
    t.level = parse_level(j.at("level").get<std::string>()).value();
    for (const auto& s : j.at("searches")) {
        SearchRecord r{s.at("query").get<std::string>(), {}};
        for (const auto& h : s.at("hits")) r.hits.push_back(search_hit_from_json(h));
        t.searches.push_back(std::move(r));
    }
    for (const auto& o : j.at("opened"))
        t.opened.push_back({o.at("url").get<std::string>(), o.at("chars_used").get<std::size_t>()});
    t.answer = j.at("answer").get<std::string>();
    t.function_call_count = j.at("function_call_count").get<std::size_t>();
    t.status = parse_searcher_status(j.at("status").get<std::string>()).value();
    if (j.contains("warnings")) t.warnings = j["warnings"].get<std::vector<std::string>>();
    if (j.contains("error")) t.error = j["error"].get<std::string>();
    t.provider_failure = j.value("provider_failure", false);
    return t;
}

std::vector<std::string> level_invariant_violations(const LevelTrace& t) {
    std::vector<std::string> v;
    if (t.function_call_count != t.searches.size())
        v.push_back(fmt::format("function_call_count {} != searches {}", t.function_call_count, t.searches.size()));
    switch (t.level) {
        case Level::L0:
            if (!t.searches.empty()) v.push_back("L0 trace has searches");
            if (!t.opened.empty()) v.push_back("L0 trace has opened pages");
            if (t.function_call_count != 0) v.push_back("L0 trace has function calls");
            break;
        case Level::L1:
            if (t.searches.empty()) v.push_back("L1 trace without a search");
            if (!t.opened.empty()) v.push_back("L1 trace has opened pages");
            break;
        case Level::L2:
            if (t.searches.empty()) v.push_back("L2 trace without a search");
            if (t.opened.empty()) v.push_back("L2 trace without opened pages");
            break;
    }
    if (t.status == SearcherStatus::ok && t.answer.empty()) v.push_back("ok trace without an answer");
    return v;
}

ToolSpec web_search_tool() {
    return ToolSpec{"web_search",
                    "使用搜索引擎检索互联网，返回若干条结果的标题、链接和摘要。",
                    {ToolParam{"query", "string", "搜索关键词", true}}};
}

ToolSpec open_url_tool(std::size_t max_open) {
    return ToolSpec{"open_url",
                    fmt::format("打开搜索结果中的网页并读取正文，最多 {} 个。", max_open),
                    {ToolParam{"urls", "array", "要打开的网页链接，必须来自搜索结果", true}}};
}

namespace {

bool truthy(const json& v) {
    if (v.is_boolean()) return v.get<bool>();
    if (v.is_number()) return v.get<double>() != 0.0;
    if (!v.is_string()) return false;
    std::string s = trim(v.get<std::string>());
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s == "yes" || s == "true" || s == "y" || s == "是" || s == "能" || s == "可以";
}

std::string text_field(const json& payload, const char* key) {
    if (!payload.contains(key)) return {};
    const json& v = payload[key];
    if (v.is_string()) return trim(v.get<std::string>());
    if (v.is_null()) return {};
    return v.dump();
}

const ToolCall* find_call(const AssistantTurn& turn, std::string_view name) {
    for (const auto& c : turn.tool_calls)
        if (c.name == name) return &c;
    return nullptr;
}

std::string query_argument(const ToolCall& call, const std::string& fallback) {
    std::string q = text_field(call.arguments, "query");
    return q.empty() ? fallback : q;
}

std::string format_snippets(const std::vector<SearchHit>& hits) {
    std::string out;
    for (std::size_t i = 0; i < hits.size(); ++i) {
        if (i) out += "\n";
        out += fmt::format("[{}] {}\n链接：{}\n摘要：{}", i + 1, hits[i].title, hits[i].url, hits[i].snippet);
    }
    return out;
}

// Resolves one selection element (URL, 1-based index or "#n") to a hit URL.
std::optional<std::string> resolve_selection(const json& item, const std::vector<SearchHit>& hits) {
    std::string s;
    if (item.is_number_integer()) {
        s = std::to_string(item.get<long long>());
    } else if (item.is_string()) {
        s = trim(item.get<std::string>());
    } else {
        return std::nullopt;
    }
    std::string digits = !s.empty() && s.front() == '#' ? s.substr(1) : s;
    if (!digits.empty() && std::all_of(digits.begin(), digits.end(), [](unsigned char c) { return std::isdigit(c); })) {
        std::size_t n = std::stoul(digits);
        if (n >= 1 && n <= hits.size()) return hits[n - 1].url;
        return std::nullopt;
    }
    for (const auto& h : hits)
        if (h.url == s) return h.url;
    return std::nullopt;
}

}  // namespace

LevelSearcher::LevelSearcher(Gateway& gateway, WebTools& web, PromptSet prompts, SearcherConfig config)
    : gateway_(gateway), web_(web), prompts_(std::move(prompts)), config_(config) {}

SelfCheck LevelSearcher::level0_self_check(const std::string& sub_question) {
    std::vector<ChatMessage> messages{
        ChatMessage::system(prompts_.searcher_system),
        ChatMessage::user(fill_slots(prompts_.searcher_level0, {{"sub_question", sub_question}}))};
    return chat_with_format_retry(gateway_, messages, {web_search_tool()}, config_.chat, [&](const AssistantTurn& turn) {
        if (const ToolCall* call = find_call(turn, "web_search"))
            return SelfCheck{true, {}, query_argument(*call, sub_question)};
        json payload = extract_structured(turn.text.value_or(""), {"can_answer"});
        if (!truthy(payload["can_answer"])) {
            std::string q = text_field(payload, "query");
            return SelfCheck{true, {}, q.empty() ? sub_question : q};
        }
        std::string answer = text_field(payload, "answer");
        if (answer.empty()) throw StructuredOutputError(StructuredErrorKind::MissingKeys, {"answer"});
        return SelfCheck{false, answer, {}};
    });
}

SnippetDecision LevelSearcher::level1_snippet_answer(const std::string& sub_question,
                                                     const std::vector<SearchHit>& hits,
                                                     bool allow_search_again) {
    if (hits.empty()) throw EmptyInputError("level1: no search hits");
    std::vector<ChatMessage> messages{
        ChatMessage::system(prompts_.searcher_system),
        ChatMessage::user(fill_slots(prompts_.searcher_level1, {{"sub_question", sub_question},
                                                                {"snippets", format_snippets(hits)},
                                                                {"max_open", std::to_string(config_.max_open)}}))};
    std::vector<ToolSpec> tools{open_url_tool(config_.max_open)};
    if (allow_search_again) tools.push_back(web_search_tool());

    return chat_with_format_retry(gateway_, messages, tools, config_.chat, [&](const AssistantTurn& turn) {
        SnippetDecision d;
        if (const ToolCall* call = find_call(turn, "open_url")) {
            d.kind = SnippetDecision::Kind::need_pages;
            json selection = call->arguments.contains("urls") ? call->arguments["urls"] : json::array();
            if (selection.is_string()) {
                json parsed = json::parse(selection.get<std::string>(), nullptr, false);
                selection = parsed.is_array() ? parsed : json::array({selection});
            } else if (!selection.is_array()) {
                selection = json::array({selection});
            }
            std::set<std::string> chosen;
            for (const auto& item : selection) {
                if (auto url = resolve_selection(item, hits)) {
                    chosen.insert(*url);
                } else {
                    d.warnings.push_back("dropped selection not among search hits: " + item.dump());
                }
            }
            for (const auto& h : hits) {
                if (chosen.count(h.url) && d.urls.size() < config_.max_open &&
                    std::find(d.urls.begin(), d.urls.end(), h.url) == d.urls.end())
                    d.urls.push_back(h.url);
            }
            if (d.urls.empty()) throw EmptySelection("open_url selected no page among the search hits");
            return d;
        }
        if (const ToolCall* call = find_call(turn, "web_search"); call && allow_search_again) {
            d.kind = SnippetDecision::Kind::search_again;
            d.query = query_argument(*call, sub_question);
            return d;
        }
        json payload = extract_structured(turn.text.value_or(""), {"answer"});
        d.answer = text_field(payload, "answer");
        if (d.answer.empty()) throw StructuredOutputError(StructuredErrorKind::MissingKeys, {"answer"});
        return d;
    });
}

std::string LevelSearcher::level2_page_answer(const std::string& sub_question, const std::vector<PageContent>& pages) {
    if (pages.empty()) throw EmptyInputError("level2: no pages");
    std::vector<const PageContent*> usable;
    for (const auto& p : pages)
        if (!is_blank(p.text)) usable.push_back(&p);
    if (usable.empty()) return fmt::format("已打开的网页中没有找到与“{}”相关的有效信息，无法给出可靠回答。", sub_question);

    std::string page_block;
    for (std::size_t i = 0; i < usable.size(); ++i) {
        if (i) page_block += "\n\n";
        Truncated cut = truncate_to_budget(usable[i]->text, config_.page_budget);
        page_block += fmt::format("[{}] {}\n{}", i + 1, usable[i]->url, cut.text);
    }
    std::vector<ChatMessage> messages{
        ChatMessage::system(prompts_.searcher_system),
        ChatMessage::user(fill_slots(prompts_.searcher_level2, {{"sub_question", sub_question}, {"pages", page_block}}))};

    return chat_with_format_retry(gateway_, messages, {}, config_.chat, [&](const AssistantTurn& turn) {
        json payload = extract_structured(turn.text.value_or(""), {"answer"});
        std::string answer = text_field(payload, "answer");
        if (answer.empty()) throw StructuredOutputError(StructuredErrorKind::MissingKeys, {"answer"});
        std::vector<std::string> cited;
        if (payload.contains("sources") && payload["sources"].is_array()) {
            for (const auto& s : payload["sources"]) {
                std::string want = s.is_string() ? trim(s.get<std::string>()) : s.dump();
                for (std::size_t i = 0; i < usable.size(); ++i) {
                    const std::string& url = usable[i]->url;
                    if ((want == url || want == std::to_string(i + 1) || want == fmt::format("[{}]", i + 1)) &&
                        std::find(cited.begin(), cited.end(), url) == cited.end())
                        cited.push_back(url);
                }
            }
        }
        if (cited.empty())
            for (const auto* p : usable) cited.push_back(p->url);
        std::string sources;
        for (std::size_t i = 0; i < cited.size(); ++i) sources += (i ? "，" : "") + cited[i];
        return fmt::format("{}（来源：{}）", answer, sources);
    });
}

std::string LevelSearcher::fallback_answer(const std::string& sub_question, const std::string& material,
                                           const std::string& caveat) {
    std::vector<ChatMessage> messages{
        ChatMessage::system(prompts_.searcher_system),
        ChatMessage::user(fill_slots(prompts_.searcher_fallback,
                                     {{"sub_question", sub_question}, {"material", material.empty() ? "无" : material}}))};
    try {
        std::string answer = chat_with_format_retry(gateway_, messages, {}, config_.chat, [](const AssistantTurn& turn) {
            json payload = extract_structured(turn.text.value_or(""), {"answer"});
            std::string a = text_field(payload, "answer");
            if (a.empty()) throw StructuredOutputError(StructuredErrorKind::MissingKeys, {"answer"});
            return a;
        });
        return caveat + answer;
    } catch (const Error&) {
        return caveat + (material.empty() ? "未能获得可用信息。" : material);
    }
}

LevelTrace LevelSearcher::answer_subquestion(const std::string& sub_question) {
    LevelTrace trace;
    trace.sub_question = sub_question;
    trace.level = Level::L0;

    const auto fail = [&](SearcherStatus status, const std::string& message, bool provider) {
        trace.status = status;
        trace.error = message;
        trace.provider_failure = provider;
        return trace;
    };

    SelfCheck self;
    try {
        self = level0_self_check(sub_question);
    } catch (const FormatError& e) {
        return fail(SearcherStatus::format_error, e.what(), false);
    } catch (const TransportError& e) {
        return fail(SearcherStatus::tool_error, e.what(), true);
    } catch (const ProviderError& e) {
        return fail(SearcherStatus::tool_error, e.what(), true);
    }
    if (!self.need_search) {
        trace.answer = self.answer;
        return trace;
    }

    std::vector<SearchHit> all_hits;
    std::string query = self.query;
    try {
        for (;;) {
            std::vector<SearchHit> hits;
            try {
                hits = with_retries(config_.web_retry, [&] { return web_.search(query, config_.top_k); });
            } catch (const Error& e) {
                if (!trace.searches.empty()) {
                    // Earlier results are still usable.
                    trace.warnings.push_back(fmt::format("search failed for '{}': {}", query, e.what()));
                    break;
                }
                trace.warnings.push_back(fmt::format("search failed for '{}': {}", query, e.what()));
                trace.answer = fallback_answer(sub_question, "", "（注：联网搜索失败，以下回答仅基于模型自身知识）");
                trace.status = SearcherStatus::tool_error;
                trace.error = e.what();
                return trace;
            }
            trace.searches.push_back({query, hits});
            trace.function_call_count = trace.searches.size();
            trace.level = Level::L1;
            for (auto& h : hits) {
                bool seen = std::any_of(all_hits.begin(), all_hits.end(), [&](const SearchHit& x) { return x.url == h.url; });
                if (!seen) all_hits.push_back(h);
            }
            if (all_hits.empty()) {
                trace.warnings.push_back("search returned no results");
                trace.answer = fallback_answer(sub_question, "", "（注：搜索没有返回结果，以下回答仅基于模型自身知识）");
                return trace;
            }

            SnippetDecision decision;
            try {
                decision = level1_snippet_answer(sub_question, all_hits, trace.searches.size() < config_.max_search_calls);
            } catch (const EmptySelection& e) {
                trace.warnings.push_back(e.what());
                trace.answer = fallback_answer(sub_question, format_snippets(all_hits), "（注：网页选择无效，以下回答仅基于搜索摘要）");
                return fail(SearcherStatus::tool_error, e.what(), false);
            }
            trace.warnings.insert(trace.warnings.end(), decision.warnings.begin(), decision.warnings.end());
            if (decision.kind == SnippetDecision::Kind::answer) {
                trace.answer = decision.answer;
                return trace;
            }
            if (decision.kind == SnippetDecision::Kind::search_again) {
                query = decision.query;
                continue;
            }

            std::vector<PageContent> pages;
            for (const auto& url : decision.urls) {
                try {
                    pages.push_back(web_.fetch_page(url, config_.page_budget));
                } catch (const Error& e) {
                    trace.warnings.push_back(fmt::format("fetch failed for {}: {}", url, e.what()));
                }
            }
            if (pages.empty()) {
                trace.answer = fallback_answer(sub_question, format_snippets(all_hits),
                                               "（注：网页打开失败，以下回答仅基于搜索摘要）");
                return trace;
            }
            for (const auto& p : pages) trace.opened.push_back({p.url, utf8_length(p.text)});
            trace.level = Level::L2;
            trace.answer = level2_page_answer(sub_question, pages);
            return trace;
        }
        // Reached only when a repeat search failed after earlier successes.
        trace.answer = fallback_answer(sub_question, format_snippets(all_hits), "（注：以下回答仅基于搜索摘要）");
        return trace;
    } catch (const FormatError& e) {
        return fail(SearcherStatus::format_error, e.what(), false);
    } catch (const TransportError& e) {
        return fail(SearcherStatus::tool_error, e.what(), true);
    } catch (const ProviderError& e) {
        return fail(SearcherStatus::tool_error, e.what(), true);
    }
}

}  // namespace levelnavi
