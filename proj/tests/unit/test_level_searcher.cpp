#include <doctest.h>

#include "levelnavi/level_searcher.hpp"
#include "unit/support.hpp"

using namespace levelnavi;
using namespace testsupport;

namespace {

const std::string kSub = "2024年巴黎奥运会开幕式是哪天";

FakeWeb web_with_three_hits() {
    FakeWeb w;
    w.results["巴黎奥运会 开幕式 日期"] = {
        hit(1, "https://a.example/1", "2024年巴黎奥运会于7月26日开幕。"),
        hit(2, "https://b.example/2", "奥运会新闻汇总"),
        hit(3, "https://c.example/3", "巴黎奥运会开幕式在塞纳河上举行"),
    };
    w.pages["https://a.example/1"] = "第三十三届夏季奥林匹克运动会开幕式于2024年7月26日在法国巴黎举行。";
    w.pages["https://b.example/2"] = "无关内容：本周天气晴。";
    w.pages["https://c.example/3"] = "开幕式首次在体育场外举行，运动员乘船沿塞纳河入场。";
    return w;
}

std::string search_call() { return R"({"can_answer": "no", "query": "巴黎奥运会 开幕式 日期"})"; }

}  // namespace

TEST_SUITE("level_searcher") {

TEST_CASE("L0 answer from own knowledge") {
    Scripted s({text_reply(R"({"can_answer": "yes", "answer": "巴黎是法国的首都"})")});
    FakeWeb web;
    LevelSearcher searcher(s.gateway, web, PromptSet::defaults());
    SelfCheck c = searcher.level0_self_check("法国的首都是哪里");
    CHECK_FALSE(c.need_search);
    CHECK(c.answer == "巴黎是法国的首都");
}

TEST_CASE("L0 tool call means search") {
    Scripted s({tool_reply("web_search", {{"query", "巴黎奥运会 开幕式 日期"}})});
    FakeWeb web;
    LevelSearcher searcher(s.gateway, web, PromptSet::defaults());
    SelfCheck c = searcher.level0_self_check(kSub);
    CHECK(c.need_search);
    CHECK(c.query == "巴黎奥运会 开幕式 日期");
}

TEST_CASE("L0 unusable twice is a format error") {
    Scripted s({text_reply("我不知道"), text_reply("还是不知道")});
    FakeWeb web;
    LevelSearcher searcher(s.gateway, web, PromptSet::defaults());
    CHECK_THROWS_AS(searcher.level0_self_check(kSub), FormatError);

    Scripted s2({text_reply("我不知道"), text_reply("还是不知道")});
    LevelSearcher searcher2(s2.gateway, web, PromptSet::defaults());
    LevelTrace t = searcher2.answer_subquestion(kSub);
    CHECK(t.status == SearcherStatus::format_error);
    CHECK(t.level == Level::L0);
    CHECK(web.log().empty());
}

TEST_CASE("L1 selection keeps hit order and drops strangers") {
    FakeWeb web = web_with_three_hits();
    auto hits = web.results.begin()->second;
    {
        Scripted s({tool_reply("open_url", {{"urls", json::array({"https://c.example/3", 1})}})});
        LevelSearcher searcher(s.gateway, web, PromptSet::defaults());
        SnippetDecision d = searcher.level1_snippet_answer(kSub, hits);
        CHECK(d.kind == SnippetDecision::Kind::need_pages);
        CHECK(d.urls == std::vector<std::string>{"https://a.example/1", "https://c.example/3"});
        CHECK(d.warnings.empty());
    }
    {
        Scripted s({tool_reply("open_url", {{"urls", json::array({"https://evil.example/", "#2"})}})});
        LevelSearcher searcher(s.gateway, web, PromptSet::defaults());
        SnippetDecision d = searcher.level1_snippet_answer(kSub, hits);
        CHECK(d.urls == std::vector<std::string>{"https://b.example/2"});
        CHECK(d.warnings.size() == 1);
    }
    {
        Scripted s({tool_reply("open_url", {{"urls", json::array({"https://evil.example/"})}})});
        LevelSearcher searcher(s.gateway, web, PromptSet::defaults());
        CHECK_THROWS_AS(searcher.level1_snippet_answer(kSub, hits), EmptySelection);
    }
    {
        // more than max_open selections are capped
        Scripted s({tool_reply("open_url", {{"urls", json::array({1, 2, 3})}})});
        SearcherConfig cfg;
        cfg.max_open = 2;
        LevelSearcher searcher(s.gateway, web, PromptSet::defaults(), cfg);
        CHECK(searcher.level1_snippet_answer(kSub, hits).urls.size() == 2);
    }
}

TEST_CASE("L2 answer contains the fact and cites the relevant page") {
    FakeWeb web;
    Scripted s({text_reply(R"({"answer": "开幕式于2024年7月26日举行", "sources": ["https://a.example/1"]})")});
    LevelSearcher searcher(s.gateway, web, PromptSet::defaults());
    std::vector<PageContent> pages{{"https://a.example/1", "开幕式于2024年7月26日在巴黎举行。", "", false},
                                   {"https://b.example/2", "无关内容", "", false}};
    std::string a = searcher.level2_page_answer(kSub, pages);
    CHECK(a.find("7月26日") != std::string::npos);
    CHECK(a.find("https://a.example/1") != std::string::npos);
    CHECK(a.find("https://b.example/2") == std::string::npos);

    // the prompt carries the page text
    auto log = s.provider->log();
    CHECK(log[0].request.messages.back().content.find("在巴黎举行") != std::string::npos);
}

TEST_CASE("L2 with only empty pages states insufficiency without a model call") {
    FakeWeb web;
    Scripted s;
    LevelSearcher searcher(s.gateway, web, PromptSet::defaults());
    std::string a = searcher.level2_page_answer(kSub, {{"https://a.example/1", "  ", "", false}});
    CHECK_FALSE(a.empty());
    CHECK(s.provider->log().empty());
}

TEST_CASE("cascade: L0") {
    FakeWeb web = web_with_three_hits();
    Scripted s({text_reply(R"({"can_answer": "yes", "answer": "7月26日"})")});
    LevelSearcher searcher(s.gateway, web, PromptSet::defaults());
    LevelTrace t = searcher.answer_subquestion(kSub);
    CHECK(t.level == Level::L0);
    CHECK(t.function_call_count == 0);
    CHECK(t.status == SearcherStatus::ok);
    CHECK(web.log().empty());
    CHECK(level_invariant_violations(t).empty());
}

TEST_CASE("cascade: L1") {
    FakeWeb web = web_with_three_hits();
    Scripted s({text_reply(search_call()), text_reply(R"({"answer": "2024年7月26日"})")});
    LevelSearcher searcher(s.gateway, web, PromptSet::defaults());
    LevelTrace t = searcher.answer_subquestion(kSub);
    CHECK(t.level == Level::L1);
    CHECK(t.function_call_count == 1);
    CHECK(t.searches.size() == 1);
    CHECK(t.opened.empty());
    CHECK(t.answer == "2024年7月26日");
    CHECK(level_invariant_violations(t).empty());
    // the snippet prompt shows the hits
    CHECK(s.provider->log()[1].request.messages.back().content.find("7月26日开幕") != std::string::npos);
}

TEST_CASE("cascade: L2 with two pages") {
    FakeWeb web = web_with_three_hits();
    Scripted s({text_reply(search_call()),
                tool_reply("open_url", {{"urls", json::array({1, 3})}}),
                text_reply(R"({"answer": "2024年7月26日", "sources": ["1"]})")});
    LevelSearcher searcher(s.gateway, web, PromptSet::defaults());
    LevelTrace t = searcher.answer_subquestion(kSub);
    CHECK(t.level == Level::L2);
    CHECK(t.searches.size() == 1);
    CHECK(t.opened.size() == 2);
    CHECK(t.function_call_count == 1);
    CHECK(t.answer.find("https://a.example/1") != std::string::npos);
    CHECK(web.log() == std::vector<std::string>{"search:巴黎奥运会 开幕式 日期", "fetch:https://a.example/1",
                                                "fetch:https://c.example/3"});
    CHECK(level_invariant_violations(t).empty());
}

TEST_CASE("cascade: failed search degrades to own knowledge") {
    FakeWeb web;  // no results at all
    Scripted s({text_reply(search_call()), text_reply(R"({"answer": "大概是7月底"})")});
    SearcherConfig cfg;
    cfg.web_retry = RetryPolicy{0, std::chrono::milliseconds{0}, 1.0};
    LevelSearcher searcher(s.gateway, web, PromptSet::defaults(), cfg);
    LevelTrace t = searcher.answer_subquestion(kSub);
    CHECK(t.status == SearcherStatus::tool_error);
    CHECK(t.level == Level::L0);
    CHECK(t.function_call_count == 0);
    CHECK(t.answer.find("大概是7月底") != std::string::npos);
    CHECK(level_invariant_violations(t).empty());
}

TEST_CASE("cascade: failed page fetches fall back to snippets") {
    FakeWeb web = web_with_three_hits();
    web.fail_urls = {"https://a.example/1"};
    Scripted s({text_reply(search_call()),
                tool_reply("open_url", {{"urls", json::array({1})}}),
                text_reply(R"({"answer": "根据摘要是7月26日"})")});
    LevelSearcher searcher(s.gateway, web, PromptSet::defaults());
    LevelTrace t = searcher.answer_subquestion(kSub);
    CHECK(t.status == SearcherStatus::ok);
    CHECK(t.level == Level::L1);
    CHECK(t.opened.empty());
    CHECK_FALSE(t.warnings.empty());
    CHECK(t.answer.find("7月26日") != std::string::npos);
}

TEST_CASE("cascade: selection outside the hits") {
    FakeWeb web = web_with_three_hits();
    Scripted s({text_reply(search_call()),
                tool_reply("open_url", {{"urls", json::array({"https://evil.example/"})}}),
                text_reply(R"({"answer": "摘要显示7月26日"})")});
    LevelSearcher searcher(s.gateway, web, PromptSet::defaults());
    LevelTrace t = searcher.answer_subquestion(kSub);
    CHECK(t.status == SearcherStatus::tool_error);
    CHECK(t.level == Level::L1);
    CHECK(t.opened.empty());
    CHECK(level_invariant_violations(t).empty());
}

TEST_CASE("cascade: second search when allowed") {
    FakeWeb web = web_with_three_hits();
    web.results["巴黎 开幕 塞纳河"] = {hit(1, "https://d.example/4", "塞纳河开幕式")};
    Scripted s({text_reply(search_call()),
                tool_reply("web_search", {{"query", "巴黎 开幕 塞纳河"}}),
                text_reply(R"({"answer": "7月26日"})")});
    SearcherConfig cfg;
    cfg.max_search_calls = 2;
    LevelSearcher searcher(s.gateway, web, PromptSet::defaults(), cfg);
    LevelTrace t = searcher.answer_subquestion(kSub);
    CHECK(t.searches.size() == 2);
    CHECK(t.function_call_count == 2);
    CHECK(t.level == Level::L1);

    // with the default single search the tool is not even offered
    Scripted s1({text_reply(search_call()), text_reply(R"({"answer": "x"})")});
    LevelSearcher one(s1.gateway, web, PromptSet::defaults());
    one.answer_subquestion(kSub);
    auto tools = s1.provider->log()[1].request.tools;
    REQUIRE(tools.size() == 1);
    CHECK(tools[0].name == "open_url");
}

TEST_CASE("provider failure is a tool error") {
    FakeWeb web;
    Scripted s;  // empty script: every call underruns
    LevelSearcher searcher(s.gateway, web, PromptSet::defaults());
    LevelTrace t = searcher.answer_subquestion(kSub);
    CHECK(t.status == SearcherStatus::tool_error);
    CHECK(t.provider_failure);
}

TEST_CASE("trace json round-trip and invariant checker") {
    FakeWeb web = web_with_three_hits();
    Scripted s({text_reply(search_call()),
                tool_reply("open_url", {{"urls", json::array({1})}}),
                text_reply(R"({"answer": "7月26日"})")});
    LevelSearcher searcher(s.gateway, web, PromptSet::defaults());
    LevelTrace t = searcher.answer_subquestion(kSub);
    CHECK(level_trace_from_json(to_json(t)) == t);

    LevelTrace bad;
    bad.level = Level::L0;
    bad.function_call_count = 1;
    CHECK_FALSE(level_invariant_violations(bad).empty());
    LevelTrace opened_without_search;
    opened_without_search.level = Level::L2;
    opened_without_search.opened.push_back({"https://x", 1});
    CHECK_FALSE(level_invariant_violations(opened_without_search).empty());
}

TEST_CASE("tool schemas") {
    CHECK(web_search_tool().name == "web_search");
    ToolSpec open = open_url_tool(3);
    CHECK(open.name == "open_url");
    REQUIRE(open.parameters.size() == 1);
    CHECK(open.parameters[0].type == "array");
}

}
