#pragma once

// Shared test helpers: scripted gateways, an in-memory web, temp dirs.

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <string>
#include <vector>

#include "levelnavi/level_searcher.hpp"
#include "levelnavi/llm_gateway.hpp"
#include "levelnavi/web_access.hpp"

namespace testsupport {

namespace fs = std::filesystem;
using namespace levelnavi;

inline fs::path fixture(const std::string& rel) { return fs::path(LEVELNAVI_FIXTURES) / rel; }

class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        std::random_device rd;
        path_ = fs::temp_directory_path() /
                ("levelnavi-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& s) const { return path_ / s; }

private:
    fs::path path_;
};

inline ScriptedChatProvider::Entry text_reply(std::string text, std::optional<std::string> match = std::nullopt) {
    ScriptedChatProvider::Entry e;
    e.match = std::move(match);
    e.text = std::move(text);
    return e;
}

inline ScriptedChatProvider::Entry tool_reply(const std::string& name, json args,
                                              std::optional<std::string> match = std::nullopt) {
    ScriptedChatProvider::Entry e;
    e.match = std::move(match);
    e.tool_calls.push_back(ToolCall{"call_" + name, name, std::move(args)});
    return e;
}

// Gateway over a scripted provider, no retry sleeps.
struct Scripted {
    std::shared_ptr<ScriptedChatProvider> provider;
    Gateway gateway;

    explicit Scripted(std::vector<ScriptedChatProvider::Entry> entries = {})
        : provider(std::make_shared<ScriptedChatProvider>(std::move(entries))),
          gateway(provider, RetryPolicy{0, std::chrono::milliseconds{0}, 1.0}) {}
};

inline SearchHit hit(int rank, std::string url, std::string snippet, std::string title = "t") {
    return SearchHit{std::move(title), std::move(url), std::move(snippet), rank};
}

// In-memory WebTools. Unknown queries and URLs raise CacheMiss.
class FakeWeb final : public WebTools {
public:
    std::map<std::string, std::vector<SearchHit>> results;
    std::map<std::string, std::string> pages;
    std::vector<std::string> fail_urls;

    FakeWeb() = default;
    // movable while nobody is using it; the log is not carried over
    FakeWeb(FakeWeb&& o) noexcept
        : results(std::move(o.results)), pages(std::move(o.pages)), fail_urls(std::move(o.fail_urls)) {}

    std::vector<SearchHit> search(std::string_view query, std::size_t k) override {
        std::lock_guard lk(mu_);
        log_.push_back("search:" + std::string(query));
        auto it = results.find(std::string(query));
        if (it == results.end()) throw CacheMiss("no results for " + std::string(query));
        std::vector<SearchHit> out = it->second;
        if (out.size() > k) out.resize(k);
        return out;
    }

    PageContent fetch_page(std::string_view url, std::size_t budget) override {
        std::lock_guard lk(mu_);
        log_.push_back("fetch:" + std::string(url));
        for (const auto& f : fail_urls)
            if (f == url) throw HttpStatusError(404, std::string(url));
        auto it = pages.find(std::string(url));
        if (it == pages.end()) throw CacheMiss("no page " + std::string(url));
        std::string text = it->second;
        bool cut = text.size() > budget;
        if (cut) text.resize(budget);
        return PageContent{std::string(url), text, "2024-12-01T00:00:00Z", cut};
    }

    std::vector<std::string> log() const {
        std::lock_guard lk(mu_);
        return log_;
    }

private:
    mutable std::mutex mu_;
    std::vector<std::string> log_;
};

}  // namespace testsupport
