#pragma once

// Search API adapter, page fetcher and the record/replay cache.
//
// Cache directory layout:
//   <cache>/index.jsonl      one JSON object per stored item, later lines win
//   <cache>/search/<sha256>.json   JSON array of hits
//   <cache>/pages/<sha256>.html    raw response body
//
// Index lines:
//   {"kind":"search","key":<normalized query>,"query":<as asked>,"file":"search/..."}
//   {"kind":"page","url":<exact url>,"file":"pages/...","status":200,
//    "content_type":"text/html; charset=gbk","fetched_at":"2024-11-30T08:00:00Z"}

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "levelnavi/error.hpp"
#include "levelnavi/http.hpp"

namespace levelnavi {

using json = nlohmann::ordered_json;

struct SearchHit {
    std::string title;
    std::string url;
    std::string snippet;
    int rank = 0;  // 1-based

    bool operator==(const SearchHit&) const = default;
};

struct PageContent {
    std::string url;
    std::string text;
    std::string fetched_at;  // ISO-8601 UTC
    bool truncated = false;

    bool operator==(const PageContent&) const = default;
};

json to_json(const SearchHit& hit);
SearchHit search_hit_from_json(const json& j);
json to_json(const PageContent& page);

class CacheMiss : public Error {
public:
    using Error::Error;
};

class HttpStatusError : public Error {
public:
    HttpStatusError(int status, const std::string& url);
    int status() const noexcept { return status_; }

private:
    int status_;
};

class ExtractionEmpty : public Error {
public:
    using Error::Error;
};

// NFC, trimmed, ASCII letters lowercased.
std::string normalize_query(std::string_view query);

// What agents see of the web.
class WebTools {
public:
    virtual ~WebTools() = default;
    virtual std::vector<SearchHit> search(std::string_view query, std::size_t k) = 0;
    virtual PageContent fetch_page(std::string_view url, std::size_t budget) = 0;
};

class SearchBackend {
public:
    virtual ~SearchBackend() = default;
    virtual std::vector<SearchHit> search(std::string_view query, std::size_t k) = 0;
};

// Reference search API client.
//   GET <base_url>?q=<query>&count=<k>
//   Authorization: Bearer <api_key>
// Response: {"results": [{"title", "url", "snippet" | "content" | "description"}]}
// ("web": {"results": [...]} is accepted too). Ranks are assigned 1..n in
// response order.
class HttpSearchBackend final : public SearchBackend {
public:
    struct Config {
        std::string base_url;
        std::string api_key;
        std::chrono::milliseconds timeout{10'000};
    };

    HttpSearchBackend(Config config, std::shared_ptr<HttpTransport> transport);
    std::vector<SearchHit> search(std::string_view query, std::size_t k) override;
    static std::vector<SearchHit> parse_response(const json& body, std::size_t k);

private:
    Config config_;
    std::shared_ptr<HttpTransport> transport_;
};

struct RawPage {
    int status = 200;
    std::string content_type;
    std::string body;
    std::string fetched_at;
};

class WebCache {
public:
    explicit WebCache(std::filesystem::path dir);

    std::optional<std::vector<SearchHit>> find_search(std::string_view query) const;
    void put_search(std::string_view query, const std::vector<SearchHit>& hits);

    std::optional<RawPage> find_page(std::string_view url) const;
    void put_page(std::string_view url, const RawPage& page);

    const std::filesystem::path& dir() const noexcept { return dir_; }

private:
    struct SearchEntry {
        std::string file;
    };
    struct PageEntry {
        std::string file;
        int status;
        std::string content_type;
        std::string fetched_at;
    };

    void append_index(const json& line);
    std::string store_blob(std::string_view subdir, std::string_view ext, std::string_view content);

    std::filesystem::path dir_;
    mutable std::mutex mu_;
    std::map<std::string, SearchEntry, std::less<>> searches_;
    std::map<std::string, PageEntry, std::less<>> pages_;
};

enum class WebMode { live, record, replay };
std::string_view to_string(WebMode m);
std::optional<WebMode> parse_web_mode(std::string_view s);

struct WebConfig {
    WebMode mode = WebMode::replay;
    std::filesystem::path cache_dir = "web_cache";
    std::size_t max_hits = 10;  // provider maximum per query
    std::size_t per_host_concurrency = 2;
    std::chrono::milliseconds fetch_timeout{10'000};
};

class WebAccess final : public WebTools {
public:
    // `search_backend` may be null in replay mode.
    WebAccess(WebConfig config, std::shared_ptr<SearchBackend> search_backend,
              std::shared_ptr<HttpTransport> transport);

    std::vector<SearchHit> search(std::string_view query, std::size_t k) override;
    PageContent fetch_page(std::string_view url, std::size_t budget) override;

    // "search:<query>" / "fetch:<url>" in call order.
    std::vector<std::string> call_log() const;
    const WebConfig& config() const noexcept { return config_; }

private:
    RawPage fetch_raw(const std::string& url);

    class HostLimiter {
    public:
        explicit HostLimiter(std::size_t limit) : limit_(limit) {}
        void acquire(const std::string& host);
        void release(const std::string& host);

    private:
        std::size_t limit_;
        std::mutex mu_;
        std::condition_variable cv_;
        std::map<std::string, std::size_t> active_;
    };

    WebConfig config_;
    std::shared_ptr<SearchBackend> search_backend_;
    std::shared_ptr<HttpTransport> transport_;
    std::unique_ptr<WebCache> cache_;
    HostLimiter limiter_;
    mutable std::mutex log_mu_;
    std::vector<std::string> log_;
};

std::string utc_timestamp();
std::string sha256_hex(std::string_view data);

}  // namespace levelnavi
