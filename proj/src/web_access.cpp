#include "levelnavi/web_access.hpp"

#include <fmt/format.h>
#include <openssl/evp.h>
#include <unicode/normalizer2.h>
#include <unicode/unistr.h>

#include <cctype>
#include <ctime>
#include <fstream>
#include <sstream>

#include "levelnavi/html_text.hpp"
#include "levelnavi/text_util.hpp"

namespace levelnavi {

std::string sha256_hex(std::string_view data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr);
    std::string hex;
    hex.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
    return hex;
}

namespace {

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot read " + p.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::string url_encode(std::string_view s) {
    std::string out;
    for (unsigned char c : s) {
        if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
            out.push_back(static_cast<char>(c));
        } else {
            out += fmt::format("%{:02X}", c);
        }
    }
    return out;
}

}  // namespace

json to_json(const SearchHit& hit) {
    return json{{"title", hit.title}, {"url", hit.url}, {"snippet", hit.snippet}, {"rank", hit.rank}};
}

SearchHit search_hit_from_json(const json& j) {
    return SearchHit{j.value("title", ""), j.value("url", ""), j.value("snippet", ""), j.value("rank", 0)};
}

json to_json(const PageContent& page) {
    return json{{"url", page.url}, {"text", page.text}, {"fetched_at", page.fetched_at},
                {"truncated", page.truncated}};
}

HttpStatusError::HttpStatusError(int status, const std::string& url)
    : Error(fmt::format("HTTP {} for {}", status, url)), status_(status) {}

std::string normalize_query(std::string_view query) {
    UErrorCode status = U_ZERO_ERROR;
    const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
    std::string normalized;
    if (U_SUCCESS(status)) {
        icu::UnicodeString src = icu::UnicodeString::fromUTF8(icu::StringPiece(query.data(), static_cast<int32_t>(query.size())));
        icu::UnicodeString dst = nfc->normalize(src, status);
        if (U_SUCCESS(status)) dst.toUTF8String(normalized);
    }
    if (!U_SUCCESS(status)) normalized.assign(query);
    normalized = trim(normalized);
    for (char& c : normalized)
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    return normalized;
}

std::string utc_timestamp() {
    std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string_view to_string(WebMode m) {
    switch (m) {
        case WebMode::live: return "live";
        case WebMode::record: return "record";
        case WebMode::replay: return "replay";
    }
    return "?";
}

std::optional<WebMode> parse_web_mode(std::string_view s) {
    for (WebMode m : {WebMode::live, WebMode::record, WebMode::replay})
        if (to_string(m) == s) return m;
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// HttpSearchBackend

HttpSearchBackend::HttpSearchBackend(Config config, std::shared_ptr<HttpTransport> transport)
    : config_(std::move(config)), transport_(std::move(transport)) {}

std::vector<SearchHit> HttpSearchBackend::parse_response(const json& body, std::size_t k) {
    const json* results = nullptr;
    if (body.contains("results") && body["results"].is_array()) {
        results = &body["results"];
    } else if (body.contains("web") && body["web"].is_object() && body["web"].contains("results")) {
        results = &body["web"]["results"];
    }
    if (!results) throw ProviderError(200, body.dump(), "search response has no results list");
    std::vector<SearchHit> hits;
    for (const auto& r : *results) {
        if (hits.size() >= k) break;
        std::string url = r.value("url", r.value("link", ""));
        if (!is_http_url(url)) continue;
        std::string snippet = r.value("snippet", r.value("content", r.value("description", "")));
        hits.push_back({extract_text(r.value("title", "")), url, extract_text(snippet),
                        static_cast<int>(hits.size() + 1)});
    }
    return hits;
}

std::vector<SearchHit> HttpSearchBackend::search(std::string_view query, std::size_t k) {
    HttpRequest req;
    req.url = fmt::format("{}{}q={}&count={}", config_.base_url,
                          config_.base_url.find('?') == std::string::npos ? "?" : "&", url_encode(query), k);
    if (!config_.api_key.empty()) req.headers["Authorization"] = "Bearer " + config_.api_key;
    req.headers["Accept"] = "application/json";
    req.timeout = config_.timeout;
    HttpResponse resp = transport_->send(req);
    if (resp.status < 200 || resp.status >= 300)
        throw ProviderError(resp.status, resp.body, fmt::format("search API returned HTTP {}", resp.status));
    json body = json::parse(resp.body, nullptr, false);
    if (body.is_discarded()) throw ProviderError(resp.status, resp.body, "search API returned non-JSON");
    return parse_response(body, k);
}

// ---------------------------------------------------------------------------
// WebCache

WebCache::WebCache(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::path index = dir_ / "index.jsonl";
    if (!std::filesystem::exists(index)) return;
    std::istringstream in(read_file(index));
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (is_blank(line)) continue;
        json j = json::parse(line, nullptr, false);
        if (!j.is_object()) throw IoError(fmt::format("{}:{}: malformed index line", index.string(), line_no));
        std::string kind = j.value("kind", "");
        if (kind == "search") {
            searches_[normalize_query(j.value("key", j.value("query", "")))] = {j.value("file", "")};
        } else if (kind == "page") {
            pages_[j.value("url", "")] = {j.value("file", ""), j.value("status", 200),
                                          j.value("content_type", ""), j.value("fetched_at", "")};
        }
    }
}

std::optional<std::vector<SearchHit>> WebCache::find_search(std::string_view query) const {
    std::string file;
    {
        std::lock_guard lock(mu_);
        auto it = searches_.find(normalize_query(query));
        if (it == searches_.end()) return std::nullopt;
        file = it->second.file;
    }
    json arr = json::parse(read_file(dir_ / file), nullptr, false);
    if (!arr.is_array()) throw IoError("corrupt cached search " + file);
    std::vector<SearchHit> hits;
    for (const auto& h : arr) hits.push_back(search_hit_from_json(h));
    return hits;
}

std::optional<RawPage> WebCache::find_page(std::string_view url) const {
    PageEntry entry;
    {
        std::lock_guard lock(mu_);
        auto it = pages_.find(url);
        if (it == pages_.end()) return std::nullopt;
        entry = it->second;
    }
    return RawPage{entry.status, entry.content_type, read_file(dir_ / entry.file), entry.fetched_at};
}

std::string WebCache::store_blob(std::string_view subdir, std::string_view ext, std::string_view content) {
    std::filesystem::create_directories(dir_ / subdir);
    std::string rel = fmt::format("{}/{}{}", subdir, sha256_hex(content), ext);
    std::filesystem::path path = dir_ / rel;
    if (!std::filesystem::exists(path)) {
        std::filesystem::path tmp = path;
        tmp += ".tmp";
        {
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            out.write(content.data(), static_cast<std::streamsize>(content.size()));
            if (!out) throw IoError("cannot write " + tmp.string());
        }
        std::filesystem::rename(tmp, path);
    }
    return rel;
}

void WebCache::append_index(const json& line) {
    std::ofstream out(dir_ / "index.jsonl", std::ios::binary | std::ios::app);
    out << line.dump() << '\n';
    if (!out) throw IoError("cannot append to cache index in " + dir_.string());
}

void WebCache::put_search(std::string_view query, const std::vector<SearchHit>& hits) {
    json arr = json::array();
    for (const auto& h : hits) arr.push_back(to_json(h));
    std::lock_guard lock(mu_);
    std::string rel = store_blob("search", ".json", arr.dump(1));
    std::string key = normalize_query(query);
    append_index(json{{"kind", "search"}, {"key", key}, {"query", std::string(query)}, {"file", rel}});
    searches_[key] = {rel};
}

void WebCache::put_page(std::string_view url, const RawPage& page) {
    std::lock_guard lock(mu_);
    std::string rel = store_blob("pages", ".html", page.body);
    append_index(json{{"kind", "page"},
                      {"url", std::string(url)},
                      {"file", rel},
                      {"status", page.status},
                      {"content_type", page.content_type},
                      {"fetched_at", page.fetched_at}});
    pages_[std::string(url)] = {rel, page.status, page.content_type, page.fetched_at};
}

// ---------------------------------------------------------------------------
// WebAccess

void WebAccess::HostLimiter::acquire(const std::string& host) {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return active_[host] < limit_; });
    ++active_[host];
}

void WebAccess::HostLimiter::release(const std::string& host) {
    {
        std::lock_guard lock(mu_);
        --active_[host];
    }
    cv_.notify_all();
}

WebAccess::WebAccess(WebConfig config, std::shared_ptr<SearchBackend> search_backend,
                     std::shared_ptr<HttpTransport> transport)
    : config_(std::move(config)),
      search_backend_(std::move(search_backend)),
      transport_(std::move(transport)),
      limiter_(std::max<std::size_t>(1, config_.per_host_concurrency)) {
    if (config_.mode != WebMode::live) cache_ = std::make_unique<WebCache>(config_.cache_dir);
    if (config_.mode != WebMode::replay && !search_backend_)
        throw ConfigError("live/record web mode needs a search backend");
}

std::vector<SearchHit> WebAccess::search(std::string_view query, std::size_t k) {
    if (is_blank(query)) throw EmptyInputError("search: empty query");
    if (k == 0 || k > config_.max_hits)
        throw DomainError(fmt::format("search: k must be in 1..{}", config_.max_hits));
    {
        std::lock_guard lock(log_mu_);
        log_.push_back("search:" + std::string(query));
    }
    std::vector<SearchHit> hits;
    if (config_.mode == WebMode::replay) {
        auto cached = cache_->find_search(query);
        if (!cached) throw CacheMiss("no cached search for query: " + std::string(query));
        hits = std::move(*cached);
    } else {
        hits = search_backend_->search(query, k);
        if (config_.mode == WebMode::record) cache_->put_search(query, hits);
    }
    if (hits.size() > k) hits.resize(k);
    return hits;
}

RawPage WebAccess::fetch_raw(const std::string& url) {
    std::string host = url_host(url).value_or("");
    limiter_.acquire(host);
    struct Release {
        HostLimiter& l;
        const std::string& h;
        ~Release() { l.release(h); }
    } release{limiter_, host};
    HttpRequest req;
    req.url = url;
    req.headers["User-Agent"] = "Mozilla/5.0 (compatible; levelnavi/0.1)";
    req.headers["Accept"] = "text/html,application/xhtml+xml";
    req.timeout = config_.fetch_timeout;
    HttpResponse resp = transport_->send(req);
    return RawPage{resp.status, resp.content_type, resp.body, utc_timestamp()};
}

PageContent WebAccess::fetch_page(std::string_view url_view, std::size_t budget) {
    std::string url(url_view);
    if (!is_http_url(url)) throw TransportError("not an http(s) URL: " + url);
    {
        std::lock_guard lock(log_mu_);
        log_.push_back("fetch:" + url);
    }
    RawPage raw;
    if (config_.mode == WebMode::replay) {
        auto cached = cache_->find_page(url);
        if (!cached) throw CacheMiss("no cached page for URL: " + url);
        raw = std::move(*cached);
    } else {
        raw = fetch_raw(url);
        if (config_.mode == WebMode::record) cache_->put_page(url, raw);
    }
    if (raw.status < 200 || raw.status >= 300) throw HttpStatusError(raw.status, url);
    std::string text = extract_text(raw.body, charset_from_content_type(raw.content_type));
    if (text.empty()) throw ExtractionEmpty("no visible text extracted from " + url);
    Truncated cut = truncate_to_budget(text, budget);
    return PageContent{url, std::move(cut.text), raw.fetched_at, cut.truncated};
}

std::vector<std::string> WebAccess::call_log() const {
    std::lock_guard lock(log_mu_);
    return log_;
}

}  // namespace levelnavi
