#include "levelnavi/llm_gateway.hpp"

#include <fmt/format.h>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "levelnavi/text_util.hpp"

namespace levelnavi {

std::string_view to_string(Role r) {
    switch (r) {
        case Role::system: return "system";
        case Role::user: return "user";
        case Role::assistant: return "assistant";
        case Role::tool: return "tool";
    }
    return "?";
}

json to_json(const ToolCall& c) {
    return json{{"id", c.id}, {"name", c.name}, {"arguments", c.arguments}};
}

json to_json(const ChatMessage& m) {
    json j{{"role", to_string(m.role)}, {"content", m.content}};
    if (m.tool_call_id) j["tool_call_id"] = *m.tool_call_id;
    if (!m.tool_calls.empty()) {
        j["tool_calls"] = json::array();
        for (const auto& c : m.tool_calls) j["tool_calls"].push_back(to_json(c));
    }
    return j;
}

// ---------------------------------------------------------------------------
// Gateway

Gateway::Gateway(std::shared_ptr<ChatProvider> provider, RetryPolicy retry)
    : provider_(std::move(provider)), retry_(retry) {
    if (!provider_) throw std::invalid_argument("Gateway needs a provider");
}

AssistantTurn Gateway::chat(const std::vector<ChatMessage>& messages,
                            const std::vector<ToolSpec>& tools, const ChatParams& params) {
    if (messages.empty()) throw EmptyInputError("chat: no messages");
    for (std::size_t i = 0; i < messages.size(); ++i) {
        const auto& m = messages[i];
        if (m.role == Role::tool && !m.tool_call_id)
            throw std::invalid_argument(fmt::format("chat: tool message {} lacks tool_call_id", i));
        if (m.role == Role::system && i != 0)
            throw std::invalid_argument("chat: system message must come first");
    }
    std::set<std::string, std::less<>> names;
    for (const auto& t : tools) {
        if (!names.insert(t.name).second)
            throw std::invalid_argument("chat: duplicate tool name " + t.name);
    }

    ChatRequest request{messages, tools, params};
    AssistantTurn turn = with_retries(retry_, [&] { return provider_->complete(request); });
    if ((!turn.text || turn.text->empty()) && turn.tool_calls.empty())
        throw ProviderError(0, "", "chat: provider returned neither text nor tool calls");
    {
        std::lock_guard lock(mu_);
        usage_ += turn.usage;
    }
    ++calls_;
    return turn;
}

Usage Gateway::usage() const {
    std::lock_guard lock(mu_);
    return usage_;
}

// ---------------------------------------------------------------------------
// Embedder

Embedder::Embedder(std::shared_ptr<EmbeddingProvider> provider, RetryPolicy retry)
    : provider_(std::move(provider)), retry_(retry) {
    if (!provider_) throw std::invalid_argument("Embedder needs a provider");
}

std::vector<std::vector<double>> Embedder::embed(const std::vector<std::string>& texts) {
    if (texts.empty()) throw EmptyInputError("embed: no texts");
    for (const auto& t : texts)
        if (is_blank(t)) throw EmptyInputError("embed: blank text");

    auto vectors = with_retries(retry_, [&] { return provider_->embed_raw(texts); });
    if (vectors.size() != texts.size())
        throw ProviderError(0, "", fmt::format("embed: expected {} vectors, got {}", texts.size(),
                                               vectors.size()));
    const std::size_t dim = vectors.front().size();
    for (auto& v : vectors) {
        if (v.size() != dim || dim == 0)
            throw ProviderError(0, "", "embed: inconsistent vector dimensions");
        double norm = 0.0;
        for (double x : v) norm += x * x;
        norm = std::sqrt(norm);
        if (!(norm > 0.0) || !std::isfinite(norm))
            throw ProviderError(0, "", "embed: provider returned a zero or non-finite vector");
        for (double& x : v) x /= norm;
    }
    return vectors;
}

std::vector<double> Embedder::embed_one(const std::string& text) { return embed({text}).front(); }

// ---------------------------------------------------------------------------
// Structured output

StructuredOutputError::StructuredOutputError(StructuredErrorKind kind, std::vector<std::string> missing)
    : Error([&] {
          if (kind == StructuredErrorKind::NoPayloadFound) return std::string("no JSON payload found");
          std::string msg = "payload is missing keys:";
          for (const auto& k : missing) msg += " " + k;
          return msg;
      }()),
      kind_(kind),
      missing_(std::move(missing)) {}

namespace {

// Index one past the '}' that balances the '{' at `start`, honoring strings.
std::size_t balanced_end(std::string_view text, std::size_t start) {
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = start; i < text.size(); ++i) {
        char c = text[i];
        if (in_string) {
            if (escaped) {
                escaped = false;
            } else if (c == '\\') {
                escaped = true;
            } else if (c == '"') {
                in_string = false;
            }
            continue;
        }
        if (c == '"') {
            in_string = true;
        } else if (c == '{') {
            ++depth;
        } else if (c == '}') {
            if (--depth == 0) return i + 1;
        }
    }
    return std::string_view::npos;
}

}  // namespace

json extract_structured(std::string_view text, const std::vector<std::string>& expected_keys) {
    std::optional<json> payload;
    for (std::size_t pos = text.find('{'); pos != std::string_view::npos; pos = text.find('{', pos + 1)) {
        std::size_t end = balanced_end(text, pos);
        if (end == std::string_view::npos) continue;
        json parsed = json::parse(text.substr(pos, end - pos), nullptr, /*allow_exceptions=*/false);
        if (parsed.is_object()) {
            payload = std::move(parsed);
            break;
        }
    }
    if (!payload) throw StructuredOutputError(StructuredErrorKind::NoPayloadFound, {});
    std::vector<std::string> missing;
    for (const auto& k : expected_keys)
        if (!payload->contains(k)) missing.push_back(k);
    if (!missing.empty()) throw StructuredOutputError(StructuredErrorKind::MissingKeys, std::move(missing));
    return *payload;
}

std::string format_retry_message(std::string_view reason, std::string_view original_request) {
    return fmt::format(
        "你上一条回复的格式无效（{}）。请只输出要求的 JSON 载荷，不要附加其他文字。\n"
        "原始请求如下：\n{}",
        reason, original_request);
}

// ---------------------------------------------------------------------------
// OpenAI-compatible providers

namespace {

std::string join_url(const std::string& base, std::string_view path) {
    std::string out = base;
    while (!out.empty() && out.back() == '/') out.pop_back();
    out += path;
    return out;
}

json tool_to_wire(const ToolSpec& t) {
    json props = json::object();
    json required = json::array();
    for (const auto& p : t.parameters) {
        json schema{{"type", p.type}, {"description", p.description}};
        if (p.type == "array") schema["items"] = json{{"type", "string"}};
        props[p.name] = schema;
        if (p.required) required.push_back(p.name);
    }
    return json{{"type", "function"},
                {"function",
                 {{"name", t.name},
                  {"description", t.description},
                  {"parameters", {{"type", "object"}, {"properties", props}, {"required", required}}}}}};
}

json parse_arguments(const json& raw) {
    if (raw.is_object()) return raw;
    if (raw.is_string()) {
        json parsed = json::parse(raw.get<std::string>(), nullptr, false);
        if (parsed.is_object()) return parsed;
        return json{{"_raw", raw}};
    }
    return json::object();
}

json post_json(HttpTransport& transport, const OpenAIConfig& config, std::string_view path,
               const json& body) {
    HttpRequest req;
    req.method = "POST";
    req.url = join_url(config.base_url, path);
    req.headers["Content-Type"] = "application/json";
    if (!config.api_key.empty()) req.headers["Authorization"] = "Bearer " + config.api_key;
    req.body = body.dump();
    req.timeout = config.timeout;
    HttpResponse resp = transport.send(req);
    if (resp.status < 200 || resp.status >= 300)
        throw ProviderError(resp.status, resp.body,
                            fmt::format("{} returned HTTP {}: {}", req.url, resp.status,
                                        resp.body.substr(0, 500)));
    json parsed = json::parse(resp.body, nullptr, false);
    if (parsed.is_discarded())
        throw ProviderError(resp.status, resp.body, req.url + " returned a non-JSON body");
    return parsed;
}

}  // namespace

OpenAIChatProvider::OpenAIChatProvider(OpenAIConfig config, std::shared_ptr<HttpTransport> transport)
    : config_(std::move(config)), transport_(std::move(transport)) {}

json OpenAIChatProvider::build_body(const ChatRequest& request) const {
    json messages = json::array();
    for (const auto& m : request.messages) {
        json wire{{"role", to_string(m.role)}, {"content", m.content}};
        if (m.tool_call_id) wire["tool_call_id"] = *m.tool_call_id;
        if (!m.tool_calls.empty()) {
            json calls = json::array();
            for (const auto& c : m.tool_calls)
                calls.push_back({{"id", c.id},
                                 {"type", "function"},
                                 {"function", {{"name", c.name}, {"arguments", c.arguments.dump()}}}});
            wire["tool_calls"] = calls;
        }
        messages.push_back(wire);
    }
    json body{{"model", config_.model},
              {"messages", messages},
              {"temperature", request.params.temperature},
              {"max_tokens", request.params.max_tokens}};
    if (request.params.seed) body["seed"] = *request.params.seed;
    if (!request.tools.empty()) {
        json tools = json::array();
        for (const auto& t : request.tools) tools.push_back(tool_to_wire(t));
        body["tools"] = tools;
    }
    return body;
}

AssistantTurn OpenAIChatProvider::parse_response(const json& body) {
    if (!body.contains("choices") || !body["choices"].is_array() || body["choices"].empty())
        throw ProviderError(200, body.dump(), "chat response has no choices");
    const json& msg = body["choices"][0].value("message", json::object());
    AssistantTurn turn;
    if (msg.contains("content") && msg["content"].is_string()) turn.text = msg["content"].get<std::string>();
    if (msg.contains("tool_calls") && msg["tool_calls"].is_array()) {
        for (const auto& c : msg["tool_calls"]) {
            ToolCall call;
            call.id = c.value("id", "");
            const json& fn = c.value("function", json::object());
            call.name = fn.value("name", "");
            call.arguments = parse_arguments(fn.value("arguments", json::object()));
            turn.tool_calls.push_back(std::move(call));
        }
    }
    if (body.contains("usage") && body["usage"].is_object()) {
        turn.usage.prompt_tokens = body["usage"].value("prompt_tokens", 0ULL);
        turn.usage.completion_tokens = body["usage"].value("completion_tokens", 0ULL);
    }
    return turn;
}

AssistantTurn OpenAIChatProvider::complete(const ChatRequest& request) {
    return parse_response(post_json(*transport_, config_, "/chat/completions", build_body(request)));
}

OpenAIEmbeddingProvider::OpenAIEmbeddingProvider(OpenAIConfig config,
                                                 std::shared_ptr<HttpTransport> transport)
    : config_(std::move(config)), transport_(std::move(transport)) {}

std::vector<std::vector<double>> OpenAIEmbeddingProvider::embed_raw(const std::vector<std::string>& texts) {
    json body{{"model", config_.model}, {"input", texts}};
    json resp = post_json(*transport_, config_, "/embeddings", body);
    if (!resp.contains("data") || !resp["data"].is_array())
        throw ProviderError(200, resp.dump(), "embedding response has no data");
    std::vector<std::vector<double>> out(texts.size());
    std::size_t seq = 0;
    for (const auto& item : resp["data"]) {
        std::size_t index = item.value("index", seq);
        ++seq;
        if (index >= out.size()) throw ProviderError(200, resp.dump(), "embedding index out of range");
        out[index] = item.at("embedding").get<std::vector<double>>();
    }
    return out;
}

// ---------------------------------------------------------------------------
// Scripted chat provider

ScriptedChatProvider::ScriptedChatProvider(std::vector<Entry> entries)
    : entries_(std::move(entries)), used_(entries_.size(), false) {}

void ScriptedChatProvider::push(Entry entry) {
    std::lock_guard lock(mu_);
    entries_.push_back(std::move(entry));
    used_.push_back(false);
}

std::shared_ptr<ScriptedChatProvider> ScriptedChatProvider::from_jsonl(std::string_view jsonl) {
    std::vector<Entry> entries;
    std::istringstream in{std::string(jsonl)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (is_blank(line)) continue;
        json j = json::parse(line, nullptr, false);
        if (!j.is_object() || !j.contains("reply") || !j["reply"].is_object())
            throw ConfigError(fmt::format("script line {}: expected {{\"match\"?, \"reply\": {{...}}}}", line_no));
        Entry e;
        if (j.contains("match") && j["match"].is_string()) e.match = j["match"].get<std::string>();
        const json& reply = j["reply"];
        if (reply.contains("text") && reply["text"].is_string()) e.text = reply["text"].get<std::string>();
        if (reply.contains("tool_calls")) {
            std::size_t n = 0;
            for (const auto& c : reply["tool_calls"]) {
                ToolCall call;
                call.id = c.value("id", fmt::format("call_{}_{}", line_no, n++));
                call.name = c.value("name", "");
                call.arguments = parse_arguments(c.value("arguments", json::object()));
                e.tool_calls.push_back(std::move(call));
            }
        }
        if (j.contains("usage") && j["usage"].is_object())
            e.usage = Usage{j["usage"].value("prompt_tokens", 0ULL), j["usage"].value("completion_tokens", 0ULL)};
        entries.push_back(std::move(e));
    }
    return std::make_shared<ScriptedChatProvider>(std::move(entries));
}

std::shared_ptr<ScriptedChatProvider> ScriptedChatProvider::from_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open script " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return from_jsonl(buf.str());
}

AssistantTurn ScriptedChatProvider::complete(const ChatRequest& request) {
    std::string_view latest_user;
    for (auto it = request.messages.rbegin(); it != request.messages.rend(); ++it) {
        if (it->role == Role::user) {
            latest_user = it->content;
            break;
        }
    }
    std::lock_guard lock(mu_);
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (used_[i]) continue;
        const Entry& e = entries_[i];
        if (e.match && latest_user.find(*e.match) == std::string_view::npos) continue;
        used_[i] = true;
        log_.push_back({request, i});
        AssistantTurn turn;
        turn.text = e.text;
        turn.tool_calls = e.tool_calls;
        if (e.usage) {
            turn.usage = *e.usage;
        } else {
            for (const auto& m : request.messages) turn.usage.prompt_tokens += utf8_length(m.content);
            turn.usage.completion_tokens = utf8_length(e.text.value_or(""));
            for (const auto& c : e.tool_calls) turn.usage.completion_tokens += c.arguments.dump().size();
        }
        return turn;
    }
    throw ProviderError(0, "",
                        fmt::format("script underrun: no unused entry matches the latest user message "
                                    "({} entries, latest user message: \"{}\")",
                                    entries_.size(), std::string(latest_user.substr(0, 120))));
}

std::vector<ScriptedChatProvider::LoggedCall> ScriptedChatProvider::log() const {
    std::lock_guard lock(mu_);
    return log_;
}

std::size_t ScriptedChatProvider::remaining() const {
    std::lock_guard lock(mu_);
    std::size_t n = 0;
    for (bool u : used_) n += u ? 0 : 1;
    return n;
}

// ---------------------------------------------------------------------------
// Offline embedders

TableEmbeddingProvider::TableEmbeddingProvider(std::map<std::string, std::vector<double>> table,
                                               std::shared_ptr<EmbeddingProvider> fallback)
    : table_(std::move(table)), fallback_(std::move(fallback)) {}

std::shared_ptr<TableEmbeddingProvider> TableEmbeddingProvider::from_file(
    const std::filesystem::path& path, std::shared_ptr<EmbeddingProvider> fallback) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open embedding table " + path.string());
    json j = json::parse(in, nullptr, false);
    if (!j.is_object()) throw ConfigError("embedding table must be a JSON object of text -> vector");
    std::map<std::string, std::vector<double>> table;
    for (auto it = j.begin(); it != j.end(); ++it) table[it.key()] = it.value().get<std::vector<double>>();
    return std::make_shared<TableEmbeddingProvider>(std::move(table), std::move(fallback));
}

std::vector<std::vector<double>> TableEmbeddingProvider::embed_raw(const std::vector<std::string>& texts) {
    std::vector<std::vector<double>> out;
    out.reserve(texts.size());
    for (const auto& t : texts) {
        if (auto it = table_.find(t); it != table_.end()) {
            out.push_back(it->second);
        } else if (fallback_) {
            out.push_back(fallback_->embed_raw({t}).front());
        } else {
            throw ProviderError(0, "", "embedding table has no entry for: " + t.substr(0, 80));
        }
    }
    return out;
}

HashingEmbeddingProvider::HashingEmbeddingProvider(std::size_t dimension) : dimension_(dimension) {
    if (dimension_ == 0) throw std::invalid_argument("embedding dimension must be positive");
}

std::vector<std::vector<double>> HashingEmbeddingProvider::embed_raw(const std::vector<std::string>& texts) {
    const auto bucket = [&](std::uint64_t a, std::uint64_t b) {
        std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
        for (std::uint64_t v : {a, b}) {
            for (int i = 0; i < 4; ++i) {
                h ^= (v >> (8 * i)) & 0xFF;
                h *= 1099511628211ULL;
            }
        }
        return static_cast<std::size_t>(h % dimension_);
    };
    std::vector<std::vector<double>> out;
    for (const auto& t : texts) {
        std::vector<double> v(dimension_, 0.0);
        std::vector<char32_t> cps;
        for (char32_t cp : to_codepoints(t))
            if (!is_unicode_space(cp)) cps.push_back(cp);
        for (std::size_t i = 0; i < cps.size(); ++i) {
            v[bucket(cps[i], 0)] += 1.0;
            if (i + 1 < cps.size()) v[bucket(cps[i], cps[i + 1] + 1)] += 1.0;
        }
        out.push_back(std::move(v));
    }
    return out;
}

}  // namespace levelnavi
