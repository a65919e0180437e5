#pragma once

// Provider-neutral chat completion and embedding access. Agents and metrics
// only ever talk to Gateway / Embedder; providers plug in underneath.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "json.hpp"
#include "levelnavi/error.hpp"
#include "levelnavi/http.hpp"

namespace levelnavi {

using json = nlohmann::ordered_json;

enum class Role { system, user, assistant, tool };
std::string_view to_string(Role r);

struct ToolCall {
    std::string id;
    std::string name;
    json arguments = json::object();

    bool operator==(const ToolCall&) const = default;
};

struct ChatMessage {
    Role role = Role::user;
    std::string content;
    std::optional<std::string> tool_call_id;  // role == tool only
    std::vector<ToolCall> tool_calls;         // assistant turns that called tools

    static ChatMessage system(std::string content) { return {Role::system, std::move(content), {}, {}}; }
    static ChatMessage user(std::string content) { return {Role::user, std::move(content), {}, {}}; }
    static ChatMessage assistant(std::string content, std::vector<ToolCall> calls = {}) {
        return {Role::assistant, std::move(content), {}, std::move(calls)};
    }
    static ChatMessage tool(std::string call_id, std::string content) {
        return {Role::tool, std::move(content), std::move(call_id), {}};
    }

    bool operator==(const ChatMessage&) const = default;
};

struct ToolParam {
    std::string name;
    std::string type = "string";  // "string" or "array" (of strings)
    std::string description;
    bool required = true;
};

struct ToolSpec {
    std::string name;
    std::string description;
    std::vector<ToolParam> parameters;
};

struct Usage {
    std::uint64_t prompt_tokens = 0;
    std::uint64_t completion_tokens = 0;

    Usage& operator+=(const Usage& o) {
        prompt_tokens += o.prompt_tokens;
        completion_tokens += o.completion_tokens;
        return *this;
    }
    bool operator==(const Usage&) const = default;
};

struct AssistantTurn {
    std::optional<std::string> text;
    std::vector<ToolCall> tool_calls;
    Usage usage;
};

struct ChatParams {
    double temperature = 0.0;
    int max_tokens = 1024;
    std::optional<std::int64_t> seed;
};

struct ChatRequest {
    std::vector<ChatMessage> messages;
    std::vector<ToolSpec> tools;
    ChatParams params;
};

json to_json(const ChatMessage& m);
json to_json(const ToolCall& c);

class ChatProvider {
public:
    virtual ~ChatProvider() = default;
    // May throw TransportError, TimeoutError or ProviderError.
    virtual AssistantTurn complete(const ChatRequest& request) = 0;
};

class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual std::vector<std::vector<double>> embed_raw(const std::vector<std::string>& texts) = 0;
};

struct RetryPolicy {
    int max_retries = 2;
    std::chrono::milliseconds initial_backoff{500};
    double multiplier = 2.0;
};

// Runs `call`, retrying transient transport/provider failures with
// exponential backoff.
template <typename F>
auto with_retries(const RetryPolicy& policy, F&& call) -> decltype(call());

class Gateway {
public:
    explicit Gateway(std::shared_ptr<ChatProvider> provider, RetryPolicy retry = {});

    // Throws EmptyInputError for an empty message list, std::invalid_argument
    // for malformed messages (tool message without id, duplicate tool names).
    AssistantTurn chat(const std::vector<ChatMessage>& messages,
                       const std::vector<ToolSpec>& tools = {}, const ChatParams& params = {});

    Usage usage() const;
    std::uint64_t calls() const noexcept { return calls_.load(); }
    ChatProvider& provider() noexcept { return *provider_; }

private:
    std::shared_ptr<ChatProvider> provider_;
    RetryPolicy retry_;
    mutable std::mutex mu_;
    Usage usage_;
    std::atomic<std::uint64_t> calls_{0};
};

class Embedder {
public:
    explicit Embedder(std::shared_ptr<EmbeddingProvider> provider, RetryPolicy retry = {});

    // One L2-normalized vector per text. EmptyInputError on an empty list or
    // a blank text.
    std::vector<std::vector<double>> embed(const std::vector<std::string>& texts);
    std::vector<double> embed_one(const std::string& text);

private:
    std::shared_ptr<EmbeddingProvider> provider_;
    RetryPolicy retry_;
};

// ---------------------------------------------------------------------------
// Structured output

enum class StructuredErrorKind { NoPayloadFound, MissingKeys };

class StructuredOutputError : public Error {
public:
    StructuredOutputError(StructuredErrorKind kind, std::vector<std::string> missing);
    StructuredErrorKind kind() const noexcept { return kind_; }
    const std::vector<std::string>& missing() const noexcept { return missing_; }

private:
    StructuredErrorKind kind_;
    std::vector<std::string> missing_;
};

// The model failed to produce a usable reply even after the re-prompt.
class FormatError : public Error {
public:
    using Error::Error;
};

// Finds the first JSON object in `text` (inside a ``` fence or bare) and
// checks that every expected key is present.
json extract_structured(std::string_view text, const std::vector<std::string>& expected_keys);

// Re-prompt sent after an unusable reply. It repeats the original request so
// scripted providers keyed on the latest user message still line up.
std::string format_retry_message(std::string_view reason, std::string_view original_request);

// One chat call, interpreted by `interpret`. If interpretation throws
// StructuredOutputError the conversation gets one re-prompt; a second failure
// becomes FormatError.
template <typename Interpret>
auto chat_with_format_retry(Gateway& gateway, std::vector<ChatMessage> messages,
                            const std::vector<ToolSpec>& tools, const ChatParams& params,
                            Interpret&& interpret) -> decltype(interpret(std::declval<const AssistantTurn&>()));

// ---------------------------------------------------------------------------
// Providers

struct OpenAIConfig {
    std::string base_url = "https://api.openai.com/v1";
    std::string api_key;
    std::string model;
    std::chrono::milliseconds timeout{120'000};
};

// OpenAI-compatible /chat/completions client.
class OpenAIChatProvider final : public ChatProvider {
public:
    OpenAIChatProvider(OpenAIConfig config, std::shared_ptr<HttpTransport> transport);
    AssistantTurn complete(const ChatRequest& request) override;

    // Exposed for tests of the wire mapping.
    json build_body(const ChatRequest& request) const;
    static AssistantTurn parse_response(const json& body);

private:
    OpenAIConfig config_;
    std::shared_ptr<HttpTransport> transport_;
};

// OpenAI-compatible /embeddings client.
class OpenAIEmbeddingProvider final : public EmbeddingProvider {
public:
    OpenAIEmbeddingProvider(OpenAIConfig config, std::shared_ptr<HttpTransport> transport);
    std::vector<std::vector<double>> embed_raw(const std::vector<std::string>& texts) override;

private:
    OpenAIConfig config_;
    std::shared_ptr<HttpTransport> transport_;
};

// Replays a fixed transcript. Each call consumes the first unused entry whose
// `match` substring occurs in the latest user message (entries without
// `match` accept any call). Running out of entries is a ProviderError.
class ScriptedChatProvider final : public ChatProvider {
public:
    struct Entry {
        std::optional<std::string> match;
        std::optional<std::string> text;
        std::vector<ToolCall> tool_calls;
        std::optional<Usage> usage;
    };

    struct LoggedCall {
        ChatRequest request;
        std::size_t entry_index;
    };

    ScriptedChatProvider() = default;
    explicit ScriptedChatProvider(std::vector<Entry> entries);

    // Fixture format: one {"match"?: str, "reply": {"text"?: str, "tool_calls"?: [...]}} per line.
    static std::shared_ptr<ScriptedChatProvider> from_jsonl(std::string_view jsonl);
    static std::shared_ptr<ScriptedChatProvider> from_file(const std::filesystem::path& path);

    void push(Entry entry);
    AssistantTurn complete(const ChatRequest& request) override;

    std::vector<LoggedCall> log() const;
    std::size_t remaining() const;

private:
    mutable std::mutex mu_;
    std::vector<Entry> entries_;
    std::vector<bool> used_;
    std::vector<LoggedCall> log_;
};

// Fixed text -> vector table; unknown texts are a ProviderError unless a
// fallback provider is given.
class TableEmbeddingProvider final : public EmbeddingProvider {
public:
    explicit TableEmbeddingProvider(std::map<std::string, std::vector<double>> table,
                                    std::shared_ptr<EmbeddingProvider> fallback = nullptr);
    static std::shared_ptr<TableEmbeddingProvider> from_file(
        const std::filesystem::path& path, std::shared_ptr<EmbeddingProvider> fallback = nullptr);
    std::vector<std::vector<double>> embed_raw(const std::vector<std::string>& texts) override;

private:
    std::map<std::string, std::vector<double>> table_;
    std::shared_ptr<EmbeddingProvider> fallback_;
};

// Offline embedder: hashed character unigram + bigram counts. Deterministic
// and cheap, but only lexical; use a real model for reported numbers.
class HashingEmbeddingProvider final : public EmbeddingProvider {
public:
    explicit HashingEmbeddingProvider(std::size_t dimension = 512);
    std::vector<std::vector<double>> embed_raw(const std::vector<std::string>& texts) override;

private:
    std::size_t dimension_;
};

// ---------------------------------------------------------------------------
// template definitions

template <typename F>
auto with_retries(const RetryPolicy& policy, F&& call) -> decltype(call()) {
    auto delay = policy.initial_backoff;
    for (int attempt = 0;; ++attempt) {
        try {
            return call();
        } catch (const TransportError&) {
            if (attempt >= policy.max_retries) throw;
        } catch (const ProviderError& e) {
            if (!e.transient() || attempt >= policy.max_retries) throw;
        }
        if (delay.count() > 0) std::this_thread::sleep_for(delay);
        delay = std::chrono::milliseconds(
            static_cast<std::int64_t>(static_cast<double>(delay.count()) * policy.multiplier));
    }
}

template <typename Interpret>
auto chat_with_format_retry(Gateway& gateway, std::vector<ChatMessage> messages,
                            const std::vector<ToolSpec>& tools, const ChatParams& params,
                            Interpret&& interpret)
    -> decltype(interpret(std::declval<const AssistantTurn&>())) {
    std::string original;
    for (auto it = messages.rbegin(); it != messages.rend(); ++it) {
        if (it->role == Role::user) {
            original = it->content;
            break;
        }
    }
    AssistantTurn first = gateway.chat(messages, tools, params);
    try {
        return interpret(first);
    } catch (const StructuredOutputError& e) {
        messages.push_back(ChatMessage::assistant(first.text.value_or(""), first.tool_calls));
        // Unanswered tool calls would make the history invalid for real APIs.
        for (const auto& call : first.tool_calls)
            messages.push_back(ChatMessage::tool(call.id, "ignored"));
        messages.push_back(ChatMessage::user(format_retry_message(e.what(), original)));
    }
    AssistantTurn second = gateway.chat(messages, tools, params);
    try {
        return interpret(second);
    } catch (const StructuredOutputError& e) {
        throw FormatError(std::string("unusable reply after re-prompt: ") + e.what());
    }
}

}  // namespace levelnavi
