#pragma once

// Minimal HTTP client seam. Everything that touches the network goes through
// an HttpTransport so tests can swap in a transport that refuses to connect.

#include <atomic>
#include <chrono>
#include <map>
#include <memory>
#include <string>

#include "levelnavi/error.hpp"

namespace levelnavi {

class TransportError : public Error {
public:
    using Error::Error;
};

class TimeoutError : public TransportError {
public:
    using TransportError::TransportError;
};

// Non-2xx answer from an API endpoint (LLM, embedding or search provider).
class ProviderError : public Error {
public:
    ProviderError(int status, std::string body, const std::string& what)
        : Error(what), status_(status), body_(std::move(body)) {}

    int status() const noexcept { return status_; }
    const std::string& body() const noexcept { return body_; }
    // 429 and 5xx are worth another attempt; status 0 marks local failures.
    bool transient() const noexcept { return status_ == 429 || status_ >= 500; }

private:
    int status_;
    std::string body_;
};

struct HttpRequest {
    std::string method = "GET";
    std::string url;
    std::map<std::string, std::string> headers;
    std::string body;
    std::chrono::milliseconds timeout{10'000};
};

struct HttpResponse {
    int status = 0;
    std::string body;
    std::string content_type;
};

class HttpTransport {
public:
    virtual ~HttpTransport() = default;
    // Throws TransportError / TimeoutError; never throws on HTTP status.
    virtual HttpResponse send(const HttpRequest& request) = 0;
};

// cpp-httplib backed transport (http and https).
class HttplibTransport final : public HttpTransport {
public:
    HttpResponse send(const HttpRequest& request) override;
};

// Refuses every request and counts the attempts.
class FailingTransport final : public HttpTransport {
public:
    HttpResponse send(const HttpRequest& request) override;
    std::size_t attempts() const noexcept { return attempts_.load(); }

private:
    std::atomic<std::size_t> attempts_{0};
};

std::shared_ptr<HttpTransport> default_transport();

}  // namespace levelnavi
