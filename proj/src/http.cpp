#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include "levelnavi/http.hpp"

#include <fmt/format.h>

namespace levelnavi {

namespace {

struct SplitUrl {
    std::string origin;  // scheme://host[:port]
    std::string path;    // path + query, at least "/"
};

SplitUrl split_url(const std::string& url) {
    std::size_t scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw TransportError("malformed URL: " + url);
    std::size_t path_start = url.find_first_of("/?#", scheme_end + 3);
    SplitUrl out;
    if (path_start == std::string::npos) {
        out.origin = url;
        out.path = "/";
    } else {
        out.origin = url.substr(0, path_start);
        out.path = url.substr(path_start);
        if (out.path.front() != '/') out.path.insert(0, "/");
        if (auto hash = out.path.find('#'); hash != std::string::npos) out.path.erase(hash);
    }
    return out;
}

}  // namespace

HttpResponse HttplibTransport::send(const HttpRequest& request) {
    SplitUrl parts = split_url(request.url);
    httplib::Client client(parts.origin);
    const auto seconds = std::chrono::duration_cast<std::chrono::seconds>(request.timeout);
    const auto micros =
        std::chrono::duration_cast<std::chrono::microseconds>(request.timeout - seconds);
    client.set_connection_timeout(seconds.count(), micros.count());
    client.set_read_timeout(seconds.count(), micros.count());
    client.set_write_timeout(seconds.count(), micros.count());
    client.set_follow_location(true);

    httplib::Headers headers;
    std::string content_type = "application/json";
    for (const auto& [k, v] : request.headers) {
        if (k == "Content-Type") {
            content_type = v;
            continue;
        }
        headers.emplace(k, v);
    }

    httplib::Result result;
    if (request.method == "GET") {
        result = client.Get(parts.path, headers);
    } else if (request.method == "POST") {
        result = client.Post(parts.path, headers, request.body, content_type);
    } else {
        throw TransportError("unsupported method " + request.method);
    }
    if (!result) {
        auto err = result.error();
        std::string msg = fmt::format("{} {}: {}", request.method, request.url, httplib::to_string(err));
        if (err == httplib::Error::Read || err == httplib::Error::ConnectionTimeout)
            throw TimeoutError(msg);
        throw TransportError(msg);
    }
    HttpResponse resp;
    resp.status = result->status;
    resp.body = result->body;
    resp.content_type = result->get_header_value("Content-Type");
    return resp;
}

HttpResponse FailingTransport::send(const HttpRequest& request) {
    ++attempts_;
    throw TransportError("network access is disabled: " + request.method + " " + request.url);
}

std::shared_ptr<HttpTransport> default_transport() {
    static auto transport = std::make_shared<HttplibTransport>();
    return transport;
}

}  // namespace levelnavi
