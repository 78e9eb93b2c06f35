#ifndef PREDIFIX_HTTP_BACKEND_HPP
#define PREDIFIX_HTTP_BACKEND_HPP

#include "predifix/ragloop.hpp"

#include <httplib.h>

namespace predifix::ragloop {

namespace detail {

struct ParsedUrl {
    std::string host_port; // scheme://host[:port]
    std::string path;
};

inline ParsedUrl split_url(const std::string& url) {
    auto scheme_end = url.find("://");
    std::size_t path_start =
        url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

} // namespace detail

inline std::string HttpBackend::complete(const PromptBundle& prompt) {
    json body;
    body["model"] = config_.model;
    body["temperature"] = 0;
    body["messages"] = json::array({
        json{{"role", "system"}, {"content", prompt.system_text}},
        json{{"role", "user"}, {"content", prompt.user_text}},
    });

    auto [host, path] = detail::split_url(config_.url);
    httplib::Client client(host);
    client.set_connection_timeout(config_.timeout_seconds);
    client.set_read_timeout(config_.timeout_seconds);
    httplib::Headers headers;
    if (const char* key = std::getenv(config_.api_key_env.c_str()); key && *key)
        headers.emplace("Authorization", std::string("Bearer ") + key);

    std::string last_error;
    int tries = config_.retry_once ? 2 : 1;
    for (int attempt = 0; attempt < tries; ++attempt) {
        auto res = client.Post(path, headers, body.dump(), "application/json");
        if (!res) {
            last_error = "connection failed: " + httplib::to_string(res.error());
            continue; // transient: retry
        }
        if (res->status >= 500) {
            last_error = "http status " + std::to_string(res->status);
            continue; // transient: retry
        }
        if (res->status != 200)
            throw BackendError("http status " + std::to_string(res->status));
        json j = json::parse(res->body, nullptr, false);
        if (j.is_discarded() || !j.contains("choices") || j["choices"].empty() ||
            !j["choices"][0].contains("message") ||
            !j["choices"][0]["message"].contains("content"))
            throw BackendError("malformed response body");
        return j["choices"][0]["message"]["content"].get<std::string>();
    }
    throw BackendError(last_error.empty() ? "request failed" : last_error);
}

} // namespace predifix::ragloop

#endif
