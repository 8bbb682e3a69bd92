#pragma once

#include <chrono>
#include <cstdlib>
#include <optional>
#include <string>
#include <thread>

#include "httplib.h"
#include "json.hpp"

namespace citynav {

struct TransportError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Minimal JSON-over-POST client. A fresh connection per request keeps it safe
// for concurrent episode use with no shared mutable state.
class HttpJsonClient {
public:
    HttpJsonClient(std::string endpoint, std::string api_key, int timeout_s = 30, int retries = 2)
        : api_key_(std::move(api_key)), timeout_s_(timeout_s), retries_(retries) {
        split_url(std::move(endpoint));
    }

    static std::optional<HttpJsonClient> from_env(const char* url_var, const char* key_var) {
        const char* url = std::getenv(url_var);
        if (!url || !*url) return std::nullopt;
        const char* key = std::getenv(key_var);
        return HttpJsonClient(url, key ? key : "");
    }

    nlohmann::json post(const nlohmann::json& body) const {
        std::string last_error = "no attempt made";
        for (int attempt = 0; attempt <= retries_; ++attempt) {
            if (attempt > 0) {
                std::this_thread::sleep_for(std::chrono::seconds(1 << (attempt - 1)));
            }
            httplib::Client cli(base_.c_str());
            cli.set_connection_timeout(timeout_s_, 0);
            cli.set_read_timeout(timeout_s_, 0);
            cli.set_write_timeout(timeout_s_, 0);
            httplib::Headers headers;
            if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
            auto res = cli.Post(path_.c_str(), headers, body.dump(), "application/json");
            if (!res) {
                last_error = "connection failure (" + httplib::to_string(res.error()) + ")";
                continue;
            }
            if (res->status < 200 || res->status >= 300) {
                last_error = "HTTP status " + std::to_string(res->status);
                continue;
            }
            try {
                return nlohmann::json::parse(res->body);
            } catch (const nlohmann::json::exception& e) {
                last_error = std::string("invalid JSON response: ") + e.what();
            }
        }
        throw TransportError(path_ + ": " + last_error);
    }

    const std::string& base() const { return base_; }
    const std::string& path() const { return path_; }

private:
    void split_url(std::string url) {
        auto scheme_end = url.find("://");
        std::size_t host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
        auto path_start = url.find('/', host_start);
        if (path_start == std::string::npos) {
            base_ = url;
            path_ = "/";
        } else {
            base_ = url.substr(0, path_start);
            path_ = url.substr(path_start);
        }
    }

    std::string base_;
    std::string path_;
    std::string api_key_;
    int timeout_s_;
    int retries_;
};

} // namespace citynav
