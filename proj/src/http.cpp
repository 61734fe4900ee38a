#include "http.hpp"

#include <httplib.h>

#include "cgrag/error.hpp"

namespace cgrag::detail {

Endpoint parse_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos || scheme_end == 0) {
        throw InputError("endpoint URL needs a scheme: " + url);
    }
    const auto host_begin = scheme_end + 3;
    const auto path_begin = url.find('/', host_begin);
    Endpoint ep;
    ep.scheme_host_port = url.substr(0, path_begin);
    ep.path = path_begin == std::string::npos ? "/" : url.substr(path_begin);
    if (ep.scheme_host_port.size() <= host_begin) throw InputError("endpoint URL has no host: " + url);
    return ep;
}

nlohmann::json post_json(const std::string& url, const std::string& api_key,
                         const nlohmann::json& body, double timeout_s) {
    const auto ep = parse_url(url);
    httplib::Client cli(ep.scheme_host_port);
    const auto secs = static_cast<time_t>(timeout_s);
    const auto usecs = static_cast<time_t>((timeout_s - static_cast<double>(secs)) * 1e6);
    cli.set_connection_timeout(secs, usecs);
    cli.set_read_timeout(secs, usecs);
    cli.set_write_timeout(secs, usecs);

    httplib::Headers headers;
    if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);

    auto res = cli.Post(ep.path, headers, body.dump(), "application/json");
    if (!res) {
        throw ServiceError("transport failure contacting " + url + ": " + httplib::to_string(res.error()));
    }
    if (res->status < 200 || res->status >= 300) {
        std::optional<double> retry_after;
        if (res->has_header("Retry-After")) {
            try {
                retry_after = std::stod(res->get_header_value("Retry-After"));
            } catch (const std::exception&) {
            }
        }
        std::string kind = "service error";
        if (res->status == 401 || res->status == 403) kind = "authentication failed";
        if (res->status == 429) kind = "rate limited";
        throw ServiceError(kind + " (HTTP " + std::to_string(res->status) + ") from " + url, retry_after,
                           res->status);
    }
    try {
        return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
        throw ServiceError("unparseable response from " + url + ": " + e.what(), std::nullopt, res->status);
    }
}

}  // namespace cgrag::detail
