#pragma once

// Minimal JSON-over-HTTP POST shared by the remote embedding and chat clients.

#include <json.hpp>
#include <string>

namespace cgrag::detail {

struct Endpoint {
    std::string scheme_host_port;  // "http://host:port"
    std::string path;              // "/v1/..."
};

/// Throws InputError on a URL without scheme or host.
Endpoint parse_url(const std::string& url);

/// POST a JSON body and parse the JSON reply. Non-2xx statuses and transport
/// failures become ServiceError; 429/503 carry Retry-After when present.
nlohmann::json post_json(const std::string& url, const std::string& api_key,
                         const nlohmann::json& body, double timeout_s);

}  // namespace cgrag::detail
