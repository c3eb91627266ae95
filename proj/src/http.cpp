// SPDX-License-Identifier: Apache-2.0
#include "vme/http.hpp"

#include <httplib.h>

namespace vme {

HttpResponse http_post_json(const std::string& url, const std::string& body,
                            const std::vector<std::pair<std::string, std::string>>& headers, int timeout_s) {
    // Split scheme://host[:port] from the path.
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) return {0, "invalid URL: " + url};
    auto path_start = url.find('/', scheme_end + 3);
    std::string origin = path_start == std::string::npos ? url : url.substr(0, path_start);
    std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);

    httplib::Client cli(origin);
    cli.set_connection_timeout(timeout_s, 0);
    cli.set_read_timeout(timeout_s, 0);
    cli.set_write_timeout(timeout_s, 0);

    httplib::Headers h;
    for (const auto& [k, v] : headers) h.emplace(k, v);
    auto res = cli.Post(path, h, body, "application/json");
    if (!res) return {0, "connection failed: " + httplib::to_string(res.error())};
    return {res->status, res->body};
}

}  // namespace vme
