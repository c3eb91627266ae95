// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <utility>
#include <vector>

namespace vme {

struct HttpResponse {
    int status = 0;
    std::string body;
};

/// POSTs a JSON body to an http:// or https:// URL. Returns status 0 with the
/// error text in `body` when the connection fails.
[[nodiscard]] HttpResponse http_post_json(const std::string& url, const std::string& body,
                                          const std::vector<std::pair<std::string, std::string>>& headers,
                                          int timeout_s);

}  // namespace vme
