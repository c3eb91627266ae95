// SPDX-License-Identifier: Apache-2.0
#include "vme/llm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>

#include "vme/errors.hpp"
#include "vme/http.hpp"

namespace vme {

std::string prompt_hash(std::string_view system_prompt, std::string_view user_prompt) {
    // Two independent FNV-1a lanes give a 128-bit key.
    std::uint64_t h1 = 14695981039346656037ull;
    std::uint64_t h2 = 0x84222325cbf29ce4ull;
    auto mix = [&](std::string_view s) {
        for (char c : s) {
            auto b = static_cast<unsigned char>(c);
            h1 = (h1 ^ b) * 1099511628211ull;
            h2 = (h2 ^ b) * 0x100000001b3ull + 0x9e3779b97f4a7c15ull;
        }
    };
    mix(system_prompt);
    mix(std::string_view("\0", 1));
    mix(user_prompt);
    char buf[33];
    std::snprintf(buf, sizeof buf, "%016llx%016llx", static_cast<unsigned long long>(h1),
                  static_cast<unsigned long long>(h2));
    return buf;
}

std::vector<FixtureRecord> load_fixtures(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw UsageError("cannot open fixture file " + file.string());
    std::vector<FixtureRecord> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.empty()) continue;
        auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("completion")) {
            throw ParseError("fixture " + file.string() + ":" + std::to_string(n) + " malformed", "completion", 0);
        }
        FixtureRecord rec;
        rec.system = j.value("system", "");
        rec.user = j.value("user", "");
        rec.completion = j["completion"].get<std::string>();
        rec.hash = j.value("hash", prompt_hash(rec.system, rec.user));
        out.push_back(std::move(rec));
    }
    return out;
}

void append_fixture(const std::filesystem::path& file, const FixtureRecord& rec) {
    nlohmann::ordered_json j;
    j["hash"] = rec.hash;
    j["system"] = rec.system;
    j["user"] = rec.user;
    j["completion"] = rec.completion;
    std::ofstream out(file, std::ios::binary | std::ios::app);
    if (!out) throw UsageError("cannot write fixture file " + file.string());
    out << j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) << '\n';
    out.flush();
}

std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& vars) {
    std::string out;
    out.reserve(tmpl.size());
    std::size_t pos = 0;
    while (pos < tmpl.size()) {
        auto open = tmpl.find("{{", pos);
        if (open == std::string_view::npos) {
            out.append(tmpl.substr(pos));
            break;
        }
        auto close = tmpl.find("}}", open + 2);
        if (close == std::string_view::npos) throw UsageError("unterminated template placeholder");
        out.append(tmpl.substr(pos, open - pos));
        std::string name(tmpl.substr(open + 2, close - open - 2));
        auto it = vars.find(name);
        if (it == vars.end()) throw UsageError("unbound template placeholder: " + name);
        out += it->second;
        pos = close + 2;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Mock client

namespace {

std::vector<std::string_view> lines_of(std::string_view text) {
    std::vector<std::string_view> out;
    while (!text.empty()) {
        auto nl = text.find('\n');
        out.push_back(text.substr(0, nl));
        if (nl == std::string_view::npos) break;
        text.remove_prefix(nl + 1);
    }
    return out;
}

/// Lines following a `heading` line up to the next blank line.
std::vector<std::string_view> section(std::string_view text, std::string_view heading) {
    std::vector<std::string_view> out;
    bool in = false;
    for (auto line : lines_of(text)) {
        if (!in) {
            in = line == heading;
            continue;
        }
        if (line.empty()) break;
        out.push_back(line);
    }
    return out;
}

std::string lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

bool has_word(const std::string& text, std::string_view word) {
    std::size_t pos = 0;
    while ((pos = text.find(word, pos)) != std::string::npos) {
        bool left = pos == 0 || !std::isalnum(static_cast<unsigned char>(text[pos - 1]));
        std::size_t end = pos + word.size();
        bool right = end >= text.size() || !std::isalnum(static_cast<unsigned char>(text[end]));
        if (left && right) return true;
        pos = end;
    }
    return false;
}

std::string top_object(std::string_view user_prompt) {
    auto objects = section(user_prompt, "Objects:");
    if (objects.empty()) return {};
    std::string_view first = objects.front();
    if (first.substr(0, 2) == "- ") first.remove_prefix(2);
    auto paren = first.rfind(" (");
    return std::string(first.substr(0, paren));
}

std::string respond_key_objects(std::string_view user_prompt) {
    auto obj = top_object(user_prompt);
    if (obj.empty()) return "NONE";
    return "OBJECT: " + obj + "\nRATIONALE: most frequently touched object in the window";
}

std::string respond_summary(std::string_view user_prompt) {
    std::string subject = "the workspace";
    for (auto line : section(user_prompt, "Source snippets:")) {
        if (line.substr(0, 4) == "--- ") {
            subject = std::string(line.substr(4));
            if (auto flag = subject.rfind(" ("); flag != std::string::npos) subject.resize(flag);
            break;
        }
    }
    if (subject == "the workspace") {
        for (auto line : section(user_prompt, "Behaviors:")) {
            // "- #id verb ref ..." -> ref is the third token
            std::size_t a = line.find(' ', 2);
            std::size_t b = a == std::string_view::npos ? a : line.find(' ', a + 1);
            std::size_t c = b == std::string_view::npos ? b : line.find(' ', b + 1);
            if (b != std::string_view::npos) {
                subject = std::string(line.substr(b + 1, c == std::string_view::npos ? c : c - b - 1));
                break;
            }
        }
    }
    for (auto line : section(user_prompt, "Behaviors:")) {
        if (line.find("[failed]") == std::string_view::npos) continue;
        auto tick = line.find('`');
        auto end = tick == std::string_view::npos ? tick : line.find('`', tick + 1);
        std::string cmd = end == std::string_view::npos ? "a command" : std::string(line.substr(tick, end - tick + 1));
        return "Attempted to fix the failure of " + cmd + " while working in " + subject + ".";
    }
    return "Worked on " + subject + ".";
}

std::string respond_router(std::string_view user_prompt) {
    const std::string q = lower(user_prompt);
    std::vector<std::string> keys;
    auto add = [&](const std::string& k) {
        if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);
    };
    if (has_word(q, "run") || has_word(q, "start") || has_word(q, "launch")) {
        add("tech_stack_domains");
        add("command_success_rate.run");
    }
    if (has_word(q, "build") || has_word(q, "compile")) {
        add("tech_stack_domains");
        add("command_success_rate.build");
    }
    if (has_word(q, "test") || has_word(q, "tests")) add("command_success_rate.test");
    if (has_word(q, "structure") || has_word(q, "overview") || has_word(q, "architecture")) {
        add("language_distribution");
        add("revisit_cyclicality");
    }
    if (has_word(q, "function") || has_word(q, "api") || has_word(q, "call")) {
        add("language_loc");
        add("comment_density");
    }
    if (has_word(q, "learn") || has_word(q, "new") || has_word(q, "library")) {
        add("learning_score");
        add("top_libraries");
    }
    std::string out;
    for (const auto& k : keys) out += k + "\n";
    return out;
}

std::string respond_qa(std::string_view user_prompt) {
    std::string out = "Here is an answer for your workspace.";
    auto persona = section(user_prompt, "## Developer Persona");
    if (!persona.empty()) {
        out += "\nBased on your profile:";
        for (auto line : persona) {
            if (line.substr(0, 2) == "- ") out += "\n" + std::string(line);
        }
    }
    return out;
}

}  // namespace

std::string builtin_mock_response(std::string_view system_prompt, std::string_view user_prompt) {
    auto first = lines_of(system_prompt);
    std::string_view role = first.empty() ? std::string_view() : first.front();
    if (role == "ROLE: key-object-selector") return respond_key_objects(user_prompt);
    if (role == "ROLE: task-summarizer") return respond_summary(user_prompt);
    if (role == "ROLE: persona-router") return respond_router(user_prompt);
    if (role == "ROLE: qa-agent") return respond_qa(user_prompt);
    return "OK";
}

void MockLlmClient::add_exact(std::string_view system_prompt, std::string_view user_prompt, std::string completion) {
    exact_[prompt_hash(system_prompt, user_prompt)] = std::move(completion);
}

void MockLlmClient::add_rule(std::string system_needle, std::string user_needle, std::string completion) {
    rules_.push_back({std::move(system_needle), std::move(user_needle), std::move(completion)});
}

void MockLlmClient::load(const std::filesystem::path& fixture_file) {
    for (auto& rec : load_fixtures(fixture_file)) exact_[rec.hash] = std::move(rec.completion);
}

std::string MockLlmClient::complete(std::string_view system_prompt, std::string_view user_prompt) {
    ++calls_;
    history_.push_back({std::string(system_prompt), std::string(user_prompt)});
    if (unavailable_) throw LlmError(client_id(), "service unavailable");
    if (auto it = exact_.find(prompt_hash(system_prompt, user_prompt)); it != exact_.end()) return it->second;
    for (const auto& r : rules_) {
        if (system_prompt.find(r.system_needle) != std::string_view::npos &&
            user_prompt.find(r.user_needle) != std::string_view::npos) {
            return r.completion;
        }
    }
    return builtin_mock_response(system_prompt, user_prompt);
}

// ---------------------------------------------------------------------------

std::string HttpLlmClient::complete(std::string_view system_prompt, std::string_view user_prompt) {
    if (cfg_.endpoint.empty()) throw LlmError(client_id(), "no endpoint configured");
    nlohmann::json req;
    req["model"] = cfg_.model;
    req["temperature"] = 0;
    req["messages"] = nlohmann::json::array({
        {{"role", "system"}, {"content", std::string(system_prompt)}},
        {{"role", "user"}, {"content", std::string(user_prompt)}},
    });
    std::vector<std::pair<std::string, std::string>> headers;
    if (!cfg_.api_key.empty()) headers.emplace_back("Authorization", "Bearer " + cfg_.api_key);

    auto res = http_post_json(cfg_.endpoint, req.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace),
                              headers, cfg_.timeout_s);
    if (res.status == 0) throw LlmError(client_id(), res.body);
    if (res.status != 200) throw LlmError(client_id(), "HTTP " + std::to_string(res.status) + ": " + res.body);
    auto j = nlohmann::json::parse(res.body, nullptr, false);
    try {
        if (!j.is_discarded()) return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception&) {
    }
    throw LlmError(client_id(), "unexpected response shape");
}

Embedding HttpEmbeddingProvider::embed(std::string_view text) {
    if (cfg_.endpoint.empty()) throw ProviderError(provider_id(), "no embedding endpoint configured");
    nlohmann::json req;
    req["model"] = cfg_.model;
    req["input"] = std::string(text);
    std::vector<std::pair<std::string, std::string>> headers;
    if (!cfg_.api_key.empty()) headers.emplace_back("Authorization", "Bearer " + cfg_.api_key);
    auto res = http_post_json(cfg_.endpoint, req.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace),
                              headers, cfg_.timeout_s);
    if (res.status != 200) {
        throw ProviderError(provider_id(), res.status == 0 ? res.body : "HTTP " + std::to_string(res.status));
    }
    Embedding v;
    try {
        v = nlohmann::json::parse(res.body).at("data").at(0).at("embedding").get<Embedding>();
    } catch (const nlohmann::json::exception&) {
        throw ProviderError(provider_id(), "unexpected response shape");
    }
    double norm = 0;
    for (double x : v) norm += x * x;
    if (v.empty() || norm == 0) throw ProviderError(provider_id(), "empty embedding");
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    return v;
}

std::string RecordingLlmClient::complete(std::string_view system_prompt, std::string_view user_prompt) {
    std::string completion = inner_.complete(system_prompt, user_prompt);
    std::lock_guard lock(mu_);
    append_fixture(file_, {prompt_hash(system_prompt, user_prompt), std::string(system_prompt),
                           std::string(user_prompt), completion});
    return completion;
}

}  // namespace vme
