// SPDX-License-Identifier: Apache-2.0
//
// Chat-completion clients used by the summarization agents, the router and the
// Q&A agent.
#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "vme/similarity.hpp"

namespace vme {

class LlmClient {
public:
    virtual ~LlmClient() = default;
    /// Throws LlmError on failure.
    virtual std::string complete(std::string_view system_prompt, std::string_view user_prompt) = 0;
    [[nodiscard]] virtual std::string client_id() const = 0;
};

/// Stable hex key of a (system, user) prompt pair; fixture files are keyed by it.
[[nodiscard]] std::string prompt_hash(std::string_view system_prompt, std::string_view user_prompt);

struct FixtureRecord {
    std::string hash;
    std::string system;
    std::string user;
    std::string completion;
};

/// JSON-lines fixture file, one FixtureRecord per line.
[[nodiscard]] std::vector<FixtureRecord> load_fixtures(const std::filesystem::path& file);
void append_fixture(const std::filesystem::path& file, const FixtureRecord& rec);

/// Deterministic offline client. Resolution order: exact prompt-hash table,
/// then substring rules (first match wins), then a built-in responder that
/// understands the engine's own prompt roles. Identical prompts always yield
/// identical completions.
class MockLlmClient final : public LlmClient {
public:
    MockLlmClient() = default;

    std::string complete(std::string_view system_prompt, std::string_view user_prompt) override;
    [[nodiscard]] std::string client_id() const override { return "mock"; }

    void add_exact(std::string_view system_prompt, std::string_view user_prompt, std::string completion);
    /// Responds with `completion` when both prompts contain the given needles.
    void add_rule(std::string system_needle, std::string user_needle, std::string completion);
    void load(const std::filesystem::path& fixture_file);

    /// While set, every call throws LlmError (outage injection).
    void set_unavailable(bool down) { unavailable_ = down; }
    [[nodiscard]] std::size_t calls() const noexcept { return calls_; }

    struct Call {
        std::string system;
        std::string user;
    };
    [[nodiscard]] const std::vector<Call>& history() const noexcept { return history_; }

private:
    struct Rule {
        std::string system_needle;
        std::string user_needle;
        std::string completion;
    };

    std::map<std::string, std::string> exact_;
    std::vector<Rule> rules_;
    bool unavailable_ = false;
    std::size_t calls_ = 0;
    std::vector<Call> history_;
};

/// The responder MockLlmClient falls back to; exposed for tests.
[[nodiscard]] std::string builtin_mock_response(std::string_view system_prompt, std::string_view user_prompt);

struct HttpLlmConfig {
    std::string endpoint;  // full URL of an OpenAI-compatible /chat/completions
    std::string model;
    std::string api_key;   // taken from the environment, never from files
    int timeout_s = 60;
};

/// OpenAI-compatible chat completions over HTTP(S).
class HttpLlmClient final : public LlmClient {
public:
    explicit HttpLlmClient(HttpLlmConfig cfg) : cfg_(std::move(cfg)) {}

    std::string complete(std::string_view system_prompt, std::string_view user_prompt) override;
    [[nodiscard]] std::string client_id() const override { return "http:" + cfg_.model; }

private:
    HttpLlmConfig cfg_;
};

/// OpenAI-compatible /embeddings endpoint; vectors are L2-normalized.
/// Throws ProviderError on failure.
class HttpEmbeddingProvider final : public EmbeddingProvider {
public:
    explicit HttpEmbeddingProvider(HttpLlmConfig cfg) : cfg_(std::move(cfg)) {}

    Embedding embed(std::string_view text) override;
    [[nodiscard]] std::string provider_id() const override { return "http:" + cfg_.model; }

private:
    HttpLlmConfig cfg_;
};

/// Forwards to a live client and records each exchange as a fixture.
class RecordingLlmClient final : public LlmClient {
public:
    RecordingLlmClient(LlmClient& inner, std::filesystem::path fixture_file)
        : inner_(inner), file_(std::move(fixture_file)) {}

    std::string complete(std::string_view system_prompt, std::string_view user_prompt) override;
    [[nodiscard]] std::string client_id() const override { return inner_.client_id(); }

private:
    LlmClient& inner_;
    std::filesystem::path file_;
    std::mutex mu_;
};

/// Replaces `{{name}}` placeholders; throws UsageError on an unbound name.
[[nodiscard]] std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& vars);

}  // namespace vme
