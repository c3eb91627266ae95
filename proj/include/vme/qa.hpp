// SPDX-License-Identifier: Apache-2.0
//
// Persona-aware repository Q&A: route the question to persona metrics,
// retrieve their rendered values, compose the prompt and ask the client.
// Baseline mode builds the same prompt without the persona section.
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vme/llm.hpp"
#include "vme/persona.hpp"
#include "vme/similarity.hpp"

namespace vme {

enum class QaMode { personalized, baseline };

[[nodiscard]] std::string_view to_string(QaMode m) noexcept;

struct Query {
    std::string text;
    std::filesystem::path workspace_root;
    QaMode mode = QaMode::personalized;
};

struct RequiredMetrics {
    std::vector<std::string> keys;  // unique, in router order
    std::vector<std::string> warnings;
    bool defaulted = false;  // router gave nothing usable
};

/// Whether `key` names a metric of the published catalog, e.g.
/// "language_distribution" or "productivity.python".
[[nodiscard]] bool is_catalog_key(std::string_view key);
/// Whether `key` names a family of keyed metrics ("productivity").
[[nodiscard]] bool is_catalog_family(std::string_view key);

/// Asks the client which metrics the question needs. The system prompt lists
/// the persona's keys and descriptions only. Unknown keys are dropped with a
/// warning, family keys expand to the persona's members, and an empty result
/// falls back to language_distribution plus productivity.
[[nodiscard]] RequiredMetrics route(const Query& q, const Persona& persona, LlmClient& client);

struct PersonaSnippet {
    std::string key;        // metric the text was rendered from
    std::string requested;  // required key that selected it
    std::string text;
    friend bool operator==(const PersonaSnippet&, const PersonaSnippet&) = default;
};

struct PersonaContext {
    std::vector<PersonaSnippet> snippets;
    [[nodiscard]] bool empty() const noexcept { return snippets.empty(); }
};

inline constexpr double kRetrieveThreshold = 0.6;
inline constexpr std::size_t kRetrieveTopK = 5;

/// Exact key matches first, then for each unmatched key the best metric whose
/// description scores at least kRetrieveThreshold; at most kRetrieveTopK.
[[nodiscard]] PersonaContext retrieve(const RequiredMetrics& m, const Persona& persona, EmbeddingProvider& provider);

struct WorkspaceFile {
    std::string path;
    std::string snippet;
};

inline constexpr std::size_t kWorkspaceBudget = 32 * 1024;
inline constexpr std::string_view kWorkspaceTruncated = "[... workspace context truncated]";

/// Regular files under `root` (hidden entries skipped), sorted by path,
/// read until the workspace budget is used up.
[[nodiscard]] std::vector<WorkspaceFile> collect_workspace(const std::filesystem::path& root);

struct PromptBundle {
    QaMode mode = QaMode::personalized;
    std::string instruction;
    PersonaContext persona_context;
    std::string query;
    std::string workspace_section;  // rendered under the size budget
    bool workspace_truncated = false;
    std::vector<std::string> provenance;
};

/// Deterministic assembly. In baseline mode persona_context and provenance
/// stay empty whatever is passed in.
[[nodiscard]] PromptBundle compose(const Query& q, const PersonaContext& ctx, const std::vector<WorkspaceFile>& files);

struct RenderedPrompt {
    std::string system;
    std::string user;
};

inline constexpr std::string_view kPersonaHeading = "## Developer Persona";

[[nodiscard]] RenderedPrompt render(const PromptBundle& b);

struct Answer {
    std::string text;
    std::vector<std::string> provenance;
    std::string client_id;
    RenderedPrompt prompt;
};

struct AuditOptions {
    std::optional<std::filesystem::path> log;  // answers.log; no audit when unset
    TimestampMs at = 0;
    bool include_prompt = false;  // --dump-prompt
};

/// One completion over the rendered prompt, then one audit record. Client
/// failures propagate as LlmError with a retry hint.
[[nodiscard]] Answer answer(const PromptBundle& b, LlmClient& client, const AuditOptions& audit = {});

/// route -> retrieve -> compose -> answer. Baseline mode never calls route.
/// Personalized mode without a persona throws UsageError.
[[nodiscard]] Answer ask(const Query& q, const std::optional<Persona>& persona, const std::vector<WorkspaceFile>& files,
                         LlmClient& client, EmbeddingProvider& provider, const AuditOptions& audit = {},
                         std::vector<std::string>* warnings = nullptr);

}  // namespace vme
