// SPDX-License-Identifier: Apache-2.0
#include "vme/qa.hpp"

#include <algorithm>
#include <fstream>
#include <json.hpp>
#include <set>

#include "vme/errors.hpp"
#include "vme/store.hpp"
#include "vme_templates.hpp"

namespace vme {

namespace {

constexpr std::string_view kFixedKeys[] = {
    "language_distribution", "top_libraries",   "tech_stack_domains",
    "time_to_fix",           "tb_completion_ratio", "comment_density",
    "active_hours",          "shortcut_usage",  "adoption_events_per_week",
    "unfamiliar_repo_navigation_load", "revisit_cyclicality", "learning_score",
};

constexpr std::string_view kFamilies[] = {"language_loc", "productivity", "command_success_rate"};

std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

/// Router line to a bare key: drops bullets, backticks, trailing commas and
/// a trailing ": description".
std::string clean_key(std::string_view line) {
    std::string s = trim(line);
    if (s.rfind("- ", 0) == 0 || s.rfind("* ", 0) == 0) s = trim(std::string_view(s).substr(2));
    s.erase(std::remove(s.begin(), s.end(), '`'), s.end());
    if (auto colon = s.find(':'); colon != std::string::npos) s = s.substr(0, colon);
    while (!s.empty() && (s.back() == ',' || s.back() == ';')) s.pop_back();
    return trim(s);
}

std::string key_as_text(std::string_view key) {
    std::string out(key);
    for (auto& c : out) {
        if (c == '_' || c == '.') c = ' ';
    }
    return out;
}

}  // namespace

std::string_view to_string(QaMode m) noexcept { return m == QaMode::baseline ? "baseline" : "personalized"; }

bool is_catalog_family(std::string_view key) {
    return std::find(std::begin(kFamilies), std::end(kFamilies), key) != std::end(kFamilies);
}

bool is_catalog_key(std::string_view key) {
    if (std::find(std::begin(kFixedKeys), std::end(kFixedKeys), key) != std::end(kFixedKeys)) return true;
    auto dot = key.find('.');
    if (dot == std::string_view::npos || dot + 1 == key.size()) return false;
    return is_catalog_family(key.substr(0, dot)) && key.find('.', dot + 1) == std::string_view::npos;
}

RequiredMetrics route(const Query& q, const Persona& persona, LlmClient& client) {
    if (trim(q.text).empty()) throw UsageError("empty question");
    const std::string system = render_template(templates::router_system, {{"schema", persona_schema_description(persona)}});
    const std::string completion = client.complete(system, q.text);

    RequiredMetrics out;
    std::set<std::string> seen;
    auto add = [&](const std::string& key) {
        if (seen.insert(key).second) out.keys.push_back(key);
    };
    auto expand = [&](std::string_view family) {
        const std::string prefix = std::string(family) + ".";
        for (const auto* m : persona.all()) {
            if (m->key.rfind(prefix, 0) == 0) add(m->key);
        }
    };

    std::string_view rest = completion;
    while (!rest.empty()) {
        auto nl = rest.find('\n');
        std::string_view line = rest.substr(0, nl);
        rest.remove_prefix(nl == std::string_view::npos ? rest.size() : nl + 1);
        // Accept comma-separated keys on one line as well.
        std::string_view items = line;
        while (!items.empty()) {
            auto comma = items.find(',');
            std::string key = clean_key(items.substr(0, comma));
            items.remove_prefix(comma == std::string_view::npos ? items.size() : comma + 1);
            if (key.empty() || key == "NONE") continue;
            if (is_catalog_family(key)) {
                expand(key);
            } else if (is_catalog_key(key)) {
                add(key);
            } else {
                out.warnings.push_back("router returned unknown metric key: " + key);
            }
        }
    }
    if (out.keys.empty()) {
        out.defaulted = true;
        add("language_distribution");
        expand("productivity");
    }
    return out;
}

PersonaContext retrieve(const RequiredMetrics& m, const Persona& persona, EmbeddingProvider& provider) {
    PersonaContext ctx;
    std::set<std::string> used;
    std::vector<const std::string*> unmatched;
    for (const auto& key : m.keys) {
        if (ctx.snippets.size() >= kRetrieveTopK) break;
        if (const auto* metric = persona.find(key)) {
            if (used.insert(key).second) ctx.snippets.push_back({key, key, render_metric(*metric)});
        } else {
            unmatched.push_back(&key);
        }
    }
    const auto metrics = persona.all();
    for (const auto* key : unmatched) {
        if (ctx.snippets.size() >= kRetrieveTopK) break;
        const std::string probe = key_as_text(*key);
        const PersonaMetric* best = nullptr;
        double best_score = kRetrieveThreshold;
        for (const auto* metric : metrics) {
            if (used.count(metric->key)) continue;
            const double s = semantic_similarity(probe, metric->description, provider);
            if (s >= best_score && (!best || s > best_score)) {
                best = metric;
                best_score = s;
            }
        }
        if (best) {
            used.insert(best->key);
            ctx.snippets.push_back({best->key, *key, render_metric(*best)});
        }
    }
    return ctx;
}

std::vector<WorkspaceFile> collect_workspace(const std::filesystem::path& root) {
    namespace fs = std::filesystem;
    std::vector<WorkspaceFile> out;
    if (root.empty() || !fs::is_directory(root)) return out;
    std::vector<fs::path> files;
    for (auto it = fs::recursive_directory_iterator(root, fs::directory_options::skip_permission_denied);
         it != fs::recursive_directory_iterator(); ++it) {
        const auto name = it->path().filename().string();
        if (!name.empty() && name.front() == '.') {
            if (it->is_directory()) it.disable_recursion_pending();
            continue;
        }
        if (it->is_regular_file()) files.push_back(it->path());
    }
    std::sort(files.begin(), files.end());
    std::size_t used = 0;
    for (const auto& f : files) {
        if (used >= kWorkspaceBudget) break;
        std::ifstream in(f, std::ios::binary);
        std::string text(kWorkspaceBudget - used, '\0');
        in.read(text.data(), static_cast<std::streamsize>(text.size()));
        text.resize(static_cast<std::size_t>(in.gcount()));
        if (text.find('\0') != std::string::npos) continue;  // binary
        used += text.size();
        out.push_back({fs::relative(f, root).generic_string(), std::move(text)});
    }
    return out;
}

PromptBundle compose(const Query& q, const PersonaContext& ctx, const std::vector<WorkspaceFile>& files) {
    if (trim(q.text).empty()) throw UsageError("empty question");
    PromptBundle b;
    b.mode = q.mode;
    b.instruction = trim(templates::qa_instruction);
    b.query = q.text;
    if (q.mode == QaMode::personalized) {
        b.persona_context = ctx;
        for (const auto& s : ctx.snippets) b.provenance.push_back(s.key);
    }

    std::string ws;
    for (const auto& f : files) {
        std::string block = "### " + f.path + "\n" + f.snippet;
        if (!block.empty() && block.back() != '\n') block += '\n';
        if (ws.size() + block.size() > kWorkspaceBudget) {
            const std::size_t room = kWorkspaceBudget > ws.size() ? kWorkspaceBudget - ws.size() : 0;
            ws += block.substr(0, room);
            if (!ws.empty() && ws.back() != '\n') ws += '\n';
            ws += kWorkspaceTruncated;
            ws += '\n';
            b.workspace_truncated = true;
            break;
        }
        ws += block;
    }
    if (ws.empty()) ws = "(no workspace files supplied)\n";
    ws.pop_back();
    b.workspace_section = std::move(ws);
    return b;
}

RenderedPrompt render(const PromptBundle& b) {
    std::vector<std::string> sections;
    sections.push_back(b.instruction);
    if (b.mode == QaMode::personalized && !b.persona_context.empty()) {
        std::string lines;
        for (const auto& s : b.persona_context.snippets) lines += "- " + s.text + "\n";
        lines.pop_back();
        sections.push_back(trim(render_template(templates::qa_persona_section, {{"snippets", lines}})));
    }
    sections.push_back("## Workspace\n" + b.workspace_section);
    sections.push_back("## Question\n" + b.query);
    RenderedPrompt out;
    out.system = trim(templates::qa_system);
    for (std::size_t i = 0; i < sections.size(); ++i) {
        if (i) out.user += "\n\n";
        out.user += sections[i];
    }
    out.user += '\n';
    return out;
}

Answer answer(const PromptBundle& b, LlmClient& client, const AuditOptions& audit) {
    Answer a;
    a.prompt = render(b);
    a.provenance = b.provenance;
    a.client_id = client.client_id();
    try {
        a.text = client.complete(a.prompt.system, a.prompt.user);
    } catch (const LlmError& e) {
        throw LlmError(a.client_id, std::string(e.what()) + " (no answer produced; retry the question)");
    }
    if (audit.log) {
        nlohmann::ordered_json j;
        j["at"] = audit.at;
        j["query"] = b.query;
        j["mode"] = to_string(b.mode);
        j["provenance"] = b.provenance;
        j["client_id"] = a.client_id;
        j["prompt_hash"] = prompt_hash(a.prompt.system, a.prompt.user);
        if (audit.include_prompt) {
            j["system"] = a.prompt.system;
            j["prompt"] = a.prompt.user;
        }
        j["answer"] = a.text;
        auto log = AppendLog::open(*audit.log, "#vme-answers v1");
        log.append(j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace));
    }
    return a;
}

Answer ask(const Query& q, const std::optional<Persona>& persona, const std::vector<WorkspaceFile>& files,
           LlmClient& client, EmbeddingProvider& provider, const AuditOptions& audit,
           std::vector<std::string>* warnings) {
    PersonaContext ctx;
    if (q.mode == QaMode::personalized) {
        if (!persona) {
            throw UsageError("no persona snapshot yet; ingest activity and run `vme persona` first, or use --baseline");
        }
        auto required = route(q, *persona, client);
        if (warnings) warnings->insert(warnings->end(), required.warnings.begin(), required.warnings.end());
        ctx = retrieve(required, *persona, provider);
    }
    return answer(compose(q, ctx, files), client, audit);
}

}  // namespace vme
