// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <fstream>
#include <json.hpp>

#include "qa_fixtures.hpp"
#include "vme/codec.hpp"
#include "vme/errors.hpp"
#include "vme/qa.hpp"
#include "vme/store.hpp"

namespace vme {
namespace {

class Qa : public ::testing::Test {
protected:
    Persona persona = test::qa_persona();
    MockLlmClient mock;
    HashedBagOfTokens provider;
};

TEST_F(Qa, RouterWorkedExample) {
    auto m = route({"How do I run this App project?", {}, QaMode::personalized}, persona, mock);
    EXPECT_EQ(m.keys, (std::vector<std::string>{"tech_stack_domains", "command_success_rate.run"}));
    EXPECT_FALSE(m.defaulted);
    EXPECT_TRUE(m.warnings.empty());
    // The router sees keys and descriptions, never values.
    const auto& sys = mock.history().back().system;
    EXPECT_NE(sys.find("command_success_rate.run"), std::string::npos);
    EXPECT_EQ(sys.find("42%"), std::string::npos);
}

TEST_F(Qa, RouterUnknownKeyDropped) {
    mock.add_rule("ROLE: persona-router", "", "favourite_colour\nlearning_score\n");
    auto m = route({"anything", {}, QaMode::personalized}, persona, mock);
    EXPECT_EQ(m.keys, (std::vector<std::string>{"learning_score"}));
    ASSERT_EQ(m.warnings.size(), 1u);
    EXPECT_NE(m.warnings[0].find("favourite_colour"), std::string::npos);
}

TEST_F(Qa, RouterEmptyUsesDefaults) {
    mock.add_rule("ROLE: persona-router", "", "");
    auto m = route({"anything", {}, QaMode::personalized}, persona, mock);
    EXPECT_TRUE(m.defaulted);
    EXPECT_EQ(m.keys, (std::vector<std::string>{"language_distribution", "productivity.python", "productivity.rust",
                                                "productivity.swift", "productivity.typescript"}));
}

TEST_F(Qa, RouterFamilyExpands) {
    mock.add_rule("ROLE: persona-router", "", "- `language_loc`, comment_density");
    auto m = route({"anything", {}, QaMode::personalized}, persona, mock);
    EXPECT_EQ(m.keys, (std::vector<std::string>{"language_loc.python", "language_loc.rust", "language_loc.swift",
                                                "language_loc.typescript", "comment_density"}));
}

TEST_F(Qa, RetrieveExactKey) {
    auto ctx = retrieve({{"revisit_cyclicality"}, {}, false}, persona, provider);
    ASSERT_EQ(ctx.snippets.size(), 1u);
    EXPECT_EQ(ctx.snippets[0].text, "Revisit cyclicality of file navigation: 0.82");
}

TEST_F(Qa, RetrieveSemanticSwift) {
    auto ctx = retrieve({{"swift proficiency"}, {}, false}, persona, provider);
    ASSERT_EQ(ctx.snippets.size(), 1u);
    EXPECT_EQ(ctx.snippets[0].key, "language_loc.swift");
    EXPECT_EQ(ctx.snippets[0].requested, "swift proficiency");
    EXPECT_EQ(ctx.snippets[0].text, "Proficiency in Swift: cumulative 523 lines of code");
}

TEST_F(Qa, RetrieveNoNeighbor) {
    auto ctx = retrieve({{"zzz qqq"}, {}, false}, persona, provider);
    EXPECT_TRUE(ctx.empty());
}

TEST_F(Qa, RetrieveCapsAtTopK) {
    RequiredMetrics m;
    for (const auto* metric : persona.all()) m.keys.push_back(metric->key);
    ASSERT_GT(m.keys.size(), kRetrieveTopK);
    EXPECT_EQ(retrieve(m, persona, provider).snippets.size(), kRetrieveTopK);
}

TEST_F(Qa, ComposeTwoSnippetsVerbatim) {
    PersonaContext ctx{{{"a", "a", "User's tech stack: mobile-app (1)"}, {"b", "b", "Learning score: 8 out of 10"}}};
    auto b = compose({"How do I run this?", {}, QaMode::personalized}, ctx, {});
    auto r = render(b);
    for (const auto& s : ctx.snippets) EXPECT_NE(r.user.find(s.text), std::string::npos);
    EXPECT_EQ(b.provenance, (std::vector<std::string>{"a", "b"}));
    EXPECT_EQ(render(compose({"How do I run this?", {}, QaMode::personalized}, ctx, {})).user, r.user);
}

TEST_F(Qa, BaselineHasNoPersonaMarkers) {
    PersonaContext ctx{{{"a", "a", "Learning score: 8 out of 10"}}};
    auto b = compose({"How do I run this?", {}, QaMode::baseline}, ctx, {});
    EXPECT_TRUE(b.persona_context.empty());
    EXPECT_TRUE(b.provenance.empty());
    auto r = render(b);
    EXPECT_EQ(r.user.find(kPersonaHeading), std::string::npos);
    EXPECT_EQ(r.user.find("Learning score"), std::string::npos);
}

TEST_F(Qa, WorkspaceTruncatedWithMarker) {
    std::vector<WorkspaceFile> files = {{"big.txt", std::string(kWorkspaceBudget + 100, 'a')}};
    auto b = compose({"q", {}, QaMode::baseline}, {}, files);
    EXPECT_TRUE(b.workspace_truncated);
    EXPECT_NE(b.workspace_section.find(kWorkspaceTruncated), std::string::npos);
    EXPECT_LE(b.workspace_section.size(), kWorkspaceBudget + kWorkspaceTruncated.size() + 2);
}

TEST_F(Qa, CollectWorkspaceSkipsHiddenAndBinary) {
    test::TempDir ws;
    std::filesystem::create_directories(ws / ".git");
    std::ofstream(ws / ".git" / "HEAD") << "ref";
    std::ofstream(ws / "README.md") << "# demo\n";
    std::ofstream(ws / "b.bin", std::ios::binary) << std::string("a\0b", 3);
    std::filesystem::create_directories(ws / "src");
    std::ofstream(ws / "src" / "main.rs") << "fn main() {}\n";
    auto files = collect_workspace(ws.path());
    ASSERT_EQ(files.size(), 2u);
    EXPECT_EQ(files[0].path, "README.md");
    EXPECT_EQ(files[1].path, "src/main.rs");
}

TEST_F(Qa, AnswerEchoesInjectedSnippets) {
    auto a = ask({"How do I run this App project?", {}, QaMode::personalized}, persona, {}, mock, provider);
    ASSERT_FALSE(a.provenance.empty());
    for (const auto& key : a.provenance) {
        EXPECT_NE(a.text.find(render_metric(*persona.find(key))), std::string::npos) << key;
    }
}

TEST_F(Qa, BaselineNeverRoutes) {
    auto a = ask({"How do I run this App project?", {}, QaMode::baseline}, std::nullopt, {}, mock, provider);
    EXPECT_EQ(mock.calls(), 1u);
    EXPECT_EQ(mock.history()[0].system.rfind("ROLE: qa-agent", 0), 0u);
    EXPECT_TRUE(a.provenance.empty());
}

TEST_F(Qa, PersonalizedWithoutPersonaIsUsageError) {
    EXPECT_THROW((void)ask({"q", {}, QaMode::personalized}, std::nullopt, {}, mock, provider), UsageError);
}

TEST_F(Qa, ClientFailureCarriesRetryHint) {
    mock.set_unavailable(true);
    try {
        (void)ask({"q", {}, QaMode::baseline}, std::nullopt, {}, mock, provider);
        FAIL();
    } catch (const LlmError& e) {
        EXPECT_NE(std::string(e.what()).find("retry"), std::string::npos);
    }
}

TEST_F(Qa, AuditLogWithDumpedPrompt) {
    test::TempDir dir;
    AuditOptions audit{dir / "answers.log", 1234, true};
    auto a = ask({"How do I run this App project?", {}, QaMode::personalized}, persona, {}, mock, provider, audit);
    auto records = AppendLog::read_records(dir / "answers.log", "#vme-answers v1");
    ASSERT_EQ(records.size(), 1u);
    auto j = nlohmann::json::parse(records[0]);
    EXPECT_EQ(j["prompt"], a.prompt.user);
    EXPECT_EQ(j["mode"], "personalized");
    EXPECT_EQ(j["prompt_hash"], prompt_hash(a.prompt.system, a.prompt.user));
    EXPECT_EQ(j["provenance"].get<std::vector<std::string>>(), a.provenance);
}

/// Removes the persona block ("## Developer Persona" up to the next blank
/// line plus that separator) from a rendered personalized prompt.
std::string without_persona_section(const std::string& user) {
    auto start = user.find(kPersonaHeading);
    if (start == std::string::npos) return user;
    auto end = user.find("\n\n", start);
    return user.substr(0, start) + user.substr(end + 2);
}

TEST_F(Qa, InjectionContractOverFixtureQueries) {
    std::vector<WorkspaceFile> files = {{"README.md", "# App\nRun with `swift run`.\n"}};
    for (const auto& text : test::qa_queries()) {
        MockLlmClient client;
        auto personalized = ask({text, {}, QaMode::personalized}, persona, files, client, provider);
        auto baseline = ask({text, {}, QaMode::baseline}, persona, files, client, provider);
        for (const auto& key : personalized.provenance) {
            const auto snippet = render_metric(*persona.find(key));
            EXPECT_NE(personalized.prompt.user.find(snippet), std::string::npos) << text;
            EXPECT_EQ(baseline.prompt.user.find(snippet), std::string::npos) << text;
        }
        EXPECT_EQ(baseline.prompt.user.find(kPersonaHeading), std::string::npos);
        EXPECT_EQ(without_persona_section(personalized.prompt.user), baseline.prompt.user) << text;
        EXPECT_EQ(personalized.prompt.system, baseline.prompt.system);
    }
}

}  // namespace
}  // namespace vme
