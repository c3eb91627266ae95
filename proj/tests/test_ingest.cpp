// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <fstream>

#include "support.hpp"
#include "vme/codec.hpp"
#include "vme/errors.hpp"
#include "vme/ingest.hpp"
#include "vme/store.hpp"

namespace vme {
namespace {

RawEvent edit(EventId id, TimestampMs ts, Source src, int line, int col, std::string text,
              std::string path = "src/a.py") {
    RawEvent e;
    e.event_id = id;
    e.timestamp = ts;
    e.source = src;
    e.kind = EventKind::edit_insert;
    e.path = std::move(path);
    e.range = TextRange{line, col, line, col};
    e.payload = std::move(text);
    return e;
}

RawEvent terminal(EventId id, TimestampMs ts, EventKind kind, std::string payload, Source src = Source::user) {
    RawEvent e;
    e.event_id = id;
    e.timestamp = ts;
    e.source = src;
    e.kind = kind;
    e.payload = std::move(payload);
    return e;
}

TEST(Preprocess, DropsIdeEdits) {
    std::vector<RawEvent> in = {edit(1, 0, Source::user, 1, 0, "a"), edit(2, 100, Source::ide, 50, 0, "x"),
                                edit(3, 10000, Source::user, 80, 0, "b")};
    auto out = preprocess(in);
    ASSERT_EQ(out.size(), 2u);
    EXPECT_EQ(out[0].event_id, 1u);
    EXPECT_EQ(out[1].event_id, 3u);
}

TEST(Preprocess, KeystrokesMergeIntoOneEdit) {
    std::vector<RawEvent> in;
    for (int i = 0; i < 5; ++i) in.push_back(edit(i + 1, i * 300, Source::user, 4, i, std::string(1, 'a' + i)));
    Preprocessor p;
    std::vector<RawEvent> out;
    for (const auto& e : in) p.push(e, out);
    p.finish(out);
    ASSERT_EQ(out.size(), 1u);
    EXPECT_EQ(out[0].event_id, 1u);
    EXPECT_EQ(decode_replace_payload(*out[0].payload).inserted, "abcde");
    EXPECT_EQ(p.stats().merged, 4u);
}

TEST(Preprocess, GapBeyondMergeWindowSplits) {
    std::vector<RawEvent> in = {edit(1, 0, Source::user, 4, 0, "a"), edit(2, 2001, Source::user, 4, 1, "b")};
    EXPECT_EQ(preprocess(in).size(), 2u);
}

TEST(Preprocess, TerminalOutputFoldsIntoCommand) {
    std::vector<RawEvent> in = {
        terminal(1, 0, EventKind::terminal_command, "cargo test"),
        terminal(2, 10, EventKind::terminal_output, "running 2 tests", Source::ide),
        terminal(3, 20, EventKind::terminal_output, "test a ... FAILED", Source::ide),
        terminal(4, 30, EventKind::terminal_output, "#vme-exit 101", Source::ide),
    };
    auto out = preprocess(in);
    ASSERT_EQ(out.size(), 1u);
    EXPECT_EQ(out[0].kind, EventKind::terminal_command);
    EXPECT_EQ(*out[0].payload, "cargo test\nrunning 2 teststest a ... FAILED\n#vme-exit 101");
    auto ctx = enrich_context(out[0]);
    ASSERT_TRUE(ctx.command);
    EXPECT_EQ(ctx.command->exit_code, 101);
    EXPECT_FALSE(ctx.command->success);
    EXPECT_EQ(ctx.command->domain, CommandDomain::test);
}

TEST(Preprocess, OutOfOrderIsStreamError) {
    Preprocessor p;
    std::vector<RawEvent> out;
    p.push(edit(1, 500, Source::user, 1, 0, "a"), out);
    EXPECT_THROW(p.push(edit(2, 499, Source::user, 1, 0, "b"), out), StreamError);
}

TEST(Enrich, CommandDomains) {
    EXPECT_EQ(classify_command("git commit -m x"), CommandDomain::vcs);
    EXPECT_EQ(classify_command("cargo run"), CommandDomain::run);
    EXPECT_EQ(classify_command("cargo build --release"), CommandDomain::build);
    EXPECT_EQ(classify_command("make -j4"), CommandDomain::build);
    EXPECT_EQ(classify_command("npm run build"), CommandDomain::build);
    EXPECT_EQ(classify_command("pytest -q"), CommandDomain::test);
    EXPECT_EQ(classify_command("go test ./..."), CommandDomain::test);
    EXPECT_EQ(classify_command("pip install numpy"), CommandDomain::package);
    EXPECT_EQ(classify_command("RUST_LOG=debug sudo cargo test"), CommandDomain::test);
    EXPECT_EQ(classify_command("ls -la"), CommandDomain::navigation);
    EXPECT_EQ(classify_command("frobnicate"), CommandDomain::other);
}

TEST(Enrich, CargoRunExit101) {
    auto ctx = enrich_context(terminal(1, 0, EventKind::terminal_command, "cargo run\n#vme-exit 101"));
    ASSERT_TRUE(ctx.command);
    EXPECT_EQ(ctx.command->domain, CommandDomain::run);
    EXPECT_FALSE(ctx.command->success);
    EXPECT_FALSE(ctx.diff);
}

TEST(Enrich, GitCommitExit0) {
    auto ctx = enrich_context(terminal(1, 0, EventKind::terminal_command, "git commit -m x\n#vme-exit 0"));
    EXPECT_EQ(ctx.command->domain, CommandDomain::vcs);
    EXPECT_TRUE(ctx.command->success);
}

TEST(Enrich, MissingExitIsUnknownAndFailed) {
    auto ctx = enrich_context(terminal(1, 0, EventKind::terminal_command, "make"));
    EXPECT_TRUE(ctx.command->exit_unknown());
    EXPECT_FALSE(ctx.command->success);
}

TEST(Enrich, InsertLineCounts) {
    auto ctx = enrich_context(edit(1, 0, Source::user, 1, 0, "line1\nline2\n"));
    ASSERT_TRUE(ctx.diff);
    EXPECT_EQ(ctx.diff->added_lines, 2);
    EXPECT_EQ(ctx.diff->removed_lines, 0);
}

TEST(Enrich, OutputExcerptCapped) {
    std::string payload = "cargo build\n";
    for (int i = 0; i < 2000; ++i) payload += "warning: unused variable \xe2\x82\xac\n";
    payload += "#vme-exit 0";
    auto ctx = enrich_context(terminal(1, 0, EventKind::terminal_command, payload));
    const auto& ex = ctx.command->output_excerpt;
    EXPECT_LE(ex.size(), kOutputExcerptCap);
    EXPECT_EQ(ex.substr(ex.size() - kTruncationSentinel.size()), kTruncationSentinel);
    EXPECT_TRUE(ctx.command->success);
}

TEST(CapExcerpt, NeverSplitsUtf8) {
    test::Gen g(5);
    for (int i = 0; i < 300; ++i) {
        std::string s = g.text(200) + g.text(200);
        const std::size_t cap = static_cast<std::size_t>(g.range(16, 120));
        auto out = cap_excerpt(s, cap);
        EXPECT_LE(out.size(), std::max(cap, s.size() <= cap ? s.size() : cap));
        // A continuation byte never directly precedes the sentinel.
        if (out.size() != s.size()) {
            auto body = out.substr(0, out.size() - kTruncationSentinel.size());
            if (!body.empty()) {
                auto last = static_cast<unsigned char>(body.back());
                EXPECT_FALSE(last >= 0xC0) << "dangling lead byte";
            }
            EXPECT_EQ(s.compare(0, body.size(), body), 0);
        }
    }
}

TEST(Resolve, InnermostScope) {
    SymbolIndex idx;
    idx.add("src/bar.py", {{"Bar"}, {30, 80}});
    idx.add("src/bar.py", {{"Bar", "foo"}, {40, 50}});
    auto obj = resolve_object(edit(1, 0, Source::user, 42, 0, "x", "src/bar.py"), idx);
    EXPECT_EQ(obj.path, "src/bar.py");
    EXPECT_EQ(obj.symbol_path, (std::vector<std::string>{"Bar", "foo"}));
    ASSERT_TRUE(obj.span);
    EXPECT_EQ(obj.span->start_line, 40);
    EXPECT_EQ(obj.reference(), "src/bar.py::Bar::foo");
}

TEST(Resolve, UnindexedFileIsFileLevel) {
    SymbolIndex idx;
    auto obj = resolve_object(edit(1, 0, Source::user, 1, 0, "x", "notes.md"), idx);
    EXPECT_TRUE(obj.symbol_path.empty());
    EXPECT_EQ(obj.path, "notes.md");
}

TEST(SymbolIndexFile, ParseSerializeRoundTrip) {
    const std::string text = "# comment\nsrc/a.rs\tImpl::run\t10\t20\nsrc/a.rs\tImpl\t1\t40\n";
    auto idx = SymbolIndex::parse(text);
    EXPECT_TRUE(idx.well_formed());
    auto again = SymbolIndex::parse(idx.serialize());
    EXPECT_EQ(again.serialize(), idx.serialize());
    EXPECT_EQ(idx.entries("src/a.rs").size(), 2u);
    EXPECT_THROW((void)SymbolIndex::parse("src/a.rs\tX\tten\t20\n"), ParseError);
}

TEST(SymbolIndexFile, OverlapIsNotWellFormed) {
    auto idx = SymbolIndex::parse("a.py\tA\t1\t10\na.py\tB\t5\t15\n");
    EXPECT_FALSE(idx.well_formed());
}

TEST(Extract, EditAndCommandActions) {
    SymbolIndex idx;
    auto lb = extract_lb(edit(1, 5, Source::user, 1, 0, "x\n"), idx);
    ASSERT_TRUE(lb);
    EXPECT_EQ(lb->action.verb, ActionVerb::add_text);
    EXPECT_TRUE(lb->context.diff);

    auto cmd = extract_lb(terminal(2, 6, EventKind::terminal_command, "cargo test\n#vme-exit 0"), idx);
    ASSERT_TRUE(cmd);
    EXPECT_EQ(cmd->action.verb, ActionVerb::execute);
    EXPECT_EQ(cmd->action.category, ActionCategory::terminal_command);
    EXPECT_EQ(cmd->object.path, ".");
    EXPECT_TRUE(cmd->context.command);
    EXPECT_TRUE(satisfies_invariants(*cmd));
}

TEST(Extract, UnclassifiableKindsCounted) {
    SymbolIndex idx;
    BehaviorExtractor x(idx);
    RawEvent close;
    close.kind = EventKind::file_close;
    close.path = "a.py";
    EXPECT_FALSE(x(close));
    RawEvent step;
    step.kind = EventKind::debug_step;
    EXPECT_FALSE(x(step));
    EXPECT_EQ(x.skipped(), 2u);
    EXPECT_EQ(x.skipped_by_kind().at(EventKind::file_close), 1u);
}

TEST(Extract, TwentyEventFixtureYieldsFourteenLbs) {
    std::ifstream in(test::fixture("trace20.events"));
    std::string line;
    std::getline(in, line);
    check_header(line, kEventsHeader);
    std::vector<RawEvent> events;
    while (std::getline(in, line)) events.push_back(parse_event(line));
    ASSERT_EQ(events.size(), 20u);

    const auto idx = SymbolIndex::load(test::fixture("trace20.symbols").string());
    Preprocessor p;
    std::vector<RawEvent> pre;
    for (const auto& e : events) p.push(e, pre);
    p.finish(pre);
    BehaviorExtractor x(idx);
    std::vector<LogLevelBehavior> lbs;
    for (const auto& e : pre) {
        if (auto lb = x(e)) lbs.push_back(*lb);
    }
    // Hand count: 1 ide edit filtered, 2 keystrokes merged, 2 output chunks
    // folded, 1 file_close without an action.
    EXPECT_EQ(p.stats().filtered, 1u);
    EXPECT_EQ(p.stats().merged, 2u);
    EXPECT_EQ(p.stats().folded, 2u);
    EXPECT_EQ(x.skipped(), 1u);
    EXPECT_EQ(lbs.size(), 14u);
    for (const auto& lb : lbs) EXPECT_TRUE(satisfies_invariants(lb));
    EXPECT_EQ(lbs[1].object.symbol_path, (std::vector<std::string>{"get_user"}));
    EXPECT_EQ(lbs[1].action.verb, ActionVerb::modify_text);
}

}  // namespace
}  // namespace vme
