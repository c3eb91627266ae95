// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <json.hpp>

#include "support.hpp"
#include "vme/codec.hpp"
#include "vme/errors.hpp"

namespace vme {
namespace {

RawEvent minimal_command() {
    RawEvent e;
    e.event_id = 7;
    e.timestamp = 1700000000000;
    e.kind = EventKind::terminal_command;
    e.payload = "cargo run";
    return e;
}

TEST(Codec, MinimalCommandCarriesEveryField) {
    const auto line = serialize_event(minimal_command());
    auto j = nlohmann::json::parse(line);
    for (const char* f : {"event_id", "timestamp", "source", "kind", "path", "range", "payload"}) {
        EXPECT_TRUE(j.contains(f)) << f;
    }
    EXPECT_EQ(line.rfind("{\"event_id\":7,\"timestamp\":1700000000000,\"source\":\"user\"", 0), 0u);
}

TEST(Codec, MultiLinePayloadStaysOnOneLine) {
    auto e = minimal_command();
    e.payload = "cargo test\nrunning 3 tests\n#vme-exit 101";
    const auto line = serialize_event(e);
    EXPECT_EQ(line.find('\n'), std::string::npos);
    EXPECT_EQ(parse_event(line), e);
}

TEST(Codec, MissingTimestampIsNamed) {
    try {
        (void)parse_event(R"({"event_id":1,"source":"user","kind":"file_save","path":"a","range":null,"payload":null})");
        FAIL();
    } catch (const ParseError& err) {
        EXPECT_STREQ(err.what(), "missing field: timestamp");
        EXPECT_EQ(err.field(), "timestamp");
    }
}

TEST(Codec, UnknownKindRejected) {
    EXPECT_THROW((void)parse_event(R"({"event_id":1,"timestamp":5,"source":"user","kind":"hover","path":null,"range":null,"payload":null})"),
                 ParseError);
}

TEST(Codec, UnknownFieldRejected) {
    auto j = nlohmann::json::parse(serialize_event(minimal_command()));
    j["extra"] = 1;
    EXPECT_THROW((void)parse_event(j.dump()), ParseError);
}

TEST(Codec, EditWithoutRangeRejected) {
    EXPECT_THROW((void)parse_event(R"({"event_id":1,"timestamp":5,"source":"user","kind":"edit_insert","path":"a.py","range":null,"payload":"x"})"),
                 ParseError);
}

TEST(Codec, TruncationReportsOffsetOfCut) {
    test::Gen g(11);
    for (int round = 0; round < 50; ++round) {
        const auto line = serialize_event(g.event(static_cast<EventId>(round + 1), test::kT0 + round));
        for (std::size_t cut = 1; cut < line.size(); ++cut) {
            try {
                (void)parse_event(std::string_view(line).substr(0, cut));
                FAIL() << "accepted truncated record: " << line.substr(0, cut);
            } catch (const ParseError& err) {
                EXPECT_EQ(err.offset(), cut) << line.substr(0, cut);
            }
        }
    }
}

TEST(Codec, HeaderGate) {
    EXPECT_NO_THROW(check_header("#vme-events v1", kEventsHeader));
    try {
        check_header("#vme-events v2", kEventsHeader);
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("unsupported schema version"), std::string::npos);
    }
    EXPECT_THROW(check_header("{\"event_id\":1}", kEventsHeader), ParseError);
}

TEST(Codec, EventRoundTripRandomized) {
    test::Gen g(2024);
    for (const auto& e : g.events(2000)) {
        const auto line = serialize_event(e);
        const auto back = parse_event(line);
        ASSERT_EQ(back, e) << line;
        ASSERT_EQ(serialize_event(back), line);
    }
}

TEST(Codec, LbRoundTrip) {
    auto a = test::edit_lb(3, test::kT0, "src/a.rs", "fn a() {}\n", {"Impl", "a"});
    a.object.span = LineSpan{4, 9};
    auto b = test::cmd_lb(4, test::kT0 + 10, "cargo run", CommandDomain::run, std::nullopt, "thread panicked");
    auto c = test::nav_lb(5, test::kT0 + 20, "src/b.rs");
    c.action.verb = ActionVerb::use_shortcut;
    c.context.detail = "ctrl+p";
    for (const auto& lb : {a, b, c}) {
        const auto line = serialize_lb(lb);
        EXPECT_EQ(parse_lb(line), lb);
        EXPECT_EQ(serialize_lb(parse_lb(line)), line);
    }
}

TEST(Codec, TbRoundTrip) {
    TaskLevelBehavior tb{9, 60.0, "Implemented a new API feature.", {1, 2, 5}, 1000, 61000, false};
    EXPECT_EQ(parse_tb(serialize_tb(tb)), tb);
    tb.task = std::string(kUnsummarizedTask);
    tb.needs_retry = true;
    EXPECT_EQ(parse_tb(serialize_tb(tb)), tb);
}

}  // namespace
}  // namespace vme
