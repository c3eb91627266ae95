// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <fstream>

#include "oracles.hpp"
#include "vme/errors.hpp"
#include "vme/tasks.hpp"

namespace vme {
namespace {

TEST(RelatednessProperties, ThousandPairs) { EXPECT_EQ(test::check_relatedness_properties(1, 1000), ""); }

TEST(Prune, SingletonKept) {
    HashedBagOfTokens p;
    std::vector<LogLevelBehavior> one = {test::edit_lb(1, test::kT0, "a.py", "x\n")};
    auto r = prune(one, {}, p);
    EXPECT_EQ(r.retained.size(), 1u);
    EXPECT_TRUE(r.noise.empty());
}

TEST(Prune, LateUnrelatedNavigationPruned) {
    HashedBagOfTokens p;
    const RelatednessParams params;
    std::vector<LogLevelBehavior> w;
    for (int i = 0; i < 10; ++i) {
        w.push_back(test::edit_lb(i + 1, test::kT0 + i * 3000, "src/api/handlers.py", "    total += item.price\n",
                                  {"Cart", "total"}));
    }
    w.push_back(test::nav_lb(11, test::kT0 + 27000 + 600000, "docs/release/notes.md"));

    // Oracle: every R between the navigation and the burst is below theta_p.
    for (int i = 0; i < 10; ++i) EXPECT_LT(relatedness(w[10], w[static_cast<std::size_t>(i)], params, p), params.theta_p);

    auto r = prune(w, params, p);
    ASSERT_EQ(r.noise.size(), 1u);
    EXPECT_EQ(r.noise[0].lb.lb_id, 11u);
    EXPECT_EQ(r.retained.size(), 10u);
}

TEST(Dbscan, IdenticalPointsOneCluster) {
    RelatednessMatrix m(6, std::vector<double>(36, 1.0));
    auto r = dbscan(m, 0.45, 3);
    ASSERT_EQ(r.clusters.size(), 1u);
    EXPECT_EQ(r.clusters[0].size(), 6u);
    EXPECT_TRUE(r.noise.empty());
}

TEST(Dbscan, TwoBurstsWithSparseGap) {
    // Points 0-4 and 8-12 are tight; 5-7 sit between with weak links.
    const std::size_t n = 13;
    std::vector<double> v(n * n, 0.1);
    for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
    auto link = [&](std::size_t a, std::size_t b, double r) { v[a * n + b] = v[b * n + a] = r; };
    for (std::size_t a = 0; a < 5; ++a) {
        for (std::size_t b = a + 1; b < 5; ++b) link(a, b, 0.9);
    }
    for (std::size_t a = 8; a < 13; ++a) {
        for (std::size_t b = a + 1; b < 13; ++b) link(a, b, 0.85);
    }
    link(4, 5, 0.4);
    link(6, 7, 0.3);
    link(7, 8, 0.45);
    RelatednessMatrix m(n, v);
    auto got = dbscan(m, 0.45, 3);
    EXPECT_EQ(test::as_partition(got), test::as_partition(test::reference_dbscan(m, 0.45, 3)));
    ASSERT_EQ(got.clusters.size(), 2u);
    EXPECT_EQ(got.clusters[0], (std::vector<std::size_t>{0, 1, 2, 3, 4}));
    EXPECT_EQ(got.clusters[1], (std::vector<std::size_t>{8, 9, 10, 11, 12}));
    EXPECT_EQ(got.noise, (std::vector<std::size_t>{5, 6, 7}));
}

TEST(Dbscan, OracleEquivalence) { EXPECT_EQ(test::check_dbscan_oracle(99, 200), ""); }

TEST(Cluster, IndependentOfInputOrder) {
    HashedBagOfTokens p;
    test::Gen g(4);
    std::vector<LogLevelBehavior> lbs;
    for (int i = 0; i < 30; ++i) lbs.push_back(test::random_lb(g, static_cast<LbId>(i + 1), test::kT0 + i * 4000));
    auto a = cluster(lbs, {}, p);
    std::reverse(lbs.begin(), lbs.end());
    auto b = cluster(lbs, {}, p);
    EXPECT_EQ(a.clusters, b.clusters);
    EXPECT_EQ(a.noise, b.noise);
}

TEST(AssembleTb, Durations) {
    auto one = test::edit_lb(1, 5000, "a.py", "x\n");
    std::vector<LogLevelBehavior> single = {one};
    EXPECT_EQ(assemble_tb(single).delta_t, 0.0);

    std::vector<LogLevelBehavior> two = {test::edit_lb(2, 61000, "a.py", "y\n"), test::edit_lb(1, 1000, "a.py", "x\n")};
    auto tb = assemble_tb(two);
    EXPECT_DOUBLE_EQ(tb.delta_t, 60.0);
    EXPECT_EQ(tb.lbs, (std::vector<LbId>{1, 2}));
    EXPECT_EQ(tb.start_ts, 1000);
    EXPECT_EQ(tb.end_ts, 61000);
    EXPECT_TRUE(tb.task.empty());
}

std::vector<LogLevelBehavior> api_edits() {
    return {
        test::edit_lb(1, test::kT0, "src/api/routes.py", "@app.get('/users')\n", {"users"}),
        test::edit_lb(2, test::kT0 + 2000, "src/api/routes.py", "def users():\n", {"users"}),
        test::edit_lb(3, test::kT0 + 4000, "src/api/routes.py", "    return db.all()\n", {"users"}),
        test::edit_lb(4, test::kT0 + 6000, "src/api/schema.py", "class User: ...\n"),
    };
}

TEST(KeyObjects, MostEditedObjectSelected) {
    MockLlmClient mock;
    auto lbs = api_edits();
    auto tb = assemble_tb(lbs);
    auto sel = select_key_objects(tb, lbs, mock);
    ASSERT_EQ(sel.objects.size(), 1u);
    EXPECT_EQ(sel.objects[0].reference(), "src/api/routes.py::users");
    EXPECT_FALSE(sel.unparseable);
}

TEST(KeyObjects, HallucinatedPathDropped) {
    MockLlmClient mock;
    mock.add_rule("ROLE: key-object-selector", "", "OBJECT: src/ghost.py\nRATIONALE: looks important");
    auto lbs = api_edits();
    auto sel = select_key_objects(assemble_tb(lbs), lbs, mock);
    EXPECT_TRUE(sel.objects.empty());
    ASSERT_EQ(sel.warnings.size(), 1u);
    EXPECT_NE(sel.warnings[0].find("src/ghost.py"), std::string::npos);
}

TEST(KeyObjects, UnparseableFlagged) {
    MockLlmClient mock;
    mock.add_rule("ROLE: key-object-selector", "", "I think the routes file matters.");
    auto lbs = api_edits();
    auto sel = select_key_objects(assemble_tb(lbs), lbs, mock);
    EXPECT_TRUE(sel.objects.empty());
    EXPECT_TRUE(sel.unparseable);
}

TEST(Snippets, SpanMissingAndContainment) {
    test::TempDir ws;
    {
        std::ofstream out(ws / "lib.py");
        for (int i = 1; i <= 30; ++i) out << "line " << i << "\n";
    }
    CodeObject obj{"lib.py", {"f"}, LineSpan{10, 20}};
    auto s = read_snippet(obj, ws.path());
    std::string want;
    for (int i = 10; i <= 20; ++i) want += "line " + std::to_string(i) + "\n";
    EXPECT_EQ(s.text, want);
    EXPECT_FALSE(s.missing);

    auto gone = read_snippet(CodeObject{"deleted.py", {}, std::nullopt}, ws.path());
    EXPECT_TRUE(gone.missing);
    EXPECT_TRUE(gone.text.empty());

    EXPECT_THROW((void)read_snippet(CodeObject{"../../etc/passwd", {}, std::nullopt}, ws.path()), ContainmentError);
    EXPECT_THROW((void)read_snippet(CodeObject{"/etc/passwd", {}, std::nullopt}, ws.path()), ContainmentError);
}

TEST(Snippets, CappedAtEightKiB) {
    test::TempDir ws;
    {
        std::ofstream out(ws / "big.txt");
        for (int i = 0; i < 80; ++i) out << std::string(200, 'x') << "\n";
    }
    auto s = read_snippet(CodeObject{"big.txt", {}, std::nullopt}, ws.path());
    EXPECT_EQ(s.text.size(), kSnippetCap);
    EXPECT_TRUE(s.truncated);
}

TEST(Synthesis, EditOnlyFixture) {
    MockLlmClient mock;
    mock.add_rule("ROLE: task-summarizer", "src/api/routes.py", "Implemented a new API feature.");
    auto lbs = api_edits();
    auto tb = assemble_tb(lbs);
    test::TempDir ws;
    EXPECT_TRUE(summarize_tb(tb, lbs, mock, ws.path()));
    EXPECT_EQ(tb.task, "Implemented a new API feature.");
    EXPECT_FALSE(tb.needs_retry);
}

TEST(Synthesis, FailingCommandFixture) {
    MockLlmClient mock;
    mock.add_rule("ROLE: task-summarizer", "[failed]", "Attempted to fix exception X thrown in code segment A.");
    auto lbs = api_edits();
    lbs.push_back(test::cmd_lb(5, test::kT0 + 8000, "pytest tests/test_api.py", CommandDomain::test, 1,
                               "KeyError: 'id'"));
    auto tb = assemble_tb(lbs);
    test::TempDir ws;
    summarize_tb(tb, lbs, mock, ws.path());
    EXPECT_EQ(tb.task, "Attempted to fix exception X thrown in code segment A.");
}

TEST(Synthesis, LongReplyCutToTwoSentences) {
    MockLlmClient mock;
    mock.add_rule("ROLE: task-summarizer", "", "Added routes.\nWired the schema. Then wrote docs. And more.");
    auto lbs = api_edits();
    auto tb = assemble_tb(lbs);
    synthesize_task(tb, lbs, {}, mock);
    EXPECT_EQ(tb.task, "Added routes. Wired the schema.");
}

TEST(Synthesis, OutageMarksRetryThenRecovers) {
    test::TempDir dir;
    test::TempDir ws;
    auto store = TaskStore::open(dir / "tbs.log");
    HashedBagOfTokens p;
    MockLlmClient mock;
    TaskRecognizer rec({}, p, mock, ws.path());

    mock.set_unavailable(true);
    auto first = rec.process_batch(api_edits(), &store);
    ASSERT_EQ(first.tbs.size(), 1u);
    EXPECT_EQ(first.tbs[0].task, kUnsummarizedTask);
    EXPECT_TRUE(first.tbs[0].needs_retry);
    EXPECT_EQ(rec.pending_retries().size(), 1u);

    mock.set_unavailable(false);
    auto second = rec.process_batch({}, &store);
    EXPECT_EQ(second.retried, (std::vector<TbId>{1}));
    EXPECT_TRUE(rec.pending_retries().empty());
    auto tbs = TaskStore::read(dir / "tbs.log");
    ASSERT_EQ(tbs.size(), 1u);
    EXPECT_NE(tbs[0].task, kUnsummarizedTask);
    EXPECT_FALSE(tbs[0].needs_retry);
}

TEST(Fixtures, RecordedPairReplaysByteIdentically) {
    test::TempDir dir;
    const auto file = dir / "fixtures.jsonl";
    MockLlmClient live;
    live.add_rule("ROLE: task-summarizer", "", "Refactored the user endpoint.\nKept the schema.");
    RecordingLlmClient recorder(live, file);
    auto lbs = api_edits();
    auto tb = assemble_tb(lbs);
    test::TempDir ws;
    summarize_tb(tb, lbs, recorder, ws.path());

    MockLlmClient replay;
    replay.load(file);
    auto again = assemble_tb(lbs);
    summarize_tb(again, lbs, replay, ws.path());
    EXPECT_EQ(again.task, tb.task);
    for (const auto& rec : load_fixtures(file)) {
        EXPECT_EQ(replay.complete(rec.system, rec.user), rec.completion);
    }
}

TEST(Batching, DensityBudget) {
    BatchingPolicy p;
    EXPECT_EQ(p.n_max(30), 40);
    EXPECT_EQ(p.n_max(2), 300);
    EXPECT_EQ(p.n_max(0.1), 400);
    EXPECT_TRUE(batching_policy(5, 5, 180, 200));
    EXPECT_FALSE(batching_policy(5, 5, 30, 200));
    EXPECT_TRUE(batching_policy(5, 5, 30, 900));
    EXPECT_TRUE(batching_policy(30, 40, 1, 60));
}

TEST(Recognizer, CarryOverIsCappedThenFinalized) {
    test::TempDir ws;
    HashedBagOfTokens p;
    MockLlmClient mock;
    TaskRecognizer rec({}, p, mock, ws.path());
    // Two LBs close in time: kept by pruning, too few for a cluster.
    std::vector<LogLevelBehavior> w = {
        test::edit_lb(1, test::kT0, "a/x.py", "x\n"),
        test::cmd_lb(2, test::kT0 + 500, "cargo test", CommandDomain::test, 0, "ok"),
    };
    auto r1 = rec.process_batch(w, nullptr);
    EXPECT_TRUE(r1.reconciles());
    const auto carried = r1.carry_over.size();
    ASSERT_GT(carried, 0u);
    std::size_t exhausted = 0;
    for (int i = 0; i < kMaxCarryOver; ++i) {
        auto r = rec.process_batch({}, nullptr);
        EXPECT_TRUE(r.reconciles());
        exhausted += r.exhausted.size();
    }
    EXPECT_EQ(exhausted, carried);
    EXPECT_TRUE(rec.carry_over().empty());
}

}  // namespace
}  // namespace vme
