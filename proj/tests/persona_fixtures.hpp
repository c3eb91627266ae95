// SPDX-License-Identifier: Apache-2.0
//
// Hand-built LB fixtures whose metric values are fixed by construction.
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "support.hpp"
#include "vme/persona.hpp"

namespace vme::test {

/// 110 added Python lines spread over 24 distinct 5-minute buckets (2 h).
inline std::vector<LogLevelBehavior> productivity_fixture() {
    std::vector<LogLevelBehavior> lbs;
    LbId id = 0;
    for (int b = 0; b < 24; ++b) {
        const int lines = b < 14 ? 5 : 4;  // 14*5 + 10*4 = 110
        std::string text;
        for (int i = 0; i < lines; ++i) text += "x = compute(" + std::to_string(i) + ")\n";
        lbs.push_back(edit_lb(++id, kT0 + b * kActivityBucketMs + 1000, "svc/core.py", text));
    }
    return lbs;
}

/// Twelve `cargo run` commands, seven of them failing.
inline std::vector<LogLevelBehavior> failure_rate_fixture() {
    std::vector<LogLevelBehavior> lbs;
    for (int i = 0; i < 12; ++i) {
        const bool fail = i % 12 < 7;
        lbs.push_back(cmd_lb(static_cast<LbId>(i + 1), kT0 + i * 60000, "cargo run", CommandDomain::run,
                             fail ? 101 : 0, fail ? "thread 'main' panicked" : ""));
    }
    return lbs;
}

/// One session of 50 navigations over 9 files: 41 land on a file already
/// visited in the session.
inline std::vector<LogLevelBehavior> cyclicality_fixture() {
    std::vector<LogLevelBehavior> lbs;
    LbId id = 0;
    for (int i = 0; i < 50; ++i) {
        const int file = i < 9 ? i : (i * 7) % 9;
        lbs.push_back(nav_lb(++id, kT0 + i * 10000, "src/mod" + std::to_string(file) + ".rs",
                             i % 3 ? ActionVerb::navigate : ActionVerb::open_file));
    }
    return lbs;
}

/// Seven days of commands whose daily failure rate falls 0.7 -> 0.1, with
/// Python as the first-day stack and three later adoptions (Rust, serde,
/// TypeScript).
inline std::vector<LogLevelBehavior> learning_fixture() {
    std::vector<LogLevelBehavior> lbs;
    LbId id = 0;
    constexpr TimestampMs day = 86400000;
    lbs.push_back(edit_lb(++id, kT0, "app/main.py", "import requests\n"));
    for (int d = 0; d < 7; ++d) {
        const int fails = 7 - d;  // of 10
        for (int c = 0; c < 10; ++c) {
            lbs.push_back(cmd_lb(++id, kT0 + d * day + 3600000 + c * 60000, "cargo build", CommandDomain::build,
                                 c < fails ? 1 : 0));
        }
        if (d == 2) lbs.push_back(edit_lb(++id, kT0 + d * day + 7200000, "cli/src/main.rs", "fn main() {}\n"));
        if (d == 4) lbs.push_back(edit_lb(++id, kT0 + d * day + 7200000, "cli/src/io.rs", "use serde::Serialize;\n"));
        if (d == 5) lbs.push_back(edit_lb(++id, kT0 + d * day + 7200000, "web/app.ts", "const x = 1;\n"));
    }
    return lbs;
}

/// 523 added Swift lines.
inline std::vector<LogLevelBehavior> swift_fixture() {
    std::vector<LogLevelBehavior> lbs;
    LbId id = 0;
    int remaining = 523;
    while (remaining > 0) {
        const int n = std::min(remaining, 50);
        std::string text;
        for (int i = 0; i < n; ++i) text += "let v = View()\n";
        lbs.push_back(edit_lb(++id, kT0 + static_cast<TimestampMs>(id) * 20000, "App/Sources/ContentView.swift", text));
        remaining -= n;
    }
    return lbs;
}

/// Confirmation sets with hand-checked accuracy (correct / total).
struct AccuracyCase {
    std::vector<bool> confirmations;
    double expected;
};

inline std::vector<AccuracyCase> accuracy_table() {
    auto set = [](int yes, int no) {
        std::vector<bool> v(static_cast<std::size_t>(yes), true);
        v.insert(v.end(), static_cast<std::size_t>(no), false);
        return v;
    };
    return {
        {set(7, 3), 0.7},   {set(10, 0), 1.0},  {set(0, 10), 0.0},   {set(1, 0), 1.0},
        {set(0, 1), 0.0},   {set(1, 1), 0.5},   {set(3, 1), 0.75},   {set(2, 3), 0.4},
        {set(5, 3), 0.625}, {set(9, 1), 0.9},   {set(1, 4), 0.2},    {set(7, 1), 0.875},
    };
}

}  // namespace vme::test
