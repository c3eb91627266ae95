// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "persona_fixtures.hpp"
#include "vme/persona.hpp"
#include "vme/qa.hpp"

namespace vme::test {

/// Persona over all fixture traces plus a few TBs with domain words.
inline Persona qa_persona() {
    std::vector<LogLevelBehavior> lbs;
    LbId next = 0;
    auto add = [&](std::vector<LogLevelBehavior> part, TimestampMs shift) {
        for (auto& lb : part) {
            lb.lb_id = ++next;
            lb.timestamp += shift;
            lbs.push_back(std::move(lb));
        }
    };
    add(swift_fixture(), 0);
    add(failure_rate_fixture(), 3600000);
    add(cyclicality_fixture(), 7200000);
    add(productivity_fixture(), 10800000);
    add(learning_fixture(), 14400000);
    std::vector<TaskLevelBehavior> tbs = {
        {1, 60, "Built the iOS screen layout for the app.", {1, 2}, lbs[0].timestamp, lbs[1].timestamp, false},
        {2, 60, "Fixed the api handler for the server.", {3, 4}, lbs[2].timestamp, lbs[3].timestamp, false},
    };
    return compute_persona(tbs, lbs);
}

inline const std::vector<std::string>& qa_queries() {
    static const std::vector<std::string> q = {
        "How do I run this App project?",
        "How do I build the project from scratch?",
        "Where are the tests and how do I run them?",
        "Give me an overview of the repository structure.",
        "What does the parse function in the API do?",
        "I want to learn the new library this repo uses. Where do I start?",
        "Why does the compile step fail on my machine?",
        "Explain the architecture of the networking layer.",
        "Which call sites use the cache?",
        "What is this?",
    };
    return q;
}

}  // namespace vme::test
