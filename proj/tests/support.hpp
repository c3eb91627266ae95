// SPDX-License-Identifier: Apache-2.0
//
// Shared test helpers: scratch directories, LB builders and seeded
// generators for property tests.
#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "vme/model.hpp"

namespace vme::test {

/// Fixture directory baked in at configure time.
inline std::filesystem::path fixture(const std::string& name) {
    return std::filesystem::path(VME_FIXTURE_DIR) / name;
}

/// Fresh directory removed on scope exit.
class TempDir {
public:
    TempDir() {
        static int counter = 0;
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("vme-test-" + std::to_string(rd()) + "-" + std::to_string(++counter));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    [[nodiscard]] const std::filesystem::path& path() const { return path_; }
    [[nodiscard]] std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

private:
    std::filesystem::path path_;
};

inline constexpr TimestampMs kT0 = 1740992400000;  // 2025-03-03T09:00:00Z

inline LogLevelBehavior edit_lb(LbId id, TimestampMs ts, std::string path, std::string added,
                                std::vector<std::string> scopes = {}) {
    LogLevelBehavior lb;
    lb.lb_id = id;
    lb.timestamp = ts;
    lb.action = {ActionCategory::ide_operation, ActionVerb::add_text};
    lb.object.path = std::move(path);
    lb.object.symbol_path = std::move(scopes);
    DiffInfo d;
    d.added_lines = count_lines(added);
    d.added_text = std::move(added);
    lb.context.diff = d;
    return lb;
}

inline LogLevelBehavior nav_lb(LbId id, TimestampMs ts, std::string path,
                               ActionVerb verb = ActionVerb::navigate) {
    LogLevelBehavior lb;
    lb.lb_id = id;
    lb.timestamp = ts;
    lb.action = {ActionCategory::ide_operation, verb};
    lb.object.path = std::move(path);
    lb.context.diff = DiffInfo{};
    return lb;
}

inline LogLevelBehavior cmd_lb(LbId id, TimestampMs ts, std::string line, CommandDomain domain,
                               std::optional<int> exit_code, std::string output = {}) {
    LogLevelBehavior lb;
    lb.lb_id = id;
    lb.timestamp = ts;
    lb.action = {ActionCategory::terminal_command, ActionVerb::execute};
    lb.object.path = ".";
    CommandInfo c;
    c.command_line = std::move(line);
    c.domain = domain;
    c.exit_code = exit_code;
    c.success = exit_code && *exit_code == 0;
    c.output_excerpt = std::move(output);
    lb.context.command = c;
    return lb;
}

/// Seeded generators over the model types.
class Gen {
public:
    explicit Gen(std::uint64_t seed) : rng_(seed) {}

    int range(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
    double unit() { return std::uniform_real_distribution<double>(0.0, 1.0)(rng_); }
    bool coin(double p = 0.5) { return unit() < p; }
    template <class T>
    const T& pick(const std::vector<T>& v) {
        return v[static_cast<std::size_t>(range(0, static_cast<int>(v.size()) - 1))];
    }

    std::string text(int max_len = 40) {
        static const std::string alphabet =
            "abcdefghijklmnopqrstuvwxyz ABC019_(){};:.,\"'\\\t\n/#-\x1e\xc3\xa9\xe2\x82\xac";
        std::string s;
        const int n = range(0, max_len);
        for (int i = 0; i < n; ++i) {
            char c = alphabet[static_cast<std::size_t>(range(0, static_cast<int>(alphabet.size()) - 1))];
            // Keep multi-byte sequences whole.
            if (c == '\xc3') {
                s += "\xc3\xa9";
            } else if (c == '\xe2') {
                s += "\xe2\x82\xac";
            } else if ((static_cast<unsigned char>(c) & 0xC0) == 0x80) {
                continue;
            } else {
                s += c;
            }
        }
        return s;
    }

    std::string path() {
        static const std::vector<std::string> dirs = {"src", "lib", "tests", "app/core", "pkg/util/io"};
        static const std::vector<std::string> files = {"main.rs", "api.py", "view.tsx", "db.go", "a b.cpp"};
        return pick(dirs) + "/" + pick(files);
    }

    RawEvent event(EventId id, TimestampMs ts) {
        static const std::vector<EventKind> kinds = {
            EventKind::edit_insert, EventKind::edit_delete, EventKind::edit_replace,     EventKind::file_open,
            EventKind::file_close,  EventKind::file_save,   EventKind::navigate,         EventKind::select,
            EventKind::terminal_command, EventKind::terminal_output, EventKind::shortcut, EventKind::debug_step,
        };
        static const std::vector<Source> sources = {Source::user, Source::ide, Source::agent};
        RawEvent e;
        e.event_id = id;
        e.timestamp = ts;
        e.source = pick(sources);
        e.kind = pick(kinds);
        if (is_edit(e.kind) || coin(0.6)) e.path = path();
        if (is_edit(e.kind) || coin(0.3)) {
            const int l = range(0, 500);
            const int span = range(0, 20);
            const int c = range(0, 80);
            e.range = TextRange{l, c, l + span, span == 0 ? c + range(0, 10) : range(0, 80)};
        }
        if (e.kind == EventKind::terminal_command) {
            e.payload = "cargo test" + text(10);
        } else if (is_terminal(e.kind) || coin(0.8)) {
            e.payload = text();
        }
        return e;
    }

    std::vector<RawEvent> events(std::size_t n, TimestampMs start = kT0) {
        std::vector<RawEvent> out;
        out.reserve(n);
        TimestampMs ts = start;
        for (std::size_t i = 0; i < n; ++i) {
            ts += range(0, 5000);
            out.push_back(event(i + 1, ts));
        }
        return out;
    }

    /// A plausible user-side session for pipeline and throughput tests.
    std::vector<RawEvent> session_events(std::size_t n, TimestampMs start = kT0) {
        static const std::vector<std::string> cmds = {"cargo build", "cargo test", "git status", "npm start",
                                                      "pytest"};
        std::vector<RawEvent> out;
        out.reserve(n);
        TimestampMs ts = start;
        std::string current = path();
        for (std::size_t i = 0; i < n; ++i) {
            ts += pick(std::vector<TimestampMs>{300, 900, 2500, 7000, 30000});
            RawEvent e;
            e.event_id = i + 1;
            e.timestamp = ts;
            const double p = unit();
            if (p < 0.5) {
                const int l = range(1, 300);
                e.kind = EventKind::edit_insert;
                e.path = current;
                e.range = TextRange{l, 0, l, 0};
                e.payload = "let x = compute(y);\n";
            } else if (p < 0.65) {
                e.kind = EventKind::navigate;
                current = path();
                e.path = current;
            } else if (p < 0.75) {
                e.kind = EventKind::file_save;
                e.path = current;
            } else if (p < 0.85) {
                e.kind = EventKind::terminal_command;
                e.payload = pick(cmds) + "\n#vme-exit " + std::to_string(range(0, 1));
            } else if (p < 0.93) {
                e.kind = EventKind::edit_insert;
                e.source = Source::ide;
                e.path = current;
                e.range = TextRange{1, 0, 1, 0};
                e.payload = "\n";
            } else {
                e.kind = EventKind::shortcut;
                e.payload = "ctrl+p";
            }
            out.push_back(std::move(e));
        }
        return out;
    }

private:
    std::mt19937_64 rng_;
};

}  // namespace vme::test
