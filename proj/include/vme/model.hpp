// SPDX-License-Identifier: Apache-2.0
//
// Core behavior types: raw capture events, log-level behaviors (timestamp,
// action, object, context) and task-level behaviors (duration, task, LBs).
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace vme {

using TimestampMs = std::int64_t;
using EventId = std::uint64_t;
using LbId = std::uint64_t;
using TbId = std::uint64_t;

enum class Source { user, ide, agent };

enum class EventKind {
    edit_insert,
    edit_delete,
    edit_replace,
    file_open,
    file_close,
    file_save,
    navigate,
    select,
    terminal_command,
    terminal_output,
    shortcut,
    debug_step,
};

struct TextRange {
    int start_line = 0;
    int start_col = 0;
    int end_line = 0;
    int end_col = 0;

    friend bool operator==(const TextRange&, const TextRange&) = default;
};

/// One wire-level IDE occurrence as captured.
struct RawEvent {
    EventId event_id = 0;
    TimestampMs timestamp = 0;
    Source source = Source::user;
    EventKind kind = EventKind::navigate;
    std::optional<std::string> path;
    std::optional<TextRange> range;
    std::optional<std::string> payload;

    friend bool operator==(const RawEvent&, const RawEvent&) = default;
};

[[nodiscard]] bool is_edit(EventKind k) noexcept;
[[nodiscard]] bool is_terminal(EventKind k) noexcept;

enum class ActionCategory { ide_operation, terminal_command };

enum class ActionVerb {
    add_text,
    delete_text,
    modify_text,
    navigate,
    open_file,
    save_file,
    select_text,
    use_shortcut,
    execute,
};

struct ActionKind {
    ActionCategory category = ActionCategory::ide_operation;
    ActionVerb verb = ActionVerb::navigate;

    [[nodiscard]] bool valid() const noexcept;
    friend bool operator==(const ActionKind&, const ActionKind&) = default;
};

/// Category a verb belongs to.
[[nodiscard]] ActionCategory category_of(ActionVerb v) noexcept;
[[nodiscard]] bool is_edit_verb(ActionVerb v) noexcept;
[[nodiscard]] bool is_navigation_verb(ActionVerb v) noexcept;

struct LineSpan {
    int start_line = 0;
    int end_line = 0;

    friend bool operator==(const LineSpan&, const LineSpan&) = default;
};

/// A resolved code artifact. `symbol_path` lists the named scopes enclosing
/// the location inside `path` (outermost first); empty means file level.
struct CodeObject {
    std::string path;
    std::vector<std::string> symbol_path;
    std::optional<LineSpan> span;

    /// `path` or `path::Scope::scope` - the reference form used in prompts.
    [[nodiscard]] std::string reference() const;
    friend bool operator==(const CodeObject&, const CodeObject&) = default;
};

struct DiffInfo {
    int added_lines = 0;
    int removed_lines = 0;
    std::string added_text;
    std::string removed_text;

    friend bool operator==(const DiffInfo&, const DiffInfo&) = default;
};

enum class CommandDomain { build, run, test, vcs, package, navigation, other };

struct CommandInfo {
    std::string command_line;
    CommandDomain domain = CommandDomain::other;
    bool success = false;
    /// Absent when the shell reported no exit status; success is then false.
    std::optional<int> exit_code;
    std::string output_excerpt;

    [[nodiscard]] bool exit_unknown() const noexcept { return !exit_code.has_value(); }
    friend bool operator==(const CommandInfo&, const CommandInfo&) = default;
};

/// Maximum size of CommandInfo::output_excerpt in bytes, sentinel included.
inline constexpr std::size_t kOutputExcerptCap = 4096;
inline constexpr std::string_view kTruncationSentinel = "\n[...truncated]";

struct ContextInfo {
    std::optional<DiffInfo> diff;
    std::optional<CommandInfo> command;
    /// Free-form payload of non-text IDE operations (shortcut id, selection).
    std::string detail;

    friend bool operator==(const ContextInfo&, const ContextInfo&) = default;
};

struct LogLevelBehavior {
    LbId lb_id = 0;
    TimestampMs timestamp = 0;
    ActionKind action;
    CodeObject object;
    ContextInfo context;

    friend bool operator==(const LogLevelBehavior&, const LogLevelBehavior&) = default;
};

using LB = LogLevelBehavior;

struct TaskLevelBehavior {
    TbId tb_id = 0;
    double delta_t = 0.0;  // seconds
    std::string task;
    std::vector<LbId> lbs;
    TimestampMs start_ts = 0;
    TimestampMs end_ts = 0;
    /// Summarization failed; a later batch retries it.
    bool needs_retry = false;

    friend bool operator==(const TaskLevelBehavior&, const TaskLevelBehavior&) = default;
};

using TB = TaskLevelBehavior;

inline constexpr std::string_view kUnsummarizedTask = "(unsummarized)";

// Enum spellings used on the wire and in prompts.
[[nodiscard]] std::string_view to_string(Source s) noexcept;
[[nodiscard]] std::string_view to_string(EventKind k) noexcept;
[[nodiscard]] std::string_view to_string(ActionCategory c) noexcept;
[[nodiscard]] std::string_view to_string(ActionVerb v) noexcept;
[[nodiscard]] std::string_view to_string(CommandDomain d) noexcept;

[[nodiscard]] std::optional<Source> source_from_string(std::string_view s) noexcept;
[[nodiscard]] std::optional<EventKind> event_kind_from_string(std::string_view s) noexcept;
[[nodiscard]] std::optional<ActionCategory> action_category_from_string(std::string_view s) noexcept;
[[nodiscard]] std::optional<ActionVerb> action_verb_from_string(std::string_view s) noexcept;
[[nodiscard]] std::optional<CommandDomain> command_domain_from_string(std::string_view s) noexcept;

/// Verb as plain words ("add text"), the text embedded for action similarity.
[[nodiscard]] std::string verb_phrase(ActionVerb v);

/// Newline count plus one for a non-empty unterminated last line.
[[nodiscard]] int count_lines(std::string_view text) noexcept;

/// True when the record satisfies the per-kind field requirements.
[[nodiscard]] bool satisfies_invariants(const RawEvent& e) noexcept;
[[nodiscard]] bool satisfies_invariants(const LogLevelBehavior& lb) noexcept;

}  // namespace vme
