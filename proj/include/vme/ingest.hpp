// SPDX-License-Identifier: Apache-2.0
//
// Raw event preprocessing, context enrichment, object resolution and
// log-level behavior extraction.
#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vme/model.hpp"

namespace vme {

/// Default gap under which consecutive edits on one path are consolidated.
inline constexpr TimestampMs kDefaultMergeGapMs = 2000;

/// Marker line carrying a terminal command's exit status inside a payload.
inline constexpr std::string_view kExitMarker = "#vme-exit ";

/// Separates removed from inserted text in an edit_replace payload.
inline constexpr char kReplaceSeparator = '\x1e';

struct ReplacePayload {
    std::string removed;
    std::string inserted;
};

[[nodiscard]] ReplacePayload decode_replace_payload(std::string_view payload);
[[nodiscard]] std::string encode_replace_payload(std::string_view removed, std::string_view inserted);

struct PreprocessStats {
    std::size_t read = 0;
    std::size_t filtered = 0;  // dropped as not user-initiated
    std::size_t merged = 0;    // edits absorbed into a preceding edit
    std::size_t folded = 0;    // terminal output chunks folded into their command
    std::size_t emitted = 0;
};

/// Streaming preprocessor. Drops events not initiated by the user, folds
/// terminal output that follows a user command into that command's payload,
/// and consolidates bursts of edits on one path into a single edit_replace.
/// Holds at most one pending event; call finish() at end of stream.
class Preprocessor {
public:
    explicit Preprocessor(TimestampMs merge_gap_ms = kDefaultMergeGapMs);

    /// Throws StreamError if `e` is older than the previous event.
    void push(const RawEvent& e, std::vector<RawEvent>& out);
    void finish(std::vector<RawEvent>& out);

    [[nodiscard]] const PreprocessStats& stats() const noexcept { return stats_; }

private:
    struct EditGroup {
        RawEvent first;
        std::size_t count = 0;
        TimestampMs last_ts = 0;
        int line_lo = 0;
        int line_hi = 0;
        TextRange range;
        std::string removed;
        std::string inserted;
    };

    [[nodiscard]] bool can_merge(const RawEvent& e) const;
    void absorb(const RawEvent& e);
    void start_group(const RawEvent& e);
    void flush(std::vector<RawEvent>& out);

    TimestampMs merge_gap_ms_;
    std::optional<TimestampMs> last_ts_;
    std::optional<EditGroup> group_;
    std::optional<RawEvent> command_;
    PreprocessStats stats_;
};

[[nodiscard]] std::vector<RawEvent> preprocess(std::span<const RawEvent> events,
                                               TimestampMs merge_gap_ms = kDefaultMergeGapMs);

/// First-token lookup over a command line (env assignments and sudo skipped).
[[nodiscard]] CommandDomain classify_command(std::string_view command_line);

/// Context Enricher. `e` must be an edit or a terminal_command; other kinds
/// yield an empty diff carrying the payload as detail.
[[nodiscard]] ContextInfo enrich_context(const RawEvent& e);

struct SymbolEntry {
    std::vector<std::string> symbol_path;
    LineSpan span;

    friend bool operator==(const SymbolEntry&, const SymbolEntry&) = default;
};

/// Per-path named scopes, e.g. produced by an editor's document-symbol
/// provider. File format: one record per line,
/// `path<TAB>Scope::inner<TAB>start_line<TAB>end_line`; `#` lines are comments.
class SymbolIndex {
public:
    void add(const std::string& path, SymbolEntry entry);
    [[nodiscard]] std::span<const SymbolEntry> entries(const std::string& path) const;
    [[nodiscard]] bool empty() const noexcept { return by_path_.empty(); }

    /// Spans within one path are nested or disjoint.
    [[nodiscard]] bool well_formed() const;

    [[nodiscard]] static SymbolIndex parse(std::string_view text);
    [[nodiscard]] static SymbolIndex load(const std::string& file);
    [[nodiscard]] std::string serialize() const;

private:
    std::map<std::string, std::vector<SymbolEntry>> by_path_;
};

/// Innermost indexed scope containing the event's start line, or a
/// file-level object when nothing covers it.
[[nodiscard]] CodeObject resolve_object(const RawEvent& e, const SymbolIndex& idx);

/// Maps a raw kind to its action; nullopt for kinds without an action
/// (file_close, debug_step, stray terminal_output).
[[nodiscard]] std::optional<ActionKind> classify_action(EventKind kind) noexcept;

/// Builds the LB quadruple; lb_id is left 0 for the store to assign.
[[nodiscard]] std::optional<LogLevelBehavior> extract_lb(const RawEvent& e, const SymbolIndex& idx);

/// extract_lb plus a count of skipped (unclassifiable) events.
class BehaviorExtractor {
public:
    explicit BehaviorExtractor(const SymbolIndex& idx) : idx_(idx) {}

    std::optional<LogLevelBehavior> operator()(const RawEvent& e);
    [[nodiscard]] std::size_t skipped() const noexcept { return skipped_; }
    [[nodiscard]] const std::map<EventKind, std::size_t>& skipped_by_kind() const noexcept { return by_kind_; }

private:
    const SymbolIndex& idx_;
    std::size_t skipped_ = 0;
    std::map<EventKind, std::size_t> by_kind_;
};

/// Truncates to at most `cap` bytes including the sentinel, on a UTF-8
/// character boundary.
[[nodiscard]] std::string cap_excerpt(std::string_view text, std::size_t cap = kOutputExcerptCap);

}  // namespace vme
