// SPDX-License-Identifier: Apache-2.0
#include "vme/ingest.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <fstream>
#include <sstream>

#include "vme/errors.hpp"

namespace vme {

ReplacePayload decode_replace_payload(std::string_view payload) {
    auto sep = payload.find(kReplaceSeparator);
    if (sep == std::string_view::npos) return {"", std::string(payload)};
    return {std::string(payload.substr(0, sep)), std::string(payload.substr(sep + 1))};
}

std::string encode_replace_payload(std::string_view removed, std::string_view inserted) {
    if (removed.empty()) return std::string(inserted);
    std::string out(removed);
    out += kReplaceSeparator;
    out += inserted;
    return out;
}

namespace {

int newline_count(std::string_view s) { return static_cast<int>(std::count(s.begin(), s.end(), '\n')); }

/// (removed, inserted) text carried by one edit event.
ReplacePayload edit_texts(const RawEvent& e) {
    const std::string_view payload = e.payload ? std::string_view(*e.payload) : std::string_view();
    switch (e.kind) {
        case EventKind::edit_insert: return {"", std::string(payload)};
        case EventKind::edit_delete: return {std::string(payload), ""};
        default: return decode_replace_payload(payload);
    }
}

std::pair<int, int> affected_lines(const RawEvent& e) {
    const auto& r = *e.range;
    int hi = std::max(r.end_line, r.start_line + newline_count(edit_texts(e).inserted));
    return {r.start_line, hi};
}

bool before(int l1, int c1, int l2, int c2) { return l1 < l2 || (l1 == l2 && c1 < c2); }

}  // namespace

Preprocessor::Preprocessor(TimestampMs merge_gap_ms) : merge_gap_ms_(merge_gap_ms) {}

bool Preprocessor::can_merge(const RawEvent& e) const {
    if (!group_ || !is_edit(e.kind)) return false;
    const auto& g = *group_;
    if (*e.path != *g.first.path) return false;
    if (e.timestamp - g.last_ts > merge_gap_ms_) return false;
    auto [lo, hi] = affected_lines(e);
    return lo <= g.line_hi + 1 && hi >= g.line_lo - 1;
}

void Preprocessor::start_group(const RawEvent& e) {
    EditGroup g;
    g.first = e;
    g.count = 1;
    g.last_ts = e.timestamp;
    std::tie(g.line_lo, g.line_hi) = affected_lines(e);
    g.range = *e.range;
    auto texts = edit_texts(e);
    g.removed = std::move(texts.removed);
    g.inserted = std::move(texts.inserted);
    group_ = std::move(g);
}

void Preprocessor::absorb(const RawEvent& e) {
    auto& g = *group_;
    auto [lo, hi] = affected_lines(e);
    g.line_lo = std::min(g.line_lo, lo);
    g.line_hi = std::max(g.line_hi, hi);
    const auto& r = *e.range;
    if (before(r.start_line, r.start_col, g.range.start_line, g.range.start_col)) {
        g.range.start_line = r.start_line;
        g.range.start_col = r.start_col;
    }
    if (before(g.range.end_line, g.range.end_col, r.end_line, r.end_col)) {
        g.range.end_line = r.end_line;
        g.range.end_col = r.end_col;
    }
    auto texts = edit_texts(e);
    // Deleting what was just typed (backspace) cancels it out.
    if (!texts.removed.empty()) {
        if (g.inserted.size() >= texts.removed.size() &&
            std::string_view(g.inserted).substr(g.inserted.size() - texts.removed.size()) == texts.removed) {
            g.inserted.resize(g.inserted.size() - texts.removed.size());
        } else {
            g.removed += texts.removed;
        }
    }
    g.inserted += texts.inserted;
    g.last_ts = e.timestamp;
    ++g.count;
    ++stats_.merged;
}

void Preprocessor::flush(std::vector<RawEvent>& out) {
    if (group_) {
        auto& g = *group_;
        RawEvent e = std::move(g.first);
        if (g.count > 1) {
            e.kind = EventKind::edit_replace;
            e.range = g.range;
            e.payload = encode_replace_payload(g.removed, g.inserted);
        }
        out.push_back(std::move(e));
        ++stats_.emitted;
        group_.reset();
    }
    if (command_) {
        out.push_back(std::move(*command_));
        ++stats_.emitted;
        command_.reset();
    }
}

void Preprocessor::push(const RawEvent& e, std::vector<RawEvent>& out) {
    if (last_ts_ && e.timestamp < *last_ts_) {
        throw StreamError("out-of-order timestamp at event " + std::to_string(e.event_id) + ": " +
                          std::to_string(e.timestamp) + " < " + std::to_string(*last_ts_));
    }
    last_ts_ = e.timestamp;
    ++stats_.read;

    if (e.kind == EventKind::terminal_output && command_) {
        auto& payload = *command_->payload;
        const std::string_view chunk = e.payload ? std::string_view(*e.payload) : std::string_view();
        const bool marker = chunk.substr(0, kExitMarker.size()) == kExitMarker;
        if (payload.find('\n') == std::string::npos || (marker && payload.back() != '\n')) payload += '\n';
        payload += chunk;
        ++stats_.folded;
        return;
    }
    if (e.source != Source::user) {
        // Output after someone else's command no longer follows the user's.
        if (e.kind == EventKind::terminal_command) flush(out);
        ++stats_.filtered;
        return;
    }
    if (can_merge(e)) {
        absorb(e);
        return;
    }
    flush(out);
    if (is_edit(e.kind)) {
        start_group(e);
    } else if (e.kind == EventKind::terminal_command) {
        command_ = e;
    } else {
        out.push_back(e);
        ++stats_.emitted;
    }
}

void Preprocessor::finish(std::vector<RawEvent>& out) { flush(out); }

std::vector<RawEvent> preprocess(std::span<const RawEvent> events, TimestampMs merge_gap_ms) {
    Preprocessor p(merge_gap_ms);
    std::vector<RawEvent> out;
    out.reserve(events.size());
    for (const auto& e : events) p.push(e, out);
    p.finish(out);
    return out;
}

// ---------------------------------------------------------------------------
// Context Enricher

namespace {

std::vector<std::string_view> split_ws(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
        std::size_t j = i;
        while (j < s.size() && s[j] != ' ' && s[j] != '\t') ++j;
        if (j > i) out.push_back(s.substr(i, j - i));
        i = j;
    }
    return out;
}

std::string_view basename(std::string_view tok) {
    auto slash = tok.rfind('/');
    return slash == std::string_view::npos ? tok : tok.substr(slash + 1);
}

bool one_of(std::string_view s, std::initializer_list<std::string_view> set) {
    return std::find(set.begin(), set.end(), s) != set.end();
}

}  // namespace

CommandDomain classify_command(std::string_view command_line) {
    auto toks = split_ws(command_line);
    std::size_t i = 0;
    while (i < toks.size() && (toks[i] == "sudo" || toks[i].find('=') != std::string_view::npos)) ++i;
    if (i >= toks.size()) return CommandDomain::other;

    const std::string_view head = toks[i];
    const std::string_view cmd = basename(head);
    const std::string_view sub = i + 1 < toks.size() ? toks[i + 1] : std::string_view();
    const std::string_view arg = i + 2 < toks.size() ? toks[i + 2] : std::string_view();

    if (one_of(cmd, {"git", "svn", "hg"})) return CommandDomain::vcs;
    if (one_of(cmd, {"cd", "ls", "pwd", "tree", "find"})) return CommandDomain::navigation;
    if (one_of(cmd, {"pip", "pip3", "conda", "brew"})) return CommandDomain::package;
    if (one_of(cmd, {"pytest", "jest", "ctest", "vitest"})) return CommandDomain::test;
    if (one_of(cmd, {"make", "cmake", "mvn", "gradle", "gradlew", "ninja", "tsc", "msbuild"})) return CommandDomain::build;

    if (cmd == "cargo") {
        if (one_of(sub, {"build", "check"})) return CommandDomain::build;
        if (sub == "test") return CommandDomain::test;
        if (one_of(sub, {"add", "install"})) return CommandDomain::package;
        if (sub == "run") return CommandDomain::run;
        return CommandDomain::other;
    }
    if (one_of(cmd, {"npm", "yarn", "pnpm"})) {
        if (one_of(sub, {"install", "i", "add", "ci"})) return CommandDomain::package;
        if (sub == "test") return CommandDomain::test;
        if (sub == "start") return CommandDomain::run;
        if (sub == "run") {
            if (arg == "build") return CommandDomain::build;
            if (arg == "test") return CommandDomain::test;
            return CommandDomain::run;
        }
        return CommandDomain::other;
    }
    if (cmd == "go") {
        if (sub == "build") return CommandDomain::build;
        if (sub == "test") return CommandDomain::test;
        if (sub == "run") return CommandDomain::run;
        if (sub == "get") return CommandDomain::package;
        return CommandDomain::other;
    }
    if (one_of(cmd, {"python", "python3"})) {
        if (sub == "-m" && arg == "pytest") return CommandDomain::test;
        if (sub == "-m" && arg == "pip") return CommandDomain::package;
        return sub.empty() ? CommandDomain::other : CommandDomain::run;
    }
    if (one_of(cmd, {"dotnet", "flutter", "deno", "bun"})) {
        if (sub == "run") return CommandDomain::run;
        if (sub == "build") return CommandDomain::build;
        if (sub == "test") return CommandDomain::test;
        return CommandDomain::other;
    }
    if (one_of(cmd, {"node", "java"}) && !sub.empty()) return CommandDomain::run;
    if (head.substr(0, 2) == "./") return CommandDomain::run;
    return CommandDomain::other;
}

std::string cap_excerpt(std::string_view text, std::size_t cap) {
    if (text.size() <= cap) return std::string(text);
    std::size_t keep = cap > kTruncationSentinel.size() ? cap - kTruncationSentinel.size() : 0;
    // Back off continuation bytes so a multi-byte character is not split.
    while (keep > 0 && (static_cast<unsigned char>(text[keep]) & 0xC0) == 0x80) --keep;
    std::string out(text.substr(0, keep));
    out += kTruncationSentinel;
    return out;
}

namespace {

CommandInfo parse_command_payload(std::string_view payload) {
    CommandInfo cmd;
    auto nl = payload.find('\n');
    cmd.command_line = std::string(payload.substr(0, nl));
    std::string output;
    std::optional<int> exit_code;

    auto scan = [&](std::string_view line) {
        if (line.substr(0, kExitMarker.size()) == kExitMarker) {
            auto value = line.substr(kExitMarker.size());
            int code = 0;
            auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), code);
            exit_code = (ec == std::errc() && p == value.data() + value.size()) ? std::optional<int>(code)
                                                                                   : std::nullopt;
            return;
        }
        output.append(line);
        output += '\n';
    };

    // The command line itself may carry the epilogue when the shim emits late.
    if (cmd.command_line.substr(0, kExitMarker.size()) == kExitMarker) cmd.command_line.clear();
    if (nl != std::string_view::npos) {
        std::string_view rest = payload.substr(nl + 1);
        while (!rest.empty()) {
            auto e = rest.find('\n');
            scan(rest.substr(0, e));
            if (e == std::string_view::npos) break;
            rest.remove_prefix(e + 1);
        }
    }
    cmd.exit_code = exit_code;
    cmd.success = exit_code.has_value() && *exit_code == 0;
    cmd.domain = classify_command(cmd.command_line);
    cmd.output_excerpt = cap_excerpt(output);
    return cmd;
}

DiffInfo make_diff(std::string removed, std::string added) {
    DiffInfo d;
    d.added_lines = count_lines(added);
    d.removed_lines = count_lines(removed);
    d.added_text = std::move(added);
    d.removed_text = std::move(removed);
    return d;
}

}  // namespace

ContextInfo enrich_context(const RawEvent& e) {
    ContextInfo ctx;
    if (is_edit(e.kind)) {
        auto texts = edit_texts(e);
        ctx.diff = make_diff(std::move(texts.removed), std::move(texts.inserted));
    } else if (e.kind == EventKind::terminal_command) {
        ctx.command = parse_command_payload(e.payload.value_or(""));
    } else {
        ctx.diff = DiffInfo{};
        ctx.detail = e.payload.value_or("");
    }
    return ctx;
}

// ---------------------------------------------------------------------------
// Symbol index

void SymbolIndex::add(const std::string& path, SymbolEntry entry) { by_path_[path].push_back(std::move(entry)); }

std::span<const SymbolEntry> SymbolIndex::entries(const std::string& path) const {
    auto it = by_path_.find(path);
    if (it == by_path_.end()) return {};
    return it->second;
}

bool SymbolIndex::well_formed() const {
    for (const auto& [path, list] : by_path_) {
        for (std::size_t i = 0; i < list.size(); ++i) {
            for (std::size_t j = i + 1; j < list.size(); ++j) {
                const auto& a = list[i].span;
                const auto& b = list[j].span;
                bool disjoint = a.end_line < b.start_line || b.end_line < a.start_line;
                bool a_in_b = b.start_line <= a.start_line && a.end_line <= b.end_line;
                bool b_in_a = a.start_line <= b.start_line && b.end_line <= a.end_line;
                if (!disjoint && !a_in_b && !b_in_a) return false;
            }
        }
    }
    return true;
}

namespace {

std::vector<std::string> split_scopes(std::string_view joined) {
    std::vector<std::string> out;
    while (!joined.empty()) {
        auto pos = joined.find("::");
        auto part = joined.substr(0, pos);
        if (!part.empty()) out.emplace_back(part);
        if (pos == std::string_view::npos) break;
        joined.remove_prefix(pos + 2);
    }
    return out;
}

int parse_line_number(std::string_view s, std::size_t record) {
    int v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) {
        throw ParseError("symbol index record " + std::to_string(record) + ": bad line number '" + std::string(s) +
                             "'",
                         "line", 0);
    }
    return v;
}

}  // namespace

SymbolIndex SymbolIndex::parse(std::string_view text) {
    SymbolIndex idx;
    std::size_t record = 0;
    while (!text.empty()) {
        auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
        ++record;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty() || line.front() == '#') continue;

        std::array<std::string_view, 4> cols;
        std::size_t n = 0;
        while (n < 4) {
            auto tab = line.find('\t');
            cols[n++] = line.substr(0, tab);
            if (tab == std::string_view::npos) break;
            line.remove_prefix(tab + 1);
        }
        if (n != 4) throw ParseError("symbol index record " + std::to_string(record) + ": expected 4 columns", "", 0);
        SymbolEntry entry{split_scopes(cols[1]),
                          LineSpan{parse_line_number(cols[2], record), parse_line_number(cols[3], record)}};
        if (entry.symbol_path.empty() || entry.span.start_line > entry.span.end_line) {
            throw ParseError("symbol index record " + std::to_string(record) + ": invalid entry", "", 0);
        }
        idx.add(std::string(cols[0]), std::move(entry));
    }
    return idx;
}

SymbolIndex SymbolIndex::load(const std::string& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw UsageError("cannot open symbol index " + file);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

std::string SymbolIndex::serialize() const {
    std::string out;
    for (const auto& [path, list] : by_path_) {
        for (const auto& e : list) {
            out += path;
            out += '\t';
            for (std::size_t i = 0; i < e.symbol_path.size(); ++i) {
                if (i) out += "::";
                out += e.symbol_path[i];
            }
            out += '\t' + std::to_string(e.span.start_line) + '\t' + std::to_string(e.span.end_line) + '\n';
        }
    }
    return out;
}

CodeObject resolve_object(const RawEvent& e, const SymbolIndex& idx) {
    CodeObject obj;
    obj.path = e.path.value_or(".");
    if (!e.path || !e.range) return obj;
    const int line = e.range->start_line;
    const SymbolEntry* best = nullptr;
    for (const auto& entry : idx.entries(*e.path)) {
        if (entry.span.start_line > line || line > entry.span.end_line) continue;
        if (!best) {
            best = &entry;
            continue;
        }
        const int width = entry.span.end_line - entry.span.start_line;
        const int best_width = best->span.end_line - best->span.start_line;
        if (width < best_width || (width == best_width && entry.symbol_path.size() > best->symbol_path.size())) {
            best = &entry;
        }
    }
    if (best) {
        obj.symbol_path = best->symbol_path;
        obj.span = best->span;
    }
    return obj;
}

std::optional<ActionKind> classify_action(EventKind kind) noexcept {
    using C = ActionCategory;
    using V = ActionVerb;
    switch (kind) {
        case EventKind::edit_insert: return ActionKind{C::ide_operation, V::add_text};
        case EventKind::edit_delete: return ActionKind{C::ide_operation, V::delete_text};
        case EventKind::edit_replace: return ActionKind{C::ide_operation, V::modify_text};
        case EventKind::file_open: return ActionKind{C::ide_operation, V::open_file};
        case EventKind::file_save: return ActionKind{C::ide_operation, V::save_file};
        case EventKind::navigate: return ActionKind{C::ide_operation, V::navigate};
        case EventKind::select: return ActionKind{C::ide_operation, V::select_text};
        case EventKind::shortcut: return ActionKind{C::ide_operation, V::use_shortcut};
        case EventKind::terminal_command: return ActionKind{C::terminal_command, V::execute};
        case EventKind::file_close:
        case EventKind::terminal_output:
        case EventKind::debug_step: return std::nullopt;
    }
    return std::nullopt;
}

std::optional<LogLevelBehavior> extract_lb(const RawEvent& e, const SymbolIndex& idx) {
    auto action = classify_action(e.kind);
    if (!action) return std::nullopt;
    LogLevelBehavior lb;
    lb.timestamp = e.timestamp;
    lb.action = *action;
    lb.object = resolve_object(e, idx);
    lb.context = enrich_context(e);
    return lb;
}

std::optional<LogLevelBehavior> BehaviorExtractor::operator()(const RawEvent& e) {
    auto lb = extract_lb(e, idx_);
    if (!lb) {
        ++skipped_;
        ++by_kind_[e.kind];
    }
    return lb;
}

}  // namespace vme
