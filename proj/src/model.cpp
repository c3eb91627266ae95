// SPDX-License-Identifier: Apache-2.0
#include "vme/model.hpp"

#include <array>
#include <utility>

namespace vme {

namespace {

template <typename E, std::size_t N>
std::optional<E> lookup(const std::array<std::pair<E, std::string_view>, N>& table, std::string_view s) noexcept {
    for (const auto& [value, name] : table) {
        if (name == s) return value;
    }
    return std::nullopt;
}

template <typename E, std::size_t N>
std::string_view name_of(const std::array<std::pair<E, std::string_view>, N>& table, E value) noexcept {
    for (const auto& [v, name] : table) {
        if (v == value) return name;
    }
    return "?";
}

constexpr std::array<std::pair<Source, std::string_view>, 3> kSources{{
    {Source::user, "user"},
    {Source::ide, "ide"},
    {Source::agent, "agent"},
}};

constexpr std::array<std::pair<EventKind, std::string_view>, 12> kKinds{{
    {EventKind::edit_insert, "edit_insert"},
    {EventKind::edit_delete, "edit_delete"},
    {EventKind::edit_replace, "edit_replace"},
    {EventKind::file_open, "file_open"},
    {EventKind::file_close, "file_close"},
    {EventKind::file_save, "file_save"},
    {EventKind::navigate, "navigate"},
    {EventKind::select, "select"},
    {EventKind::terminal_command, "terminal_command"},
    {EventKind::terminal_output, "terminal_output"},
    {EventKind::shortcut, "shortcut"},
    {EventKind::debug_step, "debug_step"},
}};

constexpr std::array<std::pair<ActionCategory, std::string_view>, 2> kCategories{{
    {ActionCategory::ide_operation, "ide_operation"},
    {ActionCategory::terminal_command, "terminal_command"},
}};

constexpr std::array<std::pair<ActionVerb, std::string_view>, 9> kVerbs{{
    {ActionVerb::add_text, "add_text"},
    {ActionVerb::delete_text, "delete_text"},
    {ActionVerb::modify_text, "modify_text"},
    {ActionVerb::navigate, "navigate"},
    {ActionVerb::open_file, "open_file"},
    {ActionVerb::save_file, "save_file"},
    {ActionVerb::select_text, "select_text"},
    {ActionVerb::use_shortcut, "use_shortcut"},
    {ActionVerb::execute, "execute"},
}};

constexpr std::array<std::pair<CommandDomain, std::string_view>, 7> kDomains{{
    {CommandDomain::build, "build"},
    {CommandDomain::run, "run"},
    {CommandDomain::test, "test"},
    {CommandDomain::vcs, "vcs"},
    {CommandDomain::package, "package"},
    {CommandDomain::navigation, "navigation"},
    {CommandDomain::other, "other"},
}};

}  // namespace

bool is_edit(EventKind k) noexcept {
    return k == EventKind::edit_insert || k == EventKind::edit_delete || k == EventKind::edit_replace;
}

bool is_terminal(EventKind k) noexcept {
    return k == EventKind::terminal_command || k == EventKind::terminal_output;
}

ActionCategory category_of(ActionVerb v) noexcept {
    return v == ActionVerb::execute ? ActionCategory::terminal_command : ActionCategory::ide_operation;
}

bool ActionKind::valid() const noexcept { return category_of(verb) == category; }

bool is_edit_verb(ActionVerb v) noexcept {
    return v == ActionVerb::add_text || v == ActionVerb::delete_text || v == ActionVerb::modify_text;
}

bool is_navigation_verb(ActionVerb v) noexcept {
    return v == ActionVerb::navigate || v == ActionVerb::open_file;
}

std::string CodeObject::reference() const {
    std::string out = path;
    for (const auto& s : symbol_path) {
        out += "::";
        out += s;
    }
    return out;
}

std::string_view to_string(Source s) noexcept { return name_of(kSources, s); }
std::string_view to_string(EventKind k) noexcept { return name_of(kKinds, k); }
std::string_view to_string(ActionCategory c) noexcept { return name_of(kCategories, c); }
std::string_view to_string(ActionVerb v) noexcept { return name_of(kVerbs, v); }
std::string_view to_string(CommandDomain d) noexcept { return name_of(kDomains, d); }

std::optional<Source> source_from_string(std::string_view s) noexcept { return lookup(kSources, s); }
std::optional<EventKind> event_kind_from_string(std::string_view s) noexcept { return lookup(kKinds, s); }
std::optional<ActionCategory> action_category_from_string(std::string_view s) noexcept {
    return lookup(kCategories, s);
}
std::optional<ActionVerb> action_verb_from_string(std::string_view s) noexcept { return lookup(kVerbs, s); }
std::optional<CommandDomain> command_domain_from_string(std::string_view s) noexcept {
    return lookup(kDomains, s);
}

std::string verb_phrase(ActionVerb v) {
    std::string out(to_string(v));
    for (auto& c : out) {
        if (c == '_') c = ' ';
    }
    return out;
}

int count_lines(std::string_view text) noexcept {
    int n = 0;
    for (char c : text) {
        if (c == '\n') ++n;
    }
    if (!text.empty() && text.back() != '\n') ++n;
    return n;
}

bool satisfies_invariants(const RawEvent& e) noexcept {
    if (is_edit(e.kind) && (!e.path || !e.range)) return false;
    if (is_terminal(e.kind) && !e.payload) return false;
    if (e.range && (e.range->start_line > e.range->end_line ||
                    (e.range->start_line == e.range->end_line && e.range->start_col > e.range->end_col))) {
        return false;
    }
    return true;
}

bool satisfies_invariants(const LogLevelBehavior& lb) noexcept {
    if (!lb.action.valid()) return false;
    const bool terminal = lb.action.category == ActionCategory::terminal_command;
    if (lb.context.diff.has_value() == lb.context.command.has_value()) return false;
    if (terminal != lb.context.command.has_value()) return false;
    for (const auto& s : lb.object.symbol_path) {
        if (s.empty()) return false;
    }
    if (lb.object.span && lb.object.span->start_line > lb.object.span->end_line) return false;
    if (lb.context.diff) {
        const auto& d = *lb.context.diff;
        if (d.added_lines != count_lines(d.added_text) || d.removed_lines != count_lines(d.removed_text)) return false;
    }
    return true;
}

}  // namespace vme
