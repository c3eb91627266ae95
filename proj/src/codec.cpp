// SPDX-License-Identifier: Apache-2.0
#include "vme/codec.hpp"

#include <algorithm>
#include <array>
#include <limits>
#include <json.hpp>

#include "vme/errors.hpp"

namespace vme {

using ojson = nlohmann::ordered_json;

namespace {

constexpr int kDump = -1;  // compact
constexpr char kIndentChar = ' ';

std::string dump(const ojson& j) {
    return j.dump(kDump, kIndentChar, false, nlohmann::json::error_handler_t::replace);
}

std::size_t field_offset(std::string_view line, std::string_view field) {
    std::string quoted = "\"" + std::string(field) + "\"";
    auto pos = line.find(quoted);
    return pos == std::string_view::npos ? 0 : pos;
}

/// Parses one JSON object or throws ParseError with the byte offset.
ojson parse_object(std::string_view line, std::string_view what) {
    ojson j;
    try {
        j = ojson::parse(line.begin(), line.end());
    } catch (const nlohmann::json::parse_error& e) {
        // `byte` is one past the last character read; clamp to the input.
        std::size_t offset = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, line.size());
        throw ParseError("malformed " + std::string(what) + " record at byte " + std::to_string(offset), "",
                         offset);
    }
    if (!j.is_object()) throw ParseError(std::string(what) + " record is not an object", "", 0);
    return j;
}

class Reader {
public:
    Reader(const ojson& j, std::string_view line) : j_(j), line_(line) {}

    const ojson& require(std::string_view field) const {
        auto it = j_.find(field);
        if (it == j_.end()) {
            throw ParseError("missing field: " + std::string(field), std::string(field), line_.size());
        }
        return *it;
    }

    [[noreturn]] void invalid(std::string_view field, std::string_view why = "") const {
        std::string msg = "invalid field: " + std::string(field);
        if (!why.empty()) msg += " (" + std::string(why) + ")";
        throw ParseError(msg, std::string(field), field_offset(line_, field));
    }

    std::int64_t integer(std::string_view field) const {
        const auto& v = require(field);
        if (!v.is_number_integer()) invalid(field, "expected integer");
        return v.get<std::int64_t>();
    }

    std::uint64_t unsigned_id(std::string_view field) const {
        const auto& v = require(field);
        if (!v.is_number_unsigned()) invalid(field, "expected non-negative integer");
        return v.get<std::uint64_t>();
    }

    std::string string(std::string_view field) const {
        const auto& v = require(field);
        if (!v.is_string()) invalid(field, "expected string");
        return v.get<std::string>();
    }

    std::optional<std::string> optional_string(std::string_view field) const {
        const auto& v = require(field);
        if (v.is_null()) return std::nullopt;
        if (!v.is_string()) invalid(field, "expected string or null");
        return v.get<std::string>();
    }

    bool boolean(std::string_view field) const {
        const auto& v = require(field);
        if (!v.is_boolean()) invalid(field, "expected boolean");
        return v.get<bool>();
    }

    void only(std::initializer_list<std::string_view> allowed) const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end()) {
                throw ParseError("unknown field: " + it.key(), it.key(), field_offset(line_, it.key()));
            }
        }
    }

private:
    const ojson& j_;
    std::string_view line_;
};

int as_int(const ojson& v, const Reader& r, std::string_view field) {
    if (!v.is_number_integer()) r.invalid(field, "expected integer");
    auto x = v.get<std::int64_t>();
    if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) r.invalid(field, "out of range");
    return static_cast<int>(x);
}

}  // namespace

std::string serialize_event(const RawEvent& e) {
    ojson j;
    j["event_id"] = e.event_id;
    j["timestamp"] = e.timestamp;
    j["source"] = to_string(e.source);
    j["kind"] = to_string(e.kind);
    j["path"] = e.path ? ojson(*e.path) : ojson(nullptr);
    if (e.range) {
        j["range"] = ojson::array({e.range->start_line, e.range->start_col, e.range->end_line, e.range->end_col});
    } else {
        j["range"] = nullptr;
    }
    j["payload"] = e.payload ? ojson(*e.payload) : ojson(nullptr);
    return dump(j);
}

RawEvent parse_event(std::string_view line) {
    const ojson j = parse_object(line, "event");
    Reader r(j, line);
    r.only({"event_id", "timestamp", "source", "kind", "path", "range", "payload"});

    RawEvent e;
    e.event_id = r.unsigned_id("event_id");
    e.timestamp = r.integer("timestamp");

    auto source = source_from_string(r.string("source"));
    if (!source) r.invalid("source", "unknown source");
    e.source = *source;

    auto kind_name = r.string("kind");
    auto kind = event_kind_from_string(kind_name);
    if (!kind) {
        throw ParseError("unknown kind: " + kind_name, "kind", field_offset(line, "kind"));
    }
    e.kind = *kind;

    e.path = r.optional_string("path");

    const auto& range = r.require("range");
    if (!range.is_null()) {
        if (!range.is_array() || range.size() != 4) r.invalid("range", "expected [start_line, start_col, end_line, end_col]");
        e.range = TextRange{as_int(range[0], r, "range"), as_int(range[1], r, "range"), as_int(range[2], r, "range"),
                            as_int(range[3], r, "range")};
    }
    e.payload = r.optional_string("payload");

    if (is_edit(e.kind)) {
        if (!e.path) r.invalid("path", "required for edit kinds");
        if (!e.range) r.invalid("range", "required for edit kinds");
    }
    if (is_terminal(e.kind) && !e.payload) r.invalid("payload", "required for terminal kinds");
    if (!satisfies_invariants(e)) r.invalid("range", "start after end");
    return e;
}

namespace {

ojson object_to_json(const CodeObject& o) {
    ojson j;
    j["path"] = o.path;
    j["symbol_path"] = o.symbol_path;
    if (o.span) {
        j["span"] = ojson::array({o.span->start_line, o.span->end_line});
    } else {
        j["span"] = nullptr;
    }
    return j;
}

CodeObject object_from_json(const ojson& j, std::string_view line) {
    Reader r(j, line);
    r.only({"path", "symbol_path", "span"});
    CodeObject o;
    o.path = r.string("path");
    const auto& sp = r.require("symbol_path");
    if (!sp.is_array()) r.invalid("symbol_path");
    for (const auto& s : sp) {
        if (!s.is_string() || s.get<std::string>().empty()) r.invalid("symbol_path", "non-empty strings required");
        o.symbol_path.push_back(s.get<std::string>());
    }
    const auto& span = r.require("span");
    if (!span.is_null()) {
        if (!span.is_array() || span.size() != 2) r.invalid("span");
        o.span = LineSpan{as_int(span[0], r, "span"), as_int(span[1], r, "span")};
    }
    return o;
}

ojson context_to_json(const ContextInfo& c) {
    ojson j;
    if (c.diff) {
        ojson d;
        d["added_lines"] = c.diff->added_lines;
        d["removed_lines"] = c.diff->removed_lines;
        d["added_text"] = c.diff->added_text;
        d["removed_text"] = c.diff->removed_text;
        j["diff"] = d;
    } else {
        j["diff"] = nullptr;
    }
    if (c.command) {
        ojson m;
        m["command_line"] = c.command->command_line;
        m["domain"] = to_string(c.command->domain);
        m["success"] = c.command->success;
        m["exit_code"] = c.command->exit_code ? ojson(*c.command->exit_code) : ojson(nullptr);
        m["output_excerpt"] = c.command->output_excerpt;
        j["command"] = m;
    } else {
        j["command"] = nullptr;
    }
    j["detail"] = c.detail;
    return j;
}

ContextInfo context_from_json(const ojson& j, std::string_view line) {
    Reader r(j, line);
    r.only({"diff", "command", "detail"});
    ContextInfo c;
    const auto& d = r.require("diff");
    if (!d.is_null()) {
        if (!d.is_object()) r.invalid("diff");
        Reader dr(d, line);
        dr.only({"added_lines", "removed_lines", "added_text", "removed_text"});
        DiffInfo diff;
        diff.added_lines = static_cast<int>(dr.integer("added_lines"));
        diff.removed_lines = static_cast<int>(dr.integer("removed_lines"));
        diff.added_text = dr.string("added_text");
        diff.removed_text = dr.string("removed_text");
        c.diff = std::move(diff);
    }
    const auto& m = r.require("command");
    if (!m.is_null()) {
        if (!m.is_object()) r.invalid("command");
        Reader mr(m, line);
        mr.only({"command_line", "domain", "success", "exit_code", "output_excerpt"});
        CommandInfo cmd;
        cmd.command_line = mr.string("command_line");
        auto domain = command_domain_from_string(mr.string("domain"));
        if (!domain) mr.invalid("domain");
        cmd.domain = *domain;
        cmd.success = mr.boolean("success");
        const auto& code = mr.require("exit_code");
        if (!code.is_null()) cmd.exit_code = as_int(code, mr, "exit_code");
        cmd.output_excerpt = mr.string("output_excerpt");
        c.command = std::move(cmd);
    }
    c.detail = r.string("detail");
    return c;
}

}  // namespace

std::string serialize_lb(const LogLevelBehavior& lb) {
    ojson j;
    j["lb_id"] = lb.lb_id;
    j["timestamp"] = lb.timestamp;
    j["action"] = ojson{{"category", to_string(lb.action.category)}, {"verb", to_string(lb.action.verb)}};
    j["object"] = object_to_json(lb.object);
    j["context"] = context_to_json(lb.context);
    return dump(j);
}

LogLevelBehavior parse_lb(std::string_view line) {
    const ojson j = parse_object(line, "lb");
    Reader r(j, line);
    r.only({"lb_id", "timestamp", "action", "object", "context"});
    LogLevelBehavior lb;
    lb.lb_id = r.unsigned_id("lb_id");
    lb.timestamp = r.integer("timestamp");

    const auto& a = r.require("action");
    if (!a.is_object()) r.invalid("action");
    Reader ar(a, line);
    ar.only({"category", "verb"});
    auto cat = action_category_from_string(ar.string("category"));
    auto verb = action_verb_from_string(ar.string("verb"));
    if (!cat || !verb) r.invalid("action");
    lb.action = ActionKind{*cat, *verb};

    const auto& o = r.require("object");
    if (!o.is_object()) r.invalid("object");
    lb.object = object_from_json(o, line);

    const auto& c = r.require("context");
    if (!c.is_object()) r.invalid("context");
    lb.context = context_from_json(c, line);

    if (!satisfies_invariants(lb)) throw ParseError("lb record violates invariants", "context", 0);
    return lb;
}

std::string serialize_tb(const TaskLevelBehavior& tb) {
    ojson j;
    j["tb_id"] = tb.tb_id;
    j["start_ts"] = tb.start_ts;
    j["end_ts"] = tb.end_ts;
    j["delta_t"] = tb.delta_t;
    j["task"] = tb.task;
    j["lbs"] = tb.lbs;
    j["needs_retry"] = tb.needs_retry;
    return dump(j);
}

TaskLevelBehavior parse_tb(std::string_view line) {
    const ojson j = parse_object(line, "tb");
    Reader r(j, line);
    r.only({"tb_id", "start_ts", "end_ts", "delta_t", "task", "lbs", "needs_retry"});
    TaskLevelBehavior tb;
    tb.tb_id = r.unsigned_id("tb_id");
    tb.start_ts = r.integer("start_ts");
    tb.end_ts = r.integer("end_ts");
    const auto& dt = r.require("delta_t");
    if (!dt.is_number()) r.invalid("delta_t");
    tb.delta_t = dt.get<double>();
    tb.task = r.string("task");
    const auto& lbs = r.require("lbs");
    if (!lbs.is_array() || lbs.empty()) r.invalid("lbs", "non-empty array required");
    for (const auto& id : lbs) {
        if (!id.is_number_unsigned()) r.invalid("lbs");
        tb.lbs.push_back(id.get<LbId>());
    }
    tb.needs_retry = r.boolean("needs_retry");
    if (tb.end_ts < tb.start_ts) r.invalid("end_ts", "before start_ts");
    return tb;
}

void check_header(std::string_view line, std::string_view expected) {
    if (line == expected) return;
    auto family = expected.substr(0, expected.find(' '));
    if (line.substr(0, line.find(' ')) == family) {
        throw ParseError("unsupported schema version: '" + std::string(line) + "' (expected '" +
                             std::string(expected) + "')",
                         "header", 0);
    }
    throw ParseError("missing schema header '" + std::string(expected) + "'", "header", 0);
}

}  // namespace vme
