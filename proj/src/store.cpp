// SPDX-License-Identifier: Apache-2.0
#include "vme/store.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "vme/codec.hpp"
#include "vme/errors.hpp"

namespace vme {

namespace {

[[noreturn]] void io_failure(const std::string& what, const fs::path& p) {
    throw IntegrityError(what + " " + p.string() + ": " + std::strerror(errno));
}

void write_all(int fd, std::string_view data, const fs::path& p) {
    while (!data.empty()) {
        ssize_t n = ::write(fd, data.data(), data.size());
        if (n < 0) {
            if (errno == EINTR) continue;
            io_failure("write failed on", p);
        }
        data.remove_prefix(static_cast<std::size_t>(n));
    }
}

/// Splits file content into complete lines; a trailing unterminated line is
/// dropped. Returns the byte length of the complete prefix.
std::size_t complete_lines(std::string_view content, std::vector<std::string_view>& lines) {
    std::size_t pos = 0;
    while (pos < content.size()) {
        auto nl = content.find('\n', pos);
        if (nl == std::string_view::npos) break;
        lines.push_back(content.substr(pos, nl - pos));
        pos = nl + 1;
    }
    return pos;
}

}  // namespace

std::string read_file(const fs::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw UsageError("cannot open " + file.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file_atomic(const fs::path& target, std::string_view content,
                       const std::function<void()>& before_rename) {
    fs::path tmp = target;
    tmp += ".tmp";
    int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
    if (fd < 0) io_failure("cannot create", tmp);
    try {
        write_all(fd, content, tmp);
        if (::fsync(fd) != 0) io_failure("fsync failed on", tmp);
        if (before_rename) before_rename();
    } catch (...) {
        ::close(fd);
        std::error_code ec;
        fs::remove(tmp, ec);
        throw;
    }
    ::close(fd);
    if (::rename(tmp.c_str(), target.c_str()) != 0) io_failure("cannot rename onto", target);
}

// ---------------------------------------------------------------------------

AppendLog::AppendLog(AppendLog&& other) noexcept
    : path_(std::move(other.path_)), header_(std::move(other.header_)), fd_(other.fd_), opts_(other.opts_) {
    other.fd_ = -1;
}

AppendLog& AppendLog::operator=(AppendLog&& other) noexcept {
    if (this != &other) {
        if (fd_ >= 0) ::close(fd_);
        path_ = std::move(other.path_);
        header_ = std::move(other.header_);
        fd_ = other.fd_;
        opts_ = other.opts_;
        other.fd_ = -1;
    }
    return *this;
}

AppendLog::~AppendLog() {
    if (fd_ >= 0) ::close(fd_);
}

AppendLog AppendLog::open(const fs::path& file, std::string_view header, StoreOptions opts) {
    AppendLog log;
    log.path_ = file;
    log.header_ = std::string(header);
    log.opts_ = opts;
    if (file.has_parent_path()) fs::create_directories(file.parent_path());

    const bool exists = fs::exists(file) && fs::file_size(file) > 0;
    if (exists) {
        std::string content = read_file(file);
        std::vector<std::string_view> lines;
        std::size_t keep = complete_lines(content, lines);
        if (lines.empty()) {
            // Only a torn header: start over.
            keep = 0;
        } else {
            check_header(lines.front(), header);
        }
        if (keep != content.size()) {
            if (::truncate(file.c_str(), static_cast<off_t>(keep)) != 0) io_failure("cannot truncate", file);
        }
    }
    log.fd_ = ::open(file.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (log.fd_ < 0) io_failure("cannot open", file);
    if (fs::file_size(file) == 0) {
        std::string line = log.header_ + "\n";
        write_all(log.fd_, line, file);
        ::fsync(log.fd_);
    }
    return log;
}

void AppendLog::append(std::string_view record) {
    if (fd_ < 0) throw IntegrityError("append to closed log " + path_.string());
    if (record.find('\n') != std::string_view::npos) throw IntegrityError("record contains a newline");
    std::string line;
    line.reserve(record.size() + 1);
    line.append(record);
    line += '\n';
    write_all(fd_, line, path_);
    if (opts_.sync && ::fdatasync(fd_) != 0) io_failure("fdatasync failed on", path_);
}

std::vector<std::string> AppendLog::read_records(const fs::path& file, std::string_view header) {
    std::vector<std::string> out;
    if (!fs::exists(file)) return out;
    std::string content = read_file(file);
    std::vector<std::string_view> lines;
    complete_lines(content, lines);
    if (lines.empty()) return out;
    check_header(lines.front(), header);
    out.reserve(lines.size() - 1);
    for (std::size_t i = 1; i < lines.size(); ++i) out.emplace_back(lines[i]);
    return out;
}

std::vector<std::string> AppendLog::records() const { return read_records(path_, header_); }

// ---------------------------------------------------------------------------

EventLog EventLog::open(const fs::path& file, StoreOptions opts) {
    EventLog log;
    log.log_ = AppendLog::open(file, kEventsHeader, opts);
    for (const auto& rec : log.log_.records()) {
        auto e = parse_event(rec);
        log.last_id_ = e.event_id;
        log.any_ = true;
    }
    return log;
}

void EventLog::append(const RawEvent& e) {
    if (any_ && e.event_id <= last_id_) {
        throw ConflictError("event id " + std::to_string(e.event_id) + " does not follow " + std::to_string(last_id_));
    }
    log_.append(serialize_event(e));
    last_id_ = e.event_id;
    any_ = true;
}

std::vector<RawEvent> EventLog::read(const fs::path& file) {
    std::vector<RawEvent> out;
    for (const auto& rec : AppendLog::read_records(file, kEventsHeader)) out.push_back(parse_event(rec));
    return out;
}

std::vector<RawEvent> EventLog::snapshot() const { return read(log_.path()); }

// ---------------------------------------------------------------------------

BehaviorStore BehaviorStore::open(const fs::path& file, StoreOptions opts) {
    BehaviorStore store;
    store.log_ = AppendLog::open(file, kLbsHeader, opts);
    bool first = true;
    for (const auto& rec : store.log_.records()) {
        auto lb = parse_lb(rec);
        if (!first && lb.lb_id != store.high_water_ + 1) {
            throw IntegrityError("lbs.log: id " + std::to_string(lb.lb_id) + " breaks density after " +
                                 std::to_string(store.high_water_));
        }
        first = false;
        store.high_water_ = lb.lb_id;
        ++store.size_;
    }
    return store;
}

void BehaviorStore::append(const LogLevelBehavior& lb) {
    if (lb.lb_id <= high_water_) {
        throw ConflictError("duplicate lb_id " + std::to_string(lb.lb_id) + " (high-water mark " +
                            std::to_string(high_water_) + ")");
    }
    if (lb.lb_id != high_water_ + 1) {
        throw ConflictError("lb_id gap: expected " + std::to_string(high_water_ + 1) + ", got " +
                            std::to_string(lb.lb_id));
    }
    if (!satisfies_invariants(lb)) throw IntegrityError("lb " + std::to_string(lb.lb_id) + " violates invariants");
    log_.append(serialize_lb(lb));
    high_water_ = lb.lb_id;
    ++size_;
}

LbId BehaviorStore::append_next(LogLevelBehavior lb) {
    lb.lb_id = high_water_ + 1;
    append(lb);
    return lb.lb_id;
}

void BehaviorStore::set_base(LbId last_before_first) {
    if (size_ != 0) throw ConflictError("set_base on a non-empty store");
    high_water_ = last_before_first;
}

std::vector<LogLevelBehavior> BehaviorStore::read(const fs::path& file) {
    std::vector<LogLevelBehavior> out;
    for (const auto& rec : AppendLog::read_records(file, kLbsHeader)) out.push_back(parse_lb(rec));
    return out;
}

std::vector<LogLevelBehavior> BehaviorStore::snapshot() const { return read(log_.path()); }

// ---------------------------------------------------------------------------

std::string serialize_amendment(const TaskAmendment& a) {
    nlohmann::ordered_json j;
    j["amend"] = a.tb_id;
    j["task"] = a.task;
    j["needs_retry"] = a.needs_retry;
    return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

namespace {

constexpr std::string_view kAmendPrefix = "{\"amend\":";

TaskAmendment parse_amendment(std::string_view line) {
    auto j = nlohmann::json::parse(line.begin(), line.end(), nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("amend") || !j["amend"].is_number_unsigned() ||
        !j.contains("task") || !j["task"].is_string() || !j.contains("needs_retry") || !j["needs_retry"].is_boolean()) {
        throw ParseError("malformed task amendment", "amend", 0);
    }
    return {j["amend"].get<TbId>(), j["task"].get<std::string>(), j["needs_retry"].get<bool>()};
}

}  // namespace

TaskStore TaskStore::open(const fs::path& file, StoreOptions opts) {
    TaskStore store;
    store.log_ = AppendLog::open(file, kTbsHeader, opts);
    bool first = true;
    for (const auto& rec : store.log_.records()) {
        if (rec.starts_with(kAmendPrefix)) continue;
        auto tb = parse_tb(rec);
        if (!first && tb.tb_id != store.high_water_ + 1) throw IntegrityError("tbs.log: tb ids not dense");
        first = false;
        store.high_water_ = tb.tb_id;
        ++store.size_;
        for (auto id : tb.lbs) {
            if (!store.owned_.insert(id).second) {
                throw IntegrityError("tbs.log: lb " + std::to_string(id) + " appears in more than one TB");
            }
        }
    }
    return store;
}

void TaskStore::append(const TaskLevelBehavior& tb) {
    if (tb.tb_id != high_water_ + 1) {
        throw ConflictError(tb.tb_id <= high_water_ ? "duplicate tb_id " + std::to_string(tb.tb_id)
                                                    : "tb_id gap at " + std::to_string(tb.tb_id));
    }
    if (tb.lbs.empty()) throw IntegrityError("tb without lbs");
    for (auto id : tb.lbs) {
        if (owned_.count(id)) throw ConflictError("lb " + std::to_string(id) + " already belongs to a TB");
    }
    log_.append(serialize_tb(tb));
    owned_.insert(tb.lbs.begin(), tb.lbs.end());
    high_water_ = tb.tb_id;
    ++size_;
}

TbId TaskStore::append_next(TaskLevelBehavior tb) {
    tb.tb_id = high_water_ + 1;
    append(tb);
    return tb.tb_id;
}

void TaskStore::amend(const TaskAmendment& a) {
    if (a.tb_id == 0 || a.tb_id > high_water_) throw ConflictError("amendment for unknown tb " + std::to_string(a.tb_id));
    log_.append(serialize_amendment(a));
}

void TaskStore::set_base(TbId last_before_first) {
    if (size_ != 0) throw ConflictError("set_base on a non-empty store");
    high_water_ = last_before_first;
}

std::vector<TaskLevelBehavior> TaskStore::read(const fs::path& file) {
    std::vector<TaskLevelBehavior> out;
    for (const auto& rec : AppendLog::read_records(file, kTbsHeader)) {
        if (rec.starts_with(kAmendPrefix)) {
            auto a = parse_amendment(rec);
            if (out.empty() || a.tb_id < out.front().tb_id || a.tb_id > out.back().tb_id) {
                throw IntegrityError("amendment for unknown tb " + std::to_string(a.tb_id));
            }
            auto& tb = out[a.tb_id - out.front().tb_id];
            tb.task = a.task;
            tb.needs_retry = a.needs_retry;
            continue;
        }
        out.push_back(parse_tb(rec));
    }
    return out;
}

std::vector<TaskLevelBehavior> TaskStore::snapshot() const { return read(log_.path()); }

}  // namespace vme
