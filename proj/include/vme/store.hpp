// SPDX-License-Identifier: Apache-2.0
//
// Append-only newline-delimited stores under a data directory.
//
//   events.log   raw events as received (`#vme-events v1`)
//   lbs.log      log-level behaviors (`#vme-lbs v1`)
//   tbs.log      task-level behaviors and task amendments (`#vme-tbs v1`)
//
// A single writer appends whole lines with one write(2) each; readers parse the
// file and ignore a trailing partial line, so they always observe a prefix.
#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "vme/model.hpp"

namespace vme {

namespace fs = std::filesystem;

struct StoreOptions {
    /// fdatasync after every append. Appends are always handed to the kernel
    /// before returning; this additionally survives power loss.
    bool sync = false;
};

/// One append-only file of newline-terminated records behind a header line.
class AppendLog {
public:
    AppendLog() = default;
    AppendLog(const AppendLog&) = delete;
    AppendLog& operator=(const AppendLog&) = delete;
    AppendLog(AppendLog&& other) noexcept;
    AppendLog& operator=(AppendLog&& other) noexcept;
    ~AppendLog();

    /// Creates the file with `header` if missing; otherwise checks the header
    /// and truncates a torn trailing record left by an interrupted write.
    static AppendLog open(const fs::path& file, std::string_view header, StoreOptions opts = {});

    /// `record` must not contain a newline.
    void append(std::string_view record);

    /// Complete records currently on disk (header excluded).
    [[nodiscard]] std::vector<std::string> records() const;
    [[nodiscard]] const fs::path& path() const noexcept { return path_; }

    /// Reads complete records of any log file without opening it for writing.
    static std::vector<std::string> read_records(const fs::path& file, std::string_view header);

private:
    fs::path path_;
    std::string header_;
    int fd_ = -1;
    StoreOptions opts_;
};

/// Raw event log; event ids strictly increase.
class EventLog {
public:
    static EventLog open(const fs::path& file, StoreOptions opts = {});

    void append(const RawEvent& e);
    [[nodiscard]] EventId last_id() const noexcept { return last_id_; }
    [[nodiscard]] std::vector<RawEvent> snapshot() const;
    [[nodiscard]] static std::vector<RawEvent> read(const fs::path& file);

private:
    AppendLog log_;
    EventId last_id_ = 0;
    bool any_ = false;
};

/// Append-only LB sequence with a high-water mark; lb ids are dense.
class BehaviorStore {
public:
    static BehaviorStore open(const fs::path& file, StoreOptions opts = {});

    /// Requires lb.lb_id == high_water() + 1 (ConflictError otherwise).
    void append(const LogLevelBehavior& lb);
    /// Assigns the next id and appends.
    LbId append_next(LogLevelBehavior lb);

    [[nodiscard]] LbId high_water() const noexcept { return high_water_; }
    [[nodiscard]] std::size_t size() const noexcept { return size_; }
    [[nodiscard]] std::vector<LogLevelBehavior> snapshot() const;
    [[nodiscard]] static std::vector<LogLevelBehavior> read(const fs::path& file);

    /// An empty store may start at any id (used when importing a range).
    void set_base(LbId last_before_first);

private:
    AppendLog log_;
    LbId high_water_ = 0;
    std::size_t size_ = 0;
};

struct TaskAmendment {
    TbId tb_id = 0;
    std::string task;
    bool needs_retry = false;

    friend bool operator==(const TaskAmendment&, const TaskAmendment&) = default;
};

[[nodiscard]] std::string serialize_amendment(const TaskAmendment& a);

/// TB records plus task amendments (a retried summary). snapshot() folds the
/// latest amendment into each TB.
class TaskStore {
public:
    static TaskStore open(const fs::path& file, StoreOptions opts = {});

    /// Requires dense tb ids and no LB already owned by another TB.
    void append(const TaskLevelBehavior& tb);
    TbId append_next(TaskLevelBehavior tb);
    void amend(const TaskAmendment& a);

    [[nodiscard]] TbId high_water() const noexcept { return high_water_; }
    [[nodiscard]] std::vector<TaskLevelBehavior> snapshot() const;
    [[nodiscard]] static std::vector<TaskLevelBehavior> read(const fs::path& file);

    void set_base(TbId last_before_first);

private:
    AppendLog log_;
    TbId high_water_ = 0;
    std::size_t size_ = 0;
    std::unordered_set<LbId> owned_;
};

/// File layout of a data directory.
struct DataDir {
    fs::path root;

    [[nodiscard]] fs::path events() const { return root / "events.log"; }
    [[nodiscard]] fs::path lbs() const { return root / "lbs.log"; }
    [[nodiscard]] fs::path tbs() const { return root / "tbs.log"; }
    [[nodiscard]] fs::path task_state() const { return root / "tasks.state"; }
    [[nodiscard]] fs::path symbols() const { return root / "symbols.idx"; }
    [[nodiscard]] fs::path persona_dir() const { return root / "persona"; }
    [[nodiscard]] fs::path validation() const { return root / "validation.log"; }
    [[nodiscard]] fs::path answers() const { return root / "answers.log"; }
    [[nodiscard]] fs::path config() const { return root / "vme.json"; }
};

/// Writes `content` to `target` atomically (temp file, fsync, rename).
/// `before_rename` runs after the temp file is durable; if it throws, the temp
/// file is removed and `target` is left untouched.
void write_file_atomic(const fs::path& target, std::string_view content,
                       const std::function<void()>& before_rename = {});
[[nodiscard]] std::string read_file(const fs::path& file);

}  // namespace vme
