// SPDX-License-Identifier: Apache-2.0
//
// Wiring of the pipeline over a data directory: configuration, streaming
// ingestion with density-adaptive batching, the capture socket server and
// archive export/import.
#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "vme/ingest.hpp"
#include "vme/llm.hpp"
#include "vme/persona.hpp"
#include "vme/similarity.hpp"
#include "vme/store.hpp"
#include "vme/tasks.hpp"

namespace vme {

struct Config {
    std::filesystem::path data_dir;
    struct Llm {
        std::string client_id = "mock";  // mock | http
        std::string endpoint;
        std::string model;
        std::string key_env = "VME_LLM_API_KEY";  // name of the variable holding the key
        std::string fixtures;                     // JSON-lines fixtures for the mock client
        int timeout_s = 60;
    } llm;
    struct Embedding {
        std::string provider_id = "hashed-bow-256";  // hashed-bow-256 | http
        std::string endpoint;
        std::string model;
    } embedding;
    RelatednessParams params;
    BatchingPolicy batching;
    TimestampMs merge_gap_ms = kDefaultMergeGapMs;
    std::filesystem::path workspace_root = ".";
    struct Capture {
        std::string socket_path;  // unix socket; used when set
        int port = 0;             // TCP on 127.0.0.1 otherwise
    } capture;
    bool sync = false;  // fdatasync every append
};

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

/// Process environment lookup.
[[nodiscard]] std::optional<std::string> process_env(const std::string& name);

/// Data directory from the override, VME_DATA_DIR or ./.vme; then
/// <data_dir>/vme.json when present; then environment overrides. Secrets in
/// the config file are refused. Throws UsageError on invalid values.
[[nodiscard]] Config load_config(const std::optional<std::filesystem::path>& data_dir_override,
                                 const EnvLookup& env = process_env);

[[nodiscard]] std::unique_ptr<LlmClient> make_llm_client(const Config& cfg, const EnvLookup& env = process_env);
[[nodiscard]] std::unique_ptr<EmbeddingProvider> make_embedding_provider(const Config& cfg,
                                                                         const EnvLookup& env = process_env);

struct IngestSummary {
    PreprocessStats preprocess;
    std::size_t lbs = 0;
    std::size_t skipped = 0;  // events without an LB
    std::size_t batches = 0;
    std::size_t tbs = 0;
    std::size_t pruned = 0;
    std::size_t exhausted = 0;
    std::size_t carried = 0;  // carry-over after the last batch
    bool partition_ok = true;
    std::vector<std::string> warnings;
};

struct PipelineOptions {
    bool analysis = true;  // batch clustering and summarization
    bool persona = true;   // refresh the persona snapshot when due after a stream
};

/// Single-writer pipeline over one data directory.
class Pipeline {
public:
    Pipeline(const Config& cfg, LlmClient& client, EmbeddingProvider& provider, PipelineOptions opts = {});
    ~Pipeline();
    Pipeline(const Pipeline&) = delete;
    Pipeline& operator=(const Pipeline&) = delete;

    /// One raw event: logged, preprocessed, extracted, batched.
    void push(const RawEvent& e);
    /// End of a stream: drains the preprocessor, flushes the pending batch
    /// and refreshes the persona if due.
    IngestSummary finish();

    /// Reads a `#vme-events v1` stream. Throws ParseError (with line number)
    /// on malformed records and on a header mismatch.
    IngestSummary ingest(std::istream& in);

    [[nodiscard]] const IngestSummary& summary() const noexcept { return summary_; }

private:
    void on_lb(LogLevelBehavior lb);
    void flush_batch();
    void save_state() const;
    void load_state();

    Config cfg_;
    LlmClient& client_;
    EmbeddingProvider& provider_;
    PipelineOptions opts_;
    DataDir dir_;
    SymbolIndex symbols_;
    EventLog events_;
    BehaviorStore lbs_;
    TaskStore tbs_;
    Preprocessor pre_;
    std::unique_ptr<BehaviorExtractor> extractor_;
    TaskRecognizer recognizer_;
    std::vector<LogLevelBehavior> pending_;
    LbId last_batched_ = 0;
    std::optional<TimestampMs> last_event_ts_;
    IngestSummary summary_;
    std::vector<RawEvent> scratch_;
};

/// Recomputes the persona from the stores and snapshots it.
Persona refresh_persona(const DataDir& dir);

/// Socket ingestion: each connection sends the events header and then one
/// record per line; the server answers "ack <n>" every 100 events and once
/// more at end of stream, or "error <message>" before closing.
struct ListenOptions {
    std::string socket_path;  // unix socket when set
    int port = 0;             // otherwise TCP on 127.0.0.1; 0 picks a free port
    int max_connections = 0;  // stop after this many (0 = forever)
    std::function<void(int port)> on_ready;
};

inline constexpr std::size_t kAckInterval = 100;

IngestSummary listen_and_ingest(Pipeline& pipeline, const ListenOptions& opts);

/// Client side of the socket protocol; returns the server's reply lines.
std::vector<std::string> stream_events(const ListenOptions& target, const std::vector<std::string>& lines);

inline constexpr std::string_view kArchiveHeader = "#vme-archive v1";

struct ArchiveCounts {
    std::size_t events = 0;
    std::size_t lbs = 0;
    std::size_t tbs = 0;
};

/// Events, LBs and TBs with timestamps in [from, to] as one archive file.
ArchiveCounts export_archive(const DataDir& dir, TimestampMs from, TimestampMs to, const std::filesystem::path& out);
/// Appends an archive to the stores; overlapping ids are rejected with
/// ConflictError before anything is written.
ArchiveCounts import_archive(const DataDir& dir, const std::filesystem::path& archive);

/// Epoch milliseconds, or an ISO date / date-time in UTC.
[[nodiscard]] TimestampMs parse_time_arg(const std::string& text);

}  // namespace vme
