// SPDX-License-Identifier: Apache-2.0
#include "vme/engine.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <sys/un.h>
#include <unistd.h>

#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <ctime>
#include <fstream>
#include <istream>
#include <json.hpp>
#include <mutex>
#include <set>
#include <thread>
#include <unordered_map>

#include "vme/codec.hpp"
#include "vme/errors.hpp"

namespace vme {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Configuration

std::optional<std::string> process_env(const std::string& name) {
    if (const char* v = std::getenv(name.c_str()); v && *v) return std::string(v);
    return std::nullopt;
}

namespace {

template <typename T>
void read_opt(const nlohmann::json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw UsageError(std::string("config: bad value for ") + key);
    }
}

bool looks_secret(const std::string& key) {
    std::string k;
    for (char c : key) k += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return k == "api_key" || k == "apikey" || k == "key" || k == "token" || k == "secret" || k == "password";
}

void refuse_secrets(const nlohmann::json& j, const std::string& where) {
    if (!j.is_object()) return;
    for (const auto& [k, v] : j.items()) {
        if (looks_secret(k)) {
            throw UsageError("config: '" + where + k + "' looks like a secret; secrets are read from the environment only");
        }
        refuse_secrets(v, where + k + ".");
    }
}

}  // namespace

Config load_config(const std::optional<fs::path>& data_dir_override, const EnvLookup& env) {
    Config cfg;
    if (data_dir_override) {
        cfg.data_dir = *data_dir_override;
    } else if (auto d = env("VME_DATA_DIR")) {
        cfg.data_dir = *d;
    } else {
        cfg.data_dir = ".vme";
    }

    const fs::path file = DataDir{cfg.data_dir}.config();
    if (fs::exists(file)) {
        auto j = nlohmann::json::parse(read_file(file), nullptr, false);
        if (j.is_discarded() || !j.is_object()) throw UsageError("config: " + file.string() + " is not a JSON object");
        refuse_secrets(j, "");
        if (j.contains("llm")) {
            const auto& l = j["llm"];
            read_opt(l, "client", cfg.llm.client_id);
            read_opt(l, "endpoint", cfg.llm.endpoint);
            read_opt(l, "model", cfg.llm.model);
            read_opt(l, "key_env", cfg.llm.key_env);
            read_opt(l, "fixtures", cfg.llm.fixtures);
            read_opt(l, "timeout_s", cfg.llm.timeout_s);
        }
        if (j.contains("embedding")) {
            const auto& e = j["embedding"];
            read_opt(e, "provider", cfg.embedding.provider_id);
            read_opt(e, "endpoint", cfg.embedding.endpoint);
            read_opt(e, "model", cfg.embedding.model);
        }
        if (j.contains("params")) {
            const auto& p = j["params"];
            read_opt(p, "a", cfg.params.a);
            read_opt(p, "b", cfg.params.b);
            read_opt(p, "c", cfg.params.c);
            read_opt(p, "d", cfg.params.d);
            read_opt(p, "tau_s", cfg.params.tau);
            read_opt(p, "d_max", cfg.params.d_max);
            read_opt(p, "theta_p", cfg.params.theta_p);
            read_opt(p, "eps", cfg.params.eps);
            read_opt(p, "min_pts", cfg.params.min_pts);
        }
        if (j.contains("batching")) {
            const auto& b = j["batching"];
            read_opt(b, "idle_flush_s", cfg.batching.idle_flush_s);
            read_opt(b, "max_elapsed_s", cfg.batching.max_elapsed_s);
            read_opt(b, "density_budget", cfg.batching.density_budget);
            read_opt(b, "min_batch", cfg.batching.min_batch);
            read_opt(b, "max_batch", cfg.batching.max_batch);
        }
        if (j.contains("capture")) {
            read_opt(j["capture"], "socket", cfg.capture.socket_path);
            read_opt(j["capture"], "port", cfg.capture.port);
        }
        read_opt(j, "merge_gap_ms", cfg.merge_gap_ms);
        std::string ws;
        read_opt(j, "workspace_root", ws);
        if (!ws.empty()) cfg.workspace_root = ws;
        read_opt(j, "sync", cfg.sync);
    }

    if (auto v = env("VME_LLM_CLIENT")) cfg.llm.client_id = *v;
    if (auto v = env("VME_LLM_ENDPOINT")) cfg.llm.endpoint = *v;
    if (auto v = env("VME_LLM_MODEL")) cfg.llm.model = *v;
    if (auto v = env("VME_LLM_FIXTURES")) cfg.llm.fixtures = *v;
    if (auto v = env("VME_EMBEDDING_PROVIDER")) cfg.embedding.provider_id = *v;
    if (auto v = env("VME_EMBEDDING_ENDPOINT")) cfg.embedding.endpoint = *v;
    if (auto v = env("VME_WORKSPACE")) cfg.workspace_root = *v;

    cfg.params.validate();
    const auto& b = cfg.batching;
    if (b.min_batch < 1 || b.max_batch < b.min_batch || b.idle_flush_s <= 0 || b.max_elapsed_s <= 0 ||
        b.density_budget <= 0) {
        throw UsageError("config: invalid batching policy");
    }
    if (cfg.merge_gap_ms < 0) throw UsageError("config: merge_gap_ms must be >= 0");
    if (cfg.llm.client_id != "mock" && cfg.llm.client_id != "http") {
        throw UsageError("config: unknown llm client '" + cfg.llm.client_id + "' (mock, http)");
    }
    if (cfg.embedding.provider_id != "hashed-bow-256" && cfg.embedding.provider_id != "http") {
        throw UsageError("config: unknown embedding provider '" + cfg.embedding.provider_id + "' (hashed-bow-256, http)");
    }
    return cfg;
}

std::unique_ptr<LlmClient> make_llm_client(const Config& cfg, const EnvLookup& env) {
    if (cfg.llm.client_id == "http") {
        HttpLlmConfig h{cfg.llm.endpoint, cfg.llm.model, env(cfg.llm.key_env).value_or(""), cfg.llm.timeout_s};
        return std::make_unique<HttpLlmClient>(std::move(h));
    }
    auto mock = std::make_unique<MockLlmClient>();
    if (!cfg.llm.fixtures.empty()) mock->load(cfg.llm.fixtures);
    return mock;
}

std::unique_ptr<EmbeddingProvider> make_embedding_provider(const Config& cfg, const EnvLookup& env) {
    if (cfg.embedding.provider_id == "http") {
        HttpLlmConfig h{cfg.embedding.endpoint, cfg.embedding.model, env(cfg.llm.key_env).value_or(""),
                        cfg.llm.timeout_s};
        return std::make_unique<HttpEmbeddingProvider>(std::move(h));
    }
    return std::make_unique<HashedBagOfTokens>();
}

// ---------------------------------------------------------------------------
// Pipeline

Pipeline::Pipeline(const Config& cfg, LlmClient& client, EmbeddingProvider& provider, PipelineOptions opts)
    : cfg_(cfg),
      client_(client),
      provider_(provider),
      opts_(opts),
      dir_{cfg.data_dir},
      pre_(cfg.merge_gap_ms),
      recognizer_(cfg.params, provider, client, cfg.workspace_root) {
    fs::create_directories(dir_.root);
    if (fs::exists(dir_.symbols())) symbols_ = SymbolIndex::load(dir_.symbols().string());
    extractor_ = std::make_unique<BehaviorExtractor>(symbols_);
    const StoreOptions so{cfg.sync};
    events_ = EventLog::open(dir_.events(), so);
    lbs_ = BehaviorStore::open(dir_.lbs(), so);
    tbs_ = TaskStore::open(dir_.tbs(), so);
    load_state();
}

Pipeline::~Pipeline() = default;

void Pipeline::load_state() {
    if (!fs::exists(dir_.task_state())) {
        if (opts_.analysis && lbs_.high_water() > 0) {
            // Store written without analysis: everything is pending.
            pending_ = lbs_.snapshot();
        }
        return;
    }
    auto j = nlohmann::json::parse(read_file(dir_.task_state()), nullptr, false);
    if (j.is_discarded()) throw IntegrityError("corrupt " + dir_.task_state().string());
    last_batched_ = j.value("last_batched_lb", LbId{0});
    std::map<LbId, int> carry_ids;
    for (const auto& c : j.value("carry", nlohmann::json::array())) carry_ids[c.at(0).get<LbId>()] = c.at(1).get<int>();
    std::set<TbId> retry_ids;
    for (const auto& t : j.value("retry", nlohmann::json::array())) retry_ids.insert(t.get<TbId>());

    if (lbs_.high_water() == last_batched_ && carry_ids.empty() && retry_ids.empty()) return;
    auto all = lbs_.snapshot();
    std::unordered_map<LbId, const LogLevelBehavior*> by_id;
    for (const auto& lb : all) by_id[lb.lb_id] = &lb;
    std::vector<CarryEntry> carry;
    for (const auto& [id, n] : carry_ids) {
        auto it = by_id.find(id);
        if (it == by_id.end()) throw IntegrityError("carry-over references missing lb " + std::to_string(id));
        carry.push_back({*it->second, n});
    }
    recognizer_.restore_carry_over(std::move(carry));
    if (!retry_ids.empty()) {
        for (const auto& tb : tbs_.snapshot()) {
            if (!retry_ids.count(tb.tb_id) || !tb.needs_retry) continue;
            std::vector<LogLevelBehavior> members;
            for (auto id : tb.lbs) members.push_back(*by_id.at(id));
            recognizer_.add_pending_retry(tb.tb_id, std::move(members));
        }
    }
    for (const auto& lb : all) {
        if (lb.lb_id > last_batched_) pending_.push_back(lb);
    }
}

void Pipeline::save_state() const {
    nlohmann::ordered_json j;
    j["last_batched_lb"] = last_batched_;
    auto carry = nlohmann::ordered_json::array();
    for (const auto& c : recognizer_.carry_over()) carry.push_back({c.lb.lb_id, c.batches});
    j["carry"] = std::move(carry);
    auto retry = nlohmann::ordered_json::array();
    for (const auto& [id, lbs] : recognizer_.pending_retries()) retry.push_back(id);
    j["retry"] = std::move(retry);
    write_file_atomic(dir_.task_state(), j.dump() + "\n");
}

void Pipeline::push(const RawEvent& e) {
    // Ordering is checked before anything reaches the log.
    if (last_event_ts_ && e.timestamp < *last_event_ts_) {
        throw StreamError("event " + std::to_string(e.event_id) + " is older than its predecessor");
    }
    events_.append(e);
    last_event_ts_ = e.timestamp;
    pre_.push(e, scratch_);
    for (const auto& ev : scratch_) {
        if (auto lb = (*extractor_)(ev)) on_lb(std::move(*lb));
    }
    scratch_.clear();
}

void Pipeline::on_lb(LogLevelBehavior lb) {
    lb.lb_id = lbs_.append_next(lb);
    ++summary_.lbs;
    if (!opts_.analysis) return;
    const auto& policy = cfg_.batching;
    if (!pending_.empty()) {
        // Idle and window-age flushes happen before the new LB joins.
        const double idle = static_cast<double>(lb.timestamp - pending_.back().timestamp) / 1000.0;
        const double elapsed = static_cast<double>(lb.timestamp - pending_.front().timestamp) / 1000.0;
        if (idle >= policy.idle_flush_s || elapsed >= policy.max_elapsed_s) flush_batch();
    }
    pending_.push_back(std::move(lb));
    const double elapsed = static_cast<double>(pending_.back().timestamp - pending_.front().timestamp) / 1000.0;
    const double rate = static_cast<double>(pending_.size()) * 60.0 / std::max(elapsed, 60.0);
    if (pending_.size() >= static_cast<std::size_t>(policy.n_max(rate))) flush_batch();
}

void Pipeline::flush_batch() {
    if (pending_.empty()) return;
    const LbId last = pending_.back().lb_id;
    auto result = recognizer_.process_batch(std::move(pending_), &tbs_);
    pending_.clear();
    ++summary_.batches;
    summary_.tbs += result.tbs.size();
    summary_.pruned += result.pruned.size();
    summary_.exhausted += result.exhausted.size();
    summary_.carried = result.carry_over.size();
    summary_.partition_ok = summary_.partition_ok && result.reconciles();
    summary_.warnings.insert(summary_.warnings.end(), result.warnings.begin(), result.warnings.end());
    last_batched_ = last;
    save_state();
}

IngestSummary Pipeline::finish() {
    pre_.finish(scratch_);
    for (const auto& ev : scratch_) {
        if (auto lb = (*extractor_)(ev)) on_lb(std::move(*lb));
    }
    scratch_.clear();
    if (opts_.analysis) flush_batch();
    summary_.preprocess = pre_.stats();
    summary_.skipped = extractor_->skipped();
    if (opts_.persona && opts_.analysis && lbs_.high_water() > 0) {
        std::optional<TimestampMs> last;
        if (auto p = load_persona(dir_.persona_dir())) last = p->computed_at;
        auto lbs = lbs_.snapshot();
        TimestampMs newest = 0;
        for (const auto& lb : lbs) newest = std::max(newest, lb.timestamp);
        if (persona_due(last, newest)) snapshot_persona(dir_.persona_dir(), compute_persona(tbs_.snapshot(), lbs));
    }
    IngestSummary out = summary_;
    // The preprocessor restarts with the next stream.
    pre_ = Preprocessor(cfg_.merge_gap_ms);
    summary_ = {};
    summary_.carried = out.carried;
    extractor_ = std::make_unique<BehaviorExtractor>(symbols_);
    return out;
}

IngestSummary Pipeline::ingest(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw ParseError("empty event stream; expected header", "header", 0);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    check_header(line, kEventsHeader);
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        RawEvent e;
        try {
            e = parse_event(line);
        } catch (const ParseError& err) {
            throw ParseError("line " + std::to_string(lineno) + ": " + err.what(), err.field(), err.offset());
        }
        push(e);
    }
    return finish();
}

Persona refresh_persona(const DataDir& dir) {
    auto p = compute_persona(TaskStore::read(dir.tbs()), BehaviorStore::read(dir.lbs()));
    snapshot_persona(dir.persona_dir(), p);
    return p;
}

// ---------------------------------------------------------------------------
// Socket transport

namespace {

class Fd {
public:
    explicit Fd(int fd = -1) : fd_(fd) {}
    Fd(const Fd&) = delete;
    Fd& operator=(const Fd&) = delete;
    Fd(Fd&& o) noexcept : fd_(o.fd_) { o.fd_ = -1; }
    Fd& operator=(Fd&& o) noexcept {
        if (this != &o) {
            if (fd_ >= 0) ::close(fd_);
            fd_ = o.fd_;
            o.fd_ = -1;
        }
        return *this;
    }
    ~Fd() {
        if (fd_ >= 0) ::close(fd_);
    }
    [[nodiscard]] int get() const noexcept { return fd_; }

private:
    int fd_;
};

[[noreturn]] void socket_failure(const std::string& what) {
    throw StreamError(what + ": " + std::strerror(errno));
}

void send_line(int fd, const std::string& line) {
    std::string buf = line + "\n";
    std::size_t off = 0;
    while (off < buf.size()) {
        ssize_t n = ::send(fd, buf.data() + off, buf.size() - off, MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) continue;
            return;  // peer went away; nothing left to tell it
        }
        off += static_cast<std::size_t>(n);
    }
}

/// Buffered line reader over a socket.
class LineReader {
public:
    explicit LineReader(int fd) : fd_(fd) {}

    bool next(std::string& line) {
        for (;;) {
            auto nl = buf_.find('\n', pos_);
            if (nl != std::string::npos) {
                line.assign(buf_, pos_, nl - pos_);
                pos_ = nl + 1;
                if (!line.empty() && line.back() == '\r') line.pop_back();
                return true;
            }
            buf_.erase(0, pos_);
            pos_ = 0;
            char chunk[65536];
            ssize_t n = ::recv(fd_, chunk, sizeof chunk, 0);
            if (n < 0 && errno == EINTR) continue;
            if (n <= 0) {
                if (buf_.empty()) return false;
                line = std::move(buf_);
                buf_.clear();
                return true;
            }
            buf_.append(chunk, static_cast<std::size_t>(n));
        }
    }

private:
    int fd_;
    std::string buf_;
    std::size_t pos_ = 0;
};

Fd make_listener(const ListenOptions& opts, int& port_out) {
    if (!opts.socket_path.empty()) {
        Fd fd(::socket(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0));
        if (fd.get() < 0) socket_failure("socket");
        sockaddr_un addr{};
        addr.sun_family = AF_UNIX;
        if (opts.socket_path.size() >= sizeof addr.sun_path) throw UsageError("socket path too long");
        std::strncpy(addr.sun_path, opts.socket_path.c_str(), sizeof addr.sun_path - 1);
        ::unlink(opts.socket_path.c_str());
        if (::bind(fd.get(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) socket_failure("bind");
        if (::listen(fd.get(), 16) != 0) socket_failure("listen");
        port_out = 0;
        return fd;
    }
    Fd fd(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
    if (fd.get() < 0) socket_failure("socket");
    int one = 1;
    ::setsockopt(fd.get(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = htons(static_cast<std::uint16_t>(opts.port));
    if (::bind(fd.get(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) socket_failure("bind");
    if (::listen(fd.get(), 16) != 0) socket_failure("listen");
    socklen_t len = sizeof addr;
    ::getsockname(fd.get(), reinterpret_cast<sockaddr*>(&addr), &len);
    port_out = ntohs(addr.sin_port);
    return fd;
}

}  // namespace

IngestSummary listen_and_ingest(Pipeline& pipeline, const ListenOptions& opts) {
    int port = 0;
    Fd listener = make_listener(opts, port);
    if (opts.on_ready) opts.on_ready(port);

    std::mutex writer;  // single writer into the pipeline
    IngestSummary total;
    std::vector<std::thread> readers;
    auto serve = [&](Fd conn) {
        LineReader reader(conn.get());
        std::string line;
        std::size_t count = 0;
        try {
            if (!reader.next(line)) return;
            check_header(line, kEventsHeader);
            while (reader.next(line)) {
                if (line.empty()) continue;
                RawEvent e = parse_event(line);
                {
                    std::lock_guard lock(writer);
                    pipeline.push(e);
                }
                if (++count % kAckInterval == 0) send_line(conn.get(), "ack " + std::to_string(count));
            }
            IngestSummary s;
            {
                std::lock_guard lock(writer);
                s = pipeline.finish();
                total.preprocess.read += s.preprocess.read;
                total.preprocess.filtered += s.preprocess.filtered;
                total.preprocess.merged += s.preprocess.merged;
                total.preprocess.folded += s.preprocess.folded;
                total.preprocess.emitted += s.preprocess.emitted;
                total.lbs += s.lbs;
                total.skipped += s.skipped;
                total.batches += s.batches;
                total.tbs += s.tbs;
                total.pruned += s.pruned;
                total.exhausted += s.exhausted;
                total.carried = s.carried;
                total.partition_ok = total.partition_ok && s.partition_ok;
                total.warnings.insert(total.warnings.end(), s.warnings.begin(), s.warnings.end());
            }
            send_line(conn.get(), "ack " + std::to_string(count));
        } catch (const std::exception& e) {
            send_line(conn.get(), std::string("error ") + e.what());
            std::lock_guard lock(writer);
            total.warnings.push_back(std::string("connection dropped: ") + e.what());
        }
    };

    for (int served = 0; opts.max_connections == 0 || served < opts.max_connections; ++served) {
        int c = ::accept4(listener.get(), nullptr, nullptr, SOCK_CLOEXEC);
        if (c < 0) {
            if (errno == EINTR) {
                --served;
                continue;
            }
            socket_failure("accept");
        }
        readers.emplace_back(serve, Fd(c));
    }
    for (auto& t : readers) t.join();
    if (!opts.socket_path.empty()) ::unlink(opts.socket_path.c_str());
    return total;
}

std::vector<std::string> stream_events(const ListenOptions& target, const std::vector<std::string>& lines) {
    Fd fd;
    if (!target.socket_path.empty()) {
        fd = Fd(::socket(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0));
        sockaddr_un addr{};
        addr.sun_family = AF_UNIX;
        std::strncpy(addr.sun_path, target.socket_path.c_str(), sizeof addr.sun_path - 1);
        if (::connect(fd.get(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) socket_failure("connect");
    } else {
        fd = Fd(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
        addr.sin_port = htons(static_cast<std::uint16_t>(target.port));
        if (::connect(fd.get(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) socket_failure("connect");
    }
    // Writer thread so acks cannot back up against a blocked send.
    std::thread writer([&] {
        std::string buf;
        for (const auto& l : lines) {
            buf += l;
            buf += '\n';
            if (buf.size() > 65536) {
                send_line(fd.get(), buf.substr(0, buf.size() - 1));
                buf.clear();
            }
        }
        if (!buf.empty()) send_line(fd.get(), buf.substr(0, buf.size() - 1));
        ::shutdown(fd.get(), SHUT_WR);
    });
    std::vector<std::string> replies;
    LineReader reader(fd.get());
    std::string line;
    while (reader.next(line)) replies.push_back(line);
    writer.join();
    return replies;
}

// ---------------------------------------------------------------------------
// Archives

ArchiveCounts export_archive(const DataDir& dir, TimestampMs from, TimestampMs to, const fs::path& out) {
    if (from > to) throw UsageError("export: --from is after --to");
    ArchiveCounts counts;
    std::string text(kArchiveHeader);
    text += "\n@events\n";
    text += kEventsHeader;
    text += '\n';
    if (fs::exists(dir.events())) {
        for (const auto& e : EventLog::read(dir.events())) {
            if (e.timestamp < from || e.timestamp > to) continue;
            text += serialize_event(e) + "\n";
            ++counts.events;
        }
    }
    text += "@lbs\n";
    text += kLbsHeader;
    text += '\n';
    if (fs::exists(dir.lbs())) {
        for (const auto& lb : BehaviorStore::read(dir.lbs())) {
            if (lb.timestamp < from || lb.timestamp > to) continue;
            text += serialize_lb(lb) + "\n";
            ++counts.lbs;
        }
    }
    text += "@tbs\n";
    text += kTbsHeader;
    text += '\n';
    if (fs::exists(dir.tbs())) {
        for (const auto& tb : TaskStore::read(dir.tbs())) {
            if (tb.start_ts < from || tb.end_ts > to) continue;
            text += serialize_tb(tb) + "\n";
            ++counts.tbs;
        }
    }
    write_file_atomic(out, text);
    return counts;
}

ArchiveCounts import_archive(const DataDir& dir, const fs::path& archive) {
    const std::string text = read_file(archive);
    std::vector<RawEvent> events;
    std::vector<LogLevelBehavior> lbs;
    std::vector<TaskLevelBehavior> tbs;

    std::size_t pos = 0;
    std::size_t lineno = 0;
    std::string section;
    bool expect_header = false;
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        std::string_view line(text.data() + pos, (nl == std::string::npos ? text.size() : nl) - pos);
        pos = nl == std::string::npos ? text.size() : nl + 1;
        ++lineno;
        if (lineno == 1) {
            check_header(line, kArchiveHeader);
            continue;
        }
        if (line.empty()) continue;
        if (line.front() == '@') {
            section = std::string(line.substr(1));
            expect_header = true;
            continue;
        }
        auto where = [&] { return "archive line " + std::to_string(lineno) + ": "; };
        try {
            if (section == "events") {
                if (expect_header) {
                    check_header(line, kEventsHeader);
                } else {
                    events.push_back(parse_event(line));
                }
            } else if (section == "lbs") {
                if (expect_header) {
                    check_header(line, kLbsHeader);
                } else {
                    lbs.push_back(parse_lb(line));
                }
            } else if (section == "tbs") {
                if (expect_header) {
                    check_header(line, kTbsHeader);
                } else {
                    tbs.push_back(parse_tb(line));
                }
            } else {
                throw ParseError("unknown archive section '" + section + "'", "section", 0);
            }
        } catch (const ParseError& e) {
            throw ParseError(where() + e.what(), e.field(), e.offset());
        }
        expect_header = false;
    }
    if (lineno == 0) throw ParseError("empty archive", "header", 0);

    fs::create_directories(dir.root);
    auto ev_log = EventLog::open(dir.events());
    auto lb_store = BehaviorStore::open(dir.lbs());
    auto tb_store = TaskStore::open(dir.tbs());

    // Reject overlaps before writing anything.
    if (!events.empty() && ev_log.last_id() != 0 && events.front().event_id <= ev_log.last_id()) {
        throw ConflictError("archive event ids overlap the store (first " + std::to_string(events.front().event_id) +
                            ", store at " + std::to_string(ev_log.last_id()) + ")");
    }
    if (!lbs.empty() && lb_store.size() > 0 && lbs.front().lb_id != lb_store.high_water() + 1) {
        throw ConflictError("archive lb ids do not continue the store (first " + std::to_string(lbs.front().lb_id) +
                            ", store at " + std::to_string(lb_store.high_water()) + ")");
    }
    if (!tbs.empty() && tb_store.high_water() > 0 && tbs.front().tb_id != tb_store.high_water() + 1) {
        throw ConflictError("archive tb ids do not continue the store (first " + std::to_string(tbs.front().tb_id) +
                            ", store at " + std::to_string(tb_store.high_water()) + ")");
    }
    for (std::size_t i = 1; i < lbs.size(); ++i) {
        if (lbs[i].lb_id != lbs[i - 1].lb_id + 1) throw ConflictError("archive lb ids are not dense");
    }
    for (std::size_t i = 1; i < tbs.size(); ++i) {
        if (tbs[i].tb_id != tbs[i - 1].tb_id + 1) throw ConflictError("archive tb ids are not dense");
    }

    for (const auto& e : events) ev_log.append(e);
    if (!lbs.empty() && lb_store.size() == 0) lb_store.set_base(lbs.front().lb_id - 1);
    for (const auto& lb : lbs) lb_store.append(lb);
    if (!tbs.empty() && tb_store.high_water() == 0) tb_store.set_base(tbs.front().tb_id - 1);
    for (const auto& tb : tbs) tb_store.append(tb);
    return {events.size(), lbs.size(), tbs.size()};
}

TimestampMs parse_time_arg(const std::string& text) {
    if (text.empty()) throw UsageError("empty time value");
    if (std::all_of(text.begin(), text.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }) &&
        text.size() > 10) {
        return std::stoll(text);
    }
    std::tm tm{};
    const char* end = nullptr;
    for (const char* fmt : {"%Y-%m-%dT%H:%M:%SZ", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%d"}) {
        tm = {};
        end = strptime(text.c_str(), fmt, &tm);
        if (end && *end == '\0') break;
        end = nullptr;
    }
    if (!end) throw UsageError("cannot parse time '" + text + "' (epoch ms or YYYY-MM-DD[THH:MM:SS[Z]])");
    return static_cast<TimestampMs>(timegm(&tm)) * 1000;
}

}  // namespace vme
