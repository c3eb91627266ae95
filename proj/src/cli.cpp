// SPDX-License-Identifier: Apache-2.0
#include "vme/cli.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "vme/codec.hpp"
#include "vme/engine.hpp"
#include "vme/errors.hpp"
#include "vme/qa.hpp"

namespace vme {

namespace {

TimestampMs wall_clock_ms() {
    using namespace std::chrono;
    return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

void print_summary(std::ostream& out, const IngestSummary& s) {
    out << "read: " << s.preprocess.read << ", filtered: " << s.preprocess.filtered
        << ", merged: " << s.preprocess.merged << ", folded: " << s.preprocess.folded << ", lbs: " << s.lbs
        << ", tbs: " << s.tbs << ", batches: " << s.batches << ", pruned: " << s.pruned
        << ", carried: " << s.carried << ", finalized noise: " << s.exhausted << "\n";
    if (!s.partition_ok) out << "warning: batch accounting did not reconcile\n";
}

std::string format_ts(TimestampMs ts) {
    std::time_t secs = static_cast<std::time_t>(ts / 1000);
    std::tm tm{};
    gmtime_r(&secs, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/// Snapshot from disk, computed on demand when none exists yet.
Persona current_persona(const DataDir& dir) {
    if (auto p = load_persona(dir.persona_dir())) return *p;
    return refresh_persona(dir);
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Developer behavior analytics engine: ingest IDE activity, recognize tasks, build a persona, "
                 "answer repository questions with it."};
    app.name(args.empty() ? "vme" : args.front());
    app.require_subcommand(1);

    std::string data_dir;
    app.add_option("--data-dir", data_dir, "Data directory (default: $VME_DATA_DIR or ./.vme)");

    auto* ingest = app.add_subcommand("ingest", "Ingest an event file (or '-' for stdin), or listen on a socket");
    std::string ingest_file;
    bool listen = false;
    std::string socket_path;
    int port = -1;
    int max_connections = 0;
    bool no_analysis = false;
    ingest->add_option("file", ingest_file, "Event file in the #vme-events v1 format");
    ingest->add_flag("--listen", listen, "Accept event streams on a socket");
    ingest->add_option("--socket", socket_path, "Unix socket path for --listen");
    ingest->add_option("--port", port, "TCP port on 127.0.0.1 for --listen (0 = any)");
    ingest->add_option("--max-connections", max_connections, "Stop listening after this many streams");
    ingest->add_flag("--no-analysis", no_analysis, "Store events and LBs only; skip task recognition");

    auto* tasks = app.add_subcommand("tasks", "List recognized tasks");
    std::string from_s, to_s;
    bool tasks_json = false;
    tasks->add_option("--from", from_s, "Start (epoch ms or YYYY-MM-DD[THH:MM:SS])");
    tasks->add_option("--to", to_s, "End (epoch ms or YYYY-MM-DD[THH:MM:SS])");
    tasks->add_flag("--json", tasks_json, "One TB record per line");

    auto* persona = app.add_subcommand("persona", "Show the developer persona");
    bool persona_json = false;
    bool persona_refresh = false;
    persona->add_flag("--json", persona_json, "Print the snapshot document");
    persona->add_flag("--refresh", persona_refresh, "Recompute from the stores first");

    auto* validate = app.add_subcommand("validate", "Score persona metrics from a confirmation file");
    std::string confirm_file;
    validate->add_option("file", confirm_file, "Lines of '<metric_key> yes|no'")->required();

    auto* ask = app.add_subcommand("ask", "Ask a question about a repository");
    std::string question;
    bool baseline = false;
    std::string workspace;
    bool dump_prompt = false;
    bool verbose = false;
    ask->add_option("question", question, "The question")->required();
    ask->add_flag("--baseline", baseline, "Leave the persona out of the prompt");
    ask->add_option("--workspace", workspace, "Directory whose files are given as context");
    ask->add_flag("--dump-prompt", dump_prompt, "Save the full prompt in the answer audit log");
    ask->add_flag("--verbose", verbose, "Print the rendered prompt and provenance");

    auto* exp = app.add_subcommand("export", "Write events, LBs and TBs in a time range to an archive");
    std::string exp_from, exp_to, exp_out;
    exp->add_option("--from", exp_from, "Start (epoch ms or date)")->required();
    exp->add_option("--to", exp_to, "End (epoch ms or date)")->required();
    exp->add_option("out", exp_out, "Archive path")->required();

    auto* imp = app.add_subcommand("import", "Append an archive to the stores");
    std::string imp_file;
    imp->add_option("archive", imp_file, "Archive written by export")->required();

    auto* symbols = app.add_subcommand("symbols", "Install a symbol index file into the data directory");
    std::string symbols_file;
    symbols->add_option("file", symbols_file, "Tab-separated path, scope, start line, end line")->required();

    try {
        std::vector<std::string> rev(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
        app.parse(rev);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        if (const auto* sub = app.get_subcommands().empty() ? nullptr : app.get_subcommands().front()) {
            err << sub->help();
        } else {
            err << app.help();
        }
        return 1;
    }

    try {
        const Config cfg = load_config(data_dir.empty() ? std::nullopt : std::optional<std::filesystem::path>(data_dir));
        const DataDir dir{cfg.data_dir};

        if (ingest->parsed()) {
            if (listen == !ingest_file.empty()) throw UsageError("ingest: give either a file or --listen");
            auto client = make_llm_client(cfg);
            auto provider = make_embedding_provider(cfg);
            Pipeline pipeline(cfg, *client, *provider, {!no_analysis, !no_analysis});
            IngestSummary s;
            if (listen) {
                ListenOptions lo;
                lo.socket_path = socket_path.empty() ? cfg.capture.socket_path : socket_path;
                lo.port = port >= 0 ? port : cfg.capture.port;
                lo.max_connections = max_connections;
                lo.on_ready = [&](int p) {
                    if (lo.socket_path.empty()) {
                        out << "listening on 127.0.0.1:" << p << "\n";
                    } else {
                        out << "listening on " << lo.socket_path << "\n";
                    }
                    out.flush();
                };
                s = listen_and_ingest(pipeline, lo);
            } else if (ingest_file == "-") {
                s = pipeline.ingest(std::cin);
            } else {
                std::ifstream in(ingest_file, std::ios::binary);
                if (!in) throw UsageError("cannot open " + ingest_file);
                s = pipeline.ingest(in);
            }
            print_summary(out, s);
            for (const auto& w : s.warnings) err << "warning: " << w << "\n";
            return 0;
        }

        if (tasks->parsed()) {
            const TimestampMs from = from_s.empty() ? std::numeric_limits<TimestampMs>::min() : parse_time_arg(from_s);
            const TimestampMs to = to_s.empty() ? std::numeric_limits<TimestampMs>::max() : parse_time_arg(to_s);
            if (!std::filesystem::exists(dir.tbs())) return 0;
            for (const auto& tb : TaskStore::read(dir.tbs())) {
                if (tb.end_ts < from || tb.start_ts > to) continue;
                if (tasks_json) {
                    out << serialize_tb(tb) << "\n";
                } else {
                    char dt[32];
                    std::snprintf(dt, sizeof dt, "%.1fs", tb.delta_t);
                    out << "#" << tb.tb_id << "  " << format_ts(tb.start_ts) << "  " << dt << "  " << tb.lbs.size()
                        << " LBs  " << tb.task << (tb.needs_retry ? "  [summary pending retry]" : "") << "\n";
                }
            }
            return 0;
        }

        if (persona->parsed()) {
            Persona p = persona_refresh ? refresh_persona(dir) : current_persona(dir);
            if (persona_json) {
                out << read_file(dir.persona_dir() / "current");
            } else {
                out << render_report(p);
            }
            return 0;
        }

        if (validate->parsed()) {
            const Persona p = current_persona(dir);
            auto records = parse_confirmations(read_file(confirm_file), p);
            auto log = AppendLog::open(dir.validation(), "#vme-validation v1");
            const TimestampMs now = wall_clock_ms();
            for (auto d : kDimensions) {
                auto it = std::find_if(records.begin(), records.end(), [&](const auto& r) { return r.dimension == d; });
                if (it == records.end()) {
                    out << to_string(d) << "  no confirmations (omitted)\n";
                    continue;
                }
                char line[96];
                std::snprintf(line, sizeof line, "%s  %d/%d  accuracy %.2f\n", std::string(to_string(d)).c_str(),
                              it->correct(), it->total(), compute_accuracy(*it));
                out << line;
                log.append(serialize_validation(*it, now));
            }
            return 0;
        }

        if (ask->parsed()) {
            auto client = make_llm_client(cfg);
            auto provider = make_embedding_provider(cfg);
            Query q{question, workspace, baseline ? QaMode::baseline : QaMode::personalized};
            std::optional<Persona> p;
            if (!baseline) p = load_persona(dir.persona_dir());
            std::vector<WorkspaceFile> files;
            if (!workspace.empty()) {
                if (!std::filesystem::is_directory(workspace)) throw UsageError("not a directory: " + workspace);
                files = collect_workspace(workspace);
            }
            std::filesystem::create_directories(dir.root);
            AuditOptions audit{dir.answers(), wall_clock_ms(), dump_prompt};
            std::vector<std::string> warnings;
            Answer a = vme::ask(q, p, files, *client, *provider, audit, &warnings);
            for (const auto& w : warnings) err << "warning: " << w << "\n";
            if (verbose) {
                out << "--- system prompt\n" << a.prompt.system << "\n--- user prompt\n" << a.prompt.user;
                out << "--- provenance:";
                for (const auto& k : a.provenance) out << " " << k;
                out << "\n--- answer\n";
            }
            out << a.text << "\n";
            return 0;
        }

        if (exp->parsed()) {
            auto c = export_archive(dir, parse_time_arg(exp_from), parse_time_arg(exp_to), exp_out);
            out << "exported events: " << c.events << ", lbs: " << c.lbs << ", tbs: " << c.tbs << "\n";
            return 0;
        }

        if (imp->parsed()) {
            auto c = import_archive(dir, imp_file);
            out << "imported events: " << c.events << ", lbs: " << c.lbs << ", tbs: " << c.tbs << "\n";
            return 0;
        }

        if (symbols->parsed()) {
            auto idx = SymbolIndex::load(symbols_file);
            if (!idx.well_formed()) throw ParseError("symbol index has overlapping spans", "span", 0);
            std::filesystem::create_directories(dir.root);
            write_file_atomic(dir.symbols(), idx.serialize());
            out << "installed symbol index\n";
            return 0;
        }
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return exit_code_for(e.kind());
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}

}  // namespace vme
