// SPDX-License-Identifier: Apache-2.0
#include "vme/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <set>
#include <unordered_map>

#include "vme/errors.hpp"
#include "vme_templates.hpp"

namespace vme {

namespace {

bool time_order(const LogLevelBehavior& x, const LogLevelBehavior& y) {
    return x.timestamp != y.timestamp ? x.timestamp < y.timestamp : x.lb_id < y.lb_id;
}

std::string format_ts(TimestampMs ts) { return std::to_string(ts); }

std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::string one_line(std::string_view s, std::size_t cap) {
    std::string out;
    for (char c : s) {
        if (out.size() >= cap) {
            out += "...";
            break;
        }
        out += (c == '\n' || c == '\r' || c == '\t') ? ' ' : c;
    }
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Pruning and clustering

std::vector<bool> prune_mask(const RelatednessMatrix& m, double theta_p, int k) {
    const std::size_t n = m.size();
    std::vector<bool> keep(n, true);
    if (n < 2) return keep;
    const auto kk = static_cast<std::size_t>(std::max(k, 0));
    for (std::size_t i = 0; i < n; ++i) {
        double best = 0.0;
        std::size_t lo = i >= kk ? i - kk : 0;
        std::size_t hi = std::min(n - 1, i + kk);
        for (std::size_t j = lo; j <= hi; ++j) {
            if (j != i) best = std::max(best, m.at(i, j));
        }
        keep[i] = best >= theta_p;
    }
    return keep;
}

namespace {

PruneResult prune_features(std::span<const LogLevelBehavior> window, std::span<const LbFeatures> features,
                           const RelatednessParams& params, int k) {
    PruneResult out;
    const std::size_t n = window.size();
    if (n < 2) {
        out.retained.assign(window.begin(), window.end());
        return out;
    }
    const auto kk = static_cast<std::size_t>(std::max(k, 0));
    for (std::size_t i = 0; i < n; ++i) {
        double best = 0.0;
        std::size_t lo = i >= kk ? i - kk : 0;
        std::size_t hi = std::min(n - 1, i + kk);
        for (std::size_t j = lo; j <= hi; ++j) {
            if (j != i) best = std::max(best, relatedness(features[i], features[j], params));
        }
        if (best >= params.theta_p) {
            out.retained.push_back(window[i]);
        } else {
            char buf[96];
            std::snprintf(buf, sizeof buf, "max neighbor relatedness %.4f below %.4f", best, params.theta_p);
            out.noise.push_back({window[i], buf});
        }
    }
    return out;
}

}  // namespace

PruneResult prune(std::span<const LogLevelBehavior> window, const RelatednessParams& params,
                  EmbeddingProvider& provider, int k) {
    std::vector<LbFeatures> features;
    features.reserve(window.size());
    for (const auto& lb : window) features.push_back(make_features(lb, provider));
    return prune_features(window, features, params, k);
}

DbscanResult dbscan(const RelatednessMatrix& m, double eps, int min_pts) {
    constexpr int kUnvisited = -2;
    constexpr int kNoise = -1;
    const std::size_t n = m.size();
    std::vector<int> label(n, kUnvisited);

    auto neighbors = [&](std::size_t i) {
        std::vector<std::size_t> out;
        for (std::size_t j = 0; j < n; ++j) {
            if (m.distance(i, j) <= eps || j == i) out.push_back(j);
        }
        return out;
    };

    int next_cluster = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (label[i] != kUnvisited) continue;
        auto seeds = neighbors(i);
        if (static_cast<int>(seeds.size()) < min_pts) {
            label[i] = kNoise;
            continue;
        }
        const int cid = next_cluster++;
        label[i] = cid;
        std::deque<std::size_t> queue(seeds.begin(), seeds.end());
        while (!queue.empty()) {
            std::size_t j = queue.front();
            queue.pop_front();
            if (label[j] == kNoise) label[j] = cid;  // border point
            if (label[j] != kUnvisited) continue;
            label[j] = cid;
            auto nj = neighbors(j);
            if (static_cast<int>(nj.size()) >= min_pts) queue.insert(queue.end(), nj.begin(), nj.end());
        }
    }

    DbscanResult out;
    out.clusters.resize(static_cast<std::size_t>(next_cluster));
    for (std::size_t i = 0; i < n; ++i) {
        if (label[i] >= 0) {
            out.clusters[static_cast<std::size_t>(label[i])].push_back(i);
        } else {
            out.noise.push_back(i);
        }
    }
    return out;
}

namespace {

ClusterResult cluster_features(std::vector<LogLevelBehavior> lbs, std::vector<LbFeatures> features,
                               const RelatednessParams& params) {
    // Canonical neighbor order: ascending lb_id.
    std::vector<std::size_t> order(lbs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return lbs[x].lb_id < lbs[y].lb_id; });
    std::vector<LogLevelBehavior> sorted;
    std::vector<LbFeatures> sorted_features;
    sorted.reserve(lbs.size());
    sorted_features.reserve(lbs.size());
    for (auto i : order) {
        sorted.push_back(std::move(lbs[i]));
        sorted_features.push_back(std::move(features[i]));
    }

    RelatednessMatrix m(sorted_features, params);
    auto result = dbscan(m, params.eps, params.min_pts);
    ClusterResult out;
    for (const auto& c : result.clusters) {
        std::vector<LogLevelBehavior> members;
        members.reserve(c.size());
        for (auto i : c) members.push_back(sorted[i]);
        out.clusters.push_back(std::move(members));
    }
    for (auto i : result.noise) out.noise.push_back(sorted[i]);
    return out;
}

}  // namespace

ClusterResult cluster(std::span<const LogLevelBehavior> retained, const RelatednessParams& params,
                      EmbeddingProvider& provider) {
    std::vector<LbFeatures> features;
    features.reserve(retained.size());
    for (const auto& lb : retained) features.push_back(make_features(lb, provider));
    return cluster_features({retained.begin(), retained.end()}, std::move(features), params);
}

TaskLevelBehavior assemble_tb(std::span<const LogLevelBehavior> cluster) {
    if (cluster.empty()) throw UsageError("assemble_tb on an empty cluster");
    std::vector<const LogLevelBehavior*> sorted;
    sorted.reserve(cluster.size());
    for (const auto& lb : cluster) sorted.push_back(&lb);
    std::stable_sort(sorted.begin(), sorted.end(), [](const auto* x, const auto* y) { return time_order(*x, *y); });
    TaskLevelBehavior tb;
    tb.start_ts = sorted.front()->timestamp;
    tb.end_ts = sorted.back()->timestamp;
    tb.delta_t = static_cast<double>(tb.end_ts - tb.start_ts) / 1000.0;
    for (const auto* lb : sorted) tb.lbs.push_back(lb->lb_id);
    return tb;
}

// ---------------------------------------------------------------------------
// Summarization agents

std::string describe_lbs(std::span<const LogLevelBehavior> lbs) {
    std::string out;
    for (const auto& lb : lbs) {
        out += "- #" + std::to_string(lb.lb_id) + " " + std::string(to_string(lb.action.verb)) + " " +
               lb.object.reference();
        if (lb.context.command) {
            const auto& c = *lb.context.command;
            out += " `" + one_line(c.command_line, 160) + "` exit=" +
                   (c.exit_code ? std::to_string(*c.exit_code) : std::string("unknown")) +
                   (c.success ? " [ok]" : " [failed]") + " domain=" + std::string(to_string(c.domain));
        } else if (lb.context.diff && (lb.context.diff->added_lines || lb.context.diff->removed_lines)) {
            out += " (+" + std::to_string(lb.context.diff->added_lines) + "/-" +
                   std::to_string(lb.context.diff->removed_lines) + " lines)";
        } else if (!lb.context.detail.empty()) {
            out += " (" + one_line(lb.context.detail, 60) + ")";
        }
        out += '\n';
    }
    if (!out.empty()) out.pop_back();
    return out;
}

namespace {

/// Objects touched in the window, most frequent first.
std::vector<std::pair<std::string, std::size_t>> object_counts(std::span<const LogLevelBehavior> lbs) {
    std::map<std::string, std::size_t> counts;
    for (const auto& lb : lbs) ++counts[lb.object.reference()];
    std::vector<std::pair<std::string, std::size_t>> out(counts.begin(), counts.end());
    std::stable_sort(out.begin(), out.end(), [](const auto& x, const auto& y) { return x.second > y.second; });
    return out;
}

std::vector<LogLevelBehavior> members_of(const TaskLevelBehavior& tb, std::span<const LogLevelBehavior> lbs) {
    std::unordered_map<LbId, const LogLevelBehavior*> by_id;
    for (const auto& lb : lbs) by_id[lb.lb_id] = &lb;
    std::vector<LogLevelBehavior> out;
    for (auto id : tb.lbs) {
        auto it = by_id.find(id);
        if (it == by_id.end()) throw IntegrityError("tb references unknown lb " + std::to_string(id));
        out.push_back(*it->second);
    }
    return out;
}

}  // namespace

KeyObjectSelection select_key_objects(const TaskLevelBehavior& tb, std::span<const LogLevelBehavior> lbs,
                                      LlmClient& client) {
    if (tb.lbs.empty()) throw UsageError("select_key_objects on an empty TB");
    auto members = members_of(tb, lbs);

    std::string objects;
    for (const auto& [ref, n] : object_counts(members)) {
        objects += "- " + ref + " (" + std::to_string(n) + (n == 1 ? " behavior)\n" : " behaviors)\n");
    }
    if (!objects.empty()) objects.pop_back();
    const std::string user = render_template(templates::key_objects_user, {{"start", format_ts(tb.start_ts)},
                                                                           {"end", format_ts(tb.end_ts)},
                                                                           {"count", std::to_string(members.size())},
                                                                           {"listing", describe_lbs(members)},
                                                                           {"objects", objects}});
    const std::string completion = client.complete(templates::key_objects_system, user);

    KeyObjectSelection sel;
    bool recognized = false;
    std::set<std::string> chosen;
    std::string_view rest = completion;
    while (!rest.empty()) {
        auto nl = rest.find('\n');
        std::string line = trim(rest.substr(0, nl));
        rest.remove_prefix(nl == std::string_view::npos ? rest.size() : nl + 1);
        if (line.empty()) continue;
        if (line == "NONE") {
            recognized = true;
        } else if (line.rfind("OBJECT:", 0) == 0) {
            recognized = true;
            std::string ref = trim(std::string_view(line).substr(7));
            auto it = std::find_if(members.begin(), members.end(),
                                   [&](const LogLevelBehavior& lb) { return lb.object.reference() == ref; });
            if (it == members.end()) {
                sel.warnings.push_back("dropped key object not present in the batch: " + ref);
            } else if (chosen.insert(ref).second) {
                sel.objects.push_back(it->object);
            }
        } else if (line.rfind("RATIONALE:", 0) == 0) {
            recognized = true;
            sel.rationale = trim(std::string_view(line).substr(10));
        }
    }
    if (!recognized) {
        sel.unparseable = true;
        sel.warnings.push_back("unparseable key-object completion; summarizing from context only");
    }
    return sel;
}

Snippet read_snippet(const CodeObject& object, const std::filesystem::path& workspace_root) {
    namespace fs = std::filesystem;
    const fs::path rel(object.path);
    if (rel.is_absolute()) throw ContainmentError("absolute path outside workspace: " + object.path);
    const fs::path root = fs::weakly_canonical(workspace_root);
    const fs::path full = fs::weakly_canonical(root / rel);
    const fs::path inside = full.lexically_relative(root);
    if (inside.empty() || *inside.begin() == "..") {
        throw ContainmentError("path escapes workspace root: " + object.path);
    }

    Snippet s;
    s.object = object;
    std::ifstream in(full, std::ios::binary);
    if (!in || !fs::is_regular_file(full)) {
        s.missing = true;
        return s;
    }
    const int first = object.span ? object.span->start_line : 1;
    const int last = object.span ? object.span->end_line : kFileHeadLines;
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (n < first) continue;
        if (n > last) break;
        if (s.text.size() + line.size() + 1 > kSnippetCap) {
            s.text.append(line.substr(0, kSnippetCap - s.text.size()));
            s.truncated = true;
            break;
        }
        s.text += line;
        s.text += '\n';
    }
    return s;
}

std::vector<Snippet> retrieve_snippets(const KeyObjectSelection& sel, const std::filesystem::path& workspace_root) {
    std::vector<Snippet> out;
    out.reserve(sel.objects.size());
    for (const auto& obj : sel.objects) out.push_back(read_snippet(obj, workspace_root));
    return out;
}

namespace {

/// Newlines folded to spaces, cut after the second sentence.
std::string normalize_summary(std::string_view text) {
    std::string flat;
    for (char c : text) flat += (c == '\n' || c == '\r') ? ' ' : c;
    flat = trim(flat);
    int sentences = 0;
    for (std::size_t i = 0; i < flat.size(); ++i) {
        char c = flat[i];
        if ((c == '.' || c == '!' || c == '?') && (i + 1 == flat.size() || flat[i + 1] == ' ')) {
            if (++sentences == 2) return flat.substr(0, i + 1);
        }
    }
    return flat;
}

}  // namespace

void synthesize_task(TaskLevelBehavior& tb, std::span<const LogLevelBehavior> lbs, std::span<const Snippet> snippets,
                     LlmClient& client) {
    auto members = members_of(tb, lbs);
    std::string snippet_text;
    for (const auto& s : snippets) {
        snippet_text += "--- " + s.object.reference() + (s.missing ? " (missing)" : "") + "\n";
        snippet_text += s.text;
        if (!s.text.empty() && s.text.back() != '\n') snippet_text += '\n';
    }
    if (snippet_text.empty()) snippet_text = "(none)\n";
    snippet_text.pop_back();

    std::string outputs;
    for (const auto& lb : members) {
        if (!lb.context.command) continue;
        const auto& c = *lb.context.command;
        outputs += "$ " + c.command_line + " (exit " + (c.exit_code ? std::to_string(*c.exit_code) : "unknown") + ")\n";
        outputs += c.output_excerpt;
        if (!c.output_excerpt.empty() && c.output_excerpt.back() != '\n') outputs += '\n';
    }
    if (outputs.empty()) outputs = "(none)\n";
    outputs.pop_back();

    const std::string user = render_template(
        templates::synthesize_user, {{"listing", describe_lbs(members)}, {"snippets", snippet_text}, {"outputs", outputs}});
    try {
        std::string summary = normalize_summary(client.complete(templates::synthesize_system, user));
        if (summary.empty()) throw LlmError(client.client_id(), "empty summary");
        tb.task = std::move(summary);
        tb.needs_retry = false;
    } catch (const LlmError&) {
        tb.task = std::string(kUnsummarizedTask);
        tb.needs_retry = true;
    }
}

bool summarize_tb(TaskLevelBehavior& tb, std::span<const LogLevelBehavior> lbs, LlmClient& client,
                  const std::filesystem::path& workspace_root, std::vector<std::string>* warnings) {
    KeyObjectSelection sel;
    try {
        sel = select_key_objects(tb, lbs, client);
    } catch (const LlmError& e) {
        sel.unparseable = true;
        sel.warnings.push_back(std::string("key-object selection failed: ") + e.what());
    }
    std::vector<Snippet> snippets;
    for (const auto& obj : sel.objects) {
        try {
            snippets.push_back(read_snippet(obj, workspace_root));
        } catch (const ContainmentError& e) {
            sel.warnings.push_back(e.what());
        }
    }
    if (warnings) warnings->insert(warnings->end(), sel.warnings.begin(), sel.warnings.end());
    synthesize_task(tb, lbs, snippets, client);
    return !tb.needs_retry;
}

// ---------------------------------------------------------------------------
// Batching

int BatchingPolicy::n_max(double lbs_per_minute) const {
    const double n = std::round(density_budget / std::max(lbs_per_minute, 1.0));
    return static_cast<int>(std::clamp(n, static_cast<double>(min_batch), static_cast<double>(max_batch)));
}

bool BatchingPolicy::should_flush(double lbs_per_minute, std::size_t pending, double idle_gap_s,
                                  double elapsed_s) const {
    if (pending == 0) return false;
    return pending >= static_cast<std::size_t>(n_max(lbs_per_minute)) || idle_gap_s >= idle_flush_s ||
           elapsed_s >= max_elapsed_s;
}

bool batching_policy(double lbs_per_minute, std::size_t pending, double idle_gap_s, double elapsed_s,
                     const BatchingPolicy& policy) {
    return policy.should_flush(lbs_per_minute, pending, idle_gap_s, elapsed_s);
}

// ---------------------------------------------------------------------------
// Batch processing

bool BatchResult::reconciles() const {
    std::size_t in_tbs = 0;
    std::set<LbId> seen;
    auto claim = [&](LbId id) { return seen.insert(id).second; };
    for (const auto& tb : tbs) {
        in_tbs += tb.lbs.size();
        for (auto id : tb.lbs) {
            if (!claim(id)) return false;
        }
    }
    for (auto id : carry_over) {
        if (!claim(id)) return false;
    }
    for (auto id : exhausted) {
        if (!claim(id)) return false;
    }
    for (auto id : pruned) {
        if (!claim(id)) return false;
    }
    return retained == in_tbs + carry_over.size() + exhausted.size() && window == retained + pruned.size();
}

TaskRecognizer::TaskRecognizer(RelatednessParams params, EmbeddingProvider& provider, LlmClient& client,
                               std::filesystem::path workspace_root)
    : params_(params), provider_(provider), client_(client), workspace_root_(std::move(workspace_root)) {
    params_.validate();
}

BatchResult TaskRecognizer::process_batch(std::vector<LogLevelBehavior> window, TaskStore* store) {
    BatchResult result;

    // Earlier TBs whose summary failed get another attempt first.
    for (auto it = retry_.begin(); it != retry_.end();) {
        TaskLevelBehavior tb = assemble_tb(it->second);
        tb.tb_id = it->first;
        if (summarize_tb(tb, it->second, client_, workspace_root_, &result.warnings)) {
            if (store) store->amend({tb.tb_id, tb.task, false});
            result.retried.push_back(tb.tb_id);
            it = retry_.erase(it);
        } else {
            ++it;
        }
    }

    std::map<LbId, int> carried;
    for (auto& entry : carry_) {
        carried[entry.lb.lb_id] = entry.batches;
        window.push_back(std::move(entry.lb));
    }
    carry_.clear();
    std::stable_sort(window.begin(), window.end(), time_order);
    window.erase(std::unique(window.begin(), window.end(),
                             [](const auto& x, const auto& y) { return x.lb_id == y.lb_id; }),
                 window.end());
    result.window = window.size();

    std::vector<LbFeatures> features;
    features.reserve(window.size());
    for (const auto& lb : window) features.push_back(make_features(lb, provider_));

    auto pruned = prune_features(window, features, params_, kPruneNeighbors);
    for (const auto& p : pruned.noise) result.pruned.push_back(p.lb.lb_id);
    result.retained = pruned.retained.size();

    std::vector<LbFeatures> retained_features;
    retained_features.reserve(pruned.retained.size());
    {
        std::unordered_map<LbId, std::size_t> pos;
        for (std::size_t i = 0; i < window.size(); ++i) pos[window[i].lb_id] = i;
        for (const auto& lb : pruned.retained) retained_features.push_back(features[pos[lb.lb_id]]);
    }
    auto clusters = cluster_features(std::move(pruned.retained), std::move(retained_features), params_);

    for (auto& members : clusters.clusters) {
        TaskLevelBehavior tb = assemble_tb(members);
        summarize_tb(tb, members, client_, workspace_root_, &result.warnings);
        if (store) {
            tb.tb_id = store->append_next(tb);
        } else {
            tb.tb_id = result.tbs.empty() ? 1 : result.tbs.back().tb_id + 1;
        }
        if (tb.needs_retry) {
            std::stable_sort(members.begin(), members.end(), time_order);
            retry_[tb.tb_id] = members;
        }
        result.tbs.push_back(std::move(tb));
    }

    for (auto& lb : clusters.noise) {
        auto it = carried.find(lb.lb_id);
        const int times = (it == carried.end() ? 0 : it->second) + 1;
        if (times > kMaxCarryOver) {
            result.exhausted.push_back(lb.lb_id);
        } else {
            result.carry_over.push_back(lb.lb_id);
            carry_.push_back({std::move(lb), times});
        }
    }
    return result;
}

}  // namespace vme
