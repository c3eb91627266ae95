// SPDX-License-Identifier: Apache-2.0
//
// Task recognition: prune noisy LBs, cluster the rest with DBSCAN over
// relatedness distance, assemble TBs and summarize each one with three agents
// (key objects, snippet retrieval, synthesis). Batches are cut by an
// activity-density policy.
#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vme/llm.hpp"
#include "vme/model.hpp"
#include "vme/similarity.hpp"
#include "vme/store.hpp"

namespace vme {

/// Temporal neighbors considered on each side when pruning.
inline constexpr int kPruneNeighbors = 3;
/// Batches an LB may be carried over before it is finalized as noise.
inline constexpr int kMaxCarryOver = 3;

struct PrunedLb {
    LogLevelBehavior lb;
    std::string reason;
};

struct PruneResult {
    std::vector<LogLevelBehavior> retained;
    std::vector<PrunedLb> noise;
};

/// Keeps an LB iff its best relatedness to any of the k nearest temporal
/// neighbors on each side reaches theta_p. An LB without neighbors is kept.
/// `window` must be time-ordered.
[[nodiscard]] PruneResult prune(std::span<const LogLevelBehavior> window, const RelatednessParams& params,
                                EmbeddingProvider& provider, int k = kPruneNeighbors);
/// Index form over a precomputed matrix: keep[i] for each position.
[[nodiscard]] std::vector<bool> prune_mask(const RelatednessMatrix& m, double theta_p, int k = kPruneNeighbors);

struct DbscanResult {
    /// Point indices of each cluster, ascending; clusters ordered by discovery.
    std::vector<std::vector<std::size_t>> clusters;
    std::vector<std::size_t> noise;
};

/// DBSCAN with distance 1 - R. A point is a neighbor when its distance is at
/// most eps; a core point has at least min_pts neighbors counting itself.
/// Points are visited in index order, so border points shared by two clusters
/// go to the earlier-discovered one.
[[nodiscard]] DbscanResult dbscan(const RelatednessMatrix& m, double eps, int min_pts);

struct ClusterResult {
    std::vector<std::vector<LogLevelBehavior>> clusters;
    std::vector<LogLevelBehavior> noise;
};

/// Clusters LBs after sorting them by ascending lb_id.
[[nodiscard]] ClusterResult cluster(std::span<const LogLevelBehavior> retained, const RelatednessParams& params,
                                    EmbeddingProvider& provider);

/// TB with lbs sorted by (timestamp, lb_id) and delta_t from the first and
/// last timestamps. Task is left empty and tb_id 0.
[[nodiscard]] TaskLevelBehavior assemble_tb(std::span<const LogLevelBehavior> cluster);

struct KeyObjectSelection {
    std::vector<CodeObject> objects;
    std::string rationale;
    /// The completion followed none of the expected line forms.
    bool unparseable = false;
    std::vector<std::string> warnings;
};

/// Stage 1: ask the client which objects of the TB matter. References not
/// present in the TB are dropped with a warning.
[[nodiscard]] KeyObjectSelection select_key_objects(const TaskLevelBehavior& tb, std::span<const LogLevelBehavior> lbs,
                                                    LlmClient& client);

inline constexpr std::size_t kSnippetCap = 8192;
/// Lines read from the top of a file when the object has no span.
inline constexpr int kFileHeadLines = 80;

struct Snippet {
    CodeObject object;
    std::string text;
    bool missing = false;
    bool truncated = false;
};

/// Stage 2 for one object. Throws ContainmentError for paths that leave the
/// workspace root; missing files yield an empty snippet flagged missing.
[[nodiscard]] Snippet read_snippet(const CodeObject& object, const std::filesystem::path& workspace_root);
[[nodiscard]] std::vector<Snippet> retrieve_snippets(const KeyObjectSelection& sel,
                                                     const std::filesystem::path& workspace_root);

/// Stage 3: one- or two-sentence summary stored into tb.task. On client
/// failure the TB gets kUnsummarizedTask and needs_retry.
void synthesize_task(TaskLevelBehavior& tb, std::span<const LogLevelBehavior> lbs, std::span<const Snippet> snippets,
                     LlmClient& client);

/// All three stages. Returns false if the synthesis call failed.
bool summarize_tb(TaskLevelBehavior& tb, std::span<const LogLevelBehavior> lbs, LlmClient& client,
                  const std::filesystem::path& workspace_root, std::vector<std::string>* warnings = nullptr);

/// Prompt listing shared by the agents: one line per LB.
[[nodiscard]] std::string describe_lbs(std::span<const LogLevelBehavior> lbs);

struct BatchingPolicy {
    double idle_flush_s = 120.0;
    double max_elapsed_s = 900.0;
    double density_budget = 600.0;  // N_max = budget / rate
    int min_batch = 40;
    int max_batch = 400;

    /// clamp(round(budget / max(rate, 1)), min_batch, max_batch).
    [[nodiscard]] int n_max(double lbs_per_minute) const;
    [[nodiscard]] bool should_flush(double lbs_per_minute, std::size_t pending, double idle_gap_s,
                                    double elapsed_s) const;
};

[[nodiscard]] bool batching_policy(double lbs_per_minute, std::size_t pending, double idle_gap_s, double elapsed_s,
                                   const BatchingPolicy& policy = {});

struct CarryEntry {
    LogLevelBehavior lb;
    int batches = 0;  // times already carried
};

struct BatchResult {
    std::size_t window = 0;    // new LBs + carried-in LBs
    std::size_t retained = 0;  // after pruning
    std::vector<TaskLevelBehavior> tbs;
    std::vector<LbId> carry_over;
    std::vector<LbId> pruned;     // finalized as noise by pruning
    std::vector<LbId> exhausted;  // finalized as noise after kMaxCarryOver batches
    std::vector<TbId> retried;    // earlier TBs whose summary succeeded now
    std::vector<std::string> warnings;

    /// retained = sum of TB sizes + carry-over + exhausted, and the window
    /// splits into retained + pruned, with no LB in two places.
    [[nodiscard]] bool reconciles() const;
};

/// Forward-only batch processor holding carry-over between batches.
class TaskRecognizer {
public:
    TaskRecognizer(RelatednessParams params, EmbeddingProvider& provider, LlmClient& client,
                   std::filesystem::path workspace_root);

    /// Processes one window; TBs are committed to `store` when given.
    BatchResult process_batch(std::vector<LogLevelBehavior> window, TaskStore* store);

    [[nodiscard]] const std::vector<CarryEntry>& carry_over() const noexcept { return carry_; }
    void restore_carry_over(std::vector<CarryEntry> carry) { carry_ = std::move(carry); }

    /// TBs whose summary failed and will be retried at the next batch.
    [[nodiscard]] const std::map<TbId, std::vector<LogLevelBehavior>>& pending_retries() const noexcept {
        return retry_;
    }
    void add_pending_retry(TbId id, std::vector<LogLevelBehavior> lbs) { retry_[id] = std::move(lbs); }

private:
    RelatednessParams params_;
    CachingProvider provider_;
    LlmClient& client_;
    std::filesystem::path workspace_root_;
    std::vector<CarryEntry> carry_;
    std::map<TbId, std::vector<LogLevelBehavior>> retry_;
};

}  // namespace vme
