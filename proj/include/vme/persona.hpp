// SPDX-License-Identifier: Apache-2.0
//
// Rule-based developer persona over four dimensions: core technical
// foundation (CTF), development efficiency (PDE), development norms (PDN) and
// technical adaptability (TA). Recomputed from scratch over store snapshots.
#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "vme/model.hpp"

namespace vme {

enum class Dimension { CTF, PDE, PDN, TA };

inline constexpr Dimension kDimensions[] = {Dimension::CTF, Dimension::PDE, Dimension::PDN, Dimension::TA};

[[nodiscard]] std::string_view to_string(Dimension d) noexcept;
[[nodiscard]] std::optional<Dimension> dimension_from_string(std::string_view s) noexcept;

/// Ordered (label, value) pairs; bins sorted by label.
struct Histogram {
    std::vector<std::pair<std::string, double>> bins;
    friend bool operator==(const Histogram&, const Histogram&) = default;
};

/// Ranked (label, count) pairs, highest first.
struct TopK {
    std::vector<std::pair<std::string, double>> items;
    friend bool operator==(const TopK&, const TopK&) = default;
};

using MetricValue = std::variant<double, std::string, Histogram, TopK>;

struct PersonaMetric {
    std::string key;
    Dimension dimension = Dimension::CTF;
    std::string description;
    /// Qualifier printed before the value ("cumulative"); may be empty.
    std::string aggregation;
    MetricValue value;
    std::string unit;
    int sample_count = 0;
    int min_samples = 0;
    bool converged = false;

    friend bool operator==(const PersonaMetric&, const PersonaMetric&) = default;
};

struct Persona {
    std::map<Dimension, std::vector<PersonaMetric>> dimensions;
    TimestampMs computed_at = 0;
    TbId source_high_water = 0;

    Persona();
    [[nodiscard]] const PersonaMetric* find(std::string_view key) const;
    [[nodiscard]] std::vector<const PersonaMetric*> all() const;
    friend bool operator==(const Persona&, const Persona&) = default;
};

/// Per-metric convergence minimums, in the unit of each sample_count.
struct ConvergenceThresholds {
    int language_lines = 500;
    int language_edits = 20;
    int library_imports = 10;
    int domain_tasks = 5;
    int productivity_buckets = 60;  // 5 active hours
    int commands = 10;
    int fixes = 5;
    int completion_tbs = 10;
    int comment_lines = 200;
    int active_hour_lbs = 1000;
    int shortcuts = 20;
    int adoption_days = 14;
    int workspaces = 3;
    int navigations = 50;
    int learning_days = 7;
};

/// Language name for a file path by extension ("python", "rust"), or empty.
[[nodiscard]] std::string language_of(std::string_view path);
/// Display name used in descriptions ("Python", "C++").
[[nodiscard]] std::string language_display(std::string_view language);

inline constexpr TimestampMs kActivityBucketMs = 5 * 60 * 1000;
inline constexpr TimestampMs kSessionGapMs = 30 * 60 * 1000;

/// Added lines per active hour for edits in `language`; active time is the
/// number of distinct 5-minute buckets holding an edit. nullopt when there
/// are no such edits.
[[nodiscard]] std::optional<double> metric_productivity(std::span<const LogLevelBehavior> lbs,
                                                        std::string_view language);

/// Failures / total over terminal LBs matching the filters. Commands with an
/// unknown exit status count as failures. nullopt when nothing matches.
[[nodiscard]] std::optional<double> metric_command_failure_rate(std::span<const LogLevelBehavior> lbs,
                                                                std::optional<CommandDomain> domain = std::nullopt,
                                                                std::string_view command_prefix = {});

/// Revisit navigations / navigations, per 30-minute-gap session, pooled.
/// Navigations are navigate and open_file LBs; a revisit targets a file
/// already navigated to earlier in the same session.
struct RevisitCounts {
    int navigations = 0;
    int revisits = 0;
};
[[nodiscard]] RevisitCounts revisit_counts(std::span<const LogLevelBehavior> lbs);

/// Import targets found in added text ("numpy", "serde", "react").
[[nodiscard]] std::vector<std::string> scan_imports(std::string_view added_text, std::string_view language);

/// Whether a trimmed line starts with a comment marker of the language.
[[nodiscard]] bool is_comment_line(std::string_view line, std::string_view language);

/// round(10 * (0.4 * A + 0.6 * I)) with A = clamp(adoption_per_week / 6, 0, 1)
/// and I = clamp(0.5 - 5 * daily_failure_slope, 0, 1).
[[nodiscard]] int learning_score(double adoption_per_week, double daily_failure_slope);

/// Least-squares slope of the daily command failure rate against day index.
/// Days without commands are skipped. nullopt with fewer than two days.
struct DailyFailureTrend {
    double slope = 0.0;
    int days = 0;
};
[[nodiscard]] std::optional<DailyFailureTrend> daily_failure_trend(std::span<const LogLevelBehavior> lbs);

/// Full metric catalog over snapshots, metrics sorted by key per dimension.
[[nodiscard]] std::vector<PersonaMetric> metric_catalog(std::span<const TaskLevelBehavior> tbs,
                                                        std::span<const LogLevelBehavior> lbs,
                                                        const ConvergenceThresholds& thresholds = {});

/// Throws IntegrityError when a TB references an LB missing from `lbs`.
[[nodiscard]] Persona compute_persona(std::span<const TaskLevelBehavior> tbs, std::span<const LogLevelBehavior> lbs,
                                      const ConvergenceThresholds& thresholds = {});

/// Value text for prompts and reports: "55", "58%", "python 60%, rust 40%".
[[nodiscard]] std::string render_value(const PersonaMetric& m);
/// "<description>: [<aggregation> ]<value>[ <unit>]".
[[nodiscard]] std::string render_metric(const PersonaMetric& m);
/// Grouped human-readable report with converged markers.
[[nodiscard]] std::string render_report(const Persona& p);

inline constexpr std::string_view kPersonaSchema = "vme-persona v1";

[[nodiscard]] std::string serialize_persona(const Persona& p);
/// Throws ParseError on malformed input or a different schema version.
[[nodiscard]] Persona parse_persona(std::string_view text);

/// Key/description listing handed to the router (no values).
[[nodiscard]] std::string persona_schema_description(const Persona& p);

/// Writes `persona/current` atomically and a dated copy under
/// `persona/history/`. A failed write leaves the previous `current` intact.
/// `fault` runs before the rename of `current` (test seam).
void snapshot_persona(const std::filesystem::path& persona_dir, const Persona& p,
                      const std::function<void()>& fault = {});
[[nodiscard]] std::optional<Persona> load_persona(const std::filesystem::path& persona_dir);

/// Whether a daily recompute is due.
[[nodiscard]] bool persona_due(std::optional<TimestampMs> last_computed, TimestampMs now);

struct ValidationRecord {
    Dimension dimension = Dimension::CTF;
    std::vector<std::pair<std::string, bool>> confirmations;

    [[nodiscard]] int correct() const noexcept;
    [[nodiscard]] int total() const noexcept { return static_cast<int>(confirmations.size()); }
};

/// correct / total. Throws UsageError without entries.
[[nodiscard]] double compute_accuracy(const ValidationRecord& v);

/// Parses "metric_key yes|no" lines ('#' comments allowed) into one record
/// per dimension that has entries. Unknown keys throw UsageError listing the
/// valid ones.
[[nodiscard]] std::vector<ValidationRecord> parse_confirmations(std::string_view text, const Persona& p);
[[nodiscard]] std::string serialize_validation(const ValidationRecord& v, TimestampMs at);

}  // namespace vme
