// SPDX-License-Identifier: Apache-2.0
#include "vme/persona.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <ctime>
#include <json.hpp>
#include <regex>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "vme/errors.hpp"
#include "vme/similarity.hpp"
#include "vme/store.hpp"

namespace vme {

namespace {

constexpr TimestampMs kDayMs = 24LL * 60 * 60 * 1000;
constexpr TimestampMs kHourMs = 60LL * 60 * 1000;

struct LanguageInfo {
    std::string_view ext;
    std::string_view name;
};

constexpr LanguageInfo kExtensions[] = {
    {"py", "python"},      {"pyi", "python"},      {"rs", "rust"},        {"swift", "swift"},  {"js", "javascript"},
    {"mjs", "javascript"}, {"cjs", "javascript"},  {"jsx", "javascript"}, {"ts", "typescript"},
    {"tsx", "typescript"}, {"java", "java"},       {"kt", "kotlin"},      {"kts", "kotlin"},   {"go", "go"},
    {"c", "c"},            {"h", "c"},             {"cc", "cpp"},         {"cpp", "cpp"},      {"cxx", "cpp"},
    {"hpp", "cpp"},        {"hh", "cpp"},          {"hxx", "cpp"},        {"cs", "csharp"},    {"rb", "ruby"},
    {"php", "php"},        {"scala", "scala"},     {"sh", "shell"},       {"bash", "shell"},   {"dart", "dart"},
    {"lua", "lua"},        {"r", "r"},             {"sql", "sql"},
};

constexpr std::pair<std::string_view, std::string_view> kDisplayNames[] = {
    {"python", "Python"}, {"rust", "Rust"},     {"swift", "Swift"},   {"javascript", "JavaScript"},
    {"typescript", "TypeScript"}, {"java", "Java"}, {"kotlin", "Kotlin"}, {"go", "Go"},
    {"c", "C"},           {"cpp", "C++"},       {"csharp", "C#"},     {"ruby", "Ruby"},
    {"php", "PHP"},       {"scala", "Scala"},   {"shell", "Shell"},   {"dart", "Dart"},
    {"lua", "Lua"},       {"r", "R"},           {"sql", "SQL"},
};

// Keyword -> domain tag, matched against TB task tokens.
constexpr std::pair<std::string_view, std::string_view> kDomainKeywords[] = {
    {"api", "web-backend"},       {"endpoint", "web-backend"},  {"server", "web-backend"},
    {"http", "web-backend"},      {"route", "web-backend"},     {"handler", "web-backend"},
    {"request", "web-backend"},   {"ui", "frontend-ui"},        {"view", "frontend-ui"},
    {"component", "frontend-ui"}, {"button", "frontend-ui"},    {"layout", "frontend-ui"},
    {"css", "frontend-ui"},       {"page", "frontend-ui"},      {"screen", "frontend-ui"},
    {"xcode", "mobile-app"},      {"ios", "mobile-app"},        {"android", "mobile-app"},
    {"swiftui", "mobile-app"},    {"mobile", "mobile-app"},     {"model", "data-ml"},
    {"training", "data-ml"},      {"train", "data-ml"},         {"dataset", "data-ml"},
    {"tensor", "data-ml"},        {"pandas", "data-ml"},        {"numpy", "data-ml"},
    {"test", "testing"},          {"tests", "testing"},         {"assertion", "testing"},
    {"database", "database"},     {"sql", "database"},          {"query", "database"},
    {"schema", "database"},       {"migration", "database"},    {"build", "build-tooling"},
    {"cmake", "build-tooling"},   {"cargo", "build-tooling"},   {"compile", "build-tooling"},
    {"compiler", "build-tooling"}, {"dependency", "build-tooling"}, {"package", "build-tooling"},
    {"memory", "systems"},        {"thread", "systems"},        {"concurrency", "systems"},
    {"performance", "systems"},   {"kernel", "systems"},        {"cli", "cli-tools"},
    {"command", "cli-tools"},     {"terminal", "cli-tools"},    {"script", "cli-tools"},
};

std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string_view> split_lines(std::string_view text) {
    std::vector<std::string_view> out;
    while (!text.empty()) {
        auto nl = text.find('\n');
        out.push_back(text.substr(0, nl));
        if (nl == std::string_view::npos) break;
        text.remove_prefix(nl + 1);
    }
    return out;
}

bool is_edit_lb(const LogLevelBehavior& lb) { return is_edit_verb(lb.action.verb) && lb.context.diff.has_value(); }

bool is_navigation_lb(const LogLevelBehavior& lb) {
    return lb.action.verb == ActionVerb::navigate || lb.action.verb == ActionVerb::open_file;
}

int added_of(const LogLevelBehavior& lb) { return lb.context.diff ? lb.context.diff->added_lines : 0; }

std::vector<const LogLevelBehavior*> time_sorted(std::span<const LogLevelBehavior> lbs) {
    std::vector<const LogLevelBehavior*> out;
    out.reserve(lbs.size());
    for (const auto& lb : lbs) out.push_back(&lb);
    std::stable_sort(out.begin(), out.end(), [](const auto* x, const auto* y) {
        return x->timestamp != y->timestamp ? x->timestamp < y->timestamp : x->lb_id < y->lb_id;
    });
    return out;
}

PersonaMetric make_metric(std::string key, Dimension d, std::string description, MetricValue value, std::string unit,
                          int samples, int min_samples, std::string aggregation = {}) {
    PersonaMetric m;
    m.key = std::move(key);
    m.dimension = d;
    m.description = std::move(description);
    m.aggregation = std::move(aggregation);
    m.value = std::move(value);
    m.unit = std::move(unit);
    m.sample_count = samples;
    m.min_samples = min_samples;
    m.converged = samples >= min_samples;
    return m;
}

TopK top_k(const std::map<std::string, int>& counts, std::size_t k) {
    std::vector<std::pair<std::string, double>> items;
    for (const auto& [label, n] : counts) items.emplace_back(label, n);
    std::stable_sort(items.begin(), items.end(), [](const auto& x, const auto& y) { return x.second > y.second; });
    if (items.size() > k) items.resize(k);
    return {std::move(items)};
}

/// First path component, or empty for workspace-level objects.
std::string workspace_of(std::string_view path) {
    if (path.empty() || path == ".") return {};
    while (!path.empty() && path.front() == '/') path.remove_prefix(1);
    return std::string(path.substr(0, path.find('/')));
}

std::string format_number(double v) {
    if (std::fabs(v - std::round(v)) < 1e-9) return std::to_string(static_cast<long long>(std::llround(v)));
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    std::string s = buf;
    while (!s.empty() && s.back() == '0') s.pop_back();
    if (!s.empty() && s.back() == '.') s.pop_back();
    return s;
}

std::string format_percent(double ratio) { return std::to_string(std::llround(ratio * 100.0)) + "%"; }

std::string utc_date(TimestampMs ts) {
    std::time_t secs = static_cast<std::time_t>(ts / 1000);
    std::tm tm{};
    gmtime_r(&secs, &tm);
    char buf[16];
    std::strftime(buf, sizeof buf, "%Y-%m-%d", &tm);
    return buf;
}

}  // namespace

// ---------------------------------------------------------------------------

std::string_view to_string(Dimension d) noexcept {
    switch (d) {
        case Dimension::CTF: return "CTF";
        case Dimension::PDE: return "PDE";
        case Dimension::PDN: return "PDN";
        case Dimension::TA: return "TA";
    }
    return "?";
}

std::optional<Dimension> dimension_from_string(std::string_view s) noexcept {
    for (auto d : kDimensions) {
        if (to_string(d) == s) return d;
    }
    return std::nullopt;
}

Persona::Persona() {
    for (auto d : kDimensions) dimensions[d];
}

const PersonaMetric* Persona::find(std::string_view key) const {
    for (const auto& [d, metrics] : dimensions) {
        for (const auto& m : metrics) {
            if (m.key == key) return &m;
        }
    }
    return nullptr;
}

std::vector<const PersonaMetric*> Persona::all() const {
    std::vector<const PersonaMetric*> out;
    for (const auto& [d, metrics] : dimensions) {
        for (const auto& m : metrics) out.push_back(&m);
    }
    return out;
}

std::string language_of(std::string_view path) {
    auto slash = path.find_last_of('/');
    auto base = slash == std::string_view::npos ? path : path.substr(slash + 1);
    auto dot = base.find_last_of('.');
    if (dot == std::string_view::npos || dot == 0) return {};
    std::string ext(base.substr(dot + 1));
    for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    for (const auto& info : kExtensions) {
        if (info.ext == ext) return std::string(info.name);
    }
    return {};
}

std::string language_display(std::string_view language) {
    for (const auto& [name, display] : kDisplayNames) {
        if (name == language) return std::string(display);
    }
    return std::string(language);
}

// ---------------------------------------------------------------------------
// Individual metrics

std::optional<double> metric_productivity(std::span<const LogLevelBehavior> lbs, std::string_view language) {
    long long added = 0;
    std::set<TimestampMs> buckets;
    for (const auto& lb : lbs) {
        if (!is_edit_lb(lb) || language_of(lb.object.path) != language) continue;
        added += added_of(lb);
        buckets.insert(lb.timestamp / kActivityBucketMs);
    }
    if (buckets.empty()) return std::nullopt;
    const double hours = static_cast<double>(buckets.size()) * static_cast<double>(kActivityBucketMs) / kHourMs;
    return static_cast<double>(added) / hours;
}

std::optional<double> metric_command_failure_rate(std::span<const LogLevelBehavior> lbs,
                                                  std::optional<CommandDomain> domain,
                                                  std::string_view command_prefix) {
    int total = 0;
    int failures = 0;
    for (const auto& lb : lbs) {
        if (!lb.context.command) continue;
        const auto& c = *lb.context.command;
        if (domain && c.domain != *domain) continue;
        if (!command_prefix.empty() && trim(c.command_line).rfind(command_prefix, 0) != 0) continue;
        ++total;
        if (!c.success) ++failures;
    }
    if (total == 0) return std::nullopt;
    return static_cast<double>(failures) / total;
}

RevisitCounts revisit_counts(std::span<const LogLevelBehavior> lbs) {
    RevisitCounts out;
    std::unordered_set<std::string> visited;
    std::optional<TimestampMs> last;
    for (const auto* lb : time_sorted(lbs)) {
        if (last && lb->timestamp - *last > kSessionGapMs) visited.clear();
        last = lb->timestamp;
        if (!is_navigation_lb(*lb)) continue;
        ++out.navigations;
        if (!visited.insert(lb->object.path).second) ++out.revisits;
    }
    return out;
}

std::vector<std::string> scan_imports(std::string_view added_text, std::string_view language) {
    static const std::regex py_import(R"re(^\s*import\s+([A-Za-z_]\w*))re");
    static const std::regex py_from(R"re(^\s*from\s+([A-Za-z_]\w*)[\w.]*\s+import\b)re");
    static const std::regex rust_use(R"re(^\s*(?:pub\s+)?use\s+([A-Za-z_]\w*))re");
    static const std::regex rust_extern(R"re(^\s*extern\s+crate\s+([A-Za-z_]\w*))re");
    static const std::regex js_from(R"re(\bfrom\s+['"]([^'"./][^'"]*)['"])re");
    static const std::regex js_require(R"re(\brequire\(\s*['"]([^'"./][^'"]*)['"]\s*\))re");
    static const std::regex js_bare(R"re(^\s*import\s+['"]([^'"./][^'"]*)['"])re");
    static const std::regex go_import(R"re(^\s*(?:import\s+)?(?:[\w.]+\s+)?"([\w.\-/]+)"\s*\)?\s*$)re");
    static const std::regex jvm_import(R"re(^\s*import\s+(?:static\s+)?(\w+(?:\.\w+)?))re");
    static const std::regex swift_import(R"re(^\s*(?:@testable\s+)?import\s+(\w+))re");
    static const std::regex c_include(R"re(^\s*#\s*include\s*<([\w.\-]+)/)re");
    static const std::regex cs_using(R"re(^\s*using\s+(\w+(?:\.\w+)?)\s*;)re");
    static const std::regex rb_require(R"re(^\s*require\s+['"]([^'"./][^'"]*)['"])re");

    auto first_segment = [](std::string s) {
        if (!s.empty() && s.front() == '@') {
            auto a = s.find('/');
            auto b = a == std::string::npos ? a : s.find('/', a + 1);
            return b == std::string::npos ? s : s.substr(0, b);
        }
        return s.substr(0, s.find('/'));
    };

    std::vector<std::string> out;
    std::smatch m;
    for (auto view : split_lines(added_text)) {
        std::string line(view);
        if (language == "python") {
            if (std::regex_search(line, m, py_import) || std::regex_search(line, m, py_from)) out.push_back(m[1]);
        } else if (language == "rust") {
            if (std::regex_search(line, m, rust_use) || std::regex_search(line, m, rust_extern)) {
                static const std::set<std::string> builtin = {"std", "core", "alloc", "crate", "self", "super"};
                if (!builtin.count(m[1])) out.push_back(m[1]);
            }
        } else if (language == "javascript" || language == "typescript") {
            if (std::regex_search(line, m, js_from) || std::regex_search(line, m, js_require) ||
                std::regex_search(line, m, js_bare)) {
                out.push_back(first_segment(m[1]));
            }
        } else if (language == "go") {
            if (line.find('"') != std::string::npos && std::regex_search(line, m, go_import)) out.push_back(m[1]);
        } else if (language == "java" || language == "kotlin" || language == "scala") {
            if (std::regex_search(line, m, jvm_import)) {
                std::string name = m[1];
                if (name.rfind("java.", 0) != 0 && name.rfind("javax.", 0) != 0 && name.rfind("kotlin.", 0) != 0) {
                    out.push_back(name);
                }
            }
        } else if (language == "swift") {
            if (std::regex_search(line, m, swift_import)) out.push_back(m[1]);
        } else if (language == "c" || language == "cpp") {
            if (std::regex_search(line, m, c_include)) out.push_back(m[1]);
        } else if (language == "csharp") {
            if (std::regex_search(line, m, cs_using) && std::string(m[1]).rfind("System", 0) != 0) out.push_back(m[1]);
        } else if (language == "ruby") {
            if (std::regex_search(line, m, rb_require)) out.push_back(first_segment(m[1]));
        }
    }
    return out;
}

bool is_comment_line(std::string_view line, std::string_view language) {
    const std::string t = trim(line);
    auto starts = [&](std::string_view p) { return t.rfind(p, 0) == 0; };
    if (language == "python") return starts("#") || starts("\"\"\"") || starts("'''");
    if (language == "ruby" || language == "shell" || language == "r") return starts("#");
    if (language == "lua" || language == "sql") return starts("--");
    if (language == "php" && starts("#")) return true;
    if (language.empty()) return false;
    return starts("//") || starts("/*") || starts("*");
}

int learning_score(double adoption_per_week, double daily_failure_slope) {
    const double a = std::clamp(adoption_per_week / 6.0, 0.0, 1.0);
    const double i = std::clamp(0.5 - 5.0 * daily_failure_slope, 0.0, 1.0);
    return static_cast<int>(std::lround(10.0 * (0.4 * a + 0.6 * i)));
}

std::optional<DailyFailureTrend> daily_failure_trend(std::span<const LogLevelBehavior> lbs) {
    std::map<long long, std::pair<int, int>> per_day;  // day -> (failures, total)
    for (const auto& lb : lbs) {
        if (!lb.context.command) continue;
        auto& [fail, total] = per_day[lb.timestamp / kDayMs];
        ++total;
        if (!lb.context.command->success) ++fail;
    }
    if (per_day.size() < 2) return std::nullopt;
    double n = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
    const long long first = per_day.begin()->first;
    for (const auto& [day, counts] : per_day) {
        const double x = static_cast<double>(day - first);
        const double y = static_cast<double>(counts.first) / counts.second;
        n += 1;
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double denom = n * sxx - sx * sx;
    return DailyFailureTrend{denom == 0 ? 0.0 : (n * sxy - sx * sy) / denom, static_cast<int>(n)};
}

// ---------------------------------------------------------------------------
// Catalog

namespace {

struct Adoption {
    double per_week = 0.0;
    int days = 0;
};

Adoption adoption_rate(std::span<const LogLevelBehavior> lbs) {
    auto sorted = time_sorted(lbs);
    if (sorted.empty()) return {};
    const TimestampMs t0 = sorted.front()->timestamp;
    const TimestampMs span = sorted.back()->timestamp - t0;
    // Technologies seen during the first day form the baseline.
    std::set<std::string> seen;
    int events = 0;
    for (const auto* lb : sorted) {
        if (!is_edit_lb(*lb)) continue;
        std::string lang = language_of(lb->object.path);
        if (lang.empty()) continue;
        std::vector<std::string> techs{"lang:" + lang};
        for (auto& lib : scan_imports(lb->context.diff->added_text, lang)) techs.push_back("lib:" + lib);
        for (auto& t : techs) {
            if (seen.insert(t).second && lb->timestamp - t0 >= kDayMs) ++events;
        }
    }
    const double days = static_cast<double>(span) / kDayMs;
    return {events / (std::max(days, 1.0) / 7.0), static_cast<int>(span / kDayMs)};
}

}  // namespace

std::vector<PersonaMetric> metric_catalog(std::span<const TaskLevelBehavior> tbs, std::span<const LogLevelBehavior> lbs,
                                          const ConvergenceThresholds& th) {
    std::vector<PersonaMetric> out;
    std::unordered_map<LbId, const LogLevelBehavior*> by_id;
    for (const auto& lb : lbs) by_id[lb.lb_id] = &lb;

    // CTF ------------------------------------------------------------------
    std::map<std::string, long long> lang_lines;
    std::map<std::string, int> lang_edits;
    std::map<std::string, int> imports;
    int import_total = 0;
    for (const auto& lb : lbs) {
        if (!is_edit_lb(lb)) continue;
        std::string lang = language_of(lb.object.path);
        if (lang.empty()) continue;
        lang_lines[lang] += added_of(lb);
        ++lang_edits[lang];
        for (auto& lib : scan_imports(lb.context.diff->added_text, lang)) {
            ++imports[lib];
            ++import_total;
        }
    }
    long long total_lines = 0;
    for (const auto& [lang, n] : lang_lines) total_lines += n;
    if (total_lines > 0) {
        Histogram h;
        for (const auto& [lang, n] : lang_lines) h.bins.emplace_back(lang, static_cast<double>(n) / total_lines);
        out.push_back(make_metric("language_distribution", Dimension::CTF, "Language share of added code", h, "share",
                                  static_cast<int>(total_lines), th.language_lines));
    }
    for (const auto& [lang, edits] : lang_edits) {
        out.push_back(make_metric("language_loc." + lang, Dimension::CTF, "Proficiency in " + language_display(lang),
                                  static_cast<double>(lang_lines[lang]), "lines of code", edits, th.language_edits,
                                  "cumulative"));
    }
    if (import_total > 0) {
        out.push_back(make_metric("top_libraries", Dimension::CTF, "Frequently imported libraries", top_k(imports, 5),
                                  "imports", import_total, th.library_imports));
    }
    {
        std::map<std::string, int> domains;
        int tasks = 0;
        for (const auto& tb : tbs) {
            if (tb.needs_retry || tb.task.empty()) continue;
            ++tasks;
            std::set<std::string_view> tags;
            for (const auto& tok : tokenize(tb.task)) {
                for (const auto& [kw, tag] : kDomainKeywords) {
                    if (tok == kw) tags.insert(tag);
                }
            }
            for (auto tag : tags) ++domains[std::string(tag)];
        }
        if (!domains.empty()) {
            out.push_back(make_metric("tech_stack_domains", Dimension::CTF, "User's tech stack", top_k(domains, 5),
                                      "tasks", tasks, th.domain_tasks));
        }
    }

    // PDE ------------------------------------------------------------------
    for (const auto& [lang, edits] : lang_edits) {
        auto rate = metric_productivity(lbs, lang);
        if (!rate) continue;
        std::set<TimestampMs> buckets;
        for (const auto& lb : lbs) {
            if (is_edit_lb(lb) && language_of(lb.object.path) == lang) buckets.insert(lb.timestamp / kActivityBucketMs);
        }
        out.push_back(make_metric("productivity." + lang, Dimension::PDE,
                                  "Average " + language_display(lang) + " productivity", *rate, "LOC/hour",
                                  static_cast<int>(buckets.size()), th.productivity_buckets));
    }
    {
        std::map<CommandDomain, std::pair<int, int>> per_domain;  // (successes, total)
        for (const auto& lb : lbs) {
            if (!lb.context.command) continue;
            auto& [ok, total] = per_domain[lb.context.command->domain];
            ++total;
            if (lb.context.command->success) ++ok;
        }
        for (const auto& [domain, counts] : per_domain) {
            std::string name(to_string(domain));
            out.push_back(make_metric("command_success_rate." + name, Dimension::PDE,
                                      "Success rate of " + name + " commands",
                                      static_cast<double>(counts.first) / counts.second, "percent", counts.second,
                                      th.commands));
        }
    }
    {
        std::vector<double> fixes;
        int with_commands = 0;
        int completed = 0;
        for (const auto& tb : tbs) {
            std::vector<const LogLevelBehavior*> members;
            for (auto id : tb.lbs) {
                auto it = by_id.find(id);
                if (it != by_id.end()) members.push_back(it->second);
            }
            std::stable_sort(members.begin(), members.end(), [](const auto* x, const auto* y) {
                return x->timestamp != y->timestamp ? x->timestamp < y->timestamp : x->lb_id < y->lb_id;
            });
            std::map<CommandDomain, TimestampMs> first_failure;
            const CommandInfo* last_command = nullptr;
            for (const auto* lb : members) {
                if (!lb->context.command) continue;
                const auto& c = *lb->context.command;
                last_command = &c;
                if (!c.success) {
                    first_failure.try_emplace(c.domain, lb->timestamp);
                } else if (auto it = first_failure.find(c.domain); it != first_failure.end()) {
                    fixes.push_back(static_cast<double>(lb->timestamp - it->second) / 1000.0);
                    first_failure.erase(it);
                }
            }
            if (last_command) {
                ++with_commands;
                if (last_command->success) ++completed;
            }
        }
        if (!fixes.empty()) {
            std::sort(fixes.begin(), fixes.end());
            const std::size_t n = fixes.size();
            const double median = n % 2 ? fixes[n / 2] : (fixes[n / 2 - 1] + fixes[n / 2]) / 2.0;
            out.push_back(make_metric("time_to_fix", Dimension::PDE, "Median time to fix a failing command", median,
                                      "seconds", static_cast<int>(n), th.fixes));
        }
        if (with_commands > 0) {
            out.push_back(make_metric("tb_completion_ratio", Dimension::PDE,
                                      "Share of tasks whose last command succeeded",
                                      static_cast<double>(completed) / with_commands, "percent", with_commands,
                                      th.completion_tbs));
        }
    }

    // PDN ------------------------------------------------------------------
    {
        int lines = 0;
        int comments = 0;
        for (const auto& lb : lbs) {
            if (!is_edit_lb(lb)) continue;
            std::string lang = language_of(lb.object.path);
            if (lang.empty()) continue;
            for (auto line : split_lines(lb.context.diff->added_text)) {
                if (trim(line).empty()) continue;
                ++lines;
                if (is_comment_line(line, lang)) ++comments;
            }
        }
        if (lines > 0) {
            out.push_back(make_metric("comment_density", Dimension::PDN, "Share of added lines that are comments",
                                      static_cast<double>(comments) / lines, "percent", lines, th.comment_lines));
        }
    }
    if (!lbs.empty()) {
        std::array<int, 24> hours{};
        for (const auto& lb : lbs) {
            auto h = ((lb.timestamp % kDayMs) + kDayMs) % kDayMs / kHourMs;
            ++hours[static_cast<std::size_t>(h)];
        }
        Histogram h;
        for (std::size_t i = 0; i < hours.size(); ++i) {
            char label[8];
            std::snprintf(label, sizeof label, "%02zuh", i);
            h.bins.emplace_back(label, hours[i]);
        }
        out.push_back(make_metric("active_hours", Dimension::PDN, "Active hours of day (UTC)", h, "behaviors",
                                  static_cast<int>(lbs.size()), th.active_hour_lbs));
    }
    {
        std::map<std::string, int> shortcuts;
        int total = 0;
        for (const auto& lb : lbs) {
            if (lb.action.verb != ActionVerb::use_shortcut) continue;
            ++shortcuts[lb.context.detail.empty() ? std::string("unknown") : lb.context.detail];
            ++total;
        }
        if (total > 0) {
            out.push_back(make_metric("shortcut_usage", Dimension::PDN, "Most used IDE shortcuts",
                                      top_k(shortcuts, 10), "uses", total, th.shortcuts));
        }
    }

    // TA -------------------------------------------------------------------
    const Adoption adoption = adoption_rate(lbs);
    if (!lang_edits.empty()) {
        out.push_back(make_metric("adoption_events_per_week", Dimension::TA,
                                  "New languages or libraries adopted per week", adoption.per_week, "events/week",
                                  adoption.days, th.adoption_days));
    }
    {
        // First session of each workspace, in order of first appearance.
        std::map<std::string, std::tuple<TimestampMs, int, int, bool>> ws;  // last ts, navs, edits, closed
        for (const auto* lb : time_sorted(lbs)) {
            std::string w = workspace_of(lb->object.path);
            if (w.empty()) continue;
            auto [it, fresh] = ws.try_emplace(w, lb->timestamp, 0, 0, false);
            auto& [last, navs, edits, closed] = it->second;
            if (closed) continue;
            if (!fresh && lb->timestamp - last > kSessionGapMs) {
                closed = true;
                continue;
            }
            last = lb->timestamp;
            if (is_navigation_lb(*lb)) ++navs;
            if (is_edit_lb(*lb)) ++edits;
        }
        if (!ws.empty()) {
            double sum = 0;
            for (const auto& [w, state] : ws) sum += static_cast<double>(std::get<1>(state)) / std::max(std::get<2>(state), 1);
            out.push_back(make_metric("unfamiliar_repo_navigation_load", Dimension::TA,
                                      "Navigations per edit when first exploring a repository", sum / ws.size(),
                                      "navigations/edit", static_cast<int>(ws.size()), th.workspaces));
        }
    }
    {
        auto rc = revisit_counts(lbs);
        if (rc.navigations > 0) {
            out.push_back(make_metric("revisit_cyclicality", Dimension::TA, "Revisit cyclicality of file navigation",
                                      static_cast<double>(rc.revisits) / rc.navigations, "", rc.navigations,
                                      th.navigations));
        }
    }
    if (auto trend = daily_failure_trend(lbs)) {
        out.push_back(make_metric("learning_score", Dimension::TA, "Learning score",
                                  static_cast<double>(learning_score(adoption.per_week, trend->slope)), "out of 10",
                                  trend->days, th.learning_days));
    }

    std::stable_sort(out.begin(), out.end(), [](const auto& x, const auto& y) {
        return x.dimension != y.dimension ? x.dimension < y.dimension : x.key < y.key;
    });
    return out;
}

Persona compute_persona(std::span<const TaskLevelBehavior> tbs, std::span<const LogLevelBehavior> lbs,
                        const ConvergenceThresholds& thresholds) {
    std::unordered_set<LbId> ids;
    ids.reserve(lbs.size());
    for (const auto& lb : lbs) ids.insert(lb.lb_id);
    Persona p;
    for (const auto& tb : tbs) {
        for (auto id : tb.lbs) {
            if (!ids.count(id)) {
                throw IntegrityError("tb " + std::to_string(tb.tb_id) + " references missing lb " + std::to_string(id));
            }
        }
        p.source_high_water = std::max(p.source_high_water, tb.tb_id);
    }
    for (const auto& lb : lbs) p.computed_at = std::max(p.computed_at, lb.timestamp);
    for (auto& m : metric_catalog(tbs, lbs, thresholds)) p.dimensions[m.dimension].push_back(std::move(m));
    return p;
}

// ---------------------------------------------------------------------------
// Rendering

std::string render_value(const PersonaMetric& m) {
    struct Visitor {
        const PersonaMetric& m;
        std::string operator()(double v) const { return m.unit == "percent" ? format_percent(v) : format_number(v); }
        std::string operator()(const std::string& s) const { return s; }
        std::string operator()(const Histogram& h) const {
            std::string out;
            for (const auto& [label, v] : h.bins) {
                if (m.unit != "share" && v == 0) continue;
                if (!out.empty()) out += ", ";
                out += label + " " + (m.unit == "share" ? format_percent(v) : format_number(v));
            }
            return out;
        }
        std::string operator()(const TopK& t) const {
            std::string out;
            for (const auto& [label, v] : t.items) {
                if (!out.empty()) out += ", ";
                out += label + " (" + format_number(v) + ")";
            }
            return out;
        }
    };
    return std::visit(Visitor{m}, m.value);
}

std::string render_metric(const PersonaMetric& m) {
    std::string out = m.description + ": ";
    if (!m.aggregation.empty()) out += m.aggregation + " ";
    out += render_value(m);
    const bool scalar = std::holds_alternative<double>(m.value) || std::holds_alternative<std::string>(m.value);
    if (scalar && !m.unit.empty() && m.unit != "percent") out += " " + m.unit;
    return out;
}

std::string render_report(const Persona& p) {
    static const std::map<Dimension, std::string_view> titles = {
        {Dimension::CTF, "Core Technical Foundation"},
        {Dimension::PDE, "Practical Development Efficiency"},
        {Dimension::PDN, "Personal Development Norms"},
        {Dimension::TA, "Technical Adaptability"},
    };
    std::string out;
    for (auto d : kDimensions) {
        out += "[" + std::string(to_string(d)) + "] " + std::string(titles.at(d)) + "\n";
        const auto& metrics = p.dimensions.at(d);
        if (metrics.empty()) out += "  (no data yet)\n";
        for (const auto& m : metrics) {
            out += std::string(m.converged ? "  * " : "  ~ ") + render_metric(m) + "  [" + m.key + ", n=" +
                   std::to_string(m.sample_count) + (m.converged ? "" : ", not yet converged") + "]\n";
        }
    }
    out += "(* converged, ~ still accumulating evidence)\n";
    return out;
}

std::string persona_schema_description(const Persona& p) {
    std::string out;
    for (auto d : kDimensions) {
        for (const auto& m : p.dimensions.at(d)) out += "- " + m.key + ": " + m.description + "\n";
    }
    if (!out.empty()) out.pop_back();
    return out;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

using ojson = nlohmann::ordered_json;

ojson pairs_to_json(const std::vector<std::pair<std::string, double>>& v) {
    ojson arr = ojson::array();
    for (const auto& [k, x] : v) arr.push_back(ojson::array({k, x}));
    return arr;
}

std::vector<std::pair<std::string, double>> pairs_from_json(const nlohmann::json& j) {
    std::vector<std::pair<std::string, double>> out;
    for (const auto& e : j) out.emplace_back(e.at(0).get<std::string>(), e.at(1).get<double>());
    return out;
}

}  // namespace

std::string serialize_persona(const Persona& p) {
    ojson j;
    j["schema"] = kPersonaSchema;
    j["computed_at"] = p.computed_at;
    j["source_high_water"] = p.source_high_water;
    ojson dims = ojson::object();
    for (auto d : kDimensions) {
        ojson arr = ojson::array();
        auto it = p.dimensions.find(d);
        if (it != p.dimensions.end()) {
            for (const auto& m : it->second) {
                ojson mj;
                mj["key"] = m.key;
                mj["description"] = m.description;
                mj["aggregation"] = m.aggregation;
                if (auto v = std::get_if<double>(&m.value)) {
                    mj["value"] = *v;
                } else if (auto s = std::get_if<std::string>(&m.value)) {
                    mj["value"] = *s;
                } else if (auto h = std::get_if<Histogram>(&m.value)) {
                    mj["value"] = ojson{{"histogram", pairs_to_json(h->bins)}};
                } else {
                    mj["value"] = ojson{{"top_k", pairs_to_json(std::get<TopK>(m.value).items)}};
                }
                mj["unit"] = m.unit;
                mj["sample_count"] = m.sample_count;
                mj["min_samples"] = m.min_samples;
                mj["converged"] = m.converged;
                arr.push_back(std::move(mj));
            }
        }
        dims[std::string(to_string(d))] = std::move(arr);
    }
    j["dimensions"] = std::move(dims);
    return j.dump(2, ' ', false, nlohmann::json::error_handler_t::replace) + "\n";
}

Persona parse_persona(std::string_view text) {
    auto j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw ParseError("malformed persona document", "", 0);
    if (!j.contains("schema") || !j["schema"].is_string()) throw ParseError("missing field: schema", "schema", 0);
    if (j["schema"].get<std::string>() != kPersonaSchema) {
        throw ParseError("unsupported schema version: " + j["schema"].get<std::string>(), "schema", 0);
    }
    Persona p;
    try {
        p.computed_at = j.at("computed_at").get<TimestampMs>();
        p.source_high_water = j.at("source_high_water").get<TbId>();
        const auto& dims = j.at("dimensions");
        for (auto d : kDimensions) {
            const std::string name(to_string(d));
            if (!dims.contains(name)) throw ParseError("missing dimension: " + name, name, 0);
            for (const auto& mj : dims.at(name)) {
                PersonaMetric m;
                m.key = mj.at("key").get<std::string>();
                m.dimension = d;
                m.description = mj.at("description").get<std::string>();
                m.aggregation = mj.at("aggregation").get<std::string>();
                const auto& v = mj.at("value");
                if (v.is_number()) {
                    m.value = v.get<double>();
                } else if (v.is_string()) {
                    m.value = v.get<std::string>();
                } else if (v.contains("histogram")) {
                    m.value = Histogram{pairs_from_json(v.at("histogram"))};
                } else {
                    m.value = TopK{pairs_from_json(v.at("top_k"))};
                }
                m.unit = mj.at("unit").get<std::string>();
                m.sample_count = mj.at("sample_count").get<int>();
                m.min_samples = mj.at("min_samples").get<int>();
                m.converged = mj.at("converged").get<bool>();
                p.dimensions[d].push_back(std::move(m));
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed persona document: ") + e.what(), "", 0);
    }
    return p;
}

void snapshot_persona(const std::filesystem::path& persona_dir, const Persona& p, const std::function<void()>& fault) {
    namespace fs = std::filesystem;
    const std::string text = serialize_persona(p);
    fs::create_directories(persona_dir / "history");
    write_file_atomic(persona_dir / "current", text, fault);

    const std::string date = utc_date(p.computed_at);
    fs::path target = persona_dir / "history" / (date + ".json");
    for (int n = 1; fs::exists(target); ++n) {
        target = persona_dir / "history" / (date + "." + std::to_string(n) + ".json");
    }
    write_file_atomic(target, text);
}

std::optional<Persona> load_persona(const std::filesystem::path& persona_dir) {
    const auto current = persona_dir / "current";
    if (!std::filesystem::exists(current)) return std::nullopt;
    return parse_persona(read_file(current));
}

bool persona_due(std::optional<TimestampMs> last_computed, TimestampMs now) {
    return !last_computed || now - *last_computed >= kDayMs;
}

// ---------------------------------------------------------------------------
// Validation

int ValidationRecord::correct() const noexcept {
    return static_cast<int>(std::count_if(confirmations.begin(), confirmations.end(),
                                          [](const auto& c) { return c.second; }));
}

double compute_accuracy(const ValidationRecord& v) {
    if (v.confirmations.empty()) throw UsageError("no confirmations for " + std::string(to_string(v.dimension)));
    return static_cast<double>(v.correct()) / v.total();
}

std::vector<ValidationRecord> parse_confirmations(std::string_view text, const Persona& p) {
    std::map<Dimension, ValidationRecord> records;
    std::set<std::string> seen;
    std::size_t lineno = 0;
    for (auto raw : split_lines(text)) {
        ++lineno;
        std::string line = trim(raw);
        if (line.empty() || line.front() == '#') continue;
        auto sp = line.find_first_of(" \t");
        if (sp == std::string::npos) {
            throw UsageError("line " + std::to_string(lineno) + ": expected '<metric_key> yes|no'");
        }
        std::string key = line.substr(0, sp);
        std::string answer = trim(std::string_view(line).substr(sp));
        for (auto& c : answer) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        bool yes;
        if (answer == "yes" || answer == "y" || answer == "true" || answer == "1") {
            yes = true;
        } else if (answer == "no" || answer == "n" || answer == "false" || answer == "0") {
            yes = false;
        } else {
            throw UsageError("line " + std::to_string(lineno) + ": answer must be yes or no, got '" + answer + "'");
        }
        const PersonaMetric* m = p.find(key);
        if (!m) {
            std::string valid;
            for (const auto* pm : p.all()) valid += (valid.empty() ? "" : ", ") + pm->key;
            throw UsageError("unknown metric key: " + key + "; valid keys: " + (valid.empty() ? "(none)" : valid));
        }
        if (!seen.insert(key).second) throw UsageError("duplicate confirmation for " + key);
        auto& rec = records[m->dimension];
        rec.dimension = m->dimension;
        rec.confirmations.emplace_back(key, yes);
    }
    std::vector<ValidationRecord> out;
    for (auto& [d, rec] : records) out.push_back(std::move(rec));
    return out;
}

std::string serialize_validation(const ValidationRecord& v, TimestampMs at) {
    ojson j;
    j["at"] = at;
    j["dimension"] = to_string(v.dimension);
    j["correct"] = v.correct();
    j["total"] = v.total();
    j["accuracy"] = v.total() ? compute_accuracy(v) : 0.0;
    ojson arr = ojson::array();
    for (const auto& [k, yes] : v.confirmations) arr.push_back(ojson::array({k, yes}));
    j["confirmations"] = std::move(arr);
    return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

}  // namespace vme
