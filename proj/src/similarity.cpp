// SPDX-License-Identifier: Apache-2.0
#include "vme/similarity.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "vme/errors.hpp"

namespace vme {

std::string RelatednessParams::violation() const {
    for (double w : {a, b, c, d}) {
        if (!(w >= 0.0)) return "weights must be non-negative";
    }
    if (std::abs(a + b + c + d - 1.0) > 1e-9) return "weights a+b+c+d must sum to 1";
    if (!(tau > 0.0)) return "tau must be positive";
    if (d_max < 1) return "d_max must be at least 1";
    if (!(theta_p >= 0.0 && theta_p <= 1.0)) return "theta_p must lie in [0,1]";
    if (!(eps >= 0.0 && eps <= 1.0)) return "eps must lie in [0,1]";
    if (min_pts < 2) return "min_pts must be at least 2";
    return {};
}

void RelatednessParams::validate() const {
    if (auto v = violation(); !v.empty()) throw UsageError("invalid relatedness parameters: " + v);
}

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
        auto uc = static_cast<unsigned char>(ch);
        if (std::isalnum(uc) || uc >= 0x80) {
            cur += static_cast<char>(std::tolower(uc));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

std::size_t HashedBagOfTokens::bucket(std::string_view token) noexcept {
    std::uint64_t h = 14695981039346656037ull;
    for (char c : token) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ull;
    }
    return static_cast<std::size_t>(h % kDimension);
}

Embedding HashedBagOfTokens::embed(std::string_view text) {
    Embedding v(kDimension, 0.0);
    auto tokens = tokenize(text);
    if (tokens.empty()) {
        std::fill(v.begin(), v.end(), 1.0 / std::sqrt(static_cast<double>(kDimension)));
        return v;
    }
    for (const auto& t : tokens) v[bucket(t)] += 1.0;
    double norm = 0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    return v;
}

Embedding CachingProvider::embed(std::string_view text) {
    std::string key(text);
    {
        std::lock_guard lock(mu_);
        if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    }
    Embedding v = inner_.embed(text);
    std::lock_guard lock(mu_);
    return cache_.emplace(std::move(key), std::move(v)).first->second;
}

double temporal_similarity(TimestampMs t_x, TimestampMs t_y, double tau) {
    const double gap = static_cast<double>(t_x > t_y ? t_x - t_y : t_y - t_x);
    return std::exp(-gap / (1000.0 * tau));
}

std::vector<std::string> hierarchy_nodes(const CodeObject& o) {
    std::vector<std::string> nodes;
    std::string_view p = o.path;
    while (!p.empty()) {
        auto slash = p.find('/');
        auto part = p.substr(0, slash);
        if (!part.empty() && part != ".") nodes.emplace_back(part);
        if (slash == std::string_view::npos) break;
        p.remove_prefix(slash + 1);
    }
    nodes.insert(nodes.end(), o.symbol_path.begin(), o.symbol_path.end());
    return nodes;
}

namespace {

int node_distance(const std::vector<std::string>& x, const std::vector<std::string>& y) {
    std::size_t common = 0;
    while (common < x.size() && common < y.size() && x[common] == y[common]) ++common;
    return static_cast<int>(x.size() + y.size() - 2 * common);
}

double node_similarity(const std::vector<std::string>& x, const std::vector<std::string>& y, int d_max) {
    return std::max(0.0, 1.0 - static_cast<double>(node_distance(x, y)) / static_cast<double>(d_max));
}

}  // namespace

int object_distance(const CodeObject& x, const CodeObject& y) {
    return node_distance(hierarchy_nodes(x), hierarchy_nodes(y));
}

double object_similarity(const CodeObject& x, const CodeObject& y, int d_max) {
    return node_similarity(hierarchy_nodes(x), hierarchy_nodes(y), d_max);
}

double cosine(std::span<const double> x, std::span<const double> y) {
    const std::size_t n = std::min(x.size(), y.size());
    double dot = 0;
    for (std::size_t i = 0; i < n; ++i) dot += x[i] * y[i];
    return std::clamp(dot, -1.0, 1.0);
}

namespace {

double rescaled(std::span<const double> x, std::span<const double> y) { return (cosine(x, y) + 1.0) / 2.0; }

}  // namespace

double semantic_similarity(std::string_view x, std::string_view y, EmbeddingProvider& p) {
    auto ex = p.embed(x);
    auto ey = p.embed(y);
    if (ex.size() != ey.size() || ex.empty()) throw ProviderError(p.provider_id(), "embedding dimension mismatch");
    return rescaled(ex, ey);
}

std::string action_text(const LogLevelBehavior& lb) { return verb_phrase(lb.action.verb); }

std::string context_text(const LogLevelBehavior& lb) {
    if (lb.context.command) return lb.context.command->command_line + "\n" + lb.context.command->output_excerpt;
    if (lb.context.diff) {
        const auto& d = *lb.context.diff;
        std::string out = d.removed_text;
        if (!out.empty() && !d.added_text.empty()) out += '\n';
        out += d.added_text;
        if (out.empty()) out = lb.context.detail;
        return out;
    }
    return lb.context.detail;
}

double weighted_relatedness(const RelatednessComponents& c, const RelatednessParams& p) noexcept {
    return p.a * c.time + p.b * c.action + p.c * c.object + p.d * c.context;
}

RelatednessComponents relatedness_components(const LogLevelBehavior& x, const LogLevelBehavior& y,
                                             const RelatednessParams& p, EmbeddingProvider& provider) {
    RelatednessComponents c;
    c.time = temporal_similarity(x.timestamp, y.timestamp, p.tau);
    c.action = semantic_similarity(action_text(x), action_text(y), provider);
    c.object = object_similarity(x.object, y.object, p.d_max);
    c.context = semantic_similarity(context_text(x), context_text(y), provider);
    return c;
}

double relatedness(const LogLevelBehavior& x, const LogLevelBehavior& y, const RelatednessParams& p,
                   EmbeddingProvider& provider) {
    return weighted_relatedness(relatedness_components(x, y, p, provider), p);
}

LbFeatures make_features(const LogLevelBehavior& lb, EmbeddingProvider& provider) {
    LbFeatures f;
    f.timestamp = lb.timestamp;
    f.nodes = hierarchy_nodes(lb.object);
    f.action = provider.embed(action_text(lb));
    f.context = provider.embed(context_text(lb));
    if (f.action.size() != f.context.size() || f.action.empty()) {
        throw ProviderError(provider.provider_id(), "embedding dimension mismatch");
    }
    return f;
}

double relatedness(const LbFeatures& x, const LbFeatures& y, const RelatednessParams& p) {
    RelatednessComponents c;
    c.time = temporal_similarity(x.timestamp, y.timestamp, p.tau);
    c.action = rescaled(x.action, y.action);
    c.object = node_similarity(x.nodes, y.nodes, p.d_max);
    c.context = rescaled(x.context, y.context);
    return weighted_relatedness(c, p);
}

RelatednessMatrix::RelatednessMatrix(std::span<const LogLevelBehavior> lbs, const RelatednessParams& p,
                                     EmbeddingProvider& provider) {
    std::vector<LbFeatures> features;
    features.reserve(lbs.size());
    for (const auto& lb : lbs) features.push_back(make_features(lb, provider));
    fill(features, p);
}

RelatednessMatrix::RelatednessMatrix(std::span<const LbFeatures> features, const RelatednessParams& p) {
    fill(features, p);
}

RelatednessMatrix::RelatednessMatrix(std::size_t n, std::vector<double> values) : n_(n), values_(std::move(values)) {
    if (values_.size() != n * n) throw UsageError("relatedness matrix size mismatch");
}

void RelatednessMatrix::fill(std::span<const LbFeatures> features, const RelatednessParams& p) {
    n_ = features.size();
    values_.assign(n_ * n_, 1.0);
    for (std::size_t i = 0; i < n_; ++i) {
        for (std::size_t j = i + 1; j < n_; ++j) {
            double r = relatedness(features[i], features[j], p);
            values_[i * n_ + j] = r;
            values_[j * n_ + i] = r;
        }
    }
}

}  // namespace vme
