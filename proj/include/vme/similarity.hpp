// SPDX-License-Identifier: Apache-2.0
//
// Relatedness between two log-level behaviors:
//
//   R_xy = a * R_time + b * R_action + c * R_object + d * R_context
//
// Every component lies in [0, 1] and the weights sum to one, so R_xy does too.
#pragma once

#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "vme/model.hpp"

namespace vme {

struct RelatednessParams {
    double a = 0.35;  // time
    double b = 0.30;  // action
    double c = 0.25;  // object
    double d = 0.10;  // context
    double tau = 60.0;  // seconds
    int d_max = 6;
    double theta_p = 0.35;
    double eps = 0.45;
    int min_pts = 3;

    /// Empty when valid, otherwise the first violated constraint.
    [[nodiscard]] std::string violation() const;
    /// Throws UsageError when invalid.
    void validate() const;
};

using Embedding = std::vector<double>;

/// Text to unit-norm vector of fixed dimension. Implementations must be
/// deterministic for a given provider_id; those that cannot take concurrent
/// calls report so and callers serialize them.
class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual Embedding embed(std::string_view text) = 0;
    [[nodiscard]] virtual std::string provider_id() const = 0;
    [[nodiscard]] virtual bool concurrent_safe() const { return true; }
};

/// Lowercased alphanumeric tokens.
[[nodiscard]] std::vector<std::string> tokenize(std::string_view text);

/// Offline fallback: hashed bag-of-tokens term-frequency vectors (FNV-1a,
/// 256 buckets), L2-normalized. Text without tokens maps to the uniform vector.
class HashedBagOfTokens final : public EmbeddingProvider {
public:
    static constexpr std::size_t kDimension = 256;

    Embedding embed(std::string_view text) override;
    [[nodiscard]] std::string provider_id() const override { return "hashed-bow-256"; }

    [[nodiscard]] static std::size_t bucket(std::string_view token) noexcept;
};

/// Memoizes another provider by text.
class CachingProvider final : public EmbeddingProvider {
public:
    explicit CachingProvider(EmbeddingProvider& inner) : inner_(inner) {}

    Embedding embed(std::string_view text) override;
    [[nodiscard]] std::string provider_id() const override { return inner_.provider_id(); }

private:
    EmbeddingProvider& inner_;
    std::mutex mu_;
    std::unordered_map<std::string, Embedding> cache_;
};

/// exp(-|t_x - t_y| / (1000 * tau)).
[[nodiscard]] double temporal_similarity(TimestampMs t_x, TimestampMs t_y, double tau);

/// Node chain from the workspace root: directory components, file, then scopes.
[[nodiscard]] std::vector<std::string> hierarchy_nodes(const CodeObject& o);
/// Edge steps between two objects in the combined directory/file/symbol tree.
[[nodiscard]] int object_distance(const CodeObject& x, const CodeObject& y);
/// max(0, 1 - distance / d_max).
[[nodiscard]] double object_similarity(const CodeObject& x, const CodeObject& y, int d_max);

[[nodiscard]] double cosine(std::span<const double> x, std::span<const double> y);
/// Cosine of the two embeddings rescaled from [-1, 1] to [0, 1].
[[nodiscard]] double semantic_similarity(std::string_view x, std::string_view y, EmbeddingProvider& p);

/// Text embedded for action similarity: the verb as words.
[[nodiscard]] std::string action_text(const LogLevelBehavior& lb);
/// Text embedded for context similarity: diff text, or command line and output.
[[nodiscard]] std::string context_text(const LogLevelBehavior& lb);

struct RelatednessComponents {
    double time = 0;
    double action = 0;
    double object = 0;
    double context = 0;
};

[[nodiscard]] double weighted_relatedness(const RelatednessComponents& c, const RelatednessParams& p) noexcept;

[[nodiscard]] RelatednessComponents relatedness_components(const LogLevelBehavior& x, const LogLevelBehavior& y,
                                                           const RelatednessParams& p, EmbeddingProvider& provider);
[[nodiscard]] double relatedness(const LogLevelBehavior& x, const LogLevelBehavior& y, const RelatednessParams& p,
                                 EmbeddingProvider& provider);

/// Per-LB embeddings and object nodes, computed once for pairwise scoring.
struct LbFeatures {
    TimestampMs timestamp = 0;
    std::vector<std::string> nodes;
    Embedding action;
    Embedding context;
};

[[nodiscard]] LbFeatures make_features(const LogLevelBehavior& lb, EmbeddingProvider& provider);
[[nodiscard]] double relatedness(const LbFeatures& x, const LbFeatures& y, const RelatednessParams& p);

/// Symmetric n x n relatedness matrix (row-major) with ones on the diagonal.
class RelatednessMatrix {
public:
    RelatednessMatrix(std::span<const LogLevelBehavior> lbs, const RelatednessParams& p, EmbeddingProvider& provider);
    RelatednessMatrix(std::span<const LbFeatures> features, const RelatednessParams& p);
    /// Wraps a precomputed matrix (tests, oracles).
    RelatednessMatrix(std::size_t n, std::vector<double> values);

    [[nodiscard]] std::size_t size() const noexcept { return n_; }
    [[nodiscard]] double at(std::size_t i, std::size_t j) const noexcept { return values_[i * n_ + j]; }
    [[nodiscard]] double distance(std::size_t i, std::size_t j) const noexcept { return 1.0 - at(i, j); }

private:
    void fill(std::span<const LbFeatures> features, const RelatednessParams& p);

    std::size_t n_ = 0;
    std::vector<double> values_;
};

}  // namespace vme
