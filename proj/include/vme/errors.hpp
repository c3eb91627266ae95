// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace vme {

/// Broad failure class; the CLI maps each to a stable exit code.
enum class ErrorKind {
    usage,     // 1
    data,      // 2: malformed input, integrity or conflict in a store
    external,  // 3: LLM or embedding service failure
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

class UsageError : public Error {
public:
    explicit UsageError(const std::string& what) : Error(ErrorKind::usage, what) {}
};

/// A record could not be decoded. `field` names the offending field when known;
/// `offset` is the byte offset into the record where decoding stopped.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::string field, std::size_t offset)
        : Error(ErrorKind::data, what), field_(std::move(field)), offset_(offset) {}
    [[nodiscard]] const std::string& field() const noexcept { return field_; }
    [[nodiscard]] std::size_t offset() const noexcept { return offset_; }

private:
    std::string field_;
    std::size_t offset_;
};

/// Event stream violates ordering (a capture bug upstream).
class StreamError : public Error {
public:
    explicit StreamError(const std::string& what) : Error(ErrorKind::data, what) {}
};

/// Store content is inconsistent (dangling reference, corrupt record).
class IntegrityError : public Error {
public:
    explicit IntegrityError(const std::string& what) : Error(ErrorKind::data, what) {}
};

/// Append would break id density (gap or duplicate).
class ConflictError : public Error {
public:
    explicit ConflictError(const std::string& what) : Error(ErrorKind::data, what) {}
};

/// A path resolves outside the workspace root.
class ContainmentError : public Error {
public:
    explicit ContainmentError(const std::string& what) : Error(ErrorKind::data, what) {}
};

class ProviderError : public Error {
public:
    ProviderError(std::string provider_id, const std::string& what)
        : Error(ErrorKind::external, provider_id + ": " + what), provider_id_(std::move(provider_id)) {}
    [[nodiscard]] const std::string& provider_id() const noexcept { return provider_id_; }

private:
    std::string provider_id_;
};

class LlmError : public Error {
public:
    LlmError(std::string client_id, const std::string& what)
        : Error(ErrorKind::external, client_id + ": " + what), client_id_(std::move(client_id)) {}
    [[nodiscard]] const std::string& client_id() const noexcept { return client_id_; }

private:
    std::string client_id_;
};

inline int exit_code_for(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::usage: return 1;
        case ErrorKind::data: return 2;
        case ErrorKind::external: return 3;
    }
    return 2;
}

}  // namespace vme
