// SPDX-License-Identifier: Apache-2.0
//
// Canonical newline-delimited record encodings. Every store file starts with a
// schema header line; each following line is one JSON object with a fixed
// field order, so serialize(parse(serialize(x))) is byte-identical.
#pragma once

#include <string>
#include <string_view>

#include "vme/model.hpp"

namespace vme {

inline constexpr std::string_view kEventsHeader = "#vme-events v1";
inline constexpr std::string_view kLbsHeader = "#vme-lbs v1";
inline constexpr std::string_view kTbsHeader = "#vme-tbs v1";

/// Field order: event_id, timestamp, source, kind, path, range, payload.
/// Absent optionals are written as explicit nulls.
[[nodiscard]] std::string serialize_event(const RawEvent& e);

/// Throws ParseError naming the field (or the byte offset for malformed
/// JSON). Unknown kinds and unknown fields are rejected.
[[nodiscard]] RawEvent parse_event(std::string_view line);

[[nodiscard]] std::string serialize_lb(const LogLevelBehavior& lb);
[[nodiscard]] LogLevelBehavior parse_lb(std::string_view line);

[[nodiscard]] std::string serialize_tb(const TaskLevelBehavior& tb);
[[nodiscard]] TaskLevelBehavior parse_tb(std::string_view line);

/// Throws ParseError unless `line` equals `expected` exactly. A header with the
/// right family but another version is reported as a version mismatch.
void check_header(std::string_view line, std::string_view expected);

}  // namespace vme
