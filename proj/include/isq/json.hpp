// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace isq {

/// JSON document with f32 numbers: every float the toolkit stores is an f32,
/// and this makes dump() emit the shortest text that parses back equal.
/// Keys are sorted, so serialization is deterministic.
using Json = nlohmann::basic_json<std::map, std::vector, std::string, bool, std::int64_t, std::uint64_t, float>;

}  // namespace isq
