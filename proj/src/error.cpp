// SPDX-License-Identifier: Apache-2.0
#include "isq/error.hpp"

namespace isq {

Error::Error(std::string code, const std::string& message, ErrorKind kind)
    : std::runtime_error(code + ": " + message), code_(std::move(code)), message_(message), kind_(kind) {}

}  // namespace isq
