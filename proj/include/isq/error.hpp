// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace isq {

/// Input errors are the caller's fault (bad file, bad flag, malformed model)
/// and map to CLI exit code 2. Everything else maps to 1.
enum class ErrorKind { Input, Internal };

/// Module-qualified error. `code` looks like "model_graph.missing_blob".
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message, ErrorKind kind = ErrorKind::Input);

  const std::string& code() const noexcept { return code_; }
  /// The text after the code prefix.
  const std::string& message() const noexcept { return message_; }
  ErrorKind kind() const noexcept { return kind_; }

 private:
  std::string code_;
  std::string message_;
  ErrorKind kind_;
};

}  // namespace isq
