/*
 * Copyright 2026 The flipaudit Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef FLIPAUDIT_ERROR_H_
#define FLIPAUDIT_ERROR_H_

#include <stdexcept>
#include <string>
#include <string_view>

namespace flipaudit {

// Broad failure categories. Every module reports errors by throwing
// flipaudit::Error tagged with one of these.
enum class ErrorCode {
  kInvalidInput,      // Non-finite or otherwise unusable data.
  kInvalidArgument,   // Caller-supplied parameter out of range.
  kDegenerateInput,   // Mathematically degenerate input (e.g. zero matrix).
  kShape,             // Dimension mismatch.
  kParse,             // Malformed file contents.
  kSchema,            // File is well-formed but inconsistent with a schema.
  kIntegrity,         // One-hot or other dataset invariant would be broken.
  kDivergence,        // Training produced a non-finite loss.
  kIo,                // File could not be read or written.
};

std::string_view ErrorCodeName(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(ErrorCodeName(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace flipaudit

#endif  // FLIPAUDIT_ERROR_H_
