// Copyright 2026 The MultiVul Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace multivul {

// Violated precondition or malformed input. The CLI maps this to exit code 1.
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// File-system failure. The CLI maps this to exit code 2.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Chat-completions endpoint failed after all retries.
class RemoteError : public std::runtime_error {
 public:
  RemoteError(const std::string& what, int last_status)
      : std::runtime_error(what), last_status_(last_status) {}

  // Last HTTP status seen, or -1 when no response was received.
  int last_status() const noexcept { return last_status_; }

 private:
  int last_status_;
};

}  // namespace multivul
