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

// Comment generation: an offline template stub, and a three-turn
// draft/review/revise protocol against a chat-completions endpoint.

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "multivul/corpus.hpp"

namespace multivul::commenter {

enum class Mode { kStub, kRemote };

Mode parse_mode(std::string_view name);
std::string_view mode_name(Mode mode);

struct ProviderConfig {
  Mode mode = Mode::kStub;
  std::string endpoint;  // e.g. http://127.0.0.1:8000/v1/chat/completions
  std::string model;
  std::string token_env = "OPENAI_API_KEY";
  double timeout_seconds = 60.0;
  int max_retries = 3;
  double backoff_initial_seconds = 1.0;  // doubles after each failed attempt
  double temperature = 0.0;
  int max_tokens = 128;
  int concurrency = 4;  // in-flight requests in attach_comments
};

void validate(const ProviderConfig& config);
nlohmann::json config_to_json(const ProviderConfig& config);

struct ChatMessage {
  std::string role;  // system | user | assistant
  std::string content;
};

struct CritiqueTranscript {
  std::string draft;
  std::vector<std::string> review;
  std::string final_comment;
};

// Protocol text.
extern const std::string_view kSystemPrompt;
extern const std::string_view kHardConstraints;
extern const std::string_view kReviewRequest;
extern const std::string_view kRevisionRequest;
std::string draft_request(std::string_view code);

// Words a generated comment must never contain (case-insensitive).
inline constexpr std::string_view kForbiddenWords[] = {
    "security", "vulnerable", "vulnerability"};

// "Defines function <name> operating on <k> identifier tokens."
std::string generate_comment_stub(const corpus::FunctionRecord& record);

// First sentence of a reply, line breaks folded to spaces, terminal period
// guaranteed. Empty when the reply has no content.
std::string first_sentence(std::string_view reply);
std::vector<std::string> parse_bullets(std::string_view reply);

// Sends chat requests with retry and exponential backoff.
class ChatClient {
 public:
  explicit ChatClient(ProviderConfig config);

  // Returns the assistant content of the first choice. Throws RemoteError
  // carrying the last HTTP status once retries are exhausted.
  std::string complete(const std::vector<ChatMessage>& messages) const;

 private:
  ProviderConfig config_;
  std::string host_;
  std::string path_;
};

CritiqueTranscript generate_comment_llm(const corpus::FunctionRecord& record,
                                        const ProviderConfig& config);

struct AttachResult {
  std::vector<corpus::FunctionRecord> records;
  std::vector<std::optional<std::string>> errors;  // per record
  std::size_t generated = 0;
};

// Fills missing comments, leaving existing ones untouched. Throws
// RemoteError only when every attempted generation failed.
AttachResult attach_comments(std::vector<corpus::FunctionRecord> records,
                             const ProviderConfig& config);

}  // namespace multivul::commenter
