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

#include "multivul/commenter.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cstdlib>
#include <set>
#include <thread>

#include "httplib.h"
#include "multivul/errors.hpp"

namespace multivul::commenter {

using nlohmann::json;

#define MULTIVUL_HARD_CONSTRAINTS                                              \
  "Hard constraints:\n"                                                        \
  "- Output exactly ONE sentence in English.\n"                                \
  "- Describe ONLY what is explicitly shown in the code.\n"                    \
  "- Do NOT claim input validation, error handling, bounds checks, "           \
  "permissions, or safety guarantees unless the code clearly shows them.\n"    \
  "- Avoid speculative words such as 'ensure/ensures/ensuring', 'handle(s) "   \
  "errors', 'validate(s)', 'sanitize(s)', 'filter(s)', 'guarantee(s)' unless " \
  "explicitly present.\n"                                                      \
  "- Do NOT mention security or vulnerabilities (this is the normal "          \
  "setting)."

const std::string_view kHardConstraints = MULTIVUL_HARD_CONSTRAINTS;

const std::string_view kSystemPrompt =
    "You are an expert code summarization assistant.\n\n"
    MULTIVUL_HARD_CONSTRAINTS;

#undef MULTIVUL_HARD_CONSTRAINTS

const std::string_view kReviewRequest =
    "Review your previous answer and list problems.\n\n"
    "Check specifically for:\n"
    "- Any speculation beyond the code (e.g., 'ensures', 'handles errors', "
    "'validates', 'guarantees').\n"
    "- Any claims of checks that are not explicitly shown (input validation, "
    "bounds checks, error handling, permissions).\n"
    "- Missing core behavior (main operations, key calls, main data flow).\n\n"
    "Output ONLY short bullet points. Do NOT revise yet.";

const std::string_view kRevisionRequest =
    "Based on the problems you found, improve your answer.\n\n"
    "Requirements:\n"
    "- Output exactly ONE sentence in English.\n"
    "- Describe ONLY what is explicitly shown in the code.\n"
    "- Remove any speculative or non-evidenced claims.\n"
    "- Do NOT mention security or vulnerabilities.\n\n"
    "Output ONLY the final sentence.";

std::string draft_request(std::string_view code) {
  std::string out =
      "Please generate a short one-sentence comment describing the core "
      "functionality of the following function:\n<code>\n";
  out += code;
  out += "\n</code>\n\nOutput ONLY the sentence.";
  return out;
}

Mode parse_mode(std::string_view name) {
  if (name == "stub") return Mode::kStub;
  if (name == "remote") return Mode::kRemote;
  throw ContractError("unknown comment mode '" + std::string(name) + "'");
}

std::string_view mode_name(Mode mode) {
  return mode == Mode::kStub ? "stub" : "remote";
}

void validate(const ProviderConfig& config) {
  if (config.max_retries < 0) throw ContractError("retries must be >= 0");
  if (config.mode == Mode::kRemote) {
    if (config.endpoint.empty()) {
      throw ContractError("remote mode requires an endpoint");
    }
    if (config.model.empty()) {
      throw ContractError("remote mode requires a model name");
    }
  }
  if (!(config.timeout_seconds > 0.0)) {
    throw ContractError("timeout must be positive");
  }
  if (config.concurrency < 1) throw ContractError("concurrency must be >= 1");
}

json config_to_json(const ProviderConfig& c) {
  return json{{"mode", mode_name(c.mode)},
              {"endpoint", c.endpoint},
              {"model", c.model},
              {"token_env", c.token_env},
              {"timeout_seconds", c.timeout_seconds},
              {"max_retries", c.max_retries},
              {"temperature", c.temperature},
              {"max_tokens", c.max_tokens}};
}

// ---------------------------------------------------------------------------
// Stub

namespace {

bool is_identifier(const std::string& tok) {
  if (tok.empty()) return false;
  const auto first = static_cast<unsigned char>(tok[0]);
  if (!(std::isalpha(first) || first == '_')) return false;
  return std::all_of(tok.begin(), tok.end(), [](unsigned char c) {
    return std::isalnum(c) || c == '_';
  });
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool mentions_forbidden(std::string_view text) {
  const std::string l = lower(text);
  return std::any_of(std::begin(kForbiddenWords), std::end(kForbiddenWords),
                     [&](std::string_view w) {
                       return l.find(w) != std::string::npos;
                     });
}

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

}  // namespace

std::string generate_comment_stub(const corpus::FunctionRecord& record) {
  if (record.code.empty()) throw ContractError("stub: empty code");
  const auto tokens = corpus::tokenize(record.code, corpus::Modality::kCode);
  std::string name = "anonymous";
  auto paren = std::find(tokens.begin(), tokens.end(), "(");
  if (paren != tokens.end() && paren != tokens.begin()) {
    name = *(paren - 1);
  }
  if (mentions_forbidden(name)) name = "anonymous";
  std::set<std::string> identifiers;
  for (const auto& t : tokens) {
    if (is_identifier(t)) identifiers.insert(t);
  }
  return "Defines function " + name + " operating on " +
         std::to_string(identifiers.size()) + " identifier tokens.";
}

// ---------------------------------------------------------------------------
// Reply parsing

std::string first_sentence(std::string_view reply) {
  std::string flat;
  flat.reserve(reply.size());
  for (char c : reply) flat.push_back(c == '\n' || c == '\r' ? ' ' : c);
  std::string text = trim(flat);
  while (text.size() >= 2 && text.front() == '"' && text.back() == '"') {
    text = trim(std::string_view(text).substr(1, text.size() - 2));
  }
  if (text.empty()) return text;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if ((c == '.' || c == '!' || c == '?') &&
        (i + 1 == text.size() ||
         std::isspace(static_cast<unsigned char>(text[i + 1])))) {
      return text.substr(0, i + 1);
    }
  }
  return text + ".";
}

std::vector<std::string> parse_bullets(std::string_view reply) {
  std::vector<std::string> bullets;
  std::size_t start = 0;
  while (start <= reply.size()) {
    std::size_t end = reply.find('\n', start);
    if (end == std::string_view::npos) end = reply.size();
    std::string line = trim(reply.substr(start, end - start));
    if (!line.empty() && (line[0] == '-' || line[0] == '*')) {
      line = trim(std::string_view(line).substr(1));
    }
    if (!line.empty()) bullets.push_back(std::move(line));
    start = end + 1;
  }
  return bullets;
}

// ---------------------------------------------------------------------------
// Remote client

ChatClient::ChatClient(ProviderConfig config) : config_(std::move(config)) {
  validate(config_);
  const auto scheme = config_.endpoint.find("://");
  if (scheme == std::string::npos) {
    throw ContractError("endpoint must include a scheme: " + config_.endpoint);
  }
  const auto slash = config_.endpoint.find('/', scheme + 3);
  host_ = config_.endpoint.substr(0, slash);
  path_ = slash == std::string::npos ? "/" : config_.endpoint.substr(slash);
}

std::string ChatClient::complete(
    const std::vector<ChatMessage>& messages) const {
  json body{{"model", config_.model},
            {"temperature", config_.temperature},
            {"max_tokens", config_.max_tokens},
            {"messages", json::array()}};
  for (const auto& m : messages) {
    body["messages"].push_back({{"role", m.role}, {"content", m.content}});
  }
  const std::string payload = body.dump();

  httplib::Headers headers;
  if (const char* token = std::getenv(config_.token_env.c_str());
      token != nullptr && *token != '\0') {
    headers.emplace("Authorization", std::string("Bearer ") + token);
  }

  httplib::Client client(host_);
  const auto timeout = std::chrono::duration<double>(config_.timeout_seconds);
  const auto secs = std::chrono::duration_cast<std::chrono::microseconds>(timeout);
  client.set_connection_timeout(secs);
  client.set_read_timeout(secs);
  client.set_write_timeout(secs);

  int last_status = -1;
  std::string last_error;
  double backoff = config_.backoff_initial_seconds;
  int attempts = 0;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    ++attempts;
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::duration<double>(backoff));
      backoff *= 2.0;
    }
    auto res = client.Post(path_, headers, payload, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    last_status = res->status;
    if (res->status == 200) {
      try {
        const json reply = json::parse(res->body);
        return reply.at("choices").at(0).at("message").at("content")
            .get<std::string>();
      } catch (const json::exception& e) {
        throw RemoteError(std::string("malformed chat response: ") + e.what(),
                          res->status);
      }
    }
    last_error = "HTTP " + std::to_string(res->status);
    const bool retryable = res->status == 429 || res->status >= 500;
    if (!retryable) break;
  }
  throw RemoteError("chat request failed after " + std::to_string(attempts) +
                        " attempt(s): " + last_error,
                    last_status);
}

CritiqueTranscript generate_comment_llm(const corpus::FunctionRecord& record,
                                        const ProviderConfig& config) {
  if (config.mode != Mode::kRemote) {
    throw ContractError("generate_comment_llm requires remote mode");
  }
  if (record.code.empty()) throw ContractError("empty code");
  ChatClient client(config);

  std::vector<ChatMessage> messages{
      {"system", std::string(kSystemPrompt)},
      {"user", draft_request(record.code)}};
  CritiqueTranscript transcript;
  transcript.draft = client.complete(messages);

  messages.push_back({"assistant", transcript.draft});
  messages.push_back({"user", std::string(kReviewRequest)});
  const std::string review = client.complete(messages);
  transcript.review = parse_bullets(review);

  messages.push_back({"assistant", review});
  messages.push_back({"user", std::string(kRevisionRequest)});
  transcript.final_comment = first_sentence(client.complete(messages));
  if (transcript.final_comment.empty()) {
    throw RemoteError("empty revision", 200);
  }
  return transcript;
}

AttachResult attach_comments(std::vector<corpus::FunctionRecord> records,
                             const ProviderConfig& config) {
  validate(config);
  AttachResult result;
  result.errors.resize(records.size());
  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!records[i].comment) pending.push_back(i);
  }

  if (config.mode == Mode::kStub) {
    for (std::size_t i : pending) {
      records[i].comment = generate_comment_stub(records[i]);
    }
    result.generated = pending.size();
    result.records = std::move(records);
    return result;
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < pending.size(); k = next++) {
      const std::size_t i = pending[k];
      try {
        records[i].comment =
            generate_comment_llm(records[i], config).final_comment;
      } catch (const std::exception& e) {
        result.errors[i] = e.what();
      }
    }
  };
  const std::size_t workers =
      std::min<std::size_t>(static_cast<std::size_t>(config.concurrency),
                            pending.size());
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  for (std::size_t i : pending) result.generated += !result.errors[i];
  if (!pending.empty() && result.generated == 0) {
    throw RemoteError("every comment generation failed; first error: " +
                          *result.errors[pending.front()],
                      -1);
  }
  result.records = std::move(records);
  return result;
}

}  // namespace multivul::commenter
