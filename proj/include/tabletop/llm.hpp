#pragma once

#include <nlohmann/json.hpp>

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace tabletop {

struct ChatMessage {
  std::string role;  // "system" | "user" | "assistant"
  std::string content;
};

struct ChatRequest {
  std::string system;  // optional system prompt, empty = none
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
  std::vector<std::string> stop;
  int max_tokens = 0;  // 0 = backend default
};

struct ChatResponse {
  std::string content;
  std::string finish_reason = "stop";
  double latency_ms = 0.0;
  int prompt_tokens = -1;      // -1 = unknown
  int completion_tokens = -1;
};

class BackendError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class TimeoutError : public BackendError {
 public:
  using BackendError::BackendError;
};
class TransportError : public BackendError {
 public:
  using BackendError::BackendError;
};
class FixtureExhausted : public BackendError {
 public:
  using BackendError::BackendError;
};
class FingerprintMiss : public BackendError {
 public:
  using BackendError::BackendError;
};

// Throws std::invalid_argument on an empty message list or negative
// temperature. Every backend checks this first.
void validate_request(const ChatRequest& request);

// FNV-1a 64 over a canonical JSON encoding of (system, messages, temperature,
// stop); 16 lowercase hex chars. Stable across runs and platforms.
std::string request_fingerprint(const ChatRequest& request);

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual ChatResponse complete(const ChatRequest& request) = 0;
  virtual std::string identity() const = 0;  // for run metadata
};

struct FixtureRecord {
  std::string fingerprint;  // may be empty in hand-written strict-order files
  std::string response;
};

enum class FixtureMode { StrictOrder, Fingerprint };

struct ReplayFixture {
  FixtureMode mode = FixtureMode::StrictOrder;
  std::vector<FixtureRecord> records;

  static ReplayFixture from_json(const std::string& text);
  static ReplayFixture load_file(const std::string& path);
  std::string to_json() const;
};

// Deterministic playback of a recorded conversation. Strict-order mode hands
// out records sequentially; fingerprint mode matches each request's digest to
// an unconsumed record. Throws FixtureExhausted / FingerprintMiss.
class ReplayBackend : public ChatBackend {
 public:
  explicit ReplayBackend(ReplayFixture fixture, std::string label = "inline");
  static ReplayBackend from_file(const std::string& path);

  ChatResponse complete(const ChatRequest& request) override;
  std::string identity() const override;
  std::size_t remaining() const;

 private:
  ReplayFixture fixture_;
  std::string label_;
  std::size_t cursor_ = 0;
  std::vector<bool> consumed_;  // fingerprint mode
};

struct HttpConfig {
  std::string endpoint;  // e.g. "http://127.0.0.1:8080/v1"
  std::string model;
  std::string api_key_env = "TABLETOP_API_KEY";  // header sent only when set
  double timeout_seconds = 60.0;
  int retries = 2;  // re-attempts after a connection-level failure
};

// The exact wire payload, exposed so tests can pin the dialect.
nlohmann::json build_chat_payload(const HttpConfig& config,
                                  const ChatRequest& request);

// OpenAI-compatible chat completions over HTTP. Throws TimeoutError after
// exhausting retries on timeouts, TransportError on connection failures,
// non-200 statuses, or malformed response bodies.
class HttpBackend : public ChatBackend {
 public:
  explicit HttpBackend(HttpConfig config);
  ~HttpBackend() override;

  ChatResponse complete(const ChatRequest& request) override;
  std::string identity() const override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Forwards to an inner backend and records every exchange, rewriting the
// fixture file after each turn so a crash still leaves a usable prefix.
class CaptureBackend : public ChatBackend {
 public:
  CaptureBackend(ChatBackend& inner, std::string fixture_path);

  ChatResponse complete(const ChatRequest& request) override;
  std::string identity() const override;
  const ReplayFixture& fixture() const { return fixture_; }

 private:
  ChatBackend& inner_;
  std::string fixture_path_;
  ReplayFixture fixture_;
};

}  // namespace tabletop
