#include <tabletop/llm.hpp>

#include <httplib.h>

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace tabletop {

namespace {

using nlohmann::json;

std::string read_file(const std::string& path, const char* what) {
  std::ifstream in(path);
  if (!in) {
    throw std::invalid_argument(std::string("cannot open ") + what + ": " + path);
  }
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

void validate_request(const ChatRequest& request) {
  if (request.messages.empty()) {
    throw std::invalid_argument("chat request has no messages");
  }
  if (request.temperature < 0.0) {
    throw std::invalid_argument("chat request temperature must be >= 0");
  }
}

std::string request_fingerprint(const ChatRequest& request) {
  json canonical;
  canonical["system"] = request.system;
  json messages = json::array();
  for (const auto& m : request.messages) {
    messages.push_back(json::array({m.role, m.content}));
  }
  canonical["messages"] = std::move(messages);
  canonical["temperature"] = request.temperature;
  canonical["stop"] = request.stop;
  const std::string bytes = canonical.dump();

  std::uint64_t hash = 14695981039346656037ull;  // FNV-1a 64 offset basis
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 1099511628211ull;  // FNV-1a 64 prime
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(hash));
  return buf;
}

ReplayFixture ReplayFixture::from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("fixture is not valid JSON: ") +
                                e.what());
  }
  if (!doc.is_object() || !doc.contains("records") || !doc["records"].is_array()) {
    throw std::invalid_argument("fixture needs a 'records' array");
  }
  ReplayFixture fixture;
  const std::string mode = doc.value("mode", "strict-order");
  if (mode == "strict-order") {
    fixture.mode = FixtureMode::StrictOrder;
  } else if (mode == "fingerprint") {
    fixture.mode = FixtureMode::Fingerprint;
  } else {
    throw std::invalid_argument("fixture mode must be 'strict-order' or 'fingerprint'");
  }
  for (const auto& jr : doc["records"]) {
    if (!jr.is_object() || !jr.contains("response") || !jr["response"].is_string()) {
      throw std::invalid_argument("fixture records need a string 'response'");
    }
    FixtureRecord rec;
    rec.fingerprint = jr.value("fingerprint", "");
    rec.response = jr["response"].get<std::string>();
    if (fixture.mode == FixtureMode::Fingerprint && rec.fingerprint.empty()) {
      throw std::invalid_argument(
          "fingerprint-mode fixture record is missing its fingerprint");
    }
    fixture.records.push_back(std::move(rec));
  }
  return fixture;
}

ReplayFixture ReplayFixture::load_file(const std::string& path) {
  return from_json(read_file(path, "fixture file"));
}

std::string ReplayFixture::to_json() const {
  json doc;
  doc["mode"] = mode == FixtureMode::StrictOrder ? "strict-order" : "fingerprint";
  json records = json::array();
  for (const auto& r : this->records) {
    records.push_back({{"fingerprint", r.fingerprint}, {"response", r.response}});
  }
  doc["records"] = std::move(records);
  return doc.dump(2) + "\n";
}

ReplayBackend::ReplayBackend(ReplayFixture fixture, std::string label)
    : fixture_(std::move(fixture)),
      label_(std::move(label)),
      consumed_(fixture_.records.size(), false) {}

ReplayBackend ReplayBackend::from_file(const std::string& path) {
  return ReplayBackend(ReplayFixture::load_file(path), path);
}

ChatResponse ReplayBackend::complete(const ChatRequest& request) {
  validate_request(request);
  if (fixture_.mode == FixtureMode::StrictOrder) {
    if (cursor_ >= fixture_.records.size()) {
      throw FixtureExhausted(
          "replay fixture exhausted: request " +
          std::to_string(cursor_ + 1) + " of a " +
          std::to_string(fixture_.records.size()) + "-record fixture");
    }
    ChatResponse resp;
    resp.content = fixture_.records[cursor_++].response;
    return resp;
  }
  const std::string fp = request_fingerprint(request);
  for (std::size_t i = 0; i < fixture_.records.size(); ++i) {
    if (!consumed_[i] && fixture_.records[i].fingerprint == fp) {
      consumed_[i] = true;
      ChatResponse resp;
      resp.content = fixture_.records[i].response;
      return resp;
    }
  }
  throw FingerprintMiss("no unconsumed fixture record matches fingerprint " + fp);
}

std::string ReplayBackend::identity() const { return "replay:" + label_; }

std::size_t ReplayBackend::remaining() const {
  if (fixture_.mode == FixtureMode::StrictOrder) {
    return fixture_.records.size() - cursor_;
  }
  std::size_t n = 0;
  for (bool c : consumed_) n += c ? 0 : 1;
  return n;
}

json build_chat_payload(const HttpConfig& config, const ChatRequest& request) {
  json payload;
  payload["model"] = config.model;
  json messages = json::array();
  if (!request.system.empty()) {
    messages.push_back({{"role", "system"}, {"content", request.system}});
  }
  for (const auto& m : request.messages) {
    messages.push_back({{"role", m.role}, {"content", m.content}});
  }
  payload["messages"] = std::move(messages);
  payload["temperature"] = request.temperature;
  payload["stream"] = false;
  if (!request.stop.empty()) payload["stop"] = request.stop;
  if (request.max_tokens > 0) payload["max_tokens"] = request.max_tokens;
  return payload;
}

struct HttpBackend::Impl {
  HttpConfig config;
  std::string origin;     // scheme://host:port
  std::string base_path;  // e.g. "/v1"

  explicit Impl(HttpConfig cfg) : config(std::move(cfg)) {
    const std::string& ep = config.endpoint;
    auto scheme_end = ep.find("://");
    if (ep.empty() || scheme_end == std::string::npos) {
      throw std::invalid_argument("endpoint must look like http://host:port[/path]: '" +
                                  ep + "'");
    }
    auto path_start = ep.find('/', scheme_end + 3);
    if (path_start == std::string::npos) {
      origin = ep;
      base_path = "";
    } else {
      origin = ep.substr(0, path_start);
      base_path = ep.substr(path_start);
      while (!base_path.empty() && base_path.back() == '/') base_path.pop_back();
    }
  }
};

HttpBackend::HttpBackend(HttpConfig config)
    : impl_(std::make_unique<Impl>(std::move(config))) {}

HttpBackend::~HttpBackend() = default;

ChatResponse HttpBackend::complete(const ChatRequest& request) {
  validate_request(request);
  const HttpConfig& cfg = impl_->config;

  httplib::Client client(impl_->origin);
  const auto secs = static_cast<time_t>(cfg.timeout_seconds);
  const auto usecs = static_cast<time_t>(
      (cfg.timeout_seconds - static_cast<double>(secs)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);

  httplib::Headers headers;
  if (const char* key = std::getenv(cfg.api_key_env.c_str());
      key != nullptr && key[0] != '\0') {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }

  const std::string body = build_chat_payload(cfg, request).dump();
  const std::string path = impl_->base_path + "/chat/completions";

  const auto start = std::chrono::steady_clock::now();
  httplib::Result res;
  int attempts = cfg.retries + 1;
  for (int attempt = 0; attempt < attempts; ++attempt) {
    res = client.Post(path, headers, body, "application/json");
    if (res) break;
  }
  const double elapsed_ms =
      std::chrono::duration<double, std::milli>(
          std::chrono::steady_clock::now() - start)
          .count();

  if (!res) {
    // An aborted read is indistinguishable from a timed-out one at this
    // layer, so classify by how long we actually waited.
    const bool looks_timed_out =
        res.error() == httplib::Error::ConnectionTimeout ||
        elapsed_ms >= cfg.timeout_seconds * 1000.0 * 0.9;
    const std::string detail = "POST " + impl_->origin + path + " failed: " +
                               httplib::to_string(res.error()) + " (after " +
                               std::to_string(attempts) + " attempts)";
    if (looks_timed_out) throw TimeoutError(detail);
    throw TransportError(detail);
  }
  if (res->status != 200) {
    throw TransportError("POST " + impl_->origin + path + " returned status " +
                         std::to_string(res->status) + ": " +
                         res->body.substr(0, 200));
  }

  json doc;
  try {
    doc = json::parse(res->body);
  } catch (const json::parse_error& e) {
    throw TransportError(std::string("response body is not valid JSON: ") +
                         e.what());
  }
  try {
    ChatResponse out;
    const auto& choice = doc.at("choices").at(0);
    out.content = choice.at("message").at("content").get<std::string>();
    out.finish_reason = choice.value("finish_reason", "stop");
    if (doc.contains("usage")) {
      out.prompt_tokens = doc["usage"].value("prompt_tokens", -1);
      out.completion_tokens = doc["usage"].value("completion_tokens", -1);
    }
    out.latency_ms = elapsed_ms;
    return out;
  } catch (const json::exception& e) {
    throw TransportError(std::string("response body missing chat fields: ") +
                         e.what());
  }
}

std::string HttpBackend::identity() const {
  return "http:" + impl_->config.endpoint + "#" + impl_->config.model;
}

CaptureBackend::CaptureBackend(ChatBackend& inner, std::string fixture_path)
    : inner_(inner), fixture_path_(std::move(fixture_path)) {
  fixture_.mode = FixtureMode::StrictOrder;
}

ChatResponse CaptureBackend::complete(const ChatRequest& request) {
  ChatResponse resp = inner_.complete(request);
  fixture_.records.push_back({request_fingerprint(request), resp.content});
  std::ofstream out(fixture_path_, std::ios::trunc);
  if (!out) {
    throw TransportError("cannot write capture fixture: " + fixture_path_);
  }
  out << fixture_.to_json();
  return resp;
}

std::string CaptureBackend::identity() const {
  return "capture(" + inner_.identity() + ")->" + fixture_path_;
}

}  // namespace tabletop
