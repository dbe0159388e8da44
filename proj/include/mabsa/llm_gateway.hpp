#pragma once

// Client for OpenAI-compatible chat-completion endpoints.
//
// Link against mabsa_net (httplib with OpenSSL, threads). One Gateway may be
// shared by many threads; at most max_parallel requests are in flight.

#include <httplib.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <semaphore>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include <json.hpp>

#include "mabsa/encoding.hpp"
#include "mabsa/error.hpp"
#include "mabsa/promptkit.hpp"
#include "mabsa/strings.hpp"

namespace mabsa::gateway {

enum class Errc { AuthMissing, RemoteError, RetriesExhausted, ImageUnreadable };

inline const char* to_string(Errc e) {
  switch (e) {
    case Errc::AuthMissing: return "AuthMissing";
    case Errc::RemoteError: return "RemoteError";
    case Errc::RetriesExhausted: return "RetriesExhausted";
    case Errc::ImageUnreadable: return "ImageUnreadable";
  }
  return "Unknown";
}

using Error = CategorizedError<Errc>;

struct GatewayConfig {
  std::string endpoint_url = "http://127.0.0.1:8000/v1/chat/completions";
  std::string model_name;
  std::string api_key_env = "MABSA_API_KEY";
  double temperature = 0.0;
  int max_output_tokens = 256;
  double request_timeout = 120.0;  // seconds
  int max_retries = 3;
  int max_parallel = 4;
  double backoff_base = 1.0;  // seconds
  double backoff_factor = 2.0;
  std::optional<std::filesystem::path> audit_log;
};

struct ChatReply {
  std::string text;
  std::optional<long long> prompt_token_count;
  std::optional<long long> completion_token_count;
  double latency = 0.0;  // seconds, final attempt only
  int attempt = 1;
};

using BatchItem = std::variant<ChatReply, Error>;

inline std::string mime_type(const std::filesystem::path& p) {
  const auto ext = text::to_lower_ascii(p.extension().string());
  if (ext == ".png") return "image/png";
  if (ext == ".gif") return "image/gif";
  if (ext == ".webp") return "image/webp";
  if (ext == ".bmp") return "image/bmp";
  return "image/jpeg";
}

// Wire body for one request. Images are read and inlined as data URLs, so
// ImageUnreadable surfaces here, before anything touches the network.
inline nlohmann::json request_body(const GatewayConfig& cfg, const prompt::MessageSequence& seq) {
  using nlohmann::json;
  json messages = json::array();
  for (const auto& m : seq.messages) {
    const bool has_image = std::any_of(m.parts.begin(), m.parts.end(), [](const auto& p) {
      return p.kind == prompt::MessagePart::Kind::ImageRef;
    });
    json msg{{"role", prompt::to_string(m.role)}};
    if (!has_image) {
      msg["content"] = m.flat_text();
    } else {
      json parts = json::array();
      for (const auto& p : m.parts) {
        if (p.kind == prompt::MessagePart::Kind::Text) {
          parts.push_back({{"type", "text"}, {"text", p.content}});
          continue;
        }
        const auto bytes = encoding::read_file(p.content);
        if (!bytes || bytes->empty()) throw Error(Errc::ImageUnreadable, p.content);
        parts.push_back({{"type", "image_url"},
                         {"image_url", {{"url", "data:" + mime_type(p.content) + ";base64," + encoding::base64(*bytes)}}}});
      }
      msg["content"] = std::move(parts);
    }
    messages.push_back(std::move(msg));
  }
  return json{{"model", cfg.model_name},
              {"messages", std::move(messages)},
              {"temperature", cfg.temperature},
              {"max_tokens", cfg.max_output_tokens}};
}

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

inline Endpoint split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  const auto host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
  const auto slash = url.find('/', host_start);
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}

inline bool is_transient(int status) { return status == 408 || status == 429 || status >= 500; }

class Gateway {
 public:
  explicit Gateway(GatewayConfig cfg)
      : cfg_(std::move(cfg)), slots_(std::max(1, cfg_.max_parallel)), rng_(std::random_device{}()) {}

  const GatewayConfig& config() const { return cfg_; }

  ChatReply chat(const prompt::MessageSequence& seq) {
    const char* key = std::getenv(cfg_.api_key_env.c_str());
    if (!key || !*key) throw Error(Errc::AuthMissing, "environment variable " + cfg_.api_key_env + " is not set");
    const std::string body = request_body(cfg_, seq).dump();
    const auto ep = split_url(cfg_.endpoint_url);

    std::string last_failure;
    for (int attempt = 1; attempt <= cfg_.max_retries + 1; ++attempt) {
      if (attempt > 1) std::this_thread::sleep_for(backoff(attempt - 1));
      std::optional<httplib::Result> res;
      const auto t0 = std::chrono::steady_clock::now();
      {
        slots_.acquire();
        struct Release {
          std::counting_semaphore<>& s;
          ~Release() { s.release(); }
        } release{slots_};
        httplib::Client cli(ep.origin);
        const auto timeout = std::chrono::milliseconds(static_cast<long long>(cfg_.request_timeout * 1000));
        cli.set_connection_timeout(timeout);
        cli.set_read_timeout(timeout);
        cli.set_write_timeout(timeout);
        res.emplace(cli.Post(ep.path, httplib::Headers{{"Authorization", std::string("Bearer ") + key}}, body,
                       "application/json"));
      }
      const double latency = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

      if (!*res) {
        last_failure = "transport error: " + httplib::to_string(res->error());
        audit(attempt, body, std::nullopt, last_failure, key);
        continue;
      }
      const auto& r = **res;
      audit(attempt, body, r.status, r.body, key);
      if (is_transient(r.status)) {
        last_failure = "HTTP " + std::to_string(r.status);
        continue;
      }
      if (r.status < 200 || r.status >= 300) {
        throw Error(Errc::RemoteError, "HTTP " + std::to_string(r.status) + ": " + r.body.substr(0, 200));
      }
      return decode(r.body, latency, attempt);
    }
    throw Error(Errc::RetriesExhausted,
                std::to_string(cfg_.max_retries + 1) + " attempts, last failure: " + last_failure);
  }

  // Results are in input order; a failed item carries its error.
  std::vector<BatchItem> chat_batch(const std::vector<prompt::MessageSequence>& seqs) {
    std::vector<std::optional<BatchItem>> slots(seqs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t i; (i = next.fetch_add(1)) < seqs.size();) {
        try {
          slots[i].emplace(chat(seqs[i]));
        } catch (const Error& e) {
          slots[i].emplace(e);
        } catch (const std::exception& e) {
          slots[i].emplace(Error(Errc::RemoteError, e.what()));
        }
      }
    };
    const auto n = std::min<std::size_t>(seqs.size(), static_cast<std::size_t>(std::max(1, cfg_.max_parallel)));
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
    pool.clear();
    std::vector<BatchItem> out;
    out.reserve(seqs.size());
    for (auto& s : slots) out.push_back(std::move(*s));
    return out;
  }

 private:
  std::chrono::milliseconds backoff(int retry) {
    double jitter;
    {
      std::lock_guard lock(rng_mu_);
      jitter = std::uniform_real_distribution<double>(0.0, 0.25)(rng_);
    }
    const double s = cfg_.backoff_base * std::pow(cfg_.backoff_factor, retry - 1) * (1.0 + jitter);
    return std::chrono::milliseconds(static_cast<long long>(s * 1000));
  }

  ChatReply decode(const std::string& payload, double latency, int attempt) const {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(payload);
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::RemoteError, std::string("response is not JSON: ") + e.what());
    }
    const auto* content = j.contains("choices") && j["choices"].is_array() && !j["choices"].empty()
                              ? &j["choices"][0]["message"]["content"]
                              : nullptr;
    ChatReply reply;
    if (content && content->is_string()) {
      reply.text = content->get<std::string>();
    } else if (content && content->is_array()) {
      for (const auto& part : *content) {
        if (part.value("type", "") == "text") reply.text += part.value("text", "");
      }
    } else {
      throw Error(Errc::RemoteError, "response has no choices[0].message.content");
    }
    if (j.contains("usage") && j["usage"].is_object()) {
      const auto& u = j["usage"];
      if (u.contains("prompt_tokens") && u["prompt_tokens"].is_number_integer())
        reply.prompt_token_count = u["prompt_tokens"].get<long long>();
      if (u.contains("completion_tokens") && u["completion_tokens"].is_number_integer())
        reply.completion_token_count = u["completion_tokens"].get<long long>();
    }
    reply.latency = latency;
    reply.attempt = attempt;
    return reply;
  }

  // Base64 image payloads are elided and the key never appears in the log.
  void audit(int attempt, const std::string& body, std::optional<int> status, const std::string& response,
             const std::string& key) {
    if (!cfg_.audit_log) return;
    auto req = nlohmann::json::parse(body);
    for (auto& m : req["messages"]) {
      if (!m["content"].is_array()) continue;
      for (auto& p : m["content"]) {
        if (p.value("type", "") == "image_url") p["image_url"]["url"] = "<elided>";
      }
    }
    nlohmann::json line{{"endpoint", cfg_.endpoint_url},
                        {"attempt", attempt},
                        {"request", std::move(req)},
                        {"status", status ? nlohmann::json(*status) : nlohmann::json(nullptr)},
                        {"response", response}};
    auto text = line.dump();
    for (std::size_t pos; !key.empty() && (pos = text.find(key)) != std::string::npos;) {
      text.replace(pos, key.size(), "<redacted>");
    }
    std::lock_guard lock(audit_mu_);
    std::ofstream(*cfg_.audit_log, std::ios::app) << text << '\n';
  }

  GatewayConfig cfg_;
  std::counting_semaphore<> slots_;
  std::mutex rng_mu_;
  std::mt19937_64 rng_;
  std::mutex audit_mu_;
};

inline ChatReply chat(const GatewayConfig& cfg, const prompt::MessageSequence& seq) { return Gateway(cfg).chat(seq); }

inline std::vector<BatchItem> chat_batch(const GatewayConfig& cfg, const std::vector<prompt::MessageSequence>& seqs) {
  return Gateway(cfg).chat_batch(seqs);
}

}  // namespace mabsa::gateway
