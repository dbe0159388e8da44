#pragma once

// In-process chat-completions server. A script maps each request body to
// (status, assistant text); the server counts requests and tracks the peak
// number of concurrently handled requests.

#include <httplib.h>

#include <atomic>
#include <chrono>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

namespace mock {

struct Scripted {
  int status = 200;
  std::string content;
};

using Script = std::function<Scripted(const nlohmann::json& request, int call_index)>;

inline std::string completion_body(const std::string& content) {
  return nlohmann::json{{"choices", {{{"index", 0}, {"message", {{"role", "assistant"}, {"content", content}}}}}},
                        {"usage", {{"prompt_tokens", 11}, {"completion_tokens", 7}}}}
      .dump();
}

// Text of the last user message with image parts dropped.
inline std::string user_text(const nlohmann::json& request) {
  const auto& content = request["messages"].back()["content"];
  if (content.is_string()) return content.get<std::string>();
  std::string out;
  for (const auto& p : content) {
    if (p["type"] == "text") out += p["text"].get<std::string>();
  }
  return out;
}

class Endpoint {
 public:
  explicit Endpoint(Script script, std::chrono::milliseconds delay = std::chrono::milliseconds(0))
      : script_(std::move(script)), delay_(delay) {
    server_.new_task_queue = [] { return new httplib::ThreadPool(16); };
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      const int now = ++in_flight_;
      for (int peak = peak_.load(); now > peak && !peak_.compare_exchange_weak(peak, now);) {
      }
      const int index = calls_++;
      {
        std::lock_guard lock(mu_);
        auth_headers_.push_back(req.get_header_value("Authorization"));
      }
      if (delay_.count() > 0) std::this_thread::sleep_for(delay_);
      const auto out = script_(nlohmann::json::parse(req.body), index);
      res.status = out.status;
      res.set_content(out.status == 200 ? completion_body(out.content) : out.content, "application/json");
      --in_flight_;
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~Endpoint() {
    server_.stop();
    thread_.join();
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions"; }
  int calls() const { return calls_.load(); }
  int peak_in_flight() const { return peak_.load(); }
  std::vector<std::string> auth_headers() const {
    std::lock_guard lock(mu_);
    return auth_headers_;
  }

 private:
  Script script_;
  std::chrono::milliseconds delay_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  std::atomic<int> in_flight_{0};
  std::atomic<int> peak_{0};
  std::atomic<int> calls_{0};
  mutable std::mutex mu_;
  std::vector<std::string> auth_headers_;
};

inline Script constant(std::string content) {
  return [content = std::move(content)](const nlohmann::json&, int) { return Scripted{200, content}; };
}

}  // namespace mock
