#pragma once

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "consult/digest.hpp"

namespace consult {

struct SamplingParams {
  double temperature = 0.7;
  int max_tokens = 512;
  std::optional<int> seed;

  bool operator==(const SamplingParams&) const = default;
};

struct ModelRef {
  std::string model;
  SamplingParams params;

  bool operator==(const ModelRef&) const = default;
};

struct ChatMessage {
  std::string role;  // system | assistant | user
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};

struct GatewayConfig {
  std::string base_url;                         // e.g. http://localhost:8080
  std::string api_key_env = "CONSULT_API_KEY";  // env var holding the key
  std::string chat_path = "/v1/chat/completions";
  int max_retries = 3;
  int backoff_ms = 1000;  // doubled per attempt: 1s, 2s, 4s by default
  int requests_per_minute = 0;  // 0 = unlimited
  std::string cache_dir;
  bool replay = false;  // serve cache hits only; miss is an error
};

class GatewayError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Process-wide count of HTTP requests actually sent; offline runs assert
// this stays at zero.
inline std::atomic<long>& global_network_calls() {
  static std::atomic<long> count{0};
  return count;
}

class Gateway {
 public:
  explicit Gateway(GatewayConfig config) : config_(std::move(config)) {}

  std::string chat(const ModelRef& ref,
                   const std::vector<ChatMessage>& messages) {
    if (messages.empty()) throw GatewayError("chat called with no messages");
    total_calls_++;
    nlohmann::json request = request_json(ref, messages);
    std::string key = digest_hex(request.dump());

    if (!config_.cache_dir.empty()) {
      auto cached = cache_lookup(key);
      if (cached) return *cached;
    }
    if (config_.replay) {
      throw GatewayError("cache miss in replay mode (key " + key + ")");
    }

    std::string response = send_with_retries(ref, request);
    if (!config_.cache_dir.empty()) cache_store(key, request, response);
    return response;
  }

  long total_calls() const { return total_calls_.load(); }
  long network_calls() const { return network_calls_.load(); }
  const GatewayConfig& config() const { return config_; }

 private:
  static nlohmann::json request_json(const ModelRef& ref,
                                     const std::vector<ChatMessage>& messages) {
    nlohmann::json msgs = nlohmann::json::array();
    for (const auto& m : messages)
      msgs.push_back({{"role", m.role}, {"content", m.content}});
    nlohmann::json body{{"model", ref.model},
                        {"messages", msgs},
                        {"temperature", ref.params.temperature},
                        {"max_tokens", ref.params.max_tokens}};
    if (ref.params.seed) body["seed"] = *ref.params.seed;
    return body;
  }

  std::filesystem::path cache_path(const std::string& key) const {
    return std::filesystem::path(config_.cache_dir) / key.substr(0, 2) /
           (key + ".json");
  }

  std::optional<std::string> cache_lookup(const std::string& key) const {
    std::ifstream in(cache_path(key));
    if (!in) return std::nullopt;
    nlohmann::json entry = nlohmann::json::parse(in);
    return entry.at("response").get<std::string>();
  }

  void cache_store(const std::string& key, const nlohmann::json& request,
                   const std::string& response) const {
    auto path = cache_path(key);
    std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
      std::ofstream out(tmp, std::ios::trunc);
      out << nlohmann::json{{"request", request}, {"response", response}}
                 .dump();
    }
    std::filesystem::rename(tmp, path);
  }

  void rate_limit(const std::string& model) {
    if (config_.requests_per_minute <= 0) return;
    using clock = std::chrono::steady_clock;
    for (;;) {
      clock::duration wait{};
      {
        std::lock_guard<std::mutex> lock(rate_mutex_);
        auto& window = request_times_[model];
        auto now = clock::now();
        while (!window.empty() && now - window.front() > std::chrono::minutes(1))
          window.pop_front();
        if (static_cast<int>(window.size()) < config_.requests_per_minute) {
          window.push_back(now);
          return;
        }
        wait = window.front() + std::chrono::minutes(1) - now;
      }
      std::this_thread::sleep_for(wait);
    }
  }

  std::string send_with_retries(const ModelRef& ref,
                                const nlohmann::json& request) {
    std::string last_error;
    for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
      if (attempt > 0) {
        std::this_thread::sleep_for(
            std::chrono::milliseconds(config_.backoff_ms << (attempt - 1)));
      }
      rate_limit(ref.model);
      try {
        return send_once(request);
      } catch (const std::exception& e) {
        last_error = e.what();
      }
    }
    throw GatewayError("gateway request failed after " +
                       std::to_string(config_.max_retries) +
                       " retries: " + last_error);
  }

  std::string send_once(const nlohmann::json& request) {
    network_calls_++;
    global_network_calls()++;
    httplib::Client client(config_.base_url);
    client.set_read_timeout(120, 0);
    httplib::Headers headers;
    if (!config_.api_key_env.empty()) {
      if (const char* key = std::getenv(config_.api_key_env.c_str()))
        headers.emplace("Authorization", std::string("Bearer ") + key);
    }
    auto res = client.Post(config_.chat_path, headers, request.dump(),
                           "application/json");
    if (!res)
      throw std::runtime_error("connection failed: " +
                               httplib::to_string(res.error()));
    if (res->status != 200)
      throw std::runtime_error("HTTP " + std::to_string(res->status) + ": " +
                               res->body);
    nlohmann::json body = nlohmann::json::parse(res->body);
    return body.at("choices").at(0).at("message").at("content")
        .get<std::string>();
  }

  GatewayConfig config_;
  std::atomic<long> total_calls_{0};
  std::atomic<long> network_calls_{0};
  std::mutex rate_mutex_;
  std::map<std::string, std::deque<std::chrono::steady_clock::time_point>>
      request_times_;
};

}  // namespace consult
