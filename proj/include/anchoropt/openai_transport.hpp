// Copyright 2026 The anchoropt Authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// OpenAI-compatible HTTP backend for the gateway.

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif

#include <cstdlib>
#include <string>
#include <utility>

#include "anchoropt/gateway.hpp"
#include "httplib.h"
#include "json.hpp"

namespace anchoropt {

struct ProviderConfig {
  std::string base_url = "https://api.openai.com/v1";
  std::string chat_model = "gpt-4o";
  std::string embedding_model = "all-MiniLM-L6-v2";
  std::string api_key;
  int timeout_seconds = 120;

  // ANCHOROPT_PROVIDER_URL, ANCHOROPT_CHAT_MODEL, ANCHOROPT_EMBEDDING_MODEL,
  // ANCHOROPT_API_KEY override whatever was configured.
  void apply_environment() {
    if (const char* v = std::getenv("ANCHOROPT_PROVIDER_URL")) base_url = v;
    if (const char* v = std::getenv("ANCHOROPT_CHAT_MODEL")) chat_model = v;
    if (const char* v = std::getenv("ANCHOROPT_EMBEDDING_MODEL")) embedding_model = v;
    if (const char* v = std::getenv("ANCHOROPT_API_KEY")) api_key = v;
  }
};

class OpenAiTransport : public Transport {
 public:
  explicit OpenAiTransport(ProviderConfig cfg) : cfg_(std::move(cfg)) {
    auto scheme_end = cfg_.base_url.find("://");
    if (scheme_end == std::string::npos)
      throw UsageError("provider URL must include a scheme: '" + cfg_.base_url + "'");
    auto path_start = cfg_.base_url.find('/', scheme_end + 3);
    origin_ = cfg_.base_url.substr(0, path_start);
    prefix_ = path_start == std::string::npos ? "" : cfg_.base_url.substr(path_start);
    while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
  }

  std::string complete(const CompletionRequest& req) override {
    nlohmann::json body;
    body["model"] = cfg_.chat_model;
    body["messages"] = nlohmann::json::array({{{"role", "user"}, {"content", req.prompt}}});
    body["temperature"] = req.temperature;
    body["max_tokens"] = req.max_tokens;
    auto reply = post("/chat/completions", body);
    try {
      return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw TransportError(std::string("malformed chat response: ") + e.what(), false);
    }
  }

  std::vector<double> embed(const std::string& text) override {
    nlohmann::json body;
    body["model"] = cfg_.embedding_model;
    body["input"] = text;
    auto reply = post("/embeddings", body);
    try {
      return reply.at("data").at(0).at("embedding").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
      throw TransportError(std::string("malformed embedding response: ") + e.what(), false);
    }
  }

 private:
  nlohmann::json post(const std::string& endpoint, const nlohmann::json& body) {
    httplib::Client client(origin_);
    client.set_connection_timeout(cfg_.timeout_seconds);
    client.set_read_timeout(cfg_.timeout_seconds);
    httplib::Headers headers;
    if (!cfg_.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.api_key);
    auto res = client.Post(prefix_ + endpoint, headers, body.dump(), "application/json");
    if (!res) throw TransportError("request to " + origin_ + prefix_ + endpoint + " failed: " +
                                   httplib::to_string(res.error()));
    if (res->status == 429 || res->status >= 500)
      throw TransportError("provider returned HTTP " + std::to_string(res->status));
    if (res->status != 200)
      throw TransportError("provider returned HTTP " + std::to_string(res->status) + ": " +
                               res->body.substr(0, 512),
                           false);
    try {
      return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::parse_error& e) {
      throw TransportError(std::string("provider reply is not JSON: ") + e.what(), false);
    }
  }

  ProviderConfig cfg_;
  std::string origin_;
  std::string prefix_;
};

}  // namespace anchoropt
