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

// Chat-completion and embedding access behind one interface, with a
// JSON-lines cassette for deterministic record/replay.

#include <openssl/evp.h>

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include "anchoropt/errors.hpp"
#include "json.hpp"

namespace anchoropt {

enum class Stage { extract, translate, reconstruct, verify, debug };

inline std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::extract: return "extract";
    case Stage::translate: return "translate";
    case Stage::reconstruct: return "reconstruct";
    case Stage::verify: return "verify";
    case Stage::debug: return "debug";
  }
  return "extract";
}

inline Stage parse_stage(std::string_view s) {
  if (s == "extract") return Stage::extract;
  if (s == "translate") return Stage::translate;
  if (s == "reconstruct") return Stage::reconstruct;
  if (s == "verify") return Stage::verify;
  if (s == "debug") return Stage::debug;
  throw UsageError("unknown stage tag '" + std::string(s) + "'");
}

// Cassette-only tag used for embedding calls.
inline constexpr std::string_view kEmbedTag = "embed";

struct CompletionRequest {
  std::string prompt;
  double temperature = 0.0;
  int max_tokens = 4096;
  Stage tag = Stage::extract;

  void validate() const {
    if (prompt.empty()) throw UsageError("completion prompt is empty");
    if (!(temperature >= 0.0)) throw UsageError("temperature must be >= 0");
    if (max_tokens <= 0) throw UsageError("max_tokens must be positive");
  }
};

class EmbeddingVector {
 public:
  EmbeddingVector() = default;
  explicit EmbeddingVector(std::vector<double> values) : values_(std::move(values)) {
    if (values_.empty()) throw UsageError("embedding vector must have positive dimension");
    for (double v : values_)
      if (!std::isfinite(v)) throw UsageError("embedding vector has a non-finite component");
  }

  const std::vector<double>& values() const noexcept { return values_; }
  std::size_t dim() const noexcept { return values_.size(); }

  friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;

 private:
  std::vector<double> values_;
};

// CRLF/CR become LF; trailing blanks on each line and at the end are dropped.
inline std::string normalize_prompt(std::string_view text) {
  std::string unified;
  unified.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '\r') {
      unified.push_back('\n');
      if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
    } else {
      unified.push_back(text[i]);
    }
  }
  std::string out;
  out.reserve(unified.size());
  std::size_t start = 0;
  while (start <= unified.size()) {
    std::size_t end = unified.find('\n', start);
    if (end == std::string::npos) end = unified.size();
    std::size_t last = end;
    while (last > start && (unified[last - 1] == ' ' || unified[last - 1] == '\t')) --last;
    out.append(unified, start, last - start);
    if (end == unified.size()) break;
    out.push_back('\n');
    start = end + 1;
  }
  while (!out.empty() && (out.back() == '\n' || out.back() == ' ' || out.back() == '\t'))
    out.pop_back();
  return out;
}

inline std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error("sha256 digest failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xf]);
  }
  return out;
}

inline std::string request_fingerprint(std::string_view tag, std::string_view prompt) {
  std::string key(tag);
  key.push_back('\n');
  key += normalize_prompt(prompt);
  return sha256_hex(key);
}

struct CassetteEntry {
  std::string fingerprint;
  std::string tag;
  std::string prompt_sha;
  std::string response;

  friend bool operator==(const CassetteEntry&, const CassetteEntry&) = default;
};

inline CassetteEntry make_entry(std::string_view tag, std::string_view prompt,
                                std::string response) {
  return {request_fingerprint(tag, prompt), std::string(tag),
          sha256_hex(normalize_prompt(prompt)), std::move(response)};
}

// Ordered interaction log. Appends are serialized; when a backing file is
// attached each append is also written through as one JSON line.
class Cassette {
 public:
  Cassette() = default;

  static Cassette load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open cassette '" + path + "'");
    Cassette c;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        auto j = nlohmann::json::parse(line);
        c.entries_.push_back({j.at("fingerprint").get<std::string>(), j.at("tag").get<std::string>(),
                              j.value("prompt_sha", std::string()),
                              j.at("response").get<std::string>()});
      } catch (const nlohmann::json::exception& e) {
        throw FormatError("cassette '" + path + "' line " + std::to_string(lineno) + ": " +
                          e.what());
      }
    }
    return c;
  }

  static std::string entry_line(const CassetteEntry& e) {
    nlohmann::ordered_json j;
    j["fingerprint"] = e.fingerprint;
    j["tag"] = e.tag;
    j["prompt_sha"] = e.prompt_sha;
    j["response"] = e.response;
    return j.dump();
  }

  void save(const std::string& path) const {
    std::lock_guard lock(mutex_);
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write cassette '" + path + "'");
    for (const auto& e : entries_) out << entry_line(e) << '\n';
  }

  // Subsequent appends are written through to path.
  void attach_file(std::string path) {
    std::lock_guard lock(mutex_);
    write_through_ = std::move(path);
  }

  void append(CassetteEntry entry) {
    std::lock_guard lock(mutex_);
    if (write_through_) {
      std::ofstream out(*write_through_, std::ios::app);
      if (!out) throw IoError("cannot append to cassette '" + *write_through_ + "'");
      out << entry_line(entry) << '\n';
    }
    entries_.push_back(std::move(entry));
  }

  std::vector<CassetteEntry> entries() const {
    std::lock_guard lock(mutex_);
    return entries_;
  }

  std::size_t size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
  }

  Cassette(const Cassette& other) : entries_(other.entries()) {}
  Cassette& operator=(const Cassette& other) {
    if (this != &other) {
      auto copy = other.entries();
      std::lock_guard lock(mutex_);
      entries_ = std::move(copy);
    }
    return *this;
  }

 private:
  mutable std::mutex mutex_;
  std::vector<CassetteEntry> entries_;
  std::optional<std::string> write_through_;
};

// Provider backend. Implementations throw TransportError on failure.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual std::string complete(const CompletionRequest& req) = 0;
  virtual std::vector<double> embed(const std::string& text) = 0;
};

enum class GatewayMode { record, replay, live };

inline GatewayMode parse_gateway_mode(std::string_view s) {
  if (s == "record") return GatewayMode::record;
  if (s == "replay") return GatewayMode::replay;
  if (s == "live") return GatewayMode::live;
  throw UsageError("unknown gateway mode '" + std::string(s) + "'");
}

struct RetryPolicy {
  int attempts = 3;
  std::chrono::milliseconds base_delay{500};
  double multiplier = 2.0;
};

struct SamplingConfig {
  // applies to extract, translate and debug; reconstruct and verify use 0
  double temperature = 0.7;
  int max_tokens = 4096;
};

inline double stage_temperature(Stage stage, const SamplingConfig& cfg) {
  return (stage == Stage::verify || stage == Stage::reconstruct) ? 0.0 : cfg.temperature;
}

class Gateway {
 public:
  // Replay over a snapshot of the cassette; no transport is ever touched.
  static std::shared_ptr<Gateway> replay(std::shared_ptr<const Cassette> cassette) {
    if (!cassette) throw UsageError("replay mode requires a cassette");
    return std::shared_ptr<Gateway>(new Gateway(GatewayMode::replay, std::move(cassette),
                                                nullptr, nullptr, {}));
  }

  static std::shared_ptr<Gateway> live(std::shared_ptr<Transport> transport,
                                       RetryPolicy retry = {}) {
    if (!transport) throw UsageError("live mode requires a transport");
    return std::shared_ptr<Gateway>(
        new Gateway(GatewayMode::live, nullptr, nullptr, std::move(transport), retry));
  }

  static std::shared_ptr<Gateway> record(std::shared_ptr<Transport> transport,
                                         std::shared_ptr<Cassette> sink, RetryPolicy retry = {}) {
    if (!transport) throw UsageError("record mode requires a transport");
    if (!sink) throw UsageError("record mode requires a cassette");
    return std::shared_ptr<Gateway>(
        new Gateway(GatewayMode::record, nullptr, std::move(sink), std::move(transport), retry));
  }

  // Mode-selected construction; replay ignores the transport entirely.
  static std::shared_ptr<Gateway> create(GatewayMode mode, std::shared_ptr<Cassette> cassette,
                                         std::shared_ptr<Transport> transport,
                                         RetryPolicy retry = {}) {
    switch (mode) {
      case GatewayMode::replay: return replay(std::move(cassette));
      case GatewayMode::record: return record(std::move(transport), std::move(cassette), retry);
      case GatewayMode::live: return live(std::move(transport), retry);
    }
    throw UsageError("unknown gateway mode");
  }

  GatewayMode mode() const noexcept { return mode_; }

  // Fresh replay cursors over the same recorded entries; other modes share
  // the transport and sink.
  std::shared_ptr<Gateway> fork() const {
    return std::shared_ptr<Gateway>(new Gateway(mode_, source_, sink_, transport_, retry_));
  }

  std::string complete(const CompletionRequest& req) {
    req.validate();
    const auto tag = to_string(req.tag);
    if (mode_ == GatewayMode::replay) return serve(tag, req.prompt);
    std::string text = with_retry([&] { return transport_->complete(req); });
    if (mode_ == GatewayMode::record) sink_->append(make_entry(tag, req.prompt, text));
    return text;
  }

  EmbeddingVector embed(const std::string& text) {
    if (text.empty()) throw UsageError("cannot embed empty text");
    if (mode_ == GatewayMode::replay) {
      std::string raw = serve(kEmbedTag, text);
      try {
        return EmbeddingVector(nlohmann::json::parse(raw).get<std::vector<double>>());
      } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("cassette embedding is not a numeric array: ") + e.what());
      }
    }
    auto values = with_retry([&] { return transport_->embed(text); });
    EmbeddingVector vec(std::move(values));
    if (mode_ == GatewayMode::record)
      sink_->append(make_entry(kEmbedTag, text, nlohmann::json(vec.values()).dump()));
    return vec;
  }

 private:
  struct ReplayGroup {
    std::vector<std::string> responses;
    std::atomic<std::size_t> cursor{0};
  };

  Gateway(GatewayMode mode, std::shared_ptr<const Cassette> source, std::shared_ptr<Cassette> sink,
          std::shared_ptr<Transport> transport, RetryPolicy retry)
      : mode_(mode),
        source_(std::move(source)),
        sink_(std::move(sink)),
        transport_(std::move(transport)),
        retry_(retry) {
    if (source_) {
      for (auto& e : source_->entries()) {
        auto& slot = groups_[e.fingerprint];
        if (!slot) slot = std::make_unique<ReplayGroup>();
        slot->responses.push_back(std::move(e.response));
      }
    }
  }

  // k-th request for a fingerprint gets the k-th recorded response; the
  // last one repeats once the queue is exhausted.
  std::string serve(std::string_view tag, std::string_view prompt) const {
    const std::string fp = request_fingerprint(tag, prompt);
    auto it = groups_.find(fp);
    if (it == groups_.end()) throw ReplayMiss(std::string(tag), fp);
    auto& group = *it->second;
    std::size_t k = group.cursor.fetch_add(1, std::memory_order_relaxed);
    if (k >= group.responses.size()) k = group.responses.size() - 1;
    return group.responses[k];
  }

  template <typename F>
  auto with_retry(F&& call) -> decltype(call()) {
    auto delay = retry_.base_delay;
    for (int attempt = 1;; ++attempt) {
      try {
        return call();
      } catch (const TransportError& e) {
        if (!e.transient() || attempt >= retry_.attempts)
          throw TransportError("transport failed after " + std::to_string(attempt) +
                                   " attempt(s): " + e.what(),
                               false);
        std::this_thread::sleep_for(delay);
        delay = std::chrono::milliseconds(
            static_cast<long long>(static_cast<double>(delay.count()) * retry_.multiplier));
      }
    }
  }

  GatewayMode mode_;
  std::shared_ptr<const Cassette> source_;
  std::shared_ptr<Cassette> sink_;
  std::shared_ptr<Transport> transport_;
  RetryPolicy retry_;
  std::unordered_map<std::string, std::unique_ptr<ReplayGroup>> groups_;
};

}  // namespace anchoropt
