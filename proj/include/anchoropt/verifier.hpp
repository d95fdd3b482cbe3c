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

// Consistency check between an original anchor description and the
// description reconstructed from its code: LLM judge or embedding cosine.

#include <cmath>
#include <cstdio>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>

#include "anchoropt/errors.hpp"
#include "anchoropt/gateway.hpp"
#include "anchoropt/prompt_kit.hpp"

namespace anchoropt {

enum class VerifyMethod { llm, similarity };

inline std::string_view to_string(VerifyMethod m) {
  return m == VerifyMethod::llm ? "llm" : "similarity";
}

inline VerifyMethod parse_verify_method(std::string_view s) {
  if (s == "llm") return VerifyMethod::llm;
  if (s == "similarity" || s == "sim") return VerifyMethod::similarity;
  throw UsageError("unknown verifier method '" + std::string(s) + "'");
}

struct Verdict {
  bool aligned = false;
  VerifyMethod method = VerifyMethod::llm;
  std::optional<double> score;  // similarity only
  std::string raw;              // "YES"/"NO" or the rendered cosine

  friend bool operator==(const Verdict&, const Verdict&) = default;
};

struct VerifierConfig {
  VerifyMethod method = VerifyMethod::llm;
  double tau = 0.75;

  void validate() const {
    if (method == VerifyMethod::similarity && !(tau >= 0.0 && tau <= 1.0))
      throw UsageError("verifier tau must lie in [0, 1]");
  }
};

inline double cosine(const EmbeddingVector& u, const EmbeddingVector& v) {
  if (u.dim() != v.dim())
    throw DimensionMismatch("cosine of vectors with dimensions " + std::to_string(u.dim()) +
                            " and " + std::to_string(v.dim()));
  double dot = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < u.dim(); ++i) {
    dot += u.values()[i] * v.values()[i];
    uu += u.values()[i] * u.values()[i];
    vv += v.values()[i] * v.values()[i];
  }
  if (uu == 0.0 || vv == 0.0) throw ZeroVector("cosine of a zero vector is undefined");
  double c = dot / (std::sqrt(uu) * std::sqrt(vv));
  return c > 1.0 ? 1.0 : (c < -1.0 ? -1.0 : c);
}

inline constexpr std::string_view kAnswerHeader = "ANSWER:";

inline std::string verify_prompt(std::string_view original, std::string_view reconstructed,
                                 const PromptSet& prompts) {
  return prompts.verify.render(
      {{"constraint", std::string(original)}, {"constraint_new", std::string(reconstructed)}});
}

class Verifier {
 public:
  Verifier(std::shared_ptr<Gateway> gateway, VerifierConfig cfg, PromptSet prompts = {})
      : gateway_(std::move(gateway)), cfg_(cfg), prompts_(std::move(prompts)) {
    if (!gateway_) throw UsageError("verifier needs a gateway");
    cfg_.validate();
  }

  const VerifierConfig& config() const noexcept { return cfg_; }

  Verdict verify(std::string_view original, std::string_view reconstructed) {
    return cfg_.method == VerifyMethod::llm ? verify_llm(original, reconstructed)
                                            : verify_sim(original, reconstructed, cfg_.tau);
  }

  // A judge reply that is still malformed after one re-request is an error,
  // never an implicit NO.
  Verdict verify_llm(std::string_view original, std::string_view reconstructed) {
    require_text(original, reconstructed);
    CompletionRequest req{verify_prompt(original, reconstructed, prompts_), 0.0, 1024,
                          Stage::verify};
    bool aligned = complete_parsed(*gateway_, req, [](const std::string& reply) {
      return parse_yes_no(parse_fenced(reply, kAnswerHeader));
    });
    return {aligned, VerifyMethod::llm, std::nullopt, aligned ? "YES" : "NO"};
  }

  Verdict verify_sim(std::string_view original, std::string_view reconstructed, double tau) {
    require_text(original, reconstructed);
    if (!(tau >= 0.0 && tau <= 1.0)) throw UsageError("tau must lie in [0, 1]");
    double score = cosine(embedding(std::string(original)), embedding(std::string(reconstructed)));
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", score);
    return {score >= tau, VerifyMethod::similarity, score, buf};
  }

  // Cached per distinct text for the lifetime of this verifier.
  EmbeddingVector embedding(const std::string& text) {
    {
      std::lock_guard lock(cache_mutex_);
      if (auto it = cache_.find(text); it != cache_.end()) return it->second;
    }
    auto vec = gateway_->embed(text);
    std::lock_guard lock(cache_mutex_);
    return cache_.emplace(text, std::move(vec)).first->second;
  }

 private:
  static void require_text(std::string_view a, std::string_view b) {
    if (a.empty() || b.empty()) throw UsageError("verification needs two non-empty texts");
  }

  std::shared_ptr<Gateway> gateway_;
  VerifierConfig cfg_;
  PromptSet prompts_;
  std::mutex cache_mutex_;
  std::unordered_map<std::string, EmbeddingVector> cache_;
};

}  // namespace anchoropt
