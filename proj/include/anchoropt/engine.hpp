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

// Iterative semantic correction: translate every anchor, reconstruct a
// description from each fragment, verify it against the original, and
// regenerate only the anchors that fail, until none fail or t_max passes.

#include <chrono>
#include <cstddef>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "anchoropt/errors.hpp"
#include "anchoropt/gateway.hpp"
#include "anchoropt/prompt_kit.hpp"
#include "anchoropt/schema.hpp"
#include "anchoropt/translator.hpp"
#include "anchoropt/verifier.hpp"

namespace anchoropt {

struct EngineConfig {
  int t_max = 5;
  VerifierConfig verifier;
  // Aligned anchors with untouched code are not re-reconstructed or
  // re-verified; this keeps |E| non-increasing.
  bool freeze_aligned = true;
  SamplingConfig sampling;

  void validate() const {
    if (t_max < 1) throw UsageError("t_max must be at least 1");
    verifier.validate();
  }
};

struct TraceEvent {
  int iteration = 0;
  std::size_t anchor_id = 0;
  std::string event;  // translated | reconstructed | verified | regenerated
  std::string detail;

  friend bool operator==(const TraceEvent&, const TraceEvent&) = default;
};

struct RunTrace {
  std::string verifier_method;
  int t_max = 0;
  // |E^(t)| for t = 1, 2, ... (one entry per verification pass)
  std::vector<std::size_t> error_set_sizes;
  std::vector<TraceEvent> anchor_events;
  std::size_t corrections_total = 0;
  // anchors still in the error set when t_max ran out
  std::vector<std::size_t> residual_errors;
  // seconds per stage; excluded from determinism comparisons
  std::map<std::string, double> wall_times;

  bool converged() const { return !error_set_sizes.empty() && error_set_sizes.back() == 0; }
  std::size_t iterations() const { return error_set_sizes.size(); }

  std::size_t count_events(std::string_view name) const {
    std::size_t n = 0;
    for (const auto& e : anchor_events) n += e.event == name;
    return n;
  }
};

inline Json to_json(const RunTrace& t, bool with_timings = true) {
  Json j = Json::object();
  j["verifier"] = t.verifier_method;
  j["t_max"] = t.t_max;
  j["error_set_sizes"] = t.error_set_sizes;
  j["corrections_total"] = t.corrections_total;
  j["converged"] = t.converged();
  j["residual_errors"] = t.residual_errors;
  Json events = Json::array();
  for (const auto& e : t.anchor_events) {
    Json ev = Json::object();
    ev["t"] = e.iteration;
    ev["anchor_id"] = e.anchor_id;
    ev["event"] = e.event;
    ev["detail"] = e.detail;
    events.push_back(std::move(ev));
  }
  j["anchor_events"] = std::move(events);
  if (with_timings) j["wall_times"] = t.wall_times;
  return j;
}

inline RunTrace trace_from_json(const Json& j) {
  RunTrace t;
  try {
    t.verifier_method = j.value("verifier", std::string());
    t.t_max = j.value("t_max", 0);
    t.error_set_sizes = j.at("error_set_sizes").get<std::vector<std::size_t>>();
    t.corrections_total = j.value("corrections_total", std::size_t{0});
    if (auto it = j.find("residual_errors"); it != j.end())
      t.residual_errors = it->get<std::vector<std::size_t>>();
    if (auto it = j.find("anchor_events"); it != j.end()) {
      for (const auto& ev : *it)
        t.anchor_events.push_back({ev.at("t").get<int>(), ev.at("anchor_id").get<std::size_t>(),
                                   ev.at("event").get<std::string>(),
                                   ev.value("detail", std::string())});
    }
    if (auto it = j.find("wall_times"); it != j.end())
      t.wall_times = it->get<std::map<std::string, double>>();
  } catch (const Json::exception& e) {
    throw FormatError(std::string("trace: ") + e.what());
  }
  return t;
}

inline RunTrace load_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open trace '" + path + "'");
  try {
    return trace_from_json(Json::parse(in));
  } catch (const Json::parse_error& e) {
    throw FormatError("trace '" + path + "' is not valid JSON: " + e.what());
  }
}

// iteration,error_count with one row per verification pass.
inline std::string trace_csv(const RunTrace& t) {
  std::ostringstream out;
  out << "iteration,error_count\n";
  for (std::size_t i = 0; i < t.error_set_sizes.size(); ++i)
    out << (i + 1) << ',' << t.error_set_sizes[i] << '\n';
  return out.str();
}

struct CandidateModel {
  std::vector<Fragment> simp_fragments;             // parameters then variables
  std::map<std::size_t, std::string> sem_fragments;  // anchor id -> code
  std::shared_ptr<const TargetDialect> dialect;

  friend bool operator==(const CandidateModel& a, const CandidateModel& b) {
    return a.simp_fragments == b.simp_fragments && a.sem_fragments == b.sem_fragments &&
           (a.dialect == b.dialect || (a.dialect && b.dialect && *a.dialect == *b.dialect));
  }
};

struct CorrectionResult {
  CandidateModel model;
  RunTrace trace;
  std::vector<Anchor> anchors;  // final anchor state, ids match the input
};

inline constexpr std::string_view kConstraintHeader = "CONSTRAINT:";

inline std::string reconstruct_prompt(const Anchor& anchor, const StructuredData& context,
                                      const TargetDialect& dialect, const PromptSet& prompts) {
  if (!anchor.code()) throw UsageError("anchor " + std::to_string(anchor.id()) + " has no code");
  auto [params, vars] = related_symbols(*anchor.code(), context);
  return prompts.reconstruct.render({{"description", problem_description(context)},
                                     {"solver", dialect.name},
                                     {"constraint", anchor.description()},
                                     {"constraint_code", *anchor.code()},
                                     {"params", parameter_listing(params)},
                                     {"vars", variable_listing(vars)}});
}

class CorrectionEngine {
 public:
  CorrectionEngine(std::shared_ptr<Gateway> gateway, TargetDialect dialect, EngineConfig cfg,
                   PromptSet prompts = {})
      : gateway_(std::move(gateway)),
        dialect_(std::make_shared<const TargetDialect>(std::move(dialect))),
        cfg_(cfg),
        prompts_(std::move(prompts)),
        verifier_(gateway_, cfg.verifier, prompts_) {
    cfg_.validate();
  }

  const EngineConfig& config() const noexcept { return cfg_; }
  const TargetDialect& dialect() const noexcept { return *dialect_; }

  std::string reconstruct_anchor(const Anchor& anchor, const StructuredData& context) {
    if (!anchor.code()) throw UsageError("anchor " + std::to_string(anchor.id()) + " has no code");
    CompletionRequest req{reconstruct_prompt(anchor, context, *dialect_, prompts_), 0.0,
                          cfg_.sampling.max_tokens, Stage::reconstruct};
    return complete_parsed(*gateway_, req, [](const std::string& reply) {
      auto text = parse_fenced(reply, kConstraintHeader);
      if (text.empty()) throw ParseError("empty reconstructed description");
      return text;
    });
  }

  CorrectionResult run(const StructuredData& s) {
    s.validate();
    CorrectionResult out;
    RunTrace& trace = out.trace;
    trace.verifier_method = std::string(to_string(cfg_.verifier.method));
    trace.t_max = cfg_.t_max;
    std::vector<Anchor>& anchors = out.anchors;
    anchors = s.anchors;

    for (auto& a : anchors) {
      auto code = stage("translate", 0, a, trace, [&] { return translate(a, s); });
      a.set_code(0, code, "translated");
      trace.anchor_events.push_back({0, a.id(), "translated", code});
    }

    std::vector<std::size_t> pending;
    for (const auto& a : anchors) pending.push_back(a.id());

    std::vector<std::size_t> errors;
    for (int t = 1; t <= cfg_.t_max; ++t) {
      std::vector<std::size_t> to_check;
      if (cfg_.freeze_aligned) {
        to_check = pending;
      } else {
        for (const auto& a : anchors) to_check.push_back(a.id());
      }

      errors.clear();
      for (std::size_t id : to_check) {
        Anchor& a = anchors[id];
        auto recon = stage("reconstruct", t, a, trace, [&] { return reconstruct_anchor(a, s); });
        a.set_reconstructed(t, recon);
        trace.anchor_events.push_back({t, id, "reconstructed", recon});
        auto verdict = stage("verify", t, a, trace,
                             [&] { return verifier_.verify(a.description(), recon); });
        a.apply_verdict(t, verdict.aligned);
        trace.anchor_events.push_back({t, id, "verified", verdict.raw});
        if (!verdict.aligned) errors.push_back(id);
      }
      trace.error_set_sizes.push_back(errors.size());
      if (errors.empty()) break;

      for (std::size_t id : errors) {
        Anchor& a = anchors[id];
        auto code = stage("translate", t, a, trace, [&] { return translate(a, s); });
        a.set_code(t, code, "regenerated");
        trace.anchor_events.push_back({t, id, "regenerated", code});
        ++trace.corrections_total;
      }
      pending = errors;
    }
    trace.residual_errors = errors;

    out.model.simp_fragments = render_simple(s, *dialect_);
    for (const auto& a : anchors) out.model.sem_fragments[a.id()] = *a.code();
    out.model.dialect = dialect_;
    return out;
  }

 private:
  std::string translate(const Anchor& a, const StructuredData& s) {
    return translate_anchor(*gateway_, a, s, *dialect_, prompts_, cfg_.sampling);
  }

  // Times the call and wraps library errors with (stage, t, anchor).
  template <typename F>
  auto stage(const char* name, int t, const Anchor& a, RunTrace& trace, F&& call)
      -> decltype(call()) {
    auto start = std::chrono::steady_clock::now();
    auto account = [&] {
      trace.wall_times[name] +=
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    };
    try {
      auto result = call();
      account();
      return result;
    } catch (const UsageError&) {
      throw;
    } catch (const StageError&) {
      throw;
    } catch (const Error& e) {
      account();
      throw StageError(name, t, static_cast<long>(a.id()), e.what());
    }
  }

  std::shared_ptr<Gateway> gateway_;
  std::shared_ptr<const TargetDialect> dialect_;
  EngineConfig cfg_;
  PromptSet prompts_;
  Verifier verifier_;
};

}  // namespace anchoropt
