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

// Shared fixtures for the test suites: the cutting-stock instance, a
// builder that scripts cassettes by rendering the real prompts, stub
// executors/transports, and independent oracles.

#include <array>
#include <atomic>
#include <cmath>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "anchoropt/anchoropt.hpp"

namespace anchoropt::testing {

inline std::filesystem::path fixture_dir() { return ANCHOROPT_FIXTURE_DIR; }
inline std::filesystem::path golden_dir() { return ANCHOROPT_GOLDEN_DIR; }

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("test fixture missing: " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::shared_ptr<const ProblemInstance> cutting_stock_problem() {
  return std::make_shared<const ProblemInstance>(
      problem_from_json(Json::parse(read_file(fixture_dir() / "cutting_stock_problem.json"))));
}

inline std::string cutting_stock_structured_json() {
  return read_file(fixture_dir() / "cutting_stock_structured.json");
}

inline StructuredData cutting_stock() {
  return parse_structured_data(std::string_view(cutting_stock_structured_json()), cutting_stock_problem());
}

// Code and reconstructions used by the cutting-stock cassette. Anchor 1's
// first fragment is the transposed-index bug the verifier has to catch.
namespace cutting_stock_script {

inline const std::string kCoverageCode =
    "for i in range(NumWidths):\n"
    "    model.addConstr(gp.quicksum(NumRollsWidth[j][i] * NumRollsCut[j] for j in "
    "range(NumPatterns)) >= Orders[i])";
inline const std::string kPatternCodeWrong =
    "for j in range(NumPatterns):\n"
    "    model.addConstr(sum(NumRollsWidth[i][j] * Widths[i] for i in range(NumWidths)) <= "
    "RollWidth * NumRollsCut[j])";
inline const std::string kPatternCodeFixed =
    "for j in range(NumPatterns):\n"
    "    model.addConstr(sum(NumRollsWidth[j][i] * Widths[i] for i in range(NumWidths)) <= "
    "RollWidth)";
inline const std::string kNonNegCode =
    "for j in range(NumPatterns):\n"
    "    model.addConstr(NumRollsCut[j] >= 0)";
inline const std::string kObjectiveCode =
    "model.setObjective(gp.quicksum(NumRollsCut[j] for j in range(NumPatterns)), GRB.MINIMIZE)";

inline const std::string kCoverageRecon =
    "For every width i, the rolls produced across all patterns must add up to at least the "
    "Orders for that width.";
inline const std::string kPatternReconWrong =
    "For each pattern j, the sum of rolls produced must be arranged so that their total width "
    "does not exceed the width of the raw roll times the number of rolls cut using that pattern.";
inline const std::string kPatternReconFixed =
    "Each pattern j must operate within the confines of RollWidth, dictating that the summarized "
    "width obtained from the rolls in that pattern remains within the roll's total width "
    "constraint.";
inline const std::string kNonNegRecon =
    "The number of raw rolls cut with each pattern j (NumRollsCut) cannot be negative.";
inline const std::string kObjectiveRecon = "Minimize the total number of raw rolls that are cut.";

}  // namespace cutting_stock_script

// Records cassette entries keyed exactly as the library will request them.
class ScriptBuilder {
 public:
  explicit ScriptBuilder(TargetDialect dialect = default_dialect(), PromptSet prompts = {})
      : dialect_(std::move(dialect)), prompts_(std::move(prompts)) {}

  const TargetDialect& dialect() const { return dialect_; }
  const PromptSet& prompts() const { return prompts_; }

  ScriptBuilder& raw(std::string_view tag, const std::string& prompt, std::string response) {
    cassette_->append(make_entry(tag, prompt, std::move(response)));
    return *this;
  }

  ScriptBuilder& extract_reply(const ProblemInstance& p, std::string reply) {
    return raw("extract", extract_prompt(p, prompts_), std::move(reply));
  }

  ScriptBuilder& extract(const ProblemInstance& p, const std::string& json_payload) {
    return extract_reply(p, emit_fenced(kStructuredHeader, json_payload));
  }

  // One more response in the queue for this anchor's translation prompt.
  ScriptBuilder& translate(const Anchor& a, const StructuredData& s, const std::string& code) {
    return raw("translate", translate_prompt(a, s, dialect_, prompts_),
               emit_fenced(kCodeHeader, code));
  }

  ScriptBuilder& reconstruct(const Anchor& a, const StructuredData& s, const std::string& code,
                             const std::string& recon) {
    Anchor with_code = a;
    with_code.set_code(0, code);
    return raw("reconstruct", reconstruct_prompt(with_code, s, dialect_, prompts_),
               "The code adds one constraint.\n\n" + emit_fenced(kConstraintHeader, recon));
  }

  ScriptBuilder& verify(const std::string& original, const std::string& recon, bool yes) {
    return raw("verify", verify_prompt(original, recon, prompts_),
               emit_fenced(kAnswerHeader, yes ? "YES" : "NO"));
  }

  ScriptBuilder& embed(const std::string& text, const std::vector<double>& v) {
    return raw(kEmbedTag, text, nlohmann::json(v).dump());
  }

  ScriptBuilder& debug(const AssembledProgram& prog, const ExecutionResult& result,
                       const ProblemInstance& problem, const std::string& fixed) {
    return raw("debug", debug_prompt(prog, result, problem, prompts_),
               emit_fenced(kProgramHeader, fixed));
  }

  std::shared_ptr<Cassette> cassette() const { return cassette_; }
  std::shared_ptr<Gateway> gateway() const { return Gateway::replay(cassette_); }

 private:
  TargetDialect dialect_;
  PromptSet prompts_;
  std::shared_ptr<Cassette> cassette_ = std::make_shared<Cassette>();
};

// extract + translate + reconstruct + verify for the cutting-stock run: anchor
// 1 is wrong at t=0 and fixed by the first regeneration.
inline void script_cutting_stock(ScriptBuilder& b) {
  namespace cs = cutting_stock_script;
  auto problem = cutting_stock_problem();
  b.extract(*problem, cutting_stock_structured_json());
  auto s = cutting_stock();
  const auto& a = s.anchors;
  b.translate(a[0], s, cs::kCoverageCode);
  b.translate(a[1], s, cs::kPatternCodeWrong);
  b.translate(a[1], s, cs::kPatternCodeFixed);
  b.translate(a[2], s, cs::kNonNegCode);
  b.translate(a[3], s, cs::kObjectiveCode);
  b.reconstruct(a[0], s, cs::kCoverageCode, cs::kCoverageRecon);
  b.reconstruct(a[1], s, cs::kPatternCodeWrong, cs::kPatternReconWrong);
  b.reconstruct(a[1], s, cs::kPatternCodeFixed, cs::kPatternReconFixed);
  b.reconstruct(a[2], s, cs::kNonNegCode, cs::kNonNegRecon);
  b.reconstruct(a[3], s, cs::kObjectiveCode, cs::kObjectiveRecon);
  b.verify(a[0].description(), cs::kCoverageRecon, true);
  b.verify(a[1].description(), cs::kPatternReconWrong, false);
  b.verify(a[1].description(), cs::kPatternReconFixed, true);
  b.verify(a[2].description(), cs::kNonNegRecon, true);
  b.verify(a[3].description(), cs::kObjectiveRecon, true);
}

// Embeddings for the same run under the similarity verifier. Description k
// is the unit vector e_k; aligned reconstructions sit at cosine 0.9487 to it
// and the wrong pattern reconstruction at exactly 0.5.
inline void script_cutting_stock_embeddings(ScriptBuilder& b) {
  namespace cs = cutting_stock_script;
  auto s = cutting_stock();
  auto near = [](std::size_t k, double along, double off) {
    std::vector<double> v(8, 0.0);
    v[k] = along;
    v[7] = off;
    return v;
  };
  for (std::size_t k = 0; k < s.anchors.size(); ++k) b.embed(s.anchors[k].description(), near(k, 1.0, 0.0));
  b.embed(cs::kCoverageRecon, near(0, 0.9, 0.3));
  b.embed(cs::kPatternReconFixed, near(1, 0.9, 0.3));
  b.embed(cs::kNonNegRecon, near(2, 0.9, 0.3));
  b.embed(cs::kObjectiveRecon, near(3, 0.9, 0.3));
  b.embed(cs::kPatternReconWrong, near(1, 0.5, std::sqrt(0.75)));
}

// Synthetic problem with n anchors (n-1 constraints + objective). Anchor k's
// v-th translation is aligned iff v >= align_at[k]; align_at beyond the
// available versions means it never aligns.
struct ScriptedProblem {
  StructuredData structured;
  std::shared_ptr<Cassette> cassette;
  std::vector<int> align_at;

  static std::string code(std::size_t k, int v) {
    return "model.addConstr(x[0] + A[0] >= " + std::to_string(100 * k + static_cast<std::size_t>(v)) + ")";
  }
  static std::string recon(std::size_t k, int v) {
    return "reconstruction of anchor " + std::to_string(k) + " version " + std::to_string(v);
  }
};

inline ScriptedProblem make_scripted(std::vector<int> align_at, int versions,
                                     VerifyMethod method = VerifyMethod::llm) {
  const std::size_t n = align_at.size();
  Json raw = Json::parse(R"({
    "parameters": [
      {"definition": "size", "symbol": "N", "value": "", "shape": [], "code": ""},
      {"definition": "weights", "symbol": "A", "value": "", "shape": ["N"], "code": ""}
    ],
    "variables": {"x": {"shape": ["N"], "type": "continuous", "definition": "amounts"}},
    "constraints": [],
    "objective": {"description": "", "code": null, "error": ""}
  })");
  for (std::size_t k = 0; k + 1 < n; ++k)
    raw["constraints"].push_back(
        {{"description", "synthetic constraint " + std::to_string(k)}, {"code", nullptr}, {"error", ""}});
  raw["objective"]["description"] = "synthetic objective " + std::to_string(n - 1);
  auto problem = std::make_shared<ProblemInstance>();
  problem->id = "scripted";
  problem->description = "A synthetic problem with " + std::to_string(n) + " anchors.";
  problem->data = {{"N", 1}, {"A", {1.0}}};
  ScriptedProblem out{structured_data_from_json(raw, problem), nullptr, align_at};

  ScriptBuilder b;
  const auto& s = out.structured;
  for (std::size_t k = 0; k < n; ++k) {
    const auto& a = s.anchors[k];
    for (int v = 0; v < versions; ++v) {
      b.translate(a, s, ScriptedProblem::code(k, v));
      b.reconstruct(a, s, ScriptedProblem::code(k, v), ScriptedProblem::recon(k, v));
      const bool aligned = v >= align_at[k];
      if (method == VerifyMethod::llm) {
        b.verify(a.description(), ScriptedProblem::recon(k, v), aligned);
      } else {
        // aligned pairs share a direction with the description; others are orthogonal
        b.embed(ScriptedProblem::recon(k, v), aligned ? std::vector<double>{1.0, 0.0}
                                                      : std::vector<double>{0.0, 1.0});
      }
    }
    if (method == VerifyMethod::similarity) b.embed(a.description(), {1.0, 0.0});
  }
  out.cassette = b.cassette();
  return out;
}

// Serves queued results; records every request.
class StubExecutor : public ProgramExecutor {
 public:
  explicit StubExecutor(std::function<ExecutionResult(const SandboxRequest&)> fn)
      : fn_(std::move(fn)) {}

  static std::shared_ptr<StubExecutor> always(ExecutionResult r) {
    return std::make_shared<StubExecutor>([r](const SandboxRequest&) { return r; });
  }

  ExecutionResult execute(const SandboxRequest& req) override {
    std::lock_guard lock(mutex_);
    requests_.push_back(req.source);
    return fn_(req);
  }

  std::vector<std::string> requests() const {
    std::lock_guard lock(mutex_);
    return requests_;
  }

 private:
  std::function<ExecutionResult(const SandboxRequest&)> fn_;
  mutable std::mutex mutex_;
  std::vector<std::string> requests_;
};

inline ExecutionResult optimal(double objective, Json solution = Json::object()) {
  ExecutionResult r;
  r.status = ExecStatus::optimal;
  r.objective = objective;
  r.solution = std::move(solution);
  return r;
}

inline ExecutionResult runtime_error(std::string text) {
  ExecutionResult r;
  r.status = ExecStatus::runtime_error;
  r.error_text = std::move(text);
  return r;
}

// In-memory provider; fails the first `failures` calls.
class FakeTransport : public Transport {
 public:
  int failures = 0;
  bool transient = true;
  std::atomic<int> calls{0};

  std::string complete(const CompletionRequest& req) override {
    maybe_fail();
    return "echo[" + std::string(to_string(req.tag)) + "]: " + req.prompt.substr(0, 16);
  }
  std::vector<double> embed(const std::string& text) override {
    maybe_fail();
    return {static_cast<double>(text.size()), 1.0, 0.5};
  }

 private:
  void maybe_fail() {
    if (calls.fetch_add(1) < failures) throw TransportError("injected failure", transient);
  }
};

// Any use is a test failure: proves replay never reaches a provider.
class ExplodingTransport : public Transport {
 public:
  std::atomic<int> calls{0};
  std::string complete(const CompletionRequest&) override {
    ++calls;
    throw TransportError("network used in replay", false);
  }
  std::vector<double> embed(const std::string&) override {
    ++calls;
    throw TransportError("network used in replay", false);
  }
};

// --- oracles ---------------------------------------------------------------

// Cutting-stock data: NumRollsWidth is [pattern][width].
struct CuttingStockOracle {
  int roll_width = 10;
  std::array<int, 3> widths{2, 3, 5};
  std::array<int, 3> orders{4, 2, 2};
  std::array<std::array<int, 3>, 2> rolls{{{1, 2, 0}, {0, 0, 1}}};

  bool covers_orders(int x0, int x1) const {
    for (int i = 0; i < 3; ++i)
      if (rolls[0][i] * x0 + rolls[1][i] * x1 < orders[i]) return false;
    return true;
  }
  bool patterns_fit() const {
    for (const auto& pattern : rolls) {
      int width = 0;
      for (int i = 0; i < 3; ++i) width += pattern[i] * widths[i];
      if (width > roll_width) return false;
    }
    return true;
  }

  // minimum x0 + x1 over the integer box [0..10]^2
  struct Optimum {
    int objective;
    int x0;
    int x1;
  };
  Optimum brute_force() const {
    Optimum best{1 << 30, -1, -1};
    for (int x0 = 0; x0 <= 10; ++x0)
      for (int x1 = 0; x1 <= 10; ++x1)
        if (covers_orders(x0, x1) && patterns_fit() && x0 + x1 < best.objective)
          best = {x0 + x1, x0, x1};
    return best;
  }
};

}  // namespace anchoropt::testing
