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

// extract -> translate/correct -> assemble -> execute -> debug, for one
// problem.

#include <chrono>
#include <memory>
#include <optional>
#include <utility>

#include "anchoropt/assembler.hpp"
#include "anchoropt/engine.hpp"
#include "anchoropt/errors.hpp"
#include "anchoropt/execution.hpp"
#include "anchoropt/gateway.hpp"
#include "anchoropt/prompt_kit.hpp"
#include "anchoropt/schema.hpp"
#include "anchoropt/translator.hpp"

namespace anchoropt {

struct PipelineConfig {
  EngineConfig engine;
  TargetDialect dialect = default_dialect();
  PromptSet prompts;
  int debug_attempts = 3;
  double exec_timeout = 60.0;
};

struct SolveOutcome {
  StructuredData structured;
  CorrectionResult correction;
  AssembledProgram program;
  // absent when no executor was supplied
  std::optional<ExecutionResult> result;
  int debug_attempts = 0;
  double run_time = 0.0;
};

inline SolveOutcome solve(std::shared_ptr<Gateway> gateway, ProgramExecutor* executor,
                          std::shared_ptr<const ProblemInstance> problem,
                          const PipelineConfig& cfg) {
  if (!gateway) throw UsageError("solve needs a gateway");
  if (!problem) throw UsageError("solve needs a problem");
  const auto start = std::chrono::steady_clock::now();
  SolveOutcome out;
  try {
    out.structured = extract(*gateway, problem, cfg.prompts, cfg.engine.sampling);
  } catch (const UsageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError("extract", -1, -1, e.what());
  }

  CorrectionEngine engine(gateway, cfg.dialect, cfg.engine, cfg.prompts);
  out.correction = engine.run(out.structured);
  out.program = assemble(out.structured, out.correction.model);

  if (executor) {
    SandboxRequest req{out.program.source, problem->data, cfg.exec_timeout, {}};
    out.result = executor->execute(req);
    if (is_execution_failure(out.result->status) && cfg.debug_attempts > 0) {
      try {
        auto fixed = debug(*gateway, *executor, out.program, *out.result, *problem,
                           {cfg.debug_attempts, cfg.exec_timeout, cfg.prompts, cfg.engine.sampling});
        out.program = std::move(fixed.program);
        out.result = std::move(fixed.result);
        out.debug_attempts = fixed.attempts;
      } catch (const SandboxUnavailable&) {
        throw;
      } catch (const UsageError&) {
        throw;
      } catch (const Error& e) {
        throw StageError("debug", -1, -1, e.what());
      }
    }
  }
  out.run_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

}  // namespace anchoropt
