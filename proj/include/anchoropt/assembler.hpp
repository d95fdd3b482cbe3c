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

// Final program assembly and the solver-feedback repair loop.

#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <utility>

#include "anchoropt/engine.hpp"
#include "anchoropt/errors.hpp"
#include "anchoropt/execution.hpp"
#include "anchoropt/gateway.hpp"
#include "anchoropt/prompt_kit.hpp"
#include "anchoropt/schema.hpp"
#include "anchoropt/translator.hpp"

namespace anchoropt {

struct LineSpan {
  int first = 0;  // 1-based, inclusive
  int last = 0;
  friend bool operator==(const LineSpan&, const LineSpan&) = default;
};

// Span keys: the symbol for parameters and variables, "anchor:<id>" for
// constraints and the objective.
inline std::string anchor_span_key(std::size_t id) { return "anchor:" + std::to_string(id); }

struct AssembledProgram {
  std::string source;
  std::shared_ptr<const TargetDialect> dialect;
  std::map<std::string, LineSpan> fragment_spans;  // empty after a debug rewrite

  friend bool operator==(const AssembledProgram& a, const AssembledProgram& b) {
    return a.source == b.source && a.fragment_spans == b.fragment_spans;
  }
};

namespace detail {

inline int count_lines(std::string_view text) {
  int n = 0;
  for (char c : text) n += c == '\n';
  return n;
}

class SourceBuilder {
 public:
  // Appends text as whole lines and returns the lines it occupies.
  LineSpan add(std::string_view text) {
    std::string block(text);
    if (block.empty() || block.back() != '\n') block.push_back('\n');
    LineSpan span{next_line_, next_line_ + count_lines(block) - 1};
    next_line_ = span.last + 1;
    out_ += block;
    return span;
  }

  void blank() { add(""); }
  std::string str() const { return out_; }

 private:
  std::string out_;
  int next_line_ = 1;
};

}  // namespace detail

inline AssembledProgram assemble(const StructuredData& s, const CandidateModel& m) {
  if (!m.dialect) throw UsageError("candidate model has no dialect");
  for (const auto& a : s.anchors) {
    auto it = m.sem_fragments.find(a.id());
    if (it == m.sem_fragments.end() || it->second.empty()) throw IncompleteModel(a.id());
  }
  for (const auto& [id, code] : m.sem_fragments)
    if (id >= s.anchors.size())
      throw UsageError("candidate model names unknown anchor " + std::to_string(id));

  AssembledProgram prog;
  prog.dialect = m.dialect;
  detail::SourceBuilder b;
  b.add(m.dialect->boilerplate_header);
  b.blank();
  for (const auto& [symbol, code] : m.simp_fragments) prog.fragment_spans[symbol] = b.add(code);
  b.blank();
  for (const auto& [id, code] : m.sem_fragments) prog.fragment_spans[anchor_span_key(id)] = b.add(code);
  b.blank();

  std::string vars = "[";
  for (std::size_t i = 0; i < s.variables.size(); ++i) {
    if (i) vars += ", ";
    vars += "\"" + s.variables[i].symbol + "\"";
  }
  vars += "]";
  b.add(detail::replace_all(m.dialect->boilerplate_footer, "{variables}", vars));
  prog.source = b.str();
  return prog;
}

inline constexpr std::string_view kProgramHeader = "PROGRAM:";

inline std::string debug_prompt(const AssembledProgram& prog, const ExecutionResult& result,
                                const ProblemInstance& problem, const PromptSet& prompts) {
  std::string error = result.error_text.value_or("");
  if (error.empty() && result.status == ExecStatus::contract_violation)
    error = "the program finished without writing the result file";
  return prompts.debug.render({{"description", problem.description},
                               {"solver", prog.dialect ? prog.dialect->name : std::string()},
                               {"program", prog.source},
                               {"error", error}});
}

struct DebugOutcome {
  AssembledProgram program;
  ExecutionResult result;
  int attempts = 0;
};

struct DebugOptions {
  int max_attempts = 3;
  double timeout = 60.0;
  PromptSet prompts;
  SamplingConfig sampling;
};

// Whole-program repair: each attempt sends (program, error, description),
// replaces the source with the reply and runs it again. Stops as soon as
// the program no longer fails to execute.
inline DebugOutcome debug(Gateway& gateway, ProgramExecutor& executor, AssembledProgram prog,
                          ExecutionResult result, const ProblemInstance& problem,
                          const DebugOptions& opts = {}) {
  if (!is_execution_failure(result.status))
    throw UsageError("debug called on a result with status '" +
                     std::string(to_string(result.status)) + "'");
  if (opts.max_attempts < 0) throw UsageError("max_attempts must be >= 0");
  DebugOutcome out{std::move(prog), std::move(result), 0};
  while (out.attempts < opts.max_attempts && is_execution_failure(out.result.status)) {
    ++out.attempts;
    CompletionRequest req{debug_prompt(out.program, out.result, problem, opts.prompts),
                          stage_temperature(Stage::debug, opts.sampling), opts.sampling.max_tokens,
                          Stage::debug};
    auto source = complete_parsed(gateway, req, [](const std::string& reply) {
      auto code = parse_fenced(reply, kProgramHeader);
      if (code.empty()) throw ParseError("empty program");
      return code + "\n";
    });
    out.program.source = std::move(source);
    out.program.fragment_spans.clear();
    out.result = executor.execute({out.program.source, problem.data, opts.timeout, {}});
  }
  return out;
}

}  // namespace anchoropt
