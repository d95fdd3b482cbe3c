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

// Prompt templates with {placeholder} substitution and the fenced
// "HEADER:\n=====\n...\n=====" response format.

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>

#include "anchoropt/errors.hpp"
#include "anchoropt/gateway.hpp"

namespace anchoropt {

inline constexpr std::array<std::string_view, 9> kPlaceholders = {
    "description", "solver", "constraint", "constraint_code", "params",
    "vars",        "constraint_new", "program", "error"};

inline constexpr std::string_view kFence = "=====";

class PromptTemplate {
 public:
  PromptTemplate() = default;
  PromptTemplate(std::string name, std::string body) : name_(std::move(name)), body_(std::move(body)) {
    for (auto ph : kPlaceholders)
      if (body_.find("{" + std::string(ph) + "}") != std::string::npos)
        required_.insert(std::string(ph));
  }

  const std::string& name() const noexcept { return name_; }
  const std::string& body() const noexcept { return body_; }
  const std::set<std::string>& required_placeholders() const noexcept { return required_; }

  // Single left-to-right pass: bound text is inserted verbatim and never
  // rescanned. Braces that do not form a known placeholder are kept.
  std::string render(const std::map<std::string, std::string>& bindings) const {
    for (const auto& ph : required_)
      if (!bindings.count(ph)) throw MissingBinding(ph);
    std::string out;
    out.reserve(body_.size() * 2);
    std::size_t i = 0;
    while (i < body_.size()) {
      if (body_[i] == '{') {
        auto close = body_.find('}', i + 1);
        if (close != std::string::npos) {
          std::string key = body_.substr(i + 1, close - i - 1);
          if (required_.count(key)) {
            out += bindings.at(key);
            i = close + 1;
            continue;
          }
        }
      }
      out.push_back(body_[i++]);
    }
    return out;
  }

 private:
  std::string name_;
  std::string body_;
  std::set<std::string> required_;
};

inline std::string render(const PromptTemplate& t, const std::map<std::string, std::string>& bindings) {
  return t.render(bindings);
}

namespace builtin_prompts {

// Constraint reconstruction, verbatim.
inline constexpr std::string_view kReconstruct = R"PROMPT(
You are an expert in optimization modeling. Here is the natural language description of an optimization problem:

{description}

You are given a constraint implemented in {solver} code and an example natural language description that serves only as a reference for sentence structure and length. Your task is to generate a **new** natural language description that:


1. **Is derived strictly from the given code** - do not assume information not present in the code.
2. **Maintains the structure, length, and complexity of the example description**, but is reworded.
3. **Does not directly copy the example text** - use a natural rephrasing while preserving accuracy.

The example description for the constraint is (For Structure & Length Reference Only, NOT for Content Copying):

-----
{constraint}
-----

Here is the code for the constraint:

-----
{constraint_code}
-----

Here is a list of parameters that are related to the constraint:

-----
{params}
-----

Here is a list of variables related to the constraint:

-----
{vars}
-----

The new description should be written in the following format:

CONSTRAINT:
=====
new natural language description for translating the constraint. (The description should be fully based on the code and should match the structure and length of the example description.)
=====

- Do not generate anything after the last =====.
- Do not include any additional information or explanations.

First reason about how the natural language description should be written, and then generate the output.

Please take a deep breath and think step by step. You will be awarded a million dollars if you get this right.

)PROMPT";

// Consistency judge, verbatim.
inline constexpr std::string_view kVerify = R"PROMPT(
You are an expert in optimization modeling.

You task is to judge the consistency of the new generated description and the original description of the same constraint.

The original description is:
-----
{constraint}
-----

The new description is:
-----
{constraint_new}
-----

Please respond with "YES" if the two descriptions are consistent, and "NO" if they are not.

The asnwer should be in the following format:

ANSWER:
=====
YES or NO (ONLY one word and the answer should be in capital letters)
=====

- Do not generate anything after the last =====.
- Do not include any additional information or explanations.

Please take a deep breath and think step by step. You will be awarded a million dollars if you get this right.

)PROMPT";

// The three below are authored for this project in the same house style.
inline constexpr std::string_view kExtract = R"PROMPT(
You are an expert in optimization modeling. Here is the natural language description of an optimization problem:

{description}

Your task is to extract the structured data of this problem: its parameters, decision variables, constraints, and objective.

Follow these rules:

1. Every parameter gets a unique "symbol" (letters, digits and underscores, starting with a letter), a "definition", an empty "value", and a "shape" listing the symbols of the scalar parameters that give its dimensions ([] for a scalar).
2. Every dimension that appears in a shape must itself be a scalar parameter.
3. "variables" is an object keyed by variable symbol; each entry has "shape", "type" (one of "continuous", "integer", "binary"), and "definition".
4. Each constraint is one natural language sentence in "description", with "code" set to null and "error" set to "".
5. "objective" has the same fields as a constraint.
6. Do not write any solver code.

The structured data should be written in the following format:

STRUCTURED DATA:
=====
{
    "parameters": [
        {"definition": "...", "symbol": "...", "value": "", "shape": [], "code": ""}
    ],
    "constraints": [
        {"description": "...", "code": null, "error": ""}
    ],
    "variables": {
        "...": {"shape": [], "type": "continuous", "definition": "..."}
    },
    "objective": {"description": "...", "code": null, "error": ""}
}
=====

- The content between the ===== lines must be valid JSON.
- Do not generate anything after the last =====.
- Do not include any additional information or explanations.

Please take a deep breath and think step by step. You will be awarded a million dollars if you get this right.

)PROMPT";

inline constexpr std::string_view kTranslate = R"PROMPT(
You are an expert in optimization modeling. Here is the natural language description of an optimization problem:

{description}

Your task is to write {solver} code that implements exactly one constraint or objective of this problem, described in natural language below. Translate the description directly into code; do not write LaTeX or pseudo code first.

The description to implement is:

-----
{constraint}
-----

Here is a list of parameters that are already defined in the code:

-----
{params}
-----

Here is a list of variables that are already defined in the code:

-----
{vars}
-----

The model object is available as `model`. Use only the parameters and variables listed above; do not redefine them, do not create the model, and do not call the solver.

The code should be written in the following format:

CODE:
=====
code implementing only the given description
=====

- Do not generate anything after the last =====.
- Do not include any additional information or explanations.

Please take a deep breath and think step by step. You will be awarded a million dollars if you get this right.

)PROMPT";

inline constexpr std::string_view kDebug = R"PROMPT(
You are an expert in optimization modeling. Here is the natural language description of an optimization problem:

{description}

The following {solver} program was written for this problem:

-----
{program}
-----

Running the program failed with this error:

-----
{error}
-----

Your task is to fix the program so that it runs and stays consistent with the problem description. Keep the data loading, the solve call, and the code that writes the result file unchanged unless they cause the error.

The fixed program should be written in the following format:

PROGRAM:
=====
the complete fixed program
=====

- Do not generate anything after the last =====.
- Do not include any additional information or explanations.

Please take a deep breath and think step by step. You will be awarded a million dollars if you get this right.

)PROMPT";

}  // namespace builtin_prompts

struct PromptSet {
  PromptTemplate extract{"extract", std::string(builtin_prompts::kExtract)};
  PromptTemplate translate{"translate", std::string(builtin_prompts::kTranslate)};
  PromptTemplate reconstruct{"reconstruct", std::string(builtin_prompts::kReconstruct)};
  PromptTemplate verify{"verify", std::string(builtin_prompts::kVerify)};
  PromptTemplate debug{"debug", std::string(builtin_prompts::kDebug)};

  // Reads <dir>/<stage>.txt for each stage; stages without a file keep the
  // built-in text.
  static PromptSet load_dir(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir))
      throw IoError("prompt directory '" + dir.string() + "' does not exist");
    PromptSet set;
    auto read = [&](PromptTemplate& slot) {
      auto path = dir / (slot.name() + ".txt");
      if (!std::filesystem::exists(path)) return;
      std::ifstream in(path, std::ios::binary);
      if (!in) throw IoError("cannot read prompt '" + path.string() + "'");
      std::ostringstream ss;
      ss << in.rdbuf();
      slot = PromptTemplate(slot.name(), ss.str());
    };
    read(set.extract);
    read(set.translate);
    read(set.reconstruct);
    read(set.verify);
    read(set.debug);
    return set;
  }
};

inline std::string trim(std::string_view s) {
  auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; };
  std::size_t b = 0, e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

// Payload of the first fenced section that follows `header`. Prose before
// the header and anything after the closing fence are ignored.
inline std::string parse_fenced(std::string_view response, std::string_view header) {
  if (header.empty()) throw UsageError("fence header is empty");
  bool saw_header = false;
  std::size_t pos = 0;
  while ((pos = response.find(header, pos)) != std::string_view::npos) {
    saw_header = true;
    std::size_t cursor = pos + header.size();
    while (cursor < response.size() && std::string_view(" \t\r\n").find(response[cursor]) != std::string_view::npos)
      ++cursor;
    if (response.substr(cursor, kFence.size()) != kFence) {
      pos += header.size();
      continue;
    }
    std::size_t body_start = cursor + kFence.size();
    std::size_t close = response.find(kFence, body_start);
    if (close == std::string_view::npos)
      throw ParseError("no closing fence after '" + std::string(header) + "'");
    return trim(response.substr(body_start, close - body_start));
  }
  if (!saw_header) throw ParseError("response has no '" + std::string(header) + "' section");
  throw ParseError("no opening fence after '" + std::string(header) + "'");
}

inline std::string emit_fenced(std::string_view header, std::string_view payload) {
  std::string out(header);
  out += "\n";
  out += kFence;
  out += "\n";
  out += payload;
  out += "\n";
  out += kFence;
  return out;
}

inline bool parse_yes_no(std::string_view payload) {
  auto token = trim(payload);
  if (token == "YES") return true;
  if (token == "NO") return false;
  throw ParseError("expected YES or NO, got '" + token + "'");
}

// Sends req; if `parse` rejects the reply with ParseError the identical
// request is sent once more before the error propagates.
template <typename Parse>
auto complete_parsed(Gateway& gateway, const CompletionRequest& req, Parse&& parse)
    -> decltype(parse(std::string())) {
  try {
    return parse(gateway.complete(req));
  } catch (const ParseError&) {
    return parse(gateway.complete(req));
  }
}

}  // namespace anchoropt
