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

// Target dialects and the code-generation side of the pipeline:
// deterministic rendering for parameters/variables, agent translation for
// anchors, and the extraction stage that produces structured data.

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "anchoropt/errors.hpp"
#include "anchoropt/gateway.hpp"
#include "anchoropt/prompt_kit.hpp"
#include "anchoropt/schema.hpp"

namespace anchoropt {

struct TargetDialect {
  std::string name;
  std::string scalar_param_template;
  std::string array_param_template;
  std::string variable_template;
  // used for variables with empty shape; falls back to variable_template
  std::string scalar_variable_template;
  std::map<std::string, std::string> vtype_names;
  // identifiers a fragment may use without declaring them
  std::set<std::string> keywords;
  std::string boilerplate_header;
  // may reference {variables}: a list literal of the variable symbols
  std::string boilerplate_footer;

  void validate() const {
    if (name.empty()) throw UsageError("dialect name is empty");
    auto need = [&](const std::string& field, const std::string& value) {
      if (value.empty()) throw UsageError("dialect '" + name + "' has an empty " + field);
    };
    need("scalar_param_template", scalar_param_template);
    need("array_param_template", array_param_template);
    need("variable_template", variable_template);
    need("boilerplate_header", boilerplate_header);
    need("boilerplate_footer", boilerplate_footer);
  }

  friend bool operator==(const TargetDialect&, const TargetDialect&) = default;
};

// Python + gurobipy conventions; parameter lines match the code fields of
// the extraction format.
inline TargetDialect default_dialect() {
  TargetDialect d;
  d.name = "gurobipy";
  d.scalar_param_template = R"({symbol} = data["{symbol}"] # scalar parameter)";
  d.array_param_template = R"({symbol} = np.array(data["{symbol}"]) # {shape_comment})";
  d.variable_template = R"({symbol} = model.addVars({shape}, vtype={vtype}, name="{symbol}"))";
  d.scalar_variable_template = R"({symbol} = model.addVar(vtype={vtype}, name="{symbol}"))";
  d.vtype_names = {{"binary", "GRB.BINARY"},
                   {"continuous", "GRB.CONTINUOUS"},
                   {"integer", "GRB.INTEGER"}};
  d.keywords = {"False", "None",  "True",   "abs",      "all",   "and",   "any",   "data",
                "dict",  "else",  "enumerate", "float", "for",  "gp",    "GRB",   "if",
                "in",    "int",   "is",     "lambda",   "len",   "list",  "math",  "max",
                "min",   "model", "not",    "np",       "or",    "quicksum", "range", "round",
                "set",   "sorted", "sum",   "tuple",    "zip"};
  d.boilerplate_header = R"(import json
import os

import numpy as np
import gurobipy as gp
from gurobipy import GRB

with open(os.environ.get("ANCHOROPT_DATA_PATH", "data.json")) as _f:
    data = json.load(_f)

model = gp.Model("model")
model.Params.OutputFlag = 0
)";
  d.boilerplate_footer = R"(model.optimize()


def _collect(obj):
    if isinstance(obj, gp.Var):
        return obj.X
    tree = {}
    for key, var in obj.items():
        key = key if isinstance(key, tuple) else (key,)
        node = tree
        for k in key[:-1]:
            node = node.setdefault(k, {})
        node[key[-1]] = var.X

    def _as_list(node):
        return [_as_list(node[k]) if isinstance(node[k], dict) else node[k] for k in sorted(node)]

    return _as_list(tree)


_status = {
    GRB.OPTIMAL: "optimal",
    GRB.INFEASIBLE: "infeasible",
    GRB.INF_OR_UNBD: "infeasible",
    GRB.UNBOUNDED: "unbounded",
}.get(model.Status, "error")
_result = {"status": _status, "objective": None, "solution": {}}
if _status == "optimal":
    _result["objective"] = model.ObjVal
    for _name in {variables}:
        _result["solution"][_name] = _collect(globals()[_name])
with open(os.environ["ANCHOROPT_RESULT_PATH"], "w") as _f:
    json.dump(_result, _f)
)";
  return d;
}

inline TargetDialect dialect_from_json(const Json& j) {
  TargetDialect d;
  try {
    d.name = j.at("name").get<std::string>();
    d.scalar_param_template = j.at("scalar_param_template").get<std::string>();
    d.array_param_template = j.at("array_param_template").get<std::string>();
    d.variable_template = j.at("variable_template").get<std::string>();
    d.scalar_variable_template = j.value("scalar_variable_template", std::string());
    d.boilerplate_header = j.at("boilerplate_header").get<std::string>();
    d.boilerplate_footer = j.at("boilerplate_footer").get<std::string>();
    if (auto it = j.find("vtype_names"); it != j.end())
      d.vtype_names = it->get<std::map<std::string, std::string>>();
    if (auto it = j.find("keywords"); it != j.end())
      d.keywords = it->get<std::set<std::string>>();
  } catch (const Json::exception& e) {
    throw FormatError(std::string("dialect definition: ") + e.what());
  }
  d.validate();
  return d;
}

inline Json to_json(const TargetDialect& d) {
  Json j = Json::object();
  j["name"] = d.name;
  j["scalar_param_template"] = d.scalar_param_template;
  j["array_param_template"] = d.array_param_template;
  j["variable_template"] = d.variable_template;
  j["scalar_variable_template"] = d.scalar_variable_template;
  j["vtype_names"] = d.vtype_names;
  j["keywords"] = d.keywords;
  j["boilerplate_header"] = d.boilerplate_header;
  j["boilerplate_footer"] = d.boilerplate_footer;
  return j;
}

inline TargetDialect load_dialect(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dialect file '" + path.string() + "'");
  try {
    return dialect_from_json(Json::parse(in));
  } catch (const Json::parse_error& e) {
    throw FormatError("dialect file '" + path.string() + "': " + e.what());
  }
}

namespace detail {

inline std::string replace_all(std::string text, std::string_view from, std::string_view to) {
  std::size_t pos = 0;
  while ((pos = text.find(from, pos)) != std::string::npos) {
    text.replace(pos, from.size(), to);
    pos += to.size();
  }
  return text;
}

// ['A', 'B']
inline std::string python_list(const std::vector<std::string>& items) {
  std::string out = "[";
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ", ";
    out += "'" + items[i] + "'";
  }
  return out + "]";
}

inline std::string join(const std::vector<std::string>& items, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += sep;
    out += items[i];
  }
  return out;
}

}  // namespace detail

using Fragment = std::pair<std::string, std::string>;  // (symbol, code)

inline std::string render_parameter(const Parameter& p, const TargetDialect& d) {
  if (p.is_scalar()) return detail::replace_all(d.scalar_param_template, "{symbol}", p.symbol);
  auto code = detail::replace_all(d.array_param_template, "{shape_comment}",
                                  detail::python_list(p.shape));
  return detail::replace_all(std::move(code), "{symbol}", p.symbol);
}

inline std::string render_variable(const VariableDecl& v, const TargetDialect& d) {
  const std::string type_key(to_string(v.var_type));
  auto vt = d.vtype_names.find(type_key);
  const std::string vtype = vt == d.vtype_names.end() ? type_key : vt->second;
  std::string code = v.shape.empty() && !d.scalar_variable_template.empty()
                         ? d.scalar_variable_template
                         : d.variable_template;
  code = detail::replace_all(std::move(code), "{shape}", detail::join(v.shape, ", "));
  code = detail::replace_all(std::move(code), "{vtype}", vtype);
  return detail::replace_all(std::move(code), "{symbol}", v.symbol);
}

// One fragment per parameter, then per variable, in declaration order.
inline std::vector<Fragment> render_simple(const StructuredData& s, const TargetDialect& d) {
  std::vector<Fragment> out;
  out.reserve(s.parameters.size() + s.variables.size());
  for (const auto& p : s.parameters) out.emplace_back(p.symbol, render_parameter(p, d));
  for (const auto& v : s.variables) out.emplace_back(v.symbol, render_variable(v, d));
  return out;
}

// --- identifier lint -------------------------------------------------------

namespace detail {

struct Token {
  std::string text;
  std::size_t begin;
  std::size_t end;
};

// Identifier tokens outside string literals and '#' comments.
inline std::vector<Token> identifier_tokens(std::string_view src) {
  std::vector<Token> out;
  auto ident_start = [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_';
  };
  auto ident_char = [&](char c) { return ident_start(c) || (c >= '0' && c <= '9'); };
  std::size_t i = 0;
  while (i < src.size()) {
    char c = src[i];
    if (c == '#') {
      while (i < src.size() && src[i] != '\n') ++i;
    } else if (c == '"' || c == '\'') {
      char quote = c;
      ++i;
      while (i < src.size() && src[i] != quote) {
        if (src[i] == '\\') ++i;
        ++i;
      }
      ++i;
    } else if (ident_start(c)) {
      std::size_t b = i;
      while (i < src.size() && ident_char(src[i])) ++i;
      out.push_back({std::string(src.substr(b, i - b)), b, i});
    } else if (c >= '0' && c <= '9') {
      while (i < src.size() && (ident_char(src[i]) || src[i] == '.')) ++i;
    } else {
      ++i;
    }
  }
  return out;
}

inline char prev_nonspace(std::string_view src, std::size_t pos) {
  while (pos > 0) {
    char c = src[--pos];
    if (c != ' ' && c != '\t') return c;
  }
  return '\0';
}

inline std::string_view next_nonspace(std::string_view src, std::size_t pos) {
  while (pos < src.size() && (src[pos] == ' ' || src[pos] == '\t')) ++pos;
  return src.substr(pos, 2);
}

}  // namespace detail

// Identifiers a fragment reads without them being declared by the context,
// bound locally (loop targets, assignments, keyword arguments) or listed as
// dialect keywords. Attribute names after '.' are not counted.
inline std::vector<std::string> undeclared_identifiers(std::string_view fragment,
                                                       const StructuredData& context,
                                                       const TargetDialect& dialect) {
  auto tokens = detail::identifier_tokens(fragment);
  std::set<std::string> bound;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i].text == "for") {
      for (std::size_t k = i + 1; k < tokens.size() && tokens[k].text != "in"; ++k)
        bound.insert(tokens[k].text);
    } else if (tokens[i].text == "lambda") {
      for (std::size_t k = i + 1; k < tokens.size(); ++k) {
        bound.insert(tokens[k].text);
        if (detail::next_nonspace(fragment, tokens[k].end).substr(0, 1) == ":") break;
      }
    } else {
      auto next = detail::next_nonspace(fragment, tokens[i].end);
      if (!next.empty() && next[0] == '=' && next != "==") bound.insert(tokens[i].text);
    }
  }
  std::vector<std::string> missing;
  std::set<std::string> reported;
  for (const auto& tok : tokens) {
    if (detail::prev_nonspace(fragment, tok.begin) == '.') continue;
    if (bound.count(tok.text) || dialect.keywords.count(tok.text)) continue;
    if (context.find_parameter(tok.text) || context.find_variable(tok.text)) continue;
    if (reported.insert(tok.text).second) missing.push_back(tok.text);
  }
  return missing;
}

// --- prompt listings -------------------------------------------------------

inline std::string parameter_listing(const std::vector<const Parameter*>& params) {
  std::string out;
  for (const auto* p : params) {
    Json j = Json::object();
    j["symbol"] = p->symbol;
    j["definition"] = p->definition;
    j["shape"] = p->shape;
    if (!out.empty()) out += "\n";
    out += j.dump();
  }
  return out;
}

inline std::string variable_listing(const std::vector<const VariableDecl*>& vars) {
  std::string out;
  for (const auto* v : vars) {
    Json j = Json::object();
    j["symbol"] = v->symbol;
    j["definition"] = v->definition;
    j["shape"] = v->shape;
    j["type"] = std::string(to_string(v->var_type));
    if (!out.empty()) out += "\n";
    out += j.dump();
  }
  return out;
}

inline std::vector<const Parameter*> all_parameters(const StructuredData& s) {
  std::vector<const Parameter*> out;
  for (const auto& p : s.parameters) out.push_back(&p);
  return out;
}

inline std::vector<const VariableDecl*> all_variables(const StructuredData& s) {
  std::vector<const VariableDecl*> out;
  for (const auto& v : s.variables) out.push_back(&v);
  return out;
}

// Parameters and variables a code fragment mentions, plus the scalar
// parameters that size them, in declaration order.
inline std::pair<std::vector<const Parameter*>, std::vector<const VariableDecl*>> related_symbols(
    std::string_view code, const StructuredData& s) {
  std::set<std::string> used;
  for (const auto& tok : detail::identifier_tokens(code)) used.insert(tok.text);
  std::set<std::string> wanted = used;
  for (const auto& p : s.parameters)
    if (used.count(p.symbol)) wanted.insert(p.shape.begin(), p.shape.end());
  for (const auto& v : s.variables)
    if (used.count(v.symbol)) wanted.insert(v.shape.begin(), v.shape.end());
  std::pair<std::vector<const Parameter*>, std::vector<const VariableDecl*>> out;
  for (const auto& p : s.parameters)
    if (wanted.count(p.symbol)) out.first.push_back(&p);
  for (const auto& v : s.variables)
    if (wanted.count(v.symbol)) out.second.push_back(&v);
  return out;
}

inline constexpr std::string_view kCodeHeader = "CODE:";
inline constexpr std::string_view kStructuredHeader = "STRUCTURED DATA:";

inline std::string problem_description(const StructuredData& s) {
  return s.source_problem ? s.source_problem->description : std::string();
}

inline std::string translate_prompt(const Anchor& anchor, const StructuredData& context,
                                    const TargetDialect& dialect, const PromptSet& prompts) {
  return prompts.translate.render({{"description", problem_description(context)},
                                   {"solver", dialect.name},
                                   {"constraint", anchor.description()},
                                   {"params", parameter_listing(all_parameters(context))},
                                   {"vars", variable_listing(all_variables(context))}});
}

inline std::string extract_prompt(const ProblemInstance& problem, const PromptSet& prompts) {
  return prompts.extract.render({{"description", problem.description}});
}

// Code for exactly one anchor. A reply without a CODE fence or that reads
// identifiers the context does not declare is re-requested once.
inline std::string translate_anchor(Gateway& gateway, const Anchor& anchor,
                                    const StructuredData& context, const TargetDialect& dialect,
                                    const PromptSet& prompts = {},
                                    const SamplingConfig& sampling = {}) {
  if (anchor.description().empty()) throw UsageError("anchor description is empty");
  CompletionRequest req{translate_prompt(anchor, context, dialect, prompts),
                        stage_temperature(Stage::translate, sampling), sampling.max_tokens,
                        Stage::translate};
  return complete_parsed(gateway, req, [&](const std::string& reply) {
    auto code = parse_fenced(reply, kCodeHeader);
    if (code.empty()) throw ParseError("empty code fragment");
    auto missing = undeclared_identifiers(code, context, dialect);
    if (!missing.empty())
      throw ParseError("fragment references undeclared identifiers: " +
                       detail::join(missing, ", "));
    return code;
  });
}

// Single-shot extraction; one re-request on a malformed reply.
inline StructuredData extract(Gateway& gateway, std::shared_ptr<const ProblemInstance> problem,
                              const PromptSet& prompts = {}, const SamplingConfig& sampling = {}) {
  if (!problem || problem->description.empty())
    throw UsageError("cannot extract from an empty problem description");
  CompletionRequest req{extract_prompt(*problem, prompts),
                        stage_temperature(Stage::extract, sampling), sampling.max_tokens,
                        Stage::extract};
  auto attempt = [&] {
    auto payload = parse_fenced(gateway.complete(req), kStructuredHeader);
    auto s = parse_structured_data(std::string_view(payload), problem);
    // anchors start untranslated whatever the reply put in code/error
    for (auto& a : s.anchors) a = Anchor(a.id(), a.kind(), a.description());
    return s;
  };
  try {
    return attempt();
  } catch (const ParseError&) {
  } catch (const SchemaError&) {
  }
  try {
    return attempt();
  } catch (const ParseError& e) {
    throw ParseError(std::string("extract: ") + e.what());
  } catch (const SchemaError& e) {
    throw SchemaError(std::string("extract: ") + e.what());
  }
}

}  // namespace anchoropt
