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

// Structured problem model: parameters and variables (rendered by
// templates) plus semantic anchors (constraints and the objective).

#include <algorithm>
#include <cstddef>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "anchoropt/errors.hpp"
#include "json.hpp"

namespace anchoropt {

using Json = nlohmann::ordered_json;

inline bool is_legal_symbol(std::string_view s) {
  if (s.empty()) return false;
  auto alpha = [](char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); };
  auto digit = [](char c) { return c >= '0' && c <= '9'; };
  if (!alpha(s.front())) return false;
  return std::all_of(s.begin(), s.end(),
                     [&](char c) { return alpha(c) || digit(c) || c == '_'; });
}

namespace detail {

inline bool is_numeric_tree(const Json& v) {
  if (v.is_number()) return true;
  if (!v.is_array()) return false;
  return std::all_of(v.begin(), v.end(), [](const Json& e) { return is_numeric_tree(e); });
}

}  // namespace detail

struct ProblemInstance {
  std::string id;
  std::string description;
  // symbol -> scalar or nested numeric array
  Json data = Json::object();
  std::optional<double> ground_truth_objective;
  std::optional<Json> ground_truth_solution;

  void validate() const {
    if (id.empty()) throw SchemaError("problem id is empty");
    if (description.empty()) throw SchemaError("problem '" + id + "' has an empty description");
    if (!data.is_object()) throw SchemaError("problem '" + id + "' data must be a JSON object");
    for (const auto& [key, value] : data.items()) {
      if (!is_legal_symbol(key))
        throw SchemaError("problem '" + id + "' data key '" + key + "' is not a legal symbol");
      if (!detail::is_numeric_tree(value))
        throw SchemaError("problem '" + id + "' data '" + key + "' is not numeric");
    }
  }

  friend bool operator==(const ProblemInstance&, const ProblemInstance&) = default;
};

inline Json to_json(const ProblemInstance& p) {
  Json j = Json::object();
  j["id"] = p.id;
  j["description"] = p.description;
  j["data"] = p.data;
  j["ground_truth_objective"] =
      p.ground_truth_objective ? Json(*p.ground_truth_objective) : Json(nullptr);
  if (p.ground_truth_solution) j["ground_truth_solution"] = *p.ground_truth_solution;
  return j;
}

inline ProblemInstance problem_from_json(const Json& j) {
  if (!j.is_object()) throw SchemaError("problem must be a JSON object");
  ProblemInstance p;
  if (auto it = j.find("id"); it != j.end()) {
    if (it->is_string()) p.id = it->get<std::string>();
    else if (it->is_number_integer()) p.id = std::to_string(it->get<long long>());
    else throw SchemaError("problem id must be a string");
  }
  if (auto it = j.find("description"); it != j.end() && it->is_string())
    p.description = it->get<std::string>();
  if (auto it = j.find("data"); it != j.end() && !it->is_null()) p.data = *it;
  if (auto it = j.find("ground_truth_objective"); it != j.end() && !it->is_null()) {
    if (!it->is_number()) throw SchemaError("ground_truth_objective must be a number");
    p.ground_truth_objective = it->get<double>();
  }
  if (auto it = j.find("ground_truth_solution"); it != j.end() && !it->is_null())
    p.ground_truth_solution = *it;
  p.validate();
  return p;
}

struct Parameter {
  std::string definition;
  std::string symbol;
  std::string value;
  std::vector<std::string> shape;  // empty = scalar
  std::string code;

  bool is_scalar() const { return shape.empty(); }
  friend bool operator==(const Parameter&, const Parameter&) = default;
};

enum class VarType { continuous, integer, binary };

inline std::string_view to_string(VarType t) {
  switch (t) {
    case VarType::continuous: return "continuous";
    case VarType::integer: return "integer";
    case VarType::binary: return "binary";
  }
  return "continuous";
}

inline VarType parse_var_type(std::string_view s) {
  if (s == "continuous") return VarType::continuous;
  if (s == "integer") return VarType::integer;
  if (s == "binary") return VarType::binary;
  throw SchemaError("unknown variable type '" + std::string(s) + "'");
}

struct VariableDecl {
  std::string symbol;
  std::vector<std::string> shape;
  VarType var_type = VarType::continuous;
  std::string definition;

  friend bool operator==(const VariableDecl&, const VariableDecl&) = default;
};

enum class AnchorKind { constraint, objective };
enum class AnchorStatus { unchecked, aligned, misaligned };

inline std::string_view to_string(AnchorKind k) {
  return k == AnchorKind::objective ? "objective" : "constraint";
}

inline std::string_view to_string(AnchorStatus s) {
  switch (s) {
    case AnchorStatus::unchecked: return "unchecked";
    case AnchorStatus::aligned: return "aligned";
    case AnchorStatus::misaligned: return "misaligned";
  }
  return "unchecked";
}

struct AnchorEvent {
  int iteration = 0;
  std::string event;
  std::string payload;
  friend bool operator==(const AnchorEvent&, const AnchorEvent&) = default;
};

// One constraint or the objective. State changes go through the mutators
// so that the flag/status invariants hold:
//   error_flag moves "" -> {"YES","NO"} and "YES" -> "NO" only;
//   status == aligned  iff  the latest verdict was aligned;
//   no code  =>  status == unchecked.
class Anchor {
 public:
  Anchor() = default;
  Anchor(std::size_t id, AnchorKind kind, std::string description)
      : id_(id), kind_(kind), description_(std::move(description)) {}

  std::size_t id() const noexcept { return id_; }
  AnchorKind kind() const noexcept { return kind_; }
  const std::string& description() const noexcept { return description_; }
  const std::optional<std::string>& code() const noexcept { return code_; }
  const std::optional<std::string>& reconstructed() const noexcept { return reconstructed_; }
  const std::string& error_flag() const noexcept { return error_flag_; }
  AnchorStatus status() const noexcept { return status_; }
  const std::vector<AnchorEvent>& history() const noexcept { return history_; }

  // New code invalidates any earlier verdict for alignment purposes but the
  // status stays as the last verdict left it; the next verification decides.
  void set_code(int iteration, std::string code, std::string event = "translated") {
    code_ = std::move(code);
    history_.push_back({iteration, std::move(event), *code_});
  }

  void set_reconstructed(int iteration, std::string text) {
    reconstructed_ = std::move(text);
    history_.push_back({iteration, "reconstructed", *reconstructed_});
  }

  void apply_verdict(int iteration, bool aligned) {
    if (!code_) throw UsageError("cannot verify an anchor without code");
    status_ = aligned ? AnchorStatus::aligned : AnchorStatus::misaligned;
    if (aligned) {
      error_flag_ = "NO";
    } else if (error_flag_.empty()) {
      error_flag_ = "YES";
    }
    history_.push_back({iteration, "verified", aligned ? "NO" : "YES"});
  }

  // Used only when loading persisted structured data.
  static Anchor restore(std::size_t id, AnchorKind kind, std::string description,
                        std::optional<std::string> code,
                        std::optional<std::string> reconstructed, std::string error_flag) {
    if (error_flag != "" && error_flag != "YES" && error_flag != "NO")
      throw SchemaError("anchor error flag must be \"\", \"YES\" or \"NO\", got '" +
                        error_flag + "'");
    Anchor a(id, kind, std::move(description));
    a.code_ = std::move(code);
    a.reconstructed_ = std::move(reconstructed);
    a.error_flag_ = std::move(error_flag);
    if (!a.code_) {
      a.status_ = AnchorStatus::unchecked;
    } else if (a.error_flag_ == "YES") {
      a.status_ = AnchorStatus::misaligned;
    } else if (a.error_flag_ == "NO") {
      a.status_ = AnchorStatus::aligned;
    }
    return a;
  }

  friend bool operator==(const Anchor&, const Anchor&) = default;

 private:
  std::size_t id_ = 0;
  AnchorKind kind_ = AnchorKind::constraint;
  std::string description_;
  std::optional<std::string> code_;
  std::optional<std::string> reconstructed_;
  std::string error_flag_;
  AnchorStatus status_ = AnchorStatus::unchecked;
  std::vector<AnchorEvent> history_;
};

struct StructuredData {
  std::vector<Parameter> parameters;
  std::vector<VariableDecl> variables;
  // constraints in declaration order, objective last
  std::vector<Anchor> anchors;
  std::shared_ptr<const ProblemInstance> source_problem;

  const Parameter* find_parameter(std::string_view symbol) const {
    for (const auto& p : parameters)
      if (p.symbol == symbol) return &p;
    return nullptr;
  }

  const VariableDecl* find_variable(std::string_view symbol) const {
    for (const auto& v : variables)
      if (v.symbol == symbol) return &v;
    return nullptr;
  }

  const Anchor& objective() const { return anchors.back(); }

  std::size_t constraint_count() const { return anchors.empty() ? 0 : anchors.size() - 1; }

  // Throws SchemaError on the first violated invariant.
  void validate() const {
    std::set<std::string> seen;
    std::set<std::string> scalar_params;
    for (const auto& p : parameters) {
      if (!is_legal_symbol(p.symbol))
        throw SchemaError("parameter symbol '" + p.symbol + "' is not a legal identifier");
      if (!seen.insert(p.symbol).second)
        throw SchemaError("duplicate symbol '" + p.symbol + "'");
      if (p.is_scalar()) scalar_params.insert(p.symbol);
    }
    for (const auto& v : variables) {
      if (!is_legal_symbol(v.symbol))
        throw SchemaError("variable symbol '" + v.symbol + "' is not a legal identifier");
      if (!seen.insert(v.symbol).second)
        throw SchemaError("duplicate symbol '" + v.symbol + "'");
    }
    auto check_shape = [&](const std::string& owner, const std::vector<std::string>& shape) {
      for (const auto& dim : shape)
        if (!scalar_params.count(dim))
          throw SchemaError("dangling shape symbol '" + dim + "' in '" + owner +
                            "' (must name a scalar parameter)");
    };
    for (const auto& p : parameters) check_shape(p.symbol, p.shape);
    for (const auto& v : variables) check_shape(v.symbol, v.shape);

    std::size_t objectives = 0;
    for (std::size_t i = 0; i < anchors.size(); ++i) {
      if (anchors[i].id() != i) throw SchemaError("anchor ids must be 0..n-1 in order");
      if (anchors[i].kind() == AnchorKind::objective) ++objectives;
    }
    if (objectives != 1 || anchors.back().kind() != AnchorKind::objective)
      throw SchemaError("structured data must end with exactly one objective anchor");
  }

  friend bool operator==(const StructuredData& a, const StructuredData& b) {
    auto same_source = [&] {
      if (!a.source_problem || !b.source_problem) return a.source_problem == b.source_problem;
      return *a.source_problem == *b.source_problem;
    };
    return a.parameters == b.parameters && a.variables == b.variables &&
           a.anchors == b.anchors && same_source();
  }
};

inline std::vector<Anchor> semantic_anchors(const StructuredData& s) { return s.anchors; }

namespace detail {

inline std::string require_string(const Json& obj, const char* field, const std::string& where) {
  auto it = obj.find(field);
  if (it == obj.end() || it->is_null())
    throw SchemaError(where + ": missing required field '" + field + "'");
  if (!it->is_string()) throw SchemaError(where + ": field '" + field + "' must be a string");
  return it->get<std::string>();
}

inline std::string optional_text(const Json& obj, const char* field) {
  auto it = obj.find(field);
  if (it == obj.end() || it->is_null()) return {};
  if (it->is_string()) return it->get<std::string>();
  return it->dump();
}

inline std::vector<std::string> read_shape(const Json& obj, const std::string& where) {
  auto it = obj.find("shape");
  if (it == obj.end() || it->is_null()) return {};
  if (!it->is_array()) throw SchemaError(where + ": shape must be a list");
  std::vector<std::string> shape;
  for (const auto& dim : *it) {
    if (!dim.is_string()) throw SchemaError(where + ": shape entries must be symbols");
    shape.push_back(dim.get<std::string>());
  }
  return shape;
}

inline Anchor read_anchor(const Json& obj, std::size_t id, AnchorKind kind,
                          const std::string& where) {
  if (!obj.is_object()) throw SchemaError(where + " must be an object");
  std::optional<std::string> code;
  if (auto it = obj.find("code"); it != obj.end() && !it->is_null()) {
    if (!it->is_string()) throw SchemaError(where + ": code must be a string or null");
    code = it->get<std::string>();
  }
  std::optional<std::string> recon;
  if (auto it = obj.find("description_new"); it != obj.end() && it->is_string())
    recon = it->get<std::string>();
  std::string flag;
  if (auto it = obj.find("error"); it != obj.end() && !it->is_null()) {
    if (!it->is_string()) throw SchemaError(where + ": error must be a string");
    flag = it->get<std::string>();
  }
  return Anchor::restore(id, kind, require_string(obj, "description", where), std::move(code),
                         std::move(recon), std::move(flag));
}

}  // namespace detail

// Reads the extraction JSON. Unknown fields are ignored; variables keep the
// order in which they first appear in the object.
inline StructuredData structured_data_from_json(const Json& root,
                                                std::shared_ptr<const ProblemInstance> problem) {
  if (!root.is_object()) throw SchemaError("structured data must be a JSON object");
  StructuredData s;
  s.source_problem = std::move(problem);

  auto params = root.find("parameters");
  if (params == root.end()) throw SchemaError("missing required field 'parameters'");
  if (!params->is_array()) throw SchemaError("'parameters' must be a list");
  for (std::size_t i = 0; i < params->size(); ++i) {
    const auto& p = (*params)[i];
    const std::string where = "parameters[" + std::to_string(i) + "]";
    if (!p.is_object()) throw SchemaError(where + " must be an object");
    Parameter param;
    param.symbol = detail::require_string(p, "symbol", where);
    param.definition = detail::optional_text(p, "definition");
    param.value = detail::optional_text(p, "value");
    param.shape = detail::read_shape(p, where);
    param.code = detail::optional_text(p, "code");
    s.parameters.push_back(std::move(param));
  }

  auto vars = root.find("variables");
  if (vars == root.end()) throw SchemaError("missing required field 'variables'");
  if (!vars->is_object()) throw SchemaError("'variables' must be an object keyed by symbol");
  for (const auto& [symbol, v] : vars->items()) {
    const std::string where = "variables." + symbol;
    if (!v.is_object()) throw SchemaError(where + " must be an object");
    VariableDecl decl;
    decl.symbol = symbol;
    decl.shape = detail::read_shape(v, where);
    decl.definition = detail::optional_text(v, "definition");
    if (auto it = v.find("type"); it != v.end() && !it->is_null()) {
      if (!it->is_string()) throw SchemaError(where + ": type must be a string");
      decl.var_type = parse_var_type(it->get<std::string>());
    }
    s.variables.push_back(std::move(decl));
  }

  auto cons = root.find("constraints");
  if (cons == root.end()) throw SchemaError("missing required field 'constraints'");
  if (!cons->is_array()) throw SchemaError("'constraints' must be a list");
  for (std::size_t i = 0; i < cons->size(); ++i)
    s.anchors.push_back(detail::read_anchor((*cons)[i], i, AnchorKind::constraint,
                                            "constraints[" + std::to_string(i) + "]"));

  auto obj = root.find("objective");
  if (obj == root.end() || obj->is_null()) throw SchemaError("missing required field 'objective'");
  s.anchors.push_back(
      detail::read_anchor(*obj, s.anchors.size(), AnchorKind::objective, "objective"));

  s.validate();
  return s;
}

inline StructuredData parse_structured_data(std::string_view raw,
                                            std::shared_ptr<const ProblemInstance> problem) {
  Json root;
  try {
    root = Json::parse(raw);
  } catch (const Json::parse_error& e) {
    throw SchemaError(std::string("structured data is not valid JSON: ") + e.what());
  }
  return structured_data_from_json(root, std::move(problem));
}

namespace detail {

inline Json anchor_json(const Anchor& a) {
  Json j = Json::object();
  j["description"] = a.description();
  j["code"] = a.code() ? Json(*a.code()) : Json(nullptr);
  j["error"] = a.error_flag();
  if (a.reconstructed()) j["description_new"] = *a.reconstructed();
  return j;
}

}  // namespace detail

// Emits the extraction JSON layout (parameters, constraints, variables,
// objective).
inline Json to_json(const StructuredData& s) {
  Json root = Json::object();
  Json params = Json::array();
  for (const auto& p : s.parameters) {
    Json j = Json::object();
    j["definition"] = p.definition;
    j["symbol"] = p.symbol;
    j["value"] = p.value;
    j["shape"] = p.shape;
    j["code"] = p.code;
    params.push_back(std::move(j));
  }
  root["parameters"] = std::move(params);

  Json cons = Json::array();
  for (const auto& a : s.anchors)
    if (a.kind() == AnchorKind::constraint) cons.push_back(detail::anchor_json(a));
  root["constraints"] = std::move(cons);

  Json vars = Json::object();
  for (const auto& v : s.variables) {
    Json j = Json::object();
    j["shape"] = v.shape;
    j["type"] = std::string(to_string(v.var_type));
    j["definition"] = v.definition;
    vars[v.symbol] = std::move(j);
  }
  root["variables"] = std::move(vars);
  root["objective"] = s.anchors.empty() ? Json(nullptr) : detail::anchor_json(s.objective());
  return root;
}

}  // namespace anchoropt
