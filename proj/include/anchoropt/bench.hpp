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

// Dataset ingestion, correctness judging and aggregate reporting.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <tuple>
#include <utility>
#include <vector>

#include "anchoropt/errors.hpp"
#include "anchoropt/execution.hpp"
#include "anchoropt/pipeline.hpp"
#include "anchoropt/schema.hpp"

namespace anchoropt {

enum class Difficulty { easy, hard };

struct DatasetManifest {
  std::string name;
  std::vector<ProblemInstance> problems;
  Difficulty difficulty_tag = Difficulty::easy;
  std::vector<std::string> warnings;
};

// JSON lines, one problem per line. Lines without a description are
// skipped with a warning.
inline DatasetManifest load_dataset(const std::string& path, Difficulty difficulty = Difficulty::easy) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset '" + path + "'");
  DatasetManifest m;
  m.name = path;
  if (auto slash = m.name.find_last_of('/'); slash != std::string::npos) m.name.erase(0, slash + 1);
  if (auto dot = m.name.find('.'); dot != std::string::npos) m.name.erase(dot);
  m.difficulty_tag = difficulty;

  std::set<std::string> ids;
  std::string line;
  std::size_t lineno = 0, nonblank = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ++nonblank;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::parse_error& e) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (!j.is_object()) throw FormatError(path + ":" + std::to_string(lineno) + ": not an object");
    auto desc = j.find("description");
    if (desc == j.end() || !desc->is_string() || desc->get<std::string>().empty()) {
      m.warnings.push_back(path + ":" + std::to_string(lineno) + ": no description, skipped");
      std::clog << "warning: " << m.warnings.back() << '\n';
      continue;
    }
    ProblemInstance p;
    try {
      p = problem_from_json(j);
    } catch (const SchemaError& e) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (!ids.insert(p.id).second)
      throw FormatError(path + ":" + std::to_string(lineno) + ": duplicate id '" + p.id + "'");
    m.problems.push_back(std::move(p));
  }
  if (nonblank == 0) throw FormatError("dataset '" + path + "' is empty");
  return m;
}

enum class FailureKind { exec_error, wrong_objective, wrong_solution, timeout, stage_error };

inline std::string_view to_string(FailureKind k) {
  switch (k) {
    case FailureKind::exec_error: return "exec_error";
    case FailureKind::wrong_objective: return "wrong_objective";
    case FailureKind::wrong_solution: return "wrong_solution";
    case FailureKind::timeout: return "timeout";
    case FailureKind::stage_error: return "stage_error";
  }
  return "stage_error";
}

struct JudgeOptions {
  double rel_tol = 1e-4;
  bool check_solution = false;
};

struct Judgement {
  bool correct = false;
  std::optional<FailureKind> failure_kind;
};

namespace detail {

inline bool within(double value, double truth, double rel_tol) {
  return std::fabs(value - truth) <= rel_tol * std::max(1.0, std::fabs(truth));
}

inline bool values_match(const Json& got, const Json& want, double rel_tol) {
  if (want.is_number()) return got.is_number() && within(got.get<double>(), want.get<double>(), rel_tol);
  if (want.is_array()) {
    if (!got.is_array() || got.size() != want.size()) return false;
    for (std::size_t i = 0; i < want.size(); ++i)
      if (!values_match(got[i], want[i], rel_tol)) return false;
    return true;
  }
  return got == want;
}

}  // namespace detail

// Clauses in order: ran to optimality, objective within tolerance, and
// (optionally) the recorded solution values.
inline Judgement judge(const ExecutionResult& result, const ProblemInstance& problem,
                       const JudgeOptions& opts = {}) {
  if (!problem.ground_truth_objective)
    throw UsageError("problem '" + problem.id + "' has no ground-truth objective");
  if (result.status == ExecStatus::timeout) return {false, FailureKind::timeout};
  if (is_execution_failure(result.status)) return {false, FailureKind::exec_error};
  if (result.status != ExecStatus::optimal || !result.objective)
    return {false, FailureKind::wrong_objective};
  if (!detail::within(*result.objective, *problem.ground_truth_objective, opts.rel_tol))
    return {false, FailureKind::wrong_objective};
  if (opts.check_solution && problem.ground_truth_solution) {
    const Json& truth = *problem.ground_truth_solution;
    if (!result.solution) return {false, FailureKind::wrong_solution};
    for (const auto& [symbol, want] : truth.items()) {
      auto it = result.solution->find(symbol);
      if (it == result.solution->end() || !detail::values_match(*it, want, opts.rel_tol))
        return {false, FailureKind::wrong_solution};
    }
  }
  return {true, std::nullopt};
}

struct EvalRecord {
  std::string problem_id;
  int repeat = 0;
  bool correct = false;
  std::optional<FailureKind> failure_kind;
  std::size_t corrections = 0;
  int debug_attempts = 0;
  double run_time = 0.0;
  std::string detail;

  // run_time is left out: it is the only field that varies under replay
  bool same_outcome(const EvalRecord& o) const {
    return problem_id == o.problem_id && repeat == o.repeat && correct == o.correct &&
           failure_kind == o.failure_kind && corrections == o.corrections &&
           debug_attempts == o.debug_attempts && detail == o.detail;
  }
};

struct BenchReport {
  std::string label;
  double accuracy = 0.0;
  double run_time_mean = 0.0;
  double corrections_mean = 0.0;
  double corrections_std = 0.0;
  double debug_mean = 0.0;
  double debug_std = 0.0;
  std::vector<EvalRecord> per_problem;
};

namespace detail {

// population mean and standard deviation
inline std::pair<double, double> mean_std(const std::vector<double>& xs) {
  if (xs.empty()) return {0.0, 0.0};
  double sum = 0.0;
  for (double x : xs) sum += x;
  double mean = sum / static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(xs.size()))};
}

}  // namespace detail

inline BenchReport aggregate(std::vector<EvalRecord> records, std::string label = {}) {
  BenchReport r;
  r.label = std::move(label);
  std::vector<double> corrections, debugs, times;
  std::size_t correct = 0;
  for (const auto& rec : records) {
    correct += rec.correct;
    corrections.push_back(static_cast<double>(rec.corrections));
    debugs.push_back(rec.debug_attempts);
    times.push_back(rec.run_time);
  }
  r.accuracy = records.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(records.size());
  r.run_time_mean = detail::mean_std(times).first;
  std::tie(r.corrections_mean, r.corrections_std) = detail::mean_std(corrections);
  std::tie(r.debug_mean, r.debug_std) = detail::mean_std(debugs);
  r.per_problem = std::move(records);
  return r;
}

using Evaluator = std::function<EvalRecord(const ProblemInstance&, int repeat)>;

// Runs every (problem, repeat) pair on up to `parallelism` threads. Records
// are stored by job index, so the report does not depend on scheduling.
// A failing job becomes a stage_error record; an unusable runner aborts the
// whole sweep with SandboxUnavailable.
inline BenchReport run_bench(const DatasetManifest& manifest, const Evaluator& evaluate,
                             int parallelism = 1, int repeats = 5, std::string label = {}) {
  if (parallelism < 1) throw UsageError("parallelism must be >= 1");
  if (repeats < 1) throw UsageError("repeats must be >= 1");
  const std::size_t jobs = manifest.problems.size() * static_cast<std::size_t>(repeats);
  std::vector<EvalRecord> records(jobs);
  std::atomic<std::size_t> next{0};
  std::atomic<bool> aborted{false};
  std::exception_ptr abort_cause;
  std::mutex abort_mutex;
  auto worker = [&] {
    for (std::size_t k; !aborted && (k = next.fetch_add(1)) < jobs;) {
      const auto& problem = manifest.problems[k / static_cast<std::size_t>(repeats)];
      const int repeat = static_cast<int>(k % static_cast<std::size_t>(repeats));
      try {
        records[k] = evaluate(problem, repeat);
      } catch (const SandboxUnavailable&) {
        std::lock_guard lock(abort_mutex);
        if (!abort_cause) abort_cause = std::current_exception();
        aborted = true;
      } catch (const std::exception& e) {
        records[k] = {problem.id, repeat, false, FailureKind::stage_error, 0, 0, 0.0, e.what()};
      }
    }
  };
  std::vector<std::thread> pool;
  const auto n = std::min<std::size_t>(static_cast<std::size_t>(parallelism), std::max<std::size_t>(jobs, 1));
  for (std::size_t i = 0; i < n; ++i) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (abort_cause) std::rethrow_exception(abort_cause);
  return aggregate(std::move(records), std::move(label));
}

// Full pipeline per job. The gateway is forked per job so replay cursors
// are private to one (problem, repeat) evaluation.
inline Evaluator pipeline_evaluator(std::shared_ptr<Gateway> gateway,
                                    std::shared_ptr<ProgramExecutor> executor, PipelineConfig cfg,
                                    JudgeOptions judge_opts = {}) {
  return [gateway, executor, cfg = std::move(cfg), judge_opts](const ProblemInstance& problem,
                                                               int repeat) {
    EvalRecord rec;
    rec.problem_id = problem.id;
    rec.repeat = repeat;
    auto shared = std::make_shared<const ProblemInstance>(problem);
    SolveOutcome outcome;
    try {
      outcome = solve(gateway->fork(), executor.get(), shared, cfg);
    } catch (const SandboxUnavailable&) {
      throw;
    } catch (const Error& e) {
      rec.failure_kind = FailureKind::stage_error;
      rec.detail = e.what();
      return rec;
    }
    rec.corrections = outcome.correction.trace.corrections_total;
    rec.debug_attempts = outcome.debug_attempts;
    rec.run_time = outcome.run_time;
    if (!outcome.result) {
      rec.failure_kind = FailureKind::exec_error;
      rec.detail = "no executor";
      return rec;
    }
    auto verdict = judge(*outcome.result, problem, judge_opts);
    rec.correct = verdict.correct;
    rec.failure_kind = verdict.failure_kind;
    if (outcome.result->objective) {
      std::ostringstream os;
      os << std::setprecision(17) << *outcome.result->objective;
      rec.detail = "objective " + os.str();
    } else {
      rec.detail = std::string(to_string(outcome.result->status));
    }
    return rec;
  };
}

inline Json to_json(const BenchReport& r, bool with_timings = true) {
  Json j = Json::object();
  j["label"] = r.label;
  j["accuracy"] = r.accuracy;
  if (with_timings) j["run_time_mean"] = r.run_time_mean;
  j["corrections_mean"] = r.corrections_mean;
  j["corrections_std"] = r.corrections_std;
  j["debug_mean"] = r.debug_mean;
  j["debug_std"] = r.debug_std;
  Json rows = Json::array();
  for (const auto& rec : r.per_problem) {
    Json row = Json::object();
    row["problem_id"] = rec.problem_id;
    row["repeat"] = rec.repeat;
    row["correct"] = rec.correct;
    row["failure_kind"] =
        rec.failure_kind ? Json(std::string(to_string(*rec.failure_kind))) : Json(nullptr);
    row["corrections"] = rec.corrections;
    row["debug_attempts"] = rec.debug_attempts;
    if (with_timings) row["run_time"] = rec.run_time;
    row["detail"] = rec.detail;
    rows.push_back(std::move(row));
  }
  j["per_problem"] = std::move(rows);
  return j;
}

namespace detail {

// Left-justifies to `width` display columns; UTF-8 continuation bytes do
// not take a column.
inline std::string pad(const std::string& text, std::size_t width) {
  std::size_t cols = 0;
  for (unsigned char c : text) cols += (c & 0xC0) != 0x80;
  return cols >= width ? text : text + std::string(width - cols, ' ');
}

}  // namespace detail

// Accuracy, run time, corrections and debugging attempts (mean ± std), one
// column group per report. Time columns are wall-clock and marked with '*'.
inline std::string render_table(std::string_view dataset, const std::vector<BenchReport>& reports) {
  auto fmt = [](const char* f, double a, double b = 0.0) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, a, b);
    return std::string(buf);
  };
  std::string header = detail::pad("Dataset", 14);
  std::string row = detail::pad(std::string(dataset), 14);
  for (const auto& r : reports) {
    const std::string tag = r.label.empty() ? "" : " (" + r.label + ")";
    header += " | " + detail::pad("Acc" + tag, 10) + " | " + detail::pad("Time*" + tag, 11) +
              " | " + detail::pad("Corr" + tag, 16) + " | " + detail::pad("Debug" + tag, 16);
    row += " | " + detail::pad(fmt("%.1f%%", 100.0 * r.accuracy), 10) + " | " +
           detail::pad(fmt("%.2f", r.run_time_mean), 11) + " | " +
           detail::pad(fmt("%.2f ± %.2f", r.corrections_mean, r.corrections_std), 16) + " | " +
           detail::pad(fmt("%.2f ± %.2f", r.debug_mean, r.debug_std), 16);
  }
  auto rstrip = [](std::string s) {
    while (!s.empty() && s.back() == ' ') s.pop_back();
    return s;
  };
  return rstrip(header) + "\n" + rstrip(row) + "\n* wall-clock seconds; varies between runs\n";
}

}  // namespace anchoropt
