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


// anchoropt: solve one problem, run a benchmark sweep, inspect a run trace,
// or inspect a cassette.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "anchoropt/anchoropt.hpp"
#include "anchoropt/openai_transport.hpp"

namespace fs = std::filesystem;
using namespace anchoropt;

namespace {

// Settings shared by solve and bench: config file values, then flags.
struct Settings {
  std::string config_path;
  std::string gateway = "replay";
  std::string cassette;
  std::string verifier = "llm";
  double tau = 0.75;
  int t_max = 5;
  bool freeze_aligned = true;
  int debug_attempts = 3;
  std::string solver;
  std::string dialect_path;
  std::string dialects_dir;
  std::string prompts_dir;
  int parallel = 1;
  int repeats = 5;
  std::vector<std::string> runner;
  double exec_timeout = 60.0;
  SamplingConfig sampling;
  ProviderConfig provider;
  JudgeOptions judge;
};

struct Flags {
  std::optional<std::string> gateway, cassette, verifier, solver, dialect, prompts, runner;
  std::optional<double> tau, exec_timeout;
  std::optional<int> t_max, debug_attempts, parallel, repeats;
};

std::vector<std::string> split_command(const std::string& cmd) {
  std::istringstream in(cmd);
  std::vector<std::string> out;
  for (std::string word; in >> word;) out.push_back(word);
  return out;
}

std::string resolve(const fs::path& base, const std::string& p) {
  if (p.empty() || fs::path(p).is_absolute()) return p;
  return (base / p).string();
}

void check_keys(const Json& j, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key)) throw UsageError("unknown config key '" + where + key + "'");
}

void load_config(Settings& s) {
  if (s.config_path.empty()) return;
  std::ifstream in(s.config_path);
  if (!in) throw IoError("cannot open config file '" + s.config_path + "'");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw FormatError("config file '" + s.config_path + "': " + e.what());
  }
  if (!j.is_object()) throw FormatError("config file '" + s.config_path + "' must hold an object");
  check_keys(j,
             {"gateway", "cassette", "verifier", "t_max", "freeze_aligned", "debug_attempts",
              "solver", "dialect", "dialects_dir", "prompts_dir", "parallel", "repeats", "runner",
              "exec_timeout", "sampling", "provider", "judge"},
             "");
  const fs::path base = fs::path(s.config_path).parent_path();
  try {
    s.gateway = j.value("gateway", s.gateway);
    s.cassette = resolve(base, j.value("cassette", s.cassette));
    if (auto v = j.find("verifier"); v != j.end()) {
      check_keys(*v, {"method", "tau"}, "verifier.");
      s.verifier = v->value("method", s.verifier);
      s.tau = v->value("tau", s.tau);
    }
    s.t_max = j.value("t_max", s.t_max);
    s.freeze_aligned = j.value("freeze_aligned", s.freeze_aligned);
    s.debug_attempts = j.value("debug_attempts", s.debug_attempts);
    s.solver = j.value("solver", s.solver);
    s.dialect_path = resolve(base, j.value("dialect", s.dialect_path));
    s.dialects_dir = resolve(base, j.value("dialects_dir", s.dialects_dir));
    s.prompts_dir = resolve(base, j.value("prompts_dir", s.prompts_dir));
    s.parallel = j.value("parallel", s.parallel);
    s.repeats = j.value("repeats", s.repeats);
    if (auto r = j.find("runner"); r != j.end())
      s.runner = r->is_string() ? split_command(r->get<std::string>())
                                : r->get<std::vector<std::string>>();
    s.exec_timeout = j.value("exec_timeout", s.exec_timeout);
    if (auto v = j.find("sampling"); v != j.end()) {
      check_keys(*v, {"temperature", "max_tokens"}, "sampling.");
      s.sampling.temperature = v->value("temperature", s.sampling.temperature);
      s.sampling.max_tokens = v->value("max_tokens", s.sampling.max_tokens);
    }
    if (auto v = j.find("provider"); v != j.end()) {
      check_keys(*v, {"url", "chat_model", "embedding_model", "api_key", "timeout_seconds"},
                 "provider.");
      s.provider.base_url = v->value("url", s.provider.base_url);
      s.provider.chat_model = v->value("chat_model", s.provider.chat_model);
      s.provider.embedding_model = v->value("embedding_model", s.provider.embedding_model);
      s.provider.api_key = v->value("api_key", s.provider.api_key);
      s.provider.timeout_seconds = v->value("timeout_seconds", s.provider.timeout_seconds);
    }
    if (auto v = j.find("judge"); v != j.end()) {
      check_keys(*v, {"rel_tol", "check_solution"}, "judge.");
      s.judge.rel_tol = v->value("rel_tol", s.judge.rel_tol);
      s.judge.check_solution = v->value("check_solution", s.judge.check_solution);
    }
  } catch (const Json::type_error& e) {
    throw UsageError("config file '" + s.config_path + "': " + e.what());
  }
}

void apply_flags(Settings& s, const Flags& f) {
  if (f.gateway) s.gateway = *f.gateway;
  if (f.cassette) s.cassette = *f.cassette;
  if (f.verifier) s.verifier = *f.verifier;
  if (f.solver) s.solver = *f.solver;
  if (f.dialect) s.dialect_path = *f.dialect;
  if (f.prompts) s.prompts_dir = *f.prompts;
  if (f.runner) s.runner = split_command(*f.runner);
  if (f.tau) s.tau = *f.tau;
  if (f.exec_timeout) s.exec_timeout = *f.exec_timeout;
  if (f.t_max) s.t_max = *f.t_max;
  if (f.debug_attempts) s.debug_attempts = *f.debug_attempts;
  if (f.parallel) s.parallel = *f.parallel;
  if (f.repeats) s.repeats = *f.repeats;
  s.provider.apply_environment();
}

void add_engine_flags(CLI::App* cmd, Settings& s, Flags& f) {
  cmd->add_option("--config", s.config_path, "JSON config file; flags override it");
  cmd->add_option("--gateway", f.gateway, "live | record | replay (default replay)");
  cmd->add_option("--cassette", f.cassette, "cassette file for replay or record");
  cmd->add_option("--verifier", f.verifier, "llm | similarity");
  cmd->add_option("--tau", f.tau, "similarity threshold in [0, 1]");
  cmd->add_option("--t-max", f.t_max, "maximum correction iterations");
  cmd->add_option("--debug-attempts", f.debug_attempts, "repair attempts after a failed run");
  cmd->add_option("--solver", f.solver, "target dialect name; forwarded to the runner");
  cmd->add_option("--dialect", f.dialect, "dialect definition file");
  cmd->add_option("--prompts", f.prompts, "directory with prompt template overrides");
  cmd->add_option("--runner", f.runner, "runner command line; omit to stop after assembly");
  cmd->add_option("--exec-timeout", f.exec_timeout, "seconds per program execution");
}

TargetDialect select_dialect(const Settings& s) {
  if (!s.dialect_path.empty()) {
    auto d = load_dialect(s.dialect_path);
    if (!s.solver.empty() && s.solver != d.name)
      throw UsageError("--solver '" + s.solver + "' does not match dialect '" + d.name + "'");
    return d;
  }
  if (s.solver.empty() || s.solver == default_dialect().name) return default_dialect();
  std::string dir = s.dialects_dir;
  if (dir.empty())
    if (const char* env = std::getenv("ANCHOROPT_DIALECTS_DIR")) dir = env;
  if (dir.empty())
    throw UsageError("unknown solver '" + s.solver + "'; pass --dialect or set dialects_dir");
  return load_dialect(fs::path(dir) / (s.solver + ".json"));
}

std::shared_ptr<Gateway> make_gateway(const Settings& s) {
  const auto mode = parse_gateway_mode(s.gateway);
  if (mode == GatewayMode::replay) {
    if (s.cassette.empty()) throw UsageError("replay mode needs --cassette");
    return Gateway::replay(std::make_shared<const Cassette>(Cassette::load(s.cassette)));
  }
  auto transport = std::make_shared<OpenAiTransport>(s.provider);
  if (mode == GatewayMode::live) return Gateway::live(transport);
  if (s.cassette.empty()) throw UsageError("record mode needs --cassette");
  auto sink = std::make_shared<Cassette>();
  sink->attach_file(s.cassette);
  return Gateway::record(transport, sink);
}

PipelineConfig make_pipeline(const Settings& s, VerifyMethod method) {
  PipelineConfig cfg;
  cfg.engine.t_max = s.t_max;
  cfg.engine.freeze_aligned = s.freeze_aligned;
  cfg.engine.verifier = {method, s.tau};
  cfg.engine.sampling = s.sampling;
  cfg.engine.validate();
  cfg.dialect = select_dialect(s);
  if (!s.prompts_dir.empty()) cfg.prompts = PromptSet::load_dir(s.prompts_dir);
  if (s.debug_attempts < 0) throw UsageError("--debug-attempts must be >= 0");
  cfg.debug_attempts = s.debug_attempts;
  if (!(s.exec_timeout > 0)) throw UsageError("--exec-timeout must be positive");
  cfg.exec_timeout = s.exec_timeout;
  return cfg;
}

std::shared_ptr<ProgramExecutor> make_executor(const Settings& s) {
  if (s.runner.empty()) return nullptr;
  auto argv = s.runner;
  if (!s.solver.empty()) {
    argv.push_back("--solver");
    argv.push_back(s.solver);
  }
  return std::make_shared<RunnerClient>(argv);
}

Json read_json(const std::string& path, const std::string& what) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + what + " '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw FormatError(what + " '" + path + "' is not valid JSON: " + e.what());
  }
}

// A problem file may carry its data inline or as a path relative to itself.
std::shared_ptr<const ProblemInstance> load_problem(const std::string& path,
                                                    const std::string& data_path) {
  Json j = read_json(path, "problem file");
  if (!j.is_object()) throw FormatError("problem file '" + path + "' must hold an object");
  std::string data_file = data_path;
  if (data_file.empty()) {
    if (auto it = j.find("data"); it != j.end() && it->is_string())
      data_file = resolve(fs::path(path).parent_path(), it->get<std::string>());
  }
  if (!data_file.empty()) j["data"] = read_json(data_file, "data file");
  try {
    return std::make_shared<const ProblemInstance>(problem_from_json(j));
  } catch (const SchemaError& e) {
    throw FormatError("problem file '" + path + "': " + e.what());
  }
}

std::string number(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::string join_sizes(const std::vector<std::size_t>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? " " : "") + std::to_string(xs[i]);
  return out;
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << text;
}

void print_trace_summary(const RunTrace& t) {
  std::cout << "verifier: " << t.verifier_method << '\n';
  std::cout << "error sets: " << join_sizes(t.error_set_sizes) << '\n';
  std::cout << "corrections: " << t.corrections_total << '\n';
  std::cout << "converged: " << (t.converged() ? "yes" : "no") << '\n';
  if (!t.residual_errors.empty())
    std::cout << "residual anchors: " << join_sizes(t.residual_errors) << '\n';
}

int cmd_solve(Settings& s, const Flags& f, const std::string& problem_path,
              const std::string& data_path, const std::string& trace_out,
              const std::string& program_out) {
  load_config(s);
  apply_flags(s, f);
  auto problem = load_problem(problem_path, data_path);
  auto cfg = make_pipeline(s, parse_verify_method(s.verifier));
  auto gateway = make_gateway(s);
  auto executor = make_executor(s);

  auto out = solve(gateway, executor.get(), problem, cfg);
  std::cout << "problem: " << problem->id << '\n';
  print_trace_summary(out.correction.trace);
  std::cout << "program lines: " << std::count(out.program.source.begin(), out.program.source.end(), '\n')
            << '\n';
  if (out.result) {
    std::cout << "status: " << to_string(out.result->status) << '\n';
    if (out.result->objective) std::cout << "objective: " << number(*out.result->objective) << '\n';
    if (out.result->solution) std::cout << "solution: " << out.result->solution->dump() << '\n';
    if (out.result->error_text) std::cout << "error: " << *out.result->error_text << '\n';
    std::cout << "debug attempts: " << out.debug_attempts << '\n';
    if (problem->ground_truth_objective && out.result) {
      auto verdict = judge(*out.result, *problem, s.judge);
      std::cout << "correct: " << (verdict.correct ? "yes" : "no") << '\n';
    }
  } else {
    std::cout << "status: not executed (no runner)\n";
  }
  if (!trace_out.empty()) write_file(trace_out, to_json(out.correction.trace).dump(2) + "\n");
  if (!program_out.empty()) write_file(program_out, out.program.source);
  return 0;
}

int cmd_bench(Settings& s, const Flags& f, const std::string& dataset_path,
              const std::string& method, const std::string& report_out, bool hard) {
  load_config(s);
  apply_flags(s, f);
  std::vector<VerifyMethod> methods;
  const std::string m = method.empty() ? s.verifier : method;
  if (m == "both") {
    methods = {VerifyMethod::llm, VerifyMethod::similarity};
  } else {
    methods = {parse_verify_method(m)};
  }
  auto manifest = load_dataset(dataset_path, hard ? Difficulty::hard : Difficulty::easy);
  auto gateway = make_gateway(s);
  auto executor = make_executor(s);

  std::vector<BenchReport> reports;
  for (auto vm : methods) {
    auto cfg = make_pipeline(s, vm);
    const std::string label = vm == VerifyMethod::llm ? "llm" : "sim";
    reports.push_back(run_bench(manifest, pipeline_evaluator(gateway, executor, cfg, s.judge),
                                s.parallel, s.repeats, label));
  }
  std::cout << render_table(manifest.name, reports);
  if (!report_out.empty()) {
    Json j = Json::object();
    j["dataset"] = manifest.name;
    j["problems"] = manifest.problems.size();
    j["repeats"] = s.repeats;
    j["reports"] = Json::array();
    for (const auto& r : reports) j["reports"].push_back(to_json(r));
    write_file(report_out, j.dump(2) + "\n");
  }
  return 0;
}

int cmd_trace(const std::string& path, const std::string& csv_out) {
  auto t = load_trace(path);
  if (t.error_set_sizes.empty()) {
    std::cout << "no iterations\n";
  } else {
    std::cout << "iterations: " << t.iterations() << '\n';
    print_trace_summary(t);
    std::cout << "timeline:\n";
    for (const auto& e : t.anchor_events) {
      std::cout << "  t=" << e.iteration << " anchor=" << e.anchor_id << ' ' << e.event;
      if (e.event == "verified") std::cout << ' ' << e.detail;
      std::cout << '\n';
    }
  }
  if (!csv_out.empty()) write_file(csv_out, trace_csv(t));
  return 0;
}

bool is_hex64(const std::string& s) {
  return s.size() == 64 && s.find_first_not_of("0123456789abcdef") == std::string::npos;
}

int cmd_cassette(const std::string& action, const std::string& path) {
  auto cassette = Cassette::load(path);
  const auto entries = cassette.entries();
  if (action == "list") {
    std::map<std::string, std::size_t> per_tag;
    std::set<std::string> prints;
    for (const auto& e : entries) {
      ++per_tag[e.tag];
      prints.insert(e.fingerprint);
    }
    std::cout << "entries: " << entries.size() << '\n';
    std::cout << "distinct requests: " << prints.size() << '\n';
    for (const auto& [tag, n] : per_tag) std::cout << "  " << tag << ": " << n << '\n';
    return 0;
  }
  std::size_t problems = 0;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    auto report = [&](const std::string& what) {
      std::cout << "entry " << (i + 1) << ": " << what << '\n';
      ++problems;
    };
    if (e.tag != kEmbedTag) {
      try {
        parse_stage(e.tag);
      } catch (const Error&) {
        report("unknown tag '" + e.tag + "'");
      }
    }
    if (!is_hex64(e.fingerprint)) report("malformed fingerprint");
    if (!e.prompt_sha.empty() && !is_hex64(e.prompt_sha)) report("malformed prompt_sha");
    if (e.tag == kEmbedTag) {
      try {
        EmbeddingVector(nlohmann::json::parse(e.response).get<std::vector<double>>());
      } catch (const std::exception&) {
        report("embedding response is not a finite numeric array");
      }
    } else if (e.response.empty()) {
      report("empty response");
    }
  }
  if (problems) return 1;
  std::cout << "ok: " << entries.size() << " entries\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"anchoropt: natural-language optimization modeling with anchor verification"};
  app.require_subcommand(1);
  Settings settings;
  Flags flags;

  auto* solve_cmd = app.add_subcommand("solve", "solve one problem file");
  std::string problem_path, data_path, trace_out, program_out;
  solve_cmd->add_option("problem", problem_path, "problem JSON file")->required();
  solve_cmd->add_option("--data", data_path, "data JSON file; replaces the problem's data");
  solve_cmd->add_option("--trace-out", trace_out, "write the run trace as JSON");
  solve_cmd->add_option("--program-out", program_out, "write the final program");
  add_engine_flags(solve_cmd, settings, flags);

  auto* bench_cmd = app.add_subcommand("bench", "run a benchmark sweep over a JSONL dataset");
  std::string dataset_path, method, report_out;
  bool hard = false;
  bench_cmd->add_option("dataset", dataset_path, "dataset JSONL file")->required();
  bench_cmd->add_option("--method", method, "llm | sim | both (default: --verifier)")
      ->check(CLI::IsMember({"llm", "sim", "similarity", "both"}));
  bench_cmd->add_option("--parallel", flags.parallel, "concurrent evaluations");
  bench_cmd->add_option("--repeats", flags.repeats, "runs per problem");
  bench_cmd->add_option("--report-out", report_out, "write the JSON report");
  bench_cmd->add_flag("--hard", hard, "tag the dataset as hard");
  add_engine_flags(bench_cmd, settings, flags);

  auto* trace_cmd = app.add_subcommand("trace", "summarize a run trace");
  std::string trace_path, csv_out;
  trace_cmd->add_option("trace", trace_path, "trace JSON file")->required();
  trace_cmd->add_option("--csv", csv_out, "write iteration,error_count rows");

  auto* cassette_cmd = app.add_subcommand("cassette", "inspect a cassette file");
  std::string action, cassette_path;
  cassette_cmd->add_option("action", action, "list | check")
      ->required()
      ->check(CLI::IsMember({"list", "check"}));
  cassette_cmd->add_option("file", cassette_path, "cassette JSONL file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*solve_cmd)
      return cmd_solve(settings, flags, problem_path, data_path, trace_out, program_out);
    if (*bench_cmd) return cmd_bench(settings, flags, dataset_path, method, report_out, hard);
    if (*trace_cmd) return cmd_trace(trace_path, csv_out);
    if (*cassette_cmd) return cmd_cassette(action, cassette_path);
  } catch (const UsageError& e) {
    std::cerr << "anchoropt: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "anchoropt: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
