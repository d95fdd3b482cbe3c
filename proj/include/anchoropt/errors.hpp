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

#include <stdexcept>
#include <string>

namespace anchoropt {

// Base of every error raised by the library. Failures of a generated
// program are never exceptions; they are encoded in ExecutionResult.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller broke a precondition (empty text, missing code, bad config).
class UsageError : public Error {
 public:
  using Error::Error;
};

// Structured data failed validation.
class SchemaError : public Error {
 public:
  using Error::Error;
};

// An agent response did not follow the requested output format.
class ParseError : public Error {
 public:
  using Error::Error;
};

class MissingBinding : public Error {
 public:
  explicit MissingBinding(std::string placeholder)
      : Error("missing binding for placeholder {" + placeholder + "}"),
        placeholder_(std::move(placeholder)) {}
  const std::string& placeholder() const noexcept { return placeholder_; }

 private:
  std::string placeholder_;
};

class TransportError : public Error {
 public:
  explicit TransportError(const std::string& what, bool transient = true)
      : Error(what), transient_(transient) {}
  bool transient() const noexcept { return transient_; }

 private:
  bool transient_;
};

// Replay mode saw a request the cassette does not hold.
class ReplayMiss : public Error {
 public:
  ReplayMiss(std::string tag, std::string fingerprint)
      : Error("replay miss: no cassette entry for tag '" + tag +
              "' fingerprint " + fingerprint),
        tag_(std::move(tag)),
        fingerprint_(std::move(fingerprint)) {}
  const std::string& tag() const noexcept { return tag_; }
  const std::string& fingerprint() const noexcept { return fingerprint_; }

 private:
  std::string tag_;
  std::string fingerprint_;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class ZeroVector : public Error {
 public:
  using Error::Error;
};

class IncompleteModel : public Error {
 public:
  explicit IncompleteModel(std::size_t anchor_id)
      : Error("incomplete model: anchor " + std::to_string(anchor_id) +
              " has no code"),
        anchor_id_(anchor_id) {}
  std::size_t anchor_id() const noexcept { return anchor_id_; }

 private:
  std::size_t anchor_id_;
};

class SandboxUnavailable : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

// Wraps a failure inside a pipeline stage with where it happened.
// iteration is -1 outside the correction loop.
class StageError : public Error {
 public:
  StageError(std::string stage, int iteration, long anchor_id,
             const std::string& cause)
      : Error(describe(stage, iteration, anchor_id, cause)),
        stage_(std::move(stage)),
        iteration_(iteration),
        anchor_id_(anchor_id) {}

  const std::string& stage() const noexcept { return stage_; }
  int iteration() const noexcept { return iteration_; }
  long anchor_id() const noexcept { return anchor_id_; }

 private:
  static std::string describe(const std::string& stage, int iteration,
                              long anchor_id, const std::string& cause) {
    std::string out = "stage " + stage;
    if (iteration >= 0) out += " t=" + std::to_string(iteration);
    if (anchor_id >= 0) out += " anchor=" + std::to_string(anchor_id);
    return out + ": " + cause;
  }

  std::string stage_;
  int iteration_;
  long anchor_id_;
};

}  // namespace anchoropt
