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

#include "anchoropt/assembler.hpp"
#include "anchoropt/bench.hpp"
#include "anchoropt/engine.hpp"
#include "anchoropt/errors.hpp"
#include "anchoropt/execution.hpp"
#include "anchoropt/gateway.hpp"
#include "anchoropt/pipeline.hpp"
#include "anchoropt/prompt_kit.hpp"
#include "anchoropt/schema.hpp"
#include "anchoropt/translator.hpp"
#include "anchoropt/verifier.hpp"
