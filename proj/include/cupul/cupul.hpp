// Copyright 2026 The cupul Authors.
//
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

#include "cupul/common.hpp"
#include "cupul/corpus.hpp"
#include "cupul/curriculum.hpp"
#include "cupul/distant.hpp"
#include "cupul/eval.hpp"
#include "cupul/model.hpp"
#include "cupul/pipeline.hpp"
#include "cupul/risk.hpp"
#include "cupul/training.hpp"
#include "cupul/voters.hpp"
