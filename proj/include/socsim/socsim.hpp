//
// Copyright 2026 The socsim Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#pragma once

#include "socsim/backends.hpp"
#include "socsim/bounds.hpp"
#include "socsim/corpus.hpp"
#include "socsim/error.hpp"
#include "socsim/evaluation.hpp"
#include "socsim/metrics.hpp"
#include "socsim/prompts.hpp"
#include "socsim/report.hpp"
#include "socsim/rng.hpp"
#include "socsim/splits.hpp"
#include "socsim/synth.hpp"
#include "socsim/trainset.hpp"
