// Copyright 2026 The kgdiff Authors.
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

#ifndef KGDIFF_KGDIFF_HPP_
#define KGDIFF_KGDIFF_HPP_

#include "kgdiff/alignment.hpp"
#include "kgdiff/autodiff.hpp"
#include "kgdiff/checkpoint.hpp"
#include "kgdiff/common.hpp"
#include "kgdiff/config.hpp"
#include "kgdiff/graph.hpp"
#include "kgdiff/metrics.hpp"
#include "kgdiff/model.hpp"
#include "kgdiff/objective.hpp"
#include "kgdiff/sampler.hpp"
#include "kgdiff/schedule.hpp"
#include "kgdiff/toy.hpp"
#include "kgdiff/train.hpp"
#include "kgdiff/vocab.hpp"

#endif  // KGDIFF_KGDIFF_HPP_
