// Copyright 2026 The subq Authors
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


// Umbrella header.

#ifndef SUBQ_SUBQ_HPP_
#define SUBQ_SUBQ_HPP_

#include "subq/bellman.hpp"
#include "subq/env_config.hpp"
#include "subq/env_model.hpp"
#include "subq/envs.hpp"
#include "subq/errors.hpp"
#include "subq/experiment.hpp"
#include "subq/lattice.hpp"
#include "subq/oracle.hpp"
#include "subq/q_table.hpp"
#include "subq/rng.hpp"
#include "subq/stats.hpp"
#include "subq/subsample_q.hpp"
#include "subq/verify.hpp"

#endif  // SUBQ_SUBQ_HPP_
