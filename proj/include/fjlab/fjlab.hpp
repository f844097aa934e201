/*
 * Copyright 2026 The fjlab Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Convenience header pulling in the whole library.

#ifndef FJLAB_FJLAB_HPP_
#define FJLAB_FJLAB_HPP_

#include "fjlab/commands.hpp"
#include "fjlab/config.hpp"
#include "fjlab/domain.hpp"
#include "fjlab/dynamics.hpp"
#include "fjlab/error.hpp"
#include "fjlab/estimation.hpp"
#include "fjlab/io.hpp"
#include "fjlab/metrics.hpp"
#include "fjlab/random.hpp"
#include "fjlab/routing.hpp"
#include "fjlab/scenarios.hpp"

#endif  // FJLAB_FJLAB_HPP_
