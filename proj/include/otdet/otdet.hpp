/*
 * Copyright 2026 The otdet Authors.
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

#ifndef OTDET_OTDET_HPP_
#define OTDET_OTDET_HPP_

#include "otdet/error.hpp"
#include "otdet/featstore.hpp"
#include "otdet/io.hpp"
#include "otdet/metrics.hpp"
#include "otdet/otplan.hpp"
#include "otdet/sacr.hpp"
#include "otdet/scoring.hpp"
#include "otdet/synth.hpp"

#endif  // OTDET_OTDET_HPP_
