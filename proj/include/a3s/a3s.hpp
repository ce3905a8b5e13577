/*
 * Copyright (c) 2026, The a3s authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include "a3s/constraints.hpp"
#include "a3s/core.hpp"
#include "a3s/engine.hpp"
#include "a3s/error.hpp"
#include "a3s/init.hpp"
#include "a3s/io.hpp"
#include "a3s/metrics.hpp"
#include "a3s/oracle.hpp"
#include "a3s/pairwise.hpp"
#include "a3s/purity.hpp"
#include "a3s/query_strategy.hpp"
#include "a3s/service.hpp"
#include "a3s/synthetic.hpp"
