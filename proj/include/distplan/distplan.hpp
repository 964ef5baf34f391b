/* Copyright 2026 The distplan Authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include "distplan/analysis.hpp"
#include "distplan/common.hpp"
#include "distplan/config.hpp"
#include "distplan/graph_json.hpp"
#include "distplan/hw_cost.hpp"
#include "distplan/mesh.hpp"
#include "distplan/model_ir.hpp"
#include "distplan/node_program.hpp"
#include "distplan/planner.hpp"
#include "distplan/propagation.hpp"
#include "distplan/report.hpp"
#include "distplan/simulator.hpp"
#include "distplan/timeline_export.hpp"
