/* Copyright 2026 The Shardlab Authors. All Rights Reserved.

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

#ifndef SHARDLAB_IR_GRAPHVIZ_H_
#define SHARDLAB_IR_GRAPHVIZ_H_

#include <string>

#include "shardlab/ir/graph.h"

namespace shardlab {

// DOT rendering: one node per instruction labelled with name, opcode, shape
// and sharding; collectives are filled, outputs drawn with a double border.
std::string GraphToDot(const Graph& graph);

}  // namespace shardlab

#endif  // SHARDLAB_IR_GRAPHVIZ_H_
