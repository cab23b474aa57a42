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

#ifndef SHARDLAB_TESTS_TEST_GRAPHS_H_
#define SHARDLAB_TESTS_TEST_GRAPHS_H_

namespace shardlab::testing {

// Linear layer followed by a bias add and a rectifier. Every [8,16] value
// is B x D. x is split on B, the weight on D, both over mesh dim 0.
inline constexpr char kLinearLayerText[] = R"(graph @linear (mesh=[2,2]) {
  %x = f32[8,16] parameter(0), sharding={mesh_split=[0,-1]}
  %a = f32[8,12] parameter(1)
  %w = f32[12,16] parameter(2), sharding={mesh_split=[-1,0]}
  %u = f32[8,16] dot(%a, %w), lhs_contracting_dims={1}, rhs_contracting_dims={0}
  %s = f32[8,16] add(%x, %u)
  %r = f32[8,16] maximum(%s, %x)
  return %r
}
)";

// Two-layer feed-forward block on a 2x2 mesh (X = mesh dim 0, Y = dim 1)
// with B=8, S=4, M=8, H=16. The finalized 2D annotations keep activations
// split on B over X and M (or H) over Y.
inline constexpr char kFeedForwardFinalizedText[] = R"(graph @ffn (mesh=[2,2]) {
  %x = f32[8,4,8] parameter(0), sharding={mesh_split=[0,-1,1]}
  %w_in = f32[8,16] parameter(1), sharding={mesh_split=[0,1]}
  %w_out = f32[16,8] parameter(2), sharding={mesh_split=[1,0]}
  %h = f32[8,4,16] dot(%x, %w_in), lhs_contracting_dims={2}, rhs_contracting_dims={0}, sharding={mesh_split=[0,-1,1]}
  %r = f32[8,4,16] relu(%h), sharding={mesh_split=[0,-1,1]}
  %y = f32[8,4,8] dot(%r, %w_out), lhs_contracting_dims={2}, rhs_contracting_dims={0}, sharding={mesh_split=[0,-1,1]}
  return %y
}
)";

// The same block with the first attempt's annotations: activations split
// on M over X only.
inline constexpr char kFeedForwardAttemptOneText[] = R"(graph @ffn (mesh=[2,2]) {
  %x = f32[8,4,8] parameter(0), sharding={mesh_split=[-1,-1,0]}
  %w_in = f32[8,16] parameter(1), sharding={mesh_split=[0,1]}
  %w_out = f32[16,8] parameter(2), sharding={mesh_split=[1,0]}
  %h = f32[8,4,16] dot(%x, %w_in), lhs_contracting_dims={2}, rhs_contracting_dims={0}, sharding={mesh_split=[-1,-1,1]}
  %r = f32[8,4,16] relu(%h), sharding={mesh_split=[-1,-1,1]}
  %y = f32[8,4,8] dot(%r, %w_out), lhs_contracting_dims={2}, rhs_contracting_dims={0}, sharding={mesh_split=[-1,-1,0]}
  return %y
}
)";

}  // namespace shardlab::testing

#endif  // SHARDLAB_TESTS_TEST_GRAPHS_H_
