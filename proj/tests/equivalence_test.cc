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

#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "absl/strings/str_join.h"
#include "gtest/gtest.h"
#include "random_graphs.h"
#include "shardlab/ir/text.h"
#include "shardlab/partitioner/partitioner.h"
#include "shardlab/propagation/propagation.h"
#include "shardlab/simulator/equivalence.h"

namespace shardlab {
namespace {

// Propagates, partitions and compares one random graph against the
// single-device evaluator. Returns an empty string on success.
struct Coverage {
  int with_collectives = 0;
  int sharded_outputs = 0;
  std::map<std::string, int> collectives;
};

std::string RunOne(uint64_t seed, double pad_value, Coverage* cov) {
  testing::RandomGraphGenerator gen(seed);
  testing::RandomGraph rg = gen.Generate();
  const std::string where = "seed " + std::to_string(seed) + " [" +
                            absl::StrJoin(rg.ops, ",") + "]\n";
  auto propagated = Propagate(rg.graph);
  if (!propagated.ok()) return where + propagated.status().ToString();
  const Graph& g = propagated->first;
  auto program = Partition(g, rg.num_devices);
  if (!program.ok()) {
    return where + program.status().ToString() + "\n" + PrintGraph(g);
  }
  EquivalenceOptions options;
  options.pad_value = pad_value;
  auto report =
      VerifyEquivalence(g, *program, RandomInputs(g, seed * 7 + 1), options);
  if (!report.ok()) return where + report.status().ToString();
  if (report->stats.total_count > 0) ++cov->with_collectives;
  for (const auto& [name, n] : report->stats.counts) cov->collectives[name] += n;
  for (int64_t o : g.outputs) {
    if (!g.instr(o).sharding->IsReplicated()) {
      ++cov->sharded_outputs;
      break;
    }
  }
  if (!report->pass) {
    return where + absl::StrJoin(report->mismatches, "\n") + "\n" +
           PrintGraph(g);
  }
  return "";
}

TEST(RandomEquivalence, ThousandGraphs) {
  constexpr int kGraphs = 1000;
  int failures = 0;
  Coverage cov;
  for (uint64_t seed = 1; seed <= kGraphs; ++seed) {
    const std::string err = RunOne(seed, seed % 2 ? 0.0 : 1e4, &cov);
    if (!err.empty()) {
      ++failures;
      ADD_FAILURE() << err;
      if (failures > 5) break;
    }
  }
  EXPECT_EQ(failures, 0);
  // The corpus must actually exercise communication.
  EXPECT_GT(cov.with_collectives, kGraphs / 2);
  EXPECT_GT(cov.sharded_outputs, kGraphs / 2);
  for (const char* op : {"all-reduce", "all-gather", "reduce-scatter",
                         "all-to-all", "collective-permute"}) {
    EXPECT_GT(cov.collectives[op], 0) << op;
  }
  std::cout << "graphs with collectives: " << cov.with_collectives
            << ", sharded outputs: " << cov.sharded_outputs << "\n";
  for (const auto& [name, n] : cov.collectives) {
    std::cout << "  " << name << ": " << n << "\n";
  }
}

TEST(RandomEquivalence, GeneratorIsDeterministic) {
  testing::RandomGraphGenerator a(42), b(42);
  EXPECT_EQ(PrintGraph(a.Generate().graph), PrintGraph(b.Generate().graph));
}

}  // namespace
}  // namespace shardlab
