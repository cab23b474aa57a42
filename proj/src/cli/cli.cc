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

#include "shardlab/cli/cli.h"

#include <fstream>
#include <iostream>
#include <iterator>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "absl/strings/str_cat.h"
#include "shardlab/ir/graphviz.h"
#include "shardlab/ir/text.h"
#include "shardlab/partitioner/partitioner.h"
#include "shardlab/partitioner/stats.h"
#include "shardlab/pipeline/pipeline.h"
#include "shardlab/propagation/propagation.h"
#include "shardlab/sharding/shard_data.h"
#include "shardlab/simulator/equivalence.h"
#include "shardlab/simulator/spmd_executor.h"
#include "shardlab/util/status_macros.h"

namespace shardlab::cli {
namespace {

constexpr char kStatsHelp[] =
    "Print collective counts and estimated bytes of the partitioned program "
    "as JSON. Bytes are per-device sent bytes summed over participants, using "
    "ring algorithms: AllGather sends (g-1) shards, ReduceScatter and AllToAll "
    "(g-1)/g of the operand, AllReduce 2(g-1)/g (so ReduceScatter costs half "
    "an AllReduce), CollectivePermute one operand per source-target pair. An "
    "input that already contains collectives, or any input when --devices is "
    "absent, is measured as is.";

struct Options {
  std::string input = "-";
  std::string output;
  std::string artifacts;
  std::string trace;
  std::string dot;
  std::string stats;
  int64_t devices = 0;
  bool no_priority = false;
  bool no_rotate = false;
  std::vector<std::string> literals;
  uint64_t seed = 1;
  double tol = 1e-4;
  double pad_value = 0;
  // pipeline
  int64_t stages = 1;
  int64_t microbatches = 1;
  std::string schedule = "gpipe";
  std::string body;
  int64_t hidden = 4;
  std::string dtype = "f32";
  bool shard_stages = false;
};

class Failure {
 public:
  Failure(int code, std::string message)
      : code_(code), message_(std::move(message)) {}
  int code() const { return code_; }
  const std::string& message() const { return message_; }

 private:
  int code_;
  std::string message_;
};

int CodeFor(const absl::Status& status) {
  return status.code() == absl::StatusCode::kInvalidArgument ? kExitInvalid
                                                             : kExitInternal;
}

template <typename T>
T Check(absl::StatusOr<T> v) {
  if (!v.ok()) {
    throw Failure(CodeFor(v.status()), std::string(v.status().message()));
  }
  return *std::move(v);
}

void Check(const absl::Status& s) {
  if (!s.ok()) throw Failure(CodeFor(s), std::string(s.message()));
}

std::string ReadInput(const std::string& path, std::istream& in) {
  if (path.empty() || path == "-") {
    return std::string(std::istreambuf_iterator<char>(in), {});
  }
  std::ifstream f(path);
  if (!f) throw Failure(kExitInvalid, "cannot read " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void WriteFile(const std::string& path, const std::string& text) {
  std::ofstream f(path);
  f << text;
  if (!f) throw Failure(kExitInternal, "cannot write " + path);
}

// Writes to `path`, or to stdout when it is empty.
void Emit(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty()) {
    out << text;
  } else {
    WriteFile(path, text);
  }
}

// Writes a side artifact to its explicit path and/or PREFIX + suffix.
void Artifact(const Options& o, const std::string& path,
              const std::string& suffix, const std::string& text) {
  if (!path.empty()) WriteFile(path, text);
  if (!o.artifacts.empty()) WriteFile(o.artifacts + suffix, text);
}

Graph Load(const Options& o, std::istream& in) {
  return Check(ParseAndValidateGraph(ReadInput(o.input, in)));
}

std::pair<Graph, PropagationReport> Complete(const Options& o,
                                             const Graph& graph) {
  PropagationOptions options;
  options.use_priorities = !o.no_priority;
  return Check(Propagate(graph, options));
}

SpmdProgram PartitionGraph(const Options& o, const Graph& completed) {
  if (o.devices < 1) throw Failure(kExitInvalid, "--devices must be >= 1");
  PartitionOptions options;
  options.detect_rotate = !o.no_rotate;
  return Check(Partition(completed, o.devices, options));
}

// PREFIX.spmd.txt / .dot / .stats.json / .trace.json for a partitioned run.
void WriteArtifacts(const Options& o, const Graph& completed,
                    const PropagationReport& report,
                    const SpmdProgram& program) {
  if (o.artifacts.empty()) return;
  WriteFile(o.artifacts + ".spmd.txt", PrintGraph(program.graph));
  WriteFile(o.artifacts + ".dot", GraphToDot(program.graph));
  WriteFile(o.artifacts + ".stats.json",
            CollectiveStatsJson(ComputeCollectiveStats(program.graph)) + "\n");
  WriteFile(o.artifacts + ".trace.json",
            PropagationTraceJson(completed, report) + "\n");
}

int Propagate(const Options& o, std::istream& in, std::ostream& out) {
  const Graph graph = Load(o, in);
  const auto [completed, report] = Complete(o, graph);
  Emit(o.output, PrintGraph(completed), out);
  Artifact(o, o.trace, ".trace.json", PropagationTraceJson(completed, report) + "\n");
  Artifact(o, o.dot, ".dot", GraphToDot(completed));
  return kExitPass;
}

int PartitionCmd(const Options& o, std::istream& in, std::ostream& out) {
  const Graph graph = Load(o, in);
  const auto [completed, report] = Complete(o, graph);
  const SpmdProgram program = PartitionGraph(o, completed);
  Emit(o.output, PrintGraph(program.graph), out);
  WriteArtifacts(o, completed, report, program);
  if (!o.stats.empty()) {
    WriteFile(o.stats,
              CollectiveStatsJson(ComputeCollectiveStats(program.graph)) + "\n");
  }
  if (!o.dot.empty()) WriteFile(o.dot, GraphToDot(program.graph));
  return kExitPass;
}

int Stats(const Options& o, std::istream& in, std::ostream& out) {
  const Graph graph = Load(o, in);
  // Without --devices the input is taken to be a partitioned program.
  bool partitioned = o.devices == 0;
  for (const Instruction& instr : graph.instructions) {
    partitioned |= IsCollective(instr.opcode) ||
                   instr.opcode == Opcode::kPartitionId;
  }
  std::string json;
  if (partitioned) {
    json = CollectiveStatsJson(ComputeCollectiveStats(graph)) + "\n";
    Artifact(o, "", ".stats.json", json);
  } else {
    const auto [completed, report] = Complete(o, graph);
    const SpmdProgram program = PartitionGraph(o, completed);
    json = CollectiveStatsJson(ComputeCollectiveStats(program.graph)) + "\n";
    WriteArtifacts(o, completed, report, program);
  }
  Emit(o.output, json, out);
  if (!o.stats.empty()) WriteFile(o.stats, json);
  return kExitPass;
}

std::vector<Tensor> Inputs(const Options& o, const Graph& graph) {
  if (o.literals.empty()) return RandomInputs(graph, o.seed);
  const std::vector<int64_t> params = graph.Parameters();
  if (o.literals.size() != params.size()) {
    throw Failure(kExitInvalid,
                  absl::StrCat("expected ", params.size(), " --input values, got ",
                               o.literals.size()));
  }
  std::vector<Tensor> inputs;
  for (size_t i = 0; i < params.size(); ++i) {
    absl::StatusOr<Tensor> t =
        ParseTensorLiteral(o.literals[i], graph.instr(params[i]).shape);
    if (!t.ok()) {
      throw Failure(kExitInvalid,
                    absl::StrCat("--input ", i, ": ", t.status().message()));
    }
    inputs.push_back(*std::move(t));
  }
  return inputs;
}

int RunCmd(const Options& o, std::istream& in, std::ostream& out) {
  const Graph graph = Load(o, in);
  const auto [completed, report] = Complete(o, graph);
  const SpmdProgram program = PartitionGraph(o, completed);
  WriteArtifacts(o, completed, report, program);
  const std::vector<Tensor> inputs = Inputs(o, completed);
  std::vector<DeviceTensors> sharded;
  for (size_t i = 0; i < inputs.size(); ++i) {
    sharded.push_back(Check(ShardData(inputs[i], program.input_shardings[i],
                                      program.devices)));
  }
  const auto outputs = Check(EvaluateSpmd(program, sharded));
  std::string text;
  for (size_t i = 0; i < outputs.size(); ++i) {
    const Tensor t =
        Check(AssembleData(outputs[i], program.output_shardings[i],
                           program.output_shapes[i], program.devices));
    absl::StrAppend(&text, "%", completed.instr(completed.outputs[i]).name,
                    " = ", t.shape().ToString(), " ", t.ToLiteralString(),
                    "\n");
  }
  Emit(o.output, text, out);
  return kExitPass;
}

int Verify(const Options& o, std::istream& in, std::ostream& out) {
  const Graph graph = Load(o, in);
  const auto [completed, trace] = Complete(o, graph);
  const SpmdProgram program = PartitionGraph(o, completed);
  WriteArtifacts(o, completed, trace, program);
  EquivalenceOptions options;
  options.atol = options.rtol = o.tol;
  options.pad_value = o.pad_value;
  const EquivalenceReport report = Check(VerifyEquivalence(
      completed, program, Inputs(o, completed), options));
  Emit(o.output, report.ToJson() + "\n", out);
  if (!o.stats.empty()) {
    WriteFile(o.stats, CollectiveStatsJson(report.stats) + "\n");
  }
  return report.pass ? kExitPass : kExitMismatch;
}

int PipelineCmd(const Options& o, std::istream& in, std::ostream& out,
                std::ostream& err) {
  PipelineConfig config;
  config.stages = o.stages;
  config.microbatches = o.microbatches;
  Check(ParseSchedule(o.schedule, &config));
  Check(ValidatePipelineConfig(config));
  Graph body;
  if (o.body.empty()) {
    const std::optional<DType> dtype = ParseDType(o.dtype);
    if (!dtype || *dtype == DType::kPred) {
      throw Failure(kExitInvalid, "--dtype must be f32, s32 or u32");
    }
    if (o.hidden < 1) throw Failure(kExitInvalid, "--hidden must be >= 1");
    body = DefaultStageBody(*dtype, o.hidden);
  } else {
    Options b = o;
    b.input = o.body;
    body = Load(b, in);
  }
  const Graph vbody = Check(VectorizeStage(body, config.stages));
  if (o.shard_stages) {
    std::vector<int64_t> tiles(vbody.instr(vbody.Parameters()[0]).shape.rank(),
                               1);
    tiles[0] = config.stages;
    std::vector<int64_t> devices(config.stages);
    for (int64_t i = 0; i < config.stages; ++i) devices[i] = i;
    config.state_sharding = Check(Sharding::Tile(tiles, devices));
  }
  const Graph graph = Check(BuildPipeline(config, vbody));
  const std::string text = PrintGraph(graph);
  Emit(o.output, text, out);
  if (!o.artifacts.empty()) WriteFile(o.artifacts + ".txt", text);
  const std::string json = ComputeBubbleStats(config).ToJson() + "\n";
  if (o.stats.empty() && o.artifacts.empty()) {
    err << json;
  } else {
    Artifact(o, o.stats, ".stats.json", json);
  }
  Artifact(o, o.dot, ".dot", GraphToDot(graph));
  return kExitPass;
}

void AddInput(CLI::App* cmd, Options& o, const char* artifacts =
                  "Also write PREFIX.spmd.txt / .dot / .stats.json / .trace.json") {
  cmd->add_option("file", o.input, "IR file; '-' or absent reads stdin");
  cmd->add_option("-o,--output", o.output, "Primary output file (default stdout)");
  cmd->add_option("--artifacts", o.artifacts, artifacts);
}

void AddDevices(CLI::App* cmd, Options& o, bool required) {
  auto* opt = cmd->add_option("--devices", o.devices, "Number of partitions")
                  ->check(CLI::PositiveNumber);
  if (required) opt->required();
  cmd->add_flag("--no-priority", o.no_priority,
                "Propagate without operator priorities");
  cmd->add_flag("--no-rotate", o.no_rotate,
                "Skip rotate/shift pattern detection");
}

}  // namespace

int Run(const std::vector<std::string>& args, std::istream& in,
        std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Sharding propagation and SPMD partitioning for a small tensor IR.",
               "shardlab"};
  app.require_subcommand(1);

  auto* propagate = app.add_subcommand(
      "propagate", "Complete shardings and print the annotated IR");
  AddInput(propagate, o, "Also write PREFIX.dot / .trace.json");
  propagate->add_flag("--no-priority", o.no_priority,
                      "Run every rule in every sweep");
  propagate->add_option("--trace", o.trace, "Write the JSON change log");
  propagate->add_option("--dot", o.dot, "Write a DOT graph");

  auto* partition = app.add_subcommand(
      "partition", "Propagate, partition and print the per-device program");
  AddInput(partition, o);
  AddDevices(partition, o, true);
  partition->add_option("--stats", o.stats, "Write collective stats JSON");
  partition->add_option("--dot", o.dot, "Write a DOT graph of the program");

  auto* run = app.add_subcommand(
      "run", "Execute on simulated devices and print the assembled outputs");
  AddInput(run, o);
  AddDevices(run, o, true);
  run->add_option("--input", o.literals,
                  "Parameter literal, e.g. [[1,2],[3,4]]; repeat in "
                  "parameter order (default: random)")
      ->allow_extra_args(false);
  run->add_option("--seed", o.seed, "Seed for random inputs");

  auto* verify = app.add_subcommand(
      "verify", "Check the partitioned program against one-device evaluation");
  AddInput(verify, o);
  AddDevices(verify, o, true);
  verify->add_option("--tol", o.tol, "F32 absolute and relative tolerance")
      ->check(CLI::NonNegativeNumber);
  verify->add_option("--seed", o.seed, "Seed for random inputs");
  verify->add_option("--pad-value", o.pad_value,
                     "Value written into shard padding");
  verify->add_option("--input", o.literals, "Parameter literal (repeatable)")
      ->allow_extra_args(false);
  verify->add_option("--stats", o.stats, "Write collective stats JSON");

  auto* stats = app.add_subcommand("stats", kStatsHelp);
  AddInput(stats, o);
  AddDevices(stats, o, false);
  stats->add_option("--stats", o.stats, "Also write the JSON to a file");

  auto* pipeline = app.add_subcommand(
      "pipeline",
      "Emit an unrolled pipeline graph; bubble stats JSON goes to --stats "
      "(stderr when no file is given)");
  pipeline->add_option("--stages", o.stages, "Stages L")
      ->check(CLI::PositiveNumber);
  pipeline->add_option("--microbatches", o.microbatches, "Microbatches M")
      ->check(CLI::PositiveNumber);
  pipeline->add_option("--schedule", o.schedule, "gpipe or circular:R");
  pipeline->add_option("--body", o.body,
                       "Per-example stage body IR (parameter 0 is the "
                       "activation; default Relu(Dot(x, w) + x))");
  pipeline->add_option("--hidden", o.hidden, "Default body width");
  pipeline->add_option("--dtype", o.dtype, "Default body dtype");
  pipeline->add_flag("--shard-stages", o.shard_stages,
                     "Annotate the state buffer with L split over L devices");
  pipeline->add_option("-o,--output", o.output, "IR output file");
  pipeline->add_option("--artifacts", o.artifacts,
                       "Also write PREFIX.txt / .stats.json / .dot");
  pipeline->add_option("--stats", o.stats, "Write bubble stats JSON");
  pipeline->add_option("--dot", o.dot, "Write a DOT graph");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitPass;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitPass;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    // Help for the subcommand that failed, if any.
    for (CLI::App* sub : app.get_subcommands()) err << sub->help();
    return kExitInvalid;
  }

  try {
    if (propagate->parsed()) return Propagate(o, in, out);
    if (partition->parsed()) return PartitionCmd(o, in, out);
    if (run->parsed()) return RunCmd(o, in, out);
    if (verify->parsed()) return Verify(o, in, out);
    if (stats->parsed()) return Stats(o, in, out);
    if (pipeline->parsed()) return PipelineCmd(o, in, out, err);
  } catch (const Failure& f) {
    err << "error: " << f.message() << "\n";
    return f.code();
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitInternal;
}

}  // namespace shardlab::cli
