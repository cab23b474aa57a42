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

#include "shardlab/ir/text.h"

#include <cctype>
#include <map>

#include "absl/status/status.h"
#include "absl/strings/ascii.h"
#include "absl/strings/numbers.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_join.h"
#include "absl/strings/str_split.h"
#include "absl/strings/strip.h"
#include "shardlab/ir/verifier.h"
#include "shardlab/util/status_macros.h"

namespace shardlab {

namespace {

std::string Braced(absl::Span<const int64_t> v) {
  return absl::StrCat("{", absl::StrJoin(v, ","), "}");
}

std::string GroupsText(const std::vector<std::vector<int64_t>>& groups) {
  std::vector<std::string> parts;
  for (const auto& g : groups) parts.push_back(Braced(g));
  return absl::StrCat("{", absl::StrJoin(parts, ","), "}");
}

std::string DimLabels(const ConvDims& c, int64_t rank) {
  std::string lhs(rank, '?'), rhs(rank, '?'), out(rank, '?');
  lhs[c.lhs_batch] = 'b';
  lhs[c.lhs_feature] = 'f';
  rhs[c.rhs_input_feature] = 'i';
  rhs[c.rhs_output_feature] = 'o';
  out[c.out_batch] = 'b';
  out[c.out_feature] = 'f';
  for (size_t i = 0; i < c.lhs_spatial.size(); ++i) {
    const char digit = static_cast<char>('0' + i);
    lhs[c.lhs_spatial[i]] = digit;
    rhs[c.rhs_spatial[i]] = digit;
    out[c.out_spatial[i]] = digit;
  }
  return absl::StrCat(lhs, "_", rhs, "->", out);
}

std::string WindowText(const std::vector<WindowDim>& window) {
  auto join = [&](auto fn) {
    std::vector<std::string> parts;
    for (const WindowDim& w : window) parts.push_back(fn(w));
    return absl::StrJoin(parts, "x");
  };
  std::string out = absl::StrCat(
      "{size=", join([](const WindowDim& w) { return absl::StrCat(w.size); }));
  auto any = [&](auto pred) {
    for (const WindowDim& w : window) {
      if (pred(w)) return true;
    }
    return false;
  };
  if (any([](const WindowDim& w) { return w.stride != 1; })) {
    absl::StrAppend(&out, " stride=", join([](const WindowDim& w) {
                      return absl::StrCat(w.stride);
                    }));
  }
  if (any([](const WindowDim& w) {
        return w.padding_low != 0 || w.padding_high != 0;
      })) {
    absl::StrAppend(&out, " pad=", join([](const WindowDim& w) {
                      return absl::StrCat(w.padding_low, "_", w.padding_high);
                    }));
  }
  if (any([](const WindowDim& w) { return w.base_dilation != 1; })) {
    absl::StrAppend(&out, " lhs_dilate=", join([](const WindowDim& w) {
                      return absl::StrCat(w.base_dilation);
                    }));
  }
  if (any([](const WindowDim& w) { return w.window_dilation != 1; })) {
    absl::StrAppend(&out, " rhs_dilate=", join([](const WindowDim& w) {
                      return absl::StrCat(w.window_dilation);
                    }));
  }
  return out + "}";
}

std::vector<std::string> AttrStrings(const Instruction& instr) {
  const Attrs& a = instr.attrs;
  std::vector<std::string> out;
  switch (instr.opcode) {
    case Opcode::kIota:
      out.push_back(absl::StrCat("iota_dimension=", a.dimension));
      break;
    case Opcode::kCompare:
      out.push_back(absl::StrCat("direction=", DirectionName(a.direction)));
      break;
    case Opcode::kBroadcast:
    case Opcode::kTranspose:
    case Opcode::kReverse:
      out.push_back(absl::StrCat("dimensions=", Braced(a.dims)));
      break;
    case Opcode::kReduce:
      out.push_back(absl::StrCat("dimensions=", Braced(a.dims)));
      out.push_back(absl::StrCat("kind=", ReduceKindName(a.reduce_kind)));
      break;
    case Opcode::kPad:
      if (!a.padding.empty()) {
        std::vector<std::string> parts;
        for (const PaddingDim& p : a.padding) {
          parts.push_back(p.interior == 0
                              ? absl::StrCat(p.low, "_", p.high)
                              : absl::StrCat(p.low, "_", p.high, "_",
                                             p.interior));
        }
        out.push_back(absl::StrCat("padding=", absl::StrJoin(parts, "x")));
      }
      break;
    case Opcode::kSlice: {
      std::vector<std::string> parts;
      for (const SliceDim& s : a.slice) {
        parts.push_back(s.stride == 1
                            ? absl::StrCat("[", s.start, ":", s.limit, "]")
                            : absl::StrCat("[", s.start, ":", s.limit, ":",
                                           s.stride, "]"));
      }
      out.push_back(absl::StrCat("slice={", absl::StrJoin(parts, ","), "}"));
      break;
    }
    case Opcode::kDynamicSlice:
      out.push_back(absl::StrCat("dynamic_slice_sizes=", Braced(a.dims)));
      break;
    case Opcode::kConcatenate:
    case Opcode::kAllGather:
      out.push_back(absl::StrCat("dimensions={", a.dimension, "}"));
      break;
    case Opcode::kRotate:
    case Opcode::kShift:
      out.push_back(absl::StrCat("dimension=", a.dimension));
      out.push_back(absl::StrCat("amount=", a.amount));
      break;
    case Opcode::kDot:
      if (!a.dot.lhs_batch.empty()) {
        out.push_back(absl::StrCat("lhs_batch_dims=", Braced(a.dot.lhs_batch)));
      }
      out.push_back(absl::StrCat("lhs_contracting_dims=",
                                 Braced(a.dot.lhs_contracting)));
      if (!a.dot.rhs_batch.empty()) {
        out.push_back(absl::StrCat("rhs_batch_dims=", Braced(a.dot.rhs_batch)));
      }
      out.push_back(absl::StrCat("rhs_contracting_dims=",
                                 Braced(a.dot.rhs_contracting)));
      break;
    case Opcode::kConvolution:
      out.push_back(absl::StrCat("window=", WindowText(a.window)));
      out.push_back(
          absl::StrCat("dim_labels=", DimLabels(a.conv, instr.shape.rank())));
      break;
    case Opcode::kAllReduce:
      out.push_back(absl::StrCat("kind=", ReduceKindName(a.reduce_kind)));
      out.push_back(absl::StrCat("replica_groups=", GroupsText(a.replica_groups)));
      break;
    case Opcode::kReduceScatter:
      out.push_back(absl::StrCat("kind=", ReduceKindName(a.reduce_kind)));
      out.push_back(absl::StrCat("dimensions={", a.dimension, "}"));
      out.push_back(absl::StrCat("replica_groups=", GroupsText(a.replica_groups)));
      break;
    default:
      break;
  }
  if (instr.opcode == Opcode::kAllGather) {
    out.push_back(absl::StrCat("replica_groups=", GroupsText(a.replica_groups)));
  }
  if (instr.opcode == Opcode::kAllToAll) {
    out.push_back(absl::StrCat("split_dimension=", a.split_dimension));
    out.push_back(absl::StrCat("concat_dimension=", a.concat_dimension));
    out.push_back(absl::StrCat("replica_groups=", GroupsText(a.replica_groups)));
  }
  if (instr.opcode == Opcode::kCollectivePermute) {
    std::vector<std::string> parts;
    for (const auto& [s, t] : a.source_target_pairs) {
      parts.push_back(absl::StrCat("{", s, ",", t, "}"));
    }
    out.push_back(
        absl::StrCat("source_target_pairs={", absl::StrJoin(parts, ","), "}"));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Parsing.

struct Token {
  absl::string_view text;
  int64_t line = 0;
  int64_t column = 0;
};

absl::Status ErrorAt(int64_t line, int64_t column, absl::string_view msg) {
  return absl::InvalidArgumentError(
      absl::StrCat("ParseError: line ", line, ", column ", column, ": ", msg));
}

absl::StatusOr<int64_t> ToInt(const Token& t, absl::string_view s) {
  int64_t v = 0;
  if (!absl::SimpleAtoi(absl::StripAsciiWhitespace(s), &v)) {
    return ErrorAt(t.line, t.column,
                   absl::StrCat("expected integer, got '", s, "'"));
  }
  return v;
}

// "{1,2,3}" or "[1,2,3]" or "1,2,3".
absl::StatusOr<std::vector<int64_t>> ToIntList(const Token& t,
                                               absl::string_view s) {
  s = absl::StripAsciiWhitespace(s);
  if (!s.empty() && (s.front() == '{' || s.front() == '[')) {
    const char close = s.front() == '{' ? '}' : ']';
    if (s.back() != close) {
      return ErrorAt(t.line, t.column, absl::StrCat("expected '", std::string(1, close), "'"));
    }
    s = s.substr(1, s.size() - 2);
  }
  std::vector<int64_t> out;
  if (absl::StripAsciiWhitespace(s).empty()) return out;
  for (absl::string_view part : absl::StrSplit(s, ',')) {
    ASSIGN_OR_RETURN(int64_t v, ToInt(t, part));
    out.push_back(v);
  }
  return out;
}

// Splits "{a},{b}" style top-level lists on commas outside brackets.
std::vector<absl::string_view> SplitTopLevel(absl::string_view s, char sep) {
  std::vector<absl::string_view> parts;
  int depth = 0;
  size_t start = 0;
  for (size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (c == '{' || c == '[' || c == '(') ++depth;
    if (c == '}' || c == ']' || c == ')') --depth;
    if (c == sep && depth == 0) {
      parts.push_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  parts.push_back(s.substr(start));
  return parts;
}

absl::StatusOr<absl::string_view> Unbrace(const Token& t, absl::string_view s) {
  s = absl::StripAsciiWhitespace(s);
  if (s.size() < 2 || s.front() != '{' || s.back() != '}') {
    return ErrorAt(t.line, t.column, "expected '{...}'");
  }
  return s.substr(1, s.size() - 2);
}

absl::StatusOr<std::vector<std::vector<int64_t>>> ToGroups(const Token& t) {
  ASSIGN_OR_RETURN(absl::string_view inner, Unbrace(t, t.text));
  std::vector<std::vector<int64_t>> groups;
  if (absl::StripAsciiWhitespace(inner).empty()) return groups;
  for (absl::string_view part : SplitTopLevel(inner, ',')) {
    ASSIGN_OR_RETURN(std::vector<int64_t> g, ToIntList(t, part));
    groups.push_back(std::move(g));
  }
  return groups;
}

absl::StatusOr<std::vector<int64_t>> ToXList(const Token& t,
                                             absl::string_view s) {
  std::vector<int64_t> out;
  for (absl::string_view part : absl::StrSplit(s, 'x')) {
    ASSIGN_OR_RETURN(int64_t v, ToInt(t, part));
    out.push_back(v);
  }
  return out;
}

absl::StatusOr<std::vector<WindowDim>> ToWindow(const Token& t) {
  ASSIGN_OR_RETURN(absl::string_view inner, Unbrace(t, t.text));
  std::map<std::string, std::string> fields;
  for (absl::string_view part :
       absl::StrSplit(inner, ' ', absl::SkipWhitespace())) {
    std::pair<std::string, std::string> kv = absl::StrSplit(part, '=');
    fields[kv.first] = kv.second;
  }
  if (!fields.count("size")) return ErrorAt(t.line, t.column, "window needs size=");
  ASSIGN_OR_RETURN(std::vector<int64_t> sizes, ToXList(t, fields["size"]));
  std::vector<WindowDim> window(sizes.size());
  for (size_t i = 0; i < sizes.size(); ++i) window[i].size = sizes[i];
  for (const auto& [key, value] : fields) {
    if (key == "size") continue;
    std::vector<absl::string_view> parts = absl::StrSplit(value, 'x');
    if (parts.size() != window.size()) {
      return ErrorAt(t.line, t.column,
                     absl::StrCat("window field ", key, " has wrong rank"));
    }
    for (size_t i = 0; i < parts.size(); ++i) {
      if (key == "pad") {
        std::vector<absl::string_view> lh = absl::StrSplit(parts[i], '_');
        if (lh.size() != 2) return ErrorAt(t.line, t.column, "pad must be lo_hi");
        ASSIGN_OR_RETURN(window[i].padding_low, ToInt(t, lh[0]));
        ASSIGN_OR_RETURN(window[i].padding_high, ToInt(t, lh[1]));
        continue;
      }
      ASSIGN_OR_RETURN(int64_t v, ToInt(t, parts[i]));
      if (key == "stride") {
        window[i].stride = v;
      } else if (key == "lhs_dilate") {
        window[i].base_dilation = v;
      } else if (key == "rhs_dilate") {
        window[i].window_dilation = v;
      } else {
        return ErrorAt(t.line, t.column,
                       absl::StrCat("unknown window field '", key, "'"));
      }
    }
  }
  return window;
}

absl::StatusOr<ConvDims> ToDimLabels(const Token& t) {
  std::vector<absl::string_view> io = absl::StrSplit(t.text, "->");
  if (io.size() != 2) return ErrorAt(t.line, t.column, "expected lhs_rhs->out");
  std::vector<absl::string_view> lr = absl::StrSplit(io[0], '_');
  if (lr.size() != 2) return ErrorAt(t.line, t.column, "expected lhs_rhs->out");
  absl::string_view lhs = lr[0], rhs = lr[1], out = io[1];
  if (lhs.size() != rhs.size() || lhs.size() != out.size() || lhs.size() < 2) {
    return ErrorAt(t.line, t.column, "dim_labels ranks differ");
  }
  const size_t ns = lhs.size() - 2;
  ConvDims c;
  c.lhs_spatial.assign(ns, -1);
  c.rhs_spatial.assign(ns, -1);
  c.out_spatial.assign(ns, -1);
  auto fill = [&](absl::string_view labels, char a, char b, int64_t* pa,
                  int64_t* pb, std::vector<int64_t>* spatial) -> absl::Status {
    *pa = *pb = -1;
    for (size_t i = 0; i < labels.size(); ++i) {
      const char ch = labels[i];
      if (ch == a) {
        *pa = i;
      } else if (ch == b) {
        *pb = i;
      } else if (ch >= '0' && ch < static_cast<char>('0' + ns)) {
        (*spatial)[ch - '0'] = i;
      } else {
        return ErrorAt(t.line, t.column,
                       absl::StrCat("bad dim label '", std::string(1, ch), "'"));
      }
    }
    if (*pa < 0 || *pb < 0) return ErrorAt(t.line, t.column, "missing dim label");
    for (int64_t s : *spatial) {
      if (s < 0) return ErrorAt(t.line, t.column, "missing spatial label");
    }
    return absl::OkStatus();
  };
  RETURN_IF_ERROR(fill(lhs, 'b', 'f', &c.lhs_batch, &c.lhs_feature,
                       &c.lhs_spatial));
  RETURN_IF_ERROR(fill(rhs, 'i', 'o', &c.rhs_input_feature,
                       &c.rhs_output_feature, &c.rhs_spatial));
  RETURN_IF_ERROR(fill(out, 'b', 'f', &c.out_batch, &c.out_feature,
                       &c.out_spatial));
  return c;
}

absl::StatusOr<Sharding> ToSharding(const Token& t, int64_t rank,
                                    const std::optional<DeviceMesh>& mesh) {
  ASSIGN_OR_RETURN(absl::string_view inner, Unbrace(t, t.text));
  inner = absl::StripAsciiWhitespace(inner);
  if (absl::ConsumePrefix(&inner, "mesh_split=")) {
    if (!mesh.has_value()) {
      return ErrorAt(t.line, t.column, "mesh_split requires a graph mesh");
    }
    size_t close = inner.find(']');
    if (close == absl::string_view::npos) {
      return ErrorAt(t.line, t.column, "expected ']' in mesh_split");
    }
    ASSIGN_OR_RETURN(std::vector<int64_t> mapping,
                     ToIntList(t, inner.substr(0, close + 1)));
    absl::StatusOr<Sharding> s = MeshSplit(rank, *mesh, mapping);
    if (!s.ok()) {
      return ErrorAt(t.line, t.column, s.status().message());
    }
    absl::string_view rest = absl::StripAsciiWhitespace(inner.substr(close + 1));
    if (rest.empty()) return *s;
    if (!absl::ConsumePrefix(&rest, "unspecified_dims=")) {
      return ErrorAt(t.line, t.column, "unexpected text after mesh_split");
    }
    ASSIGN_OR_RETURN(std::vector<int64_t> dims, ToIntList(t, rest));
    return s->WithUnspecifiedDims(std::set<int64_t>(dims.begin(), dims.end()));
  }
  absl::StatusOr<Sharding> s = Sharding::Parse(inner);
  if (!s.ok()) {
    absl::string_view msg = s.status().message();
    absl::ConsumePrefix(&msg, "ParseError: ");
    return ErrorAt(t.line, t.column, msg);
  }
  return *s;
}

class Parser {
 public:
  explicit Parser(absl::string_view text) : text_(text) {}

  absl::StatusOr<Graph> Parse() {
    Graph graph;
    SkipSpace();
    RETURN_IF_ERROR(Expect("graph"));
    SkipSpace();
    RETURN_IF_ERROR(Expect("@"));
    graph.name = std::string(Identifier().text);
    if (graph.name.empty()) return Error("expected graph name");
    SkipSpace();
    if (Consume('(')) {
      RETURN_IF_ERROR(ParseHeader(graph));
    }
    SkipSpace();
    RETURN_IF_ERROR(Expect("{"));
    std::map<std::string, int64_t, std::less<>> ids;
    while (true) {
      SkipSpace();
      if (AtEnd()) return Error("unexpected end of input, expected '}'");
      if (Peek('%')) {
        RETURN_IF_ERROR(ParseInstruction(graph, ids));
        continue;
      }
      Token word = Identifier();
      if (word.text != "return") {
        return ErrorAt(word.line, word.column,
                       "expected instruction or 'return'");
      }
      while (true) {
        SkipSpace();
        Token ref = Current();
        RETURN_IF_ERROR(Expect("%"));
        Token name = Identifier();
        auto it = ids.find(name.text);
        if (it == ids.end()) {
          return ErrorAt(ref.line, ref.column,
                         absl::StrCat("undefined value %", name.text));
        }
        graph.outputs.push_back(it->second);
        SkipSpace();
        if (!Consume(',')) break;
      }
      SkipSpace();
      RETURN_IF_ERROR(Expect("}"));
      SkipSpace();
      if (!AtEnd()) return Error("trailing text after graph");
      return graph;
    }
  }

 private:
  absl::Status ParseHeader(Graph& graph) {
    std::vector<int64_t> dims, ids;
    bool have_ids = false;
    while (true) {
      SkipSpace();
      Token key = Identifier();
      SkipSpace();
      RETURN_IF_ERROR(Expect("="));
      SkipSpace();
      Token value = Value();
      if (key.text == "mesh") {
        ASSIGN_OR_RETURN(dims, ToIntList(value, value.text));
      } else if (key.text == "mesh_devices") {
        ASSIGN_OR_RETURN(ids, ToIntList(value, value.text));
        have_ids = true;
      } else {
        return ErrorAt(key.line, key.column,
                       absl::StrCat("unknown graph attribute '", key.text, "'"));
      }
      SkipSpace();
      if (Consume(',')) continue;
      RETURN_IF_ERROR(Expect(")"));
      break;
    }
    DeviceMesh mesh = DeviceMesh::Iota(dims);
    if (have_ids) mesh.device_ids = ids;
    if (absl::Status s = mesh.Validate(); !s.ok()) {
      return Error(s.message());
    }
    graph.mesh = std::move(mesh);
    return absl::OkStatus();
  }

  absl::Status ParseInstruction(
      Graph& graph, std::map<std::string, int64_t, std::less<>>& ids) {
    Instruction instr;
    instr.source_line = line_;
    const Token start = Current();
    RETURN_IF_ERROR(Expect("%"));
    Token name = Identifier();
    if (name.text.empty()) return Error("expected instruction name");
    instr.name = std::string(name.text);
    if (ids.count(instr.name)) {
      return ErrorAt(start.line, start.column,
                     absl::StrCat("duplicate name %", instr.name));
    }
    SkipSpace();
    RETURN_IF_ERROR(Expect("="));
    SkipSpace();
    ASSIGN_OR_RETURN(instr.shape, ParseShape());
    SkipSpace();
    Token op = Identifier();
    std::optional<Opcode> opcode = ParseOpcode(op.text);
    if (!opcode.has_value()) {
      return ErrorAt(op.line, op.column,
                     absl::StrCat("unknown opcode '", op.text, "'"));
    }
    instr.opcode = *opcode;
    SkipSpace();
    RETURN_IF_ERROR(Expect("("));
    Token args = Balanced(')');
    RETURN_IF_ERROR(Expect(")"));
    if (instr.opcode == Opcode::kParameter) {
      ASSIGN_OR_RETURN(instr.attrs.parameter_index, ToInt(args, args.text));
    } else if (instr.opcode == Opcode::kConstant) {
      absl::StatusOr<Tensor> literal =
          ParseTensorLiteral(args.text, instr.shape);
      if (!literal.ok()) {
        return ErrorAt(args.line, args.column, literal.status().message());
      }
      instr.attrs.literal = *std::move(literal);
    } else if (!absl::StripAsciiWhitespace(args.text).empty()) {
      for (absl::string_view part : SplitTopLevel(args.text, ',')) {
        part = absl::StripAsciiWhitespace(part);
        if (!absl::ConsumePrefix(&part, "%")) {
          return ErrorAt(args.line, args.column, "expected %operand");
        }
        auto it = ids.find(part);
        if (it == ids.end()) {
          return ErrorAt(args.line, args.column,
                         absl::StrCat("undefined value %", part));
        }
        instr.operands.push_back(it->second);
      }
    }
    while (true) {
      SkipInlineSpace();
      if (!Consume(',')) break;
      SkipSpace();
      Token key = Identifier();
      SkipSpace();
      RETURN_IF_ERROR(Expect("="));
      SkipSpace();
      Token value = Value();
      RETURN_IF_ERROR(ApplyAttr(graph, instr, key, value));
    }
    ids.emplace(instr.name, graph.size());
    graph.instructions.push_back(std::move(instr));
    return absl::OkStatus();
  }

  absl::Status ApplyAttr(const Graph& graph, Instruction& instr,
                         const Token& key, const Token& value) {
    Attrs& a = instr.attrs;
    const absl::string_view k = key.text;
    auto single_dim = [&]() -> absl::StatusOr<int64_t> {
      ASSIGN_OR_RETURN(std::vector<int64_t> d, ToIntList(value, value.text));
      if (d.size() != 1) return ErrorAt(value.line, value.column, "expected one dimension");
      return d[0];
    };
    if (k == "sharding") {
      ASSIGN_OR_RETURN(instr.sharding,
                       ToSharding(value, instr.shape.rank(), graph.mesh));
    } else if (k == "iota_dimension" || k == "dimension") {
      ASSIGN_OR_RETURN(a.dimension, ToInt(value, value.text));
    } else if (k == "amount") {
      ASSIGN_OR_RETURN(a.amount, ToInt(value, value.text));
    } else if (k == "direction") {
      std::optional<ComparisonDirection> d = ParseDirection(value.text);
      if (!d) return ErrorAt(value.line, value.column, "unknown direction");
      a.direction = *d;
    } else if (k == "kind") {
      std::optional<ReduceKind> r = ParseReduceKind(value.text);
      if (!r) return ErrorAt(value.line, value.column, "unknown reduce kind");
      a.reduce_kind = *r;
    } else if (k == "dimensions") {
      if (instr.opcode == Opcode::kConcatenate ||
          instr.opcode == Opcode::kAllGather ||
          instr.opcode == Opcode::kReduceScatter) {
        ASSIGN_OR_RETURN(a.dimension, single_dim());
      } else {
        ASSIGN_OR_RETURN(a.dims, ToIntList(value, value.text));
      }
    } else if (k == "dynamic_slice_sizes") {
      ASSIGN_OR_RETURN(a.dims, ToIntList(value, value.text));
    } else if (k == "padding") {
      for (absl::string_view part : absl::StrSplit(value.text, 'x')) {
        std::vector<absl::string_view> f = absl::StrSplit(part, '_');
        if (f.size() < 2 || f.size() > 3) {
          return ErrorAt(value.line, value.column, "padding must be lo_hi[_int]");
        }
        PaddingDim p;
        ASSIGN_OR_RETURN(p.low, ToInt(value, f[0]));
        ASSIGN_OR_RETURN(p.high, ToInt(value, f[1]));
        if (f.size() == 3) {
          ASSIGN_OR_RETURN(p.interior, ToInt(value, f[2]));
        }
        a.padding.push_back(p);
      }
    } else if (k == "slice") {
      ASSIGN_OR_RETURN(absl::string_view inner, Unbrace(value, value.text));
      if (!absl::StripAsciiWhitespace(inner).empty()) {
        for (absl::string_view part : SplitTopLevel(inner, ',')) {
          part = absl::StripAsciiWhitespace(part);
          if (!absl::ConsumePrefix(&part, "[") ||
              !absl::ConsumeSuffix(&part, "]")) {
            return ErrorAt(value.line, value.column, "expected [start:limit]");
          }
          std::vector<absl::string_view> f = absl::StrSplit(part, ':');
          if (f.size() < 2 || f.size() > 3) {
            return ErrorAt(value.line, value.column, "expected [start:limit]");
          }
          SliceDim s;
          ASSIGN_OR_RETURN(s.start, ToInt(value, f[0]));
          ASSIGN_OR_RETURN(s.limit, ToInt(value, f[1]));
          if (f.size() == 3) {
            ASSIGN_OR_RETURN(s.stride, ToInt(value, f[2]));
          }
          a.slice.push_back(s);
        }
      }
    } else if (k == "lhs_batch_dims") {
      ASSIGN_OR_RETURN(a.dot.lhs_batch, ToIntList(value, value.text));
    } else if (k == "rhs_batch_dims") {
      ASSIGN_OR_RETURN(a.dot.rhs_batch, ToIntList(value, value.text));
    } else if (k == "lhs_contracting_dims") {
      ASSIGN_OR_RETURN(a.dot.lhs_contracting, ToIntList(value, value.text));
    } else if (k == "rhs_contracting_dims") {
      ASSIGN_OR_RETURN(a.dot.rhs_contracting, ToIntList(value, value.text));
    } else if (k == "window") {
      ASSIGN_OR_RETURN(a.window, ToWindow(value));
    } else if (k == "dim_labels") {
      ASSIGN_OR_RETURN(a.conv, ToDimLabels(value));
    } else if (k == "replica_groups") {
      ASSIGN_OR_RETURN(a.replica_groups, ToGroups(value));
    } else if (k == "split_dimension") {
      ASSIGN_OR_RETURN(a.split_dimension, ToInt(value, value.text));
    } else if (k == "concat_dimension") {
      ASSIGN_OR_RETURN(a.concat_dimension, ToInt(value, value.text));
    } else if (k == "source_target_pairs") {
      ASSIGN_OR_RETURN(std::vector<std::vector<int64_t>> pairs, ToGroups(value));
      for (const auto& p : pairs) {
        if (p.size() != 2) {
          return ErrorAt(value.line, value.column, "expected {source,target}");
        }
        a.source_target_pairs.emplace_back(p[0], p[1]);
      }
    } else {
      return ErrorAt(key.line, key.column,
                     absl::StrCat("unknown attribute '", k, "'"));
    }
    return absl::OkStatus();
  }

  absl::StatusOr<Shape> ParseShape() {
    Token dtype_token = Identifier();
    std::optional<DType> dtype = ParseDType(dtype_token.text);
    if (!dtype.has_value()) {
      return ErrorAt(dtype_token.line, dtype_token.column,
                     absl::StrCat("unknown dtype '", dtype_token.text, "'"));
    }
    RETURN_IF_ERROR(Expect("["));
    Token dims_token = Current();
    const size_t start = pos_;
    while (!AtEnd() && (std::isdigit(static_cast<unsigned char>(text_[pos_])) ||
                        text_[pos_] == ',' || text_[pos_] == ' ' ||
                        text_[pos_] == '-')) {
      Advance();
    }
    dims_token.text = text_.substr(start, pos_ - start);
    RETURN_IF_ERROR(Expect("]"));
    ASSIGN_OR_RETURN(std::vector<int64_t> dims,
                     ToIntList(dims_token, dims_token.text));
    for (int64_t d : dims) {
      if (d < 0) {
        return ErrorAt(dims_token.line, dims_token.column, "negative dimension");
      }
    }
    return Shape(*dtype, dims);
  }

  Token Current() const { return Token{{}, line_, column_}; }
  bool AtEnd() const { return pos_ >= text_.size(); }
  bool Peek(char c) const { return !AtEnd() && text_[pos_] == c; }

  void Advance() {
    if (text_[pos_] == '\n') {
      ++line_;
      column_ = 1;
    } else {
      ++column_;
    }
    ++pos_;
  }

  bool Consume(char c) {
    if (!Peek(c)) return false;
    Advance();
    return true;
  }

  void SkipSpace() {
    while (!AtEnd()) {
      if (absl::ascii_isspace(text_[pos_])) {
        Advance();
      } else if (text_.substr(pos_, 2) == "//") {
        while (!AtEnd() && text_[pos_] != '\n') Advance();
      } else {
        break;
      }
    }
  }

  void SkipInlineSpace() {
    while (!AtEnd() && (text_[pos_] == ' ' || text_[pos_] == '\t')) Advance();
  }

  absl::Status Expect(absl::string_view s) {
    if (text_.substr(pos_, s.size()) != s) {
      return Error(absl::StrCat("expected '", s, "'"));
    }
    for (size_t i = 0; i < s.size(); ++i) Advance();
    return absl::OkStatus();
  }

  Token Identifier() {
    Token t = Current();
    const size_t start = pos_;
    while (!AtEnd() && (absl::ascii_isalnum(text_[pos_]) || text_[pos_] == '_' ||
                        text_[pos_] == '.' || text_[pos_] == '-')) {
      Advance();
    }
    t.text = text_.substr(start, pos_ - start);
    return t;
  }

  // Text up to (not including) the unmatched `close` at depth 0.
  Token Balanced(char close) {
    Token t = Current();
    const size_t start = pos_;
    int depth = 0;
    while (!AtEnd()) {
      const char c = text_[pos_];
      if (depth == 0 && c == close) break;
      if (c == '(' || c == '[' || c == '{') ++depth;
      if (c == ')' || c == ']' || c == '}') --depth;
      Advance();
    }
    t.text = text_.substr(start, pos_ - start);
    return t;
  }

  // Attribute value: up to a top-level ',' or newline or unmatched closer.
  Token Value() {
    Token t = Current();
    const size_t start = pos_;
    int depth = 0;
    while (!AtEnd()) {
      const char c = text_[pos_];
      if (depth == 0 && (c == ',' || c == '\n' || c == ')' || c == '}')) break;
      if (c == '(' || c == '[' || c == '{') ++depth;
      if (c == ')' || c == ']' || c == '}') --depth;
      Advance();
    }
    t.text = absl::StripTrailingAsciiWhitespace(text_.substr(start, pos_ - start));
    return t;
  }

  absl::Status Error(absl::string_view msg) const {
    return ErrorAt(line_, column_, msg);
  }

  absl::string_view text_;
  size_t pos_ = 0;
  int64_t line_ = 1;
  int64_t column_ = 1;
};

}  // namespace

std::string PrintInstruction(const Graph& graph, int64_t id) {
  const Instruction& instr = graph.instr(id);
  std::string out = absl::StrCat("%", instr.name, " = ", instr.shape.ToString(),
                                 " ", OpcodeName(instr.opcode), "(");
  if (instr.opcode == Opcode::kParameter) {
    absl::StrAppend(&out, instr.attrs.parameter_index);
  } else if (instr.opcode == Opcode::kConstant) {
    absl::StrAppend(&out, instr.attrs.literal->ToLiteralString());
  } else {
    std::vector<std::string> ops;
    for (int64_t op : instr.operands) {
      ops.push_back(absl::StrCat("%", graph.instr(op).name));
    }
    absl::StrAppend(&out, absl::StrJoin(ops, ", "));
  }
  out += ")";
  for (const std::string& attr : AttrStrings(instr)) {
    absl::StrAppend(&out, ", ", attr);
  }
  if (instr.sharding.has_value()) {
    absl::StrAppend(&out, ", sharding={", instr.sharding->ToString(), "}");
  }
  return out;
}

std::string PrintGraph(const Graph& graph) {
  std::string out = absl::StrCat("graph @", graph.name);
  if (graph.mesh.has_value()) {
    absl::StrAppend(&out, " (mesh=[", absl::StrJoin(graph.mesh->dims, ","), "]");
    if (graph.mesh->device_ids != DeviceMesh::Iota(graph.mesh->dims).device_ids) {
      absl::StrAppend(&out, ", mesh_devices=",
                      Braced(graph.mesh->device_ids));
    }
    out += ")";
  }
  out += " {\n";
  for (int64_t i = 0; i < graph.size(); ++i) {
    absl::StrAppend(&out, "  ", PrintInstruction(graph, i), "\n");
  }
  std::vector<std::string> outs;
  for (int64_t o : graph.outputs) {
    outs.push_back(absl::StrCat("%", graph.instr(o).name));
  }
  absl::StrAppend(&out, "  return ", absl::StrJoin(outs, ", "), "\n}\n");
  return out;
}

absl::StatusOr<Graph> ParseGraph(absl::string_view text) {
  return Parser(text).Parse();
}

absl::StatusOr<Graph> ParseAndValidateGraph(absl::string_view text) {
  ASSIGN_OR_RETURN(Graph graph, ParseGraph(text));
  RETURN_IF_ERROR(ValidateGraphStatus(graph));
  return graph;
}

}  // namespace shardlab
