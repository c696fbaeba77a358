#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace pit {

// One index position of an operand: a plain symbol, or a compound `a+b` term.
struct AxisTerm {
  std::string first;
  std::optional<std::string> second;

  bool compound() const { return second.has_value(); }
  std::string to_string() const { return compound() ? first + "+" + *second : first; }
  bool operator==(const AxisTerm&) const = default;
};

struct Operand {
  std::string name;
  std::vector<AxisTerm> axes;

  // True if `symbol` occurs in any term, plain or compound.
  bool uses(const std::string& symbol) const;
  // Position of the plain term `symbol`, if any.
  std::optional<int> position_of(const std::string& symbol) const;
  std::string to_string() const;
  bool operator==(const Operand&) const = default;
};

enum class ReductionOp { kSum };
enum class ElementwiseOp { kIdentity, kMultiply, kAdd };

struct TensorExpr {
  Operand output;
  std::vector<Operand> inputs;
  ReductionOp reduction_op = ReductionOp::kSum;
  ElementwiseOp elementwise_op = ElementwiseOp::kIdentity;
  // `+=` (accumulating over reduction axes) versus `=`.
  bool accumulate = false;

  // Distinct axis symbols in order of first appearance (output, then inputs).
  std::vector<std::string> symbols() const;
  std::string to_string() const;
  bool operator==(const TensorExpr&) const = default;
};

// Grammar: OUT[axes] (+= | =) IN1[axes] ((* | +) IN2[axes])?
// Axes are comma separated symbols or `sym+sym`; whitespace is ignored.
// Throws ParseError with the character offset of the problem.
TensorExpr parse_expr(const std::string& text);

enum class AxisKind { kSpatial, kReduction };
enum class AxisCategory { kSporadic, kPrevalent, kCompoundMember };

std::string to_string(AxisKind kind);
std::string to_string(AxisCategory category);

using ExtentMap = std::map<std::string, std::int64_t>;

struct AxisInfo {
  std::string name;
  AxisKind kind = AxisKind::kSpatial;
  AxisCategory category = AxisCategory::kSporadic;
  bool is_pit = false;
  // Zero when the symbol is not bound in the extent map.
  std::int64_t extent = 0;

  bool operator==(const AxisInfo&) const = default;
};

std::vector<AxisInfo> classify_axes(const TensorExpr& expr, const ExtentMap& extents = {});

std::set<std::string> pit_axes(const TensorExpr& expr);

// Checks every symbol is bound to a positive extent. Compound terms are not
// extent-checked (their extent is derived, x+i ranges over x and i).
void validate_extents(const TensorExpr& expr, const ExtentMap& extents);

struct SimplifiedExpr {
  TensorExpr expr;
  // Prevalent axes that were removed. Each slice along these axes may use its
  // own permutation on the remaining axes.
  std::vector<std::string> independent_slice_axes;
};

SimplifiedExpr simplify(const TensorExpr& expr);

// Axis roles of a simplified two-input contraction C[m,n] += A[m,k] * B[k,n].
struct MatMulRoles {
  std::string m;
  std::string k;
  std::string n;
};

// Axis roles of a row reduction C[p] += A[p,l].
struct ReduceRoles {
  std::string p;
  std::string l;
};

std::optional<MatMulRoles> match_matmul(const TensorExpr& simplified);
std::optional<ReduceRoles> match_reduce_sum(const TensorExpr& expr);

}  // namespace pit
