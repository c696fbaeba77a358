#include "pit/expr.hpp"

#include <algorithm>
#include <cctype>

#include "pit/error.hpp"

namespace pit {

bool Operand::uses(const std::string& symbol) const {
  return std::any_of(axes.begin(), axes.end(), [&](const AxisTerm& t) {
    return t.first == symbol || (t.second && *t.second == symbol);
  });
}

std::optional<int> Operand::position_of(const std::string& symbol) const {
  for (std::size_t i = 0; i < axes.size(); ++i) {
    if (!axes[i].compound() && axes[i].first == symbol) return static_cast<int>(i);
  }
  return std::nullopt;
}

std::string Operand::to_string() const {
  std::string s = name + "[";
  for (std::size_t i = 0; i < axes.size(); ++i) {
    if (i) s += ",";
    s += axes[i].to_string();
  }
  return s + "]";
}

std::vector<std::string> TensorExpr::symbols() const {
  std::vector<std::string> out;
  auto add = [&](const std::string& s) {
    if (std::find(out.begin(), out.end(), s) == out.end()) out.push_back(s);
  };
  auto visit = [&](const Operand& op) {
    for (const auto& t : op.axes) {
      add(t.first);
      if (t.second) add(*t.second);
    }
  };
  visit(output);
  for (const auto& in : inputs) visit(in);
  return out;
}

std::string TensorExpr::to_string() const {
  std::string s = output.to_string() + (accumulate ? " += " : " = ");
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (i) s += elementwise_op == ElementwiseOp::kAdd ? " + " : " * ";
    s += inputs[i].to_string();
  }
  return s;
}

namespace {

class Parser {
 public:
  explicit Parser(const std::string& text) : text_(text) {}

  TensorExpr parse() {
    for (std::size_t i = 0; i < text_.size(); ++i) {
      if (static_cast<unsigned char>(text_[i]) > 127) fail("non-ASCII character", i);
    }
    TensorExpr expr;
    expr.output = operand();
    skip_ws();
    if (consume("+=")) {
      expr.accumulate = true;
    } else if (!consume("=")) {
      fail("expected '+=' or '='", pos_);
    }
    expr.inputs.push_back(operand());
    skip_ws();
    if (pos_ < text_.size()) {
      if (consume("*")) {
        expr.elementwise_op = ElementwiseOp::kMultiply;
      } else if (consume("+")) {
        expr.elementwise_op = ElementwiseOp::kAdd;
      } else {
        fail("expected '*', '+' or end of expression", pos_);
      }
      expr.inputs.push_back(operand());
      skip_ws();
      if (pos_ < text_.size()) fail("unexpected trailing input", pos_);
    }
    return expr;
  }

  [[noreturn]] void fail(const std::string& msg, std::size_t at) const {
    throw ParseError("expression syntax error at offset " + std::to_string(at) + ": " + msg, at);
  }

  std::size_t operand_start(std::size_t i) const { return starts_.at(i); }

 private:
  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool consume(const char* tok) {
    skip_ws();
    const std::string t(tok);
    if (text_.compare(pos_, t.size(), t) == 0) {
      pos_ += t.size();
      return true;
    }
    return false;
  }

  void expect(char c) {
    skip_ws();
    if (pos_ >= text_.size() || text_[pos_] != c) fail(std::string("expected '") + c + "'", pos_);
    ++pos_;
  }

  std::string identifier() {
    skip_ws();
    const std::size_t begin = pos_;
    if (pos_ < text_.size() &&
        (std::isalpha(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) {
      ++pos_;
      while (pos_ < text_.size() &&
             (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) {
        ++pos_;
      }
    }
    if (begin == pos_) fail("expected identifier", begin);
    return text_.substr(begin, pos_ - begin);
  }

  Operand operand() {
    skip_ws();
    starts_.push_back(pos_);
    Operand op;
    op.name = identifier();
    expect('[');
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == ']') {
      ++pos_;
      return op;
    }
    while (true) {
      AxisTerm term;
      term.first = identifier();
      skip_ws();
      if (pos_ < text_.size() && text_[pos_] == '+') {
        ++pos_;
        term.second = identifier();
      }
      op.axes.push_back(std::move(term));
      skip_ws();
      if (pos_ < text_.size() && text_[pos_] == ',') {
        ++pos_;
        continue;
      }
      expect(']');
      return op;
    }
  }

  const std::string& text_;
  std::size_t pos_ = 0;
  std::vector<std::size_t> starts_;
};

}  // namespace

TensorExpr parse_expr(const std::string& text) {
  Parser parser(text);
  TensorExpr expr = parser.parse();

  auto all = [&]() {
    std::vector<const Operand*> ops{&expr.output};
    for (const auto& in : expr.inputs) ops.push_back(&in);
    return ops;
  }();

  for (std::size_t i = 0; i < all.size(); ++i) {
    const Operand& op = *all[i];
    std::vector<std::string> seen;
    for (const auto& t : op.axes) {
      std::vector<std::string> syms{t.first};
      if (t.second) {
        if (*t.second == t.first) {
          parser.fail("compound term repeats symbol '" + t.first + "'", parser.operand_start(i));
        }
        syms.push_back(*t.second);
      }
      for (const auto& s : syms) {
        if (std::find(seen.begin(), seen.end(), s) != seen.end()) {
          parser.fail("symbol '" + s + "' repeated in operand " + op.name, parser.operand_start(i));
        }
        seen.push_back(s);
      }
    }
  }

  for (const auto& t : expr.output.axes) {
    if (t.compound()) parser.fail("compound term in output operand", parser.operand_start(0));
  }

  for (std::size_t i = 0; i < all.size(); ++i) {
    for (std::size_t j = i + 1; j < all.size(); ++j) {
      if (all[i]->name == all[j]->name && all[i]->axes != all[j]->axes) {
        parser.fail("inconsistent duplicate operand '" + all[i]->name + "'",
                    parser.operand_start(j));
      }
    }
  }

  for (const auto& t : expr.output.axes) {
    const bool bound = std::any_of(expr.inputs.begin(), expr.inputs.end(),
                                   [&](const Operand& in) { return in.uses(t.first); });
    if (!bound) {
      parser.fail("output symbol '" + t.first + "' does not appear in any input",
                  parser.operand_start(0));
    }
  }

  if (!expr.accumulate) {
    for (const auto& s : expr.symbols()) {
      if (!expr.output.uses(s)) {
        parser.fail("reduction symbol '" + s + "' requires '+='", parser.operand_start(1));
      }
    }
  }
  return expr;
}

std::string to_string(AxisKind kind) {
  return kind == AxisKind::kSpatial ? "spatial" : "reduction";
}

std::string to_string(AxisCategory category) {
  switch (category) {
    case AxisCategory::kSporadic: return "sporadic";
    case AxisCategory::kPrevalent: return "prevalent";
    case AxisCategory::kCompoundMember: return "compound";
  }
  return "?";
}

namespace {

bool in_compound(const TensorExpr& expr, const std::string& s) {
  auto check = [&](const Operand& op) {
    return std::any_of(op.axes.begin(), op.axes.end(), [&](const AxisTerm& t) {
      return t.compound() && (t.first == s || *t.second == s);
    });
  };
  return check(expr.output) || std::any_of(expr.inputs.begin(), expr.inputs.end(), check);
}

bool reduction_commutes(ReductionOp op) {
  switch (op) {
    case ReductionOp::kSum: return true;
  }
  return false;
}

}  // namespace

std::vector<AxisInfo> classify_axes(const TensorExpr& expr, const ExtentMap& extents) {
  std::vector<AxisInfo> out;
  for (const auto& s : expr.symbols()) {
    AxisInfo info;
    info.name = s;
    info.kind = expr.output.uses(s) ? AxisKind::kSpatial : AxisKind::kReduction;
    const bool everywhere =
        expr.output.uses(s) && std::all_of(expr.inputs.begin(), expr.inputs.end(),
                                           [&](const Operand& in) { return in.uses(s); });
    if (in_compound(expr, s)) {
      info.category = AxisCategory::kCompoundMember;
    } else if (everywhere) {
      info.category = AxisCategory::kPrevalent;
    } else {
      info.category = AxisCategory::kSporadic;
    }
    info.is_pit = info.category != AxisCategory::kCompoundMember &&
                  (info.kind == AxisKind::kSpatial || reduction_commutes(expr.reduction_op));
    if (auto it = extents.find(s); it != extents.end()) info.extent = it->second;
    out.push_back(std::move(info));
  }
  return out;
}

std::set<std::string> pit_axes(const TensorExpr& expr) {
  std::set<std::string> out;
  for (const auto& a : classify_axes(expr)) {
    if (a.is_pit) out.insert(a.name);
  }
  return out;
}

void validate_extents(const TensorExpr& expr, const ExtentMap& extents) {
  for (const auto& s : expr.symbols()) {
    auto it = extents.find(s);
    if (it == extents.end()) throw ShapeError("axis '" + s + "' has no extent bound");
    if (it->second <= 0) throw ShapeError("axis '" + s + "' must have a positive extent");
  }
}

SimplifiedExpr simplify(const TensorExpr& expr) {
  SimplifiedExpr out{expr, {}};
  for (const auto& a : classify_axes(expr)) {
    if (a.category == AxisCategory::kPrevalent) out.independent_slice_axes.push_back(a.name);
  }
  auto strip = [&](Operand& op) {
    std::erase_if(op.axes, [&](const AxisTerm& t) {
      return !t.compound() && std::find(out.independent_slice_axes.begin(),
                                        out.independent_slice_axes.end(),
                                        t.first) != out.independent_slice_axes.end();
    });
  };
  strip(out.expr.output);
  for (auto& in : out.expr.inputs) strip(in);
  return out;
}

std::optional<MatMulRoles> match_matmul(const TensorExpr& e) {
  if (e.inputs.size() != 2 || e.elementwise_op != ElementwiseOp::kMultiply || !e.accumulate) {
    return std::nullopt;
  }
  const Operand& c = e.output;
  const Operand& a = e.inputs[0];
  const Operand& b = e.inputs[1];
  if (c.axes.size() != 2 || a.axes.size() != 2 || b.axes.size() != 2) return std::nullopt;
  for (const auto* op : {&c, &a, &b}) {
    for (const auto& t : op->axes) {
      if (t.compound()) return std::nullopt;
    }
  }
  MatMulRoles r{a.axes[0].first, a.axes[1].first, b.axes[1].first};
  if (b.axes[0].first != r.k || c.axes[0].first != r.m || c.axes[1].first != r.n) {
    return std::nullopt;
  }
  if (r.m == r.n || r.m == r.k || r.k == r.n) return std::nullopt;
  return r;
}

std::optional<ReduceRoles> match_reduce_sum(const TensorExpr& e) {
  if (e.inputs.size() != 1 || !e.accumulate) return std::nullopt;
  const Operand& c = e.output;
  const Operand& a = e.inputs[0];
  if (c.axes.size() != 1 || a.axes.size() != 2) return std::nullopt;
  if (c.axes[0].compound() || a.axes[0].compound() || a.axes[1].compound()) return std::nullopt;
  if (a.axes[0].first != c.axes[0].first) return std::nullopt;
  return ReduceRoles{a.axes[0].first, a.axes[1].first};
}

}  // namespace pit
