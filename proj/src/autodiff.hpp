#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace relnet::ag {

// Dense reverse-mode engine over an arena tape. One tape per worker, one
// example per forward pass; values are always 64-bit.

class EngineError : public std::runtime_error {
public:
  explicit EngineError(const std::string& what) : std::runtime_error(what) {}
};

class ShapeError : public EngineError {
public:
  explicit ShapeError(const std::string& what) : EngineError(what) {}
};

enum class Op : int32_t {
  leaf,
  add,
  sub,
  mul,            // elementwise
  matvec,         // (r x c) * (c) -> (r)
  inner,          // <a, b> -> scalar
  sigmoid,        // elementwise, numerically stable
  prelu,          // (x, slope scalar)
  softmax,        // vector -> simplex vector
  l2norm,         // x / sqrt(max(|x|^2, eps))
  concat,         // vectors -> vector
  sum,            // vector -> scalar
  gather_row,     // matrix row / vector element by index
  scale,          // (x, s scalar) -> s * x
  cross_entropy,  // (logits; target index) -> -log softmax(logits)[target]
};

const char* op_name(Op op);

// Rank 1 (d1 == 0) or rank 2. A scalar is a length-1 vector.
struct Shape {
  int32_t d0 = 0;
  int32_t d1 = 0;

  int32_t len() const { return d1 > 0 ? d0 * d1 : d0; }
  bool is_matrix() const { return d1 > 0; }
  bool is_vector() const { return d1 == 0; }
  bool is_scalar() const { return d1 == 0 && d0 == 1; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

struct Var {
  int32_t i = -1;
  bool valid() const { return i >= 0; }
};

// Destination for parameter gradients, row-major, indexed by param id.
struct GradSink {
  double* data = nullptr;
  int32_t rows = 0;
  int32_t cols = 0;
};

class Tape {
public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaves copy their data into the tape arena. param_id < 0 marks a
  // constant. A block leaf views columns [col0, col0+ncols) of a row-major
  // (src_rows x src_cols) parameter; gradients scatter back to that block.
  Var leaf(std::span<const double> data, Shape s, int32_t param_id = -1);
  Var leaf_block(const double* src, int32_t src_rows, int32_t src_cols,
                 int32_t col0, int32_t ncols, int32_t param_id);
  Var constant(std::span<const double> data, Shape s) { return leaf(data, s); }
  Var zeros(Shape s);
  Var scalar(double v);

  // Generic entry point; validates arity and shapes, records the node and
  // computes its forward value. attr carries the index for gather_row and
  // the target class for cross_entropy.
  Var apply(Op op, std::span<const Var> inputs, int32_t attr = -1);

  Var add(Var a, Var b) { return apply2(Op::add, a, b); }
  Var sub(Var a, Var b) { return apply2(Op::sub, a, b); }
  Var mul(Var a, Var b) { return apply2(Op::mul, a, b); }
  Var matvec(Var m, Var v) { return apply2(Op::matvec, m, v); }
  Var inner(Var a, Var b) { return apply2(Op::inner, a, b); }
  Var sigmoid(Var a) { return apply1(Op::sigmoid, a); }
  Var prelu(Var x, Var slope) { return apply2(Op::prelu, x, slope); }
  Var softmax(Var a) { return apply1(Op::softmax, a); }
  Var l2norm(Var a) { return apply1(Op::l2norm, a); }
  Var concat(std::span<const Var> parts) { return apply(Op::concat, parts); }
  Var sum(Var a) { return apply1(Op::sum, a); }
  Var gather_row(Var m, int32_t row) {
    return apply(Op::gather_row, std::span<const Var>(&m, 1), row);
  }
  Var scale(Var x, Var s) { return apply2(Op::scale, x, s); }
  Var cross_entropy(Var logits, int32_t target) {
    return apply(Op::cross_entropy, std::span<const Var>(&logits, 1), target);
  }

  // Reverse sweep from a scalar loss. Gradients of every node become
  // available through grad(); leaves keep theirs until the next backward
  // or reset.
  void backward(Var loss);

  std::span<const double> value(Var v) const;
  std::span<const double> grad(Var v) const;
  Shape shape(Var v) const;
  size_t node_count() const { return nodes_.size(); }

  // Scatter-add gradients of every bound (param_id >= 0) leaf into the
  // caller's buffers. sinks is indexed by param_id and must cover every id
  // used on this tape.
  void add_param_grads(std::span<const GradSink> sinks) const;

  // Recompute every node from the leaves and compare bit-for-bit against
  // the recorded values. Returns true when identical.
  bool replay_matches();

  // Drop all nodes, keep arena capacity.
  void reset();

  static constexpr double kNormEps = 1e-8;

private:
  struct Node {
    Op op;
    int32_t a = -1;
    int32_t b = -1;
    int32_t attr = -1;
    int32_t args_off = 0;  // concat: offset/count into args_
    int32_t args_len = 0;
    Shape shape;
    int32_t off = 0;  // value/grad arena offset
    // Bound-leaf bookkeeping (op == leaf, param_id >= 0).
    int32_t param_id = -1;
    int32_t col0 = 0;
    int32_t src_cols = 0;
  };

  Var apply1(Op op, Var a) { return apply(op, std::span<const Var>(&a, 1)); }
  Var apply2(Op op, Var a, Var b) {
    const Var ab[2] = {a, b};
    return apply(op, std::span<const Var>(ab, 2));
  }

  Var push(const Node& n);
  void eval_node(size_t i, std::vector<double>& out) const;
  const Node& at(Var v) const;
  double* val_ptr(const Node& n) { return vals_.data() + n.off; }
  const double* val_ptr(const Node& n) const { return vals_.data() + n.off; }
  double* grad_ptr(const Node& n) { return grads_.data() + n.off; }

  std::vector<Node> nodes_;
  std::vector<int32_t> args_;
  std::vector<double> vals_;
  std::vector<double> grads_;
  bool has_grads_ = false;
};

// Central-difference check of analytic gradients. f() must re-evaluate the
// objective from the group's current contents; entries are perturbed in
// place and restored. Relative error per entry is
// |analytic - numeric| / max(1, |analytic|).
struct GradCheckGroup {
  std::string name;
  std::span<double> values;
  std::span<const double> analytic;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_group;
  int32_t worst_index = -1;
};

GradCheckReport grad_check(const std::function<double()>& f,
                           std::span<GradCheckGroup> groups, double h,
                           int32_t samples_per_group, uint64_t seed);

}  // namespace relnet::ag
