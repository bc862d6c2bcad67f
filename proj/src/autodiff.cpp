#include "autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "rng.hpp"

namespace relnet::ag {

namespace {

double stable_sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

double dot(const double* a, const double* b, int32_t n) {
  double acc = 0.0;
  for (int32_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::leaf: return "leaf";
    case Op::add: return "add";
    case Op::sub: return "sub";
    case Op::mul: return "mul";
    case Op::matvec: return "matvec";
    case Op::inner: return "inner";
    case Op::sigmoid: return "sigmoid";
    case Op::prelu: return "prelu";
    case Op::softmax: return "softmax";
    case Op::l2norm: return "l2norm";
    case Op::concat: return "concat";
    case Op::sum: return "sum";
    case Op::gather_row: return "gather_row";
    case Op::scale: return "scale";
    case Op::cross_entropy: return "cross_entropy";
  }
  return "?";
}

std::string Shape::str() const {
  if (is_matrix()) {
    return "(" + std::to_string(d0) + "x" + std::to_string(d1) + ")";
  }
  return "(" + std::to_string(d0) + ")";
}

const Tape::Node& Tape::at(Var v) const {
  if (!v.valid() || static_cast<size_t>(v.i) >= nodes_.size()) {
    throw EngineError("invalid tape handle");
  }
  return nodes_[static_cast<size_t>(v.i)];
}

Var Tape::push(const Node& n) {
  nodes_.push_back(n);
  return Var{static_cast<int32_t>(nodes_.size() - 1)};
}

Var Tape::leaf(std::span<const double> data, Shape s, int32_t param_id) {
  if (s.len() <= 0 || static_cast<size_t>(s.len()) != data.size()) {
    throw ShapeError(std::string("leaf: shape ") + s.str() + " does not match " +
                     std::to_string(data.size()) + " values");
  }
  Node n;
  n.op = Op::leaf;
  n.shape = s;
  n.off = static_cast<int32_t>(vals_.size());
  n.param_id = param_id;
  n.col0 = 0;
  n.src_cols = s.is_matrix() ? s.d1 : 0;
  vals_.insert(vals_.end(), data.begin(), data.end());
  return push(n);
}

Var Tape::leaf_block(const double* src, int32_t src_rows, int32_t src_cols,
                     int32_t col0, int32_t ncols, int32_t param_id) {
  if (src_rows <= 0 || src_cols <= 0 || col0 < 0 || ncols <= 0 ||
      col0 + ncols > src_cols) {
    throw ShapeError("leaf_block: block outside source matrix");
  }
  Node n;
  n.op = Op::leaf;
  n.shape = Shape{src_rows, ncols};
  n.off = static_cast<int32_t>(vals_.size());
  n.param_id = param_id;
  n.col0 = col0;
  n.src_cols = src_cols;
  vals_.resize(vals_.size() + static_cast<size_t>(src_rows) * ncols);
  double* dst = vals_.data() + n.off;
  for (int32_t r = 0; r < src_rows; ++r) {
    std::memcpy(dst + static_cast<size_t>(r) * ncols,
                src + static_cast<size_t>(r) * src_cols + col0,
                sizeof(double) * static_cast<size_t>(ncols));
  }
  return push(n);
}

Var Tape::zeros(Shape s) {
  Node n;
  n.op = Op::leaf;
  n.shape = s;
  n.off = static_cast<int32_t>(vals_.size());
  vals_.resize(vals_.size() + static_cast<size_t>(s.len()), 0.0);
  return push(n);
}

Var Tape::scalar(double v) { return leaf(std::span<const double>(&v, 1), Shape{1, 0}); }

Var Tape::apply(Op op, std::span<const Var> inputs, int32_t attr) {
  auto need = [&](size_t n) {
    if (inputs.size() != n) {
      throw ShapeError(std::string(op_name(op)) + ": expected " + std::to_string(n) +
                       " inputs, got " + std::to_string(inputs.size()));
    }
  };
  auto shp = [&](size_t k) { return at(inputs[k]).shape; };
  auto mismatch = [&](const std::string& detail) {
    std::string msg = std::string(op_name(op)) + ": " + detail + " [";
    for (size_t k = 0; k < inputs.size(); ++k) {
      msg += shp(k).str();
      if (k + 1 < inputs.size()) msg += ", ";
    }
    throw ShapeError(msg + "]");
  };

  Node n;
  n.op = op;
  n.attr = attr;
  if (!inputs.empty()) n.a = inputs[0].i;
  if (inputs.size() > 1) n.b = inputs[1].i;

  switch (op) {
    case Op::leaf:
      throw EngineError("leaf nodes are created through leaf()");
    case Op::add:
    case Op::sub:
    case Op::mul:
      need(2);
      if (!(shp(0) == shp(1))) mismatch("operand shapes differ");
      n.shape = shp(0);
      break;
    case Op::matvec:
      need(2);
      if (!shp(0).is_matrix() || !shp(1).is_vector() || shp(0).d1 != shp(1).d0) {
        mismatch("need (r x c) matrix and length-c vector");
      }
      n.shape = Shape{shp(0).d0, 0};
      break;
    case Op::inner:
      need(2);
      if (!shp(0).is_vector() || !shp(1).is_vector() || shp(0).d0 != shp(1).d0) {
        mismatch("need two equal-length vectors");
      }
      n.shape = Shape{1, 0};
      break;
    case Op::sigmoid:
    case Op::softmax:
    case Op::l2norm:
      need(1);
      if (!shp(0).is_vector()) mismatch("need a vector");
      n.shape = shp(0);
      break;
    case Op::prelu:
      need(2);
      if (!shp(0).is_vector() || !shp(1).is_scalar()) {
        mismatch("need (vector, scalar slope)");
      }
      n.shape = shp(0);
      break;
    case Op::scale:
      need(2);
      if (!shp(0).is_vector() || !shp(1).is_scalar()) {
        mismatch("need (vector, scalar)");
      }
      n.shape = shp(0);
      break;
    case Op::sum:
      need(1);
      if (!shp(0).is_vector()) mismatch("need a vector");
      n.shape = Shape{1, 0};
      break;
    case Op::concat: {
      if (inputs.empty()) mismatch("need at least one vector");
      int32_t total = 0;
      for (size_t k = 0; k < inputs.size(); ++k) {
        if (!shp(k).is_vector()) mismatch("need vectors");
        total += shp(k).d0;
      }
      n.shape = Shape{total, 0};
      n.args_off = static_cast<int32_t>(args_.size());
      n.args_len = static_cast<int32_t>(inputs.size());
      for (Var v : inputs) args_.push_back(v.i);
      break;
    }
    case Op::gather_row: {
      need(1);
      Shape s = shp(0);
      int32_t nrows = s.is_matrix() ? s.d0 : s.d0;
      if (attr < 0 || attr >= nrows) {
        mismatch("row index " + std::to_string(attr) + " out of range");
      }
      n.shape = s.is_matrix() ? Shape{s.d1, 0} : Shape{1, 0};
      break;
    }
    case Op::cross_entropy:
      need(1);
      if (!shp(0).is_vector()) mismatch("need a logits vector");
      if (attr < 0 || attr >= shp(0).d0) {
        mismatch("target " + std::to_string(attr) + " out of range");
      }
      n.shape = Shape{1, 0};
      break;
    default:
      throw EngineError("unknown primitive id " +
                        std::to_string(static_cast<int32_t>(op)));
  }

  n.off = static_cast<int32_t>(vals_.size());
  vals_.resize(vals_.size() + static_cast<size_t>(n.shape.len()));
  Var out = push(n);
  eval_node(nodes_.size() - 1, vals_);
  return out;
}

void Tape::eval_node(size_t i, std::vector<double>& out) const {
  const Node& n = nodes_[i];
  double* y = out.data() + n.off;
  const int32_t len = n.shape.len();
  auto in = [&](int32_t idx) -> const double* {
    return out.data() + nodes_[static_cast<size_t>(idx)].off;
  };

  switch (n.op) {
    case Op::leaf:
      break;  // values already in the arena
    case Op::add: {
      const double *a = in(n.a), *b = in(n.b);
      for (int32_t k = 0; k < len; ++k) y[k] = a[k] + b[k];
      break;
    }
    case Op::sub: {
      const double *a = in(n.a), *b = in(n.b);
      for (int32_t k = 0; k < len; ++k) y[k] = a[k] - b[k];
      break;
    }
    case Op::mul: {
      const double *a = in(n.a), *b = in(n.b);
      for (int32_t k = 0; k < len; ++k) y[k] = a[k] * b[k];
      break;
    }
    case Op::matvec: {
      const Node& m = nodes_[static_cast<size_t>(n.a)];
      const double *mv = in(n.a), *v = in(n.b);
      const int32_t cols = m.shape.d1;
      for (int32_t r = 0; r < m.shape.d0; ++r) {
        y[r] = dot(mv + static_cast<size_t>(r) * cols, v, cols);
      }
      break;
    }
    case Op::inner: {
      y[0] = dot(in(n.a), in(n.b), nodes_[static_cast<size_t>(n.a)].shape.d0);
      break;
    }
    case Op::sigmoid: {
      const double* x = in(n.a);
      for (int32_t k = 0; k < len; ++k) y[k] = stable_sigmoid(x[k]);
      break;
    }
    case Op::prelu: {
      const double* x = in(n.a);
      const double slope = in(n.b)[0];
      for (int32_t k = 0; k < len; ++k) y[k] = x[k] > 0.0 ? x[k] : slope * x[k];
      break;
    }
    case Op::softmax: {
      const double* x = in(n.a);
      double mx = x[0];
      for (int32_t k = 1; k < len; ++k) mx = std::max(mx, x[k]);
      double z = 0.0;
      for (int32_t k = 0; k < len; ++k) {
        y[k] = std::exp(x[k] - mx);
        z += y[k];
      }
      for (int32_t k = 0; k < len; ++k) y[k] /= z;
      break;
    }
    case Op::l2norm: {
      const double* x = in(n.a);
      double q = 0.0;
      for (int32_t k = 0; k < len; ++k) q += x[k] * x[k];
      double s = 1.0 / std::sqrt(std::max(q, kNormEps));
      for (int32_t k = 0; k < len; ++k) y[k] = x[k] * s;
      break;
    }
    case Op::concat: {
      int32_t off = 0;
      for (int32_t k = 0; k < n.args_len; ++k) {
        const Node& part = nodes_[static_cast<size_t>(args_[n.args_off + k])];
        std::memcpy(y + off, out.data() + part.off,
                    sizeof(double) * static_cast<size_t>(part.shape.d0));
        off += part.shape.d0;
      }
      break;
    }
    case Op::sum: {
      const double* x = in(n.a);
      const int32_t m = nodes_[static_cast<size_t>(n.a)].shape.d0;
      double acc = 0.0;
      for (int32_t k = 0; k < m; ++k) acc += x[k];
      y[0] = acc;
      break;
    }
    case Op::gather_row: {
      const Node& src = nodes_[static_cast<size_t>(n.a)];
      const double* x = in(n.a);
      if (src.shape.is_matrix()) {
        std::memcpy(y, x + static_cast<size_t>(n.attr) * src.shape.d1,
                    sizeof(double) * static_cast<size_t>(src.shape.d1));
      } else {
        y[0] = x[n.attr];
      }
      break;
    }
    case Op::scale: {
      const double* x = in(n.a);
      const double s = in(n.b)[0];
      for (int32_t k = 0; k < len; ++k) y[k] = s * x[k];
      break;
    }
    case Op::cross_entropy: {
      const double* x = in(n.a);
      const int32_t m = nodes_[static_cast<size_t>(n.a)].shape.d0;
      double mx = x[0];
      for (int32_t k = 1; k < m; ++k) mx = std::max(mx, x[k]);
      double z = 0.0;
      for (int32_t k = 0; k < m; ++k) z += std::exp(x[k] - mx);
      y[0] = std::log(z) + mx - x[n.attr];
      break;
    }
  }
}

void Tape::backward(Var loss) {
  const Node& ln = at(loss);
  if (!ln.shape.is_scalar()) {
    throw ShapeError("backward: loss must be scalar, got " + ln.shape.str());
  }
  grads_.assign(vals_.size(), 0.0);
  has_grads_ = true;
  grads_[static_cast<size_t>(ln.off)] = 1.0;

  for (size_t i = nodes_.size(); i-- > 0;) {
    const Node& n = nodes_[i];
    const double* g = grads_.data() + n.off;
    const double* y = vals_.data() + n.off;
    const int32_t len = n.shape.len();
    auto val = [&](int32_t idx) -> const double* {
      return vals_.data() + nodes_[static_cast<size_t>(idx)].off;
    };
    auto gr = [&](int32_t idx) -> double* {
      return grads_.data() + nodes_[static_cast<size_t>(idx)].off;
    };

    switch (n.op) {
      case Op::leaf:
        break;
      case Op::add: {
        double *ga = gr(n.a), *gb = gr(n.b);
        for (int32_t k = 0; k < len; ++k) {
          ga[k] += g[k];
          gb[k] += g[k];
        }
        break;
      }
      case Op::sub: {
        double *ga = gr(n.a), *gb = gr(n.b);
        for (int32_t k = 0; k < len; ++k) {
          ga[k] += g[k];
          gb[k] -= g[k];
        }
        break;
      }
      case Op::mul: {
        double *ga = gr(n.a), *gb = gr(n.b);
        const double *a = val(n.a), *b = val(n.b);
        for (int32_t k = 0; k < len; ++k) {
          ga[k] += g[k] * b[k];
          gb[k] += g[k] * a[k];
        }
        break;
      }
      case Op::matvec: {
        const Node& m = nodes_[static_cast<size_t>(n.a)];
        const int32_t cols = m.shape.d1;
        const double *mv = val(n.a), *v = val(n.b);
        double *gm = gr(n.a), *gv = gr(n.b);
        for (int32_t r = 0; r < m.shape.d0; ++r) {
          const double gr_r = g[r];
          if (gr_r == 0.0) continue;
          double* gmr = gm + static_cast<size_t>(r) * cols;
          const double* mr = mv + static_cast<size_t>(r) * cols;
          for (int32_t c = 0; c < cols; ++c) {
            gmr[c] += gr_r * v[c];
            gv[c] += gr_r * mr[c];
          }
        }
        break;
      }
      case Op::inner: {
        const double *a = val(n.a), *b = val(n.b);
        double *ga = gr(n.a), *gb = gr(n.b);
        const int32_t m = nodes_[static_cast<size_t>(n.a)].shape.d0;
        const double g0 = g[0];
        for (int32_t k = 0; k < m; ++k) {
          ga[k] += g0 * b[k];
          gb[k] += g0 * a[k];
        }
        break;
      }
      case Op::sigmoid: {
        double* gx = gr(n.a);
        for (int32_t k = 0; k < len; ++k) gx[k] += g[k] * y[k] * (1.0 - y[k]);
        break;
      }
      case Op::prelu: {
        const double* x = val(n.a);
        const double slope = val(n.b)[0];
        double* gx = gr(n.a);
        double gs = 0.0;
        for (int32_t k = 0; k < len; ++k) {
          if (x[k] > 0.0) {
            gx[k] += g[k];
          } else {
            gx[k] += g[k] * slope;
            gs += g[k] * x[k];
          }
        }
        gr(n.b)[0] += gs;
        break;
      }
      case Op::softmax: {
        double* gx = gr(n.a);
        double s = 0.0;
        for (int32_t k = 0; k < len; ++k) s += g[k] * y[k];
        for (int32_t k = 0; k < len; ++k) gx[k] += y[k] * (g[k] - s);
        break;
      }
      case Op::l2norm: {
        const double* x = val(n.a);
        double* gx = gr(n.a);
        double q = 0.0;
        for (int32_t k = 0; k < len; ++k) q += x[k] * x[k];
        if (q > kNormEps) {
          const double s = 1.0 / std::sqrt(q);
          double t = 0.0;
          for (int32_t k = 0; k < len; ++k) t += x[k] * g[k];
          const double s3t = s * s * s * t;
          for (int32_t k = 0; k < len; ++k) gx[k] += s * g[k] - s3t * x[k];
        } else {
          const double s = 1.0 / std::sqrt(kNormEps);
          for (int32_t k = 0; k < len; ++k) gx[k] += s * g[k];
        }
        break;
      }
      case Op::concat: {
        int32_t off = 0;
        for (int32_t k = 0; k < n.args_len; ++k) {
          const Node& part = nodes_[static_cast<size_t>(args_[n.args_off + k])];
          double* gp = grads_.data() + part.off;
          for (int32_t j = 0; j < part.shape.d0; ++j) gp[j] += g[off + j];
          off += part.shape.d0;
        }
        break;
      }
      case Op::sum: {
        double* gx = gr(n.a);
        const int32_t m = nodes_[static_cast<size_t>(n.a)].shape.d0;
        for (int32_t k = 0; k < m; ++k) gx[k] += g[0];
        break;
      }
      case Op::gather_row: {
        const Node& src = nodes_[static_cast<size_t>(n.a)];
        double* gx = gr(n.a);
        if (src.shape.is_matrix()) {
          double* row = gx + static_cast<size_t>(n.attr) * src.shape.d1;
          for (int32_t k = 0; k < src.shape.d1; ++k) row[k] += g[k];
        } else {
          gx[n.attr] += g[0];
        }
        break;
      }
      case Op::scale: {
        const double* x = val(n.a);
        const double s = val(n.b)[0];
        double* gx = gr(n.a);
        double gs = 0.0;
        for (int32_t k = 0; k < len; ++k) {
          gx[k] += g[k] * s;
          gs += g[k] * x[k];
        }
        gr(n.b)[0] += gs;
        break;
      }
      case Op::cross_entropy: {
        const double* x = val(n.a);
        double* gx = gr(n.a);
        const int32_t m = nodes_[static_cast<size_t>(n.a)].shape.d0;
        double mx = x[0];
        for (int32_t k = 1; k < m; ++k) mx = std::max(mx, x[k]);
        double z = 0.0;
        for (int32_t k = 0; k < m; ++k) z += std::exp(x[k] - mx);
        const double g0 = g[0];
        for (int32_t k = 0; k < m; ++k) {
          double p = std::exp(x[k] - mx) / z;
          gx[k] += g0 * (p - (k == n.attr ? 1.0 : 0.0));
        }
        break;
      }
    }
  }
}

std::span<const double> Tape::value(Var v) const {
  const Node& n = at(v);
  return {vals_.data() + n.off, static_cast<size_t>(n.shape.len())};
}

std::span<const double> Tape::grad(Var v) const {
  if (!has_grads_) throw EngineError("grad: backward() has not run");
  const Node& n = at(v);
  return {grads_.data() + n.off, static_cast<size_t>(n.shape.len())};
}

Shape Tape::shape(Var v) const { return at(v).shape; }

void Tape::add_param_grads(std::span<const GradSink> sinks) const {
  if (!has_grads_) throw EngineError("add_param_grads: backward() has not run");
  for (const Node& n : nodes_) {
    if (n.op != Op::leaf || n.param_id < 0) continue;
    if (n.param_id >= static_cast<int32_t>(sinks.size()) ||
        sinks[static_cast<size_t>(n.param_id)].data == nullptr) {
      throw EngineError("add_param_grads: no sink for param id " +
                        std::to_string(n.param_id));
    }
    const GradSink& sink = sinks[static_cast<size_t>(n.param_id)];
    const double* g = grads_.data() + n.off;
    if (n.shape.is_matrix()) {
      const int32_t rows = n.shape.d0, cols = n.shape.d1;
      for (int32_t r = 0; r < rows; ++r) {
        double* dst = sink.data + static_cast<size_t>(r) * sink.cols + n.col0;
        const double* src = g + static_cast<size_t>(r) * cols;
        for (int32_t c = 0; c < cols; ++c) dst[c] += src[c];
      }
    } else {
      for (int32_t k = 0; k < n.shape.d0; ++k) sink.data[k] += g[k];
    }
  }
}

bool Tape::replay_matches() {
  std::vector<double> replayed = vals_;  // leaves keep their recorded inputs
  for (size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].op != Op::leaf) eval_node(i, replayed);
  }
  return std::memcmp(replayed.data(), vals_.data(),
                     sizeof(double) * vals_.size()) == 0;
}

void Tape::reset() {
  nodes_.clear();
  args_.clear();
  vals_.clear();
  grads_.clear();
  has_grads_ = false;
}

GradCheckReport grad_check(const std::function<double()>& f,
                           std::span<GradCheckGroup> groups, double h,
                           int32_t samples_per_group, uint64_t seed) {
  if (h <= 0.0) throw EngineError("grad_check: step must be positive");
  Rng rng(seed);
  GradCheckReport report;
  for (GradCheckGroup& grp : groups) {
    const int32_t n = static_cast<int32_t>(grp.values.size());
    std::vector<int32_t> idx;
    if (n <= samples_per_group) {
      idx.resize(static_cast<size_t>(n));
      for (int32_t k = 0; k < n; ++k) idx[static_cast<size_t>(k)] = k;
    } else {
      for (int32_t k = 0; k < samples_per_group; ++k) {
        idx.push_back(static_cast<int32_t>(rng.bounded(static_cast<uint64_t>(n))));
      }
    }
    for (int32_t k : idx) {
      double saved = grp.values[static_cast<size_t>(k)];
      grp.values[static_cast<size_t>(k)] = saved + h;
      double fp = f();
      grp.values[static_cast<size_t>(k)] = saved - h;
      double fm = f();
      grp.values[static_cast<size_t>(k)] = saved;
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        throw EngineError("grad_check: objective is not finite at " + grp.name);
      }
      double numeric = (fp - fm) / (2.0 * h);
      double analytic = grp.analytic[static_cast<size_t>(k)];
      double rel = std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic));
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_group = grp.name;
        report.worst_index = k;
      }
    }
  }
  return report;
}

}  // namespace relnet::ag
