#include "fibrae/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace fibrae::ad {
namespace {

Tape& tape_of(Var a) {
  if (a.tape == nullptr) throw std::logic_error("Var is not bound to a tape");
  return *a.tape;
}

Tape& common_tape(Var a, Var b) {
  if (a.tape != b.tape) throw std::logic_error("operands live on different tapes");
  return tape_of(a);
}

bool is_row_broadcast(const Tensor& a, const Tensor& b) {
  return a.rank() == 2 && b.size() == a.cols() &&
         b.rows() == 1 && b.rank() >= 1;
}

void check_elementwise(const Tensor& a, const Tensor& b, std::string_view what,
                       bool allow_broadcast) {
  if (a.same_shape(b)) return;
  if (allow_broadcast && is_row_broadcast(a, b)) return;
  throw ShapeError(std::string(what) + ": incompatible shapes " +
                   shape_string(a.shape()) + " and " + shape_string(b.shape()));
}

// C += op(A) * op(B) for row-major matrices.
void gemm(const double* a, const double* b, double* c, std::size_t m,
          std::size_t k, std::size_t n, bool trans_a, bool trans_b) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = trans_a ? a[p * m + i] : a[i * k + p];
      if (aip == 0.0) continue;
      if (!trans_b) {
        const double* brow = b + p * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
      } else {
        for (std::size_t j = 0; j < n; ++j) crow[j] += aip * b[j * k + p];
      }
    }
  }
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_log_sigmoid(double x) {
  return std::min(x, 0.0) - std::log1p(std::exp(-std::abs(x)));
}

Tensor zeros_like(const Tensor& t) { return Tensor(t.shape(), 0.0); }

void accumulate(Tensor& into, const Tensor& from) {
  auto dst = into.values();
  auto src = from.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

// Column sums of `g` (rows x cols), used for broadcast adjoints.
Tensor column_sums(const Tensor& g, const Shape& target) {
  Tensor out(target, 0.0);
  const auto r = g.rows(), c = g.cols();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j] += g(i, j);
  return out;
}

Shape slice_shape(const Shape& s, std::size_t axis, std::size_t len) {
  Shape out = s;
  out[axis] = len;
  return out;
}

// Copies the [begin,end) slab along `axis` of `src` into `dst` (or the
// reverse when `scatter` is set).
void slab_copy(const Tensor& whole, Tensor& part, std::size_t axis,
               std::size_t begin, bool scatter_into_whole, Tensor* whole_out) {
  const std::size_t rows = whole.rows();
  const std::size_t cols = whole.cols();
  const bool along_rows = whole.rank() == 2 && axis == 0;
  const std::size_t pr = part.rows(), pc = part.cols();
  for (std::size_t i = 0; i < pr; ++i) {
    for (std::size_t j = 0; j < pc; ++j) {
      const std::size_t wi = along_rows ? begin + i : i;
      const std::size_t wj = along_rows ? j : begin + j;
      (void)rows;
      if (scatter_into_whole) {
        (*whole_out)[wi * cols + wj] += part[i * pc + j];
      } else {
        part[i * pc + j] = whole[wi * cols + wj];
      }
    }
  }
}

}  // namespace

std::string_view op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kMatMul: return "matmul";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kScale: return "scale";
    case Op::kOffset: return "offset";
    case Op::kSin: return "sin";
    case Op::kCos: return "cos";
    case Op::kRelu: return "relu";
    case Op::kSigmoid: return "sigmoid";
    case Op::kLogSigmoid: return "log_sigmoid";
    case Op::kLog: return "log";
    case Op::kLogSoftmax: return "log_softmax";
    case Op::kConcat: return "concat";
    case Op::kSlice: return "slice";
    case Op::kSum: return "sum";
    case Op::kSquaredNorm: return "squared_norm";
    case Op::kReverseGrad: return "reverse_grad";
    case Op::kClamp: return "clamp";
  }
  return "unknown";
}

const Tensor& Var::value() const { return tape_of(*this).value(*this); }

Tensor Gradients::operator[](Var v) const {
  if (v.tape != tape_) throw std::logic_error("Var belongs to another tape");
  if (v.id < touched_.size() && touched_[v.id]) return grads_[v.id];
  return zeros_like(tape_->value(v));
}

Var Tape::leaf(Tensor value) {
  const bool grad = value.requires_grad();
  Record rec;
  rec.value = std::move(value);
  rec.requires_grad = grad;
  records_.push_back(std::move(rec));
  return Var{this, records_.size() - 1};
}

Var Tape::parameter(Tensor value) {
  value.set_requires_grad(true);
  return leaf(std::move(value));
}

Var Tape::constant(Tensor value) {
  value.set_requires_grad(false);
  return leaf(std::move(value));
}

Var Tape::record(Op op, std::vector<std::size_t> parents, Tensor value,
                 Aux aux) {
  if (options_.check_finite && !value.all_finite()) {
    throw NonFiniteError("non-finite value produced by " +
                         std::string(op_name(op)) + " at record " +
                         std::to_string(records_.size()));
  }
  Record rec;
  rec.op = op;
  rec.requires_grad = std::any_of(parents.begin(), parents.end(),
                                  [&](std::size_t p) {
                                    return records_[p].requires_grad;
                                  });
  rec.parents = std::move(parents);
  rec.value = std::move(value);
  rec.aux = aux;
  records_.push_back(std::move(rec));
  return Var{this, records_.size() - 1};
}

Gradients Tape::backward(Var output) const {
  const Tensor& out = value(output);
  if (out.size() != 1) {
    throw ShapeError("backward() needs a scalar output, got shape " +
                     shape_string(out.shape()));
  }
  Tensor seed(out.shape(), 1.0);
  return backward(output, seed);
}

Gradients Tape::backward(Var output, const Tensor& seed) const {
  if (output.tape != this) throw std::logic_error("output not on this tape");
  const std::size_t n = output.id + 1;
  std::vector<Tensor> grads(n);
  std::vector<bool> touched(n, false);
  if (!seed.same_shape(value(output))) {
    throw ShapeError("seed shape " + shape_string(seed.shape()) +
                     " does not match output " +
                     shape_string(value(output).shape()));
  }
  grads[output.id] = seed;
  touched[output.id] = true;

  auto give = [&](std::size_t id, Tensor contribution) {
    if (!records_[id].requires_grad) return;
    if (!touched[id]) {
      grads[id] = std::move(contribution);
      touched[id] = true;
    } else {
      accumulate(grads[id], contribution);
    }
  };

  std::size_t visited = 0;
  for (std::size_t idx = n; idx-- > 0;) {
    if (!touched[idx]) continue;
    const Record& rec = records_[idx];
    if (rec.op == Op::kLeaf || !rec.requires_grad) continue;
    ++visited;
    const Tensor& g = grads[idx];
    const Tensor& y = rec.value;
    auto par = [&](std::size_t i) -> const Tensor& {
      return records_[rec.parents[i]].value;
    };
    auto needs = [&](std::size_t i) {
      return records_[rec.parents[i]].requires_grad;
    };

    switch (rec.op) {
      case Op::kLeaf:
        break;
      case Op::kMatMul: {
        const Tensor& a = par(0);
        const Tensor& b = par(1);
        const std::size_t m = a.rows(), k = a.cols();
        const bool tb = rec.aux.axis == 1;
        const std::size_t c = tb ? b.rows() : b.cols();
        if (tb) {
          // y = a b^T: da = g b, db = g^T a
          if (needs(0)) {
            Tensor da(a.shape(), 0.0);
            gemm(g.values().data(), b.values().data(), da.values().data(), m,
                 c, k, false, false);
            give(rec.parents[0], std::move(da));
          }
          if (needs(1)) {
            Tensor db(b.shape(), 0.0);
            gemm(g.values().data(), a.values().data(), db.values().data(), c,
                 m, k, true, false);
            give(rec.parents[1], std::move(db));
          }
          break;
        }
        if (needs(0)) {
          Tensor da(a.shape(), 0.0);
          gemm(g.values().data(), b.values().data(), da.values().data(), m, c,
               k, false, true);
          give(rec.parents[0], std::move(da));
        }
        if (needs(1)) {
          Tensor db(b.shape(), 0.0);
          gemm(a.values().data(), g.values().data(), db.values().data(), k, m,
               c, true, false);
          give(rec.parents[1], std::move(db));
        }
        break;
      }
      case Op::kAdd:
      case Op::kSub: {
        const double sign = rec.op == Op::kAdd ? 1.0 : -1.0;
        if (needs(0)) give(rec.parents[0], g);
        if (needs(1)) {
          Tensor db = par(1).same_shape(g) ? g : column_sums(g, par(1).shape());
          if (sign < 0) {
            for (double& v : db.values()) v = -v;
          }
          give(rec.parents[1], std::move(db));
        }
        break;
      }
      case Op::kMul: {
        const Tensor& a = par(0);
        const Tensor& b = par(1);
        if (needs(0)) {
          Tensor da = g;
          for (std::size_t i = 0; i < da.size(); ++i) da[i] *= b[i];
          give(rec.parents[0], std::move(da));
        }
        if (needs(1)) {
          Tensor db = g;
          for (std::size_t i = 0; i < db.size(); ++i) db[i] *= a[i];
          give(rec.parents[1], std::move(db));
        }
        break;
      }
      case Op::kScale:
      case Op::kReverseGrad: {
        const double f = rec.op == Op::kScale ? rec.aux.a : -rec.aux.a;
        Tensor da = g;
        for (double& v : da.values()) v *= f;
        give(rec.parents[0], std::move(da));
        break;
      }
      case Op::kOffset:
        give(rec.parents[0], g);
        break;
      case Op::kSin:
      case Op::kCos:
      case Op::kRelu:
      case Op::kSigmoid:
      case Op::kLogSigmoid:
      case Op::kLog:
      case Op::kClamp: {
        const Tensor& x = par(0);
        Tensor dx = g;
        for (std::size_t i = 0; i < dx.size(); ++i) {
          double d = 0.0;
          switch (rec.op) {
            case Op::kSin: d = std::cos(x[i]); break;
            case Op::kCos: d = -std::sin(x[i]); break;
            case Op::kRelu: d = x[i] > 0.0 ? 1.0 : 0.0; break;
            case Op::kSigmoid: d = y[i] * (1.0 - y[i]); break;
            case Op::kLogSigmoid: d = stable_sigmoid(-x[i]); break;
            case Op::kLog: d = 1.0 / x[i]; break;
            case Op::kClamp:
              d = (x[i] >= rec.aux.a && x[i] <= rec.aux.b) ? 1.0 : 0.0;
              break;
            default: break;
          }
          dx[i] *= d;
        }
        give(rec.parents[0], std::move(dx));
        break;
      }
      case Op::kLogSoftmax: {
        const std::size_t r = y.rows(), c = y.cols();
        Tensor dx = g;
        for (std::size_t i = 0; i < r; ++i) {
          double gsum = 0.0;
          for (std::size_t j = 0; j < c; ++j) gsum += g[i * c + j];
          for (std::size_t j = 0; j < c; ++j)
            dx[i * c + j] -= std::exp(y[i * c + j]) * gsum;
        }
        give(rec.parents[0], std::move(dx));
        break;
      }
      case Op::kConcat: {
        const std::size_t r = y.rows(), c = y.cols();
        std::size_t col = 0;
        for (std::size_t p = 0; p < rec.parents.size(); ++p) {
          const Tensor& part = par(p);
          const std::size_t pc = part.cols();
          if (needs(p)) {
            Tensor dp(part.shape(), 0.0);
            for (std::size_t i = 0; i < r; ++i)
              for (std::size_t j = 0; j < pc; ++j)
                dp[i * pc + j] = g[i * c + col + j];
            give(rec.parents[p], std::move(dp));
          }
          col += pc;
        }
        break;
      }
      case Op::kSlice: {
        Tensor dx(par(0).shape(), 0.0);
        Tensor part = g;
        slab_copy(par(0), part, rec.aux.axis, rec.aux.begin, true, &dx);
        give(rec.parents[0], std::move(dx));
        break;
      }
      case Op::kSum: {
        give(rec.parents[0], Tensor(par(0).shape(), g.item()));
        break;
      }
      case Op::kSquaredNorm: {
        Tensor dx = par(0);
        const double s = 2.0 * g.item();
        for (double& v : dx.values()) v *= s;
        give(rec.parents[0], std::move(dx));
        break;
      }
    }
  }
  return Gradients(*this, std::move(grads), std::move(touched), visited);
}

Tensor Tape::tangent(Var output,
                     std::span<const std::pair<Var, Tensor>> seeds) const {
  if (output.tape != this) throw std::logic_error("output not on this tape");
  const std::size_t n = output.id + 1;
  std::vector<Tensor> tan(n);
  std::vector<bool> live(n, false);
  for (const auto& [v, t] : seeds) {
    if (v.tape != this || v.id >= n) continue;
    if (!t.same_shape(value(v))) {
      throw ShapeError("tangent seed shape mismatch at record " +
                       std::to_string(v.id));
    }
    tan[v.id] = t;
    live[v.id] = true;
  }

  for (std::size_t idx = 0; idx < n; ++idx) {
    const Record& rec = records_[idx];
    if (rec.op == Op::kLeaf) continue;
    bool any = false;
    for (auto p : rec.parents) any = any || live[p];
    if (!any) continue;
    auto par = [&](std::size_t i) -> const Tensor& {
      return records_[rec.parents[i]].value;
    };
    auto dpar = [&](std::size_t i) -> const Tensor* {
      return live[rec.parents[i]] ? &tan[rec.parents[i]] : nullptr;
    };
    const Tensor& y = rec.value;
    Tensor dy(y.shape(), 0.0);

    switch (rec.op) {
      case Op::kLeaf:
        break;
      case Op::kMatMul: {
        const Tensor& a = par(0);
        const Tensor& b = par(1);
        const bool tb = rec.aux.axis == 1;
        const std::size_t m = a.rows(), k = a.cols();
        const std::size_t c = tb ? b.rows() : b.cols();
        if (auto* da = dpar(0))
          gemm(da->values().data(), b.values().data(), dy.values().data(), m,
               k, c, false, tb);
        if (auto* db = dpar(1))
          gemm(a.values().data(), db->values().data(), dy.values().data(), m,
               k, c, false, tb);
        break;
      }
      case Op::kAdd:
      case Op::kSub: {
        const double sign = rec.op == Op::kAdd ? 1.0 : -1.0;
        if (auto* da = dpar(0)) accumulate(dy, *da);
        if (auto* db = dpar(1)) {
          const std::size_t c = dy.cols();
          for (std::size_t i = 0; i < dy.size(); ++i)
            dy[i] += sign * (*db)[db->size() == dy.size() ? i : i % c];
        }
        break;
      }
      case Op::kMul: {
        if (auto* da = dpar(0))
          for (std::size_t i = 0; i < dy.size(); ++i) dy[i] += (*da)[i] * par(1)[i];
        if (auto* db = dpar(1))
          for (std::size_t i = 0; i < dy.size(); ++i) dy[i] += par(0)[i] * (*db)[i];
        break;
      }
      case Op::kScale: {
        const Tensor& da = *dpar(0);
        for (std::size_t i = 0; i < dy.size(); ++i) dy[i] = rec.aux.a * da[i];
        break;
      }
      case Op::kOffset:
      case Op::kReverseGrad:
        dy = *dpar(0);
        break;
      case Op::kSin:
      case Op::kCos:
      case Op::kRelu:
      case Op::kSigmoid:
      case Op::kLogSigmoid:
      case Op::kLog:
      case Op::kClamp: {
        const Tensor& x = par(0);
        const Tensor& dx = *dpar(0);
        for (std::size_t i = 0; i < dy.size(); ++i) {
          double d = 0.0;
          switch (rec.op) {
            case Op::kSin: d = std::cos(x[i]); break;
            case Op::kCos: d = -std::sin(x[i]); break;
            case Op::kRelu: d = x[i] > 0.0 ? 1.0 : 0.0; break;
            case Op::kSigmoid: d = y[i] * (1.0 - y[i]); break;
            case Op::kLogSigmoid: d = stable_sigmoid(-x[i]); break;
            case Op::kLog: d = 1.0 / x[i]; break;
            case Op::kClamp:
              d = (x[i] >= rec.aux.a && x[i] <= rec.aux.b) ? 1.0 : 0.0;
              break;
            default: break;
          }
          dy[i] = d * dx[i];
        }
        break;
      }
      case Op::kLogSoftmax: {
        const Tensor& dx = *dpar(0);
        const std::size_t r = y.rows(), c = y.cols();
        for (std::size_t i = 0; i < r; ++i) {
          double mean = 0.0;
          for (std::size_t j = 0; j < c; ++j)
            mean += std::exp(y[i * c + j]) * dx[i * c + j];
          for (std::size_t j = 0; j < c; ++j) dy[i * c + j] = dx[i * c + j] - mean;
        }
        break;
      }
      case Op::kConcat: {
        const std::size_t r = y.rows(), c = y.cols();
        std::size_t col = 0;
        for (std::size_t p = 0; p < rec.parents.size(); ++p) {
          const std::size_t pc = par(p).cols();
          if (auto* dp = dpar(p)) {
            for (std::size_t i = 0; i < r; ++i)
              for (std::size_t j = 0; j < pc; ++j)
                dy[i * c + col + j] = (*dp)[i * pc + j];
          }
          col += pc;
        }
        break;
      }
      case Op::kSlice:
        slab_copy(*dpar(0), dy, rec.aux.axis, rec.aux.begin, false, nullptr);
        break;
      case Op::kSum: {
        double s = 0.0;
        for (double v : dpar(0)->values()) s += v;
        dy[0] = s;
        break;
      }
      case Op::kSquaredNorm: {
        const Tensor& x = par(0);
        const Tensor& dx = *dpar(0);
        double s = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) s += 2.0 * x[i] * dx[i];
        dy[0] = s;
        break;
      }
    }
    tan[idx] = std::move(dy);
    live[idx] = true;
  }
  if (!live[output.id]) return zeros_like(value(output));
  return tan[output.id];
}

// ---- primitives -----------------------------------------------------------

Var matmul(Var a, Var b) {
  Tape& t = common_tape(a, b);
  const Tensor& x = a.value();
  const Tensor& w = b.value();
  if (w.rank() != 2 || x.rank() == 0 || x.cols() != w.rows()) {
    throw ShapeError("matmul: cannot multiply " + shape_string(x.shape()) +
                     " by " + shape_string(w.shape()));
  }
  const std::size_t m = x.rows(), k = x.cols(), n = w.cols();
  Shape out_shape = x.rank() == 1 ? Shape{n} : Shape{m, n};
  Tensor y(out_shape, 0.0);
  gemm(x.values().data(), w.values().data(), y.values().data(), m, k, n, false,
       false);
  return t.record(Op::kMatMul, {a.id, b.id}, std::move(y));
}

Var matmul_transposed(Var a, Var b) {
  Tape& t = common_tape(a, b);
  const Tensor& x = a.value();
  const Tensor& w = b.value();
  if (w.rank() != 2 || x.rank() == 0 || x.cols() != w.cols()) {
    throw ShapeError("matmul_transposed: cannot multiply " +
                     shape_string(x.shape()) + " by transpose of " +
                     shape_string(w.shape()));
  }
  const std::size_t m = x.rows(), k = x.cols(), n = w.rows();
  Tensor y(x.rank() == 1 ? Shape{n} : Shape{m, n}, 0.0);
  gemm(x.values().data(), w.values().data(), y.values().data(), m, k, n, false,
       true);
  return t.record(Op::kMatMul, {a.id, b.id}, std::move(y), {.axis = 1});
}

std::vector<double> finite_difference_gradient(
    const std::function<double(std::span<const double>)>& f,
    std::span<const double> x, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite difference step must be > 0");
  std::vector<double> point(x.begin(), x.end());
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = point[i];
    point[i] = saved + h;
    const double up = f(point);
    point[i] = saved - h;
    const double down = f(point);
    point[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NonFiniteError("non-finite function value at coordinate " +
                           std::to_string(i));
    }
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

namespace {

Var binary(Op op, Var a, Var b, bool broadcast) {
  Tape& t = common_tape(a, b);
  const Tensor& x = a.value();
  const Tensor& z = b.value();
  check_elementwise(x, z, op_name(op), broadcast);
  Tensor y = x;
  const std::size_t c = y.cols();
  const bool bc = !x.same_shape(z);
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double rhs = z[bc ? i % c : i];
    switch (op) {
      case Op::kAdd: y[i] += rhs; break;
      case Op::kSub: y[i] -= rhs; break;
      case Op::kMul: y[i] *= rhs; break;
      default: break;
    }
  }
  return t.record(op, {a.id, b.id}, std::move(y));
}

template <typename F>
Var unary(Op op, Var a, F&& f, Tape::Aux aux = {}) {
  Tape& t = tape_of(a);
  Tensor y = a.value();
  for (double& v : y.values()) v = f(v);
  return t.record(op, {a.id}, std::move(y), aux);
}

}  // namespace

Var add(Var a, Var b) { return binary(Op::kAdd, a, b, true); }
Var sub(Var a, Var b) { return binary(Op::kSub, a, b, true); }
Var mul(Var a, Var b) { return binary(Op::kMul, a, b, false); }

Var scale(Var a, double factor) {
  return unary(Op::kScale, a, [factor](double v) { return factor * v; },
               {.a = factor});
}

Var offset(Var a, double shift) {
  return unary(Op::kOffset, a, [shift](double v) { return v + shift; },
               {.a = shift});
}

Var sin(Var a) { return unary(Op::kSin, a, [](double v) { return std::sin(v); }); }
Var cos(Var a) { return unary(Op::kCos, a, [](double v) { return std::cos(v); }); }
Var relu(Var a) {
  return unary(Op::kRelu, a, [](double v) { return v > 0.0 ? v : 0.0; });
}
Var sigmoid(Var a) { return unary(Op::kSigmoid, a, stable_sigmoid); }
Var log_sigmoid(Var a) { return unary(Op::kLogSigmoid, a, stable_log_sigmoid); }
Var log(Var a) { return unary(Op::kLog, a, [](double v) { return std::log(v); }); }

Var log_softmax(Var a) {
  Tape& t = tape_of(a);
  Tensor y = a.value();
  const std::size_t r = y.rows(), c = y.cols();
  for (std::size_t i = 0; i < r; ++i) {
    double* row = y.values().data() + i * c;
    const double mx = *std::max_element(row, row + c);
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += std::exp(row[j] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t j = 0; j < c; ++j) row[j] -= lse;
  }
  return t.record(Op::kLogSoftmax, {a.id}, std::move(y));
}

Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat: no operands");
  Tape& t = tape_of(parts.front());
  const Tensor& first = parts.front().value();
  const std::size_t rank = first.rank();
  const std::size_t rows = first.rows();
  std::size_t total = 0;
  std::vector<std::size_t> ids;
  for (const Var& p : parts) {
    if (p.tape != &t) throw std::logic_error("concat operands on different tapes");
    const Tensor& v = p.value();
    if (v.rank() != rank || v.rows() != rows || rank == 0) {
      throw ShapeError("concat: incompatible shapes " +
                       shape_string(first.shape()) + " and " +
                       shape_string(v.shape()));
    }
    total += v.cols();
    ids.push_back(p.id);
  }
  Tensor y(rank == 1 ? Shape{total} : Shape{rows, total}, 0.0);
  std::size_t col = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    const std::size_t pc = v.cols();
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < pc; ++j) y[i * total + col + j] = v[i * pc + j];
    col += pc;
  }
  return t.record(Op::kConcat, std::move(ids), std::move(y));
}

Var concat(std::initializer_list<Var> parts) {
  return concat(std::span<const Var>(parts.begin(), parts.size()));
}

Var slice(Var a, std::size_t axis, std::size_t begin, std::size_t end) {
  Tape& t = tape_of(a);
  const Tensor& x = a.value();
  if (x.rank() == 0 || axis >= x.rank() || begin >= end ||
      end > x.shape()[axis]) {
    throw ShapeError("slice: range [" + std::to_string(begin) + "," +
                     std::to_string(end) + ") on axis " + std::to_string(axis) +
                     " invalid for shape " + shape_string(x.shape()));
  }
  Tensor y(slice_shape(x.shape(), axis, end - begin), 0.0);
  slab_copy(x, y, axis, begin, false, nullptr);
  return t.record(Op::kSlice, {a.id}, std::move(y),
                  {.axis = axis, .begin = begin, .end = end});
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return tape_of(a).record(Op::kSum, {a.id}, Tensor::scalar(s));
}

Var squared_norm(Var a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v * v;
  return tape_of(a).record(Op::kSquaredNorm, {a.id}, Tensor::scalar(s));
}

Var reverse_grad(Var a, double lambda) {
  if (lambda < 0.0) throw std::invalid_argument("reverse_grad: lambda must be >= 0");
  return unary(Op::kReverseGrad, a, [](double v) { return v; }, {.a = lambda});
}

Var clamp(Var a, double lo, double hi) {
  return unary(Op::kClamp, a,
               [lo, hi](double v) { return std::clamp(v, lo, hi); },
               {.a = lo, .b = hi});
}

}  // namespace fibrae::ad
