#pragma once

// Reverse-mode automatic differentiation over dense tensors.
//
// A Tape records primitive operations in execution order; every record
// stores its parents and its forward value, so records are topologically
// sorted by construction. backward() sweeps the tape once in reverse and
// touches only records that depend on a leaf with requires_grad set.
// tangent() runs the matching forward-mode sweep, which the geometry code
// uses to build Jacobians column by column.

#include <cstddef>
#include <functional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "fibrae/tensor.hpp"

namespace fibrae::ad {

enum class Op {
  kLeaf,
  kMatMul,
  kAdd,
  kSub,
  kMul,
  kScale,
  kOffset,
  kSin,
  kCos,
  kRelu,
  kSigmoid,
  kLogSigmoid,
  kLog,
  kLogSoftmax,
  kConcat,
  kSlice,
  kSum,
  kSquaredNorm,
  kReverseGrad,
  kClamp,
};

std::string_view op_name(Op op);

class Tape;

// Handle to a record on a tape. Cheap to copy; valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

struct TapeOptions {
  // Throw NonFiniteError as soon as a primitive produces NaN/Inf.
  bool check_finite = false;
};

class Gradients {
 public:
  Gradients(const Tape& tape, std::vector<Tensor> grads,
            std::vector<bool> touched, std::size_t visited)
      : tape_(&tape),
        grads_(std::move(grads)),
        touched_(std::move(touched)),
        visited_(visited) {}

  // Gradient with respect to `v`; exactly zero when `v` is disconnected.
  Tensor operator[](Var v) const;
  bool reached(Var v) const { return v.id < touched_.size() && touched_[v.id]; }
  // Number of records whose adjoint was propagated during the sweep.
  std::size_t records_visited() const noexcept { return visited_; }

 private:
  const Tape* tape_;
  std::vector<Tensor> grads_;
  std::vector<bool> touched_;
  std::size_t visited_;
};

// Scalar parameters of a record (scale factor, clamp bounds, slice range).
struct RecordAux {
  double a = 0.0;
  double b = 0.0;
  std::size_t axis = 0;
  std::size_t begin = 0;
  std::size_t end = 0;
};

class Tape {
 public:
  using Aux = RecordAux;

  struct Record {
    Op op = Op::kLeaf;
    std::vector<std::size_t> parents;
    Tensor value;
    Aux aux;
    bool requires_grad = false;
  };

  explicit Tape(TapeOptions options = {}) : options_(options) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf honoring the tensor's own requires_grad flag.
  Var leaf(Tensor value);
  Var parameter(Tensor value);
  Var constant(Tensor value);

  Var record(Op op, std::vector<std::size_t> parents, Tensor value,
             RecordAux aux = RecordAux{});

  const Tensor& value(Var v) const { return records_.at(v.id).value; }
  const Record& at(std::size_t id) const { return records_.at(id); }
  std::size_t size() const noexcept { return records_.size(); }
  const TapeOptions& options() const noexcept { return options_; }

  // Gradient of a scalar output with respect to every record.
  Gradients backward(Var output) const;
  // Vector-Jacobian product: adjoint of `output` seeded with `seed`.
  Gradients backward(Var output, const Tensor& seed) const;

  // Forward-mode directional derivative of `output` given tangents of a set
  // of leaves; unseeded leaves have zero tangent.
  Tensor tangent(Var output,
                 std::span<const std::pair<Var, Tensor>> seeds) const;

 private:
  TapeOptions options_;
  std::vector<Record> records_;
};

// Primitives. All operands must live on the same tape.
Var matmul(Var a, Var b);
// a * transpose(b); `b` is (n x k) for an (m x k) or rank-1 (k) operand `a`.
Var matmul_transposed(Var a, Var b);
// Elementwise; `b` may also be a single row broadcast over the rows of `a`.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var offset(Var a, double shift);
Var sin(Var a);
Var cos(Var a);
Var relu(Var a);
Var sigmoid(Var a);
Var log_sigmoid(Var a);
Var log(Var a);
// Row-wise log-softmax.
Var log_softmax(Var a);
// Concatenation along the last axis.
Var concat(std::span<const Var> parts);
Var concat(std::initializer_list<Var> parts);
// Half-open range [begin, end) along `axis`.
Var slice(Var a, std::size_t axis, std::size_t begin, std::size_t end);
Var sum(Var a);
Var squared_norm(Var a);
// Gradient reversal: identity forward, adjoint scaled by -lambda.
Var reverse_grad(Var a, double lambda);
// Clamp to [lo, hi]; zero derivative where the bound is active.
Var clamp(Var a, double lo, double hi);

// Central-difference estimate of the gradient of `f` at `x`, one pair of
// evaluations per coordinate. Throws NonFiniteError on a non-finite value.
std::vector<double> finite_difference_gradient(
    const std::function<double(std::span<const double>)>& f,
    std::span<const double> x, double h);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(double s, Var a) { return scale(a, s); }

}  // namespace fibrae::ad
