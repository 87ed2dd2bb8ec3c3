#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "pepsvqe/circuit.hpp"
#include "pepsvqe/tensor.hpp"

namespace pepsvqe::ad {

// Handle into a Tape; (node, output slot).
struct Var {
  std::int32_t node = -1;
  std::int32_t slot = 0;
  bool valid() const { return node >= 0; }
};

// Reverse-mode tape over DenseTensor kernels. Forward ops delegate to the
// exact same tensor routines the undifferentiated code path uses, so a tape
// replay of a computation reproduces its values bit for bit.
class Tape {
 public:
  Var input(DenseTensor v);     // tracked leaf
  Var constant(DenseTensor v);  // leaf whose gradient nobody reads

  const DenseTensor& value(Var v) const;

  Var contract(Var a, Var b, std::vector<std::size_t> axes_a,
               std::vector<std::size_t> axes_b);
  Var permute(Var t, std::vector<std::size_t> perm);
  Var reshape(Var t, std::vector<std::size_t> shape);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var scale(Var t, double factor);
  Var mul_elem(Var a, Var b);
  Var scale_axis(Var t, Var weights, std::size_t axis);
  Var mul_scalar(Var t, Var s);   // s rank-0
  Var div_scalar(Var t, Var s);   // s rank-0
  Var div(Var a, Var b);          // rank-0 / rank-0
  Var norm2(Var v);               // rank-0
  Var max_abs(Var t);             // rank-0; subgradient at the first argmax
  Var sqrt_elem(Var v);
  // Elementwise pseudo-inverse against the leading entry (weights assumed
  // nonincreasing): y_i = v_i > cutoff * v_0 ? 1/v_i : 0.
  Var recip_clip(Var v, double rel_cutoff);

  struct Svd {
    Var left;
    Var weights;
    Var right;
    double discarded_weight = 0;
  };
  // Forwards to pepsvqe::svd_truncate. The backward pass treats the kept
  // triplet as the function output and applies the gap-regularized SVD
  // adjoint (epsilon 1e-12 on 1/(s_i^2 - s_j^2)).
  Svd svd_truncate(Var t, std::size_t n_left_axes, std::size_t chi, double cutoff);

  Var so4_gate(Var angles6);

  // Accumulates seed adjoints and runs the reverse sweep.
  void backward(Var scalar_output);
  void backward(const std::vector<std::pair<Var, DenseTensor>>& seeds);

  bool has_grad(Var v) const;
  // Gradient of a leaf/intermediate after backward(); zeros if untouched.
  DenseTensor grad(Var v) const;

  std::size_t n_nodes() const { return nodes_.size(); }

 private:
  struct Node {
    std::vector<DenseTensor> out;
    std::function<void(Tape&, std::int32_t)> back;  // nullptr for leaves
  };
  std::vector<Node> nodes_;
  std::vector<std::vector<DenseTensor>> adj_;  // empty tensor = zero

  Var push(std::vector<DenseTensor> out, std::function<void(Tape&, std::int32_t)> back);
  DenseTensor* adjoint_ptr(Var v);
  void accumulate(Var v, DenseTensor g);
  friend struct BackwardCtx;
};

inline constexpr double kSvdAdjointEps = 1e-12;

}  // namespace pepsvqe::ad
