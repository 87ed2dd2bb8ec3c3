#include "pepsvqe/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pepsvqe::ad {

namespace {

std::vector<std::size_t> inverse_perm(const std::vector<std::size_t>& p) {
  std::vector<std::size_t> inv(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) inv[p[i]] = i;
  return inv;
}

}  // namespace

Var Tape::push(std::vector<DenseTensor> out, std::function<void(Tape&, std::int32_t)> back) {
  nodes_.push_back({std::move(out), std::move(back)});
  adj_.push_back({});
  adj_.back().resize(nodes_.back().out.size());
  return {static_cast<std::int32_t>(nodes_.size() - 1), 0};
}

Var Tape::input(DenseTensor v) { return push({std::move(v)}, nullptr); }
Var Tape::constant(DenseTensor v) { return push({std::move(v)}, nullptr); }

const DenseTensor& Tape::value(Var v) const {
  return nodes_.at(v.node).out.at(v.slot);
}

// An absent adjoint is a default-constructed tensor (size 0); every live
// tensor in these computations has size >= 1.
DenseTensor* Tape::adjoint_ptr(Var v) {
  DenseTensor& a = adj_.at(v.node).at(v.slot);
  return a.size() == 0 ? nullptr : &a;
}

void Tape::accumulate(Var v, DenseTensor g) {
  DenseTensor& a = adj_[v.node][v.slot];
  if (a.size() == 0) {
    a = std::move(g);
    return;
  }
  if (a.shape() != g.shape()) throw std::logic_error("accumulate: adjoint shape mismatch");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += g[i];
}

bool Tape::has_grad(Var v) const { return adj_.at(v.node).at(v.slot).size() != 0; }

DenseTensor Tape::grad(Var v) const {
  const DenseTensor& a = adj_.at(v.node).at(v.slot);
  if (a.size() != 0) return a;
  return DenseTensor(value(v).shape());
}

void Tape::backward(Var scalar_output) {
  if (value(scalar_output).size() != 1)
    throw std::invalid_argument("backward: seed must be a scalar");
  backward({{scalar_output, DenseTensor(value(scalar_output).shape(), {1.0})}});
}

void Tape::backward(const std::vector<std::pair<Var, DenseTensor>>& seeds) {
  for (const auto& [v, g] : seeds) {
    if (g.shape() != value(v).shape())
      throw std::invalid_argument("backward: seed shape mismatch");
    accumulate(v, g);
  }
  for (std::int32_t n = static_cast<std::int32_t>(nodes_.size()) - 1; n >= 0; --n) {
    if (!nodes_[n].back) continue;
    bool any = false;
    for (std::size_t s = 0; s < nodes_[n].out.size(); ++s)
      if (adj_[n][s].size() != 0) any = true;
    if (any) nodes_[n].back(*this, n);
  }
}

namespace {

// Fetches this node's adjoint for a slot, or a zero tensor of the right shape.
DenseTensor slot_adjoint(Tape& t, const std::vector<DenseTensor>& adj_row,
                         const std::vector<DenseTensor>& out_row, std::size_t slot) {
  (void)t;
  if (adj_row[slot].size() != 0) return adj_row[slot];
  return DenseTensor(out_row[slot].shape());
}

}  // namespace

Var Tape::contract(Var a, Var b, std::vector<std::size_t> axes_a,
                   std::vector<std::size_t> axes_b) {
  DenseTensor out = pepsvqe::contract(value(a), value(b), axes_a, axes_b);
  const std::size_t ra = value(a).rank(), rb = value(b).rank();

  std::vector<bool> ca(ra, false), cb(rb, false);
  for (std::size_t i = 0; i < axes_a.size(); ++i) {
    ca[axes_a[i]] = true;
    cb[axes_b[i]] = true;
  }
  std::vector<std::size_t> free_a, free_b;
  for (std::size_t i = 0; i < ra; ++i)
    if (!ca[i]) free_a.push_back(i);
  for (std::size_t i = 0; i < rb; ++i)
    if (!cb[i]) free_b.push_back(i);

  auto rank_in_sorted = [](const std::vector<std::size_t>& v, std::size_t x) {
    std::size_t r = 0;
    for (std::size_t y : v)
      if (y < x) ++r;
    return r;
  };

  auto back = [a, b, axes_a, axes_b, free_a, free_b, ra, rb,
               rank_in_sorted](Tape& t, std::int32_t node) {
    DenseTensor cbar = slot_adjoint(t, t.adj_[node], t.nodes_[node].out, 0);
    const std::size_t nfa = free_a.size(), nfb = free_b.size();

    // positions of free_b within the output are nfa..nfa+nfb-1
    {
      std::vector<std::size_t> cpos(nfb), bax(nfb);
      for (std::size_t i = 0; i < nfb; ++i) {
        cpos[i] = nfa + i;
        bax[i] = free_b[i];
      }
      DenseTensor abar = pepsvqe::contract(cbar, t.value(b), cpos, bax);
      // abar axes: [free_a..., axes_b-sorted...] -> permute to a's layout
      std::vector<std::size_t> perm(ra);
      for (std::size_t i = 0; i < nfa; ++i) perm[free_a[i]] = i;
      for (std::size_t i = 0; i < axes_a.size(); ++i)
        perm[axes_a[i]] = nfa + rank_in_sorted(axes_b, axes_b[i]);
      t.accumulate(a, pepsvqe::permute(abar, perm));
    }
    {
      std::vector<std::size_t> apos(nfa), cpos(nfa);
      for (std::size_t i = 0; i < nfa; ++i) {
        apos[i] = free_a[i];
        cpos[i] = i;
      }
      DenseTensor bbar = pepsvqe::contract(t.value(a), cbar, apos, cpos);
      // bbar axes: [axes_a-sorted..., free_b...] -> permute to b's layout
      std::vector<std::size_t> perm(rb);
      for (std::size_t i = 0; i < axes_a.size(); ++i)
        perm[axes_b[i]] = rank_in_sorted(axes_a, axes_a[i]);
      for (std::size_t i = 0; i < nfb; ++i) perm[free_b[i]] = axes_a.size() + i;
      t.accumulate(b, pepsvqe::permute(bbar, perm));
    }
  };
  return push({std::move(out)}, back);
}

Var Tape::permute(Var v, std::vector<std::size_t> perm) {
  DenseTensor out = pepsvqe::permute(value(v), perm);
  auto back = [v, perm](Tape& t, std::int32_t node) {
    DenseTensor cbar = slot_adjoint(t, t.adj_[node], t.nodes_[node].out, 0);
    t.accumulate(v, pepsvqe::permute(cbar, inverse_perm(perm)));
  };
  return push({std::move(out)}, back);
}

Var Tape::reshape(Var v, std::vector<std::size_t> shape) {
  DenseTensor out = pepsvqe::reshape(value(v), std::move(shape));
  const std::vector<std::size_t> orig = value(v).shape();
  auto back = [v, orig](Tape& t, std::int32_t node) {
    DenseTensor cbar = slot_adjoint(t, t.adj_[node], t.nodes_[node].out, 0);
    t.accumulate(v, pepsvqe::reshape(std::move(cbar), orig));
  };
  return push({std::move(out)}, back);
}

Var Tape::add(Var a, Var b) {
  DenseTensor out = pepsvqe::add(value(a), value(b));
  auto back = [a, b](Tape& t, std::int32_t node) {
    DenseTensor cbar = slot_adjoint(t, t.adj_[node], t.nodes_[node].out, 0);
    t.accumulate(a, cbar);
    t.accumulate(b, std::move(cbar));
  };
  return push({std::move(out)}, back);
}

Var Tape::sub(Var a, Var b) {
  DenseTensor out = value(a);
  const DenseTensor& vb = value(b);
  if (out.shape() != vb.shape()) throw std::invalid_argument("sub: shape mismatch");
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= vb[i];
  auto back = [a, b](Tape& t, std::int32_t node) {
    DenseTensor cbar = slot_adjoint(t, t.adj_[node], t.nodes_[node].out, 0);
    t.accumulate(a, cbar);
    t.accumulate(b, pepsvqe::scale(std::move(cbar), -1.0));
  };
  return push({std::move(out)}, back);
}

Var Tape::scale(Var v, double factor) {
  DenseTensor out = pepsvqe::scale(value(v), factor);
  auto back = [v, factor](Tape& t, std::int32_t node) {
    DenseTensor cbar = slot_adjoint(t, t.adj_[node], t.nodes_[node].out, 0);
    t.accumulate(v, pepsvqe::scale(std::move(cbar), factor));
  };
  return push({std::move(out)}, back);
}

Var Tape::mul_elem(Var a, Var b) {
  const DenseTensor& va = value(a);
  const DenseTensor& vb = value(b);
  if (va.shape() != vb.shape()) throw std::invalid_argument("mul_elem: shape mismatch");
  DenseTensor out = va;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= vb[i];
  auto back = [a, b](Tape& t, std::int32_t node) {
    DenseTensor cbar = slot_adjoint(t, t.adj_[node], t.nodes_[node].out, 0);
    DenseTensor ga = cbar, gb = cbar;
    const DenseTensor& va = t.value(a);
    const DenseTensor& vb = t.value(b);
    for (std::size_t i = 0; i < ga.size(); ++i) {
      ga[i] *= vb[i];
      gb[i] *= va[i];
    }
    t.accumulate(a, std::move(ga));
    t.accumulate(b, std::move(gb));
  };
  return push({std::move(out)}, back);
}

Var Tape::scale_axis(Var v, Var weights, std::size_t axis) {
  const DenseTensor& w = value(weights);
  if (w.rank() != 1) throw std::invalid_argument("scale_axis: weights must be rank 1");
  DenseTensor out = pepsvqe::scale_axis(value(v), w.vec(), axis);
  auto back = [v, weights, axis](Tape& t, std::int32_t node) {
    DenseTensor cbar = slot_adjoint(t, t.adj_[node], t.nodes_[node].out, 0);
    const DenseTensor& w = t.value(weights);
    const DenseTensor& x = t.value(v);
    // d/dx: scale the adjoint the same way
    t.accumulate(v, pepsvqe::scale_axis(cbar, w.vec(), axis));
    // d/dw_j: sum over the slice
    const auto& shape = x.shape();
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
    const std::size_t d = shape[axis];
    DenseTensor gw({d});
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t j = 0; j < d; ++j) {
        const double* xp = x.data() + (o * d + j) * inner;
        const double* cp = cbar.data() + (o * d + j) * inner;
        double s = 0;
        for (std::size_t i = 0; i < inner; ++i) s += xp[i] * cp[i];
        gw[j] += s;
      }
    t.accumulate(weights, std::move(gw));
  };
  return push({std::move(out)}, back);
}

Var Tape::mul_scalar(Var v, Var s) {
  if (value(s).size() != 1) throw std::invalid_argument("mul_scalar: s must be scalar");
  const double sv = value(s)[0];
  DenseTensor out = pepsvqe::scale(value(v), sv);
  auto back = [v, s, sv](Tape& t, std::int32_t node) {
    DenseTensor cbar = slot_adjoint(t, t.adj_[node], t.nodes_[node].out, 0);
    const DenseTensor& x = t.value(v);
    double gs = 0;
    for (std::size_t i = 0; i < x.size(); ++i) gs += cbar[i] * x[i];
    t.accumulate(s, DenseTensor(t.value(s).shape(), {gs}));
    t.accumulate(v, pepsvqe::scale(std::move(cbar), sv));
  };
  return push({std::move(out)}, back);
}

Var Tape::div_scalar(Var v, Var s) {
  if (value(s).size() != 1) throw std::invalid_argument("div_scalar: s must be scalar");
  const double sv = value(s)[0];
  DenseTensor out = value(v);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] /= sv;
  auto back = [v, s, sv](Tape& t, std::int32_t node) {
    DenseTensor cbar = slot_adjoint(t, t.adj_[node], t.nodes_[node].out, 0);
    const DenseTensor& y = t.nodes_[node].out[0];  // y = x / s
    double gs = 0;
    for (std::size_t i = 0; i < y.size(); ++i) gs += cbar[i] * y[i];
    gs = -gs / sv;
    t.accumulate(s, DenseTensor(t.value(s).shape(), {gs}));
    for (std::size_t i = 0; i < cbar.size(); ++i) cbar[i] /= sv;
    t.accumulate(v, std::move(cbar));
  };
  return push({std::move(out)}, back);
}

Var Tape::div(Var a, Var b) {
  if (value(a).size() != 1 || value(b).size() != 1)
    throw std::invalid_argument("div: scalars only");
  return div_scalar(a, b);
}

Var Tape::norm2(Var v) {
  const DenseTensor& x = value(v);
  double s = 0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * x[i];
  const double n = std::sqrt(s);
  DenseTensor out({}, {n});
  auto back = [v, n](Tape& t, std::int32_t node) {
    DenseTensor cbar = slot_adjoint(t, t.adj_[node], t.nodes_[node].out, 0);
    const double c = cbar[0] / n;
    DenseTensor g = t.value(v);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= c;
    t.accumulate(v, std::move(g));
  };
  return push({std::move(out)}, back);
}

Var Tape::max_abs(Var v) {
  const DenseTensor& x = value(v);
  std::size_t arg = 0;
  double m = 0;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (std::fabs(x[i]) > m) {
      m = std::fabs(x[i]);
      arg = i;
    }
  const double sign = x[arg] < 0 ? -1.0 : 1.0;
  DenseTensor out({}, {m});
  auto back = [v, arg, sign](Tape& t, std::int32_t node) {
    DenseTensor cbar = slot_adjoint(t, t.adj_[node], t.nodes_[node].out, 0);
    DenseTensor g(t.value(v).shape());
    g[arg] = sign * cbar[0];
    t.accumulate(v, std::move(g));
  };
  return push({std::move(out)}, back);
}

Var Tape::sqrt_elem(Var v) {
  DenseTensor out = value(v);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::sqrt(out[i]);
  auto back = [v](Tape& t, std::int32_t node) {
    DenseTensor cbar = slot_adjoint(t, t.adj_[node], t.nodes_[node].out, 0);
    const DenseTensor& y = t.nodes_[node].out[0];
    DenseTensor g = cbar;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = y[i] > 0 ? g[i] / (2.0 * y[i]) : 0.0;
    t.accumulate(v, std::move(g));
  };
  return push({std::move(out)}, back);
}

Var Tape::recip_clip(Var v, double rel_cutoff) {
  const DenseTensor& x = value(v);
  if (x.rank() != 1 || x.size() == 0)
    throw std::invalid_argument("recip_clip: nonempty rank-1 expected");
  const double ref = x[0];
  DenseTensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i)
    out[i] = x[i] > rel_cutoff * ref ? 1.0 / x[i] : 0.0;
  auto back = [v](Tape& t, std::int32_t node) {
    DenseTensor cbar = slot_adjoint(t, t.adj_[node], t.nodes_[node].out, 0);
    const DenseTensor& y = t.nodes_[node].out[0];
    DenseTensor g = cbar;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= -y[i] * y[i];
    t.accumulate(v, std::move(g));
  };
  return push({std::move(out)}, back);
}

// ---------------------------------------------------------------------------
// SVD adjoint
// ---------------------------------------------------------------------------

namespace {

DenseTensor matmul_t(const DenseTensor& a, const DenseTensor& b) {
  return pepsvqe::contract(a, b, {1}, {0});
}

}  // namespace

Tape::Svd Tape::svd_truncate(Var v, std::size_t n_left_axes, std::size_t chi,
                             double cutoff) {
  TruncationResult tr = pepsvqe::svd_truncate(value(v), n_left_axes, chi, cutoff);
  const std::vector<std::size_t> in_shape = value(v).shape();

  std::size_t m = 1, n = 1;
  for (std::size_t i = 0; i < n_left_axes; ++i) m *= in_shape[i];
  for (std::size_t i = n_left_axes; i < in_shape.size(); ++i) n *= in_shape[i];
  const std::size_t k = tr.weights.size();

  DenseTensor wt({k}, tr.weights);
  const double discarded = tr.discarded_weight;

  auto back = [v, in_shape, m, n, k, n_left_axes](Tape& t, std::int32_t node) {
    const auto& outs = t.nodes_[node].out;
    DenseTensor ubar = slot_adjoint(t, t.adj_[node], outs, 0);
    DenseTensor sbar = slot_adjoint(t, t.adj_[node], outs, 1);
    DenseTensor rbar = slot_adjoint(t, t.adj_[node], outs, 2);

    DenseTensor u = pepsvqe::reshape(outs[0], {m, k});
    const DenseTensor& s = outs[1];
    DenseTensor r = pepsvqe::reshape(outs[2], {k, n});
    ubar = pepsvqe::reshape(std::move(ubar), {m, k});
    rbar = pepsvqe::reshape(std::move(rbar), {k, n});

    // gap-regularized F_ij = 1/(s_j^2 - s_i^2)
    DenseTensor f({k, k});
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j) {
        if (i == j) continue;
        const double d = s[j] * s[j] - s[i] * s[i];
        f[i * k + j] = d / (d * d + kSvdAdjointEps * kSvdAdjointEps);
      }

    DenseTensor utub = pepsvqe::contract(u, ubar, {0}, {0});   // U^T Ubar
    DenseTensor w = pepsvqe::contract(r, rbar, {1}, {1});      // V^T Vbar
    DenseTensor jm({k, k}), km({k, k});
    for (std::size_t i = 0; i < k * k; ++i) {
      jm[i] = f[i] * utub[i];
      km[i] = f[i] * w[i];
    }

    // mid = diag(sbar) + J S + J^T S + S K + S K^T
    DenseTensor mid({k, k});
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j) {
        double x = (jm[i * k + j] + jm[j * k + i]) * s[j];
        x += s[i] * (km[i * k + j] + km[j * k + i]);
        if (i == j) x += sbar[i];
        mid[i * k + j] = x;
      }

    DenseTensor abar = matmul_t(u, matmul_t(mid, r));

    // projector terms
    std::vector<double> sinv(k);
    for (std::size_t i = 0; i < k; ++i) sinv[i] = 1.0 / s[i];
    {
      DenseTensor up = std::move(ubar);  // Ubar - U (U^T Ubar)
      DenseTensor uu = matmul_t(u, utub);
      for (std::size_t i = 0; i < up.size(); ++i) up[i] -= uu[i];
      up = pepsvqe::scale_axis(std::move(up), sinv, 1);
      DenseTensor t3 = matmul_t(up, r);
      for (std::size_t i = 0; i < abar.size(); ++i) abar[i] += t3[i];
    }
    {
      DenseTensor rp = std::move(rbar);  // Rbar - W^T R
      DenseTensor wr = pepsvqe::contract(w, r, {0}, {0});
      for (std::size_t i = 0; i < rp.size(); ++i) rp[i] -= wr[i];
      rp = pepsvqe::scale_axis(std::move(rp), sinv, 0);
      DenseTensor t4 = matmul_t(u, rp);
      for (std::size_t i = 0; i < abar.size(); ++i) abar[i] += t4[i];
    }

    t.accumulate(v, pepsvqe::reshape(std::move(abar), in_shape));
  };

  std::vector<DenseTensor> outs;
  outs.push_back(std::move(tr.left));
  outs.push_back(std::move(wt));
  outs.push_back(std::move(tr.right));
  Var first = push(std::move(outs), back);

  Svd res;
  res.left = first;
  res.weights = {first.node, 1};
  res.right = {first.node, 2};
  res.discarded_weight = discarded;
  return res;
}

Var Tape::so4_gate(Var angles) {
  const DenseTensor& a = value(angles);
  if (a.size() != 6) throw std::invalid_argument("so4_gate: six angles expected");
  std::array<double, 6> arr;
  for (std::size_t i = 0; i < 6; ++i) arr[i] = a[i];
  Mat4 mat = so4_matrix(arr);
  DenseTensor out({4, 4}, {mat.begin(), mat.end()});
  auto back = [angles, arr](Tape& t, std::int32_t node) {
    DenseTensor mbar = slot_adjoint(t, t.adj_[node], t.nodes_[node].out, 0);
    const auto derivs = so4_derivatives(arr);
    DenseTensor g({6});
    for (std::size_t kk = 0; kk < 6; ++kk) {
      double s = 0;
      for (std::size_t i = 0; i < 16; ++i) s += mbar[i] * derivs[kk][i];
      g[kk] = s;
    }
    t.accumulate(angles, std::move(g));
  };
  return push({std::move(out)}, back);
}

}  // namespace pepsvqe::ad
