#include "pepsvqe/peps.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace pepsvqe {

namespace {

constexpr double kZ[4] = {1, 0, 0, -1};
constexpr double kX[4] = {0, 1, 1, 0};

DenseTensor op2(const double m[4]) {
  return DenseTensor({2, 2}, {m[0], m[1], m[2], m[3]});
}

std::vector<double> pinv_weights(const std::vector<double>& w, double cutoff,
                                 std::size_t* underflows) {
  const double wmax = w.empty() ? 0.0 : w[0];
  std::vector<double> inv(w.size(), 0.0);
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (w[i] > cutoff * wmax)
      inv[i] = 1.0 / w[i];
    else if (underflows)
      ++*underflows;
  }
  return inv;
}

// Renormalizes a tensor to unit max-abs and returns log of the factor.
double renormalize(DenseTensor& t) {
  const double m = t.max_abs();
  if (!(m > 0) || !std::isfinite(m))
    throw std::runtime_error("peps: site tensor degenerate or non-finite");
  for (std::size_t i = 0; i < t.size(); ++i) t[i] /= m;
  return std::log(m);
}

}  // namespace

std::size_t PepsState::max_bond_dim() const {
  std::size_t m = 0;
  for (const auto& w : bond_weights) m = std::max(m, w.size());
  return m;
}

std::size_t PepsState::virtual_axis(std::size_t site, std::size_t edge) const {
  const auto& inc = lattice->site_edges[site];
  for (std::size_t k = 0; k < inc.size(); ++k)
    if (inc[k] == edge) return 1 + k;
  throw std::invalid_argument("virtual_axis: edge not incident to site");
}

PepsState init_product_state(const Lattice& lattice, const std::array<double, 2>& local) {
  const double nrm = std::sqrt(local[0] * local[0] + local[1] * local[1]);
  if (std::fabs(nrm - 1.0) > 1e-9)
    throw std::invalid_argument("init_product_state: local vector must be normalized");
  PepsState st;
  st.lattice = &lattice;
  st.site_tensors.reserve(lattice.n_sites);
  for (std::size_t s = 0; s < lattice.n_sites; ++s) {
    std::vector<std::size_t> shape{2};
    shape.insert(shape.end(), lattice.site_edges[s].size(), 1);
    DenseTensor t(shape);
    t[0] = local[0];
    t[1] = local[1];
    st.site_tensors.push_back(std::move(t));
  }
  st.bond_weights.assign(lattice.edges.size(), {1.0});
  return st;
}

double apply_gate_su(PepsState& state, std::size_t edge, const Mat4& gate,
                     const SuOptions& opt, EvolutionLog* log) {
  const Lattice& lat = *state.lattice;
  if (edge >= lat.edges.size()) throw std::invalid_argument("apply_gate_su: bad edge");
  const std::size_t si = lat.edges[edge].first, sj = lat.edges[edge].second;
  const auto& inc_i = lat.site_edges[si];
  const auto& inc_j = lat.site_edges[sj];
  const std::size_t deg_i = inc_i.size(), deg_j = inc_j.size();
  const std::size_t n_ext_i = deg_i - 1, n_ext_j = deg_j - 1;

  std::size_t pos_i = state.virtual_axis(si, edge) - 1;
  std::size_t pos_j = state.virtual_axis(sj, edge) - 1;

  // absorb environment weights; the shared bond weight goes in on side i
  DenseTensor a = state.site_tensors[si];
  for (std::size_t k = 0; k < deg_i; ++k)
    a = scale_axis(std::move(a), state.bond_weights[inc_i[k]], 1 + k);
  DenseTensor b = state.site_tensors[sj];
  for (std::size_t k = 0; k < deg_j; ++k)
    if (k != pos_j) b = scale_axis(std::move(b), state.bond_weights[inc_j[k]], 1 + k);

  // theta: [s_i, ext_i..., s_j, ext_j...]
  DenseTensor theta = contract(a, b, {1 + pos_i}, {1 + pos_j});

  DenseTensor g4 = reshape(DenseTensor({4, 4}, {gate.begin(), gate.end()}), {2, 2, 2, 2});
  // [s_i', s_j', ext_i..., ext_j...]
  DenseTensor theta2 = contract(g4, theta, {2, 3}, {0, 1 + n_ext_i});

  std::vector<std::size_t> perm;
  perm.push_back(0);
  for (std::size_t k = 0; k < n_ext_i; ++k) perm.push_back(2 + k);
  perm.push_back(1);
  for (std::size_t k = 0; k < n_ext_j; ++k) perm.push_back(2 + n_ext_i + k);
  theta2 = permute(theta2, perm);

  TruncationResult tr = svd_truncate(theta2, 1 + n_ext_i, opt.chi, opt.cutoff);

  double s_norm = 0;
  for (double w : tr.weights) s_norm += w * w;
  s_norm = std::sqrt(s_norm);
  std::vector<double> lam(tr.weights.size());
  for (std::size_t k = 0; k < lam.size(); ++k) lam[k] = tr.weights[k] / s_norm;
  state.log_norm += std::log(s_norm);
  state.bond_weights[edge] = lam;

  std::size_t underflows = 0;
  // left factor -> new site i tensor: [s_i, ext_i..., kappa]
  DenseTensor ti = std::move(tr.left);
  for (std::size_t k = 0; k < n_ext_i; ++k) {
    const std::size_t e = inc_i[k < pos_i ? k : k + 1];
    ti = scale_axis(std::move(ti), pinv_weights(state.bond_weights[e], opt.cutoff, &underflows),
                    1 + k);
  }
  {
    std::vector<std::size_t> p(1 + deg_i);
    p[0] = 0;
    for (std::size_t k = 0; k < deg_i; ++k)
      p[1 + k] = (k == pos_i) ? (1 + n_ext_i) : (1 + (k < pos_i ? k : k - 1));
    ti = permute(ti, p);
  }

  // right factor -> new site j tensor: [kappa, s_j, ext_j...]
  DenseTensor tj = std::move(tr.right);
  for (std::size_t k = 0; k < n_ext_j; ++k) {
    const std::size_t e = inc_j[k < pos_j ? k : k + 1];
    tj = scale_axis(std::move(tj), pinv_weights(state.bond_weights[e], opt.cutoff, &underflows),
                    2 + k);
  }
  {
    std::vector<std::size_t> p(1 + deg_j);
    p[0] = 1;
    for (std::size_t k = 0; k < deg_j; ++k)
      p[1 + k] = (k == pos_j) ? 0 : (2 + (k < pos_j ? k : k - 1));
    tj = permute(tj, p);
  }

  state.log_norm += renormalize(ti);
  state.log_norm += renormalize(tj);
  state.site_tensors[si] = std::move(ti);
  state.site_tensors[sj] = std::move(tj);

  if (log) {
    log->gate_discarded.push_back(tr.discarded_weight);
    log->cumulative_discarded += tr.discarded_weight;
    log->pinv_underflows += underflows;
  }
  return tr.discarded_weight;
}

void su_regauge(PepsState& state, const SuOptions& opt, EvolutionLog* log) {
  static const Mat4 kIdentity4 = {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};
  const auto& groups = state.lattice->brickwall_groups;
  for (std::size_t g = groups.size(); g-- > 0;)
    for (std::size_t e : groups[g]) apply_gate_su(state, e, kIdentity4, opt, log);
}

double expectation_su(const PepsState& state, const PauliTerm& term) {
  const Lattice& lat = *state.lattice;

  if (term.kind == PauliTerm::Kind::ZZ) {
    const std::size_t e = term.edge;
    const std::size_t si = lat.edges[e].first, sj = lat.edges[e].second;
    const std::size_t ax_i = state.virtual_axis(si, e);
    const std::size_t ax_j = state.virtual_axis(sj, e);

    DenseTensor a = state.site_tensors[si];
    for (std::size_t k = 0; k < lat.site_edges[si].size(); ++k)
      a = scale_axis(std::move(a), state.bond_weights[lat.site_edges[si][k]], 1 + k);
    DenseTensor b = state.site_tensors[sj];
    for (std::size_t k = 0; k < lat.site_edges[sj].size(); ++k)
      if (1 + k != ax_j)
        b = scale_axis(std::move(b), state.bond_weights[lat.site_edges[sj][k]], 1 + k);

    // ket cluster [s_i, ext_i..., s_j, ext_j...]
    DenseTensor ket = contract(a, b, {ax_i}, {ax_j});
    DenseTensor zk = contract(op2(kZ), ket, {1}, {0});  // Z on s_i, now axis 0
    const std::size_t sj_axis = a.rank() - 1;           // position of s_j in cluster
    DenseTensor zzk = contract(op2(kZ), zk, {1}, {sj_axis});
    // zzk axes: [s_j, s_i, ext_i..., ext_j...]; realign to cluster order
    std::vector<std::size_t> perm(ket.rank());
    perm[0] = 1;
    for (std::size_t k = 1; k < sj_axis; ++k) perm[k] = 1 + k;
    perm[sj_axis] = 0;
    for (std::size_t k = sj_axis + 1; k < ket.rank(); ++k) perm[k] = k;
    zzk = permute(zzk, perm);

    std::vector<std::size_t> all(ket.rank());
    for (std::size_t k = 0; k < all.size(); ++k) all[k] = k;
    const double num = contract(zzk, ket, all, all)[0];
    const double den = contract(ket, ket, all, all)[0];
    if (den == 0) throw std::runtime_error("expectation_su: zero norm");
    return num / den;
  }

  const std::size_t s = term.site;
  DenseTensor a = state.site_tensors[s];
  for (std::size_t k = 0; k < lat.site_edges[s].size(); ++k)
    a = scale_axis(std::move(a), state.bond_weights[lat.site_edges[s][k]], 1 + k);
  DenseTensor oa = contract(op2(term.kind == PauliTerm::Kind::X ? kX : kZ), a, {1}, {0});
  std::vector<std::size_t> all(a.rank());
  for (std::size_t k = 0; k < all.size(); ++k) all[k] = k;
  const double num = contract(oa, a, all, all)[0];
  const double den = contract(a, a, all, all)[0];
  if (den == 0) throw std::runtime_error("expectation_su: zero norm");
  return num / den;
}

// ---------------------------------------------------------------------------
// Boundary-MPS contraction on the square grid.
//
// Per-site tensors absorb sqrt(lambda) on every bond and are brought to the
// uniform direction order [phys, up, left, right, down] (size-1 axes where
// the grid has no neighbor). The bra-ket double tensor merges leg pairs to
// [U, L, R, D]; the boundary is carried as an MPS over columns and truncated
// to chi_e after each row absorption with a zip-up sweep plus one cleanup
// sweep.
// ---------------------------------------------------------------------------

namespace {

struct Mps {
  std::vector<DenseTensor> t;  // [bond_left, phys, bond_right]
  double log_scale = 0;
};

struct GridGeom {
  std::size_t rows, cols;
  std::size_t site(std::size_t r, std::size_t c) const { return r * cols + c; }
};

// site tensor with sqrt(lambda) absorbed, axes [phys, up, left, right, down]
DenseTensor absorbed_site(const PepsState& state, const GridGeom& g, std::size_t r,
                          std::size_t c) {
  const Lattice& lat = *state.lattice;
  const std::size_t s = g.site(r, c);
  DenseTensor t = state.site_tensors[s];
  const auto& inc = lat.site_edges[s];
  for (std::size_t k = 0; k < inc.size(); ++k) {
    std::vector<double> sq(state.bond_weights[inc[k]].size());
    for (std::size_t i = 0; i < sq.size(); ++i)
      sq[i] = std::sqrt(state.bond_weights[inc[k]][i]);
    t = scale_axis(std::move(t), sq, 1 + k);
  }

  // direction of each incident edge
  std::vector<std::size_t> dir_axis(4, 0);  // up, left, right, down -> axis or 0
  for (std::size_t k = 0; k < inc.size(); ++k) {
    const auto& e = lat.edges[inc[k]];
    const std::size_t other = e.first == s ? e.second : e.first;
    std::size_t d;
    if (other + g.cols == s) d = 0;       // up
    else if (other + 1 == s) d = 1;       // left
    else if (other == s + 1) d = 2;       // right
    else if (other == s + g.cols) d = 3;  // down
    else throw std::logic_error("absorbed_site: non-grid edge");
    dir_axis[d] = 1 + k;
  }

  std::vector<std::size_t> perm{0};
  std::vector<std::size_t> shape5{2, 1, 1, 1, 1};
  for (std::size_t d = 0; d < 4; ++d)
    if (dir_axis[d]) {
      perm.push_back(dir_axis[d]);
      shape5[1 + d] = t.shape()[dir_axis[d]];
    }
  return reshape(permute(t, perm), shape5);
}

// double tensor [U2, L2, R2, D2]; op (2x2) applied on the ket side if given
DenseTensor double_tensor(const DenseTensor& a5, const DenseTensor* op) {
  DenseTensor ket = a5;
  if (op) ket = contract(*op, a5, {1}, {0});
  // [u,l,r,d, u',l',r',d']
  DenseTensor d = contract(ket, a5, {0}, {0});
  d = permute(d, {0, 4, 1, 5, 2, 6, 3, 7});
  const auto& s = d.shape();
  return reshape(std::move(d), {s[0] * s[1], s[2] * s[3], s[4] * s[5], s[6] * s[7]});
}

void mps_normalize(Mps& m) {
  for (auto& t : m.t) {
    const double x = t.max_abs();
    if (!(x > 0)) throw std::runtime_error("boundary: zero boundary tensor");
    for (std::size_t i = 0; i < t.size(); ++i) t[i] /= x;
    m.log_scale += std::log(x);
  }
}

// one compression pass: zip L->R at cap, then cleanup R->L at cap
void mps_compress(Mps& m, std::size_t chi_e, double cutoff) {
  const std::size_t n = m.t.size();
  for (std::size_t c = 0; c + 1 < n; ++c) {
    TruncationResult tr = svd_truncate(m.t[c], 2, chi_e, cutoff);
    m.t[c] = std::move(tr.left);  // [bl, p, k]
    DenseTensor carry = scale_axis(std::move(tr.right), tr.weights, 0);  // [k, br]
    m.t[c + 1] = contract(carry, m.t[c + 1], {1}, {0});
  }
  for (std::size_t c = n; c-- > 1;) {
    TruncationResult tr = svd_truncate(m.t[c], 1, chi_e, cutoff);
    m.t[c] = std::move(tr.right);  // [k, p, br]
    DenseTensor carry = scale_axis(std::move(tr.left), tr.weights, 1);  // [bl, k]
    m.t[c - 1] = contract(m.t[c - 1], carry, {2}, {0});
  }
  mps_normalize(m);
}

// boundary MPS for row `r` alone; phys legs face `down` when from_top
Mps row_mps(const std::vector<DenseTensor>& dbl, const GridGeom& g, std::size_t r,
            bool from_top) {
  Mps m;
  for (std::size_t c = 0; c < g.cols; ++c) {
    const DenseTensor& d = dbl[g.site(r, c)];
    // [U, L, R, D] -> [L, D, R] (top view) or [L, U, R] (bottom view)
    DenseTensor t = from_top ? permute(d, {1, 3, 2, 0}) : permute(d, {1, 0, 2, 3});
    const auto& s = t.shape();
    m.t.push_back(reshape(std::move(t), {s[0], s[1], s[2]}));
  }
  mps_normalize(m);
  return m;
}

Mps absorb_row(const Mps& b, const std::vector<DenseTensor>& dbl, const GridGeom& g,
               std::size_t r, bool from_top, std::size_t chi_e, double cutoff) {
  Mps out;
  out.log_scale = b.log_scale;
  for (std::size_t c = 0; c < g.cols; ++c) {
    const DenseTensor& d = dbl[g.site(r, c)];
    // contract boundary phys with the row's facing leg
    DenseTensor t = contract(b.t[c], d, {1}, {from_top ? 0u : 3u});
    // axes: [bl, br, (L, R, other)] with `other` = D (top) or U (bottom)
    // after removing the contracted leg, d axes order is:
    //   from top: [L, R, D] at positions 2,3,4 -> new phys = D
    //   from bottom: [U, L, R] at 2,3,4 -> new phys = U
    DenseTensor t2 = from_top ? permute(t, {0, 2, 4, 1, 3}) : permute(t, {0, 3, 2, 1, 4});
    const auto& s = t2.shape();
    out.t.push_back(reshape(std::move(t2), {s[0] * s[1], s[2], s[3] * s[4]}));
  }
  mps_compress(out, chi_e, cutoff);
  return out;
}

struct ScaledScalar {
  double mantissa = 0;
  double log_scale = 0;
  double value_ratio(const ScaledScalar& den) const {
    return mantissa / den.mantissa * std::exp(log_scale - den.log_scale);
  }
};

ScaledScalar overlap(const Mps& top, const Mps& bot) {
  ScaledScalar r;
  r.log_scale = top.log_scale + bot.log_scale;
  DenseTensor e({1, 1}, {1.0});
  for (std::size_t c = 0; c < top.t.size(); ++c) {
    DenseTensor e2 = contract(e, top.t[c], {0}, {0});    // [b, p, a']
    e = contract(e2, bot.t[c], {0, 1}, {0, 1});          // [a', b']
    const double x = e.max_abs();
    if (!(x > 0)) return {0.0, r.log_scale};
    for (std::size_t i = 0; i < e.size(); ++i) e[i] /= x;
    r.log_scale += std::log(x);
  }
  r.mantissa = e[0];
  return r;
}

ScaledScalar sandwich(const Mps& top, const std::vector<const DenseTensor*>& row1,
                      const std::vector<const DenseTensor*>* row2, const Mps& bot) {
  ScaledScalar r;
  r.log_scale = top.log_scale + bot.log_scale;
  const std::size_t ncols = top.t.size();
  std::vector<std::size_t> eshape{1, 1, 1};
  if (row2) eshape.push_back(1);
  DenseTensor e(eshape);
  e[0] = 1.0;
  for (std::size_t c = 0; c < ncols; ++c) {
    // E axes: [a(top), h1, (h2), b(bot)]
    DenseTensor t = contract(e, top.t[c], {0}, {0});
    // t: [h1, (h2), b, p_top, a']
    if (!row2) {
      // row1: [U, L, R, D]; contract U with p_top, L with h1
      DenseTensor u = contract(t, *row1[c], {2, 0}, {0, 1});  // [b, a', R, D]
      e = contract(u, bot.t[c], {0, 3}, {0, 1});              // [a', R, b']
    } else {
      DenseTensor u = contract(t, *row1[c], {3, 0}, {0, 1});   // [h2, b, a', R1, D1]
      DenseTensor v = contract(u, *(*row2)[c], {0, 4}, {1, 0}); // [b, a', R1, R2, D2]
      e = contract(v, bot.t[c], {0, 4}, {0, 1});                // [a', R1, R2, b']
    }
    const double x = e.max_abs();
    if (!(x > 0)) return {0.0, r.log_scale};
    for (std::size_t i = 0; i < e.size(); ++i) e[i] /= x;
    r.log_scale += std::log(x);
  }
  r.mantissa = e[0];
  return r;
}

}  // namespace

struct BoundaryEnvironment::Impl {
  GridGeom geom;
  std::size_t chi_e;
  double cutoff;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
  std::vector<DenseTensor> site5;  // absorbed site tensors, 5-axis form
  std::vector<DenseTensor> dbl;    // plain double tensors
  std::vector<Mps> tops;           // tops[r]: rows [0, r) ; r = 0..rows
  std::vector<Mps> bots;           // bots[r]: rows [r, rows); r = 0..rows
  ScaledScalar den;

  Mps trivial() const {
    Mps m;
    for (std::size_t c = 0; c < geom.cols; ++c) m.t.push_back(DenseTensor({1, 1, 1}, {1.0}));
    return m;
  }
};

BoundaryEnvironment::BoundaryEnvironment(const PepsState& state, std::size_t chi_e,
                                         double cutoff)
    : impl_(std::make_shared<Impl>()) {
  const Lattice& lat = *state.lattice;
  if (lat.kind != LatticeKind::SquareGrid)
    throw std::invalid_argument("boundary MPS requires a square grid lattice");
  if (chi_e < 1) throw std::invalid_argument("boundary MPS: chi_e >= 1");
  Impl& im = *impl_;
  im.geom = {lat.rows, lat.cols};
  im.chi_e = chi_e;
  im.cutoff = cutoff;
  im.edges = lat.edges;
  im.site5.resize(lat.n_sites);
  im.dbl.resize(lat.n_sites);
  for (std::size_t r = 0; r < lat.rows; ++r)
    for (std::size_t c = 0; c < lat.cols; ++c) {
      im.site5[im.geom.site(r, c)] = absorbed_site(state, im.geom, r, c);
      im.dbl[im.geom.site(r, c)] = double_tensor(im.site5[im.geom.site(r, c)], nullptr);
    }

  const std::size_t rows = lat.rows;
  im.tops.resize(rows + 1);
  im.bots.resize(rows + 1);
  im.tops[0] = im.trivial();
  im.tops[1] = row_mps(im.dbl, im.geom, 0, true);
  mps_compress(im.tops[1], chi_e, cutoff);
  for (std::size_t r = 1; r < rows; ++r)
    im.tops[r + 1] = absorb_row(im.tops[r], im.dbl, im.geom, r, true, chi_e, cutoff);

  im.bots[rows] = im.trivial();
  im.bots[rows - 1] = row_mps(im.dbl, im.geom, rows - 1, false);
  mps_compress(im.bots[rows - 1], chi_e, cutoff);
  for (std::size_t r = rows - 1; r-- > 0;)
    im.bots[r] = absorb_row(im.bots[r + 1], im.dbl, im.geom, r, false, chi_e, cutoff);

  im.den = overlap(im.tops[1], im.bots[1]);
  if (im.den.mantissa == 0) throw std::runtime_error("boundary MPS: zero norm");
}

double BoundaryEnvironment::norm_log() const {
  return std::log(std::fabs(impl_->den.mantissa)) + impl_->den.log_scale;
}

double BoundaryEnvironment::expectation(const PauliTerm& term) const {
  const Impl& im = *impl_;
  const std::size_t cols = im.geom.cols;

  std::vector<DenseTensor> storage;
  storage.reserve(2);
  auto plain_row = [&](std::size_t r) {
    std::vector<const DenseTensor*> row(cols);
    for (std::size_t c = 0; c < cols; ++c) row[c] = &im.dbl[im.geom.site(r, c)];
    return row;
  };
  auto put_op = [&](std::vector<const DenseTensor*>& row, std::size_t r, std::size_t c,
                    const double op[4]) {
    DenseTensor o = op2(op);
    storage.push_back(double_tensor(im.site5[im.geom.site(r, c)], &o));
    row[c] = &storage.back();
  };

  if (term.kind != PauliTerm::Kind::ZZ) {
    const std::size_t r = term.site / cols, c = term.site % cols;
    auto row = plain_row(r);
    put_op(row, r, c, term.kind == PauliTerm::Kind::X ? kX : kZ);
    return sandwich(im.tops[r], row, nullptr, im.bots[r + 1]).value_ratio(im.den);
  }

  const auto& edge = im.edges[term.edge];
  const std::size_t ra = edge.first / cols, ca = edge.first % cols;
  const std::size_t rb = edge.second / cols, cb = edge.second % cols;
  if (ra == rb) {
    auto row = plain_row(ra);
    put_op(row, ra, ca, kZ);
    put_op(row, ra, cb, kZ);
    return sandwich(im.tops[ra], row, nullptr, im.bots[ra + 1]).value_ratio(im.den);
  }
  auto row1 = plain_row(ra);
  put_op(row1, ra, ca, kZ);
  auto row2 = plain_row(rb);
  put_op(row2, rb, cb, kZ);
  return sandwich(im.tops[ra], row1, &row2, im.bots[rb + 1]).value_ratio(im.den);
}

// ---------------------------------------------------------------------------

double expectation_boundary_mps(const PepsState& state, const PauliTerm& term,
                                std::size_t chi_e, double cutoff) {
  BoundaryEnvironment env(state, chi_e, cutoff);
  return env.expectation(term);
}

std::pair<PepsState, EvolutionLog> apply_circuit(const PepsState& state0,
                                                 const CircuitSpec& spec,
                                                 const ParamVector& theta,
                                                 const SuOptions& opt, bool regauge) {
  if (theta.size() != spec.n_params())
    throw std::invalid_argument("apply_circuit: parameter length mismatch");
  PepsState state = state0;
  EvolutionLog log;
  const std::size_t per_layer = spec.slots_per_layer();
  auto t0 = std::chrono::steady_clock::now();
  for (std::size_t s = 0; s < spec.gate_slots.size(); ++s) {
    apply_gate_su(state, spec.gate_slots[s].edge, so4_matrix(slot_angles(theta, s)), opt,
                  &log);
    if ((s + 1) % per_layer == 0) {
      if (regauge && opt.chi > 1) su_regauge(state, opt, &log);
      auto t1 = std::chrono::steady_clock::now();
      log.layer_seconds.push_back(std::chrono::duration<double>(t1 - t0).count());
      t0 = t1;
    }
  }
  return {std::move(state), std::move(log)};
}

// ---------------------------------------------------------------------------
// Imaginary time evolution
// ---------------------------------------------------------------------------

namespace {

void apply_field_half(PepsState& state, double a) {
  // exp(a X) = [[cosh a, sinh a], [sinh a, cosh a]]
  const double ch = std::cosh(a), sh = std::sinh(a);
  DenseTensor f({2, 2}, {ch, sh, sh, ch});
  for (auto& t : state.site_tensors) {
    t = contract(f, t, {1}, {0});
    state.log_norm += renormalize(t);
  }
}

double ite_energy(const PepsState& state, double g, const IteOptions& opt);

}  // namespace

IteResult imaginary_time_evolve(const Lattice& lattice, double g, const IteOptions& opt) {
  if (opt.energy_tol <= 0) throw std::invalid_argument("ite: energy_tol > 0");
  for (std::size_t i = 1; i < opt.dtau_schedule.size(); ++i)
    if (!(opt.dtau_schedule[i] < opt.dtau_schedule[i - 1]) || opt.dtau_schedule[i] <= 0)
      throw std::invalid_argument("ite: dtau schedule must be positive decreasing");

  IteResult res;
  res.state = init_product_state(lattice, opt.initial);
  SuOptions su{opt.chi, opt.cutoff};

  double energy = ite_energy(res.state, g, opt);
  bool all_converged = true;
  for (double dtau : opt.dtau_schedule) {
    const double ed = std::exp(dtau), emd = std::exp(-dtau);
    const Mat4 zz_gate = {ed, 0, 0,   0, 0, emd, 0, 0,
                          0,  0, emd, 0, 0, 0,   0, ed};
    bool stage_converged = false;
    for (std::size_t sweep = 0; sweep < opt.max_sweeps_per_stage; ++sweep) {
      apply_field_half(res.state, 0.5 * dtau * g);
      for (const auto& group : lattice.brickwall_groups)
        for (std::size_t e : group) apply_gate_su(res.state, e, zz_gate, su);
      apply_field_half(res.state, 0.5 * dtau * g);
      ++res.sweeps;

      const double next = ite_energy(res.state, g, opt);
      const double delta = std::fabs(next - energy);
      energy = next;
      if (delta < opt.energy_tol) {
        stage_converged = true;
        break;
      }
    }
    res.stage_energies.push_back(energy);
    all_converged = all_converged && stage_converged;
  }
  res.energy = energy;
  res.converged = all_converged;
  return res;
}

namespace {

double ite_energy(const PepsState& state, double g, const IteOptions& opt) {
  const Lattice& lat = *state.lattice;
  double e = 0;
  if (opt.method == EnergyMethod::BoundaryMPS) {
    BoundaryEnvironment env(state, opt.chi_e, opt.cutoff);
    for (std::size_t ed = 0; ed < lat.edges.size(); ++ed)
      e -= env.expectation(PauliTerm::zz(ed));
    for (std::size_t s = 0; s < lat.n_sites; ++s)
      e -= g * env.expectation(PauliTerm::x(s));
  } else {
    for (std::size_t ed = 0; ed < lat.edges.size(); ++ed)
      e -= expectation_su(state, PauliTerm::zz(ed));
    for (std::size_t s = 0; s < lat.n_sites; ++s)
      e -= g * expectation_su(state, PauliTerm::x(s));
  }
  return e;
}

}  // namespace

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

void save_peps(const PepsState& state, const std::string& path_bin,
               const std::string& path_json) {
  std::ofstream f(path_bin, std::ios::binary);
  if (!f) throw std::runtime_error("save_peps: cannot open " + path_bin);
  const char magic[8] = {'P', 'V', 'Q', 'E', 'P', 'E', 'P', '1'};
  f.write(magic, 8);
  auto write_u64 = [&f](std::uint64_t v) { f.write(reinterpret_cast<const char*>(&v), 8); };
  write_u64(state.site_tensors.size());
  for (const auto& t : state.site_tensors) {
    write_u64(t.rank());
    for (std::size_t d : t.shape()) write_u64(d);
    f.write(reinterpret_cast<const char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  write_u64(state.bond_weights.size());
  for (const auto& w : state.bond_weights) {
    write_u64(w.size());
    f.write(reinterpret_cast<const char*>(w.data()),
            static_cast<std::streamsize>(w.size() * sizeof(double)));
  }
  f.write(reinterpret_cast<const char*>(&state.log_norm), sizeof(double));
  if (!f) throw std::runtime_error("save_peps: write failed");

  if (!path_json.empty()) {
    nlohmann::json j;
    j["lattice"] = state.lattice->id();
    j["chi"] = state.max_bond_dim();
    j["log_norm"] = state.log_norm;
    std::ofstream js(path_json);
    js << j.dump(2) << "\n";
  }
}

PepsState load_peps(const Lattice& lattice, const std::string& path_bin) {
  std::ifstream f(path_bin, std::ios::binary);
  if (!f) throw std::runtime_error("load_peps: cannot open " + path_bin);
  char magic[8];
  f.read(magic, 8);
  if (std::memcmp(magic, "PVQEPEP1", 8) != 0)
    throw std::runtime_error("load_peps: bad magic");
  auto read_u64 = [&f]() {
    std::uint64_t v;
    f.read(reinterpret_cast<char*>(&v), 8);
    return v;
  };
  PepsState st;
  st.lattice = &lattice;
  const std::uint64_t n_sites = read_u64();
  if (n_sites != lattice.n_sites) throw std::runtime_error("load_peps: lattice mismatch");
  st.site_tensors.reserve(n_sites);
  for (std::uint64_t i = 0; i < n_sites; ++i) {
    const std::uint64_t rank = read_u64();
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = read_u64();
    DenseTensor t(shape);
    f.read(reinterpret_cast<char*>(t.data()),
           static_cast<std::streamsize>(t.size() * sizeof(double)));
    st.site_tensors.push_back(std::move(t));
  }
  const std::uint64_t n_edges = read_u64();
  if (n_edges != lattice.edges.size()) throw std::runtime_error("load_peps: edge mismatch");
  st.bond_weights.resize(n_edges);
  for (auto& w : st.bond_weights) {
    w.resize(read_u64());
    f.read(reinterpret_cast<char*>(w.data()),
           static_cast<std::streamsize>(w.size() * sizeof(double)));
  }
  f.read(reinterpret_cast<char*>(&st.log_norm), sizeof(double));
  if (!f) throw std::runtime_error("load_peps: truncated file");
  return st;
}

std::vector<double> peps_to_statevector(const PepsState& state) {
  const Lattice& lat = *state.lattice;
  if (lat.n_sites > 20) throw std::invalid_argument("peps_to_statevector: N <= 20");

  // Absorb each bond weight into its lower-endpoint tensor once.
  std::vector<DenseTensor> site = state.site_tensors;
  for (std::size_t e = 0; e < lat.edges.size(); ++e) {
    const std::size_t s = lat.edges[e].first;
    site[s] = scale_axis(std::move(site[s]), state.bond_weights[e],
                         state.virtual_axis(s, e));
  }

  // Frontier contraction over sites in index order. Labels: phys sites and
  // open edges.
  struct Label {
    bool phys;
    std::size_t id;
  };
  DenseTensor acc = DenseTensor::scalar(1.0);
  std::vector<Label> labels;

  for (std::size_t s = 0; s < lat.n_sites; ++s) {
    std::vector<std::size_t> acc_axes, site_axes;
    for (std::size_t k = 0; k < lat.site_edges[s].size(); ++k) {
      const std::size_t e = lat.site_edges[s][k];
      for (std::size_t a = 0; a < labels.size(); ++a)
        if (!labels[a].phys && labels[a].id == e) {
          acc_axes.push_back(a);
          site_axes.push_back(1 + k);
        }
    }
    DenseTensor next = contract(acc, site[s], acc_axes, site_axes);

    std::vector<Label> next_labels;
    for (std::size_t a = 0; a < labels.size(); ++a)
      if (std::find(acc_axes.begin(), acc_axes.end(), a) == acc_axes.end())
        next_labels.push_back(labels[a]);
    next_labels.push_back({true, s});
    for (std::size_t k = 0; k < lat.site_edges[s].size(); ++k)
      if (std::find(site_axes.begin(), site_axes.end(), 1 + k) == site_axes.end())
        next_labels.push_back({false, lat.site_edges[s][k]});
    acc = std::move(next);
    labels = std::move(next_labels);
  }

  // All remaining labels are physical; order little-endian (site 0 = lowest bit)
  std::vector<std::size_t> perm(labels.size());
  for (std::size_t a = 0; a < labels.size(); ++a) {
    if (!labels[a].phys) throw std::logic_error("peps_to_statevector: dangling bond");
    perm[lat.n_sites - 1 - labels[a].id] = a;
  }
  acc = permute(acc, perm);
  return acc.vec();
}

}  // namespace pepsvqe
