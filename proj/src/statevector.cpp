#include "pepsvqe/statevector.hpp"

#include <lapacke.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pepsvqe {

StateVector StateVector::product_state(std::size_t n, const std::array<double, 2>& local) {
  if (n > kStatevectorCap) throw std::invalid_argument("statevector: qubit count over cap");
  const double nrm = std::sqrt(local[0] * local[0] + local[1] * local[1]);
  if (std::fabs(nrm - 1.0) > 1e-9)
    throw std::invalid_argument("statevector: local state must be normalized");
  StateVector psi;
  psi.n_qubits = n;
  psi.amps.assign(std::size_t{1} << n, 0.0);
  // product over little-endian bits
  for (std::size_t x = 0; x < psi.amps.size(); ++x) {
    double a = 1.0;
    for (std::size_t q = 0; q < n; ++q) a *= local[(x >> q) & 1];
    psi.amps[x] = a;
  }
  return psi;
}

double StateVector::norm() const {
  double s = 0;
  for (double a : amps) s += a * a;
  return std::sqrt(s);
}

void StateVector::apply_two_qubit(const Mat4& gate, std::size_t qa, std::size_t qb) {
  const std::size_t ma = std::size_t{1} << qa;
  const std::size_t mb = std::size_t{1} << qb;
  const std::size_t n = amps.size();
  // basis index within the gate: 2*s_a + s_b (qa is the first factor)
  for (std::size_t x = 0; x < n; ++x) {
    if (x & (ma | mb)) continue;  // enumerate states with both bits clear
    const std::size_t i00 = x, i01 = x | mb, i10 = x | ma, i11 = x | ma | mb;
    const double a00 = amps[i00], a01 = amps[i01], a10 = amps[i10], a11 = amps[i11];
    amps[i00] = gate[0] * a00 + gate[1] * a01 + gate[2] * a10 + gate[3] * a11;
    amps[i01] = gate[4] * a00 + gate[5] * a01 + gate[6] * a10 + gate[7] * a11;
    amps[i10] = gate[8] * a00 + gate[9] * a01 + gate[10] * a10 + gate[11] * a11;
    amps[i11] = gate[12] * a00 + gate[13] * a01 + gate[14] * a10 + gate[15] * a11;
  }
}

StateVector run_circuit(const CircuitSpec& spec, const ParamVector& theta,
                        const std::array<double, 2>& local) {
  if (theta.size() != spec.n_params())
    throw std::invalid_argument("run_circuit: parameter length mismatch");
  const Lattice& lat = *spec.lattice;
  StateVector psi = StateVector::product_state(lat.n_sites, local);
  for (std::size_t s = 0; s < spec.gate_slots.size(); ++s) {
    const auto& edge = lat.edges[spec.gate_slots[s].edge];
    psi.apply_two_qubit(so4_matrix(slot_angles(theta, s)), edge.first, edge.second);
  }
  return psi;
}

double expectation_zz(const StateVector& psi, std::size_t a, std::size_t b) {
  const std::size_t ma = std::size_t{1} << a, mb = std::size_t{1} << b;
  double num = 0, den = 0;
  for (std::size_t x = 0; x < psi.amps.size(); ++x) {
    const double w = psi.amps[x] * psi.amps[x];
    const bool same = ((x & ma) != 0) == ((x & mb) != 0);
    num += same ? w : -w;
    den += w;
  }
  return num / den;
}

double expectation_x(const StateVector& psi, std::size_t q) {
  const std::size_t m = std::size_t{1} << q;
  double num = 0, den = 0;
  for (std::size_t x = 0; x < psi.amps.size(); ++x) {
    num += psi.amps[x] * psi.amps[x ^ m];
    den += psi.amps[x] * psi.amps[x];
  }
  return num / den;
}

double expectation_z(const StateVector& psi, std::size_t q) {
  const std::size_t m = std::size_t{1} << q;
  double num = 0, den = 0;
  for (std::size_t x = 0; x < psi.amps.size(); ++x) {
    const double w = psi.amps[x] * psi.amps[x];
    num += (x & m) ? -w : w;
    den += w;
  }
  return num / den;
}

double statevector_energy(const StateVector& psi, const Lattice& lattice, double g) {
  double e = 0;
  for (const auto& edge : lattice.edges) e -= expectation_zz(psi, edge.first, edge.second);
  for (std::size_t q = 0; q < lattice.n_sites; ++q) e -= g * expectation_x(psi, q);
  return e;
}

void apply_tfim(const Lattice& lattice, double g, const std::vector<double>& x,
                std::vector<double>& y) {
  const std::size_t n = x.size();
  if (y.size() != n) throw std::invalid_argument("apply_tfim: size mismatch");
  // diagonal ZZ part
  for (std::size_t s = 0; s < n; ++s) {
    double diag = 0;
    for (const auto& edge : lattice.edges) {
      const bool same = ((s >> edge.first) & 1) == ((s >> edge.second) & 1);
      diag -= same ? 1.0 : -1.0;
    }
    y[s] += diag * x[s];
  }
  // off-diagonal field
  for (std::size_t q = 0; q < lattice.n_sites; ++q) {
    const std::size_t m = std::size_t{1} << q;
    for (std::size_t s = 0; s < n; ++s) y[s] -= g * x[s ^ m];
  }
}

namespace {

// Eigen-decomposition of a symmetric tridiagonal matrix; returns the lowest
// eigenvalue and (optionally) its eigenvector in the Krylov basis.
double tridiag_lowest(const std::vector<double>& alpha, const std::vector<double>& beta,
                      std::vector<double>* eigvec) {
  const lapack_int n = static_cast<lapack_int>(alpha.size());
  if (n == 0) throw std::runtime_error("lanczos: empty basis");
  std::vector<double> d = alpha;
  std::vector<double> e = beta;
  e.resize(static_cast<std::size_t>(std::max<lapack_int>(1, n)), 0.0);
  std::vector<double> z(static_cast<std::size_t>(n) * n);
  lapack_int info = LAPACKE_dstev(LAPACK_ROW_MAJOR, eigvec ? 'V' : 'N', n, d.data(),
                                  e.data(), z.data(), n);
  if (info != 0) throw std::runtime_error("lanczos: dstev failed");
  if (eigvec) {
    eigvec->resize(n);
    for (lapack_int k = 0; k < n; ++k) (*eigvec)[k] = z[k * n + 0];
  }
  return d[0];
}

}  // namespace

double exact_ground_energy(const Lattice& lattice, double g, double tol,
                           std::size_t max_iters) {
  if (lattice.n_sites > 20)
    throw std::invalid_argument("exact_ground_energy: N <= 20");
  const std::size_t dim = std::size_t{1} << lattice.n_sites;

  // Lanczos with full reorthogonalization, restarted from the current Ritz
  // vector when the stored basis hits the cap.
  const std::size_t basis_cap = std::min<std::size_t>(dim, 120);

  // deterministic start vector with weight on every basis state
  std::vector<double> v0(dim);
  for (std::size_t i = 0; i < dim; ++i)
    v0[i] = 1.0 + 0.3 * std::sin(0.7 * static_cast<double>(i) + 0.2);
  double nv = 0;
  for (double a : v0) nv += a * a;
  nv = std::sqrt(nv);
  for (double& a : v0) a /= nv;

  double prev_ritz = 1e300;
  std::size_t iters_done = 0;
  while (iters_done < max_iters) {
    std::vector<std::vector<double>> basis;
    std::vector<double> alpha, beta;
    basis.push_back(v0);
    double ritz = prev_ritz;
    bool subspace_exhausted = false;

    while (iters_done < max_iters) {
      ++iters_done;
      const std::vector<double>& v = basis.back();
      std::vector<double> w(dim, 0.0);
      apply_tfim(lattice, g, v, w);

      double a = 0;
      for (std::size_t i = 0; i < dim; ++i) a += v[i] * w[i];
      alpha.push_back(a);

      ritz = tridiag_lowest(alpha, beta, nullptr);
      if (alpha.size() >= 3 && std::fabs(ritz - prev_ritz) < tol) return ritz;
      prev_ritz = ritz;

      for (int pass = 0; pass < 2; ++pass)
        for (const auto& u : basis) {
          double proj = 0;
          for (std::size_t i = 0; i < dim; ++i) proj += u[i] * w[i];
          for (std::size_t i = 0; i < dim; ++i) w[i] -= proj * u[i];
        }
      double b = 0;
      for (double x : w) b += x * x;
      b = std::sqrt(b);
      if (b < 1e-13) {
        subspace_exhausted = true;  // exact invariant subspace
        break;
      }
      if (basis.size() == basis_cap) break;
      beta.push_back(b);
      std::vector<double> next(dim);
      for (std::size_t i = 0; i < dim; ++i) next[i] = w[i] / b;
      basis.push_back(std::move(next));
    }
    if (subspace_exhausted) return ritz;

    // restart from the Ritz vector
    std::vector<double> coeffs;
    tridiag_lowest(alpha, beta, &coeffs);
    std::vector<double> restart(dim, 0.0);
    for (std::size_t k = 0; k < coeffs.size() && k < basis.size(); ++k)
      for (std::size_t i = 0; i < dim; ++i) restart[i] += coeffs[k] * basis[k][i];
    double nr = 0;
    for (double x : restart) nr += x * x;
    nr = std::sqrt(nr);
    if (nr < 1e-14) throw std::runtime_error("lanczos: degenerate restart vector");
    for (double& x : restart) x /= nr;
    v0 = std::move(restart);
  }
  throw std::runtime_error("lanczos: did not converge");
}

}  // namespace pepsvqe
