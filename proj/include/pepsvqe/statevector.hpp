#pragma once

#include <cstddef>
#include <vector>

#include "pepsvqe/circuit.hpp"
#include "pepsvqe/lattice.hpp"

namespace pepsvqe {

// Exact simulation oracle for small systems. Amplitudes are real (the gate
// set and initial states are real). Qubit index = lattice site index;
// tensor-factor ordering little-endian: site k toggles bit k of the
// amplitude index.
struct StateVector {
  std::size_t n_qubits = 0;
  std::vector<double> amps;

  static StateVector product_state(std::size_t n, const std::array<double, 2>& local);

  double norm() const;
  // In-place 4x4 kernel on (qa, qb) where qa is the first tensor factor.
  void apply_two_qubit(const Mat4& gate, std::size_t qa, std::size_t qb);
};

inline constexpr std::size_t kStatevectorCap = 26;

StateVector run_circuit(const CircuitSpec& spec, const ParamVector& theta,
                        const std::array<double, 2>& local);

// <psi| (-sum_edges Z Z - g sum_i X) |psi> / <psi|psi>, matrix-free.
double statevector_energy(const StateVector& psi, const Lattice& lattice, double g);

double expectation_zz(const StateVector& psi, std::size_t a, std::size_t b);
double expectation_x(const StateVector& psi, std::size_t q);
double expectation_z(const StateVector& psi, std::size_t q);

// y += H x with H = -sum ZZ - g sum X.
void apply_tfim(const Lattice& lattice, double g, const std::vector<double>& x,
                std::vector<double>& y);

// Lowest eigenvalue by thick-restart Lanczos on the matrix-free product.
// N <= 20.
double exact_ground_energy(const Lattice& lattice, double g, double tol = 1e-10,
                           std::size_t max_iters = 2000);

}  // namespace pepsvqe
