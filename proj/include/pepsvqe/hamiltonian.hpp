#pragma once

#include "pepsvqe/lattice.hpp"
#include "pepsvqe/peps.hpp"
#include "pepsvqe/statevector.hpp"

namespace pepsvqe {

// Critical-point defaults quoted for the two lattice families; configuration
// values, never baked into algorithms.
inline constexpr double kGcHeavyHex = 1.5;
inline constexpr double kGcSquare = 2.6;

// H = -sum_<i,j> Z_i Z_j - g sum_i X_i. One ZZ term per edge with
// coefficient -1, one X term per site with coefficient -g.
struct TfimHamiltonian {
  const Lattice* lattice = nullptr;
  double g = 1.0;
};

double energy(const PepsState& state, const TfimHamiltonian& h, EnergyMethod method,
              std::size_t chi_e = 0, double cutoff = kSvdCutoff);
double energy(const StateVector& psi, const TfimHamiltonian& h);

inline double relative_error(double e, double e_ref) {
  if (e_ref == 0) throw std::invalid_argument("relative_error: reference is zero");
  return std::fabs(e - e_ref) / std::fabs(e_ref);
}

}  // namespace pepsvqe
