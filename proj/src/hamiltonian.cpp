#include "pepsvqe/hamiltonian.hpp"

#include <cmath>
#include <stdexcept>

namespace pepsvqe {

double energy(const PepsState& state, const TfimHamiltonian& h, EnergyMethod method,
              std::size_t chi_e, double cutoff) {
  const Lattice& lat = *h.lattice;
  if (state.lattice->id() != lat.id())
    throw std::invalid_argument("energy: state/hamiltonian lattice mismatch");

  double e = 0;
  switch (method) {
    case EnergyMethod::SU:
      for (std::size_t ed = 0; ed < lat.edges.size(); ++ed)
        e -= expectation_su(state, PauliTerm::zz(ed));
      for (std::size_t s = 0; s < lat.n_sites; ++s)
        e -= h.g * expectation_su(state, PauliTerm::x(s));
      return e;
    case EnergyMethod::BoundaryMPS: {
      if (lat.kind != LatticeKind::SquareGrid)
        throw std::invalid_argument("energy: boundary MPS requires a square grid");
      if (chi_e == 0) throw std::invalid_argument("energy: chi_e required");
      BoundaryEnvironment env(state, chi_e, cutoff);
      for (std::size_t ed = 0; ed < lat.edges.size(); ++ed)
        e -= env.expectation(PauliTerm::zz(ed));
      for (std::size_t s = 0; s < lat.n_sites; ++s)
        e -= h.g * env.expectation(PauliTerm::x(s));
      return e;
    }
    case EnergyMethod::Statevector:
      throw std::invalid_argument("energy: statevector method needs a StateVector input");
  }
  throw std::logic_error("energy: unknown method");
}

double energy(const StateVector& psi, const TfimHamiltonian& h) {
  return statevector_energy(psi, *h.lattice, h.g);
}

}  // namespace pepsvqe
