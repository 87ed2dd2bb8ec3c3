#pragma once

#include <array>
#include <cstddef>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "pepsvqe/circuit.hpp"
#include "pepsvqe/lattice.hpp"
#include "pepsvqe/tensor.hpp"

namespace pepsvqe {

// PEPS in the weighted (simple-update) gauge: one site tensor per lattice
// site plus a positive, nonincreasing weight vector per edge.
//
// Site tensor axis convention: axis 0 is the physical index (size 2); axis
// 1+k is the virtual index for site_edges[site][k] (incident edges in
// ascending edge-id order).
//
// Tensors are renormalized gate by gate (divide by the largest-magnitude
// entry); the running log of those factors is tracked in log_norm.
// Expectation values are normalized ratios, so they never see it.
struct PepsState {
  const Lattice* lattice = nullptr;
  std::vector<DenseTensor> site_tensors;
  std::vector<std::vector<double>> bond_weights;
  double log_norm = 0.0;

  std::size_t bond_dim(std::size_t edge) const { return bond_weights[edge].size(); }
  std::size_t max_bond_dim() const;
  // Axis of `site`'s tensor that carries `edge` (1 + position in site_edges).
  std::size_t virtual_axis(std::size_t site, std::size_t edge) const;
};

// All virtual dimensions 1, every bond weight [1]; the global state is the
// product of `local` over sites.
PepsState init_product_state(const Lattice& lattice, const std::array<double, 2>& local);

struct EvolutionLog {
  std::vector<double> gate_discarded;   // one entry per applied gate
  double cumulative_discarded = 0.0;    // running sum, a truncation proxy
  std::vector<double> layer_seconds;    // one entry per completed layer
  std::size_t pinv_underflows = 0;      // bond entries zeroed by the pseudo-inverse
};

struct SuOptions {
  std::size_t chi = 4;
  double cutoff = kSvdCutoff;
};

// One simple-update step: absorb environment weights, contract
// site-gate-site, split back with a rank-<=chi truncated SVD, normalize the
// new bond weights and restore the environment by pseudo-inverse.
// Returns the discarded weight of the split.
double apply_gate_su(PepsState& state, std::size_t edge, const Mat4& gate,
                     const SuOptions& opt, EvolutionLog* log = nullptr);

// Truncation-error mitigation pass: applies identity gates over the layer's
// brickwall groups in reverse order. Physically a no-op up to truncation;
// refreshes the bond weights.
void su_regauge(PepsState& state, const SuOptions& opt, EvolutionLog* log = nullptr);

// Pauli term on the lattice: a single-site operator or an adjacent-pair ZZ.
struct PauliTerm {
  enum class Kind { X, Z, ZZ } kind;
  std::size_t site = 0;  // X/Z
  std::size_t edge = 0;  // ZZ
  static PauliTerm x(std::size_t site) { return {Kind::X, site, 0}; }
  static PauliTerm z(std::size_t site) { return {Kind::Z, site, 0}; }
  static PauliTerm zz(std::size_t edge) { return {Kind::ZZ, 0, edge}; }
};

// Mean-field-environment expectation: every dangling virtual axis of the
// one- or two-site cluster is closed with its squared bond weights.
double expectation_su(const PepsState& state, const PauliTerm& term);

// Row-by-row contraction of <Psi|P|Psi> / <Psi|Psi> on a square grid,
// compressing the boundary to an MPS of bond dimension chi_e after each row.
double expectation_boundary_mps(const PepsState& state, const PauliTerm& term,
                                std::size_t chi_e, double cutoff = kSvdCutoff);

// Precomputed boundary environments: evaluating many terms on one frozen
// state reuses the row-by-row boundaries instead of recontracting the whole
// network per term.
class BoundaryEnvironment {
 public:
  BoundaryEnvironment(const PepsState& state, std::size_t chi_e, double cutoff = kSvdCutoff);
  double expectation(const PauliTerm& term) const;
  double norm_log() const;  // log <Psi|Psi> up to the state's own scale

 private:
  struct Impl;
  std::shared_ptr<Impl> impl_;
};

// Applies every gate of the circuit in slot order; after each full layer,
// regauges when enabled (and chi > 1).
std::pair<PepsState, EvolutionLog> apply_circuit(const PepsState& state0,
                                                 const CircuitSpec& spec,
                                                 const ParamVector& theta,
                                                 const SuOptions& opt, bool regauge);

enum class EnergyMethod { SU, BoundaryMPS, Statevector };

struct IteOptions {
  std::vector<double> dtau_schedule{0.1, 0.05, 0.01, 0.005};
  std::size_t max_sweeps_per_stage = 2000;
  double energy_tol = 1e-8;
  std::size_t chi = 4;
  double cutoff = kSvdCutoff;
  EnergyMethod method = EnergyMethod::SU;  // resolved by caller per lattice kind
  std::size_t chi_e = 16;
  std::array<double, 2> initial{1.0, 0.0};
};

struct IteResult {
  double energy = 0;
  PepsState state;
  bool converged = false;
  std::size_t sweeps = 0;
  std::vector<double> stage_energies;  // final energy after each dtau stage
};

// Ground-state reference by second-order Trotterized imaginary time
// evolution of the TFIM under simple update. The transverse-field half-steps
// are exact single-site absorptions; the ZZ bond factors all commute, so the
// two-site sweep order introduces no additional Trotter error.
IteResult imaginary_time_evolve(const Lattice& lattice, double g, const IteOptions& opt);

// Binary checkpoint (shape headers + raw doubles) with a JSON sidecar.
void save_peps(const PepsState& state, const std::string& path_bin,
               const std::string& path_json);
PepsState load_peps(const Lattice& lattice, const std::string& path_bin);

// Exact amplitude vector of the PEPS (little-endian site ordering). Oracle
// for small systems; N <= 20.
std::vector<double> peps_to_statevector(const PepsState& state);

}  // namespace pepsvqe
