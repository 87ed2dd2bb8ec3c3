#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "pepsvqe/lattice.hpp"

namespace pepsvqe {

// 4x4 matrix in row-major order; the two-qubit gate representation.
using Mat4 = std::array<double, 16>;

inline constexpr std::size_t kAnglesPerGate = 6;

// SO(4) gate M(theta) = exp(sum_k theta_k G_k) over the fixed antisymmetric
// basis G = (E01, E02, E03, E12, E13, E23), E_ij = e_i e_j^T - e_j e_i^T.
// M(0) = identity; M is orthogonal with det +1 for all angles. The gate acts
// on the two qubits of an edge with the lower site index as the first tensor
// factor (basis index 2*s_lo + s_hi).
Mat4 so4_matrix(const std::array<double, 6>& angles);

// dM/dtheta_k for each of the six generators (Frechet derivative of the
// matrix exponential).
std::array<Mat4, 6> so4_derivatives(const std::array<double, 6>& angles);

// The generator basis itself.
const std::array<Mat4, 6>& so4_generators();

// Brickwall circuit: one layer of depth D applies one gate on every edge,
// sweeping the lattice's brickwall groups in order. Slot order is
// layer-major, then group, then ascending edge id; parameters are the
// slots' angle blocks concatenated.
struct GateSlot {
  std::size_t layer;
  std::size_t group;
  std::size_t edge;
};

struct CircuitSpec {
  const Lattice* lattice = nullptr;
  std::size_t depth = 0;
  std::vector<GateSlot> gate_slots;

  std::size_t n_params() const { return kAnglesPerGate * gate_slots.size(); }
  std::size_t slots_per_layer() const { return lattice->edges.size(); }
};

CircuitSpec build_circuit(const Lattice& lattice, std::size_t depth);

// Flat vector of SO(4) angles matching a CircuitSpec.
using ParamVector = std::vector<double>;

inline std::array<double, 6> slot_angles(const ParamVector& theta, std::size_t slot) {
  std::array<double, 6> a;
  for (std::size_t k = 0; k < 6; ++k) a[k] = theta[slot * kAnglesPerGate + k];
  return a;
}

// Embeds a depth-D* optimum into a deeper circuit: the first D* layers are
// copied, the remaining layers stay at zero (identity gates).
ParamVector warm_start_extend(const ParamVector& theta_opt, const CircuitSpec& spec_shallow,
                              const CircuitSpec& spec_full);

// Checkpoint format: JSON with the lattice id, depth, slot-order version and
// the flat angle list. This is the file handed between the optimizer, the
// landscape scans and the scaling benchmark.
inline constexpr const char* kParamFormatVersion = "pepsvqe-params-v1";

std::string params_to_json(const ParamVector& theta, const CircuitSpec& spec);
// Returns the stored angles; checks lattice/depth against `expected` if given.
ParamVector params_from_json(const std::string& text, const CircuitSpec* expected);
// Reads just the header (lattice id, depth).
void params_header_from_json(const std::string& text, std::string& lattice_id,
                             std::size_t& depth);

}  // namespace pepsvqe
