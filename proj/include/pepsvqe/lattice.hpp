#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace pepsvqe {

enum class LatticeKind { SquareGrid, HeavyHex };

// Qubit interaction graph plus its brickwall edge partition (a proper edge
// coloring: every group is a matching and the groups cover all edges).
// Immutable after construction; safe to share across threads.
struct Lattice {
  LatticeKind kind = LatticeKind::SquareGrid;
  std::size_t rows = 0, cols = 0;   // SquareGrid only
  std::size_t preset = 0;           // HeavyHex only (target qubit count)

  std::size_t n_sites = 0;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;  // first < second, lex sorted
  std::vector<std::vector<std::size_t>> brickwall_groups;      // edge ids per group
  std::vector<std::size_t> degree;                             // per site
  std::size_t max_degree = 0;
  std::vector<std::vector<std::size_t>> site_edges;            // incident edge ids, ascending

  // Open-boundary rows x cols grid. Brickwall groups follow the fixed
  // 4-coloring (horizontal even column, horizontal odd, vertical even row,
  // vertical odd); empty groups are dropped.
  static Lattice build_square(std::size_t rows, std::size_t cols);

  // Heavy-hex coupling graph trimmed to one of the supported qubit counts
  // {28, 53, 75, 127}. Cells are horizontal qubit chains joined by bridge
  // qubits every 4 columns with alternating offsets, mirroring
  // superconducting-device coupling maps; see build_heavyhex() notes in the
  // implementation for the per-preset parameters.
  static Lattice build_heavyhex(std::size_t preset);

  // Checks all structural invariants; returns human-readable violations
  // (empty when valid). Never throws on a malformed lattice.
  std::vector<std::string> validate() const;

  bool is_connected() const;

  std::string to_json() const;
  static Lattice from_json(const std::string& text);

  // Identifier like "square:3x4" or "heavyhex:28"; also the CLI spelling.
  std::string id() const;
  static Lattice parse(const std::string& spec);

 private:
  void finalize();  // fills degree/site_edges/max_degree from edges
};

}  // namespace pepsvqe
