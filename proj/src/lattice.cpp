#include "pepsvqe/lattice.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace pepsvqe {

namespace {

using Edge = std::pair<std::uint32_t, std::uint32_t>;

Edge make_edge(std::size_t a, std::size_t b) {
  if (a == b) throw std::invalid_argument("lattice: self loop");
  if (a > b) std::swap(a, b);
  return {static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)};
}

}  // namespace

void Lattice::finalize() {
  std::sort(edges.begin(), edges.end());
  degree.assign(n_sites, 0);
  site_edges.assign(n_sites, {});
  for (std::size_t e = 0; e < edges.size(); ++e) {
    degree[edges[e].first]++;
    degree[edges[e].second]++;
    site_edges[edges[e].first].push_back(e);
    site_edges[edges[e].second].push_back(e);
  }
  max_degree = 0;
  for (std::size_t d : degree) max_degree = std::max(max_degree, d);
}

Lattice Lattice::build_square(std::size_t rows, std::size_t cols) {
  if (rows < 1 || cols < 1) throw std::invalid_argument("build_square: rows, cols >= 1");
  Lattice lat;
  lat.kind = LatticeKind::SquareGrid;
  lat.rows = rows;
  lat.cols = cols;
  lat.n_sites = rows * cols;

  auto site = [cols](std::size_t r, std::size_t c) { return r * cols + c; };

  // groups: 0 horizontal even c, 1 horizontal odd c, 2 vertical even r, 3 vertical odd r
  std::vector<std::vector<Edge>> groups(4);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c + 1 < cols; ++c)
      groups[c % 2 == 0 ? 0 : 1].push_back(make_edge(site(r, c), site(r, c + 1)));
  for (std::size_t r = 0; r + 1 < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      groups[r % 2 == 0 ? 2 : 3].push_back(make_edge(site(r, c), site(r + 1, c)));

  for (auto& g : groups) {
    std::sort(g.begin(), g.end());
    for (const Edge& e : g) lat.edges.push_back(e);
  }
  lat.finalize();

  std::map<Edge, std::size_t> edge_id;
  for (std::size_t e = 0; e < lat.edges.size(); ++e) edge_id[lat.edges[e]] = e;
  for (const auto& g : groups) {
    if (g.empty()) continue;
    std::vector<std::size_t> ids;
    for (const Edge& e : g) ids.push_back(edge_id.at(e));
    std::sort(ids.begin(), ids.end());
    lat.brickwall_groups.push_back(std::move(ids));
  }
  return lat;
}

// Heavy-hex cells: `chain_rows` horizontal chains of `chain_cols` qubits,
// consecutive chains joined by degree-2 bridge qubits placed every 4 columns,
// with the column offset alternating between 0 and 2 per gap. Bridge qubits
// are indexed after all chain qubits, ordered by (gap, column). `trim` final
// chain-qubit indices of the last chain are removed to hit the target count.
//
// Presets:
//   28  -> 3 chains x 8, no trim
//   53  -> 4 chains x 11, no trim
//   75  -> 5 chains x 13, trim 4    (79 - 4)
//   127 -> 7 chains x 15, trim 2    (129 - 2)
//
// The brickwall partition is the structural proper 3-coloring:
//   even chains alternate colors 0/1 by column parity, odd chains 2/0,
//   bridge edges take the color their chain endpoint's palette leaves free
//   (2 against an 0/1 chain, 1 against a 2/0 chain).
Lattice Lattice::build_heavyhex(std::size_t preset) {
  std::size_t chain_rows, chain_cols, trim;
  switch (preset) {
    case 28: chain_rows = 3; chain_cols = 8; trim = 0; break;
    case 53: chain_rows = 4; chain_cols = 11; trim = 0; break;
    case 75: chain_rows = 5; chain_cols = 13; trim = 4; break;
    case 127: chain_rows = 7; chain_cols = 15; trim = 2; break;
    default:
      throw std::invalid_argument("build_heavyhex: preset must be one of 28, 53, 75, 127");
  }

  const std::size_t n_chain = chain_rows * chain_cols;
  auto chain_site = [chain_cols](std::size_t r, std::size_t c) { return r * chain_cols + c; };

  std::vector<Edge> edges;
  std::vector<std::size_t> colors;  // parallel to edges (pre-sort)

  std::set<std::size_t> removed;
  for (std::size_t t = 0; t < trim; ++t) removed.insert(n_chain - 1 - t);

  auto chain_color = [](std::size_t r, std::size_t c) {
    // color of horizontal edge (r,c)-(r,c+1)
    if (r % 2 == 0) return c % 2 == 0 ? std::size_t{0} : std::size_t{1};
    return c % 2 == 0 ? std::size_t{2} : std::size_t{0};
  };
  auto bridge_color = [](std::size_t chain_row) {
    // edge from a chain qubit in `chain_row` to a bridge qubit
    return chain_row % 2 == 0 ? std::size_t{2} : std::size_t{1};
  };

  for (std::size_t r = 0; r < chain_rows; ++r)
    for (std::size_t c = 0; c + 1 < chain_cols; ++c) {
      std::size_t a = chain_site(r, c), b = chain_site(r, c + 1);
      if (removed.count(a) || removed.count(b)) continue;
      edges.push_back(make_edge(a, b));
      colors.push_back(chain_color(r, c));
    }

  std::size_t next_id = n_chain;
  for (std::size_t gap = 0; gap + 1 < chain_rows; ++gap) {
    const std::size_t offset = gap % 2 == 0 ? 0 : 2;
    for (std::size_t c = offset; c < chain_cols; c += 4) {
      std::size_t top = chain_site(gap, c), bot = chain_site(gap + 1, c);
      if (removed.count(top) || removed.count(bot)) continue;
      std::size_t bridge = next_id++;
      edges.push_back(make_edge(top, bridge));
      colors.push_back(bridge_color(gap));
      edges.push_back(make_edge(bot, bridge));
      colors.push_back(bridge_color(gap + 1));
    }
  }

  // Compact site indices: removed chain qubits drop out, bridges follow.
  std::map<std::size_t, std::uint32_t> remap;
  std::uint32_t idx = 0;
  for (std::size_t s = 0; s < n_chain; ++s)
    if (!removed.count(s)) remap[s] = idx++;
  for (std::size_t s = n_chain; s < next_id; ++s) remap[s] = idx++;

  Lattice lat;
  lat.kind = LatticeKind::HeavyHex;
  lat.preset = preset;
  lat.n_sites = idx;
  if (lat.n_sites != preset)
    throw std::logic_error("build_heavyhex: cell parameters do not realize the preset");

  std::vector<std::pair<Edge, std::size_t>> colored;
  for (std::size_t i = 0; i < edges.size(); ++i)
    colored.push_back({make_edge(remap.at(edges[i].first), remap.at(edges[i].second)),
                       colors[i]});
  std::sort(colored.begin(), colored.end());

  std::size_t n_colors = 0;
  for (const auto& [e, col] : colored) n_colors = std::max(n_colors, col + 1);
  lat.brickwall_groups.assign(n_colors, {});
  for (std::size_t e = 0; e < colored.size(); ++e) {
    lat.edges.push_back(colored[e].first);
    lat.brickwall_groups[colored[e].second].push_back(e);
  }
  lat.brickwall_groups.erase(
      std::remove_if(lat.brickwall_groups.begin(), lat.brickwall_groups.end(),
                     [](const auto& g) { return g.empty(); }),
      lat.brickwall_groups.end());
  lat.finalize();
  return lat;
}

std::vector<std::string> Lattice::validate() const {
  std::vector<std::string> violations;
  std::set<Edge> seen;
  for (const Edge& e : edges) {
    if (e.first >= n_sites || e.second >= n_sites)
      violations.push_back("edge endpoint out of range");
    if (e.first >= e.second) violations.push_back("edge not ordered (first < second)");
    if (!seen.insert(e).second) violations.push_back("edge multiplicity");
  }

  std::vector<std::size_t> covered(edges.size(), 0);
  for (std::size_t g = 0; g < brickwall_groups.size(); ++g) {
    std::set<std::uint32_t> sites_in_group;
    for (std::size_t e : brickwall_groups[g]) {
      if (e >= edges.size()) {
        violations.push_back("group references unknown edge");
        continue;
      }
      covered[e]++;
      if (!sites_in_group.insert(edges[e].first).second ||
          !sites_in_group.insert(edges[e].second).second)
        violations.push_back("group not a matching (group " + std::to_string(g) + ")");
    }
  }
  for (std::size_t e = 0; e < edges.size(); ++e) {
    if (covered[e] == 0) violations.push_back("edge missing from brickwall groups");
    if (covered[e] > 1) violations.push_back("edge in multiple brickwall groups");
  }

  if (kind == LatticeKind::SquareGrid) {
    if (n_sites != rows * cols) violations.push_back("square grid site count");
    const std::size_t expect = rows * (cols - 1) + cols * (rows - 1);
    if (edges.size() != expect) violations.push_back("square grid edge count");
    if (max_degree > 4) violations.push_back("square grid degree > 4");
  } else {
    if (max_degree > 3) violations.push_back("heavyhex degree > 3");
    if (!is_connected()) violations.push_back("heavyhex not connected");
  }
  return violations;
}

bool Lattice::is_connected() const {
  if (n_sites == 0) return true;
  std::vector<char> vis(n_sites, 0);
  std::vector<std::size_t> stack{0};
  vis[0] = 1;
  std::size_t count = 1;
  while (!stack.empty()) {
    std::size_t s = stack.back();
    stack.pop_back();
    for (std::size_t e : site_edges[s]) {
      std::size_t other = edges[e].first == s ? edges[e].second : edges[e].first;
      if (!vis[other]) {
        vis[other] = 1;
        ++count;
        stack.push_back(other);
      }
    }
  }
  return count == n_sites;
}

std::string Lattice::to_json() const {
  nlohmann::json j;
  j["kind"] = kind == LatticeKind::SquareGrid ? "square" : "heavyhex";
  if (kind == LatticeKind::SquareGrid) {
    j["rows"] = rows;
    j["cols"] = cols;
  } else {
    j["preset"] = preset;
  }
  j["n_sites"] = n_sites;
  auto& je = j["edges"] = nlohmann::json::array();
  for (const Edge& e : edges) je.push_back({e.first, e.second});
  j["groups"] = brickwall_groups;
  return j.dump(2);
}

Lattice Lattice::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  const std::string kind = j.at("kind").get<std::string>();
  Lattice lat;
  if (kind == "square")
    lat = build_square(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
  else if (kind == "heavyhex")
    lat = build_heavyhex(j.at("preset").get<std::size_t>());
  else
    throw std::invalid_argument("lattice JSON: unknown kind " + kind);

  // The stored edge/group lists must agree with the deterministic rebuild.
  if (j.at("n_sites").get<std::size_t>() != lat.n_sites)
    throw std::invalid_argument("lattice JSON: site count mismatch");
  const auto& je = j.at("edges");
  if (je.size() != lat.edges.size())
    throw std::invalid_argument("lattice JSON: edge count mismatch");
  for (std::size_t e = 0; e < lat.edges.size(); ++e)
    if (je[e][0].get<std::uint32_t>() != lat.edges[e].first ||
        je[e][1].get<std::uint32_t>() != lat.edges[e].second)
      throw std::invalid_argument("lattice JSON: edge list mismatch");
  return lat;
}

std::string Lattice::id() const {
  std::ostringstream os;
  if (kind == LatticeKind::SquareGrid)
    os << "square:" << rows << "x" << cols;
  else
    os << "heavyhex:" << preset;
  return os.str();
}

Lattice Lattice::parse(const std::string& spec) {
  auto colon = spec.find(':');
  if (colon == std::string::npos)
    throw std::invalid_argument("lattice spec: expected square:RxC or heavyhex:N");
  const std::string kind = spec.substr(0, colon);
  const std::string arg = spec.substr(colon + 1);
  if (kind == "square") {
    auto x = arg.find('x');
    if (x == std::string::npos)
      throw std::invalid_argument("lattice spec: square:RxC");
    return build_square(std::stoul(arg.substr(0, x)), std::stoul(arg.substr(x + 1)));
  }
  if (kind == "heavyhex") return build_heavyhex(std::stoul(arg));
  throw std::invalid_argument("lattice spec: unknown kind " + kind);
}

}  // namespace pepsvqe
