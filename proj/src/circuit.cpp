#include "pepsvqe/circuit.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "json.hpp"

namespace pepsvqe {

namespace {

// (i, j) index pairs of the generator basis order.
constexpr int kPairs[6][2] = {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}};

Mat4 zero4() {
  Mat4 m{};
  return m;
}

Mat4 antisym_from(const std::array<double, 6>& c) {
  Mat4 a = zero4();
  for (std::size_t k = 0; k < 6; ++k) {
    a[kPairs[k][0] * 4 + kPairs[k][1]] = c[k];
    a[kPairs[k][1] * 4 + kPairs[k][0]] = -c[k];
  }
  return a;
}

Mat4 mul4(const Mat4& a, const Mat4& b) {
  Mat4 c = zero4();
  for (int i = 0; i < 4; ++i)
    for (int k = 0; k < 4; ++k) {
      const double aik = a[i * 4 + k];
      for (int j = 0; j < 4; ++j) c[i * 4 + j] += aik * b[k * 4 + j];
    }
  return c;
}

double sinc(double x) {
  if (std::fabs(x) < 1e-4) {
    const double x2 = x * x;
    return 1.0 - x2 / 6.0 + x2 * x2 / 120.0;
  }
  return std::sin(x) / x;
}

// Rodrigues form for a (anti-)self-dual antisymmetric block: B^2 = -m^2 I,
// so exp(B) = cos(m) I + sinc(m) B.
Mat4 exp_dual_block(const std::array<double, 3>& v, bool self_dual) {
  // self-dual ties components (c01, c02, c03) = (c23, -c13, c12) = v;
  // anti-self-dual flips those signs.
  const double sgn = self_dual ? 1.0 : -1.0;
  std::array<double, 6> c{v[0], v[1], v[2], sgn * v[2], -sgn * v[1], sgn * v[0]};
  Mat4 b = antisym_from(c);
  const double m = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
  const double cm = std::cos(m), sm = sinc(m);
  Mat4 out = zero4();
  for (int i = 0; i < 4; ++i) out[i * 4 + i] = cm;
  for (int i = 0; i < 16; ++i) out[i] += sm * b[i];
  return out;
}

}  // namespace

const std::array<Mat4, 6>& so4_generators() {
  static const std::array<Mat4, 6> gens = [] {
    std::array<Mat4, 6> g;
    for (std::size_t k = 0; k < 6; ++k) {
      std::array<double, 6> c{};
      c[k] = 1.0;
      g[k] = antisym_from(c);
    }
    return g;
  }();
  return gens;
}

// Split A into commuting self-dual and anti-self-dual parts, each of which
// squares to a negative multiple of the identity, and exponentiate both in
// closed form. The Hodge dual swaps (c01,c02,c03) with (c23,-c13,c12).
Mat4 so4_matrix(const std::array<double, 6>& angles) {
  const double a01 = angles[0], a02 = angles[1], a03 = angles[2];
  const double a12 = angles[3], a13 = angles[4], a23 = angles[5];
  const std::array<double, 3> vp{(a01 + a23) / 2, (a02 - a13) / 2, (a03 + a12) / 2};
  const std::array<double, 3> vm{(a01 - a23) / 2, (a02 + a13) / 2, (a03 - a12) / 2};
  return mul4(exp_dual_block(vp, true), exp_dual_block(vm, false));
}

// Frechet derivative via the block identity
//   exp([[A, E], [0, A]]) = [[exp(A), L(A,E)], [0, exp(A)]],
// with the 8x8 exponential computed by scaling and squaring plus Taylor.
std::array<Mat4, 6> so4_derivatives(const std::array<double, 6>& angles) {
  Mat4 a = antisym_from(angles);
  std::array<Mat4, 6> out;
  for (std::size_t k = 0; k < 6; ++k) {
    const Mat4& e = so4_generators()[k];

    double blk[64] = {};
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) {
        blk[i * 8 + j] = a[i * 4 + j];
        blk[(i + 4) * 8 + (j + 4)] = a[i * 4 + j];
        blk[i * 8 + (j + 4)] = e[i * 4 + j];
      }

    double norm = 0;
    for (double v : blk) norm = std::max(norm, std::fabs(v));
    int s = 0;
    double scaled_norm = norm * 8;
    while (scaled_norm > 0.25 && s < 60) {
      scaled_norm /= 2;
      ++s;
    }
    const double scale = std::ldexp(1.0, -s);
    double x[64];
    for (int i = 0; i < 64; ++i) x[i] = blk[i] * scale;

    // Taylor: result = I + X + X^2/2! + ...
    double result[64] = {};
    for (int i = 0; i < 8; ++i) result[i * 8 + i] = 1.0;
    double term[64];
    std::memcpy(term, x, sizeof(term));
    for (int i = 0; i < 64; ++i) result[i] += term[i];
    for (int order = 2; order <= 18; ++order) {
      double next[64] = {};
      for (int i = 0; i < 8; ++i)
        for (int kk = 0; kk < 8; ++kk) {
          const double t = term[i * 8 + kk] / order;
          if (t == 0) continue;
          for (int j = 0; j < 8; ++j) next[i * 8 + j] += t * x[kk * 8 + j];
        }
      std::memcpy(term, next, sizeof(term));
      for (int i = 0; i < 64; ++i) result[i] += term[i];
    }
    for (int step = 0; step < s; ++step) {
      double sq[64] = {};
      for (int i = 0; i < 8; ++i)
        for (int kk = 0; kk < 8; ++kk) {
          const double t = result[i * 8 + kk];
          if (t == 0) continue;
          for (int j = 0; j < 8; ++j) sq[i * 8 + j] += t * result[kk * 8 + j];
        }
      std::memcpy(result, sq, sizeof(result));
    }

    Mat4 d;
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) d[i * 4 + j] = result[i * 8 + (j + 4)];
    out[k] = d;
  }
  return out;
}

CircuitSpec build_circuit(const Lattice& lattice, std::size_t depth) {
  if (depth < 1) throw std::invalid_argument("build_circuit: depth >= 1");
  CircuitSpec spec;
  spec.lattice = &lattice;
  spec.depth = depth;
  for (std::size_t layer = 0; layer < depth; ++layer)
    for (std::size_t g = 0; g < lattice.brickwall_groups.size(); ++g)
      for (std::size_t e : lattice.brickwall_groups[g])
        spec.gate_slots.push_back({layer, g, e});
  return spec;
}

ParamVector warm_start_extend(const ParamVector& theta_opt, const CircuitSpec& spec_shallow,
                              const CircuitSpec& spec_full) {
  if (spec_shallow.lattice->id() != spec_full.lattice->id())
    throw std::invalid_argument("warm_start_extend: lattice mismatch");
  if (spec_shallow.depth > spec_full.depth)
    throw std::invalid_argument("warm_start_extend: shallow depth exceeds full depth");
  if (theta_opt.size() != spec_shallow.n_params())
    throw std::invalid_argument("warm_start_extend: parameter count mismatch");
  ParamVector theta(spec_full.n_params(), 0.0);
  std::copy(theta_opt.begin(), theta_opt.end(), theta.begin());
  return theta;
}

std::string params_to_json(const ParamVector& theta, const CircuitSpec& spec) {
  if (theta.size() != spec.n_params())
    throw std::invalid_argument("params_to_json: length mismatch");
  nlohmann::json j;
  j["format"] = kParamFormatVersion;
  j["lattice"] = spec.lattice->id();
  j["depth"] = spec.depth;
  j["values"] = theta;
  return j.dump();
}

ParamVector params_from_json(const std::string& text, const CircuitSpec* expected) {
  nlohmann::json j = nlohmann::json::parse(text);
  if (j.at("format").get<std::string>() != kParamFormatVersion)
    throw std::invalid_argument("params: unknown format version");
  ParamVector theta = j.at("values").get<ParamVector>();
  if (expected) {
    if (j.at("lattice").get<std::string>() != expected->lattice->id())
      throw std::invalid_argument("params: lattice mismatch");
    if (j.at("depth").get<std::size_t>() != expected->depth)
      throw std::invalid_argument("params: depth mismatch");
    if (theta.size() != expected->n_params())
      throw std::invalid_argument("params: length mismatch");
  }
  return theta;
}

void params_header_from_json(const std::string& text, std::string& lattice_id,
                             std::size_t& depth) {
  nlohmann::json j = nlohmann::json::parse(text);
  lattice_id = j.at("lattice").get<std::string>();
  depth = j.at("depth").get<std::size_t>();
}

}  // namespace pepsvqe
