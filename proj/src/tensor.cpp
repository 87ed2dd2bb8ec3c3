#include "pepsvqe/tensor.hpp"

#include <cblas.h>
#include <lapacke.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace pepsvqe {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t s : shape) n *= s;
  return n;
}

}  // namespace

DenseTensor::DenseTensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(shape_product(shape_), 0.0) {}

DenseTensor::DenseTensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_product(shape_))
    throw std::invalid_argument("DenseTensor: data length does not match shape");
}

DenseTensor DenseTensor::scalar(double v) {
  return DenseTensor({}, {v});
}

double& DenseTensor::at(std::initializer_list<std::size_t> idx) {
  if (idx.size() != shape_.size())
    throw std::invalid_argument("DenseTensor::at: index rank mismatch");
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (std::size_t i : idx) {
    if (i >= shape_[axis]) throw std::out_of_range("DenseTensor::at: index out of range");
    flat = flat * shape_[axis] + i;
    ++axis;
  }
  return data_[flat];
}

double DenseTensor::at(std::initializer_list<std::size_t> idx) const {
  return const_cast<DenseTensor*>(this)->at(idx);
}

bool DenseTensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

double DenseTensor::max_abs() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::fabs(v));
  return m;
}

std::vector<std::size_t> strides_of(const std::vector<std::size_t>& shape) {
  std::vector<std::size_t> strides(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;)
    strides[i - 1] = strides[i] * shape[i];
  return strides;
}

DenseTensor permute(const DenseTensor& t, std::span<const std::size_t> perm) {
  const auto& shape = t.shape();
  const std::size_t r = shape.size();
  if (perm.size() != r) throw std::invalid_argument("permute: rank mismatch");
  std::vector<bool> seen(r, false);
  for (std::size_t p : perm) {
    if (p >= r || seen[p]) throw std::invalid_argument("permute: invalid axis list");
    seen[p] = true;
  }
  if (r <= 1) return t;

  std::vector<std::size_t> out_shape(r);
  for (std::size_t k = 0; k < r; ++k) out_shape[k] = shape[perm[k]];

  const auto in_strides = strides_of(shape);
  // Stride of each output axis in the input data.
  std::vector<std::size_t> walk(r);
  for (std::size_t k = 0; k < r; ++k) walk[k] = in_strides[perm[k]];

  DenseTensor out(out_shape);
  const double* src = t.data();
  double* dst = out.data();
  const std::size_t n = t.size();

  std::vector<std::size_t> idx(r, 0);
  std::size_t src_off = 0;
  for (std::size_t i = 0; i < n; ++i) {
    dst[i] = src[src_off];
    // odometer over output indices, tracking input offset
    for (std::size_t axis = r; axis-- > 0;) {
      if (++idx[axis] < out_shape[axis]) {
        src_off += walk[axis];
        break;
      }
      src_off -= walk[axis] * (out_shape[axis] - 1);
      idx[axis] = 0;
    }
  }
  return out;
}

DenseTensor permute(const DenseTensor& t, std::initializer_list<std::size_t> perm) {
  return permute(t, std::span<const std::size_t>(perm.begin(), perm.size()));
}

DenseTensor reshape(DenseTensor t, std::vector<std::size_t> new_shape) {
  if (shape_product(new_shape) != t.size())
    throw std::invalid_argument("reshape: total size mismatch");
  return DenseTensor(std::move(new_shape), std::move(t.vec()));
}

DenseTensor contract(const DenseTensor& a, const DenseTensor& b,
                     std::span<const std::size_t> axes_a,
                     std::span<const std::size_t> axes_b) {
  if (axes_a.size() != axes_b.size())
    throw std::invalid_argument("contract: axis lists differ in length");
  const auto& sa = a.shape();
  const auto& sb = b.shape();

  std::vector<bool> used_a(sa.size(), false), used_b(sb.size(), false);
  std::size_t k = 1;
  for (std::size_t i = 0; i < axes_a.size(); ++i) {
    std::size_t pa = axes_a[i], pb = axes_b[i];
    if (pa >= sa.size() || pb >= sb.size())
      throw std::invalid_argument("contract: axis out of range");
    if (used_a[pa] || used_b[pb])
      throw std::invalid_argument("contract: repeated axis");
    if (sa[pa] != sb[pb])
      throw std::invalid_argument("contract: paired axes have different sizes");
    used_a[pa] = used_b[pb] = true;
    k *= sa[pa];
  }

  std::vector<std::size_t> perm_a, perm_b, out_shape;
  std::size_t m = 1, n = 1;
  for (std::size_t i = 0; i < sa.size(); ++i)
    if (!used_a[i]) {
      perm_a.push_back(i);
      out_shape.push_back(sa[i]);
      m *= sa[i];
    }
  perm_a.insert(perm_a.end(), axes_a.begin(), axes_a.end());
  perm_b.insert(perm_b.end(), axes_b.begin(), axes_b.end());
  for (std::size_t i = 0; i < sb.size(); ++i)
    if (!used_b[i]) {
      perm_b.push_back(i);
      out_shape.push_back(sb[i]);
      n *= sb[i];
    }

  DenseTensor a2 = permute(a, perm_a);
  DenseTensor b2 = permute(b, perm_b);
  DenseTensor out(out_shape);
  matmul(m, n, k, a2.data(), b2.data(), out.data());
  return out;
}

DenseTensor contract(const DenseTensor& a, const DenseTensor& b,
                     std::initializer_list<std::size_t> axes_a,
                     std::initializer_list<std::size_t> axes_b) {
  return contract(a, b, std::span<const std::size_t>(axes_a.begin(), axes_a.size()),
                  std::span<const std::size_t>(axes_b.begin(), axes_b.size()));
}

DenseTensor add(const DenseTensor& a, const DenseTensor& b) {
  if (a.shape() != b.shape()) throw std::invalid_argument("add: shape mismatch");
  DenseTensor out = a;
  const double* pb = b.data();
  double* po = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) po[i] += pb[i];
  return out;
}

DenseTensor scale(DenseTensor t, double factor) {
  for (std::size_t i = 0; i < t.size(); ++i) t[i] *= factor;
  return t;
}

DenseTensor scale_axis(DenseTensor t, std::span<const double> weights, std::size_t axis) {
  const auto& shape = t.shape();
  if (axis >= shape.size()) throw std::invalid_argument("scale_axis: axis out of range");
  if (weights.size() != shape[axis])
    throw std::invalid_argument("scale_axis: weight length mismatch");
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
  double* p = t.data();
  const std::size_t d = shape[axis];
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t j = 0; j < d; ++j) {
      const double w = weights[j];
      double* row = p + (o * d + j) * inner;
      for (std::size_t i = 0; i < inner; ++i) row[i] *= w;
    }
  return t;
}

SvdResult svd_full(const DenseTensor& mat) {
  if (mat.rank() != 2) throw std::invalid_argument("svd_full: expects a matrix");
  const lapack_int m = static_cast<lapack_int>(mat.shape()[0]);
  const lapack_int n = static_cast<lapack_int>(mat.shape()[1]);
  const lapack_int k = std::min(m, n);

  SvdResult r;
  r.u = DenseTensor({static_cast<std::size_t>(m), static_cast<std::size_t>(k)});
  r.s.resize(k);
  r.vt = DenseTensor({static_cast<std::size_t>(k), static_cast<std::size_t>(n)});

  std::vector<double> work = mat.vec();
  lapack_int info = LAPACKE_dgesdd(LAPACK_ROW_MAJOR, 'S', m, n, work.data(), n,
                                   r.s.data(), r.u.data(), k, r.vt.data(), n);
  if (info != 0) {
    // dgesdd occasionally fails to converge; dgesvd is slower but sturdier.
    work = mat.vec();
    std::vector<double> superb(std::max<lapack_int>(1, k - 1));
    info = LAPACKE_dgesvd(LAPACK_ROW_MAJOR, 'S', 'S', m, n, work.data(), n,
                          r.s.data(), r.u.data(), k, r.vt.data(), n, superb.data());
    if (info != 0) throw std::runtime_error("svd_full: LAPACK did not converge");
  }
  return r;
}

TruncationResult svd_truncate(const DenseTensor& t, std::size_t n_left_axes,
                              std::size_t chi, double cutoff) {
  if (chi < 1) throw std::invalid_argument("svd_truncate: chi must be >= 1");
  if (cutoff < 0) throw std::invalid_argument("svd_truncate: cutoff must be >= 0");
  const auto& shape = t.shape();
  if (n_left_axes == 0 || n_left_axes >= shape.size())
    throw std::invalid_argument("svd_truncate: axis split out of range");

  std::vector<std::size_t> left_shape(shape.begin(), shape.begin() + n_left_axes);
  std::vector<std::size_t> right_shape(shape.begin() + n_left_axes, shape.end());
  std::size_t m = shape_product(left_shape), n = shape_product(right_shape);

  SvdResult svd = svd_full(reshape(t, {m, n}));
  const std::size_t kmax = svd.s.size();
  if (kmax == 0 || !(svd.s[0] > 0))
    throw std::runtime_error("svd_truncate: input has no nonzero singular value");

  const double threshold = cutoff * svd.s[0];
  std::size_t keep = 0;
  while (keep < kmax && keep < chi && svd.s[keep] > threshold) ++keep;
  if (keep == 0) keep = 1;

  double total = 0, dropped = 0;
  for (std::size_t i = 0; i < kmax; ++i) {
    const double w = svd.s[i] * svd.s[i];
    total += w;
    if (i >= keep) dropped += w;
  }

  TruncationResult res;
  res.weights.assign(svd.s.begin(), svd.s.begin() + keep);
  res.discarded_weight = total > 0 ? dropped / total : 0.0;

  // Slice kept columns of U and rows of V^T.
  DenseTensor u({m, keep});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < keep; ++j) u[i * keep + j] = svd.u[i * kmax + j];
  DenseTensor vt({keep, n}, std::vector<double>(svd.vt.data(), svd.vt.data() + keep * n));

  left_shape.push_back(keep);
  right_shape.insert(right_shape.begin(), keep);
  res.left = reshape(std::move(u), std::move(left_shape));
  res.right = reshape(std::move(vt), std::move(right_shape));
  if (!res.left.all_finite() || !res.right.all_finite())
    throw std::runtime_error("svd_truncate: non-finite factor");
  return res;
}

void matmul(std::size_t m, std::size_t n, std::size_t k, const double* a,
            const double* b, double* c) {
  if (m == 0 || n == 0) return;
  if (k == 0) {
    std::fill(c, c + m * n, 0.0);
    return;
  }
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, static_cast<int>(m),
              static_cast<int>(n), static_cast<int>(k), 1.0, a, static_cast<int>(k),
              b, static_cast<int>(n), 0.0, c, static_cast<int>(n));
}

namespace {
std::atomic<int> g_threads{1};
}

void set_kernel_threads(int n) {
  if (n < 1) n = 1;
  g_threads = n;
  openblas_set_num_threads(n);
}

int kernel_threads() { return g_threads.load(); }

}  // namespace pepsvqe
