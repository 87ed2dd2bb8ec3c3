#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace pepsvqe {

// Dense real-valued tensor, row-major storage.
//
// All tensor-network kernels in this project work on real scalars only:
// the SO(4) gate set, the TFIM Hamiltonian in the computational basis and
// the product initial states are all real, so complex storage would double
// memory and halve throughput for nothing.
class DenseTensor {
 public:
  DenseTensor() = default;
  explicit DenseTensor(std::vector<std::size_t> shape);
  DenseTensor(std::vector<std::size_t> shape, std::vector<double> data);

  static DenseTensor scalar(double v);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& vec() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // Multi-index access; convenience for small tensors and tests.
  double& at(std::initializer_list<std::size_t> idx);
  double at(std::initializer_list<std::size_t> idx) const;

  bool all_finite() const;
  double max_abs() const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

std::vector<std::size_t> strides_of(const std::vector<std::size_t>& shape);

// Rearranges axes: out axis k corresponds to in axis perm[k].
DenseTensor permute(const DenseTensor& t, std::span<const std::size_t> perm);
DenseTensor permute(const DenseTensor& t, std::initializer_list<std::size_t> perm);

// Reinterprets the flat data under a new shape of equal total size.
DenseTensor reshape(DenseTensor t, std::vector<std::size_t> new_shape);

// Pairwise contraction over the given axis pairs. Result axes are the free
// axes of `a` (in order) followed by the free axes of `b`. Realized as
// permute -> reshape -> dgemm.
DenseTensor contract(const DenseTensor& a, const DenseTensor& b,
                     std::span<const std::size_t> axes_a,
                     std::span<const std::size_t> axes_b);
DenseTensor contract(const DenseTensor& a, const DenseTensor& b,
                     std::initializer_list<std::size_t> axes_a,
                     std::initializer_list<std::size_t> axes_b);

DenseTensor add(const DenseTensor& a, const DenseTensor& b);
DenseTensor scale(DenseTensor t, double factor);

// Multiplies every slice along `axis` by weights[i_axis].
DenseTensor scale_axis(DenseTensor t, std::span<const double> weights, std::size_t axis);

struct SvdResult {
  DenseTensor u;               // m x k
  std::vector<double> s;       // k, nonincreasing
  DenseTensor vt;              // k x n
};

// Thin SVD of a matrix-shaped tensor. Throws on LAPACK failure.
SvdResult svd_full(const DenseTensor& m);

struct TruncationResult {
  DenseTensor left;            // [left axes..., k]
  std::vector<double> weights; // k kept singular values, nonincreasing
  DenseTensor right;           // [k, right axes...]
  double discarded_weight = 0; // sum of squared dropped values / total
};

// Splits t's axes into the first n_left_axes vs the rest, takes the best
// rank-<=chi approximation and drops singular values below cutoff (relative
// to the largest). Default relative cutoff used across the project is
// kSvdCutoff.
TruncationResult svd_truncate(const DenseTensor& t, std::size_t n_left_axes,
                              std::size_t chi, double cutoff);

inline constexpr double kSvdCutoff = 1e-12;

// C (m x n) = A (m x k) * B (k x n), row-major.
void matmul(std::size_t m, std::size_t n, std::size_t k, const double* a,
            const double* b, double* c);

// Kernel thread control. Timing-sensitive code pins this to 1.
void set_kernel_threads(int n);
int kernel_threads();

}  // namespace pepsvqe
