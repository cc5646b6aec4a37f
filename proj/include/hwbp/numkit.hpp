#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

// Minimal dense float64 numerics used by every module above: vectors,
// row-major matrices, elementwise algebra, and a counter-based PRNG whose
// streams are reproducible across platforms and call orders.

namespace hwbp {

struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ContractError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct CapacityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class Vec64 {
 public:
  Vec64() = default;
  explicit Vec64(std::size_t n, double fill = 0.0) : d_(n, fill) {}
  Vec64(std::initializer_list<double> xs) : d_(xs) {}

  std::size_t size() const { return d_.size(); }
  bool empty() const { return d_.empty(); }
  double operator[](std::size_t i) const { return d_[i]; }
  double& operator[](std::size_t i) { return d_[i]; }
  double* data() { return d_.data(); }
  const double* data() const { return d_.data(); }
  auto begin() { return d_.begin(); }
  auto end() { return d_.end(); }
  auto begin() const { return d_.begin(); }
  auto end() const { return d_.end(); }

  bool operator==(const Vec64&) const = default;

 private:
  std::vector<double> d_;
};

/// Row-major dense matrix. A 0x0 matrix doubles as a structural zero in the
/// cotangent algebra (see engine); every other use requires rows*cols > 0.
class Mat64 {
 public:
  Mat64() = default;
  Mat64(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), d_(rows * cols, fill) {}
  Mat64(std::size_t rows, std::size_t cols, std::initializer_list<double> xs)
      : rows_(rows), cols_(cols), d_(xs) {
    if (d_.size() != rows * cols) throw ShapeError("Mat64: init list size mismatch");
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return d_.size(); }
  bool empty() const { return d_.empty(); }

  double operator()(std::size_t r, std::size_t c) const { return d_[r * cols_ + c]; }
  double& operator()(std::size_t r, std::size_t c) { return d_[r * cols_ + c]; }
  double* row(std::size_t r) { return d_.data() + r * cols_; }
  const double* row(std::size_t r) const { return d_.data() + r * cols_; }
  double* data() { return d_.data(); }
  const double* data() const { return d_.data(); }

  bool same_shape(const Mat64& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
  bool operator==(const Mat64&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> d_;
};

// ---- Vec64 algebra ----

Vec64 vec_mat(const Vec64& v, const Mat64& m);       // row vector times matrix
Vec64 hadamard(const Vec64& a, const Vec64& b);
Vec64 add(const Vec64& a, const Vec64& b);
double dot(const Vec64& a, const Vec64& b);
double l2_norm(const Vec64& a);

// ---- Mat64 algebra ----

Mat64 matmul(const Mat64& a, const Mat64& b);        // [n,k]x[k,m] -> [n,m]
Mat64 matmul_nt(const Mat64& a, const Mat64& b);     // a * b^T : [n,k]x[m,k] -> [n,m]
Mat64 matmul_tn(const Mat64& a, const Mat64& b);     // a^T * b : [k,n]x[k,m] -> [n,m]
Mat64 hadamard(const Mat64& a, const Mat64& b);
Mat64 add(const Mat64& a, const Mat64& b);
Mat64 sub(const Mat64& a, const Mat64& b);
Mat64 scale(const Mat64& a, double c);
void add_inplace(Mat64& dst, const Mat64& src);
void axpy_inplace(Mat64& dst, double a, const Mat64& x);  // dst += a*x
void hadamard_inplace(Mat64& dst, const Mat64& src);
Mat64 col_sums(const Mat64& a);                      // -> [1,cols]
double dot(const Mat64& a, const Mat64& b);
double l2_norm(const Mat64& a);
double max_abs(const Mat64& a);
bool all_finite(const Mat64& a);

/// Horizontal concat [a | b] with equal row counts; either side may be 0-col.
Mat64 hcat(const Mat64& a, const Mat64& b);
/// Column slice [r, c0:c0+n).
Mat64 col_slice(const Mat64& a, std::size_t c0, std::size_t n);
/// Writes src into dst's columns [c0, c0+src.cols()).
void col_assign(Mat64& dst, std::size_t c0, const Mat64& src);

// ---- Rng ----

/// Counter-based splitmix64 stream. Identical seeds give identical streams on
/// every platform; fork() derives independent streams so parallel parameter
/// initialization is order-independent.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  double next_uniform();                 // (0, 1]
  double next_normal();                  // N(0, 1), Box-Muller
  std::uint64_t next_below(std::uint64_t n);

  Vec64 normal_vec(std::size_t n, double scl);
  Mat64 normal_mat(std::size_t rows, std::size_t cols, double scl);
  Mat64 uniform_mat(std::size_t rows, std::size_t cols);  // entries in (0,1]

  Rng fork(std::uint64_t stream) const;
  Rng fork(const std::string& stream) const;

 private:
  std::uint64_t seed0_;
  std::uint64_t state_;
};

std::uint64_t fnv1a64(const std::string& s);

/// n draws from N(0, scale^2); deterministic given the rng state and call order.
Vec64 rng_normal(Rng& rng, std::size_t n, double scl);

// ---- ThreadPool ----

/// Persistent worker pool for parallel maps with disjoint writes. Results are
/// deterministic for any worker count because no cross-index reduction exists.
class ThreadPool {
 public:
  explicit ThreadPool(unsigned workers);
  ~ThreadPool();
  ThreadPool(const ThreadPool&) = delete;
  ThreadPool& operator=(const ThreadPool&) = delete;

  unsigned size() const { return workers_; }
  template <typename Fn>
  void parallel_for(std::size_t n, Fn&& fn) {
    run_indexed(n, [&fn](std::size_t i) { fn(i); });
  }

  /// Process-wide pool; worker count from HWBP_THREADS or hardware_concurrency.
  static ThreadPool& global();

 private:
  void run_indexed(std::size_t n, const std::function<void(std::size_t)>& fn);
  struct Impl;
  Impl* impl_;
  unsigned workers_;
};

}  // namespace hwbp
