#include "hwbp/numkit.hpp"

#include <atomic>
#include <cmath>
#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <thread>

namespace hwbp {

namespace {

void check_len(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw ShapeError(std::string(what) + ": length mismatch " + std::to_string(a) +
                     " vs " + std::to_string(b));
  }
}

void check_shape(const Mat64& a, const Mat64& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(what) + ": shape mismatch " + std::to_string(a.rows()) +
                     "x" + std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) +
                     "x" + std::to_string(b.cols()));
  }
}

}  // namespace

Vec64 vec_mat(const Vec64& v, const Mat64& m) {
  check_len(v.size(), m.rows(), "vec_mat");
  Vec64 out(m.cols(), 0.0);
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double vi = v[i];
    const double* mr = m.row(i);
    for (std::size_t j = 0; j < m.cols(); ++j) out[j] += vi * mr[j];
  }
  return out;
}

Vec64 hadamard(const Vec64& a, const Vec64& b) {
  check_len(a.size(), b.size(), "hadamard");
  Vec64 out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

Vec64 add(const Vec64& a, const Vec64& b) {
  check_len(a.size(), b.size(), "add");
  Vec64 out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

double dot(const Vec64& a, const Vec64& b) {
  check_len(a.size(), b.size(), "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double l2_norm(const Vec64& a) { return std::sqrt(dot(a, a)); }

Mat64 matmul(const Mat64& a, const Mat64& b) {
  if (a.cols() != b.rows()) throw ShapeError("matmul: inner dims differ");
  Mat64 c(a.rows(), b.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* ar = a.row(i);
    double* cr = c.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = ar[k];
      const double* br = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) cr[j] += aik * br[j];
    }
  }
  return c;
}

Mat64 matmul_nt(const Mat64& a, const Mat64& b) {
  if (a.cols() != b.cols()) throw ShapeError("matmul_nt: inner dims differ");
  Mat64 c(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* ar = a.row(i);
    double* cr = c.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const double* br = b.row(j);
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += ar[k] * br[k];
      cr[j] = s;
    }
  }
  return c;
}

Mat64 matmul_tn(const Mat64& a, const Mat64& b) {
  if (a.rows() != b.rows()) throw ShapeError("matmul_tn: inner dims differ");
  Mat64 c(a.cols(), b.cols(), 0.0);
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const double* ar = a.row(k);
    const double* br = b.row(k);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = ar[i];
      double* cr = c.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) cr[j] += aki * br[j];
    }
  }
  return c;
}

Mat64 hadamard(const Mat64& a, const Mat64& b) {
  check_shape(a, b, "hadamard");
  Mat64 out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
  return out;
}

Mat64 add(const Mat64& a, const Mat64& b) {
  check_shape(a, b, "add");
  Mat64 out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] + b.data()[i];
  return out;
}

Mat64 sub(const Mat64& a, const Mat64& b) {
  check_shape(a, b, "sub");
  Mat64 out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] - b.data()[i];
  return out;
}

Mat64 scale(const Mat64& a, double c) {
  Mat64 out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * c;
  return out;
}

void add_inplace(Mat64& dst, const Mat64& src) {
  check_shape(dst, src, "add_inplace");
  for (std::size_t i = 0; i < dst.size(); ++i) dst.data()[i] += src.data()[i];
}

void axpy_inplace(Mat64& dst, double a, const Mat64& x) {
  check_shape(dst, x, "axpy_inplace");
  for (std::size_t i = 0; i < dst.size(); ++i) dst.data()[i] += a * x.data()[i];
}

void hadamard_inplace(Mat64& dst, const Mat64& src) {
  check_shape(dst, src, "hadamard_inplace");
  for (std::size_t i = 0; i < dst.size(); ++i) dst.data()[i] *= src.data()[i];
}

Mat64 col_sums(const Mat64& a) {
  Mat64 out(1, a.cols(), 0.0);
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const double* ar = a.row(r);
    for (std::size_t c = 0; c < a.cols(); ++c) out.data()[c] += ar[c];
  }
  return out;
}

double dot(const Mat64& a, const Mat64& b) {
  check_shape(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.data()[i] * b.data()[i];
  return s;
}

double l2_norm(const Mat64& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.data()[i] * a.data()[i];
  return std::sqrt(s);
}

double max_abs(const Mat64& a) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a.data()[i]));
  return m;
}

bool all_finite(const Mat64& a) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!std::isfinite(a.data()[i])) return false;
  }
  return true;
}

Mat64 hcat(const Mat64& a, const Mat64& b) {
  if (b.cols() == 0) return a;
  if (a.cols() == 0) return b;
  if (a.rows() != b.rows()) throw ShapeError("hcat: row counts differ");
  Mat64 out(a.rows(), a.cols() + b.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    double* o = out.row(r);
    const double* ar = a.row(r);
    const double* br = b.row(r);
    for (std::size_t c = 0; c < a.cols(); ++c) o[c] = ar[c];
    for (std::size_t c = 0; c < b.cols(); ++c) o[a.cols() + c] = br[c];
  }
  return out;
}

Mat64 col_slice(const Mat64& a, std::size_t c0, std::size_t n) {
  if (c0 + n > a.cols()) throw ShapeError("col_slice: range out of bounds");
  Mat64 out(a.rows(), n);
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const double* ar = a.row(r) + c0;
    double* o = out.row(r);
    for (std::size_t c = 0; c < n; ++c) o[c] = ar[c];
  }
  return out;
}

void col_assign(Mat64& dst, std::size_t c0, const Mat64& src) {
  if (dst.rows() != src.rows() || c0 + src.cols() > dst.cols()) {
    throw ShapeError("col_assign: range out of bounds");
  }
  for (std::size_t r = 0; r < src.rows(); ++r) {
    double* d = dst.row(r) + c0;
    const double* s = src.row(r);
    for (std::size_t c = 0; c < src.cols(); ++c) d[c] = s[c];
  }
}

// ---- Rng ----

namespace {

// splitmix64 output mix; the stream state is a plain counter underneath.
std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace

Rng::Rng(std::uint64_t seed) : seed0_(seed), state_(mix64(seed ^ 0xA0761D6478BD642Full)) {}

std::uint64_t Rng::next_u64() {
  state_ += 0x9E3779B97F4A7C15ull;
  return mix64(state_);
}

double Rng::next_uniform() {
  // (0, 1]: never 0, so log() in Box-Muller is safe.
  return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
}

double Rng::next_normal() {
  const double u1 = next_uniform();
  const double u2 = next_uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  return r * std::cos(2.0 * 3.14159265358979323846 * u2);
}

std::uint64_t Rng::next_below(std::uint64_t n) {
  if (n == 0) throw ContractError("next_below: n must be positive");
  return static_cast<std::uint64_t>(
      (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
}

Vec64 Rng::normal_vec(std::size_t n, double scl) {
  Vec64 out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = scl * next_normal();
  return out;
}

Mat64 Rng::normal_mat(std::size_t rows, std::size_t cols, double scl) {
  Mat64 out(rows, cols);
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = scl * next_normal();
  return out;
}

Mat64 Rng::uniform_mat(std::size_t rows, std::size_t cols) {
  Mat64 out(rows, cols);
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = next_uniform();
  return out;
}

Rng Rng::fork(std::uint64_t stream) const {
  return Rng(mix64(seed0_ ^ mix64(stream ^ 0x8BB84B93962EACC9ull)));
}

Rng Rng::fork(const std::string& stream) const { return fork(fnv1a64(stream)); }

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

Vec64 rng_normal(Rng& rng, std::size_t n, double scl) {
  if (n == 0) throw ContractError("rng_normal: n must be positive");
  if (scl < 0.0) throw ContractError("rng_normal: scale must be >= 0");
  return rng.normal_vec(n, scl);
}

// ---- ThreadPool ----

struct ThreadPool::Impl {
  std::mutex mu;
  std::condition_variable cv_work;
  std::condition_variable cv_done;
  const std::function<void(std::size_t)>* job = nullptr;
  std::size_t job_n = 0;
  std::atomic<std::size_t> next{0};
  std::size_t pending = 0;   // workers still to finish current job
  std::uint64_t epoch = 0;
  bool stop = false;
  std::vector<std::thread> threads;

  void worker() {
    std::uint64_t seen = 0;
    for (;;) {
      const std::function<void(std::size_t)>* fn;
      {
        std::unique_lock<std::mutex> lk(mu);
        cv_work.wait(lk, [&] { return stop || epoch != seen; });
        if (stop) return;
        seen = epoch;
        fn = job;
      }
      for (;;) {
        const std::size_t i = next.fetch_add(1, std::memory_order_relaxed);
        if (i >= job_n) break;
        (*fn)(i);
      }
      {
        std::lock_guard<std::mutex> lk(mu);
        if (--pending == 0) cv_done.notify_one();
      }
    }
  }
};

ThreadPool::ThreadPool(unsigned workers) : impl_(new Impl), workers_(workers) {
  const unsigned extra = workers_ > 0 ? workers_ - 1 : 0;
  impl_->threads.reserve(extra);
  for (unsigned t = 0; t < extra; ++t) {
    impl_->threads.emplace_back([this] { impl_->worker(); });
  }
}

ThreadPool::~ThreadPool() {
  {
    std::lock_guard<std::mutex> lk(impl_->mu);
    impl_->stop = true;
  }
  impl_->cv_work.notify_all();
  for (auto& t : impl_->threads) t.join();
  delete impl_;
}

void ThreadPool::run_indexed(std::size_t n, const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  if (impl_->threads.empty() || n == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  {
    std::lock_guard<std::mutex> lk(impl_->mu);
    impl_->job = &fn;
    impl_->job_n = n;
    impl_->next.store(0, std::memory_order_relaxed);
    impl_->pending = impl_->threads.size();
    ++impl_->epoch;
  }
  impl_->cv_work.notify_all();
  // The calling thread works too.
  for (;;) {
    const std::size_t i = impl_->next.fetch_add(1, std::memory_order_relaxed);
    if (i >= n) break;
    fn(i);
  }
  std::unique_lock<std::mutex> lk(impl_->mu);
  impl_->cv_done.wait(lk, [&] { return impl_->pending == 0; });
}

ThreadPool& ThreadPool::global() {
  static ThreadPool pool([] {
    if (const char* env = std::getenv("HWBP_THREADS")) {
      const long v = std::strtol(env, nullptr, 10);
      if (v > 0) return static_cast<unsigned>(v);
    }
    const unsigned hc = std::thread::hardware_concurrency();
    return hc > 0 ? hc : 1u;
  }());
  return pool;
}

}  // namespace hwbp
