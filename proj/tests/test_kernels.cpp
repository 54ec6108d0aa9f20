#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "nlicl/error.hpp"
#include "nlicl/kernels.hpp"

namespace k = nlicl::kernels;

namespace {

std::vector<double> random_vector(std::mt19937_64& gen, std::size_t n) {
  std::normal_distribution<double> dist;
  std::vector<double> v(n);
  for (auto& x : v) x = dist(gen);
  return v;
}

// Plain loops; the reference everything else is compared against.
double naive_dot(const std::vector<double>& a, const std::vector<double>& b) {
  long double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<long double>(a[i]) * b[i];
  return static_cast<double>(s);
}

class IsaRestore : public ::testing::Test {
 protected:
  void SetUp() override { saved_ = k::active_isa(); }
  void TearDown() override { k::force_isa(saved_); }
  k::Isa saved_{};
};

}  // namespace

TEST(Kernels, ScalarMatchesNaive) {
  std::mt19937_64 gen(1);
  for (std::size_t n : {0, 1, 3, 4, 7, 16, 33, 256}) {
    auto a = random_vector(gen, n), b = random_vector(gen, n);
    EXPECT_NEAR(k::scalar::dot(a.data(), b.data(), n), naive_dot(a, b), 1e-12 * (1 + n));
    EXPECT_NEAR(k::scalar::sum_squares(a.data(), n), naive_dot(a, a), 1e-12 * (1 + n));
  }
}

#if defined(__x86_64__) || defined(_M_X64)
TEST(Kernels, Avx2MatchesScalar) {
  if (!k::isa_supported(k::Isa::kAvx2)) GTEST_SKIP() << "no AVX2 on this CPU";
  std::mt19937_64 gen(2);
  for (std::size_t n = 0; n < 70; ++n) {
    auto a = random_vector(gen, n), b = random_vector(gen, n);
    const double ref = k::scalar::dot(a.data(), b.data(), n);
    EXPECT_NEAR(k::avx2::dot(a.data(), b.data(), n), ref, 1e-12 * (1 + std::abs(ref))) << n;
    const double ss = k::scalar::sum_squares(a.data(), n);
    EXPECT_NEAR(k::avx2::sum_squares(a.data(), n), ss, 1e-12 * (1 + ss)) << n;

    auto y1 = b, y2 = b;
    k::scalar::axpy(-0.75, a.data(), y1.data(), n);
    k::avx2::axpy(-0.75, a.data(), y2.data(), n);
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(y1[i], y2[i], 1e-14) << n << ":" << i;
  }
}
#endif

#if defined(__aarch64__)
TEST(Kernels, NeonMatchesScalar) {
  std::mt19937_64 gen(2);
  for (std::size_t n = 0; n < 70; ++n) {
    auto a = random_vector(gen, n), b = random_vector(gen, n);
    const double ref = k::scalar::dot(a.data(), b.data(), n);
    EXPECT_NEAR(k::neon::dot(a.data(), b.data(), n), ref, 1e-12 * (1 + std::abs(ref)));
    auto y1 = b, y2 = b;
    k::scalar::axpy(0.5, a.data(), y1.data(), n);
    k::neon::axpy(0.5, a.data(), y2.data(), n);
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(y1[i], y2[i], 1e-14);
  }
}
#endif

TEST_F(IsaRestore, DispatchAgreesAcrossIsas) {
  std::mt19937_64 gen(3);
  const std::size_t rows = 9, cols = 37;
  auto m = random_vector(gen, rows * cols), x = random_vector(gen, cols);

  k::force_isa(k::Isa::kScalar);
  EXPECT_EQ(k::active_isa(), k::Isa::kScalar);
  std::vector<double> ref(rows);
  k::gemv(m, x, ref);
  for (std::size_t r = 0; r < rows; ++r) {
    std::vector<double> row(m.begin() + r * cols, m.begin() + (r + 1) * cols);
    EXPECT_NEAR(ref[r], naive_dot(row, x), 1e-12);
  }

  for (auto isa : {k::Isa::kAvx2, k::Isa::kNeon}) {
    if (!k::isa_supported(isa)) {
      EXPECT_THROW(k::force_isa(isa), nlicl::ConfigError);
      continue;
    }
    k::force_isa(isa);
    std::vector<double> out(rows);
    k::gemv(m, x, out);
    for (std::size_t r = 0; r < rows; ++r) EXPECT_NEAR(out[r], ref[r], 1e-12) << k::isa_name(isa);
  }
}

TEST(Kernels, SizeMismatchRejected) {
  std::vector<double> a(3), b(4);
  EXPECT_THROW(k::dot(a, b), nlicl::ConfigError);
}
