#include <cstring>
#include <string>
#include <random>
#include <vector>

#include "doctest.h"
#include "lgslam/kernels.hpp"

using namespace lgslam::kernels;

namespace {

struct Soa {
  std::vector<double> x, y, z;
};

Soa random_soa(std::size_t n, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  Soa s;
  for (std::size_t i = 0; i < n; ++i) {
    s.x.push_back(u(rng));
    s.y.push_back(u(rng));
    s.z.push_back(u(rng));
  }
  return s;
}

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("active kernel table is available") {
  const KernelTable& k = active_kernels();
  CHECK(k.name != nullptr);
  MESSAGE("active kernels: " << std::string(k.name));
}

TEST_CASE("SIMD kernels are bit-identical to the scalar reference") {
  const KernelTable* vec = avx2_kernels();
  if (vec == nullptr) {
    MESSAGE("AVX2 kernels unavailable on this machine; nothing to compare");
    return;
  }
  const KernelTable& ref = scalar_kernels();
  // Odd sizes exercise the scalar tail of the vector loops.
  for (std::size_t n : {0u, 1u, 3u, 4u, 5u, 17u, 1000u, 1023u}) {
    const Soa s = random_soa(n, static_cast<unsigned>(n) + 7);
    const double q[3] = {1.5, -2.25, 0.125};

    std::vector<double> a(n), b(n);
    ref.squared_distances(s.x.data(), s.y.data(), s.z.data(), n, q, a.data());
    vec->squared_distances(s.x.data(), s.y.data(), s.z.data(), n, q, b.data());
    CHECK(bit_equal(a, b));

    for (double r2 : {0.0, 100.0, 900.0, 1e9}) {
      CHECK(ref.count_within(s.x.data(), s.y.data(), s.z.data(), n, q, r2) ==
            vec->count_within(s.x.data(), s.y.data(), s.z.data(), n, q, r2));
    }

    const double rot[9] = {0.36, 0.48, -0.8, -0.8, 0.6, 0.0, 0.48, 0.64, 0.6};
    const double t[3] = {3.0, -1.0, 0.5};
    std::vector<double> ax(n), ay(n), az(n), bx(n), by(n), bz(n);
    ref.transform_points(rot, t, s.x.data(), s.y.data(), s.z.data(), n, ax.data(), ay.data(), az.data());
    vec->transform_points(rot, t, s.x.data(), s.y.data(), s.z.data(), n, bx.data(), by.data(), bz.data());
    CHECK(bit_equal(ax, bx));
    CHECK(bit_equal(ay, by));
    CHECK(bit_equal(az, bz));
  }
}

TEST_CASE("scalar kernels compute the defined quantities") {
  const double x[] = {0.0, 3.0}, y[] = {0.0, 4.0}, z[] = {0.0, 0.0};
  const double q[3] = {0.0, 0.0, 0.0};
  double out[2];
  scalar_kernels().squared_distances(x, y, z, 2, q, out);
  CHECK(out[0] == 0.0);
  CHECK(out[1] == 25.0);
  CHECK(scalar_kernels().count_within(x, y, z, 2, q, 25.0) == 2);
  CHECK(scalar_kernels().count_within(x, y, z, 2, q, 24.9) == 1);
}
