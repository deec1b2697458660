#include "fluoro/parallel.hpp"
#include "fluoro/random.hpp"

#include <doctest.h>

#include <atomic>
#include <cmath>

using namespace fluoro;

TEST_SUITE("random") {
  TEST_CASE("streams are reproducible and distinct") {
    Rng a(5), b(5), c(6);
    bool differs = false;
    for (int i = 0; i < 100; ++i) {
      const auto x = a.next_u64();
      CHECK(x == b.next_u64());
      differs |= x != c.next_u64();
    }
    CHECK(differs);
    CHECK(derive_seed({1, 2}) != derive_seed({2, 1}));
    CHECK(derive_seed({1, 2}) == derive_seed({1, 2}));
  }

  TEST_CASE("distribution moments") {
    Rng rng(11);
    const int n = 200000;
    double su = 0, sn = 0, sn2 = 0, sp = 0, sp2 = 0, sbig = 0;
    for (int i = 0; i < n; ++i) {
      const double u = rng.uniform();
      CHECK_FALSE((u < 0.0 || u >= 1.0));
      su += u;
      const double z = rng.normal();
      sn += z;
      sn2 += z * z;
      const double p = static_cast<double>(rng.poisson(3.5));
      sp += p;
      sp2 += p * p;
      sbig += static_cast<double>(rng.poisson(400.0));
    }
    CHECK(su / n == doctest::Approx(0.5).epsilon(0.01));
    CHECK(std::abs(sn / n) < 0.01);
    CHECK(sn2 / n == doctest::Approx(1.0).epsilon(0.01));
    CHECK(sp / n == doctest::Approx(3.5).epsilon(0.01));
    CHECK(sp2 / n - (sp / n) * (sp / n) == doctest::Approx(3.5).epsilon(0.02));
    CHECK(sbig / n == doctest::Approx(400.0).epsilon(0.002));
  }

  TEST_CASE("unit vectors are isotropic") {
    Rng rng(12);
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    Eigen::Matrix3d second = Eigen::Matrix3d::Zero();
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
      const Eigen::Vector3d v = rng.unit_vector();
      CHECK(v.norm() == doctest::Approx(1.0));
      mean += v;
      second += v * v.transpose();
    }
    CHECK((mean / n).norm() < 0.01);
    CHECK(((second / n) - Eigen::Matrix3d::Identity() / 3.0).cwiseAbs().maxCoeff() < 0.01);
  }

  TEST_CASE("parallel_for covers every index and rethrows") {
    std::vector<int> hits(1000, 0);
    parallel_for(hits.size(), [&](std::size_t i) { hits[i] += 1; }, 4);
    CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
    CHECK_THROWS_AS(parallel_for(10, [](std::size_t i) { if (i == 7) throw std::runtime_error("x"); }, 3),
                    std::runtime_error);
  }
}
