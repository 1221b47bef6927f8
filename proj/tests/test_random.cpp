#include <doctest.h>

#include <boost/math/special_functions/digamma.hpp>

#include <cmath>
#include <numeric>
#include <vector>

#include "rdbn/errors.hpp"
#include "rdbn/random.hpp"

using namespace rdbn;

namespace {

constexpr int kDraws = 100000;

RngStream stream(std::uint64_t id) {
  return RngStream(12345, stream_key(StreamFamily::test, id));
}

struct Summary {
  double mean = 0.0;
  double var = 0.0;
  double se() const { return std::sqrt(var / kDraws); }
};

template <class Draw>
Summary summarise(Draw draw) {
  double sum = 0.0, sq = 0.0;
  for (int r = 0; r < kDraws; ++r) {
    const double x = draw();
    sum += x;
    sq += x * x;
  }
  Summary s;
  s.mean = sum / kDraws;
  s.var = (sq - kDraws * s.mean * s.mean) / (kDraws - 1);
  return s;
}

} // namespace

TEST_CASE("streams are reproducible and distinct") {
  RngStream a(7, 3), b(7, 3), c(7, 4), d(8, 3);
  std::vector<std::uint64_t> va, vb, vc, vd;
  for (int r = 0; r < 16; ++r) {
    va.push_back(a());
    vb.push_back(b());
    vc.push_back(c());
    vd.push_back(d());
  }
  CHECK(va == vb);
  CHECK(va != vc);
  CHECK(va != vd);
  CHECK(stream_key(StreamFamily::membership, 1, 2, 3, 4) !=
        stream_key(StreamFamily::membership, 1, 2, 4, 3));
  CHECK(stream_key(StreamFamily::membership, 1) ==
        stream_key(StreamFamily::membership, 1, 0, 0, 0));
}

TEST_CASE("uniform is on the open interval") {
  auto rng = stream(1);
  for (int r = 0; r < 10000; ++r) {
    const double u = rng.uniform();
    REQUIRE(u > 0.0);
    REQUIRE(u < 1.0);
  }
}

TEST_CASE("gamma") {
  auto rng = stream(2);
  const auto unit = summarise([&] { return sample_gamma(1.0, 1.0, rng); });
  CHECK(unit.mean == doctest::Approx(1.0).epsilon(0.02));
  const auto s = summarise([&] { return sample_gamma(3.0, 2.0, rng); });
  CHECK(std::abs(s.mean - 6.0) < 3 * s.se());
  CHECK(std::abs(s.var - 12.0) < 0.5);
  // small shapes go through the log-space path
  const auto tiny = summarise([&] { return sample_gamma(0.3, 2.0, rng); });
  CHECK(std::abs(tiny.mean - 0.6) < 3 * tiny.se());

  CHECK_THROWS_AS(sample_gamma(0.0, 1.0, rng), ParameterError);
  CHECK_THROWS_AS(sample_gamma(1.0, 0.0, rng), ParameterError);
  CHECK_THROWS_AS(sample_gamma(-1.0, 1.0, rng), ParameterError);
}

TEST_CASE("log gamma stays finite for tiny shapes") {
  auto rng = stream(3);
  for (int r = 0; r < 1000; ++r) {
    const double lg = sample_log_gamma(1e-4, rng);
    REQUIRE(std::isfinite(lg));
  }
  const auto s = summarise([&] { return sample_log_gamma(0.5, rng); });
  // E log G = digamma(shape)
  CHECK(std::abs(s.mean - boost::math::digamma(0.5)) < 3 * s.se());
}

TEST_CASE("dirichlet") {
  auto rng = stream(4);
  const std::vector<double> one{5.0};
  CHECK(sample_dirichlet(one, rng) == std::vector<double>{1.0});

  const std::vector<double> conc{2.0, 2.0};
  double m0 = 0.0;
  for (int r = 0; r < kDraws; ++r) {
    const auto p = sample_dirichlet(conc, rng);
    REQUIRE(std::abs(p[0] + p[1] - 1.0) < 1e-12);
    m0 += p[0];
  }
  CHECK(m0 / kDraws == doctest::Approx(0.5).epsilon(0.02));

  const std::vector<double> with_zero{0.0, 1e-3, 0.0, 2e-3};
  for (int r = 0; r < 1000; ++r) {
    const auto p = sample_dirichlet(with_zero, rng);
    REQUIRE(p[0] == 0.0);
    REQUIRE(p[2] == 0.0);
    REQUIRE(std::abs(std::accumulate(p.begin(), p.end(), 0.0) - 1.0) < 1e-12);
  }
  const std::vector<double> zeros{0.0, 0.0};
  CHECK_THROWS_AS(sample_dirichlet(zeros, rng), NumericalError);
  CHECK_THROWS_AS(sample_dirichlet(std::vector<double>{}, rng), ParameterError);
}

TEST_CASE("beta") {
  auto rng = stream(5);
  const auto u = summarise([&] { return sample_beta(1.0, 1.0, rng); });
  CHECK(std::abs(u.mean - 0.5) < 0.01);
  const auto b = summarise([&] { return sample_beta(2.0, 6.0, rng); });
  CHECK(std::abs(b.mean - 0.25) < 0.01);
  CHECK_THROWS_AS(sample_beta(0.0, 1.0, rng), ParameterError);
  CHECK_THROWS_AS(sample_beta(1.0, 0.0, rng), ParameterError);
  const auto lb = summarise([&] { return std::exp(sample_log_beta(2.0, 6.0, rng)); });
  CHECK(std::abs(lb.mean - 0.25) < 3 * lb.se());
}

TEST_CASE("multinomial") {
  auto rng = stream(6);
  const std::vector<double> single{1.0};
  CHECK(sample_multinomial(7, single, rng) == std::vector<std::int64_t>{7});
  const std::vector<double> two{0.3, 0.7};
  CHECK(sample_multinomial(0, two, rng) == std::vector<std::int64_t>{0, 0});

  const std::vector<double> three{0.2, 0.3, 0.5};
  const auto c = sample_multinomial(100000, three, rng);
  CHECK(c[0] + c[1] + c[2] == 100000);
  for (int k = 0; k < 3; ++k) {
    CHECK(std::abs(static_cast<double>(c[k]) / 100000 - three[k]) < 0.01);
  }
  CHECK_THROWS_AS(sample_multinomial(-1, two, rng), ParameterError);
  const std::vector<double> bad{0.3, 0.3};
  CHECK_THROWS_AS(sample_multinomial(3, bad, rng), ParameterError);

  // weighted form conserves mass for arbitrary totals
  const std::vector<double> w{0.0, 2.5, 1e-300, 7.0};
  std::vector<std::int64_t> out(4);
  for (int r = 0; r < 1000; ++r) {
    sample_multinomial_weighted(37, w, 9.5, out, rng);
    REQUIRE(std::accumulate(out.begin(), out.end(), std::int64_t{0}) == 37);
    REQUIRE(out[0] == 0);
  }
}

TEST_CASE("crt") {
  auto rng = stream(7);
  CHECK(sample_crt(0, 2.0, rng) == 0);
  for (int r = 0; r < 100; ++r) REQUIRE(sample_crt(1, 5.0, rng) == 1);
  const auto s = summarise([&] { return static_cast<double>(sample_crt(5, 1.0, rng)); });
  CHECK(std::abs(s.mean - 2.283333) < 0.02);
  for (double a : {0.5, 1.0, 5.0}) {
    for (int m : {1, 3, 20}) {
      const auto c = summarise([&] { return static_cast<double>(sample_crt(m, a, rng)); });
      const double expect = a * (boost::math::digamma(a + m) - boost::math::digamma(a));
      CHECK_MESSAGE(std::abs(c.mean - expect) <= 3 * c.se() + 1e-12, "a=", a, " m=", m);
    }
  }
  for (int r = 0; r < 1000; ++r) {
    const auto y = sample_crt(9, 0.7, rng);
    REQUIRE(y >= 1);
    REQUIRE(y <= 9);
  }
  CHECK_THROWS_AS(sample_crt(3, 0.0, rng), ParameterError);
}

TEST_CASE("zero-truncated poisson") {
  auto rng = stream(8);
  int ones = 0;
  for (int r = 0; r < 1000; ++r) ones += sample_ztp(1e-9, rng) == 1;
  CHECK(ones == 1000);
  const auto s = summarise([&] { return static_cast<double>(sample_ztp(2.0, rng)); });
  CHECK(std::abs(s.mean - 2.0 / (1.0 - std::exp(-2.0))) < 0.02);
  const auto small = summarise([&] { return static_cast<double>(sample_ztp(0.3, rng)); });
  CHECK(std::abs(small.mean - 0.3 / (1.0 - std::exp(-0.3))) < 3 * small.se());
  for (int r = 0; r < 1000; ++r) REQUIRE(sample_ztp(0.01, rng) >= 1);
  CHECK_THROWS_AS(sample_ztp(0.0, rng), ParameterError);
}

TEST_CASE("poisson") {
  auto rng = stream(9);
  CHECK(sample_poisson(0.0, rng) == 0);
  const auto s = summarise([&] { return static_cast<double>(sample_poisson(4.0, rng)); });
  CHECK(std::abs(s.mean - 4.0) < 0.05);
  CHECK(std::abs(s.var - 4.0) < 0.1);
  CHECK_THROWS_AS(sample_poisson(-1.0, rng), ParameterError);
}

TEST_CASE("categorical") {
  auto rng = stream(10);
  const std::vector<double> one{0.0, 3.0, 0.0};
  for (int r = 0; r < 100; ++r) REQUIRE(sample_categorical(one, rng) == 1);
  const std::vector<double> even{1.0, 1.0};
  int zeros = 0;
  for (int r = 0; r < kDraws; ++r) zeros += sample_categorical(even, rng) == 0;
  CHECK(std::abs(static_cast<double>(zeros) / kDraws - 0.5) < 0.01);
  CHECK_THROWS_AS(sample_categorical(std::vector<double>{}, rng), ParameterError);
  CHECK_THROWS_AS(sample_categorical(std::vector<double>{0.0, 0.0}, rng),
                  ParameterError);
}
