#include <doctest.h>

#include "fixtures.hpp"
#include "ndt/kswin.hpp"

using namespace ndt;

namespace {

// Evaluates both ECDFs at every pooled sample point by counting.
double ecdf_oracle(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> pts(a);
  pts.insert(pts.end(), b.begin(), b.end());
  double d = 0.0;
  for (double x : pts) {
    const double fa = static_cast<double>(std::count_if(a.begin(), a.end(), [x](double v) { return v <= x; })) /
                      static_cast<double>(a.size());
    const double fb = static_cast<double>(std::count_if(b.begin(), b.end(), [x](double v) { return v <= x; })) /
                      static_cast<double>(b.size());
    d = std::max(d, std::abs(fa - fb));
  }
  return d;
}

}  // namespace

TEST_CASE("ks statistic examples") {
  const std::vector<double> a{1, 2, 3}, b{1.5, 2.5, 3.5};
  CHECK(ks_statistic(a, b) == doctest::Approx(1.0 / 3.0));
  CHECK(ks_statistic(a, a) == 0.0);
  CHECK(ks_statistic(a, std::vector<double>{10, 11}) == 1.0);
  CHECK_THROWS(ks_statistic(a, std::vector<double>{}));
}

TEST_CASE("ks statistic matches the ECDF oracle, including ties") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 300; ++trial) {
    const auto n = std::uniform_int_distribution<std::size_t>(1, 50)(rng);
    const auto m = std::uniform_int_distribution<std::size_t>(1, 50)(rng);
    // Coarse grid on half the trials forces ties.
    const bool grid = trial % 2 == 0;
    auto draw = [&] {
      const double v = std::normal_distribution<double>(0, 1)(rng);
      return grid ? std::round(v * 3) : v;
    };
    std::vector<double> a(n), b(m);
    for (auto& v : a) v = draw();
    for (auto& v : b) v = draw();
    const double d = ks_statistic(a, b);
    CHECK(d == ecdf_oracle(a, b));
    CHECK(d == ks_statistic(b, a));
    CHECK(d >= 0.0);
    CHECK(d <= 1.0);
  }
}

TEST_CASE("ks p-value") {
  CHECK(ks_pvalue(0.0, 30, 30) == 1.0);
  CHECK(ks_pvalue(1.0, 30, 30) < 1e-9);
  double prev = 1.0;
  for (double d = 0.0; d <= 1.0; d += 0.01) {
    const double p = ks_pvalue(d, 30, 30);
    CHECK(p <= prev);
    CHECK(p >= 0.0);
    prev = p;
  }
  // Kolmogorov distribution at lambda = 1.36: about 0.049.
  const double en = std::sqrt(900.0 / 60.0);
  CHECK(ks_pvalue(1.36 / (en + 0.12 + 0.11 / en), 30, 30) == doctest::Approx(0.0494).epsilon(0.01));
}

TEST_CASE("detector configuration") {
  KswinConfig c;
  CHECK(c.alpha == 0.001);
  CHECK_NOTHROW(c.validate());
  c.alpha = 1.0;
  CHECK_THROWS(c.validate());
  c = {};
  c.stat_size = 4;
  CHECK_THROWS(c.validate());
  c = {};
  c.window_size = 50;
  CHECK_THROWS(c.validate());
  c.window_size = 60;
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("detector behaviour") {
  KswinConfig c;
  c.window_size = 100;
  c.stat_size = 30;
  KswinDetector det(c);
  for (int i = 0; i < 500; ++i) CHECK(!det.update(7.0).has_value());

  KswinDetector fresh(c);
  for (int i = 0; i < 99; ++i) CHECK(!fresh.update(i % 2 == 0 ? 1.0 : 1000.0 * i).has_value());
  CHECK(fresh.window_fill() == 99);

  KswinDetector sw(c);
  std::optional<DriftEvent> ev;
  int at = -1;
  for (int i = 0; i < 400 && !ev; ++i) {
    ev = sw.update(i < 200 ? 1.0 : 5.0);
    at = i;
  }
  REQUIRE(ev.has_value());
  CHECK(at >= 200);
  CHECK(at - 200 <= 100);
  CHECK(ev->sample_index == at);
  CHECK(ev->p_value <= c.alpha);
  CHECK(ev->statistic > 0.0);
  CHECK(ev->statistic <= 1.0);
  CHECK(sw.window_fill() == c.stat_size);
}

TEST_CASE("one abrupt change yields one event") {
  KswinConfig c;
  c.seed = 4;
  KswinDetector det(c);
  Rng rng(1);
  std::exponential_distribution<double> e1(1.0), e2(0.1);
  int events = 0;
  for (int i = 0; i < 2000; ++i) events += det.update(i < 1000 ? e1(rng) : e2(rng)).has_value();
  CHECK(events >= 1);
  CHECK(events <= 2);
}

TEST_CASE("detector is reproducible per seed") {
  KswinConfig c;
  c.window_size = 60;
  c.seed = 12;
  auto run = [&] {
    KswinDetector det(c);
    Rng rng(3);
    std::uniform_real_distribution<double> u;
    std::vector<std::int64_t> hits;
    for (int i = 0; i < 3000; ++i) {
      if (auto e = det.update(u(rng) + (i > 1500 ? 0.5 : 0.0))) hits.push_back(e->sample_index);
    }
    return hits;
  };
  CHECK(run() == run());
}
