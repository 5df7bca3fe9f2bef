#include <doctest.h>

#include "fixtures.hpp"
#include "ndt/evaluation.hpp"

using namespace ndt;

TEST_CASE("nmse examples") {
  const std::vector<double> y{1, 2};
  CHECK(nmse_db(y, std::vector<double>{0, 0}) == 0.0);
  CHECK(nmse_db(y, y) == kPerfectNmse);
  CHECK(nmse_db(y, std::vector<double>{1.1, 1.9}) == doctest::Approx(-23.979).epsilon(1e-4));
  CHECK_THROWS(nmse_db(std::vector<double>{0, 0}, y));
  CHECK_THROWS(nmse_db(y, std::vector<double>{1}));
}

TEST_CASE("nmse is scale invariant") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.1, 2.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> y(20), yh(20), ys(20), yhs(20);
    const double c = u(rng) * 100;
    for (int i = 0; i < 20; ++i) {
      y[i] = u(rng);
      yh[i] = u(rng);
      ys[i] = c * y[i];
      yhs[i] = c * yh[i];
    }
    CHECK(nmse_db(ys, yhs) == doctest::Approx(nmse_db(y, yh)).epsilon(1e-12));
    CHECK(nmse_db(y, std::vector<double>(20, 0.0)) == doctest::Approx(0.0));
  }
}

TEST_CASE("improvement from dB values") {
  CHECK(nmse_improvement(-13.0, -10.0) == doctest::Approx(1.0 - std::pow(10.0, -0.3)));
  CHECK(nmse_improvement(-10.0, -10.0) == 0.0);
  CHECK(nmse_improvement(-20.0, -10.0) == doctest::Approx(0.9));
}

TEST_CASE("windowed nmse") {
  std::vector<double> y(250), yh(250);
  for (int i = 0; i < 250; ++i) {
    y[i] = 1.0 + i % 7;
    yh[i] = y[i] * 0.9;
  }
  const auto w = windowed_nmse(y, yh, 100);
  REQUIRE(w.size() == 3);
  CHECK(w[0].size == 100);
  CHECK(w[1].size == 100);
  CHECK(w[2].size == 50);
  CHECK(!w[1].partial);
  CHECK(w[2].partial);
  CHECK(w[2].first_sample == 200);
  for (const auto& x : w) CHECK(x.nmse_db == doctest::Approx(-20.0));

  // Chunked delivery.
  WindowedNmse chunked(100);
  std::size_t at = 0;
  for (std::size_t len : {1, 37, 100, 3, 109}) {
    chunked.push(std::span<const double>(y).subspan(at, len), std::span<const double>(yh).subspan(at, len));
    at += len;
  }
  chunked.finish();
  REQUIRE(chunked.windows().size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(chunked.windows()[i].nmse_db == w[i].nmse_db);
    CHECK(chunked.windows()[i].size == w[i].size);
  }
  CHECK_THROWS(WindowedNmse(0));
}

TEST_CASE("pdb assignment") {
  const TopologyGraph g("p", {0, 1, 2}, {fx::link(0, 0, 1, 1e6, 4e-3), fx::link(1, 1, 2, 1e6, 6e-3), fx::link(2, 0, 2, 1e6, 0.0)});
  PdbPolicy policy;
  CHECK(assign_pdb(g, Path{0, 1}, policy) == doctest::Approx(0.030));
  CHECK(assign_pdb(g, Path{2}, policy) == 1e-3);
  policy.beta = 1.0;
  CHECK(assign_pdb(g, Path{0}, policy) == doctest::Approx(4e-3));
}

TEST_CASE("violation report") {
  const std::vector<double> y{0.5, 2.0, 3.0, 0.1}, pdb{1.0, 1.0, 1.0, 1.0};
  const auto perfect = classify_and_report(y, y, pdb);
  CHECK(perfect.misclassified == 0);
  CHECK(perfect.actual_violations == 2);
  const auto zero = classify_and_report(std::vector<double>(4, 0.0), y, pdb);
  CHECK(zero.predicted_violations == 0);
  CHECK(zero.misclassified == zero.actual_violations);
  CHECK_THROWS(classify_and_report(y, y, std::vector<double>{1.0}));
}

TEST_CASE("violation report matches per-flow comparison") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + trial * 7;
    std::vector<double> y(n), yh(n), pdb(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = u(rng);
      yh[i] = u(rng);
      pdb[i] = 0.5 + u(rng) / 2;
    }
    const std::size_t window = 1 + static_cast<std::size_t>(trial % 13);
    const auto r = classify_and_report(yh, y, pdb, window);
    std::size_t pred = 0, act = 0, mis = 0;
    for (std::size_t i = 0; i < n; ++i) {
      pred += yh[i] > pdb[i];
      act += y[i] > pdb[i];
      mis += (yh[i] > pdb[i]) != (y[i] > pdb[i]);
    }
    CHECK(r.flows == n);
    CHECK(r.predicted_violations == pred);
    CHECK(r.actual_violations == act);
    CHECK(r.misclassified == mis);
    REQUIRE(r.windows.size() == (n + window - 1) / window);
    std::size_t wmis = 0, wsize = 0;
    for (const auto& w : r.windows) {
      wmis += w.misclassified;
      wsize += w.size;
    }
    CHECK(wmis == mis);
    CHECK(wsize == n);
  }
}
