#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "magmeta/dists.hpp"
#include "magmeta/rng.hpp"
#include "oracle_values.hpp"

using namespace magmeta;
using namespace magmeta::dists;

TEST_SUITE("dists") {
  TEST_CASE("normal cdf and quantile") {
    CHECK(normal_cdf(0.0) == 0.5);
    CHECK(normal_quantile(0.975) == doctest::Approx(1.959964).epsilon(1e-6));
    CHECK(normal_cdf(-5.8799) == doctest::Approx(2.05e-9).epsilon(0.02));
    for (double p : {1e-300, 1e-20, 1e-8, 0.01, 0.2, 0.5, 0.77, 0.999, 1.0 - 1e-12}) {
      const double x = normal_quantile(p);
      CHECK(std::fabs(normal_cdf(x) - p) <= 1e-12 * std::max(p, 1e-300) + 1e-300 + 4e-16);
    }
    double prev = 0.0;
    for (double x = -8.0; x <= 8.0; x += 0.25) {
      const double c = normal_cdf(x);
      CHECK(c > prev);
      prev = c;
    }
    CHECK_THROWS_AS(normal_quantile(0.0), std::domain_error);
    CHECK_THROWS_AS(normal_quantile(1.0), std::domain_error);
  }

  TEST_CASE("quantiles agree with high-precision values") {
    for (const auto& q : oracle::kQuantiles) {
      CAPTURE(q.p);
      CAPTURE(q.df);
      const double got = q.df == 0 ? normal_quantile(q.p) : student_t_quantile(q.p, q.df);
      CHECK(std::fabs(got - q.q) <= 1e-10 * std::max(1.0, std::fabs(q.q)));
    }
  }

  TEST_CASE("regularized incomplete beta") {
    CHECK(reg_inc_beta(0.3, 1.0, 1.0) == doctest::Approx(0.3).epsilon(1e-14));
    CHECK(reg_inc_beta(0.5, 2.0, 2.0) == doctest::Approx(0.5).epsilon(1e-14));
    // I_0.25(2,3) = integral of 12 t (1-t)^2 on [0, 0.25] = 67/256.
    CHECK(reg_inc_beta(0.25, 2.0, 3.0) == doctest::Approx(67.0 / 256.0).epsilon(1e-13));
    CHECK(reg_inc_beta(0.0, 2.5, 3.5) == 0.0);
    CHECK(reg_inc_beta(1.0, 2.5, 3.5) == 1.0);
    double prev = 0.0;
    for (double x = 0.05; x < 1.0; x += 0.05) {
      const double v = reg_inc_beta(x, 3.5, 7.25);
      CHECK(v >= prev);
      prev = v;
    }
    CHECK_THROWS_AS(reg_inc_beta(0.5, 0.0, 1.0), std::domain_error);
    CHECK_THROWS_AS(reg_inc_beta(0.5, 1.0, -1.0), std::domain_error);
    CHECK_THROWS_AS(reg_inc_beta(1.5, 1.0, 1.0), std::domain_error);
  }

  TEST_CASE("noncentral F cdf agrees with high-precision values") {
    for (const auto& p : oracle::kNoncentralF) {
      CAPTURE(p.x);
      CAPTURE(p.nu2);
      CAPTURE(p.lambda2);
      CHECK(std::fabs(noncentral_f_cdf(p.x, {p.nu1, p.nu2, p.lambda2}) - p.cdf) <= 1e-12);
    }
  }

  TEST_CASE("noncentral F cdf boundaries and monotonicity") {
    CHECK(noncentral_f_cdf(0.0, {1, 10, 3.0}) == 0.0);
    CHECK(noncentral_f_cdf(3.8415, {1, 1000000, 0.0}) == doctest::Approx(0.95).epsilon(1e-4));
    for (double x : {0.01, 0.5, 2.0, 7.0, 40.0}) {
      for (int nu2 : {3, 10, 98, 10000}) {
        CHECK(std::fabs(noncentral_f_cdf(x, {1, nu2, 0.0}) - central_f_cdf(x, 1, nu2)) <= 1e-10);
        double prev = 2.0;
        for (double lam : {0.0, 0.5, 2.0, 8.0, 30.0, 120.0}) {
          const double c = noncentral_f_cdf(x, {1, nu2, lam});
          CHECK(c <= prev + 1e-15);
          CHECK(c >= 0.0);
          prev = c;
        }
      }
    }
    for (double lam : {0.0, 4.0, 50.0}) {
      double prev = 0.0;
      for (double x = 0.0; x <= 100.0; x += 2.5) {
        const double c = noncentral_f_cdf(x, {1, 38, lam});
        CHECK(c >= prev - 1e-15);
        CHECK(c <= 1.0);
        prev = c;
      }
    }
    CHECK_THROWS_AS(noncentral_f_cdf(1.0, {0, 10, 1.0}), std::domain_error);
    CHECK_THROWS_AS(noncentral_f_cdf(1.0, {1, 0, 1.0}), std::domain_error);
    CHECK_THROWS_AS(noncentral_f_cdf(1.0, {1, 10, -1.0}), std::domain_error);
    CHECK_THROWS_AS(noncentral_f_cdf(-1.0, {1, 10, 1.0}), std::domain_error);
  }

  TEST_CASE("noncentral chi-square cdf") {
    for (const auto& p : oracle::kNoncentralChi2) {
      CAPTURE(p.x);
      CAPTURE(p.k);
      CHECK(std::fabs(noncentral_chi2_cdf(p.x, p.k, p.lambda2) - p.cdf) <= 1e-12);
    }
    CHECK(noncentral_chi2_cdf(0.0, 3, 2.0) == 0.0);
    CHECK(noncentral_chi2_cdf(3.8415, 1, 0.0) == doctest::Approx(0.95).epsilon(1e-4));
    for (double x : {0.5, 4.0, 20.0}) {
      CHECK(std::fabs(noncentral_chi2_cdf(x, 4, 0.0) - chi2_cdf(x, 4)) <= 1e-14);
    }
    CHECK_THROWS_AS(noncentral_chi2_cdf(1.0, 0, 1.0), std::domain_error);
  }

  TEST_CASE("noncentral F approaches the scaled chi-square as nu2 grows") {
    for (double x : {0.5, 3.0, 9.0}) {
      for (double lam : {0.0, 2.0, 10.0}) {
        CHECK(std::fabs(noncentral_f_cdf(x, {1, 10000000, lam}) - noncentral_chi2_cdf(x, 1, lam)) <= 1e-6);
        CHECK(std::fabs(noncentral_f_cdf(x / 3.0, {3, 10000000, lam}) - noncentral_chi2_cdf(x, 3, lam)) <=
              1e-6);
      }
    }
  }

  TEST_CASE("solve_ncp") {
    for (const auto& s : oracle::kSolveNcpF) {
      CAPTURE(s.x);
      CAPTURE(s.target);
      CHECK(solve_ncp(s.x, s.nu1, s.nu2, s.target) == doctest::Approx(s.lambda2).epsilon(1e-9));
    }
    // Fixed point at lambda = 0.
    const double c0 = noncentral_f_cdf(3.0, {1, 38, 0.0});
    CHECK(solve_ncp(3.0, 1, 38, c0) == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(solve_ncp(3.0, 1, 38, c0 + 0.01) == 0.0);
    // Round trip.
    for (double x : {0.7, 3.0, 15.0}) {
      for (double lam : {0.5, 7.0, 40.0}) {
        const double p = noncentral_f_cdf(x, {1, 38, lam});
        CHECK(solve_ncp(x, 1, 38, p) == doctest::Approx(lam).epsilon(1e-6));
      }
    }
    // x = 3, nu = (1, 38), target 0.025: a coarse grid brackets the root.
    const double root = solve_ncp(3.0, 1, 38, 0.025);
    double below = 0.0;
    for (double lam = 0.0; lam < 30.0; lam += 1e-4) {
      if (noncentral_f_cdf(3.0, {1, 38, lam}) > 0.025) below = lam;
    }
    CHECK(root >= below);
    CHECK(root <= below + 1e-4);
    CHECK(std::fabs(noncentral_f_cdf(3.0, {1, 38, root}) - 0.025) <= 1e-9);

    const double chi_root = solve_ncp_chi2(15.0, 5, 0.2);
    CHECK(std::fabs(noncentral_chi2_cdf(15.0, 5, chi_root) - 0.2) <= 1e-9);
    CHECK_THROWS_AS(solve_ncp(3.0, 1, 38, 0.0), std::domain_error);
    CHECK_THROWS_AS(solve_ncp(3.0, 1, 38, 1.0), std::domain_error);
  }

  TEST_CASE("folded normal moments") {
    for (const auto& f : oracle::kFolded) {
      const auto got = folded_normal_moments(f.mu, f.sigma);
      CHECK(got.mean_f == doctest::Approx(f.mean).epsilon(1e-13));
      CHECK(got.var_f == doctest::Approx(f.var).epsilon(1e-10));
      CHECK(got.var_f + got.mean_f * got.mean_f ==
            doctest::Approx(f.mu * f.mu + f.sigma * f.sigma).epsilon(1e-13));
    }
    const auto far = folded_normal_moments(10.0, 1.0);
    CHECK(std::fabs(far.mean_f - 10.0) <= 1e-20 + 1e-15 * 10.0);
    CHECK_THROWS_AS(folded_normal_moments(0.0, 0.0), std::domain_error);
  }

  TEST_CASE("folded normal mean by quadrature at mu = 1, sigma = 2") {
    // Trapezoid rule for E|y| with y ~ N(1, 4) over +-12 sigma.
    const double mu = 1.0;
    const double s = 2.0;
    const int n = 200000;
    const double lo = mu - 12 * s;
    const double h = 24 * s / n;
    double acc = 0.0;
    for (int i = 0; i <= n; ++i) {
      const double y = lo + i * h;
      const double w = (i == 0 || i == n) ? 0.5 : 1.0;
      acc += w * std::fabs(y) * normal_pdf((y - mu) / s) / s;
    }
    CHECK(folded_normal_moments(mu, s).mean_f == doctest::Approx(acc * h).epsilon(1e-8));
  }

  TEST_CASE("Hedges J") {
    for (const auto& j : oracle::kHedgesJ) {
      CAPTURE(j.m);
      CHECK(hedges_j(j.m) == doctest::Approx(j.j).epsilon(1e-13));
    }
    CHECK(hedges_j_approx(10) == doctest::Approx(1.0 - 3.0 / 39.0).epsilon(1e-15));
    for (int m = 20; m <= 2000; m += 7) CHECK(std::fabs(hedges_j(m) - hedges_j_approx(m)) < 1e-3);
    const double big = hedges_j(1000000);
    CHECK(big > 0.99999);
    CHECK(big < 1.0);
    CHECK_THROWS_AS(hedges_j(1), std::domain_error);
  }

  TEST_CASE("random streams are reproducible and distinct") {
    auto a = Rng::for_replication(7, 3, 11);
    auto b = Rng::for_replication(7, 3, 11);
    auto c = Rng::for_replication(7, 3, 12);
    auto d = Rng::for_replication(7, 4, 11);
    int same_c = 0;
    int same_d = 0;
    for (int i = 0; i < 1000; ++i) {
      const auto va = a();
      CHECK(va == b());
      same_c += va == c();
      same_d += va == d();
    }
    CHECK(same_c == 0);
    CHECK(same_d == 0);
  }

  TEST_CASE("scaled noncentral t sampler moments") {
    Rng rng(20240611);
    const int m = 98;
    const double n_eff = 25.0;
    const double delta = 0.5;
    const int draws = 400000;
    double s1 = 0.0;
    double s2 = 0.0;
    double z1 = 0.0;
    double z2 = 0.0;
    for (int i = 0; i < draws; ++i) {
      const double d = sample_scaled_noncentral_t(m, std::sqrt(n_eff) * delta, 1.0 / std::sqrt(n_eff), rng);
      s1 += d * d;
      s2 += d * d * d * d;
      const double z = sample_scaled_noncentral_t(m, 0.0, 1.0, rng);
      z1 += z;
      z2 += z * z;
    }
    const double mean_d2 = s1 / draws;
    const double se_d2 = std::sqrt((s2 / draws - mean_d2 * mean_d2) / draws);
    const double expected = m / (m - 2.0) * (1.0 / n_eff + delta * delta);
    CHECK(std::fabs(mean_d2 - expected) <= 3.0 * se_d2);
    const double mean_z = z1 / draws;
    CHECK(std::fabs(mean_z) <= 4.0 * std::sqrt(z2 / draws / draws));
  }

  TEST_CASE("sampled n_eff d^2 follows the noncentral F law (KS)") {
    Rng rng(99);
    const int m = 38;
    const double n_eff = 10.0;
    const double delta = 0.6;
    const int draws = 20000;
    std::vector<double> x(draws);
    for (auto& v : x) {
      const double d = sample_scaled_noncentral_t(m, std::sqrt(n_eff) * delta, 1.0 / std::sqrt(n_eff), rng);
      v = n_eff * d * d;
    }
    std::sort(x.begin(), x.end());
    double ks = 0.0;
    for (int i = 0; i < draws; ++i) {
      const double f = noncentral_f_cdf(x[i], {1, m, n_eff * delta * delta});
      ks = std::max({ks, std::fabs(f - static_cast<double>(i) / draws),
                     std::fabs(f - static_cast<double>(i + 1) / draws)});
    }
    // Asymptotic 1% critical value 1.628 / sqrt(n).
    CHECK(ks < 1.628 / std::sqrt(static_cast<double>(draws)));
  }

  TEST_CASE("central F_{1,m} sampler mean") {
    Rng rng(5);
    const int m = 30;
    const int draws = 200000;
    double s = 0.0;
    double ss = 0.0;
    for (int i = 0; i < draws; ++i) {
      const double f = sample_f1(m, rng);
      s += f;
      ss += f * f;
    }
    const double mean = s / draws;
    const double se = std::sqrt((ss / draws - mean * mean) / draws);
    CHECK(std::fabs(mean - m / (m - 2.0)) <= 4.0 * se);
  }
}
