#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "fixture.hpp"
#include "magmeta/dists.hpp"
#include "magmeta/log.hpp"
#include "magmeta/pooling.hpp"
#include "magmeta/simulation.hpp"

using namespace magmeta;
using testing_fixture::meta_fixture;

TEST_SUITE("pooling") {
  TEST_CASE("KDB without a plugin falls back to MP and warns once") {
    clear_kdb_correction();
    std::vector<std::string> seen;
    auto previous = set_warning_sink([&](std::string_view msg) { seen.emplace_back(msg); });
    const auto fx = meta_fixture();
    const auto a = tau2_kdb(fx);
    const auto b = tau2_kdb(fx);
    set_warning_sink(previous);
    CHECK(seen.size() == 1);
    CHECK(a.method == Tau2Method::KDB);
    CHECK(a.value == tau2_mp(fx).value);
    CHECK(b.value == a.value);
  }

  TEST_CASE("Q statistic at tau^2 = 0") {
    const auto fx = meta_fixture();
    std::vector<double> w;
    for (const auto& e : fx) w.push_back(1.0 / e.var_g);
    CHECK(generalized_q(fx, w) == doctest::Approx(oracle::kFixtureQ0).epsilon(1e-13));
  }

  TEST_CASE("Mandel-Paule estimate") {
    const auto fx = meta_fixture();
    const auto t = tau2_mp(fx);
    CHECK(t.method == Tau2Method::MP);
    CHECK_FALSE(t.truncated);
    CHECK(t.value == doctest::Approx(oracle::kFixtureTau2MP).epsilon(1e-9));
    std::vector<double> w;
    for (const auto& e : fx) w.push_back(1.0 / (e.var_g + t.value));
    CHECK(generalized_q(fx, w) == doctest::Approx(fx.size() - 1.0).epsilon(1e-9));
  }

  TEST_CASE("Mandel-Paule truncates at zero for homogeneous data") {
    std::vector<EffectRecord> fx;
    for (int n : {20, 40, 60, 80}) fx.push_back(derive_effect(StudySummary::from_d(n, n, 0.3)));
    const auto t = tau2_mp(fx);
    CHECK(t.value == 0.0);
    CHECK(t.truncated);
    CHECK_THROWS_AS(tau2_mp(std::span(fx).first(1)), std::domain_error);
  }

  TEST_CASE("sample-size-weighted moment estimate") {
    const auto fx = meta_fixture();
    const auto t = tau2_ssc(fx);
    CHECK(t.method == Tau2Method::SSC);
    CHECK(t.value == doctest::Approx(oracle::kFixtureTau2SSC).epsilon(1e-12));
    CHECK(estimate_tau2(fx, Tau2Method::SSC).value == t.value);
    CHECK(estimate_tau2(fx, Tau2Method::MP).value == tau2_mp(fx).value);
  }

  TEST_CASE("pooled estimates and intervals") {
    const auto fx = meta_fixture();
    const auto mp = pool_delta(fx, tau2_mp(fx), Critical::Normal, 0.05);
    CHECK(mp.pooled.estimate == doctest::Approx(oracle::kFixtureEstMP).epsilon(1e-9));
    CHECK(mp.pooled.std_err == doctest::Approx(oracle::kFixtureSeMP).epsilon(1e-9));
    CHECK(mp.pooled.method == "MP");
    const double z = dists::normal_quantile(0.975);
    CHECK(mp.interval.lower == doctest::Approx(mp.pooled.estimate - z * mp.pooled.std_err).epsilon(1e-14));
    CHECK(mp.interval.level == doctest::Approx(0.95));

    const auto ssc = pool_delta(fx, tau2_ssc(fx), Critical::StudentT, 0.05);
    CHECK(ssc.pooled.method == "SSC_t");
    CHECK(ssc.pooled.estimate == doctest::Approx(oracle::kFixtureEstSSC).epsilon(1e-12));
    CHECK(ssc.pooled.std_err == doctest::Approx(oracle::kFixtureSeSSC).epsilon(1e-12));
    CHECK(ssc.interval.lower == doctest::Approx(oracle::kFixtureSSCtLower).epsilon(1e-10));
    CHECK(ssc.interval.upper == doctest::Approx(oracle::kFixtureSSCtUpper).epsilon(1e-10));
    for (std::size_t i = 0; i < fx.size(); ++i) CHECK(ssc.pooled.weights[i] == fx[i].n_eff);
    CHECK_THROWS_AS(pool_delta(fx, tau2_ssc(fx), Critical::Normal, 1.0), std::domain_error);
  }

  TEST_CASE("weighted_pool") {
    const auto fx = meta_fixture();
    std::vector<double> w;
    for (const auto& e : fx) w.push_back(e.n_eff);
    const auto a = weighted_pool(fx, w, oracle::kFixtureTau2SSC);
    CHECK(a.estimate == doctest::Approx(oracle::kFixtureEstSSC).epsilon(1e-13));
    CHECK(a.std_err == doctest::Approx(oracle::kFixtureSeSSC).epsilon(1e-13));
    // Invariant to rescaling the weights.
    std::vector<double> w7;
    for (double x : w) w7.push_back(7.0 * x);
    const auto b = weighted_pool(fx, w7, oracle::kFixtureTau2SSC);
    CHECK(b.estimate == doctest::Approx(a.estimate).epsilon(1e-14));
    CHECK(b.std_err == doctest::Approx(a.std_err).epsilon(1e-14));
    w.pop_back();
    CHECK_THROWS_AS(weighted_pool(fx, w, 0.0), std::domain_error);
    w.push_back(0.0);
    CHECK_THROWS_AS(weighted_pool(fx, w, 0.0), std::domain_error);
  }

  TEST_CASE("critical values") {
    CHECK(critical_value(Critical::Normal, 0, 0.975) == doctest::Approx(1.959963984540054).epsilon(1e-14));
    CHECK(critical_value(Critical::StudentT, 9, 0.975) == doctest::Approx(2.262157162798205).epsilon(1e-12));
  }

  TEST_CASE("KDB with a registered correction") {
    const auto fx = meta_fixture();
    const double shift = 0.75;
    register_kdb_correction([shift](std::span<const EffectRecord>, double) { return shift; });
    CHECK(has_kdb_correction());
    const auto t = tau2_kdb(fx);
    clear_kdb_correction();
    CHECK_FALSE(has_kdb_correction());
    CHECK(t.method == Tau2Method::KDB);
    std::vector<double> w;
    for (const auto& e : fx) w.push_back(1.0 / (e.var_g + t.value));
    CHECK(generalized_q(fx, w) == doctest::Approx(fx.size() - 1.0 + shift).epsilon(1e-9));
    // A larger target moment means a smaller root.
    CHECK(t.value < tau2_mp(fx).value);
    // Zero correction reproduces MP.
    const auto z = tau2_kdb(fx, [](std::span<const EffectRecord>, double) { return 0.0; });
    CHECK(z.value == doctest::Approx(tau2_mp(fx).value).epsilon(1e-9));
  }

  TEST_CASE("tau^2 estimators are close to unbiased in large samples") {
    auto cfg = equal_size_config(100, 250, 0.5, 0.4);
    const int reps = 200;
    double s_mp = 0.0, s2_mp = 0.0, s_ssc = 0.0, s2_ssc = 0.0;
    for (int r = 0; r < reps; ++r) {
      auto rng = Rng::for_replication(99, 0, r);
      const auto fx = generate_meta_sample(cfg, rng);
      const double a = tau2_mp(fx).value;
      const double b = tau2_ssc(fx).value;
      s_mp += a;
      s2_mp += a * a;
      s_ssc += b;
      s2_ssc += b * b;
    }
    const double m_mp = s_mp / reps;
    const double m_ssc = s_ssc / reps;
    const double se_mp = std::sqrt((s2_mp / reps - m_mp * m_mp) / reps);
    const double se_ssc = std::sqrt((s2_ssc / reps - m_ssc * m_ssc) / reps);
    CHECK(std::fabs(m_mp - 0.4) <= 3.0 * se_mp);
    CHECK(std::fabs(m_ssc - 0.4) <= 3.0 * se_ssc);
  }
}
