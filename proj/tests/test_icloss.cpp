#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "intentrec/icloss.hpp"
#include "intentrec/rng.hpp"

using namespace intentrec;

namespace {

const double kSqrt2 = std::sqrt(2.0);

// One-session batch on the plane: target embedding c_t, one or more noise
// embeddings, session embedding s. All unit vectors.
struct PlaneBatch {
  Tape tape;
  std::vector<Tape::Id> sessions;
  std::vector<Tape::Id> intents;
  IntentAssignment assignment;
};

}  // namespace

TEST_CASE("longtail_variance: symmetry, single member, two-point case") {
  // all member distances equal -> variance 0
  const std::vector<double> center{0.0, 0.0};
  const std::vector<std::vector<double>> ring{{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
  CHECK(longtail_variance(center, ring) == doctest::Approx(0.0));

  CHECK(longtail_variance({0.3, 0.4}, {{1.0, 2.0}}) == doctest::Approx(0.0));

  // distances 0 and sqrt(2) -> variance 0.5
  CHECK(longtail_variance({1, 0}, {{1, 0}, {0, 1}}) == doctest::Approx(0.5));

  CHECK_THROWS_AS(longtail_variance({1, 0}, {}), std::invalid_argument);
}

TEST_CASE("target_alignment distances") {
  CHECK(target_alignment({0.6, 0.8}, {0.6, 0.8}) == doctest::Approx(0.0));
  CHECK(target_alignment({1, 0}, {0, 1}) == doctest::Approx(kSqrt2));
  CHECK(target_alignment({0.6, 0.8}, {1, 0}) == doctest::Approx(0.894427).epsilon(1e-6));
}

TEST_CASE("noise_stats: single intent, empty set, two-point stats") {
  const auto one = noise_stats({1, 0}, {{0, 1}});
  CHECK(!one.skip);
  CHECK(one.mean == doctest::Approx(kSqrt2));
  CHECK(one.variance == doctest::Approx(0.0));

  const auto empty = noise_stats({1, 0}, {});
  CHECK(empty.skip);
  CHECK(empty.mean == 0.0);
  CHECK(empty.variance == 0.0);

  const auto two = noise_stats({1, 0}, {{1, 0}, {0, 1}});
  CHECK(two.mean == doctest::Approx(kSqrt2 / 2.0));
  CHECK(two.variance == doctest::Approx(0.5));
}

TEST_CASE("variance_penalty clamps into [0,1]") {
  CHECK(variance_penalty(0.1, 0.2) == doctest::Approx(0.0));
  CHECK(variance_penalty(0.5, 0.2) == doctest::Approx(0.3));
  CHECK(variance_penalty(2.0, 0.2) == doctest::Approx(1.0));
  CHECK_THROWS_AS(variance_penalty(-0.1, 0.2), std::invalid_argument);
}

TEST_CASE("total_loss arithmetic") {
  CHECK(total_loss(1.0, -1.0, 0.2) == doctest::Approx(0.8));
  CHECK(total_loss(3.25, -100.0, 0.0) == doctest::Approx(3.25));
  CHECK(total_loss(1.386294, -7.142857, 0.2) == doctest::Approx(-0.042277).epsilon(1e-4));
}

TEST_CASE("triplet_surrogate hand values") {
  const std::vector<double> s{1, 0};
  CHECK(triplet_surrogate(s, s, {{0, 1}}) == doctest::Approx(0.0));
  CHECK(triplet_surrogate(s, s, {{1, 0}}) == doctest::Approx(2.0));
  CHECK(triplet_surrogate(s, s, {{0, 1}, {0, -1}}) == doctest::Approx(0.0));
}

TEST_CASE("icloss_batch reproduces the closed-form scalar examples") {
  LossConfig cfg;
  cfg.lambda_p = 0.0;
  cfg.eta = 0.2;

  // cos(S,c_t) = 1, one noise at cos 0, sigma = 1 -> -1
  {
    Tape tape;
    const std::vector<Tape::Id> sessions{tape.constant({1.0, 0.0})};
    const std::vector<Tape::Id> intents{tape.constant({1.0, 0.0}), tape.constant({0.0, 1.0})};
    IntentAssignment a;
    a.target = {0};
    a.noise = {{1}};
    cfg.sigma = 1.0;
    const auto r = icloss_batch(tape, sessions, a, intents, cfg);
    CHECK(r.value == doctest::Approx(-1.0).epsilon(1e-9));
  }

  // same at sigma = 0.14 -> -7.142857
  {
    Tape tape;
    const std::vector<Tape::Id> sessions{tape.constant({1.0, 0.0})};
    const std::vector<Tape::Id> intents{tape.constant({1.0, 0.0}), tape.constant({0.0, 1.0})};
    IntentAssignment a;
    a.target = {0};
    a.noise = {{1}};
    cfg.sigma = 0.14;
    const auto r = icloss_batch(tape, sessions, a, intents, cfg);
    CHECK(r.value == doctest::Approx(-7.142857).epsilon(1e-6));
  }

  // two noise intents at cos 0, sigma = 1 -> -(1 - ln 2)
  {
    Tape tape;
    const std::vector<Tape::Id> sessions{tape.constant({1.0, 0.0})};
    const std::vector<Tape::Id> intents{tape.constant({1.0, 0.0}), tape.constant({0.0, 1.0}),
                                        tape.constant({0.0, -1.0})};
    IntentAssignment a;
    a.target = {0};
    a.noise = {{1, 2}};
    cfg.sigma = 1.0;
    const auto r = icloss_batch(tape, sessions, a, intents, cfg);
    CHECK(r.value == doctest::Approx(-0.306853).epsilon(1e-6));
  }
}

TEST_CASE("icloss_batch: empty noise contributes exactly zero") {
  Tape tape;
  const std::vector<Tape::Id> sessions{tape.constant({1.0, 0.0}), tape.constant({0.0, 1.0})};
  const std::vector<Tape::Id> intents{tape.constant({1.0, 0.0})};
  IntentAssignment a;
  a.target = {0, 0};
  a.noise = {{}, {}};
  const auto r = icloss_batch(tape, sessions, a, intents, LossConfig{});
  CHECK(r.value == 0.0);
  CHECK(r.skipped_sessions == 2);
  tape.backward(r.loss);  // gradient of a constant zero is fine
}

TEST_CASE("icloss_batch rejects non-normalized inputs") {
  Tape tape;
  const std::vector<Tape::Id> sessions{tape.constant({2.0, 0.0})};
  const std::vector<Tape::Id> intents{tape.constant({1.0, 0.0}), tape.constant({0.0, 1.0})};
  IntentAssignment a;
  a.target = {0};
  a.noise = {{1}};
  CHECK_THROWS_WITH_AS(icloss_batch(tape, sessions, a, intents, LossConfig{}),
                       doctest::Contains("normalized"), std::invalid_argument);
}

TEST_CASE("lambda = 0 makes the penalty inert") {
  Rng rng(5);
  for (int rep = 0; rep < 10; ++rep) {
    Tape tape;
    auto unit2 = [&]() {
      const double a = uniform(rng, 0.0, 2.0 * 3.14159265358979323846);
      return tape.constant({std::cos(a), std::sin(a)});
    };
    const std::vector<Tape::Id> sessions{unit2(), unit2(), unit2()};
    const std::vector<Tape::Id> intents{unit2(), unit2(), unit2()};
    IntentAssignment a;
    a.target = {0, 1, 2};
    a.noise = {{1, 2}, {0, 2}, {0, 1}};
    LossConfig binding;  // penalty binds whenever variance > 0
    binding.lambda_p = 0.7;
    binding.eta = 0.0;
    LossConfig zero_scale = binding;  // penalty computed but scaled away
    zero_scale.lambda_p = 0.0;
    LossConfig never_binds;  // distance variance on the sphere stays under 2
    never_binds.lambda_p = 0.7;
    never_binds.eta = 2.0;
    const auto rb = icloss_batch(tape, sessions, a, intents, binding);
    const auto rz = icloss_batch(tape, sessions, a, intents, zero_scale);
    const auto rn = icloss_batch(tape, sessions, a, intents, never_binds);
    CHECK(rz.value == doctest::Approx(rn.value).epsilon(1e-12));
    for (std::size_t u = 0; u < 3; ++u) {
      CHECK(rb.penalty[u] >= 0.0);
      if (rb.penalty[u] > 0.0) CHECK(rb.per_session[u] > rz.per_session[u]);
    }
  }
}

TEST_CASE("penalty stays in [0,1] and the loss pushes toward targets, away from noise") {
  Rng rng(17);
  for (int rep = 0; rep < 30; ++rep) {
    Tape tape;
    const int d = 6;
    auto unit = [&]() {
      std::vector<double> v(d);
      double n = 0.0;
      for (double& x : v) {
        x = normal(rng);
        n += x * x;
      }
      n = std::sqrt(n);
      for (double& x : v) x /= n;
      return tape.constant(v);
    };
    const int b = uniform_int(rng, 2, 6);
    std::vector<Tape::Id> sessions;
    for (int u = 0; u < b; ++u) sessions.push_back(unit());
    std::vector<Tape::Id> intents;
    for (int c = 0; c < b; ++c) intents.push_back(unit());
    IntentAssignment a;
    for (int u = 0; u < b; ++u) {
      a.target.push_back(u);
      std::vector<int> noise;
      for (int v = 0; v < b; ++v)
        if (v != u) noise.push_back(v);
      a.noise.push_back(noise);
    }
    LossConfig cfg;
    cfg.eta = 0.05;
    const auto r = icloss_batch(tape, sessions, a, intents, cfg);
    tape.backward(r.loss);
    for (int u = 0; u < b; ++u) {
      CHECK(r.penalty[u] >= 0.0);
      CHECK(r.penalty[u] <= 1.0);
      CHECK(tape.grad_of(r.target_cos[u]) <= 0.0);
      for (Tape::Id nc : r.noise_cos[u]) CHECK(tape.grad_of(nc) >= 0.0);
    }
    CHECK(std::isfinite(r.value));
  }
}

TEST_CASE("detach_penalty keeps the value but blocks its gradient path") {
  Tensor table("item_embeddings", 4, 3);
  Rng rng(9);
  for (double& x : table.value) x = normal(rng);

  auto run = [&](bool detach) {
    Tape tape;
    std::vector<Tape::Id> sessions{tape.l2_normalize(tape.row(table, 0))};
    std::vector<Tape::Id> intents{tape.l2_normalize(tape.row(table, 1)),
                                  tape.l2_normalize(tape.row(table, 2)),
                                  tape.l2_normalize(tape.row(table, 3))};
    IntentAssignment a;
    a.target = {0};
    a.noise = {{1, 2}};
    LossConfig cfg;
    cfg.eta = 0.0;  // variance binds, so the paths differ
    cfg.detach_penalty = detach;
    const auto r = icloss_batch(tape, sessions, a, intents, cfg);
    tape.backward(r.loss);
    return std::make_pair(r.value, table.grad);
  };
  const auto [v_attached, g_attached] = run(false);
  const auto [v_detached, g_detached] = run(true);
  CHECK(v_attached == doctest::Approx(v_detached).epsilon(1e-12));
  CHECK(g_attached != g_detached);
}

TEST_CASE("verify_theorem1: degenerate cloud and full run") {
  // all points identical to the centroid: variance is identically zero
  const std::vector<double> c{1.0, 2.0, 3.0};
  const std::vector<std::vector<double>> degenerate(6, c);
  std::vector<double> s{4.0, 4.0, 4.0};
  for (int t = 0; t < 5; ++t) {
    CHECK(longtail_variance(s, degenerate) == doctest::Approx(0.0));
    for (int j = 0; j < 3; ++j) s[j] -= 0.2 * (s[j] - c[j]);
  }

  for (std::uint64_t seed : {0ULL, 1ULL, 2ULL}) {
    const auto report = verify_theorem1(seed, 60, 6);
    CHECK(report.pass);
    CHECK(report.gradient_norm < 1e-6);
    CHECK(report.pearson_corr > 0.9);
  }
  CHECK_THROWS_AS(verify_theorem1(0, 2, 6), std::invalid_argument);
  CHECK_THROWS_AS(verify_theorem1(0, 10, 1), std::invalid_argument);
}

TEST_CASE("verify_theorem2: degenerate instance and full run") {
  // c_v = c_u: the log-ratio collapses to 0 and the triplet to 2 per term
  const std::vector<double> s{1.0, 0.0};
  const std::vector<double> c{0.6, 0.8};
  double dot = s[0] * c[0] + s[1] * c[1];
  const double loss_log = std::log(std::exp(dot)) - dot;
  CHECK(loss_log == doctest::Approx(0.0));
  CHECK(triplet_surrogate(s, c, {c}) == doctest::Approx(2.0));

  const auto report = verify_theorem2(3, 400);
  CHECK(report.pass);
  CHECK(report.spearman_small > 0.95);
  CHECK(report.spearman_wide < report.spearman_small);  // degrades, reported only
  CHECK_THROWS_AS(verify_theorem2(0, 50), std::invalid_argument);
}

TEST_CASE("pearson and spearman basics") {
  CHECK(pearson({1, 2, 3}, {2, 4, 6}) == doctest::Approx(1.0));
  CHECK(pearson({1, 2, 3}, {3, 2, 1}) == doctest::Approx(-1.0));
  CHECK(spearman({1, 5, 9}, {2, 100, 101}) == doctest::Approx(1.0));
  CHECK(spearman({1, 5, 9}, {9, 5, 1}) == doctest::Approx(-1.0));
}

TEST_CASE("LossConfig validation") {
  LossConfig bad;
  bad.sigma = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad.sigma = 0.14;
  bad.eta = -1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}
