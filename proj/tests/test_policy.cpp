#include <cmath>
#include <limits>

#include "doctest.h"
#include "preflearn/policy.hpp"
#include "preflearn/random.hpp"

using namespace preflearn;

namespace {

Matrix make_matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> vals) {
  Matrix m(rows, cols);
  std::size_t i = 0;
  for (double v : vals) m.data[i++] = v;
  REQUIRE(i == rows * cols);
  return m;
}

}  // namespace

TEST_CASE("softmax matches hand-computed two-action row") {
  // logits (ln 2, 0) -> probs (2/3, 1/3)
  PolicyLogits lg{make_matrix(1, 2, {std::log(2.0), 0.0})};
  TabularPolicy pi = softmax_policy(lg);
  CHECK(pi.prob(0, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  CHECK(pi.prob(0, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
}

TEST_CASE("softmax is invariant to per-row shifts") {
  PolicyLogits a{make_matrix(2, 3, {0.3, -1.2, 2.0, 0.0, 0.5, -0.5})};
  PolicyLogits b = a;
  for (std::size_t j = 0; j < 3; ++j) {
    b.values(0, j) += 700.0;  // far beyond exp() overflow if unshifted
    b.values(1, j) -= 700.0;
  }
  TabularPolicy pa = softmax_policy(a);
  TabularPolicy pb = softmax_policy(b);
  for (std::size_t x = 0; x < 2; ++x)
    for (std::size_t j = 0; j < 3; ++j)
      CHECK(pa.prob(x, j) == doctest::Approx(pb.prob(x, j)).epsilon(1e-13));
}

TEST_CASE("softmax rejects non-finite logits") {
  PolicyLogits bad{make_matrix(1, 2, {0.0, std::numeric_limits<double>::infinity()})};
  CHECK_THROWS_AS(softmax_policy(bad), std::invalid_argument);
}

TEST_CASE("random softmax policy with zero noise is exactly uniform") {
  RandomStream rng(7);
  TabularPolicy pi = random_softmax_policy(3, 4, 0.0, rng);
  for (std::size_t x = 0; x < 3; ++x)
    for (std::size_t a = 0; a < 4; ++a) CHECK(pi.prob(x, a) == 0.25);
}

TEST_CASE("random softmax policy is reproducible per seed") {
  RandomStream r1(42), r2(42), r3(43);
  TabularPolicy p1 = random_softmax_policy(4, 5, 0.8, r1);
  TabularPolicy p2 = random_softmax_policy(4, 5, 0.8, r2);
  TabularPolicy p3 = random_softmax_policy(4, 5, 0.8, r3);
  CHECK(p1 == p2);
  CHECK_FALSE(p1 == p3);
}

TEST_CASE("from_probs normalizes and floors zero entries") {
  TabularPolicy pi = TabularPolicy::from_probs(make_matrix(1, 3, {2.0, 2.0, 0.0}));
  double sum = 0.0;
  for (std::size_t a = 0; a < 3; ++a) {
    CHECK(pi.prob(0, a) >= kProbFloor);
    sum += pi.prob(0, a);
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(pi.prob(0, 0) == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("from_probs without floor requires normalized rows") {
  CHECK_THROWS_AS(TabularPolicy::from_probs(make_matrix(1, 2, {0.7, 0.7}), false),
                  std::invalid_argument);
  TabularPolicy ok = TabularPolicy::from_probs(make_matrix(1, 2, {0.7, 0.3}), false);
  CHECK(ok.prob(0, 0) == 0.7);
}

TEST_CASE("from_probs rejects negative and all-zero rows") {
  CHECK_THROWS_AS(TabularPolicy::from_probs(make_matrix(1, 2, {1.0, -0.1})),
                  std::invalid_argument);
  CHECK_THROWS_AS(TabularPolicy::from_probs(make_matrix(1, 2, {0.0, 0.0})),
                  std::invalid_argument);
}

TEST_CASE("context dist validates weights") {
  CHECK_THROWS_AS(ContextDist::from_weights({0.5, 0.6}), std::invalid_argument);
  CHECK_THROWS_AS(ContextDist::from_weights({1.2, -0.2}), std::invalid_argument);
  ContextDist d = ContextDist::from_weights({0.25, 0.75});
  CHECK(d.weight(1) == 0.75);
  ContextDist u = ContextDist::uniform(4);
  CHECK(u.weight(0) == doctest::Approx(0.25));
}

TEST_CASE("forward KL of hand-computed rows") {
  // KL((1,0) || (1/2,1/2)) = ln 2, with the 0 ln 0 term dropped
  TabularPolicy p = TabularPolicy::from_probs(make_matrix(1, 2, {1.0, 0.0}), false);
  TabularPolicy q = TabularPolicy::uniform(1, 2);
  ContextDist d = ContextDist::uniform(1);
  CHECK(policy_forward_kl(p, q, d) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  // reversed direction hits the missing-support branch
  CHECK(std::isinf(policy_forward_kl(q, p, d)));
}

TEST_CASE("forward KL is zero on identical policies and weights contexts") {
  RandomStream rng(5);
  TabularPolicy p = random_softmax_policy(3, 4, 1.0, rng);
  ContextDist d = ContextDist::uniform(3);
  CHECK(policy_forward_kl(p, p, d) == doctest::Approx(0.0).epsilon(1e-15));

  TabularPolicy q = random_softmax_policy(3, 4, 1.0, rng);
  // zero-weight contexts must not contribute
  ContextDist d0 = ContextDist::from_weights({1.0, 0.0, 0.0});
  Matrix probs_q = q.probs();
  for (std::size_t a = 0; a < 4; ++a) probs_q(1, a) = p.prob(1, a);
  TabularPolicy q_row1_matched = TabularPolicy::from_probs(probs_q, false);
  CHECK(policy_forward_kl(p, q, d0) ==
        doctest::Approx(policy_forward_kl(p, q_row1_matched, d0)).epsilon(1e-14));
}

TEST_CASE("entropy of hand-computed rows") {
  TabularPolicy u = TabularPolicy::uniform(2, 10);
  ContextDist d = ContextDist::uniform(2);
  CHECK(policy_entropy(u, d) == doctest::Approx(std::log(10.0)).epsilon(1e-14));

  TabularPolicy p = TabularPolicy::from_probs(make_matrix(1, 2, {2.0 / 3.0, 1.0 / 3.0}), false);
  double expected = std::log(3.0) - (2.0 / 3.0) * std::log(2.0);  // 0.63651...
  CHECK(policy_entropy(p, ContextDist::uniform(1)) ==
        doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("centered reward table has zero mean under mu and known values") {
  TabularPolicy pi = TabularPolicy::from_probs(make_matrix(1, 2, {2.0 / 3.0, 1.0 / 3.0}), false);
  TabularPolicy mu = TabularPolicy::uniform(1, 2);
  RewardTable r = centered_reward_table(pi, mu, 1.0);
  // gamma ln pi = (ln 2/3, ln 1/3); uniform-centered leaves (ln2 / 2, -ln2 / 2)
  CHECK(r.values(0, 0) == doctest::Approx(0.5 * std::log(2.0)).epsilon(1e-13));
  CHECK(r.values(0, 1) == doctest::Approx(-0.5 * std::log(2.0)).epsilon(1e-13));
  CHECK(r.gamma == 1.0);
}

TEST_CASE("centered reward table centers under non-uniform mu") {
  RandomStream rng(11);
  TabularPolicy pi = random_softmax_policy(4, 6, 1.2, rng);
  TabularPolicy mu = random_softmax_policy(4, 6, 0.7, rng);
  RewardTable r = centered_reward_table(pi, mu, 0.5);
  for (std::size_t x = 0; x < 4; ++x) {
    double mean = 0.0;
    for (std::size_t a = 0; a < 6; ++a) mean += mu.prob(x, a) * r.values(x, a);
    CHECK(mean == doctest::Approx(0.0).epsilon(1e-12));
    // centering shifts rows; margins must equal gamma log-ratios exactly
    CHECK(r.values(x, 0) - r.values(x, 1) ==
          doctest::Approx(0.5 * std::log(pi.prob(x, 0) / pi.prob(x, 1))).epsilon(1e-12));
  }
}

TEST_CASE("induced policy inverts the centered reward") {
  RewardTable r{make_matrix(1, 2, {1.0, 0.0}), 1.0};
  TabularPolicy pi = induced_policy_from_reward(r);
  double s0 = 1.0 / (1.0 + std::exp(-1.0));  // sigmoid(1)
  CHECK(pi.prob(0, 0) == doctest::Approx(s0).epsilon(1e-14));

  RandomStream rng(3);
  TabularPolicy p = random_softmax_policy(3, 5, 1.0, rng);
  TabularPolicy mu = random_softmax_policy(3, 5, 0.9, rng);
  TabularPolicy back = induced_policy_from_reward(centered_reward_table(p, mu, 0.7));
  for (std::size_t x = 0; x < 3; ++x)
    for (std::size_t a = 0; a < 5; ++a)
      CHECK(back.prob(x, a) == doctest::Approx(p.prob(x, a)).epsilon(1e-10));
}

TEST_CASE("induced policy requires positive gamma") {
  RewardTable r{make_matrix(1, 2, {1.0, 0.0}), 0.0};
  CHECK_THROWS_AS(induced_policy_from_reward(r), std::invalid_argument);
}

TEST_CASE("random stream layers are deterministic and in range") {
  RandomStream a(123), b(123);
  for (int i = 0; i < 1000; ++i) {
    double u = a.uniform01();
    CHECK(u == b.uniform01());
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
  double g1 = a.gaussian();
  CHECK(g1 == b.gaussian());
  CHECK(std::isfinite(g1));
}

TEST_CASE("categorical sampling follows the weights") {
  RandomStream rng(99);
  std::vector<double> w = {1.0, 3.0};
  int ones = 0;
  const int kDraws = 40000;
  for (int i = 0; i < kDraws; ++i) ones += rng.categorical(w) == 1 ? 1 : 0;
  // E = 0.75, sd ~ 0.0022; 5 sigma band
  CHECK(std::abs(ones / double(kDraws) - 0.75) < 0.011);
  CHECK_THROWS_AS(rng.categorical(std::vector<double>{}), std::invalid_argument);
  CHECK_THROWS_AS(rng.categorical(std::vector<double>{0.0, 0.0}), std::invalid_argument);
}
