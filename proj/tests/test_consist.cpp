#include <cmath>

#include "doctest.h"
#include "nmt/consist.hpp"
#include "nmt/rng.hpp"

using namespace nmt;

namespace {

using TD = Tensor<double>;

TD dist(std::vector<double> p) {
  long n = static_cast<long>(p.size());
  return TD::from({n}, std::move(p));
}

TD random_dist(long v, Rng& rng) {
  std::vector<double> p(static_cast<size_t>(v));
  double sum = 0.0;
  for (auto& x : p) {
    x = rng.uniform(1e-4, 1.0);
    sum += x;
  }
  for (auto& x : p) x /= sum;
  return TD::from({v}, std::move(p));
}

// Analytic KL for the oracle side of the tests.
double kl_ref(const std::vector<double>& p, const std::vector<double>& q) {
  double acc = 0.0;
  for (size_t i = 0; i < p.size(); ++i)
    if (p[i] > 0) acc += p[i] * std::log(p[i] / q[i]);
  return acc;
}

double js_ref(const std::vector<double>& p, const std::vector<double>& q) {
  std::vector<double> m(p.size());
  for (size_t i = 0; i < p.size(); ++i) m[i] = 0.5 * (p[i] + q[i]);
  return 0.5 * kl_ref(p, m) + 0.5 * kl_ref(q, m);
}

// Finds a symmetric two-bin pair with the requested JS value by bisection
// (JS of [a,1-a] vs [1-a,a] is monotone in a on [0.5, 1]).
std::pair<std::vector<double>, std::vector<double>> pair_with_js(double target) {
  double lo = 0.5, hi = 1.0 - 1e-9;
  for (int it = 0; it < 200; ++it) {
    double a = 0.5 * (lo + hi);
    double val = js_ref({a, 1 - a}, {1 - a, a});
    if (val < target)
      lo = a;
    else
      hi = a;
  }
  double a = 0.5 * (lo + hi);
  return {{a, 1 - a}, {1 - a, a}};
}

}  // namespace

TEST_CASE("kl_divergence examples") {
  auto p = dist({0.5, 0.5});
  CHECK(kl_divergence(p, p).item() == doctest::Approx(0.0));

  auto q = dist({0.25, 0.75});
  CHECK(kl_divergence(p, q).item() == doctest::Approx(0.14384).epsilon(1e-4));
  CHECK(kl_divergence(p, q).item() == doctest::Approx(kl_ref({0.5, 0.5}, {0.25, 0.75})));

  auto a = dist({0.9, 0.1});
  auto b = dist({0.5, 0.5});
  CHECK(kl_divergence(a, b).item() != doctest::Approx(kl_divergence(b, a).item()));
  CHECK(kl_divergence(a, b).item() == doctest::Approx(0.368064).epsilon(1e-5));
  CHECK(kl_divergence(b, a).item() == doctest::Approx(0.510826).epsilon(1e-5));

  CHECK_THROWS_AS(kl_divergence(p, dist({0.2, 0.3, 0.5})), ShapeError);
}

TEST_CASE("js_divergence examples") {
  auto p = dist({0.3, 0.7});
  CHECK(js_divergence(p, p).item() == doctest::Approx(0.0));
  CHECK(js_divergence(dist({1, 0}), dist({0, 1})).item() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-9));
  CHECK_THROWS_AS(js_divergence(p, dist({1.0})), ShapeError);
}

TEST_CASE("divergence laws over 1000 random pairs") {
  Rng rng(55);
  const double ln2 = std::log(2.0);
  for (int it = 0; it < 1000; ++it) {
    long v = 2 + static_cast<long>(rng.integer(12));
    TD p = random_dist(v, rng);
    TD q = random_dist(v, rng);
    double js_pq = js_divergence(p, q).item();
    double js_qp = js_divergence(q, p).item();
    CHECK(js_pq == doctest::Approx(js_qp).epsilon(1e-12));
    CHECK(js_pq >= -1e-9);
    CHECK(js_pq <= ln2 + 1e-9);
    CHECK(kl_divergence(p, q).item() >= -1e-12);
    CHECK(js_divergence(p, p).item() == doctest::Approx(0.0));
    CHECK(kl_divergence(p, p).item() == doctest::Approx(0.0));
  }
}

TEST_CASE("consist_loss is zero with zero gradient when child equals parent") {
  Rng rng(56);
  ConsistConfig cc;
  for (int it = 0; it < 20; ++it) {
    long n = 1 + static_cast<long>(rng.integer(4));
    long v = 2 + static_cast<long>(rng.integer(8));
    std::vector<double> rows;
    for (long i = 0; i < n; ++i) {
      auto r = random_dist(v, rng);
      rows.insert(rows.end(), r.data().begin(), r.data().end());
    }
    TD child = TD::from({n, v}, rows, true);
    TD parent = TD::from({n, v}, rows);
    Tape<double> tape;
    {
      TapeScope<double> scope(tape);
      auto loss = consist_loss(child, parent, {}, cc);
      CHECK(loss.item() == doctest::Approx(0.0));
      tape.backward(loss);
    }
    for (double g : child.grad()) CHECK(std::abs(g) <= 1e-8);
  }
}

TEST_CASE("consist_loss averages per-position divergences over unmasked count") {
  // Construct rows with analytic JS values 0.1 and 0.3 via bisection, then
  // check the per-token mean.
  auto [p1, q1] = pair_with_js(0.1);
  auto [p2, q2] = pair_with_js(0.3);
  std::vector<double> child_rows = {p1[0], p1[1], p2[0], p2[1]};
  std::vector<double> parent_rows = {q1[0], q1[1], q2[0], q2[1]};
  TD child = TD::from({2, 2}, child_rows);
  TD parent = TD::from({2, 2}, parent_rows);
  ConsistConfig cc;  // JS
  CHECK(consist_loss(child, parent, {}, cc).item() == doctest::Approx(0.2).epsilon(1e-6));

  // All positions masked -> 0.
  CHECK(consist_loss(child, parent, {0, 0}, cc).item() == doctest::Approx(0.0));

  // Masked content is irrelevant.
  std::vector<double> child2_rows = {p1[0], p1[1], 0.99, 0.01};
  TD child2 = TD::from({2, 2}, child2_rows);
  CHECK(consist_loss(child, parent, {1, 0}, cc).item() ==
        doctest::Approx(consist_loss(child2, parent, {1, 0}, cc).item()));

  // Position-count mismatch signals a vocabulary-alignment violation.
  TD shorter = TD::from({1, 2}, {p1[0], p1[1]});
  CHECK_THROWS_AS(consist_loss(shorter, parent, {}, cc), ShapeError);
}

TEST_CASE("consist_loss with KL uses the configured divergence") {
  ConsistConfig cc;
  cc.divergence = Divergence::KL;
  TD child = TD::from({1, 2}, {0.5, 0.5});
  TD parent = TD::from({1, 2}, {0.25, 0.75});
  CHECK(consist_loss(child, parent, {}, cc).item() ==
        doctest::Approx(kl_ref({0.5, 0.5}, {0.25, 0.75})));
}

TEST_CASE("total_loss interpolation") {
  ConsistConfig cc;
  cc.alpha = 0.0;
  auto nll = TD::scalar(1.2345);
  auto ld = TD::scalar(0.5);
  CHECK(total_loss(nll, ld, cc).item() == 1.2345);  // exact at alpha = 0

  cc.alpha = 7.0;  // tuned JS setting (alpha, tau) = (7, 1)
  cc.tau = 1.0;
  CHECK(total_loss(TD::scalar(1.0), TD::scalar(0.1), cc).item() ==
        doctest::Approx(1.7).epsilon(1e-12));

  ConsistConfig kl_tuned;  // tuned KL setting (alpha, tau) = (4, 2)
  kl_tuned.alpha = 4.0;
  kl_tuned.tau = 2.0;
  kl_tuned.divergence = Divergence::KL;
  kl_tuned.validate();
  CHECK(total_loss(TD::scalar(2.0), TD::scalar(0.25), kl_tuned).item() ==
        doctest::Approx(3.0));
}

TEST_CASE("rdrop_loss values") {
  TD a = TD::from({1, 2}, {0.9, 0.1});
  TD b = TD::from({1, 2}, {0.5, 0.5});

  // Symmetric KL oracle: (KL(a||b) + KL(b||a)) / 2.
  double expected = 0.5 * (kl_ref({0.9, 0.1}, {0.5, 0.5}) + kl_ref({0.5, 0.5}, {0.9, 0.1}));
  CHECK(expected == doctest::Approx(0.43944).epsilon(1e-4));
  CHECK(rdrop_loss(a, b, {}, 1.0).item() == doctest::Approx(expected).epsilon(1e-6));

  CHECK(rdrop_loss(a, a, {}, 1.0).item() == doctest::Approx(0.0));  // identical forwards
  CHECK(rdrop_loss(a, b, {}, 0.0).item() == 0.0);
  CHECK(rdrop_loss(a, b, {}, 2.0).item() == doctest::Approx(2.0 * expected).epsilon(1e-6));
  CHECK_THROWS_AS(rdrop_loss(a, TD::from({1, 3}, {0.2, 0.3, 0.5}), {}, 1.0), ShapeError);
}

TEST_CASE("divergence config parsing") {
  CHECK(divergence_from_name("js") == Divergence::JS);
  CHECK(divergence_from_name("kl") == Divergence::KL);
  CHECK_THROWS_AS(divergence_from_name("tv"), ValueError);
  ConsistConfig bad;
  bad.tau = 0.0;
  CHECK_THROWS_AS(bad.validate(), ValueError);
  bad.tau = 1.0;
  bad.alpha = -1.0;
  CHECK_THROWS_AS(bad.validate(), ValueError);
}
