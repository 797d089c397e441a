#include <doctest.h>

#include <cmath>
#include <random>

#include "gatsy/autodiff.h"
#include "support.h"

using namespace gatsy;
using gatsy::testing::check_gradients;
using gatsy::testing::random_tensor;
using Vars = std::map<std::string, ad::Var>;

namespace {

constexpr double kTol = 1e-4;

void require_gradients(const gatsy::testing::LossFn& f, const std::map<std::string, Tensor>& in) {
  const auto r = check_gradients(f, in);
  INFO("worst element " << r.worst);
  CHECK(r.max_rel_error < kTol);
}

}  // namespace

TEST_CASE("scalar values of the activations") {
  ad::Tape tape;
  const auto x = tape.constant(Tensor::column({-1.0, 0.0, 2.0}));
  const auto e = ad::elu(x).value();
  CHECK(e[0] == doctest::Approx(std::exp(-1.0) - 1.0).epsilon(1e-15));
  CHECK(e[0] == doctest::Approx(-0.6321).epsilon(1e-4));
  CHECK(e[2] == 2.0);
  const auto l = ad::leaky_relu(x, 0.2).value();
  CHECK(l[0] == doctest::Approx(-0.2));
  CHECK(ad::relu(x).value()[0] == 0.0);
  CHECK_THROWS_AS(ad::leaky_relu(x, 1.5), std::invalid_argument);
}

TEST_CASE("leaky relu slope is the gradient on the negative side") {
  ad::Tape tape;
  const auto x = tape.parameter("x", Tensor::scalar(-3.0));
  const auto g = tape.backward(ad::sum(ad::leaky_relu(x, 0.2)));
  CHECK(g.at("x").item() == doctest::Approx(0.2).epsilon(1e-15));
}

TEST_CASE("gradient of sum(A B) wrt A is the broadcast column sums of B") {
  std::mt19937_64 rng(3);
  const Tensor a = random_tensor(3, 4, rng), b = random_tensor(4, 2, rng);
  ad::Tape tape;
  const auto va = tape.parameter("a", a);
  const auto g = tape.backward(ad::sum(ad::matmul(va, tape.constant(b)))).at("a");
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t k = 0; k < 4; ++k) CHECK(g(i, k) == doctest::Approx(b(k, 0) + b(k, 1)));
  require_gradients([](ad::Tape&, const Vars& v) { return ad::sum(ad::matmul(v.at("a"), v.at("b"))); },
                    {{"a", a}, {"b", b}});
}

TEST_CASE("segment softmax normalizes each segment") {
  ad::Tape tape;
  const auto s = tape.constant(Tensor::column({1, 2, 3, 0.5, -4}));
  const std::size_t offsets[] = {0, 3, 5};
  const auto a = ad::segment_softmax(s, offsets).value();
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  CHECK(a[0] == doctest::Approx(std::exp(1.0) / z).epsilon(1e-14));
  CHECK(a[2] == doctest::Approx(std::exp(3.0) / z).epsilon(1e-14));
  CHECK(std::abs(a[0] + a[1] + a[2] - 1.0) < 1e-12);
  CHECK(std::abs(a[3] + a[4] - 1.0) < 1e-12);

  // Large scores must not overflow thanks to max-subtraction.
  const std::size_t pair[] = {0, 2};
  const auto big = ad::segment_softmax(tape.constant(Tensor::column({1000, 1000})), pair);
  CHECK(big.value()[0] == doctest::Approx(0.5));
}

TEST_CASE("segment ops reject empty segments and broken partitions") {
  ad::Tape tape;
  const auto s = tape.constant(Tensor::column({1, 2}));
  const std::size_t empty[] = {0, 0, 2};
  CHECK_THROWS_AS(ad::segment_softmax(s, empty), std::invalid_argument);
  const std::size_t short_[] = {0, 1};
  CHECK_THROWS_AS(ad::segment_softmax(s, short_), std::invalid_argument);
}

TEST_CASE("distances") {
  ad::Tape tape;
  const auto a = tape.constant(Tensor::from_rows({{0, 0}, {1, 1}}));
  const auto b = tape.constant(Tensor::from_rows({{3, 4}, {1, 1}}));
  const auto d = ad::row_distance(a, b).value();
  CHECK(d[0] == 5.0);
  CHECK(d[1] == 0.0);
  CHECK(ad::euclidean_distance(a, b).value().item() == 5.0);

  // Coincident rows give a zero subgradient instead of NaN.
  auto p = tape.parameter("p", Tensor::from_rows({{1, 1}}));
  const auto g = tape.backward(ad::sum(ad::row_distance(p, tape.constant(Tensor::from_rows({{1, 1}})))));
  CHECK(g.at("p") == Tensor(1, 2));
}

TEST_CASE("cross-entropy of uniform scores over 25 classes is ln 25") {
  ad::Tape tape;
  const auto logits = tape.constant(Tensor(4, 25, 0.7));
  const std::size_t labels[] = {0, 3, 24, 7};
  CHECK(ad::softmax_cross_entropy(logits, labels).value().item() ==
        doctest::Approx(std::log(25.0)).epsilon(1e-14));
  const std::size_t bad[] = {0, 3, 25, 7};
  CHECK_THROWS(ad::softmax_cross_entropy(logits, bad));
}

TEST_CASE("non-finite results are reported, not propagated") {
  ad::Tape tape;
  const auto x = tape.constant(Tensor::scalar(1e308));
  CHECK_THROWS_AS(ad::scale(x, 10.0), NumericError);
}

TEST_CASE("untouched parameters get zero gradients") {
  ad::Tape tape;
  const auto a = tape.parameter("a", Tensor::scalar(2));
  tape.parameter("unused", Tensor(2, 2, 1.0));
  const auto g = tape.backward(ad::mul(a, a));
  CHECK(g.at("a").item() == 4.0);
  CHECK(g.at("unused") == Tensor(2, 2));
}

TEST_CASE("every op passes finite-difference checks") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    for (const auto& [ops, r] : gatsy::testing::op_gradient_checks(seed)) {
      INFO("seed " << seed << ", " << ops << ", worst element " << r.worst);
      CHECK(r.max_rel_error < kTol);
    }
  }
}

TEST_CASE("batch norm statistics") {
  ad::Tape tape;
  const Tensor x = Tensor::from_rows({{1, 10}, {3, 10}});
  ad::BatchNormStats stats{Tensor(1, 2), Tensor(1, 2, 1.0)};
  const auto y = ad::batch_norm(tape.constant(x), tape.constant(Tensor(1, 2, 1.0)),
                                tape.constant(Tensor(1, 2)), stats, ad::BatchNormMode::kTrain);
  CHECK(y.value()(0, 0) == doctest::Approx(-1.0 / std::sqrt(1.0 + 1e-5)));
  CHECK(y.value()(0, 1) == 0.0);
  // Momentum 0.1 toward the batch mean; the running variance uses the
  // unbiased batch variance.
  CHECK(stats.running_mean(0, 0) == doctest::Approx(0.2));
  CHECK(stats.running_mean(0, 1) == doctest::Approx(1.0));
  CHECK(stats.running_var(0, 0) == doctest::Approx(0.9 + 0.1 * 2.0));

  const auto e = ad::batch_norm(tape.constant(x), tape.constant(Tensor(1, 2, 1.0)),
                                tape.constant(Tensor(1, 2)), stats, ad::BatchNormMode::kEval);
  CHECK(e.value()(0, 0) == doctest::Approx((1 - 0.2) / std::sqrt(1.1 + 1e-5)));

  ad::BatchNormStats s2{Tensor(1, 2), Tensor(1, 2, 1.0)};
  CHECK_THROWS(ad::batch_norm(tape.constant(Tensor(1, 2)), tape.constant(Tensor(1, 2, 1.0)),
                              tape.constant(Tensor(1, 2)), s2, ad::BatchNormMode::kTrain));
}
