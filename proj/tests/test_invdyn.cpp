#include <algorithm>
#include <cmath>
#include <filesystem>

#include "adaplan/errors.hpp"
#include "adaplan/invdyn.hpp"
#include "adaplan/prob.hpp"
#include "doctest.h"

using namespace adaplan;

namespace {

const Dataset& data() {
  static const Dataset ds = collect(EnvConfig{}, BehaviorConfig{}, 1200, 31);
  return ds;
}

InvDynConfig small_config(int members) {
  InvDynConfig c;
  c.members = members;
  c.hidden = {16};
  c.epochs = 2;
  c.batch = 64;
  return c;
}

}  // namespace

TEST_CASE("entropy examples") {
  CHECK(entropy(std::vector<double>{0, 0, 1, 0, 0}) == 0.0);
  CHECK(std::abs(entropy(std::vector<double>(5, 0.2)) - std::log(5.0)) < 1e-12);
  CHECK(entropy(std::vector<double>{0.5, 0.25, 0.25, 0, 0}) ==
        doctest::Approx(1.5 * std::log(2.0)).epsilon(1e-12));
  CHECK_THROWS(entropy(std::vector<double>{1.1, -0.1}));
}

TEST_CASE("combining member distributions") {
  const std::vector<std::vector<double>> same{{0, 0, 0, 1, 0}, {0, 0, 0, 1, 0}};
  const auto a = combine_members(same);
  CHECK(a.entropy == 0.0);
  CHECK(a.action == 3);

  const std::vector<std::vector<double>> split{{1, 0, 0, 0, 0}, {0, 1, 0, 0, 0}};
  const auto b = combine_members(split);
  CHECK(b.probabilities[0] == 0.5);
  CHECK(b.entropy == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(b.action == 0);

  const std::vector<std::vector<double>> flat{std::vector<double>(5, 0.2)};
  const auto c = combine_members(flat);
  CHECK(c.entropy == doctest::Approx(std::log(5.0)).epsilon(1e-12));
  CHECK(c.action == 0);
  CHECK_THROWS(combine_members(std::vector<std::vector<double>>{}));
}

TEST_CASE("ensemble predictions: bounds, symmetry, single member") {
  const NormStats st = norm_stats(data());
  const Ensemble e = train_ensemble(data(), st, small_config(3), 100);
  REQUIRE(e.size() == 3u);
  for (std::size_t i = 0; i < 50; ++i) {
    const auto& t = data().transitions[i];
    const auto p = e.predict(t.obs, t.next_obs);
    double sum = 0;
    for (double v : p.probabilities) sum += v;
    CHECK(std::abs(sum - 1.0) < 1e-9);
    CHECK(p.entropy >= 0.0);
    CHECK(p.entropy <= std::log(5.0) + 1e-12);
    CHECK(p.action == static_cast<int>(std::max_element(p.probabilities.begin(), p.probabilities.end()) - p.probabilities.begin()));
  }

  // member order does not matter
  std::vector<ActionModel> reversed(e.members().rbegin(), e.members().rend());
  const Ensemble r(reversed, st);
  const auto& t = data().transitions[3];
  const auto p1 = e.predict(t.obs, t.next_obs), p2 = r.predict(t.obs, t.next_obs);
  for (int k = 0; k < 5; ++k) CHECK(p1.probabilities[k] == doctest::Approx(p2.probabilities[k]).epsilon(1e-15));

  // a one-member ensemble is the member itself; copies change nothing
  const Ensemble one({e.members()[0]}, st);
  const Ensemble twice({e.members()[0], e.members()[0]}, st);
  const auto q1 = one.predict(t.obs, t.next_obs), q2 = twice.predict(t.obs, t.next_obs);
  CHECK(q1.probabilities == q2.probabilities);
  std::vector<double> input = normalize(t.obs, st);
  const auto z = normalize(t.next_obs, st);
  input.insert(input.end(), z.begin(), z.end());
  CHECK(q1.probabilities == softmax(forward(e.members()[0].spec, e.members()[0].params, input)));

  CHECK_THROWS_AS(e.predict(std::vector<double>(3), t.next_obs), ShapeError);
}

TEST_CASE("training is deterministic per seed and members differ") {
  const NormStats st = norm_stats(data());
  const PairBatch pairs = all_pairs(data(), st);
  const ActionModel a = train_action_model(pairs, 35, small_config(1), 7);
  const ActionModel b = train_action_model(pairs, 35, small_config(1), 7);
  const ActionModel c = train_action_model(pairs, 35, small_config(1), 8);
  CHECK(a.params == b.params);
  CHECK_FALSE(a.params == c.params);
  const Ensemble e = train_ensemble(data(), st, small_config(2), 7);
  CHECK(e.members()[0].params == a.params);
  CHECK(e.members()[1].params == c.params);
}

TEST_CASE("softmax cross entropy gradient") {
  Matrix logits(2, 5);
  logits << 0, 0, 0, 0, 0, 1, 2, 3, 4, 5;
  Matrix d;
  const std::vector<int> labels{0, 4};
  const double loss = softmax_cross_entropy(logits, labels, d);
  const double z = std::exp(1) + std::exp(2) + std::exp(3) + std::exp(4) + std::exp(5);
  CHECK(loss == doctest::Approx(0.5 * (std::log(5.0) - std::log(std::exp(5) / z))));
  CHECK(d(0, 0) == doctest::Approx((0.2 - 1.0) / 2));
  CHECK(d(1, 1) == doctest::Approx(std::exp(2) / z / 2));
}

TEST_CASE("ensemble directory round trip") {
  const NormStats st = norm_stats(data());
  const Ensemble e = train_ensemble(data(), st, small_config(2), 40);
  const auto dir = std::filesystem::temp_directory_path() / "adaplan_test_ensemble";
  std::filesystem::remove_all(dir);
  save_ensemble(dir, e, small_config(2));
  const Ensemble back = load_ensemble(dir);
  REQUIRE(back.size() == 2u);
  CHECK(back.members()[1].params == e.members()[1].params);
  CHECK(back.members()[1].seed == 41u);
  CHECK(back.stats() == st);
  std::filesystem::remove(dir / "member_1.ckpt");
  CHECK_THROWS(load_ensemble(dir));
  std::filesystem::remove_all(dir);
}
