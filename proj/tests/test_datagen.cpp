#include <cmath>
#include <filesystem>
#include <map>

#include "adaplan/datagen.hpp"
#include "adaplan/errors.hpp"
#include "doctest.h"

using namespace adaplan;

namespace {

const Dataset& small_dataset() {
  static const Dataset ds = collect(EnvConfig{}, BehaviorConfig{}, 3000, 11);
  return ds;
}

}  // namespace

TEST_CASE("collect is deterministic and well formed") {
  const Dataset& a = small_dataset();
  const Dataset b = collect(EnvConfig{}, BehaviorConfig{}, 3000, 11);
  CHECK(a.transitions.size() >= 3000u);
  CHECK_NOTHROW(a.validate());
  REQUIRE(a.transitions.size() == b.transitions.size());
  for (std::size_t i = 0; i < a.transitions.size(); ++i) {
    CHECK(a.transitions[i].obs == b.transitions[i].obs);
    CHECK(a.transitions[i].action == b.transitions[i].action);
  }
  CHECK(a.obs_dim() == 35);
  for (std::size_t e = 0; e < a.num_episodes(); ++e) CHECK(a.episode_length(e) >= 2u);
  // transitions chain: next_obs of step t is obs of step t + 1
  for (std::size_t i = 0; i + 1 < a.transitions.size(); ++i) {
    if (!a.transitions[i].done) CHECK(a.transitions[i].next_obs == a.transitions[i + 1].obs);
  }
}

TEST_CASE("expert without noise picks a noiseless action stream") {
  BehaviorConfig b;
  b.epsilon = 0.0;
  const Dataset ds = collect(EnvConfig{}, b, 500, 3);
  std::map<int, int> counts;
  for (const auto& t : ds.transitions) counts[t.action]++;
  CHECK(counts[static_cast<int>(Action::kIdle)] > 0);
  Rng rng(1);
  const EnvConfig env;
  const ResetResult r = reset(env, 1);
  const DriverProfile d{env.v_max};
  CHECK(behavior_action(env, r.state, d, b, 0.0, rng) == expert_action(env, r.state, d, b));
}

TEST_CASE("dataset file round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "adaplan_test_data";
  std::filesystem::create_directories(dir);
  const auto path = dir / "d.jsonl";
  write_dataset(path, small_dataset());
  const Dataset back = read_dataset(path);
  REQUIRE(back.transitions.size() == small_dataset().transitions.size());
  for (std::size_t i = 0; i < back.transitions.size(); ++i) {
    CHECK(back.transitions[i].obs == small_dataset().transitions[i].obs);
    CHECK(back.transitions[i].reward == small_dataset().transitions[i].reward);
  }
  CHECK(back.episode_offsets == small_dataset().episode_offsets);
  std::filesystem::remove_all(dir);
}

TEST_CASE("normalization statistics") {
  const Dataset& ds = small_dataset();
  const NormStats st = norm_stats(ds);
  REQUIRE(st.dim() == 35u);
  // recompute one column directly
  double m = 0, s = 0;
  for (const auto& t : ds.transitions) m += t.obs[3];
  m /= ds.transitions.size();
  for (const auto& t : ds.transitions) s += (t.obs[3] - m) * (t.obs[3] - m);
  s = std::sqrt(s / ds.transitions.size());
  CHECK(st.mean[3] == doctest::Approx(m).epsilon(1e-12));
  CHECK(st.std[3] == doctest::Approx(s).epsilon(1e-12));
  // the presence flag of the ego is constant, its std is floored
  CHECK(st.std[0] == kStdFloor);
  const auto z = normalize(ds.transitions[5].obs, st);
  const auto back = denormalize(z, st);
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i] == doctest::Approx(ds.transitions[5].obs[i]).epsilon(1e-12));
  }
  CHECK(st.hash() == norm_stats(ds).hash());
  CHECK_THROWS_AS(normalize(std::vector<double>(3), st), ShapeError);
}

TEST_CASE("window sampling is uniform over valid starts") {
  const Dataset& ds = small_dataset();
  const NormStats st = norm_stats(ds);
  const int H = 16;
  const WindowSampler sampler(ds, st, H);
  std::size_t expected = 0;
  for (std::size_t e = 0; e < ds.num_episodes(); ++e) {
    if (ds.episode_length(e) >= static_cast<std::size_t>(H)) expected += ds.episode_length(e) - H + 1;
  }
  REQUIRE(sampler.count() == expected);

  // windows never cross an episode boundary
  for (std::size_t i = 0; i < sampler.count(); ++i) {
    const auto& first = ds.transitions[sampler.start(i)];
    const auto& last = ds.transitions[sampler.start(i) + H - 1];
    CHECK(first.episode == last.episode);
  }

  // chi-square over buckets of start indices
  Rng rng(5);
  const int buckets = 20;
  const std::size_t draws = 40000;
  std::vector<double> observed(buckets, 0.0);
  std::map<std::size_t, std::size_t> index_of;
  for (std::size_t i = 0; i < sampler.count(); ++i) index_of[sampler.start(i)] = i;
  const Matrix batch = sampler.sample(draws, rng);
  REQUIRE(batch.cols() == H * 35);
  // identify each row by matching its first slot to a start transition
  std::map<std::vector<double>, std::size_t> by_first;
  for (std::size_t i = 0; i < sampler.count(); ++i) {
    const Matrix w = sampler.window(i);
    by_first[std::vector<double>(w.data(), w.data() + H * 35)] = i;
  }
  for (Eigen::Index r = 0; r < batch.rows(); ++r) {
    const auto it = by_first.find(std::vector<double>(batch.row(r).data(), batch.row(r).data() + H * 35));
    REQUIRE(it != by_first.end());
    observed[it->second * buckets / sampler.count()] += 1.0;
  }
  double chi2 = 0.0;
  for (int b = 0; b < buckets; ++b) {
    const std::size_t lo = (b * sampler.count() + buckets - 1) / buckets;
    const std::size_t hi = ((b + 1) * sampler.count() + buckets - 1) / buckets;
    const double e = static_cast<double>(draws) * (hi - lo) / sampler.count();
    chi2 += (observed[b] - e) * (observed[b] - e) / e;
  }
  // 19 degrees of freedom, 99.9th percentile is 43.8
  CHECK(chi2 < 43.8);
}

TEST_CASE("window sampler rejects datasets without a long enough episode") {
  const Dataset& ds = small_dataset();
  const NormStats st = norm_stats(ds);
  CHECK_THROWS(WindowSampler(ds, st, 1000));
}

TEST_CASE("pairs carry the action taken") {
  const Dataset& ds = small_dataset();
  const NormStats st = norm_stats(ds);
  const PairBatch all = all_pairs(ds, st);
  REQUIRE(all.inputs.rows() == static_cast<Eigen::Index>(ds.transitions.size()));
  CHECK(all.inputs.cols() == 70);
  const auto z = normalize(ds.transitions[7].next_obs, st);
  for (int c = 0; c < 35; ++c) CHECK(all.inputs(7, 35 + c) == z[c]);
  CHECK(all.actions[7] == ds.transitions[7].action);
}

TEST_CASE("episode subsets renumber episodes") {
  const Dataset& ds = small_dataset();
  const Dataset tail = subset_episodes(ds, 2, ds.num_episodes());
  CHECK_NOTHROW(tail.validate());
  CHECK(tail.num_episodes() == ds.num_episodes() - 2);
  CHECK(tail.transitions.front().obs == ds.transitions[ds.episode_offsets[2]].obs);
  CHECK_THROWS(subset_episodes(ds, 3, 2));
}
