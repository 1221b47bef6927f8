#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "fixtures.hpp"
#include "rdbn/errors.hpp"
#include "rdbn/evaluation.hpp"

using namespace rdbn;

namespace {

// Exhaustive pairwise comparison, ties credited 0.5.
double pairwise_auc(const std::vector<int>& labels, const std::vector<double>& scores) {
  double credit = 0.0, pairs = 0.0;
  for (std::size_t a = 0; a < labels.size(); ++a) {
    for (std::size_t b = 0; b < labels.size(); ++b) {
      if (labels[a] != 1 || labels[b] != 0) continue;
      pairs += 1.0;
      credit += scores[a] > scores[b] ? 1.0 : scores[a] == scores[b] ? 0.5 : 0.0;
    }
  }
  return credit / pairs;
}

HoldoutMask two_entry_mask() {
  HoldoutMask m;
  m.entries = {{0, {0, 1}, 1}, {0, {1, 0}, 0}};
  return m;
}

} // namespace

TEST_CASE("auc") {
  const std::vector<int> labels{1, 0, 1, 0};
  const std::vector<double> scores{0.9, 0.8, 0.7, 0.6};
  CHECK(auc(labels, scores) == doctest::Approx(0.75));
  const std::vector<double> separated{0.9, 0.1, 0.8, 0.2};
  CHECK(auc(labels, separated) == 1.0);
  const std::vector<double> flat{0.5, 0.5, 0.5, 0.5};
  CHECK(auc(labels, flat) == 0.5);
  const std::vector<int> single{1, 1};
  const std::vector<double> two{0.1, 0.2};
  CHECK_THROWS_WITH_AS(auc(single, two), doctest::Contains("auc"), ParameterError);

  SUBCASE("random cases match the pairwise oracle and its invariants") {
    RngStream rng(3, stream_key(StreamFamily::test, 3));
    for (int rep = 0; rep < 50; ++rep) {
      std::vector<int> l(40);
      std::vector<double> s(40);
      for (int e = 0; e < 40; ++e) {
        l[e] = rng.uniform() < 0.3 ? 1 : 0;
        s[e] = std::floor(rng.uniform() * 10.0) / 10.0;  // plenty of ties
      }
      l[0] = 1;
      l[1] = 0;
      CHECK(auc(l, s) == doctest::Approx(pairwise_auc(l, s)).epsilon(1e-12));
      std::vector<double> cubed(s);
      for (double& v : cubed) v = v * v * v + 2.0;
      CHECK(auc(l, cubed) == doctest::Approx(auc(l, s)).epsilon(1e-12));
      // tie-free flip identity
      std::vector<double> distinct(40);
      std::vector<int> flipped(40);
      for (int e = 0; e < 40; ++e) {
        distinct[e] = rng.uniform();
        flipped[e] = 1 - l[e];
      }
      CHECK(auc(l, distinct) + auc(flipped, distinct) == doctest::Approx(1.0));
    }
  }
}

TEST_CASE("average precision") {
  const std::vector<double> ranked{0.9, 0.8, 0.7, 0.6};
  const std::vector<int> labels{1, 0, 1, 0};
  CHECK(average_precision(labels, ranked) == doctest::Approx((1.0 + 2.0 / 3.0) / 2.0));
  const std::vector<int> perfect{1, 1, 0, 0};
  CHECK(average_precision(perfect, ranked) == 1.0);
  const std::vector<int> all{1, 1, 1, 1};
  CHECK(average_precision(all, ranked) == 1.0);
  const std::vector<int> none{0, 0, 0, 0};
  CHECK_THROWS_AS(average_precision(none, ranked), ParameterError);
  // ties keep input order
  const std::vector<double> tied{0.5, 0.5};
  const std::vector<int> late{0, 1};
  CHECK(average_precision(late, tied) == doctest::Approx(0.5));
  // prevalence is not a floor: a bad ranking can sit below it
  const std::vector<int> last{0, 0, 1, 1};
  CHECK(average_precision(last, ranked) == doctest::Approx((1.0 / 3.0 + 0.5) / 2.0));
  CHECK(average_precision(last, ranked) < 0.5);

  RngStream rng(4, stream_key(StreamFamily::test, 4));
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<int> l(30);
    std::vector<double> s(30);
    int pos = 0;
    for (int e = 0; e < 30; ++e) {
      l[e] = rng.uniform() < 0.4 ? 1 : 0;
      s[e] = rng.uniform();
      pos += l[e];
    }
    if (pos == 0) continue;
    // floor: every positive ranked below every negative
    double worst = 0.0;
    for (int r = 1; r <= pos; ++r) worst += static_cast<double>(r) / (30 - pos + r);
    worst /= pos;
    CHECK(average_precision(l, s) >= worst - 1e-12);
  }
}

TEST_CASE("predicted probabilities") {
  HoldoutMask mask;
  mask.entries = {{0, {0, 1}, 1}};
  LatentState zero(2, 1, 1, 1, true);
  zero.X = {0, 3};
  zero.lambda = {1.0};
  const std::vector<LatentState> one{zero};
  CHECK(predict_probs(one, mask)[0] == 0.0);

  auto inf = zero;
  inf.X = {1, 1};
  inf.lambda = {std::numeric_limits<double>::infinity()};
  const std::vector<LatentState> pair{zero, inf};
  CHECK(predict_probs(pair, mask)[0] == doctest::Approx(0.5));

  CHECK_THROWS_AS(predict_probs(std::span<const LatentState>{}, mask), ParameterError);
  PosteriorAccumulator empty;
  CHECK_THROWS_AS(predict_probs(empty, mask), ParameterError);

  SUBCASE("accumulator matches direct averaging") {
    const auto net = testing::random_network(8, 2, true, 0.3, 5);
    const auto split = split_holdout(net, 0.2, 5);
    GibbsSampler sampler(testing::small_hp(2, 2), 5);
    auto s = sampler.initialise(split.training);
    std::vector<LatentState> kept;
    PosteriorAccumulator acc;
    for (int it = 1; it <= 6; ++it) {
      sampler.iterate(s, split.training, it);
      kept.push_back(s);
      acc.add(s, split.mask);
    }
    const auto a = predict_probs(acc, split.mask);
    const auto b = predict_probs(kept, split.mask);
    REQUIRE(a.size() == split.mask.entries.size());
    for (std::size_t e = 0; e < a.size(); ++e) {
      double surv = 0.0;
      const auto& h = split.mask.entries[e];
      for (const auto& k : kept) surv += std::exp(-link_rate(k, h.dyad.i, h.dyad.j, h.t));
      const double oracle = 1.0 - surv / 6.0;
      CHECK(std::abs(a[e] - oracle) < 1e-12);
      CHECK(std::abs(b[e] - oracle) < 1e-12);
      CHECK(a[e] >= 0.0);
      CHECK(a[e] <= 1.0);
    }
  }
}

TEST_CASE("reports") {
  const auto mask = two_entry_mask();
  const std::vector<double> good{0.8, 0.2};
  const auto r = make_report(mask, good, 3);
  CHECK(r.auc == 1.0);
  CHECK(r.avg_precision == 1.0);
  CHECK(r.entries.size() == 2);
  CHECK(r.entries[1].j == 0);

  HoldoutMask single;
  single.entries = {{0, {0, 1}, 0}, {0, {1, 0}, 0}};
  CHECK_THROWS_WITH(make_report(single, good, 1), doctest::Contains("auc"));

  const auto dir = std::filesystem::temp_directory_path() / "rdbn_test_evaluation";
  std::filesystem::create_directories(dir);
  save_predictions(r, dir / "predictions.csv");
  save_summary(r, dir / "summary.csv");
  const auto back = load_predictions(dir / "predictions.csv", 3);
  REQUIRE(back.entries.size() == 2);
  CHECK(back.entries[0].prob == 0.8);
  CHECK(back.entries[1].label == 0);
  CHECK(back.auc == 1.0);
  std::ifstream in(dir / "summary.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "auc,avg_precision,n_entries,n_samples");
  std::filesystem::remove_all(dir);
}
