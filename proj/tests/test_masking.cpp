#include "support.hpp"

#include "scmm/errors.hpp"
#include "scmm/masking.hpp"

#include <doctest.h>

#include <algorithm>

using namespace scmm;

namespace {

double channel_row_fraction(const MaskPlan& plan) {
  return static_cast<double>(std::count(plan.row_strategy.begin(), plan.row_strategy.end(),
                                        RowStrategy::channel)) /
         static_cast<double>(plan.row_strategy.size());
}

bool rows_homogeneous(const BoolMatrix& keep) {
  for (Index c = 0; c < keep.rows(); ++c) {
    if (!keep.row(c).all() && keep.row(c).any()) return false;
  }
  return true;
}

}  // namespace

TEST_SUITE("masking") {

TEST_CASE("masked fraction is close to r for every strategy") {
  for (auto strategy : {MaskStrategy::random, MaskStrategy::channel, MaskStrategy::parallel,
                        MaskStrategy::hybrid}) {
    const MaskConfig config{strategy, 0.3, 0.5};
    double masked = 0.0;
    const int samples = 400;
    for (int i = 0; i < samples; ++i) masked += make_mask(config, 62, 5, 1000 + i).masked_fraction();
    CHECK(masked / samples == doctest::Approx(0.3).epsilon(0.02 / 0.3));
  }
}

TEST_CASE("channel masks have constant rows") {
  const auto plan = channel_mask(10000, 7, 0.5, 3);
  CHECK(rows_homogeneous(plan.keep));
  CHECK(channel_row_fraction(plan) == 1.0);
  CHECK(plan.masked_fraction() == doctest::Approx(0.5).epsilon(0.04));
}

TEST_CASE("hybrid routes rows by the threshold") {
  const auto plan = hybrid_mask(100000, 5, 0.5, 0.1, 9);
  CHECK(std::abs(channel_row_fraction(plan) - 0.1) < 0.01);
  for (Index c = 0; c < plan.channel_count(); ++c) {
    if (plan.row_strategy[static_cast<std::size_t>(c)] == RowStrategy::channel) {
      CHECK_FALSE((!plan.keep.row(c).all() && plan.keep.row(c).any()));
    }
  }
  CHECK(channel_row_fraction(hybrid_mask(1000, 5, 0.5, 0.0, 1)) == 0.0);
  CHECK(channel_row_fraction(hybrid_mask(1000, 5, 0.5, 1.0, 1)) == 1.0);
}

TEST_CASE("parallel masks pick one strategy per sample") {
  int channel_samples = 0;
  const int n = 4000;
  for (int i = 0; i < n; ++i) {
    const auto plan = parallel_mask(8, 5, 0.5, 0.5, static_cast<std::uint64_t>(i));
    const double f = channel_row_fraction(plan);
    CHECK((f == 0.0 || f == 1.0));
    channel_samples += f == 1.0 ? 1 : 0;
  }
  CHECK(std::abs(channel_samples / static_cast<double>(n) - 0.5) < 0.03);
}

TEST_CASE("masks are deterministic per seed") {
  const MaskConfig config;
  CHECK((make_mask(config, 62, 5, 42).keep == make_mask(config, 62, 5, 42).keep).all());
  CHECK_FALSE((make_mask(config, 62, 5, 42).keep == make_mask(config, 62, 5, 43).keep).all());
}

TEST_CASE("single-band channel masks behave like random masks") {
  const auto r = random_mask(100000, 1, 0.4, 5);
  const auto c = channel_mask(100000, 1, 0.4, 6);
  CHECK(std::abs(r.masked_fraction() - c.masked_fraction()) < 0.01);
}

TEST_CASE("apply zeroes masked entries and keeps the rest bit for bit") {
  Rng rng(2);
  const FeatureMatrix x = scmm::test::random_sample(6, 5, rng);
  const auto plan = random_mask(6, 5, 0.5, 8);
  const FeatureMatrix y = apply(x, plan);
  for (Index i = 0; i < 6; ++i) {
    for (Index j = 0; j < 5; ++j) {
      if (plan.keep(i, j)) {
        CHECK(y.values(i, j) == x.values(i, j));
      } else {
        CHECK(y.values(i, j) == 0.0);
      }
    }
  }
  CHECK((apply(y, plan).values.array() == y.values.array()).all());

  MaskPlan ones{BoolMatrix::Constant(6, 5, true), {}};
  CHECK((apply(x, ones).values.array() == x.values.array()).all());
  MaskPlan zeros{BoolMatrix::Constant(6, 5, false), {}};
  CHECK(apply(x, zeros).values.isZero(0.0));
  CHECK_THROWS_AS(apply(x, random_mask(5, 5, 0.5, 1)), DimensionError);
}

TEST_CASE("invalid mask parameters") {
  CHECK_THROWS_AS(random_mask(4, 4, 0.0, 1), ConfigError);
  CHECK_THROWS_AS(random_mask(4, 4, 1.0, 1), ConfigError);
  CHECK_THROWS_AS(hybrid_mask(4, 4, 0.5, 1.5, 1), ConfigError);
  CHECK_THROWS_AS(parse_mask_strategy("diagonal"), ConfigError);
  CHECK(parse_mask_strategy(to_string(MaskStrategy::parallel)) == MaskStrategy::parallel);
  const auto nearly_all = random_mask(100, 100, 0.999999, 3);
  CHECK(nearly_all.masked_fraction() > 0.999);
}

}  // TEST_SUITE
