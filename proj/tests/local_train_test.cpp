// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <random>

#include "nilm/gru_model.hpp"
#include "nilm/local_train.hpp"
#include "support.hpp"

namespace {

using namespace nilm;
using nilm::testing::QuadraticModel;
using nilm::testing::sample;

std::vector<Seq2PointSample> random_samples(std::size_t n, std::size_t input_len,
                                            std::size_t outputs, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Seq2PointSample> out;
  for (std::size_t i = 0; i < n; ++i) {
    Seq2PointSample s;
    s.source_index = i;
    for (std::size_t k = 0; k < input_len; ++k)
      s.input.push_back(u(rng));
    for (std::size_t k = 0; k < outputs; ++k)
      s.target.push_back(u(rng));
    out.push_back(std::move(s));
  }
  return out;
}

Seq2PointGru small_model() {
  ModelSpec s;
  s.input_len = 6;
  s.output_len = 2;
  s.recurrent_hidden = 3;
  s.dense_widths = {4};
  return Seq2PointGru(s);
}

TEST(LocalUpdate, QuadraticSurrogateOneStep) {
  // Loss w^2 (target 0), w = 1, gamma = 0.1: 1 - 0.1 * 2 = 0.8.
  const QuadraticModel m(1);
  const std::vector<Seq2PointSample> data{sample({0.0}, {0.0})};
  const auto out = local_update(m, ParameterVector(Eigen::VectorXd{{1.0}}), data,
                                LocalTrainConfig{0.1, 1, 1, 0});
  EXPECT_DOUBLE_EQ(out.values[0], 0.8);
}

TEST(LocalUpdate, ZeroStepReturnsInputExactly) {
  const auto m = small_model();
  const auto data = random_samples(37, 6, 2, 1);
  const auto w = m.init_params(3);
  EXPECT_TRUE(local_update(m, w, data, LocalTrainConfig{0.0, 3, 5, 9}) == w);
}

TEST(LocalUpdate, SingleSampleIsOneGradientStep) {
  const auto m = small_model();
  const auto data = random_samples(1, 6, 2, 2);
  const auto w = m.init_params(4);
  const auto out = local_update(m, w, data, LocalTrainConfig{0.3, 1, 1, 0});
  const Eigen::VectorXd expected = w.values - 0.3 * m.gradient(w, make_batch(data)).values;
  EXPECT_TRUE(out == ParameterVector(expected));
}

TEST(LocalUpdate, ShuffledMinibatchesMatchManualUnrolling) {
  // Re-derive the batch order from the documented seed rule and replay it.
  const auto m = small_model();
  const auto data = random_samples(11, 6, 2, 3);
  const auto w0 = m.init_params(5);
  const LocalTrainConfig cfg{0.2, 2, 4, 17};
  ParameterVector w = w0;
  for (std::size_t epoch = 0; epoch < 2; ++epoch) {
    std::vector<std::size_t> order(11);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng = make_rng(derive_seed(17, epoch));
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < 11; start += 4) {
      const std::size_t len = std::min<std::size_t>(4, 11 - start);
      const Batch b = make_batch(data, std::span<const std::size_t>(order).subspan(start, len));
      w.values -= 0.2 * m.gradient(w, b).values;
    }
  }
  LocalUpdateStats stats;
  EXPECT_TRUE(local_update(m, w0, data, cfg, &stats) == w);
  EXPECT_EQ(stats.steps, 6u); // 3 batches (4, 4, 3) per epoch
}

TEST(LocalUpdate, InputNotMutatedAndDeterministic) {
  const auto m = small_model();
  const auto data = random_samples(20, 6, 2, 4);
  const auto w = m.init_params(6);
  const auto copy = w;
  const LocalTrainConfig cfg{0.1, 2, 3, 1};
  const auto a = local_update(m, w, data, cfg);
  const auto b = local_update(m, w, data, cfg);
  EXPECT_TRUE(w == copy);
  EXPECT_TRUE(a == b);
  EXPECT_FALSE(a == w);
}

TEST(LocalUpdate, LossDecreasesWithSmallStep) {
  const auto m = small_model();
  const auto data = random_samples(100, 6, 2, 5);
  const auto w = m.init_params(7);
  const double before = evaluate(m, w, data);
  const auto after = local_update(m, w, data, LocalTrainConfig{1e-3, 5, 10, 0});
  EXPECT_LT(evaluate(m, after, data), before);
}

TEST(LocalUpdate, RejectsBadInput) {
  const auto m = small_model();
  const auto w = m.init_params(1);
  const std::vector<Seq2PointSample> none;
  EXPECT_THROW(local_update(m, w, none, LocalTrainConfig{}), ValidationError);
  const auto data = random_samples(3, 6, 2, 1);
  EXPECT_THROW(local_update(m, w, data, LocalTrainConfig{-1.0, 1, 1, 0}), ValidationError);
  EXPECT_THROW(local_update(m, w, data, LocalTrainConfig{0.1, 0, 1, 0}), ValidationError);
  EXPECT_THROW(local_update(m, w, data, LocalTrainConfig{0.1, 1, 0, 0}), ValidationError);
  EXPECT_THROW(local_update(m, ParameterVector(2), data, LocalTrainConfig{}), ValidationError);
}

TEST(LocalUpdate, DivergenceReportsEpochAndBatch) {
  const QuadraticModel m(1);
  const std::vector<Seq2PointSample> data{sample({0.0}, {1.0}), sample({0.0}, {2.0})};
  try {
    local_update(m, ParameterVector(Eigen::VectorXd{{1.0}}), data,
                 LocalTrainConfig{1e154, 3, 1, 0});
    FAIL();
  } catch (const RuntimeFailure &e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("epoch"), std::string::npos) << msg;
    EXPECT_NE(msg.find("batch"), std::string::npos) << msg;
  }
}

TEST(Evaluate, EqualsWholeSetLossAndIgnoresOrder) {
  const auto m = small_model();
  auto data = random_samples(50, 6, 2, 8);
  const auto w = m.init_params(8);
  const double e = evaluate(m, w, data);
  EXPECT_NEAR(e, m.loss(w, make_batch(data)), 1e-12);
  std::mt19937_64 rng(1);
  std::shuffle(data.begin(), data.end(), rng);
  EXPECT_NEAR(evaluate(m, w, data), e, 1e-12);
}

TEST(Evaluate, PerfectModelIsZero) {
  const QuadraticModel m(2);
  const std::vector<Seq2PointSample> data{sample({0.0}, {0.5, -1.0})};
  EXPECT_EQ(evaluate(m, ParameterVector(Eigen::VectorXd{{0.5, -1.0}}), data), 0.0);
  EXPECT_THROW(evaluate(m, ParameterVector(2), std::vector<Seq2PointSample>{}), ValidationError);
}

} // namespace
