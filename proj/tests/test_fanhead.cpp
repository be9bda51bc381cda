#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "fan/errors.hpp"
#include "fan/fanhead.hpp"
#include "fan/gradcheck.hpp"
#include "fan/rng.hpp"
#include "scalar_oracle.hpp"

using namespace fan;

namespace {

Matrix random_frames(std::size_t n, std::size_t d, Rng& rng) {
  std::vector<double> v(n * d);
  for (auto& x : v) x = rng.normal();
  return Matrix(n, d, std::move(v));
}

FanParams random_params(Mode mode, std::size_t d, std::size_t c, Rng& rng) {
  FanParams p = FanParams::initialize(mode, d, c, rng.next_u64());
  for (double& b : p.class_bias.span()) b = rng.uniform(-0.5, 0.5);
  return p;
}

oracle::Head to_oracle(const FanParams& p) {
  oracle::Head h{p.mode == Mode::Full, p.q0.values(), p.q1.values(), {}, p.class_bias.values()};
  for (std::size_t k = 0; k < p.classes(); ++k) {
    auto r = p.class_weight.row(k);
    h.weight.emplace_back(r.begin(), r.end());
  }
  return h;
}

oracle::Rows to_rows(const Matrix& m) {
  oracle::Rows rows;
  for (std::size_t i = 0; i < m.rows(); ++i) rows.emplace_back(m.row(i).begin(), m.row(i).end());
  return rows;
}

Matrix repeat_rows(const Matrix& m, std::size_t times) {
  std::vector<std::size_t> idx;
  for (std::size_t t = 0; t < times; ++t) {
    for (std::size_t i = 0; i < m.rows(); ++i) idx.push_back(i);
  }
  return m.select_rows(idx);
}

}  // namespace

TEST(SelfAttention, Examples) {
  const Matrix f{{1, 0}, {0, 1}};
  EXPECT_EQ(self_attention(f, Vector{0, 0}), (Vector{0.5, 0.5}));
  const Vector a = self_attention(f, Vector{1, 0});
  EXPECT_NEAR(a[0], 0.731058578630004879, 1e-15);
  EXPECT_EQ(a[1], 0.5);
  EXPECT_EQ(self_attention(Matrix{{2, 2}}, Vector{1, -1}), (Vector{0.5}));
}

TEST(SelfAttention, DimensionMismatch) {
  EXPECT_THROW(self_attention(Matrix{{1, 2}}, Vector{1, 2, 3}), DimensionError);
}

TEST(GlobalAnchor, Examples) {
  const Vector m = global_anchor(Matrix{{1, 0}, {0, 1}}, Vector{0.5, 0.5});
  EXPECT_NEAR(m[0], 0.5, 1e-15);
  EXPECT_NEAR(m[1], 0.5, 1e-15);
  EXPECT_EQ(global_anchor(Matrix{{3, -7}}, Vector{0.123}), (Vector{3, -7}));
  const Vector w = global_anchor(Matrix{{2, 0}, {0, 2}}, Vector{0.75, 0.25});
  EXPECT_NEAR(w[0], 1.5, 1e-15);
  EXPECT_NEAR(w[1], 0.5, 1e-15);
  EXPECT_EQ(aggregate_self_only(Matrix{{2, 0}, {0, 2}}, Vector{0.75, 0.25}), w);
}

TEST(GlobalAnchor, NonPositiveWeightIsDomainError) {
  EXPECT_THROW(global_anchor(Matrix{{1, 0}, {0, 1}}, Vector{0.5, 0.0}), DomainError);
  EXPECT_THROW(global_anchor(Matrix{{1, 0}, {0, 1}}, Vector{0.5, -1.0}), DomainError);
}

TEST(RelationAttention, Examples) {
  Rng rng(2);
  const Matrix f = random_frames(4, 3, rng);
  const Vector zero_beta = relation_attention(f, Vector{1, 2, 3}, Vector::zeros(6));
  for (double b : zero_beta.values()) EXPECT_EQ(b, 0.5);

  const Vector b = relation_attention(Matrix{{1, 0}}, Vector{1, 0}, Vector{1, 0, 1, 0});
  EXPECT_NEAR(b[0], 0.880797077977882444, 1e-15);

  const Matrix same{{0.3, -1.2}, {0.3, -1.2}, {0.3, -1.2}};
  const Vector bs = relation_attention(same, Vector{0.3, -1.2}, Vector{0.4, 0.1, -2, 5});
  EXPECT_EQ(bs[0], bs[1]);
  EXPECT_EQ(bs[1], bs[2]);
}

TEST(Aggregate, Examples) {
  EXPECT_EQ(aggregate(Matrix{{1, 0}, {0, 1}}, Vector{0.5, 0.5}, Vector{0.5, 0.5}, Vector{0.5, 0.5}),
            (Vector{0.5, 0.5, 0.5, 0.5}));
  EXPECT_EQ(aggregate(Matrix{{4, -1}}, Vector{9, 9}, Vector{0.2}, Vector{0.9}), (Vector{4, -1, 9, 9}));
  // alpha*beta proportional to [3, 1].
  const Vector v = aggregate(Matrix{{4, 0}, {0, 4}}, Vector{2, 2}, Vector{0.75, 0.25}, Vector{0.5, 0.5});
  EXPECT_NEAR(v[0], 3.0, 1e-15);
  EXPECT_NEAR(v[1], 1.0, 1e-15);
  EXPECT_EQ(v[2], 2.0);
  EXPECT_EQ(v[3], 2.0);
}

TEST(Forward, ZeroParams) {
  Rng rng(4);
  for (Mode mode : {Mode::Full, Mode::SelfOnly}) {
    const FanParams p = FanParams::zeros(mode, 5, 3);
    const auto out = forward(random_frames(7, 5, rng), p);
    for (double z : out.logits.values()) EXPECT_EQ(z, 0.0);
    for (double a : out.trace.alpha.values()) EXPECT_EQ(a, 0.5);
    for (double b : out.trace.beta.values()) EXPECT_TRUE(b == 0.5 || mode == Mode::SelfOnly);
  }
}

TEST(Forward, IdenticalFramesGiveRepeatedFrame) {
  Rng rng(8);
  const FanParams p = random_params(Mode::Full, 4, 3, rng);
  const Matrix one = random_frames(1, 4, rng);
  const auto base = forward(one, p);
  for (std::size_t n : {2u, 5u, 11u}) {
    const auto out = forward(repeat_rows(one, n), p);
    for (std::size_t j = 0; j < 4; ++j) {
      EXPECT_NEAR(out.trace.aggregate[j], one(0, j), 1e-14);
      EXPECT_NEAR(out.trace.aggregate[4 + j], one(0, j), 1e-14);
    }
    for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(out.logits[k], base.logits[k], 1e-12);
  }
}

TEST(Forward, MatchesScalarOracle) {
  Rng rng(42);
  for (Mode mode : {Mode::Full, Mode::SelfOnly}) {
    for (int t = 0; t < 30; ++t) {
      const FanParams p = random_params(mode, 4, 3, rng);
      const Matrix f = random_frames(3, 4, rng);
      const auto got = forward(f, p);
      const auto want = oracle::evaluate(to_rows(f), to_oracle(p));
      for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(got.logits[k], want.logits[k], 1e-10);
      for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_NEAR(got.trace.alpha[i], want.alpha[i], 1e-14);
        EXPECT_NEAR(got.trace.beta[i], want.beta[i], 1e-14);
      }
    }
  }
}

TEST(Forward, TraceInvariants) {
  Rng rng(9);
  for (int t = 0; t < 100; ++t) {
    const Mode mode = t % 2 ? Mode::Full : Mode::SelfOnly;
    const std::size_t n = 1 + rng.uniform_index(9);
    const std::size_t d = 1 + rng.uniform_index(8);
    const FanParams p = random_params(mode, d, 4, rng);
    const auto out = forward(random_frames(n, d, rng), p);
    const auto& w = out.trace.final_weights.values();
    EXPECT_NEAR(std::accumulate(w.begin(), w.end(), 0.0), 1.0, 1e-12);
    for (double x : w) EXPECT_GT(x, 0.0);
    for (double a : out.trace.alpha.values()) {
      EXPECT_GT(a, 0.0);
      EXPECT_LT(a, 1.0);
    }
    if (mode == Mode::Full) {
      ASSERT_EQ(out.trace.aggregate.size(), 2 * d);
      for (std::size_t j = 0; j < d; ++j) EXPECT_EQ(out.trace.aggregate[d + j], out.trace.anchor[j]);
    } else {
      EXPECT_EQ(out.trace.aggregate, out.trace.anchor);
    }
  }
}

TEST(Forward, SingleFrameCollapse) {
  Rng rng(10);
  for (Mode mode : {Mode::Full, Mode::SelfOnly}) {
    const FanParams p = random_params(mode, 6, 3, rng);
    const Matrix f = random_frames(1, 6, rng);
    const auto out = forward(f, p);
    EXPECT_EQ(out.trace.final_weights, (Vector{1.0}));
    for (std::size_t j = 0; j < 6; ++j) {
      EXPECT_EQ(out.trace.anchor[j], f(0, j));
      EXPECT_EQ(out.trace.aggregate[j], f(0, j));
      if (mode == Mode::Full) EXPECT_EQ(out.trace.aggregate[6 + j], f(0, j));
    }
  }
}

TEST(Forward, PermutationAndReplicationInvariance) {
  Rng rng(12);
  for (int t = 0; t < 50; ++t) {
    const Mode mode = t % 2 ? Mode::Full : Mode::SelfOnly;
    const std::size_t n = 2 + rng.uniform_index(7);
    const FanParams p = random_params(mode, 8, 7, rng);
    const Matrix f = random_frames(n, 8, rng);
    const auto base = forward(f, p).logits;

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.uniform_index(i + 1)]);
    const auto permuted = forward(f.select_rows(perm), p).logits;
    const auto tripled = forward(repeat_rows(f, 3), p).logits;
    for (std::size_t k = 0; k < 7; ++k) {
      EXPECT_NEAR(permuted[k], base[k], 1e-9);
      EXPECT_NEAR(tripled[k], base[k], 1e-9);
    }
  }
}

TEST(Forward, DimensionMismatch) {
  const FanParams p = FanParams::zeros(Mode::Full, 3, 2);
  EXPECT_THROW(forward(Matrix{{1, 2}}, p), DimensionError);
}

TEST(Backward, BiasGradientWithZeroClassifier) {
  Rng rng(13);
  for (Mode mode : {Mode::Full, Mode::SelfOnly}) {
    FanParams p = random_params(mode, 4, 5, rng);
    for (double& w : p.class_weight.span()) w = 0.0;
    for (double& b : p.class_bias.span()) b = 0.0;
    const auto r = backward(random_frames(3, 4, rng), p, 2);
    for (std::size_t k = 0; k < 5; ++k) {
      EXPECT_NEAR(r.grads.class_bias[k], k == 2 ? 0.2 - 1.0 : 0.2, 1e-15);
    }
    for (double g : r.grads.q0.values()) EXPECT_EQ(g, 0.0);
  }
}

TEST(Backward, ReplicationLeavesGradientsUnchanged) {
  Rng rng(14);
  for (Mode mode : {Mode::Full, Mode::SelfOnly}) {
    const FanParams p = random_params(mode, 5, 3, rng);
    const Matrix f = random_frames(4, 5, rng);
    const auto a = backward(f, p, 1);
    const auto b = backward(repeat_rows(f, 2), p, 1);
    EXPECT_NEAR(a.loss, b.loss, 1e-10);
    const Vector ga = flatten(a.grads);
    const Vector gb = flatten(b.grads);
    for (std::size_t j = 0; j < ga.size(); ++j) EXPECT_NEAR(ga[j], gb[j], 1e-10);
  }
}

TEST(Backward, SelfOnlyHasNoRelationGradient) {
  Rng rng(15);
  const FanParams p = random_params(Mode::SelfOnly, 4, 3, rng);
  const auto r = backward(random_frames(5, 4, rng), p, 0);
  for (double g : r.grads.q1.values()) EXPECT_EQ(g, 0.0);
}

TEST(Backward, MatchesFiniteDifferences) {
  for (const auto& c : default_gradcheck_cases(40, 2024)) {
    const auto r = check_gradients(c);
    EXPECT_TRUE(r.passed) << "mode " << to_string(c.mode) << " D=" << c.dim << " n=" << c.frames
                          << " C=" << c.classes << " err " << r.max_relative_error;
  }
}

TEST(Backward, CorruptedGradientIsCaught) {
  const auto r = check_gradients(default_gradcheck_cases(1, 1)[0], 1e-5, 1e-4, true);
  EXPECT_FALSE(r.passed);
}

TEST(Predict, ArgmaxWithLowestIndexTies) {
  EXPECT_EQ(predict(Vector{0.1, 0.9, 0.3}), 1u);
  EXPECT_EQ(predict(Vector{0.5, 0.5}), 0u);
  EXPECT_EQ(predict(Vector{-3}), 0u);
  EXPECT_EQ(predict(Vector{1, 4, 4, 2}), 1u);
}

TEST(FanParams, FlattenRoundTripAndInit) {
  const FanParams a = FanParams::initialize(Mode::Full, 6, 4, 99);
  EXPECT_EQ(unflatten(flatten(a), Mode::Full, 6, 4), a);
  EXPECT_EQ(FanParams::initialize(Mode::Full, 6, 4, 99), a);
  EXPECT_NE(FanParams::initialize(Mode::Full, 6, 4, 100), a);
  EXPECT_EQ(flatten(a).size(), parameter_count(Mode::Full, 6, 4));
  for (double b : a.class_bias.values()) EXPECT_EQ(b, 0.0);
  const double limit = std::sqrt(6.0 / 7.0);
  for (double q : a.q0.values()) EXPECT_LE(std::abs(q), limit);
  EXPECT_EQ(FanParams::initialize(Mode::SelfOnly, 6, 4, 1).class_weight.cols(), 6u);
}
