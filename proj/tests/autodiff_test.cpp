#include <gtest/gtest.h>

#include <functional>

#include "kgdiff/autodiff.hpp"
#include "kgdiff/common.hpp"

namespace kgdiff::ad {
namespace {

Matrix random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

using Build = std::function<Var(Tape&, const std::vector<Var>&)>;

// Reduces the op output against a fixed target so every output entry matters.
double evaluate(const Build& f, const std::vector<Matrix>& inputs, const Matrix& target,
                std::vector<Matrix>* grads) {
  Tape tp(grads != nullptr);
  std::vector<Var> vars;
  for (const auto& m : inputs) vars.push_back(tp.parameter(m));
  Var out = f(tp, vars);
  Var loss = tp.weighted_sq_error(out, tp.constant(target), std::vector<double>(static_cast<size_t>(target.rows()), 1.0));
  if (grads) {
    tp.backward(loss);
    grads->clear();
    for (auto v : vars) grads->push_back(tp.grad(v));
  }
  return tp.value(loss)(0, 0);
}

void expect_gradients_match(const Build& f, std::vector<Matrix> inputs, uint64_t seed = 1) {
  Rng rng(seed);
  Tape probe(false);
  std::vector<Var> vars;
  for (const auto& m : inputs) vars.push_back(probe.constant(m));
  const Matrix& shape = probe.value(f(probe, vars));
  const Matrix target = random_matrix(rng, shape.rows(), shape.cols());
  std::vector<Matrix> grads;
  evaluate(f, inputs, target, &grads);
  const double h = 1e-6;
  for (size_t k = 0; k < inputs.size(); ++k) {
    for (Eigen::Index i = 0; i < inputs[k].size(); ++i) {
      const double x = inputs[k].data()[i];
      inputs[k].data()[i] = x + h;
      const double lp = evaluate(f, inputs, target, nullptr);
      inputs[k].data()[i] = x - h;
      const double lm = evaluate(f, inputs, target, nullptr);
      inputs[k].data()[i] = x;
      const double num = (lp - lm) / (2 * h);
      const double an = grads[k].data()[i];
      EXPECT_NEAR(an, num, 1e-6 * std::max(1.0, std::abs(num))) << "input " << k << " entry " << i;
    }
  }
}

class OpGradient : public ::testing::Test {
 protected:
  Rng rng{11};
  Matrix m(Eigen::Index r, Eigen::Index c) { return random_matrix(rng, r, c); }
};

TEST_F(OpGradient, Matmul) {
  expect_gradients_match([](Tape& t, const auto& v) { return t.matmul(v[0], v[1]); }, {m(3, 4), m(4, 2)});
}

TEST_F(OpGradient, MatmulTransposed) {
  expect_gradients_match([](Tape& t, const auto& v) { return t.matmul_nt(v[0], v[1]); }, {m(3, 4), m(5, 4)});
}

TEST_F(OpGradient, AddSubAddRow) {
  expect_gradients_match([](Tape& t, const auto& v) { return t.sub(t.add(v[0], v[1]), t.add_row(v[0], v[2])); },
                         {m(3, 4), m(3, 4), m(1, 4)});
}

TEST_F(OpGradient, ScaleAndScaleRows) {
  expect_gradients_match([](Tape& t, const auto& v) { return t.scale_rows(t.scale(v[0], -1.5), {0.5, 2.0, 0.0}); },
                         {m(3, 2)});
}

TEST_F(OpGradient, Gelu) {
  expect_gradients_match([](Tape& t, const auto& v) { return t.gelu(v[0]); }, {m(4, 3)});
}

TEST_F(OpGradient, LayerNorm) {
  expect_gradients_match([](Tape& t, const auto& v) { return t.layer_norm(v[0], v[1], v[2]); },
                         {m(3, 5), m(1, 5), m(1, 5)});
}

TEST_F(OpGradient, SoftmaxRows) {
  expect_gradients_match([](Tape& t, const auto& v) { return t.softmax_rows(v[0]); }, {m(3, 4)});
}

TEST_F(OpGradient, SlicingAndConcatenation) {
  expect_gradients_match(
      [](Tape& t, const auto& v) {
        auto a = t.hcat({t.cols(v[0], 1, 2), v[1]});
        return t.vcat(t.top_rows(a, 2), t.mean_rows(a));
      },
      {m(3, 4), m(3, 2)});
}

TEST_F(OpGradient, GatherRowsAccumulatesRepeats) {
  expect_gradients_match([](Tape& t, const auto& v) { return t.gather_rows(v[0], {2, 0, 2, 1}); }, {m(4, 3)});
}

TEST_F(OpGradient, Losses) {
  expect_gradients_match(
      [](Tape& t, const auto& v) {
        auto a = t.weighted_sq_error(v[0], v[1], {1.0, 0.5, 0.0});
        auto b = t.weighted_cross_entropy(v[0], {1, 0, 3}, {0.25, 1.0, 2.0});
        return t.weighted_sum({a, b}, {0.3, 1.7});
      },
      {m(3, 4), m(3, 4)});
}

TEST(Tape, ValuesOfBasicOps) {
  Tape tp;
  Matrix a(2, 2), b(2, 2);
  a << 1, 2, 3, 4;
  b << 0, 1, 1, 0;
  const auto va = tp.constant(a), vb = tp.constant(b);
  EXPECT_EQ(tp.value(tp.matmul(va, vb)), a * b);
  const Matrix sm = tp.value(tp.softmax_rows(va));
  EXPECT_NEAR(sm.row(0).sum(), 1.0, 1e-15);
  EXPECT_NEAR(sm(0, 1) / sm(0, 0), std::exp(1.0), 1e-12);
  Matrix logits(1, 3);
  logits << 0, 0, 0;
  EXPECT_NEAR(tp.value(tp.weighted_cross_entropy(tp.constant(logits), {2}, {1.0}))(0, 0), std::log(3.0), 1e-15);
}

TEST(Tape, GeluKnownValues) {
  Tape tp;
  Matrix x(1, 3);
  x << 0.0, 1.0, -1.0;
  const Matrix y = tp.value(tp.gelu(tp.constant(x)));
  EXPECT_DOUBLE_EQ(y(0, 0), 0.0);
  EXPECT_NEAR(y(0, 1), 0.8413447460685429, 1e-12);
  EXPECT_NEAR(y(0, 2), -0.15865525393145707, 1e-12);
}

TEST(Tape, NoRecordLeavesGradientsEmpty) {
  Tape tp(false);
  const auto p = tp.parameter(Matrix::Ones(2, 2));
  const auto y = tp.matmul(p, p);
  EXPECT_EQ(tp.value(y)(0, 0), 2.0);
  EXPECT_FALSE(tp.recording());
}

TEST(Tape, TruncateDropsLaterNodes) {
  Tape tp;
  const auto a = tp.parameter(Matrix::Ones(1, 2));
  const size_t mark = tp.size();
  tp.scale(a, 3.0);
  tp.truncate(mark);
  EXPECT_EQ(tp.size(), mark);
  const auto b = tp.scale(a, 2.0);
  EXPECT_EQ(tp.value(b)(0, 1), 2.0);
}

TEST(Tape, ShapeMismatchThrows) {
  Tape tp;
  const auto a = tp.constant(Matrix::Ones(2, 3));
  const auto b = tp.constant(Matrix::Ones(2, 2));
  EXPECT_THROW(tp.add(a, b), std::invalid_argument);
  EXPECT_THROW(tp.matmul(a, a), std::invalid_argument);
}

}  // namespace
}  // namespace kgdiff::ad
