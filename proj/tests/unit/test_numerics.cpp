#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>

#include "cvar/common/error.hpp"
#include "cvar/numerics/gradcheck.hpp"
#include "cvar/numerics/ops.hpp"
#include "support/random.hpp"

using namespace cvar::num;
using cvar::testing::random_positive;
using cvar::testing::random_tensor;

namespace {

std::vector<double> naive_matmul(const TensorD& a, const TensorD& b) {
  const auto m = a.size(0), k = a.size(1), n = b.size(1);
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) out[i * n + j] += a.at(i * k + p) * b.at(p * n + j);
  return out;
}

// Contracts an op's output against fixed random weights so every output
// coordinate contributes to the checked scalar.
std::function<TensorD(const TensorD&)> contracted(std::function<TensorD(const TensorD&)> op,
                                                 std::mt19937_64& rng, Shape out_shape) {
  auto w = random_tensor(rng, std::move(out_shape));
  return [op = std::move(op), w](const TensorD& x) { return sum(mul(op(x), w)); };
}

}  // namespace

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  TensorD eye({2, 2}, {1, 0, 0, 1});
  TensorD a({2, 2}, {3, -1, 2, 5});
  auto c = matmul(eye, a);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(c.at(i), a.at(i));
}

TEST(Matmul, ForcedArithmetic) {
  TensorD a({2, 2}, {1, 2, 3, 4});
  TensorD b({2, 1}, {0, 1});
  auto c = matmul(a, b);
  ASSERT_EQ(c.shape(), (Shape{2, 1}));
  EXPECT_EQ(c.at(0), 2.0);
  EXPECT_EQ(c.at(1), 4.0);
}

TEST(Matmul, MatchesTripleLoopOracle) {
  std::mt19937_64 rng(7);
  auto a = random_tensor(rng, {5, 7});
  auto b = random_tensor(rng, {7, 3});
  auto c = matmul(a, b);
  auto ref = naive_matmul(a, b);
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(c.at(i), ref[i], 1e-12);
}

TEST(Matmul, ShapeMismatchReportsBothShapes) {
  TensorD a = TensorD::zeros({2, 3});
  TensorD b = TensorD::zeros({4, 2});
  try {
    matmul(a, b);
    FAIL() << "expected ShapeError";
  } catch (const cvar::ShapeError& e) {
    std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos);
    EXPECT_NE(msg.find("[4x2]"), std::string::npos);
  }
}

TEST(Matmul, AssociativityProperty) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    auto a = random_tensor(rng, {4, 6});
    auto b = random_tensor(rng, {6, 5});
    auto c = random_tensor(rng, {5, 3});
    auto left = matmul(matmul(a, b), c);
    auto right = matmul(a, matmul(b, c));
    for (std::size_t i = 0; i < left.numel(); ++i) EXPECT_NEAR(left.at(i), right.at(i), 1e-9);
  }
}

TEST(Softmax, SymmetricInputIsUniform) {
  auto y = softmax(TensorD({2}, {0, 0}), 0);
  EXPECT_DOUBLE_EQ(y.at(0), 0.5);
  EXPECT_DOUBLE_EQ(y.at(1), 0.5);
}

TEST(Softmax, LogInputsRecoverProportions) {
  auto y = softmax(TensorD({2}, {std::log(1.0), std::log(3.0)}), 0);
  EXPECT_NEAR(y.at(0), 0.25, 1e-15);
  EXPECT_NEAR(y.at(1), 0.75, 1e-15);
}

TEST(Softmax, LargeInputsDoNotOverflow) {
  auto y = softmax(TensorD({2}, {1000, 1000}), 0);
  EXPECT_DOUBLE_EQ(y.at(0), 0.5);
  EXPECT_DOUBLE_EQ(y.at(1), 0.5);
}

TEST(Softmax, RowsSumToOneForLargeMagnitudes) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    auto x = random_tensor(rng, {6, 9}, 1e3 / 3.0);
    for (std::size_t axis = 0; axis < 2; ++axis) {
      auto y = softmax(x, axis);
      const std::size_t outer = axis == 0 ? 9 : 6, len = axis == 0 ? 6 : 9;
      for (std::size_t o = 0; o < outer; ++o) {
        double total = 0;
        for (std::size_t k = 0; k < len; ++k) {
          const double v = axis == 0 ? y.at(k * 9 + o) : y.at(o * 9 + k);
          EXPECT_GE(v, 0.0);
          total += v;
        }
        EXPECT_NEAR(total, 1.0, 1e-9);
      }
    }
  }
}

TEST(Softmax, InvalidAxisRejected) {
  EXPECT_THROW(softmax(TensorD::zeros({2, 2}), 2), cvar::ShapeError);
}

TEST(LayerNorm, ConstantRowNormalizesToZero) {
  auto y = layer_norm(TensorD({1, 4}, {3, 3, 3, 3}), TensorD::full({4}, 1.0), TensorD::zeros({4}),
                      1e-5);
  for (auto v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(LayerNorm, NormalizedRowUnchanged) {
  auto y = layer_norm(TensorD({1, 2}, {1, -1}), TensorD::full({2}, 1.0), TensorD::zeros({2}), 1e-14);
  EXPECT_NEAR(y.at(0), 1.0, 1e-12);
  EXPECT_NEAR(y.at(1), -1.0, 1e-12);
}

TEST(LayerNorm, MatchesTwoPassOracle) {
  std::mt19937_64 rng(5);
  auto x = random_tensor(rng, {3, 17}, 2.0, 0.7);
  auto g = random_tensor(rng, {17});
  auto b = random_tensor(rng, {17});
  const double eps = 1e-5;
  auto y = layer_norm(x, g, b, eps);
  for (std::size_t r = 0; r < 3; ++r) {
    double mu = 0;
    for (std::size_t c = 0; c < 17; ++c) mu += x.at(r * 17 + c);
    mu /= 17;
    double var = 0;
    for (std::size_t c = 0; c < 17; ++c) var += std::pow(x.at(r * 17 + c) - mu, 2);
    var /= 17;
    for (std::size_t c = 0; c < 17; ++c) {
      const double ref = (x.at(r * 17 + c) - mu) / std::sqrt(var + eps) * g.at(c) + b.at(c);
      EXPECT_NEAR(y.at(r * 17 + c), ref, 1e-10);
    }
  }
}

TEST(CrossEntropy, UniformLogitsGiveLogClassCount) {
  auto loss = cross_entropy(TensorD({1, 2}, {0.3, 0.3}), std::vector<int>{1});
  EXPECT_NEAR(loss.item(), std::log(2.0), 1e-15);
  EXPECT_NEAR(loss.item(), 0.693147, 1e-6);
}

TEST(CrossEntropy, SaturatedLogitsGiveNearZero) {
  auto loss = cross_entropy(TensorD({1, 2}, {20, -20}), std::vector<int>{0});
  EXPECT_LT(loss.item(), 1e-15);
}

TEST(CrossEntropy, MatchesLogSumExpOracle) {
  std::mt19937_64 rng(9);
  auto logits = random_tensor(rng, {4, 5}, 3.0);
  std::vector<int> labels{0, 4, 2, 2};
  double ref = 0;
  for (std::size_t r = 0; r < 4; ++r) {
    double z = 0;
    for (std::size_t c = 0; c < 5; ++c) z += std::exp(logits.at(r * 5 + c));
    ref += std::log(z) - logits.at(r * 5 + labels[r]);
  }
  ref /= 4;
  EXPECT_NEAR(cross_entropy(logits, labels).item(), ref, 1e-10);
}

TEST(CrossEntropy, OutOfRangeLabelRejected) {
  EXPECT_THROW(cross_entropy(TensorD::zeros({1, 3}), std::vector<int>{3}), std::out_of_range);
  EXPECT_THROW(cross_entropy(TensorD::zeros({1, 3}), std::vector<int>{-1}), std::out_of_range);
}

TEST(Backward, SumGivesOnes) {
  TensorD x({3}, {1, 2, 3}, true);
  GradTape<double> tape;
  backward(sum(x));
  for (auto g : x.grad()) EXPECT_EQ(g, 1.0);
  EXPECT_EQ(tape.size(), 0u);
}

TEST(Backward, SquareAtThreeGivesSix) {
  TensorD x({1}, {3}, true);
  GradTape<double> tape;
  backward(mul(x, x));
  EXPECT_EQ(x.grad()[0], 6.0);
}

TEST(Backward, NonScalarRejected) {
  TensorD x({2}, {1, 2}, true);
  GradTape<double> tape;
  auto y = scale(x, 2.0);
  EXPECT_THROW(backward(y), cvar::ShapeError);
}

TEST(Backward, LeafReachedThroughTwoPathsAccumulates) {
  TensorD x({2}, {1.5, -2}, true);
  GradTape<double> tape;
  backward(sum(add(mul(x, x), scale(x, 3.0))));
  EXPECT_DOUBLE_EQ(x.grad()[0], 2 * 1.5 + 3);
  EXPECT_DOUBLE_EQ(x.grad()[1], 2 * -2 + 3);
}

TEST(Backward, NoTapeMeansNoRecording) {
  TensorD x({2}, {1, 2}, true);
  auto y = sum(x);
  EXPECT_FALSE(y.requires_grad());
}

TEST(FiniteDiff, SumOfSquares) {
  std::mt19937_64 rng(1);
  auto x = random_tensor(rng, {10});
  EXPECT_LT(finite_diff_check([](const TensorD& v) { return sum(mul(v, v)); }, x), 1e-8);
}

TEST(FiniteDiff, CrossEntropyOnRandomLogits) {
  std::mt19937_64 rng(2);
  auto x = random_tensor(rng, {4, 6}, 2.0);
  std::vector<int> labels{1, 5, 0, 3};
  auto f = [&](const TensorD& v) { return cross_entropy(v, labels); };
  EXPECT_LT(finite_diff_check(f, x), 1e-6);
}

TEST(FiniteDiff, NonFiniteObjectiveRejected) {
  TensorD x({1}, {1.0});
  auto f = [](const TensorD& v) { return scale(v, std::numeric_limits<double>::infinity()); };
  EXPECT_THROW(finite_diff_check(f, x), cvar::NumericError);
}

// Every registered primitive against central differences on 20 random inputs.
TEST(FiniteDiff, EveryPrimitiveMatchesCentralDifferences) {
  std::mt19937_64 rng(2024);
  struct Case {
    const char* name;
    std::function<TensorD(std::mt19937_64&)> input;
    std::function<std::function<TensorD(const TensorD&)>(std::mt19937_64&)> make;
  };
  auto mat = [](std::size_t m, std::size_t n) {
    return [m, n](std::mt19937_64& r) { return random_tensor(r, {m, n}); };
  };
  auto pos = [](std::size_t m, std::size_t n) {
    return [m, n](std::mt19937_64& r) { return random_positive(r, {m, n}); };
  };
  std::vector<Case> cases = {
      {"matmul_left", mat(3, 4),
       [](auto& r) {
         auto b = random_tensor(r, {4, 5});
         return contracted([b](const TensorD& x) { return matmul(x, b); }, r, {3, 5});
       }},
      {"matmul_right", mat(4, 5),
       [](auto& r) {
         auto a = random_tensor(r, {3, 4});
         return contracted([a](const TensorD& x) { return matmul(a, x); }, r, {3, 5});
       }},
      {"transpose", mat(3, 4),
       [](auto& r) { return contracted([](const TensorD& x) { return transpose(x); }, r, {4, 3}); }},
      {"add", mat(3, 4),
       [](auto& r) {
         auto b = random_tensor(r, {3, 4});
         return contracted([b](const TensorD& x) { return add(x, b); }, r, {3, 4});
       }},
      {"sub", mat(3, 4),
       [](auto& r) {
         auto b = random_tensor(r, {3, 4});
         return contracted([b](const TensorD& x) { return sub(b, x); }, r, {3, 4});
       }},
      {"mul", mat(3, 4),
       [](auto& r) {
         auto b = random_tensor(r, {3, 4});
         return contracted([b](const TensorD& x) { return mul(x, b); }, r, {3, 4});
       }},
      {"scale_add_scalar", mat(2, 3),
       [](auto& r) {
         return contracted([](const TensorD& x) { return add_scalar(scale(x, -1.7), 0.3); }, r, {2, 3});
       }},
      {"add_bias", mat(1, 4),
       [](auto& r) {
         auto a = random_tensor(r, {3, 4});
         return contracted([a](const TensorD& b) { return add_bias(a, b); }, r, {3, 4});
       }},
      {"softmax_rows", mat(3, 5),
       [](auto& r) { return contracted([](const TensorD& x) { return softmax(x, 1); }, r, {3, 5}); }},
      {"softmax_cols", mat(3, 5),
       [](auto& r) { return contracted([](const TensorD& x) { return softmax(x, 0); }, r, {3, 5}); }},
      {"layer_norm_x", mat(3, 6),
       [](auto& r) {
         auto g = random_tensor(r, {6}), b = random_tensor(r, {6});
         return contracted([g, b](const TensorD& x) { return layer_norm(x, g, b, 1e-5); }, r, {3, 6});
       }},
      {"layer_norm_gain", mat(1, 6),
       [](auto& r) {
         auto x = random_tensor(r, {3, 6}), b = random_tensor(r, {6});
         return contracted([x, b](const TensorD& g) { return layer_norm(x, g, b, 1e-5); }, r, {3, 6});
       }},
      {"layer_norm_bias", mat(1, 6),
       [](auto& r) {
         auto x = random_tensor(r, {3, 6}), g = random_tensor(r, {6});
         return contracted([x, g](const TensorD& b) { return layer_norm(x, g, b, 1e-5); }, r, {3, 6});
       }},
      {"gelu", mat(3, 4),
       [](auto& r) { return contracted([](const TensorD& x) { return gelu(x); }, r, {3, 4}); }},
      {"log", pos(3, 4),
       [](auto& r) { return contracted([](const TensorD& x) { return log(x); }, r, {3, 4}); }},
      {"sqrt", pos(3, 4),
       [](auto& r) { return contracted([](const TensorD& x) { return sqrt(x); }, r, {3, 4}); }},
      {"clamp_max", mat(3, 4),
       [](auto& r) { return contracted([](const TensorD& x) { return clamp_max(x, 0.25); }, r, {3, 4}); }},
      {"clamp_min", mat(3, 4),
       [](auto& r) { return contracted([](const TensorD& x) { return clamp_min(x, -0.25); }, r, {3, 4}); }},
      {"mean", mat(3, 4),
       [](auto&) { return std::function<TensorD(const TensorD&)>([](const TensorD& x) { return mean(mul(x, x)); }); }},
      {"normalize", pos(1, 7),
       [](auto& r) { return contracted([](const TensorD& x) { return normalize(x); }, r, {1, 7}); }},
      {"gather_rows", mat(4, 3),
       [](auto& r) {
         return contracted(
             [](const TensorD& x) {
               std::vector<std::size_t> rows{2, 0, 2};
               return gather_rows(x, rows);
             },
             r, {3, 3});
       }},
      {"slice", mat(4, 5),
       [](auto& r) { return contracted([](const TensorD& x) { return slice(x, 1, 3, 2, 5); }, r, {2, 3}); }},
      {"concat_rows", mat(2, 3),
       [](auto& r) {
         auto b = random_tensor(r, {1, 3});
         return contracted([b](const TensorD& x) { return concat_rows<double>({b, x, x}); }, r, {5, 3});
       }},
      {"concat_cols", mat(2, 3),
       [](auto& r) {
         auto b = random_tensor(r, {2, 2});
         return contracted([b](const TensorD& x) { return concat_cols<double>({x, b, x}); }, r, {2, 8});
       }},
      {"reshape", mat(2, 6),
       [](auto& r) { return contracted([](const TensorD& x) { return reshape(x, {3, 4}); }, r, {3, 4}); }},
      {"cross_entropy", mat(3, 5),
       [](auto&) {
         return std::function<TensorD(const TensorD&)>(
             [](const TensorD& x) { return cross_entropy(x, std::vector<int>{4, 0, 2}); });
       }},
  };
  for (const auto& c : cases) {
    for (int trial = 0; trial < 20; ++trial) {
      auto x = c.input(rng);
      auto f = c.make(rng);
      EXPECT_LT(finite_diff_check(f, x), 1e-6) << c.name << " trial " << trial;
    }
  }
}

TEST(Precision, FloatAndDoubleAgreeOnSoftmax) {
  TensorF xf({3}, {0.1f, -2.0f, 1.5f});
  auto yf = softmax(xf, 0);
  auto yd = softmax(xf.cast<double>(), 0);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(yf.at(i), yd.at(i), 1e-6);
}
