#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "gradcheck.hpp"
#include "tkp/adam.hpp"
#include "tkp/checkpoint_io.hpp"
#include "tkp/errors.hpp"
#include "tkp/ops.hpp"
#include "tkp/parallel.hpp"

using namespace tkp;
using tkp::testing::gradcheck;

namespace {

Tensor64 random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1, double hi = 1, bool grad = true) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = d(rng);
  return Tensor64(std::move(shape), std::move(v), grad);
}

std::vector<float> vals(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

// Weighted sum so every output element gets a distinct upstream gradient.
Tensor64 probe(const Tensor64& t) {
  std::vector<double> w(t.numel());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::sin(1.0 + 0.7 * static_cast<double>(i));
  return sum(t * Tensor64(t.shape(), w));
}

}  // namespace

TEST(TensorCore, ShapeMustMatchValueCount) {
  EXPECT_THROW(Tensor({2, 2}, {1, 2, 3}), DimensionError);
  const Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.numel(), 6u);
}

TEST(TensorCore, ElementwiseExamples) {
  EXPECT_EQ(vals(Tensor({3}, {1, 1, 1}) * Tensor({3}, {4, 5, 6})), (std::vector<float>{4, 5, 6}));
  EXPECT_EQ(vals(Tensor({2}, {1, 2}) + Tensor({2}, {0, 0})), (std::vector<float>{1, 2}));
  EXPECT_EQ(vals(Tensor({2}, {2, 3}) * Tensor({2}, {4, 5})), (std::vector<float>{8, 15}));
  EXPECT_EQ(vals(Tensor({2}, {2, 3}) - Tensor({2}, {4, 5})), (std::vector<float>{-2, -2}));
}

TEST(TensorCore, ElementwiseBroadcastsTrailingSuffix) {
  const Tensor a({2, 2}, {1, 2, 3, 4});
  EXPECT_EQ(vals(a + Tensor({2}, {10, 20})), (std::vector<float>{11, 22, 13, 24}));
  EXPECT_THROW(a + Tensor({3}, {1, 2, 3}), DimensionError);
  EXPECT_THROW(Tensor({2}, {1, 2}) + a, DimensionError);
}

TEST(TensorCore, MatmulExamples) {
  const Tensor m({2, 2}, {1, 2, 3, 4});
  EXPECT_EQ(vals(matmul(Tensor({2, 2}, {1, 0, 0, 1}), m)), (std::vector<float>{1, 2, 3, 4}));
  EXPECT_EQ(vals(matmul(Tensor({1, 2}, {1, 0}), Tensor({2, 1}, {5, 7}))), (std::vector<float>{5}));
  EXPECT_EQ(vals(matmul(m, Tensor({2, 1}, {1, 1}))), (std::vector<float>{3, 7}));
  EXPECT_THROW(matmul(m, Tensor({3, 1}, {1, 1, 1})), DimensionError);
}

TEST(TensorCore, MatmulMatchesNaiveLoops) {
  std::mt19937_64 rng(1);
  const auto a = random_tensor({7, 5}, rng), b = random_tensor({5, 9}, rng);
  const auto c = matmul(a, b);
  for (std::size_t i = 0; i < 7; ++i) {
    for (std::size_t j = 0; j < 9; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < 5; ++k) s += a.values()[i * 5 + k] * b.values()[k * 9 + j];
      EXPECT_NEAR(c.values()[i * 9 + j], s, 1e-12);
    }
  }
}

TEST(TensorCore, Conv2dExamples) {
  const Tensor in({1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  EXPECT_EQ(vals(conv2d(in, Tensor({1, 1, 1, 1}, {1}), Tensor({1}, {0}), 0)), vals(in));

  const auto bias_only = conv2d(Tensor::zeros({2, 4, 4}), Tensor::full({1, 2, 3, 3}, 0.3f), Tensor({1}, {0.5f}), 1);
  for (float v : bias_only.values()) EXPECT_EQ(v, 0.5f);

  const auto ones = conv2d(Tensor::full({1, 3, 3}, 1), Tensor::full({1, 1, 3, 3}, 1), Tensor({1}, {0}), 1);
  EXPECT_EQ(ones.values()[4], 9.0f);
  EXPECT_EQ(ones.values()[0], 4.0f);
  EXPECT_EQ(ones.values()[1], 6.0f);
}

TEST(TensorCore, Conv2dMatchesNaiveCrossCorrelation) {
  std::mt19937_64 rng(2);
  const auto in = random_tensor({3, 5, 6}, rng), k = random_tensor({2, 3, 3, 3}, rng), b = random_tensor({2}, rng);
  const auto out = conv2d(in, k, b, 1);
  ASSERT_EQ(out.shape(), (Shape{2, 5, 6}));
  for (std::size_t o = 0; o < 2; ++o) {
    for (int y = 0; y < 5; ++y) {
      for (int x = 0; x < 6; ++x) {
        double s = b.values()[o];
        for (std::size_t c = 0; c < 3; ++c) {
          for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
              const int yy = y + dy, xx = x + dx;
              if (yy < 0 || yy >= 5 || xx < 0 || xx >= 6) continue;
              s += in.values()[(c * 5 + yy) * 6 + xx] * k.values()[((o * 3 + c) * 3 + (dy + 1)) * 3 + (dx + 1)];
            }
          }
        }
        EXPECT_NEAR(out.values()[(o * 5 + y) * 6 + x], s, 1e-12);
      }
    }
  }
}

TEST(TensorCore, Conv2dContracts) {
  const Tensor in = Tensor::zeros({2, 4, 4});
  EXPECT_THROW(conv2d(in, Tensor::zeros({1, 3, 3, 3}), Tensor::zeros({1}), 1), DimensionError);
  EXPECT_THROW(conv2d(in, Tensor::zeros({1, 2, 2, 2}), Tensor::zeros({1}), 1), ContractError);
  EXPECT_THROW(conv2d(in, Tensor::zeros({1, 2, 3, 3}), Tensor::zeros({1}), 0), ContractError);
}

TEST(TensorCore, UpsampleExamples) {
  const auto c = upsample_bilinear_2x(Tensor::full({2, 3, 2}, 0.7f));
  ASSERT_EQ(c.shape(), (Shape{2, 6, 4}));
  for (float v : c.values()) EXPECT_FLOAT_EQ(v, 0.7f);
  EXPECT_EQ(vals(upsample_bilinear_2x(Tensor({1, 1, 1}, {3}))), (std::vector<float>{3, 3, 3, 3}));
  const auto row = upsample_bilinear_2x(Tensor64({1, 1, 2}, {0, 1}));
  ASSERT_EQ(row.shape(), (Shape{1, 2, 4}));
  const std::vector<double> expect = {0, 0.25, 0.75, 1};
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_DOUBLE_EQ(row.values()[i], expect[i]);
    EXPECT_DOUBLE_EQ(row.values()[4 + i], expect[i]);
  }
}

TEST(TensorCore, ActivationExamples) {
  EXPECT_FLOAT_EQ(sigmoid(Tensor({1}, {0})).item(), 0.5f);
  EXPECT_EQ(vals(relu(Tensor({2}, {-1, 2}))), (std::vector<float>{0, 2}));
  const auto big = sigmoid(Tensor({3}, {20, 60, 1e4f}));
  for (float v : big.values()) {
    EXPECT_GT(v, 0.99f);
    EXPECT_LE(v, 1.0f);
  }
  const auto small = sigmoid(Tensor64({2}, {-30, 30}));
  EXPECT_GT(small.values()[0], 0.0);
  EXPECT_LT(small.values()[1], 1.0);
  EXPECT_TRUE(std::isfinite(exponential(Tensor({1}, {500})).item()));
}

TEST(TensorCore, GridSampleExamples) {
  std::mt19937_64 rng(3);
  const auto plane = random_tensor({3, 4, 5}, rng);
  // node (2, 3) sits at (2/3, 3/4)
  const auto at_node = grid_sample_bilinear(plane, Tensor64({1, 2}, {2.0 / 3.0, 0.75}));
  for (std::size_t d = 0; d < 3; ++d) EXPECT_NEAR(at_node.values()[d], plane.values()[(d * 4 + 2) * 5 + 3], 1e-12);

  const auto flat = grid_sample_bilinear(Tensor64::full({2, 3, 3}, 0.25), random_tensor({6, 2}, rng, 0, 1, false));
  for (double v : flat.values()) EXPECT_DOUBLE_EQ(v, 0.25);

  EXPECT_DOUBLE_EQ(grid_sample_bilinear(Tensor64({1, 2, 2}, {0, 1, 2, 3}), Tensor64({1, 2}, {0.5, 0.5})).item(), 1.5);
  // clamped outside [0,1]
  EXPECT_DOUBLE_EQ(grid_sample_bilinear(Tensor64({1, 2, 2}, {0, 1, 2, 3}), Tensor64({1, 2}, {-3, 7})).item(), 1.0);
}

TEST(TensorCore, ConcatExamples) {
  const Tensor a({2, 1}, {1, 2}), b({2, 1}, {3, 4});
  EXPECT_EQ(vals(concat(std::vector<Tensor>{a, b}, 0)), (std::vector<float>{1, 2, 3, 4}));
  EXPECT_EQ(vals(concat(std::vector<Tensor>{a}, 0)), vals(a));
  const auto wide = concat(std::vector<Tensor>{Tensor::zeros({1, 2}), Tensor::zeros({1, 3})}, 1);
  EXPECT_EQ(wide.shape(), (Shape{1, 5}));
  EXPECT_THROW(concat(std::vector<Tensor>{Tensor::zeros({1, 2}), Tensor::zeros({2, 3})}, 1), DimensionError);
}

TEST(TensorCore, BackwardExamples) {
  Tensor64 x({1}, {3}, true);
  backward(sum(x * x));
  EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);

  Tensor64 a({3}, {1, 2, 3}, true), b({3}, {4, 5, 6}, true);
  backward(sum(a + b));
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_DOUBLE_EQ(a.grad()[i], 1.0);
    EXPECT_DOUBLE_EQ(b.grad()[i], 1.0);
  }
  EXPECT_THROW(backward(a + b), ContractError);
}

TEST(TensorCore, GradientsAccumulateAcrossUses) {
  Tensor64 x({2}, {1.5, -2}, true);
  // three branches: x, 2x, x*x -> d/dx = 1 + 2 + 2x
  backward(sum(x + scale(x, 2.0) + x * x));
  EXPECT_DOUBLE_EQ(x.grad()[0], 3 + 3.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], 3 - 4.0);
}

TEST(TensorCore, GradcheckEveryOperation) {
  std::mt19937_64 rng(4);
  auto expect_ok = [](const tkp::testing::GradCheckResult& r, const char* what) {
    EXPECT_GT(r.checked, 0u) << what;
    EXPECT_LT(r.max_rel_error, 1e-3) << what << ": " << r.worst;
  };
  {
    auto a = random_tensor({3, 4}, rng), b = random_tensor({4}, rng);
    expect_ok(gradcheck({a, b}, [&] { return probe(a + b); }), "add");
    expect_ok(gradcheck({a, b}, [&] { return probe(a - b); }), "sub");
    expect_ok(gradcheck({a, b}, [&] { return probe(a * b); }), "mul");
    expect_ok(gradcheck({a}, [&] { return probe(scale(a, 1.7)); }), "scale");
  }
  {
    auto a = random_tensor({3, 4}, rng), b = random_tensor({4, 2}, rng);
    expect_ok(gradcheck({a, b}, [&] { return probe(matmul(a, b)); }), "matmul");
  }
  {
    auto in = random_tensor({2, 4, 5}, rng), k = random_tensor({3, 2, 3, 3}, rng), b = random_tensor({3}, rng);
    expect_ok(gradcheck({in, k, b}, [&] { return probe(conv2d(in, k, b, 1)); }), "conv2d 3x3");
    auto k5 = random_tensor({1, 2, 5, 5}, rng), b5 = random_tensor({1}, rng);
    expect_ok(gradcheck({in, k5, b5}, [&] { return probe(conv2d(in, k5, b5, 2)); }), "conv2d 5x5");
  }
  {
    auto in = random_tensor({2, 3, 4}, rng);
    expect_ok(gradcheck({in}, [&] { return probe(upsample_bilinear_2x(in)); }), "upsample");
    expect_ok(gradcheck({in}, [&] { return probe(sigmoid(in)); }), "sigmoid");
    expect_ok(gradcheck({in}, [&] { return probe(exponential(in)); }), "exponential");
    expect_ok(gradcheck({in}, [&] { return probe(relu(in)); }), "relu");
  }
  {
    auto plane = random_tensor({3, 4, 5}, rng);
    const auto coords = random_tensor({9, 2}, rng, 0, 1, false);
    expect_ok(gradcheck({plane}, [&] { return probe(grid_sample_bilinear(plane, coords)); }, 60), "grid_sample");
  }
  {
    auto a = random_tensor({2, 3}, rng), b = random_tensor({2, 2}, rng), c = random_tensor({4, 3}, rng);
    expect_ok(gradcheck({a, b}, [&] { return probe(concat(std::vector<Tensor64>{a, b}, 1)); }), "concat axis 1");
    expect_ok(gradcheck({a, c}, [&] { return probe(concat(std::vector<Tensor64>{a, c}, 0)); }), "concat axis 0");
    expect_ok(gradcheck({c}, [&] { return probe(slice_rows(c, 1, 3)); }), "slice_rows");
    expect_ok(gradcheck({c}, [&] { return probe(reshape(c, {2, 6})); }), "reshape");
    expect_ok(gradcheck({c}, [&] { return probe(transpose(c)); }), "transpose");
    expect_ok(gradcheck({c}, [&] { return mean(c * c); }), "mean");
    expect_ok(gradcheck({a, c}, [&] { return mse_loss(a, slice_rows(c, 0, 2)); }), "mse_loss");
  }
}

TEST(TensorCore, FirstNonFiniteNamesTheOp) {
  const Tensor64 a({2}, {1, 0}), b({2}, {0, std::numeric_limits<double>::infinity()});
  const auto bad = a * b;
  const auto where = first_non_finite(bad);
  ASSERT_TRUE(where.has_value());
  EXPECT_NE(where->find("mul"), std::string::npos);
  EXPECT_FALSE(first_non_finite(a + a).has_value());
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Tensor64 p({3}, {1, 2, 3}, true);
  Adam<double> opt({p}, {0.01});
  p.node()->ensure_grad() = {0.5, -3, 0};
  opt.step();
  EXPECT_NEAR(p.values()[0], 1 - 0.01, 1e-7);
  EXPECT_NEAR(p.values()[1], 2 + 0.01, 1e-7);
  EXPECT_DOUBLE_EQ(p.values()[2], 3.0);
  EXPECT_FALSE(p.has_grad());
  EXPECT_EQ(opt.step_count(), 1u);
}

TEST(Adam, MissingGradIsContractError) {
  Tensor64 p({1}, {0}, true);
  Adam<double> opt({p});
  EXPECT_THROW(opt.step(), ContractError);
}

TEST(Adam, MatchesScalarOracleOnQuadratic) {
  Tensor64 x({1}, {0}, true);
  Adam<double> opt({x}, {0.1});
  // oracle: textbook bias-corrected Adam on f(x) = (x - 5)^2
  double ox = 0, m = 0, v = 0;
  for (int t = 1; t <= 100; ++t) {
    const Tensor64 target({1}, {5});
    const auto d = x - target;
    backward(sum(d * d));
    opt.step();
    const double g = 2 * (ox - 5);
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1 - std::pow(0.9, t)), vh = v / (1 - std::pow(0.999, t));
    ox -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
    ASSERT_NEAR(x.values()[0], ox, 1e-9) << "step " << t;
  }
  EXPECT_NEAR(x.values()[0], 5.0, 0.5);
  EXPECT_EQ(opt.step_count(), 100u);
}

TEST(Checkpoint, ContainerRoundTrip) {
  ArrayContainer c;
  c.metadata = {{"a", "1"}, {"key with spaces", "value\nnewline"}};
  c.arrays.push_back({"x/y", {2, 3}, {1, 2, 3, 4, 5, -6.5f}});
  c.arrays.push_back({"scalar", {1}, {3.25f}});
  const auto path = std::filesystem::temp_directory_path() / "tkp_container_test.tkp";
  write_container(path, c);
  const auto back = read_container(path);
  EXPECT_EQ(back.metadata, c.metadata);
  ASSERT_EQ(back.arrays.size(), 2u);
  EXPECT_EQ(back.arrays[0].name, "x/y");
  EXPECT_EQ(back.arrays[0].shape, (Shape{2, 3}));
  EXPECT_EQ(back.arrays[0].values, c.arrays[0].values);
  ASSERT_NE(back.find("scalar"), nullptr);
  EXPECT_EQ(back.find("missing"), nullptr);
  std::filesystem::remove(path);
}

TEST(Checkpoint, RejectsGarbage) {
  const auto path = std::filesystem::temp_directory_path() / "tkp_garbage.tkp";
  {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    std::fputs("not a checkpoint", f);
    std::fclose(f);
  }
  EXPECT_THROW(read_container(path), LoadError);
  std::filesystem::remove(path);
  EXPECT_THROW(read_container(path), LoadError);
}

TEST(Parallel, CoversEveryIndexOnce) {
  std::vector<int> hits(1000, 0);
  parallel_for(hits.size(), [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) ++hits[i];
  });
  for (int h : hits) EXPECT_EQ(h, 1);
}
