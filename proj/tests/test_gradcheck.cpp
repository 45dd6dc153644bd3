#include "nptraj/gradcheck.hpp"
#include "nptraj/gradcheck_suite.hpp"
#include "nptraj/ops.hpp"
#include "test_util.hpp"

using namespace nptraj;

TEST(Gradcheck, RelativeErrorDefinition) {
  EXPECT_NEAR(relative_error(1.0, 1.1), 0.1 / 1.1, 1e-15);
  EXPECT_DOUBLE_EQ(relative_error(0.0, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(relative_error(1e-10, 0.0), 1e-10 / 1e-8);
}

TEST(Gradcheck, QuadraticFormIsExact) {
  Rng rng(1);
  const Tensor a = test::randn(rng, {4, 4});
  const Tensor x = test::randn(rng, {1, 4});
  const ScalarBuilder quad = [a](std::span<const Tensor> p) {
    return ops::sum_all(ops::mul(ops::matmul(p[0], a), p[0]));
  };
  const GradcheckReport r = gradcheck(quad, std::vector<Tensor>{x}, 0);
  EXPECT_TRUE(r.passed);
  EXPECT_LT(r.max_rel_error, 1e-8);
}

TEST(Gradcheck, ConstantBuilderPassesVacuously) {
  const ScalarBuilder constant = [](std::span<const Tensor>) { return Tensor::scalar(3.0); };
  const GradcheckReport r = gradcheck(constant, std::vector<Tensor>{Tensor::vector({1, 2})}, 0);
  EXPECT_TRUE(r.passed);
  EXPECT_EQ(r.max_rel_error, 0.0);
}

TEST(Gradcheck, SigmoidCompositeMatchesFiniteDifferences) {
  Rng rng(2);
  const Tensor x = test::randn(rng, {3, 1});
  const ScalarBuilder f = [x](std::span<const Tensor> p) { return ops::sum_all(ops::sigmoid(ops::matmul(p[0], x))); };
  const GradcheckReport r = gradcheck(f, std::vector<Tensor>{test::randn(rng, {2, 3})}, 0);
  EXPECT_TRUE(r.passed);
  EXPECT_LT(r.max_rel_error, 1e-4);
}

TEST(Gradcheck, DirectionalModeDetectsWrongGradient) {
  const ScalarBuilder f = [](std::span<const Tensor> p) { return ops::sum_all(ops::exp(p[0])); };
  GradcheckOptions o;
  o.directions = 3;
  EXPECT_TRUE(gradcheck(f, std::vector<Tensor>{Tensor::vector({0.1, 0.2, -0.4})}, 5, o).passed);
  ops::testing::set_derivative_fault("exp");
  const bool passed = gradcheck(f, std::vector<Tensor>{Tensor::vector({0.1, 0.2, -0.4})}, 5, o).passed;
  ops::testing::set_derivative_fault("");
  EXPECT_FALSE(passed);
}

TEST(GradcheckSuite, EveryCheckPassesOnTenSeeds) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    for (const auto& r : run_gradcheck_suite(seed)) {
      EXPECT_TRUE(r.passed) << r.name << " seed " << seed << " err " << r.max_rel_error;
      EXPECT_GT(r.entries_checked, 0u) << r.name;
    }
  }
}

TEST(GradcheckSuite, CoversEveryRegisteredOp) {
  std::vector<std::string> names;
  for (const auto& r : run_gradcheck_suite(0)) names.push_back(r.name);
  for (const char* op : {"matmul", "transpose", "tanh", "relu", "sigmoid", "softplus", "exp", "log", "neg", "square",
                         "add", "sub", "mul", "div", "scale_shift", "sum_all", "concat_last", "slice_last",
                         "softmax_last", "reshape", "gather_rows", "repeat_rows", "lstm_cell"}) {
    EXPECT_NE(std::find(names.begin(), names.end(), op), names.end()) << op;
  }
  EXPECT_NE(std::find(names.begin(), names.end(), "elbo[arnp, 3 points]"), names.end());
}

TEST(GradcheckSuite, CorruptedDerivativeFails) {
  ops::testing::set_derivative_fault("matmul");
  bool any_failed = false;
  for (const auto& r : run_gradcheck_suite(0)) any_failed = any_failed || !r.passed;
  ops::testing::set_derivative_fault("");
  EXPECT_TRUE(any_failed);
}
