#include <gtest/gtest.h>

#include <random>
#include <vector>

#include "hydro_embed/optim.hpp"

namespace he = hydro_embed;

namespace {

he::ModelConfig tiny_config() {
  he::ModelConfig c;
  c.dynamic_dim = 2;
  c.hidden_size = 2;
  c.embedding_dim = 2;
  c.num_basins = 3;
  c.use_embedding = true;
  return c;
}

he::Gradients random_grads(std::uint64_t seed, double scale) {
  auto g = he::ModelParams::zeros(tiny_config());
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> n(0.0, scale);
  Eigen::VectorXd flat(g.size());
  for (Eigen::Index i = 0; i < flat.size(); ++i) flat(i) = n(gen);
  g.assign_flat(flat);
  return g;
}

he::LossConfig loss_config(std::vector<double> stds, double eps) {
  return {eps, Eigen::Map<const Eigen::VectorXd>(stds.data(), static_cast<Eigen::Index>(stds.size()))};
}

}  // namespace

TEST(NseStarLoss, PerfectPredictionIsZero) {
  const std::vector<double> y{0.3, -1.0, 2.0};
  const std::vector<int> b{0, 1, 0};
  const auto r = he::nse_star_loss(y, y, b, loss_config({0.5, 1.5}, 0.1));
  EXPECT_EQ(r.loss, 0.0);
  EXPECT_EQ(r.d_predictions, Eigen::VectorXd::Zero(3));
}

TEST(NseStarLoss, SingleSample) {
  const std::vector<double> p{1.5}, y{0.5};
  const std::vector<int> b{0};
  const auto r = he::nse_star_loss(p, y, b, loss_config({0.9}, 0.1));
  EXPECT_NEAR(r.loss, 1.0, 1e-15);
  EXPECT_NEAR(r.d_predictions(0), 2.0, 1e-15);
}

TEST(NseStarLoss, TwoBasins) {
  const std::vector<double> p{1.0, 0.0}, y{0.0, -1.0};
  const std::vector<int> b{0, 1};
  const auto r = he::nse_star_loss(p, y, b, loss_config({0.9, 1.9}, 0.1));
  EXPECT_NEAR(r.loss, 0.625, 1e-15);
  EXPECT_NEAR(r.d_predictions(0), 1.0, 1e-15);
  EXPECT_NEAR(r.d_predictions(1), 0.25, 1e-15);
}

TEST(NseStarLoss, GradientMatchesDifferences) {
  std::mt19937_64 gen(4);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> p(9), y(9);
  std::vector<int> b(9);
  for (int i = 0; i < 9; ++i) {
    p[i] = n(gen);
    y[i] = n(gen);
    b[i] = i % 3;
  }
  const auto cfg = loss_config({0.4, 1.1, 0.05}, 0.1);
  const auto r = he::nse_star_loss(p, y, b, cfg);
  for (int i = 0; i < 9; ++i) {
    auto up = p, dn = p;
    up[i] += 1e-6;
    dn[i] -= 1e-6;
    const double fd = (he::nse_star_loss(up, y, b, cfg).loss - he::nse_star_loss(dn, y, b, cfg).loss) / 2e-6;
    EXPECT_NEAR(r.d_predictions(i), fd, 1e-7 * (1.0 + std::abs(fd)));
  }
  EXPECT_GE(r.loss, 0.0);
}

TEST(NseStarLoss, Errors) {
  const std::vector<double> p{1.0, 2.0}, y{1.0};
  const std::vector<int> b{0, 0}, bad{0, 4};
  EXPECT_THROW(he::nse_star_loss(p, y, b, loss_config({1.0}, 0.1)), he::Error);
  try {
    he::nse_star_loss(p, p, bad, loss_config({1.0}, 0.1));
    FAIL();
  } catch (const he::Error& e) {
    EXPECT_EQ(e.code(), he::ErrorCode::MissingBasinStd);
  }
}

TEST(ClipGradients, SmallNormUnchanged) {
  auto g = he::ModelParams::zeros(tiny_config());
  g.w_ih(0, 0) = 0.3;
  g.head_b = 0.4;
  EXPECT_NEAR(he::global_norm(g), 0.5, 1e-15);
  EXPECT_EQ(he::clip_gradients(g, 1.0), g);
}

TEST(ClipGradients, SingleEntryClipsToNorm) {
  auto g = he::ModelParams::zeros(tiny_config());
  g.embed(2, 1) = 3.0;
  const auto c = he::clip_gradients(g, 1.0);
  EXPECT_DOUBLE_EQ(c.embed(2, 1), 1.0);
  EXPECT_EQ(he::global_norm(c), 1.0);
}

TEST(ClipGradients, RandomGradientsRespectBoundAndDirection) {
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto g = random_grads(s, 1.0 + static_cast<double>(s));
    const double clip = 0.5 + 0.1 * static_cast<double>(s % 7);
    const auto c = he::clip_gradients(g, clip);
    EXPECT_LE(he::global_norm(c), clip * (1.0 + 1e-12));
    const Eigen::VectorXd a = g.flatten(), b = c.flatten();
    EXPECT_NEAR(a.normalized().dot(b.normalized()), 1.0, 1e-12);
  }
}

TEST(ClipGradients, NonPositiveNormDisablesClipping) {
  const auto g = random_grads(1, 10.0);
  EXPECT_EQ(he::clip_gradients(g, 0.0), g);
}

TEST(Adam, ZeroGradientLeavesParamsUnchanged) {
  auto p = random_grads(9, 1.0);
  const auto before = p;
  auto opt = he::OptState::fresh(p);
  he::adam_step(p, he::ModelParams::zeros(tiny_config()), opt);
  EXPECT_EQ(p, before);
  EXPECT_EQ(opt.step_count, 1);
}

TEST(Adam, FirstStepClosedForm) {
  auto p = he::ModelParams::zeros(tiny_config());
  auto g = he::ModelParams::zeros(tiny_config());
  g.head_b = 2.0;
  g.w_hh(1, 1) = -0.5;
  auto opt = he::OptState::fresh(p);
  he::adam_step(p, g, opt);
  // m_hat = g and v_hat = g^2 after one step.
  EXPECT_NEAR(p.head_b, -1e-3 * 2.0 / (2.0 + 1e-8), 1e-18);
  EXPECT_NEAR(p.head_b, -9.99999e-4, 1e-9);
  EXPECT_NEAR(p.w_hh(1, 1), 1e-3 * 0.5 / (0.5 + 1e-8), 1e-18);
  EXPECT_EQ(p.w_ih(0, 0), 0.0);
}

TEST(Adam, MomentsMatchRecurrenceOverSteps) {
  auto p = he::ModelParams::zeros(tiny_config());
  auto opt = he::OptState::fresh(p);
  double m = 0.0, v = 0.0, x = 0.0;
  const double gs[] = {1.0, -0.5, 0.25, 2.0};
  for (int t = 1; t <= 4; ++t) {
    auto g = he::ModelParams::zeros(tiny_config());
    g.bias(3) = gs[t - 1];
    he::adam_step(p, g, opt);
    m = 0.9 * m + 0.1 * gs[t - 1];
    v = 0.999 * v + 0.001 * gs[t - 1] * gs[t - 1];
    x -= 1e-3 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
    EXPECT_NEAR(p.bias(3), x, 1e-15);
  }
}

TEST(Adam, ZeroGradientRowsStillDecayMoments) {
  auto p = he::ModelParams::zeros(tiny_config());
  auto opt = he::OptState::fresh(p);
  auto g = he::ModelParams::zeros(tiny_config());
  g.embed(0, 0) = 1.0;
  he::adam_step(p, g, opt);
  he::adam_step(p, he::ModelParams::zeros(tiny_config()), opt);
  EXPECT_NEAR(opt.m.embed(0, 0), 0.09, 1e-15);
  EXPECT_NEAR(opt.v.embed(0, 0), 0.001 * 0.999, 1e-18);
  // Momentum keeps moving the row even with a zero gradient.
  EXPECT_LT(p.embed(0, 0), -1e-3);
}

TEST(Adam, Deterministic) {
  auto p1 = random_grads(3, 1.0), p2 = p1;
  auto o1 = he::OptState::fresh(p1), o2 = o1;
  const auto g = random_grads(4, 1.0);
  he::adam_step(p1, g, o1);
  he::adam_step(p2, g, o2);
  EXPECT_EQ(p1, p2);
  EXPECT_EQ(o1, o2);
}
