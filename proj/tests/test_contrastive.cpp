#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "cardioclr/contrastive.hpp"
#include "cardioclr/phantom.hpp"
#include "test_util.hpp"

using namespace cardioclr;
using testutil::random_tensor;

namespace {

double loss_of(const std::vector<Tensor<double>>& zs, double tau) {
  Tape<double> tape;
  std::vector<Var> z;
  for (const auto& t : zs) z.push_back(tape.constant(t));
  NTXentConfig cfg;
  cfg.temperature = tau;
  return tape.value(ntxent_loss(tape, z, cfg)).item();
}

// Full 2N x 2N cosine matrix, then the per-anchor terms summed directly.
double brute_force_ntxent(const std::vector<Tensor<double>>& zs, double tau) {
  const std::size_t M = zs.size();
  std::vector<std::vector<double>> sim(M, std::vector<double>(M));
  for (std::size_t i = 0; i < M; ++i)
    for (std::size_t k = 0; k < M; ++k) {
      double d = 0, a = 0, b = 0;
      for (std::size_t j = 0; j < zs[i].numel(); ++j) {
        d += zs[i][j] * zs[k][j];
        a += zs[i][j] * zs[i][j];
        b += zs[k][j] * zs[k][j];
      }
      sim[i][k] = d / (std::sqrt(a) * std::sqrt(b));
    }
  double total = 0.0;
  for (std::size_t i = 0; i < M; ++i) {
    const std::size_t p = i % 2 == 0 ? i + 1 : i - 1;
    double denom = 0.0;
    for (std::size_t k = 0; k < M; ++k)
      if (k != i) denom += std::exp(sim[i][k] / tau);
    total += -std::log(std::exp(sim[i][p] / tau) / denom);
  }
  return total / static_cast<double>(M);
}

std::vector<Tensor<double>> random_batch(std::size_t n_pairs, std::size_t dim, Rng& rng) {
  std::vector<Tensor<double>> zs;
  for (std::size_t i = 0; i < 2 * n_pairs; ++i) zs.push_back(random_tensor(Shape{dim}, rng));
  return zs;
}

Tensor<double> run_project(const ProjectionHead<double>& head, const Tensor<double>& h) {
  Tape<double> tape;
  auto hb = head.params.bind(tape, false);
  return tape.value(project(tape, hb, tape.constant(h)));
}

}  // namespace

TEST(Project, ZeroInputZeroBiases) {
  Rng rng(1);
  auto head = ProjectionHead<double>::init(6, 5, 4, rng);
  const auto z = run_project(head, Tensor<double>(Shape{6}));
  for (double v : z.values()) EXPECT_EQ(v, 0.0);
}

TEST(Project, IdentityHeadPassesNonnegativeInput) {
  Rng rng(2);
  auto head = ProjectionHead<double>::init(4, 4, 4, rng);
  for (std::size_t p : {0u, 2u}) {
    head.params[p].fill(0.0);
    for (std::size_t i = 0; i < 4; ++i) head.params[p][i * 4 + i] = 1.0;
  }
  const auto h = random_tensor(Shape{4}, rng, 0.0, 2.0);
  EXPECT_EQ(run_project(head, h), h);
}

TEST(Project, MatchesComposedOracle) {
  Rng rng(3);
  auto head = ProjectionHead<double>::init(5, 7, 3, rng);
  for (std::size_t p : {1u, 3u})
    for (auto& v : head.params[p].values()) v = rng.uniform(-0.5, 0.5);
  const auto h = random_tensor(Shape{5}, rng);
  const auto &W1 = head.params[0], &b1 = head.params[1], &W2 = head.params[2], &b2 = head.params[3];
  std::vector<double> a(7);
  for (std::size_t o = 0; o < 7; ++o) {
    double s = b1[o];
    for (std::size_t i = 0; i < 5; ++i) s += W1[o * 5 + i] * h[i];
    a[o] = std::max(0.0, s);
  }
  const auto z = run_project(head, h);
  for (std::size_t o = 0; o < 3; ++o) {
    double s = b2[o];
    for (std::size_t i = 0; i < 7; ++i) s += W2[o * 7 + i] * a[i];
    EXPECT_LE(testutil::rel_diff(z[o], s), 1e-9);
  }
}

TEST(NTXent, ConstantSimilarityGivesLogTwoNMinusOne) {
  Rng rng(4);
  const auto v = random_tensor(Shape{5}, rng);
  for (double tau : {0.05, 0.1, 1.0, 3.0}) {
    EXPECT_NEAR(loss_of(std::vector<Tensor<double>>(4, v), tau), std::log(3.0), 1e-12);
    EXPECT_NEAR(loss_of(std::vector<Tensor<double>>(10, v), tau), std::log(9.0), 1e-12);
  }
  EXPECT_NEAR(std::log(3.0), 1.0986, 1e-4);
}

TEST(NTXent, SinglePairRejected) {
  Rng rng(5);
  EXPECT_THROW(loss_of(random_batch(1, 4, rng), 0.1), ConfigError);
  NTXentConfig cfg;
  cfg.batch_size = 1;
  EXPECT_THROW(cfg.validate(), ValidationError);
}

TEST(NTXent, MatchesBruteForceOracle) {
  Rng rng(6);
  for (std::size_t n : {2u, 3u, 4u, 8u})
    for (double tau : {0.05, 0.1, 1.0}) {
      const auto zs = random_batch(n, 6, rng);
      EXPECT_LE(testutil::rel_diff(loss_of(zs, tau), brute_force_ntxent(zs, tau)), 1e-6)
          << "N=" << n << " tau=" << tau;
    }
}

TEST(NTXent, PairPermutationInvariance) {
  Rng rng(7);
  const auto zs = random_batch(5, 6, rng);
  std::vector<std::size_t> pairs{3, 0, 4, 2, 1};
  std::vector<Tensor<double>> perm;
  for (auto p : pairs) {
    perm.push_back(zs[2 * p]);
    perm.push_back(zs[2 * p + 1]);
  }
  EXPECT_NEAR(loss_of(perm, 0.1), loss_of(zs, 0.1), 1e-9);
}

TEST(NTXent, ScaleInvariance) {
  Rng rng(8);
  auto zs = random_batch(4, 6, rng);
  const double base = loss_of(zs, 0.1);
  for (auto& z : zs)
    for (auto& v : z.values()) v *= 3.7;
  EXPECT_LE(testutil::rel_diff(loss_of(zs, 0.1), base), 1e-6);
}

TEST(EarlyStopper, RisingCurveKeepsFirstEpoch) {
  EarlyStopper s(1, 1e-4);
  EXPECT_TRUE(s.update(1.0));
  EXPECT_FALSE(s.should_stop());
  EXPECT_FALSE(s.update(1.2));
  EXPECT_TRUE(s.should_stop());
  EXPECT_EQ(s.best_epoch(), 1u);
}

TEST(EarlyStopper, MinDeltaAndPatience) {
  EarlyStopper s(2, 0.1);
  s.update(1.0);
  EXPECT_FALSE(s.update(0.95));  // below min-delta
  EXPECT_FALSE(s.should_stop());
  EXPECT_TRUE(s.update(0.5));
  EXPECT_FALSE(s.update(0.6));
  EXPECT_FALSE(s.update(0.45));
  EXPECT_TRUE(s.should_stop());
  EXPECT_EQ(s.best_epoch(), 3u);
}

namespace {

struct PretrainFixture {
  std::vector<ImageItem> train, val;
};

PretrainFixture small_images(std::size_t per_class) {
  PhantomConfig cfg;
  cfg.cases_per_class = per_class;
  const auto ds = generate_dataset(cfg);
  PretrainFixture f;
  for (const auto& c : ds.cases) {
    if (c.split == Split::Test) continue;
    (c.split == Split::Train ? f.train : f.val).push_back(ImageItem{c.case_id, c.ed_frame});
  }
  return f;
}

EncoderConfig tiny_encoder() {
  EncoderConfig e;
  e.channels = {4, 8};
  e.embedding_dim = 16;
  return e;
}

PretrainResult<float> run_pretrain(const PretrainFixture& f, const PretrainConfig& pc, const NTXentConfig& nc) {
  Rng rng(11);
  auto enc = ConvEncoder<float>::init(tiny_encoder(), rng);
  auto head = ProjectionHead<float>::init(16, 16, 8, rng);
  return pretrain(enc, head, std::span<const ImageItem>(f.train), std::span<const ImageItem>(f.val), pc, nc,
                  AugPolicy{});
}

}  // namespace

TEST(Pretrain, DeterministicCurves) {
  const auto f = small_images(6);
  PretrainConfig pc;
  pc.max_epochs = 3;
  pc.seed = 5;
  NTXentConfig nc;
  nc.batch_size = 4;
  const auto a = run_pretrain(f, pc, nc);
  pc.threads = 3;
  const auto b = run_pretrain(f, pc, nc);
  EXPECT_EQ(a.train_loss, b.train_loss);
  EXPECT_EQ(a.val_loss, b.val_loss);
  EXPECT_EQ(a.encoder.params, b.encoder.params);
}

TEST(Pretrain, ReturnsBestEpochParameters) {
  const auto f = small_images(6);
  PretrainConfig pc;
  pc.max_epochs = 8;
  pc.patience = 1;
  pc.learning_rate = 3e-2;  // large steps so validation loss soon stops improving
  NTXentConfig nc;
  nc.batch_size = 4;
  const auto full = run_pretrain(f, pc, nc);
  ASSERT_GE(full.best_epoch, 1u);
  // stopped exactly `patience` epochs after the best one, unless the cap was hit
  if (full.val_loss.size() < pc.max_epochs) {
    EXPECT_EQ(full.val_loss.size(), full.best_epoch + 1);
  }
  // replaying up to the best epoch reproduces the returned parameters
  pc.max_epochs = full.best_epoch;
  const auto replay = run_pretrain(f, pc, nc);
  EXPECT_EQ(replay.encoder.params, full.encoder.params);
  EXPECT_EQ(replay.head.params, full.head.params);
}

TEST(Pretrain, TooFewImagesIsConfigError) {
  auto f = small_images(2);
  PretrainConfig pc;
  NTXentConfig nc;
  nc.batch_size = 64;
  EXPECT_THROW(run_pretrain(f, pc, nc), ConfigError);
}

TEST(Pretrain, DefaultPhantomTrainingLossDecreases) {
  const auto f = small_images(PhantomConfig{}.cases_per_class);
  PretrainConfig pc;
  pc.max_epochs = 25;
  pc.patience = 25;
  Rng rng(12);
  auto enc = ConvEncoder<float>::init(EncoderConfig{}, rng);
  auto head = ProjectionHead<float>::init(64, 64, 32, rng);
  const auto r = pretrain(enc, head, std::span<const ImageItem>(f.train), std::span<const ImageItem>(f.val), pc,
                          NTXentConfig{}, AugPolicy{});
  ASSERT_EQ(r.train_loss.size(), 25u);
  EXPECT_LT(r.train_loss.back(), r.train_loss.front());
}
