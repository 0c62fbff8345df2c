#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <map>
#include <memory>
#include <sstream>

#include "nrd/nrd.hpp"

using namespace nrd;

namespace {

std::shared_ptr<const TextureTargetBank<float>> small_bank() {
  static auto bank = [] {
    auto fx = std::make_shared<const FeatureExtractor<float>>(builtin_filter_bank());
    BankOptions o;
    o.n_rot = 4;
    return std::make_shared<const TextureTargetBank<float>>(build_target_bank<float>(make_stripes(24, 6.0, 30.0, 1), fx, o));
  }();
  return bank;
}

TrainConfig tiny_config() {
  TrainConfig c;
  c.grid = 8;
  c.n_pool = 64;
  c.i_min = 4;
  c.i_max = 8;
  c.rng_seed = 77;
  c.seed.sigma = {1.0, 1.5};
  c.seed.blob_count = {1, 3};
  return c;
}

RDModel<float> tiny_model(double w1 = 0.05) {
  ModelInit init;
  init.channels = 4;
  init.hidden = 8;
  init.w1_scale = w1;
  init.seed = 5;
  return make_model<float>(init);
}

bool same_state(const ChemState<float>& a, const ChemState<float>& b) {
  return a.values.size() == b.values.size() &&
         std::memcmp(a.values.data(), b.values.data(), sizeof(float) * a.values.size()) == 0;
}

}  // namespace

TEST(Schedule, StepDecay) {
  TrainConfig c;
  EXPECT_DOUBLE_EQ(lr_at(1, c), 1e-3);
  EXPECT_DOUBLE_EQ(lr_at(999, c), 1e-3);
  EXPECT_DOUBLE_EQ(lr_at(1000, c), 2e-4);
  EXPECT_DOUBLE_EQ(lr_at(9999, c), 2e-4);
  EXPECT_NEAR(lr_at(10000, c), 4e-5, 1e-18);
  EXPECT_NEAR(lr_at(20000, c), 4e-5, 1e-18);
}

TEST(Config, Defaults) {
  TrainConfig c;
  EXPECT_EQ(c.n_train, 20000);
  EXPECT_EQ(c.i_min, 32);
  EXPECT_EQ(c.i_max, 96);
  EXPECT_EQ(c.n_pool, 1024);
  EXPECT_EQ(c.r_seed, 32);
  EXPECT_EQ(c.n_batch, 4);
  EXPECT_EQ(c.lr, 1e-3);
  TrainConfig bad;
  bad.n_train = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
  EXPECT_THROW(Trainer(tiny_model(), small_bank(), bad), ConfigError);
  bad = {};
  bad.i_min = 10;
  bad.i_max = 5;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = {};
  bad.n_batch = 2000;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Normalize, UnitNormAndScaleInvariance) {
  auto m = tiny_model();
  auto g = Gradients<float>::zeros_like(m);
  g.w0.setConstant(0.3f);
  g.w1(2, 1) = -7.0f;
  auto n = normalize_gradients(g);
  EXPECT_NEAR(n.w0.norm(), 1.0f, 1e-6f);
  EXPECT_NEAR(n.w1.norm(), 1.0f, 1e-6f);
  EXPECT_EQ(n.b0.norm(), 0.0f);
  auto big = g;
  big *= 10.0f;
  auto nb = normalize_gradients(big);
  EXPECT_LT((nb.w0 - n.w0).cwiseAbs().maxCoeff(), 1e-7f);
  EXPECT_LT((nb.w1 - n.w1).cwiseAbs().maxCoeff(), 1e-7f);
}

TEST(AdamOptimizer, MatchesClosedForm) {
  Adam<double> adam({2});
  double p[2] = {1.0, -2.0};
  const double g1[2] = {0.5, -0.25}, g2[2] = {-0.1, 0.4};
  std::span<double> pv(p, 2);
  const std::span<double> params[1] = {pv};
  adam.step(params, std::vector<std::span<const double>>{{g1, 2}}, 0.01);
  adam.step(params, std::vector<std::span<const double>>{{g2, 2}}, 0.01);
  double want[2] = {1.0, -2.0};
  for (int i = 0; i < 2; ++i) {
    double m = 0, v = 0;
    for (int t = 1; t <= 2; ++t) {
      const double g = t == 1 ? g1[i] : g2[i];
      m = 0.9 * m + 0.1 * g;
      v = 0.999 * v + 0.001 * g * g;
      want[i] -= 0.01 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
    }
    EXPECT_NEAR(p[i], want[i], 1e-10);
  }
  EXPECT_EQ(adam.steps(), 2u);
}

TEST(Trainer, EveryStepInjectsWhenCadenceIsOne) {
  auto cfg = tiny_config();
  cfg.r_seed = 1;
  Trainer tr(tiny_model(), small_bank(), cfg);
  for (int i = 0; i < 5; ++i) EXPECT_TRUE(tr.step().seed_injected);
}

TEST(Trainer, FixedUnrollLength) {
  auto cfg = tiny_config();
  cfg.i_min = cfg.i_max = 32;
  Trainer tr(tiny_model(), small_bank(), cfg);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(tr.step().unroll, 32);
}

TEST(Trainer, UnrollLengthsUniformOverInclusiveRange) {
  auto cfg = tiny_config();
  cfg.i_min = 1;
  cfg.i_max = 4;
  Trainer tr(tiny_model(), small_bank(), cfg);
  std::map<int, int> counts;
  const int n = 400;
  for (int i = 0; i < n; ++i) ++counts[tr.step().unroll];
  ASSERT_EQ(counts.size(), 4u);
  EXPECT_EQ(counts.begin()->first, 1);
  EXPECT_EQ(counts.rbegin()->first, 4);
  double chi2 = 0.0;
  for (auto [k, c] : counts) chi2 += (c - n / 4.0) * (c - n / 4.0) / (n / 4.0);
  EXPECT_LT(chi2, 16.27);  // 3 dof, p = 0.001
}

TEST(Trainer, DefaultUnrollDistributionPassesChiSquare) {
  const TrainConfig cfg;
  Rng rng = substream(17, Stream::unroll);
  std::map<int, int> counts;
  const int n = 10000;
  for (int i = 0; i < n; ++i) ++counts[draw_unroll(rng, cfg)];
  ASSERT_EQ(counts.size(), 65u);
  EXPECT_EQ(counts.begin()->first, 32);
  EXPECT_EQ(counts.rbegin()->first, 96);
  const double expected = n / 65.0;
  double chi2 = 0.0;
  for (auto [k, c] : counts) chi2 += (c - expected) * (c - expected) / expected;
  EXPECT_LT(chi2, 93.22);  // 64 dof, p = 0.01
}

TEST(Trainer, InjectionCadenceAndPoolResidency) {
  auto cfg = tiny_config();
  Trainer tr(tiny_model(), small_bank(), cfg);
  int injections = 0;
  for (int s = 1; s <= 320; ++s) {
    const SamplePool before = tr.pool();
    auto rep = tr.step();
    ASSERT_FALSE(rep.diverged);
    ASSERT_EQ(rep.batch.size(), 4u);
    EXPECT_EQ(rep.seed_injected, s % 32 == 0);
    injections += rep.seed_injected;
    std::vector<bool> in_batch(cfg.n_pool, false);
    for (int i : rep.batch) in_batch[i] = true;
    for (int i = 0; i < cfg.n_pool; ++i)
      if (!in_batch[i]) ASSERT_TRUE(same_state(before.states[i], tr.pool().states[i])) << "slot " << i;
  }
  EXPECT_EQ(injections, 10);
}

TEST(Trainer, DeterministicUnderSeed) {
  Trainer a(tiny_model(), small_bank(), tiny_config()), b(tiny_model(), small_bank(), tiny_config());
  for (int i = 0; i < 6; ++i) EXPECT_EQ(a.step().loss, b.step().loss);
  EXPECT_EQ(a.pool().digest(), b.pool().digest());
}

TEST(Checkpoint, ByteIdenticalAndReplayable) {
  Trainer tr(tiny_model(), small_bank(), tiny_config());
  for (int i = 0; i < 5; ++i) tr.step();
  const auto bytes = tr.encode_checkpoint();
  EXPECT_EQ(bytes, tr.encode_checkpoint());
  const SamplePool pool = tr.pool();
  std::vector<double> expected;
  for (int i = 0; i < 3; ++i) expected.push_back(tr.step().loss);

  Trainer other(tiny_model(0.2), small_bank(), tiny_config());
  other.set_pool(pool);
  other.restore_bytes(bytes, "checkpoint");
  EXPECT_EQ(other.steps_done(), 5);
  EXPECT_EQ(other.encode_checkpoint(), bytes);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(other.step().loss, expected[i]);
}

TEST(Checkpoint, RejectsCorruptionAndMismatch) {
  Trainer tr(tiny_model(), small_bank(), tiny_config());
  tr.step();
  auto bytes = tr.encode_checkpoint();

  auto flipped = bytes;
  flipped[bytes.size() / 2] ^= 1;
  EXPECT_THROW(tr.restore_bytes(flipped, "ck"), FormatError);
  EXPECT_THROW(tr.restore_bytes({bytes.begin(), bytes.end() - 3}, "ck"), FormatError);

  Trainer fresh(tiny_model(), small_bank(), tiny_config());
  EXPECT_THROW(fresh.restore_bytes(bytes, "ck"), IntegrityError);  // pool differs

  auto cfg = tiny_config();
  cfg.rng_seed = 78;
  Trainer reseeded(tiny_model(), small_bank(), cfg);
  reseeded.set_pool(tr.pool());
  EXPECT_THROW(reseeded.restore_bytes(bytes, "ck"), IntegrityError);

  const auto dir = std::filesystem::temp_directory_path() / ("nrd_ck_" + std::to_string(::getpid()));
  tr.checkpoint(dir / "a.rdck");
  Trainer again(tiny_model(), small_bank(), tiny_config());
  again.set_pool(tr.pool());
  again.restore(dir / "a.rdck");
  EXPECT_EQ(again.encode_checkpoint(), bytes);
  std::filesystem::remove_all(dir);
}

TEST(Trainer, DivergenceDiscardsBatchThenAborts) {
  auto m = tiny_model(0.0);
  m.reaction.w1.setConstant(1e6f);
  m.reaction.b0.setConstant(1.0f);
  auto cfg = tiny_config();
  std::vector<std::string> warnings;
  auto prev = set_warning_handler([&](std::string_view w) { warnings.emplace_back(w); });
  Trainer tr(m, small_bank(), cfg);
  const auto params_before = tr.model().reaction.w0;
  for (int i = 0; i < cfg.max_consecutive_divergences; ++i) {
    auto rep = tr.step();
    EXPECT_TRUE(rep.diverged);
    EXPECT_TRUE(std::isnan(rep.loss));
    for (int b : rep.batch) EXPECT_TRUE(tr.pool().states[b].all_finite());
  }
  EXPECT_EQ((tr.model().reaction.w0 - params_before).cwiseAbs().maxCoeff(), 0.0f);
  EXPECT_EQ(int(warnings.size()), cfg.max_consecutive_divergences);
  EXPECT_THROW(tr.step(), TrainingAborted);
  set_warning_handler(prev);
}

TEST(Log, CsvRows) {
  std::ostringstream os;
  write_log_header(os);
  StepReport r;
  r.step = 3;
  r.loss = 0.5;
  r.lr = 1e-3;
  r.unroll = 40;
  r.seed_injected = true;
  write_log_row(os, r);
  EXPECT_EQ(os.str(), "step,loss,lr,unroll,seed_injected\n3,0.5,0.001,40,1\n");
}
