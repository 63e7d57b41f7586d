#include <gtest/gtest.h>

#include "sts/config.hpp"
#include "sts/errors.hpp"
#include "support.hpp"

namespace sts {
namespace {

TEST(Config, DefaultsMatchDocumentedValues) {
  const RunConfig c;
  EXPECT_EQ(c.train.t_window, 30u);
  EXPECT_EQ(c.train.d, 16u);
  EXPECT_EQ(c.train.layers, 3u);
  EXPECT_EQ(c.train.heads, 8u);
  EXPECT_EQ(c.train.lr0, 0.001);
  EXPECT_EQ(c.train.decay, 0.96);
  EXPECT_EQ(c.train.split_train, 7u);
  EXPECT_EQ(c.train.split_test, 1u);
  EXPECT_EQ(c.train.loss.eta, (BucketWeights{0.05, 0.2, 0.25, 0.5}));
  EXPECT_EQ(c.train.loss.tau, 0.5);
  EXPECT_TRUE(c.train.dsa_self_loop);
  EXPECT_EQ(c.train.mask_mode, MaskMode::kPredicted);
  EXPECT_EQ(c.train.ablation, Ablation::kNone);
  EXPECT_EQ(c.synth.target_zero_ratio, 0.727);
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, ParseOverridesAndRoundTrips) {
  const RunConfig c = RunConfig::parse(
      "# toy run\n"
      "grid_rows = 3\n"
      "grid_cols=3\n"
      "  t_window = 6  \n"
      "d = 8\nheads = 2\nlayers = 1\n"
      "split = 3:1\n"
      "batch_size = full\n"
      "eta = 0.1, 0.2, 0.3, 0.4\n"
      "categories = burglary, robbery\n"
      "n_categories = 2\n"
      "ablation = -MTP\n"
      "norm = minmax\n"
      "dsa_activation = tanh\n"
      "dsa_self_loop = false\n"
      "lr = 0.0025\n");
  EXPECT_EQ(c.synth.grid_rows, 3u);
  EXPECT_EQ(c.train.t_window, 6u);
  EXPECT_EQ(c.train.split_train, 3u);
  EXPECT_EQ(c.train.split_test, 1u);
  EXPECT_EQ(c.train.batch_size, 0u);
  EXPECT_EQ(c.train.loss.eta, (BucketWeights{0.1, 0.2, 0.3, 0.4}));
  EXPECT_EQ(c.data.categories, (std::vector<std::string>{"burglary", "robbery"}));
  EXPECT_EQ(c.train.ablation, Ablation::kNoMtp);
  EXPECT_EQ(c.train.norm, NormKind::kMinMax);
  EXPECT_EQ(c.train.dsa_activation, stc::Activation::kTanh);
  EXPECT_FALSE(c.train.dsa_self_loop);
  EXPECT_EQ(c.train.lr0, 0.0025);

  const RunConfig again = RunConfig::parse(c.format());
  EXPECT_EQ(again.format(), c.format());
  EXPECT_EQ(RunConfig::parse(RunConfig{}.format()).format(), RunConfig{}.format());
}

TEST(Config, FormatPreservesDoublesExactly) {
  RunConfig c;
  c.train.lr0 = 0.1 + 0.2;
  c.synth.base_rate = {1.0 / 3.0, 2.0 / 7.0};
  c.train.loss.tau = 0.2;
  EXPECT_EQ(RunConfig::parse(c.format()).train.lr0, c.train.lr0);
  EXPECT_EQ(RunConfig::parse(c.format()).synth.base_rate, c.synth.base_rate);
}

TEST(Config, RejectsUnknownKeysWithLineNumbers) {
  try {
    RunConfig::parse("d = 8\nheads = 2\nlearning_rate = 0.1\n");
    FAIL() << "expected a config error";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("learning_rate"), std::string::npos) << msg;
  }
}

TEST(Config, RejectsInvalidValues) {
  EXPECT_THROW(RunConfig::parse("d = eight\n"), ConfigError);
  EXPECT_THROW(RunConfig::parse("d = 7\n"), ConfigError);
  EXPECT_THROW(RunConfig::parse("d = 8\nheads = 3\n"), ConfigError);
  EXPECT_THROW(RunConfig::parse("lr_decay = 0\n"), ConfigError);
  EXPECT_THROW(RunConfig::parse("lr_decay = 1.5\n"), ConfigError);
  EXPECT_THROW(RunConfig::parse("t_window = 0\n"), ConfigError);
  EXPECT_THROW(RunConfig::parse("batch_size = 0\n"), ConfigError);
  EXPECT_THROW(RunConfig::parse("tau = 1\n"), ConfigError);
  EXPECT_THROW(RunConfig::parse("ablation = -XYZ\n"), ConfigError);
  EXPECT_THROW(RunConfig::parse("eta = 1, 2\n"), ConfigError);
  EXPECT_THROW(RunConfig::parse("grid_neighborhood = 6\n"), ConfigError);
  EXPECT_THROW(RunConfig::parse("target_zero_ratio = 1.2\n"), ConfigError);
  EXPECT_THROW(RunConfig::parse("categories = a b, c\n"), ConfigError);
  EXPECT_THROW(RunConfig::parse("categories = a, b, c\n"), ConfigError);
  EXPECT_THROW(RunConfig::parse("just some words\n"), ConfigError);
  EXPECT_THROW(RunConfig::load("/nonexistent/config.txt"), ConfigError);
}

TEST(Config, ReferenceListsEveryKey) {
  const std::string ref = config_reference();
  for (const char* key : {"grid_rows", "t_window", "lr", "lr_decay", "batch_size", "eta", "lambda_c", "lambda_reg",
                          "tau", "norm", "dsa_self_loop", "mask_mode", "ablation", "grad_clip", "synth_seed", "seed"}) {
    EXPECT_NE(ref.find(std::string("  ") + key + " "), std::string::npos) << key;
  }
}

TEST(Config, AblationTagsRoundTrip) {
  for (Ablation a : {Ablation::kNone, Ablation::kNoMsa, Ablation::kNoTrr, Ablation::kNoDsa, Ablation::kNoMtp}) {
    EXPECT_EQ(parse_ablation(to_string(a)), a);
  }
  EXPECT_THROW(parse_ablation("MSA"), ConfigError);
}

TEST(Config, DerivedSeedsAreStableAndDistinct) {
  EXPECT_EQ(derive_seed(42, "init"), derive_seed(42, "init"));
  EXPECT_NE(derive_seed(42, "init"), derive_seed(42, "shuffle"));
  EXPECT_NE(derive_seed(42, "init"), derive_seed(43, "init"));
}

TEST(Config, LoadReadsFiles) {
  test::TempDir dir;
  test::write_file(dir / "run.cfg", "epochs = 3\nseed = 9\n");
  const RunConfig c = RunConfig::load(dir / "run.cfg");
  EXPECT_EQ(c.train.epochs, 3u);
  EXPECT_EQ(c.train.seed, 9u);
}

}  // namespace
}  // namespace sts
