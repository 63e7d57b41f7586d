#include <gtest/gtest.h>

#include "sts/checkpoint.hpp"
#include "sts/errors.hpp"
#include "sts/trainer.hpp"
#include "support.hpp"

namespace sts {
namespace {

RunConfig small_run(Ablation a = Ablation::kNone) {
  RunConfig rc;
  rc.synth.grid_rows = 2;
  rc.synth.grid_cols = 2;
  rc.synth.n_slots = 30;
  rc.train.t_window = 4;
  rc.train.d = 4;
  rc.train.layers = 1;
  rc.train.heads = 2;
  rc.train.epochs = 2;
  rc.train.val_slots = 3;
  rc.train.ablation = a;
  return rc;
}

struct Trained {
  RunConfig rc;
  RegionGraph graph;
  WindowedDataset data;
  Model model;
  TrainResult result;
};

Trained train_small(Ablation a = Ablation::kNone) {
  const RunConfig rc = small_run(a);
  RegionGraph g = build_grid_graph(2, 2);
  const AnomalyTensor x = generate(rc.synth, g).data;
  WindowedDataset ds = make_windows(x, rc.train);
  Model m(ModelSpec::from(rc.train, 4, 2), g, derive_seed(rc.train.seed, "init"));
  const TrainResult r = train(m, ds, rc.train);
  return {rc, g, std::move(ds), std::move(m), r};
}

Checkpoint capture(const Trained& t) {
  return Checkpoint::capture(t.model, t.rc, t.data.stats, {"c0", "c1"}, t.result.best_epoch, t.result.best_val_mae);
}

TEST(Checkpoint, SerializeRoundTripsBytes) {
  const Trained t = train_small();
  const std::string bytes = capture(t).serialize();
  const Checkpoint back = Checkpoint::deserialize(bytes);
  EXPECT_EQ(back.serialize(), bytes);
  EXPECT_EQ(back.n_regions, 4u);
  EXPECT_EQ(back.categories, (std::vector<std::string>{"c0", "c1"}));
  EXPECT_EQ(back.best_epoch, t.result.best_epoch);
  EXPECT_EQ(back.best_val_mae, t.result.best_val_mae);
  EXPECT_EQ(back.stats, t.data.stats);
  EXPECT_EQ(back.config.format(), t.rc.format());
}

TEST(Checkpoint, RestoredModelPredictsIdentically) {
  const Trained t = train_small();
  test::TempDir dir;
  capture(t).save(dir / "model.bin");
  const Checkpoint ck = Checkpoint::load(dir / "model.bin");
  const Model restored = ck.restore(t.graph);
  ASSERT_EQ(restored.params().size(), t.model.params().size());
  for (std::size_t i = 0; i < restored.params().size(); ++i) {
    EXPECT_EQ(restored.params()[i].name, t.model.params()[i].name);
    EXPECT_EQ(restored.params()[i].value.to_vector(), t.model.params()[i].value.to_vector());
  }
  for (const Window& w : t.data.windows)
    EXPECT_EQ(predict(restored, w, ck.stats, t.rc.train.loss), predict(t.model, w, t.data.stats, t.rc.train.loss));
  EXPECT_EQ(evaluate(restored, t.data, Split::kValidation, t.rc.train.loss).mae, *t.result.best_val_mae);
}

TEST(Checkpoint, NoMtpManifestHasNoExposureHead) {
  const std::string bytes = capture(train_small(Ablation::kNoMtp)).serialize();
  const std::string header = bytes.substr(0, bytes.find("\nend\n"));
  EXPECT_EQ(header.find("head.exposure"), std::string::npos);
  EXPECT_NE(header.find("tensor head.regression 2 2 4"), std::string::npos);
  EXPECT_NE(capture(train_small()).serialize().find("tensor head.exposure 2 2 4"), std::string::npos);
}

TEST(Checkpoint, CorruptInputsAreDataErrors) {
  const std::string bytes = capture(train_small()).serialize();
  EXPECT_THROW(Checkpoint::deserialize(bytes + "x"), DataError);
  EXPECT_THROW(Checkpoint::deserialize(bytes.substr(0, bytes.size() - 3)), DataError);
  EXPECT_THROW(Checkpoint::deserialize("garbage"), DataError);
  EXPECT_THROW(Checkpoint::deserialize(""), DataError);
  std::string version = bytes;
  version.replace(0, std::string("sts-checkpoint 1").size(), "sts-checkpoint 9");
  EXPECT_THROW(Checkpoint::deserialize(version), DataError);
  EXPECT_THROW(Checkpoint::load("/nonexistent/model.bin"), DataError);
}

TEST(Checkpoint, RestoreRejectsMismatchedGraph) {
  const Checkpoint ck = capture(train_small());
  EXPECT_THROW(ck.restore(build_grid_graph(3, 3)), ConfigError);
}

}  // namespace
}  // namespace sts
