#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "cvar/common/binary_io.hpp"
#include "cvar/common/error.hpp"
#include "cvar/train/config.hpp"
#include "cvar/train/trainer.hpp"
#include "support/temp_dir.hpp"

using namespace cvar;
using namespace cvar::train;
using cvar::testing::TempDir;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

synth::DatasetConfig tiny_data(bool paired = false) {
  synth::DatasetConfig c;
  c.classes = 4;
  c.clips_per_class = 3;
  c.val_clips_per_class = 1;
  c.paired = paired;
  c.seed = 5;
  c.frames = 4;
  c.size = 16;
  return c;
}

TrainConfig tiny_train() {
  TrainConfig c;
  c.epochs = 4;
  c.batch = 4;
  c.embed_epochs = 2;
  c.embed_layers = 1;
  c.model.height = c.model.width = 16;
  c.model.patch = 8;
  c.model.dim = 16;
  c.model.layers = 2;
  c.model.heads = 2;
  c.loss.layers = {1, 2};
  return c;
}

class TrainRun : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("train_data");
    synth::generate_dataset(tiny_data(), dir_->path / "ds");
    data_ = new synth::Dataset(synth::load_dataset(dir_->path / "ds"));
  }
  static void TearDownTestSuite() {
    delete data_;
    delete dir_;
  }
  static TempDir* dir_;
  static synth::Dataset* data_;
};

TempDir* TrainRun::dir_ = nullptr;
synth::Dataset* TrainRun::data_ = nullptr;

}  // namespace

TEST(TrainConfig, ParsesCommentsAndOverrides) {
  const auto c = parse_config(
      "# header\n"
      "epochs = 7   # trailing\n"
      "\n"
      "lr=0.25\n"
      "alpha = 1.5\n"
      "dx = pixel\n"
      "da = l2\n"
      "layers = 1-2\n"
      "pairing = matched\n"
      "unpaired = false\n"
      "model.size = 24\n"
      "data.classes = 6\n");
  EXPECT_EQ(c.epochs, 7);
  EXPECT_EQ(c.lr, 0.25);
  EXPECT_EQ(c.loss.alpha, 1.5);
  EXPECT_EQ(c.loss.dx, loss::DxKind::PixelL2);
  EXPECT_EQ(c.loss.da, loss::DaKind::L2);
  EXPECT_EQ(c.loss.layers, (std::vector<int>{1, 2}));
  EXPECT_EQ(c.loss.pairing, loss::Pairing::Matched);
  EXPECT_FALSE(c.unpaired);
  EXPECT_EQ(c.model.height, 24);
  EXPECT_EQ(c.model.width, 24);
  EXPECT_EQ(c.dataset.classes, 6);
  EXPECT_EQ(c.batch, TrainConfig{}.batch);  // untouched keys keep the base
}

TEST(TrainConfig, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(parse_config("nope = 1\n"), ConfigError);
  EXPECT_THROW(parse_config("epochs\n"), ConfigError);
  EXPECT_THROW(parse_config("epochs = 3x\n"), ConfigError);
  EXPECT_THROW(parse_config("unpaired = maybe\n"), ConfigError);
  EXPECT_THROW(parse_config("da = cosine\n"), ConfigError);
  TrainConfig c;
  EXPECT_THROW(apply_override(c, "model.nope", "1"), ConfigError);
  c.lr = -1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.loss.layers = {1, 5};
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.eval_crops = 2;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(TrainConfig, TextRoundTripIsExact) {
  TrainConfig c;
  c.lr = 0.1 + 0.2;  // not representable in short decimal
  c.loss.alpha = 1.0 / 3.0;
  c.loss.epsilon = 1e-300;
  c.seed = 0xffffffffffffffffull;
  c.loss.layers = {1, 3, 4};
  const auto text = to_text(c);
  const auto back = parse_config(text);
  EXPECT_EQ(to_text(back), text);
  EXPECT_EQ(back.lr, c.lr);
  EXPECT_EQ(back.loss.alpha, c.loss.alpha);
  EXPECT_EQ(back.loss.epsilon, c.loss.epsilon);
  EXPECT_EQ(back.seed, c.seed);
  EXPECT_EQ(fingerprint(back), fingerprint(c));
  EXPECT_EQ(fingerprint(c).size(), 64u);
}

TEST(TrainConfig, FingerprintTracksEveryKey) {
  const TrainConfig base;
  const auto m = to_map(base);
  EXPECT_EQ(m.at("alpha"), "0.75");
  EXPECT_EQ(m.at("layers"), "1-4");
  for (const auto& [key, value] : m) {
    TrainConfig c = base;
    const std::string other = key == "dx" ? "pixel" : key == "da" ? "l2" : key == "pairing" ? "matched"
                              : key == "layers"                    ? "1-2"
                              : key == "data.name" || key == "data" ? "x"
                              : value == "true"                     ? "false"
                              : value == "false"                    ? "true"
                              : key == "eval.crops" || value == "2"  ? "3"
                                                                    : "2";
    apply_override(c, key, other);
    EXPECT_NE(fingerprint(c), fingerprint(base)) << key;
  }
}

TEST(CosineLr, EndpointsAndMidpoint) {
  EXPECT_EQ(cosine_lr(0, 100, 0.1), 0.1);
  EXPECT_NEAR(cosine_lr(50, 100, 0.1), 0.05, 1e-15);
  EXPECT_NEAR(cosine_lr(100, 100, 0.1), 0.0, 1e-15);
  EXPECT_NEAR(cosine_lr(25, 100, 2.0), 1.0 + std::cos(std::numbers::pi / 4), 1e-15);
  EXPECT_THROW(cosine_lr(101, 100, 0.1), ConfigError);
  EXPECT_THROW(cosine_lr(0, 0, 0.1), ConfigError);
}

TEST(MetricsRow, HeaderAndFormat) {
  EXPECT_STREQ(kMetricsHeader, "step,epoch,lr,ce_exo,ce_ego,l_self,total");
  StepMetrics m{3, 1, 0.5, 2.0, 1.25, 0.0, 3.25};
  EXPECT_EQ(format_metrics_row(m), "3,1,0.5,2,1.25,0,3.25");
}

TEST_F(TrainRun, AlignsModelWithDataset) {
  const auto c = align_to_dataset(tiny_train(), data_->manifest);
  EXPECT_EQ(c.model.classes_exo, 4);
  EXPECT_EQ(c.model.classes_ego, 4);
  EXPECT_EQ(c.model.frames, 4);
  auto big = tiny_train();
  big.model.height = big.model.width = 32;
  EXPECT_THROW(align_to_dataset(big, data_->manifest), ConfigError);
}

TEST_F(TrainRun, SeededRunsWriteIdenticalFiles) {
  TempDir a("train_a"), b("train_b");
  run_training(tiny_train(), *data_, {a.path});
  run_training(tiny_train(), *data_, {b.path});
  for (const char* f : {"metrics.csv", "model.ckpt", "embed.ckpt", "config.txt"})
    EXPECT_EQ(slurp(a.path / f), slurp(b.path / f)) << f;
  EXPECT_EQ(parse_config(slurp(a.path / "config.txt")).epochs, 4);
}

TEST_F(TrainRun, ResumeReproducesUninterruptedRun) {
  TempDir full("train_full"), part("train_part");
  auto cfg = tiny_train();
  cfg.epochs = 5;
  run_training(cfg, *data_, {full.path});
  RunOptions stop{part.path};
  stop.stop_after_epoch = 3;
  const auto first = run_training(cfg, *data_, stop);
  EXPECT_EQ(first.state.epoch, 3);
  RunOptions cont{part.path};
  cont.resume = true;
  const auto second = run_training(cfg, *data_, cont);
  EXPECT_EQ(second.epochs.size(), 2u);
  EXPECT_EQ(slurp(full.path / "metrics.csv"), slurp(part.path / "metrics.csv"));
  EXPECT_EQ(slurp(full.path / "model.ckpt"), slurp(part.path / "model.ckpt"));
}

TEST_F(TrainRun, ResumeDropsRowsWrittenAfterTheCheckpoint) {
  TempDir full("train_full2"), part("train_part2");
  auto cfg = tiny_train();
  cfg.epochs = 3;
  run_training(cfg, *data_, {full.path});
  RunOptions stop{part.path};
  stop.stop_after_epoch = 2;
  run_training(cfg, *data_, stop);
  // A crash between the CSV flush and the checkpoint leaves extra rows.
  std::ofstream(part.path / "metrics.csv", std::ios::app) << "999,9,0,0,0,0,0\n";
  RunOptions cont{part.path};
  cont.resume = true;
  run_training(cfg, *data_, cont);
  EXPECT_EQ(slurp(full.path / "metrics.csv"), slurp(part.path / "metrics.csv"));
}

TEST_F(TrainRun, ResumeRejectsChangedConfig) {
  TempDir dir("train_changed");
  auto cfg = tiny_train();
  RunOptions stop{dir.path};
  stop.stop_after_epoch = 1;
  run_training(cfg, *data_, stop);
  cfg.loss.alpha = 1.0;
  RunOptions cont{dir.path};
  cont.resume = true;
  EXPECT_THROW(run_training(cfg, *data_, cont), ConfigError);
}

TEST_F(TrainRun, CheckpointCarriesFullState) {
  TempDir dir("train_ckpt");
  auto cfg = tiny_train();
  cfg.epochs = 2;
  cfg.checkpoint_every = 1;
  const auto r = run_training(cfg, *data_, {dir.path});
  EXPECT_TRUE(fs::exists(dir.path / "model_e001.ckpt"));
  EXPECT_TRUE(fs::exists(dir.path / "model_e002.ckpt"));
  const auto ck = model::load_checkpoint(dir.path / "model.ckpt");
  EXPECT_EQ(ck.metadata, to_text(align_to_dataset(cfg, data_->manifest)));
  const auto s = from_checkpoint(ck);
  EXPECT_EQ(s.step, r.state.step);
  EXPECT_EQ(s.epoch, 2);
  EXPECT_EQ(s.velocity, r.state.velocity);
  EXPECT_EQ(model::to_blocks(s.params), model::to_blocks(r.state.params));
  EXPECT_EQ(s.rng.state(), r.state.rng.state());
}

TEST_F(TrainRun, ZeroLambdaMatchesSupervisedObjectiveBitwise) {
  auto off = tiny_train();
  off.self_loss = false;
  auto zero = tiny_train();
  zero.loss.lambda = 0;
  const auto a = run_training(off, *data_);
  const auto b = run_training(zero, *data_);
  ASSERT_EQ(a.steps.size(), b.steps.size());
  for (std::size_t i = 0; i < a.steps.size(); ++i) {
    EXPECT_EQ(a.steps[i].ce_exo, b.steps[i].ce_exo);
    EXPECT_EQ(a.steps[i].ce_ego, b.steps[i].ce_ego);
    EXPECT_EQ(b.steps[i].l_self, 0.0);
  }
  EXPECT_EQ(model::to_blocks(a.state.params), model::to_blocks(b.state.params));
}

TEST_F(TrainRun, LoggedTotalIsSumOfTerms) {
  const auto r = run_training(tiny_train(), *data_);
  ASSERT_EQ(r.steps.size(), 4u * 3u);  // 12 clips per view, batch 4
  bool any_self = false;
  for (const auto& m : r.steps) {
    EXPECT_NEAR(m.total, m.ce_exo + m.ce_ego + m.l_self, 1e-6);
    any_self = any_self || m.l_self > 0;
  }
  EXPECT_TRUE(any_self);
  EXPECT_EQ(r.steps.front().lr, tiny_train().lr);
  EXPECT_LT(r.steps.back().lr, r.steps.front().lr);
}

TEST_F(TrainRun, UnpairedBatchesNeverShareAScene) {
  TempDir dir("train_paired");
  synth::generate_dataset(tiny_data(true), dir.path);
  const auto paired = synth::load_dataset(dir.path);
  auto cfg = tiny_train();
  cfg.epochs = 1;
  for (int b : {4, 6}) {
    cfg.batch = b;
    EXPECT_NO_THROW(run_training(cfg, paired)) << b;
  }
  cfg.batch = 12;  // every exo clip meets every ego clip
  EXPECT_THROW(run_training(cfg, paired), ConfigError);
  cfg.unpaired = false;
  EXPECT_NO_THROW(run_training(cfg, paired));
}

TEST_F(TrainRun, ZeroEmbedEpochsGivesInitialEncoder) {
  auto cfg = align_to_dataset(tiny_train(), data_->manifest);
  cfg.embed_epochs = 0;
  const auto ecfg = embed_config(cfg);
  EXPECT_EQ(ecfg.layers, 1);
  EXPECT_EQ(ecfg.dropout, 0.0);
  const auto exo = prepare_view(data_->train.exo, ecfg, loss::LossConfig{.dx = loss::DxKind::PixelL2}, nullptr);
  std::ostringstream log;
  const auto g = pretrain_embed(exo, cfg, &log);
  EXPECT_EQ(model::to_blocks(g.params), model::to_blocks(model::ParamsF::init(ecfg)));
  EXPECT_NE(log.str().find("random encoder"), std::string::npos);
}

TEST(Embed, PretrainedEmbeddingSeparatesHeldOutClasses) {
  TempDir dir("train_embed_sep");
  synth::generate_dataset(TrainConfig{}.dataset, dir.path / "ds");
  const auto data = synth::load_dataset(dir.path / "ds");
  const auto cfg = align_to_dataset(TrainConfig{}, data.manifest);
  const auto ecfg = embed_config(cfg);
  const auto exo = prepare_view(data.train.exo, ecfg, loss::LossConfig{.dx = loss::DxKind::PixelL2}, nullptr);
  const auto g = pretrain_embed(exo, cfg);
  std::vector<std::vector<double>> f;
  std::vector<int> labels;
  for (const auto& clip : data.val.exo) {
    f.push_back(g.embed(model::center_crop(clip, ecfg.height, ecfg.width)));
    labels.push_back(clip.label);
  }
  double intra = 0, inter = 0;
  int ni = 0, nx = 0;
  for (std::size_t i = 0; i < f.size(); ++i)
    for (std::size_t j = i + 1; j < f.size(); ++j) {
      const auto d = loss::d_x_embedded(f[i], f[j], cfg.loss);
      if (labels[i] == labels[j]) {
        intra += d;
        ++ni;
      } else {
        inter += d;
        ++nx;
      }
    }
  EXPECT_LT(intra / ni, inter / nx);
}

TEST(Augment, FlipAndShiftAreExactRearrangements) {
  model::ModelConfig m;
  m.frames = 4;
  m.height = m.width = 8;
  std::vector<float> clip(m.clip_numel());
  for (std::size_t i = 0; i < clip.size(); ++i) clip[i] = static_cast<float>(i);
  auto at = [&](const std::vector<float>& v, int t, int y, int x, int c) {
    return v[((static_cast<std::size_t>(t) * 8 + y) * 8 + x) * 3 + c];
  };
  Rng rng(3);
  int flips = 0, shifts[3] = {0, 0, 0};
  for (int trial = 0; trial < 60; ++trial) {
    const auto out = augment_clip(clip, m, rng);
    // Recover the draw from one pixel, then check every pixel against it.
    const float probe = at(out, 1, 0, 0, 0);
    const int st = static_cast<int>(probe) / (8 * 8 * 3);
    const bool flip = static_cast<int>(probe) % (8 * 3) / 3 == 7;
    const int shift = st - 1;
    ASSERT_GE(shift, -1);
    ASSERT_LE(shift, 1);
    flips += flip;
    ++shifts[shift + 1];
    for (int t = 0; t < 4; ++t)
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x)
          for (int c = 0; c < 3; ++c)
            ASSERT_EQ(at(out, t, y, x, c), at(clip, std::clamp(t + shift, 0, 3), y, flip ? 7 - x : x, c));
  }
  EXPECT_GT(flips, 10);
  EXPECT_LT(flips, 50);
  for (int k : shifts) EXPECT_GT(k, 5);
}

TEST_F(TrainRun, AugmentedRunsStayDeterministicAndResumable) {
  TempDir full("train_aug_full"), part("train_aug_part");
  auto cfg = tiny_train();
  cfg.augment = true;
  const auto plain = run_training(tiny_train(), *data_);
  const auto a = run_training(cfg, *data_, {full.path});
  EXPECT_NE(a.steps.back().total, plain.steps.back().total);
  RunOptions stop{part.path};
  stop.stop_after_epoch = 2;
  run_training(cfg, *data_, stop);
  RunOptions cont{part.path};
  cont.resume = true;
  run_training(cfg, *data_, cont);
  EXPECT_EQ(slurp(full.path / "metrics.csv"), slurp(part.path / "metrics.csv"));
}

TEST_F(TrainRun, PrepareViewCachesTheConfiguredDx) {
  const auto cfg = align_to_dataset(tiny_train(), data_->manifest);
  auto lc = cfg.loss;
  lc.dx = loss::DxKind::PixelL2;
  const auto v = prepare_view(data_->train.ego, cfg.model, lc, nullptr);
  EXPECT_EQ(v.size(), 12u);
  EXPECT_EQ(v.pixels.size(), 12u);
  EXPECT_TRUE(v.embed.empty());
  EXPECT_EQ(v.pixels[0].size(), cfg.model.clip_numel());
  EXPECT_EQ(v.pixels[0], model::center_crop(data_->train.ego[0], 16, 16).data);
  lc.dx = loss::DxKind::DeepEmbed;
  EXPECT_THROW(prepare_view(data_->train.ego, cfg.model, lc, nullptr), ConfigError);
}
