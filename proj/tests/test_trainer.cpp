#include <gtest/gtest.h>

#include <cmath>

#include "dnres/error.hpp"
#include "dnres/trainer.hpp"
#include "test_support.hpp"

using namespace dnres;

namespace {

std::vector<PatchPair> small_pairs(std::size_t images = 2) {
  return build_training_set(synthetic_corpus(images, 49, 3), {GaussianNoise{25}}, false, {16, 0}, 4).pairs;
}

CascadePlan quick_plan(int blocks, int cap) {
  CascadePlan plan;
  plan.max_blocks = blocks;
  plan.epoch_cap = cap;
  plan.batch_size = 4;
  plan.optimizer.learning_rate = 1e-3;
  return plan;
}

// All weights zero, output bias c: maps any input to the constant c.
Network constant_network(float c) {
  Rng rng(1);
  Network net = build_base<float>(rng);
  for (auto& layer : net.mutable_layers()) zero_parameters(layer);
  net.mutable_layers().back().conv.bias[0] = c;
  return net;
}

}  // namespace

TEST(Trainer, ZeroBlocksStopsAfterStageZero) {
  const auto pairs = small_pairs();
  const auto r = run_cascade(quick_plan(0, 3), pairs, 1);
  ASSERT_EQ(r.history.size(), 1u);
  EXPECT_EQ(r.history[0].stage, 0);
  EXPECT_EQ(r.history[0].blocks, 0);
  EXPECT_EQ(r.net.block_count(), 0);
  EXPECT_EQ(r.history[0].epochs, static_cast<int>(r.history[0].epoch_losses.size()));
  EXPECT_TRUE(r.history[0].node.empty());
}

TEST(Trainer, ZeroLearningRateLeavesWeightsUntouched) {
  const auto pairs = small_pairs();
  Rng rng(2);
  Network net = insert_resblock(build_base<float>(rng), rng);
  const Network before = net;
  for (auto kind : {OptimizerKind::adam, OptimizerKind::sgd}) {
    OptimizerConfig cfg;
    cfg.kind = kind;
    cfg.learning_rate = 0.0;
    Optimizer<float> opt(cfg);
    const double l = train_epoch(net, pairs, LossSpec::mse(), opt, 4, 3);
    EXPECT_TRUE(std::isfinite(l));
    EXPECT_TRUE(net == before) << to_string(kind);
  }
}

TEST(Trainer, OverfitsASinglePair) {
  const std::vector<PatchPair> one{small_pairs(1).front()};
  Rng rng(5);
  Network net = build_base<float>(rng);
  OptimizerConfig cfg;
  cfg.learning_rate = 1e-3;
  Optimizer<float> opt(cfg);
  const double initial = evaluate_loss(net, one, LossSpec::mse());
  for (int e = 0; e < 400; ++e) train_epoch(net, one, LossSpec::mse(), opt, 1, e);
  EXPECT_LT(evaluate_loss(net, one, LossSpec::mse()), 0.01 * initial);
}

TEST(Trainer, CascadeIsDeterministicAndThresholdsAreSound) {
  const auto pairs = small_pairs();
  const auto plan = quick_plan(2, 4);
  const auto a = run_cascade(plan, pairs, 7);
  const auto b = run_cascade(plan, pairs, 7);
  EXPECT_EQ(history_to_jsonl(a.history), history_to_jsonl(b.history));
  EXPECT_TRUE(a.net == b.net);
  ASSERT_EQ(a.history.size(), 3u);
  for (std::size_t s = 1; s < a.history.size(); ++s) {
    const auto& r = a.history[s];
    EXPECT_EQ(r.blocks, static_cast<int>(s));
    EXPECT_EQ(r.node, "rb" + std::to_string(s));
    EXPECT_NE(r.snapshot_id, a.history[s - 1].snapshot_id);
    const double target = plan.transition_ratio * a.history[s - 1].final_training_loss;
    if (r.reason == TransitionReason::loss_threshold_met) {
      EXPECT_LE(r.final_training_loss, target);
      // It fired on the first epoch that met the target.
      for (std::size_t e = 0; e + 1 < r.epoch_losses.size(); ++e) EXPECT_GT(r.epoch_losses[e], target);
    } else {
      EXPECT_EQ(r.reason, TransitionReason::epoch_cap);
      EXPECT_EQ(r.epochs, plan.epoch_cap);
      for (double l : r.epoch_losses) EXPECT_GT(l, target);
    }
  }
  EXPECT_NE(history_to_jsonl(run_cascade(plan, pairs, 8).history), history_to_jsonl(a.history));
}

TEST(Trainer, StopHookEndsStage) {
  const auto pairs = small_pairs();
  TrainerHooks hooks;
  int stage_ends = 0;
  hooks.stop_requested = [](int, int epoch) { return epoch == 2; };
  hooks.on_stage_end = [&](const StageRecord&, const Network&) { ++stage_ends; };
  const auto r = run_cascade(quick_plan(1, 50), pairs, 9, hooks);
  EXPECT_EQ(stage_ends, 2);
  for (const auto& rec : r.history) {
    EXPECT_LE(rec.epochs, 2);
    if (rec.epochs == 2) EXPECT_EQ(rec.reason, TransitionReason::manual);
  }
}

TEST(Trainer, PlanValidation) {
  auto plan = quick_plan(1, 1);
  plan.transition_ratio = 1.0;
  EXPECT_THROW(plan.validate(), InvalidArgument);
  plan = quick_plan(1, 1);
  plan.models = {GaussianNoise{10}, GaussianNoise{25}};
  EXPECT_THROW(plan.validate(), InvalidArgument);
  plan.blind = true;
  EXPECT_NO_THROW(plan.validate());
  EXPECT_THROW(run_cascade(quick_plan(1, 1), {}, 1), InvalidArgument);
}

TEST(Evolution, IncrementalTailFirst) {
  const auto pairs = small_pairs();
  const auto trained = run_cascade(quick_plan(2, 2), pairs, 10).net;
  EvolutionPlan plan;
  plan.fine_tune_epochs = 2;
  plan.batch_size = 4;
  plan.optimizer.learning_rate = 1e-3;
  const auto r = run_evolution(trained, plan, pairs, 11);
  ASSERT_EQ(r.history.size(), 2u);
  EXPECT_EQ(r.history[0].node, "dsrb2");
  EXPECT_EQ(r.history[1].node, "dsrb1");
  for (const auto& rec : r.history) {
    EXPECT_EQ(rec.phase, "evolve");
    EXPECT_EQ(rec.epochs, 2);
    EXPECT_EQ(rec.reason, TransitionReason::epoch_cap);
  }
  for (std::size_t i : r.net.block_indices()) EXPECT_EQ(r.net.layers()[i].node.kind, LayerKind::ds_resblock);
  // The head convolutions keep their trained values until fine-tuning moves them.
  EXPECT_EQ(r.net.layers()[0].node, trained.layers()[0].node);

  const auto again = run_evolution(trained, plan, pairs, 11);
  EXPECT_TRUE(again.net == r.net);
}

TEST(Evolution, OneShotMatchesBudget) {
  const auto pairs = small_pairs();
  const auto trained = run_cascade(quick_plan(2, 1), pairs, 12).net;
  EvolutionPlan plan;
  plan.fine_tune_epochs = 2;
  plan.one_shot = true;
  plan.batch_size = 4;
  const auto r = run_evolution(trained, plan, pairs, 13);
  ASSERT_EQ(r.history.size(), 1u);
  EXPECT_EQ(r.history[0].phase, "one_shot");
  EXPECT_EQ(r.history[0].node, "all");
  EXPECT_EQ(r.history[0].epochs, 4);
  EXPECT_EQ(count_params(r.net, ParamCountMode::with_bias),
            count_params(dn_resnet_topology(2, 2), ParamCountMode::with_bias));
}

TEST(Evolution, RejectsUnsuitableNetworks) {
  const auto pairs = small_pairs();
  Rng rng(14);
  EvolutionPlan plan;
  plan.fine_tune_epochs = 1;
  EXPECT_THROW(run_evolution(build_base<float>(rng), plan, pairs, 1), TopologyError);
  const auto evolved = evolve_block_to_ds(insert_resblock(build_base<float>(rng), rng), 0, rng);
  EXPECT_THROW(run_evolution(evolved, plan, pairs, 1), TopologyError);
  plan.fine_tune_epochs = 0;
  EXPECT_THROW(plan.validate(), InvalidArgument);
}

TEST(History, JsonlRoundTrip) {
  StageRecord a;
  a.stage = 2;
  a.phase = "cascade";
  a.snapshot_id = "0123456789abcdef";
  a.blocks = 2;
  a.epochs = 3;
  a.epoch_losses = {0.1, 1.0 / 3.0, 0.0123456789012345678};
  a.final_training_loss = a.epoch_losses.back();
  a.reason = TransitionReason::loss_threshold_met;
  a.node = "rb2";
  a.checkpoint = "stage-2.ckpt";
  StageRecord b = a;
  b.stage = 3;
  b.reason = TransitionReason::plateau;
  b.node.clear();
  const std::string text = history_to_jsonl({a, b});
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 2);
  const auto back = history_from_jsonl(text);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0], a);  // bitwise: 17 significant digits
  EXPECT_EQ(back[1], b);
  for (auto r : {TransitionReason::loss_threshold_met, TransitionReason::plateau, TransitionReason::epoch_cap,
                 TransitionReason::manual}) {
    EXPECT_EQ(parse_transition_reason(to_string(r)), r);
  }
  EXPECT_THROW(parse_transition_reason("bored"), FormatError);
}

TEST(Denoise, PreservesSizeAndConstantMap) {
  const Network net = constant_network(0.25f);
  for (auto mode : {BorderMode::replicate, BorderMode::reflect}) {
    const auto out = denoise_image(net, TensorF(1, 1, 41, 29, 0.8f), mode);
    ASSERT_EQ(out.shape(), (Shape{1, 1, 41, 29}));
    for (float v : out.data()) EXPECT_EQ(v, 0.25f);
  }
  EXPECT_THROW(denoise_image(net, TensorF(1, 3, 20, 20)), ShapeError);
}

TEST(Denoise, PadModes) {
  TensorF row(1, 1, 1, 4);
  for (std::size_t i = 0; i < 4; ++i) row[i] = static_cast<float>(i + 1);  // a b c d
  const auto rep = pad_image(row, 2, BorderMode::replicate);
  const auto ref = pad_image(row, 2, BorderMode::reflect);
  ASSERT_EQ(rep.shape(), (Shape{1, 1, 5, 8}));
  const std::vector<float> rep_row{1, 1, 1, 2, 3, 4, 4, 4};
  const std::vector<float> ref_row{3, 2, 1, 2, 3, 4, 3, 2};
  for (std::size_t x = 0; x < 8; ++x) {
    EXPECT_EQ(rep(0, 0, 2, x), rep_row[x]);
    EXPECT_EQ(ref(0, 0, 2, x), ref_row[x]);
    EXPECT_EQ(rep(0, 0, 0, x), rep_row[x]);
  }
  EXPECT_EQ(parse_border_mode("reflect"), BorderMode::reflect);
  EXPECT_THROW(parse_border_mode("wrap"), InvalidArgument);
}

TEST(Evaluate, RowsMeansAndCsv) {
  auto images = synthetic_corpus(2, 40, 15);
  images[1].id = "flat";
  images[1].clean = TensorF(1, 1, 40, 40, 0.25f);
  const Network net = constant_network(0.25f);
  const auto table = evaluate(net, images, {GaussianNoise{10}, GaussianNoise{50}}, 16);
  ASSERT_EQ(table.rows.size(), 4u);
  EXPECT_EQ(table.rows[0].model, "gaussian:10");
  EXPECT_GT(table.rows[0].psnr_noisy, table.rows[1].psnr_noisy);
  // The constant net reproduces the flat image exactly.
  EXPECT_EQ(table.rows[2].psnr_denoised, kPsnrInfinity);
  EXPECT_EQ(table.mean.psnr_denoised, kPsnrInfinity);
  double mean_noisy = 0;
  for (const auto& r : table.rows) mean_noisy += r.psnr_noisy / 4;
  EXPECT_NEAR(table.mean.psnr_noisy, mean_noisy, 1e-9);
  EXPECT_EQ(table.mean.image, "mean");

  const std::string csv = table.to_csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "image,model,psnr_noisy,ssim_noisy,psnr_denoised,ssim_denoised");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 6);
  EXPECT_NE(csv.find(",inf,"), std::string::npos);

  // Same seed, same noise.
  EXPECT_EQ(evaluate(net, images, {GaussianNoise{10}}, 16).rows[0].psnr_noisy, table.rows[0].psnr_noisy);
}

TEST(Evaluate, ExternalPairsScoredOnce) {
  auto images = synthetic_corpus(1, 40, 17);
  images[0].degraded = images[0].clean;
  const auto table = evaluate(constant_network(0.5f), images, {GaussianNoise{10}, GaussianNoise{50}}, 1);
  ASSERT_EQ(table.rows.size(), 1u);
  EXPECT_EQ(table.rows[0].model, "external");
  EXPECT_EQ(table.rows[0].psnr_noisy, kPsnrInfinity);
}
