#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"

#include "dnres/data.hpp"
#include "dnres/loss.hpp"
#include "dnres/network.hpp"
#include "dnres/noise.hpp"
#include "dnres/optimizer.hpp"

namespace dnres {

/// Why a stage ended. `plateau` is the stage-0 stopping rule.
enum class TransitionReason { loss_threshold_met, plateau, epoch_cap, manual };

std::string to_string(TransitionReason reason);
TransitionReason parse_transition_reason(const std::string& text);

struct StageRecord {
  int stage = 0;
  std::string phase;        // "cascade", "evolve" or "one_shot"
  std::string snapshot_id;  // stable hash of the topology at the end of the stage
  int blocks = 0;
  int epochs = 0;
  double final_training_loss = 0.0;
  TransitionReason reason = TransitionReason::epoch_cap;
  std::vector<double> epoch_losses;
  std::string node;  // block added or evolved in this stage, empty for stage 0
  std::string checkpoint;

  bool operator==(const StageRecord&) const = default;
};

nlohmann::json to_json(const StageRecord& record);
StageRecord stage_record_from_json(const nlohmann::json& j);
/// One JSON object per line. Losses are written with 17 significant digits
/// so a rerun can be compared bitwise.
std::string history_to_jsonl(const std::vector<StageRecord>& history);
std::vector<StageRecord> history_from_jsonl(const std::string& text);

/// FNV-1a over the serialised topology, 16 hex digits.
std::string topology_snapshot_id(const std::vector<LayerNode>& topology);

struct CascadePlan {
  int max_blocks = 5;
  double transition_ratio = 0.97;
  int epoch_cap = 100;         // per stage
  int plateau_window = 3;      // stage 0 stops when the loss improved by
  double plateau_tolerance = 1e-3;  // less than this fraction over the window
  OptimizerConfig optimizer;
  LossSpec loss;
  bool blind = false;
  std::vector<NoiseModel> models{GaussianNoise{25.0}};
  std::size_t batch_size = 64;

  void validate() const;
};

struct EvolutionPlan {
  int fine_tune_epochs = 10;
  bool one_shot = false;  // convert every block at once, then fine-tune
                          // for fine_tune_epochs x blocks epochs
  OptimizerConfig optimizer;
  LossSpec loss;
  std::size_t batch_size = 64;

  void validate() const;
};

struct TrainerHooks {
  std::function<void(int stage, int epoch, double loss)> on_epoch;
  std::function<void(const StageRecord& record, const Network& net)> on_stage_end;
  /// Polled after every epoch; true ends the stage with reason `manual`.
  std::function<bool(int stage, int epoch)> stop_requested;
};

struct TrainingResult {
  Network net;
  std::vector<StageRecord> history;
};

/// forward -> loss -> backward -> optimizer step per batch. Returns the mean
/// of the per-batch losses. The batch order is a pure function of
/// epoch_seed. Throws NumericError on a non-finite loss.
double train_epoch(Network& net, const std::vector<PatchPair>& pairs, const LossSpec& loss, Optimizer<float>& optimizer,
                   std::size_t batch_size, std::uint64_t epoch_seed);

/// Mean loss over all pairs without updating anything.
double evaluate_loss(const Network& net, const std::vector<PatchPair>& pairs, const LossSpec& loss,
                     std::size_t batch_size = 64);

/// Grows build_base() by one ResBlock per stage up to plan.max_blocks.
/// Every stage starts with fresh optimizer state.
TrainingResult run_cascade(const CascadePlan& plan, const std::vector<PatchPair>& pairs, std::uint64_t seed,
                           const TrainerHooks& hooks = {});

/// Converts ResBlocks to DS-ResBlocks tail-first, fine-tuning after each.
TrainingResult run_evolution(const Network& net, const EvolutionPlan& plan, const std::vector<PatchPair>& pairs,
                             std::uint64_t seed, const TrainerHooks& hooks = {});

enum class BorderMode { replicate, reflect };
std::string to_string(BorderMode mode);
BorderMode parse_border_mode(const std::string& text);

/// Pads by net.border() on every side so the output matches the input size.
/// Output is not clamped.
TensorF pad_image(const TensorF& image, std::size_t pad, BorderMode mode);
TensorF denoise_image(const Network& net, const TensorF& noisy, BorderMode mode = BorderMode::replicate);

struct EvalRow {
  std::string image;
  std::string model;
  double psnr_noisy = 0.0;
  double ssim_noisy = 0.0;
  double psnr_denoised = 0.0;
  double ssim_denoised = 0.0;
};

struct EvalTable {
  std::vector<EvalRow> rows;
  EvalRow mean;  // image = "mean"; infinite PSNRs propagate into the mean

  std::string to_csv() const;
};

/// Degrades each test image with each model (noise from (seed, image, model)),
/// denoises it and scores both against the clean image. Images that carry a
/// pre-degraded version are scored once with model "external".
EvalTable evaluate(const Network& net, const std::vector<LabeledImage>& images, const std::vector<NoiseModel>& models,
                   std::uint64_t seed, BorderMode mode = BorderMode::replicate);

}  // namespace dnres
