#include "dnres/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <iomanip>
#include <limits>
#include <sstream>

#include "dnres/checkpoint.hpp"

namespace dnres {

std::string to_string(TransitionReason reason) {
  switch (reason) {
    case TransitionReason::loss_threshold_met: return "loss_threshold_met";
    case TransitionReason::plateau: return "plateau";
    case TransitionReason::epoch_cap: return "epoch_cap";
    case TransitionReason::manual: return "manual";
  }
  return "?";
}

TransitionReason parse_transition_reason(const std::string& text) {
  for (auto r : {TransitionReason::loss_threshold_met, TransitionReason::plateau, TransitionReason::epoch_cap,
                 TransitionReason::manual}) {
    if (to_string(r) == text) return r;
  }
  throw FormatError("unknown transition reason '" + text + "'");
}

nlohmann::json to_json(const StageRecord& r) {
  return {{"stage", r.stage},
          {"phase", r.phase},
          {"snapshot", r.snapshot_id},
          {"blocks", r.blocks},
          {"epochs", r.epochs},
          {"final_training_loss", r.final_training_loss},
          {"reason", to_string(r.reason)},
          {"epoch_losses", r.epoch_losses},
          {"node", r.node},
          {"checkpoint", r.checkpoint}};
}

StageRecord stage_record_from_json(const nlohmann::json& j) {
  try {
    StageRecord r;
    r.stage = j.at("stage").get<int>();
    r.phase = j.at("phase").get<std::string>();
    r.snapshot_id = j.at("snapshot").get<std::string>();
    r.blocks = j.at("blocks").get<int>();
    r.epochs = j.at("epochs").get<int>();
    r.final_training_loss = j.at("final_training_loss").get<double>();
    r.reason = parse_transition_reason(j.at("reason").get<std::string>());
    r.epoch_losses = j.at("epoch_losses").get<std::vector<double>>();
    r.node = j.value("node", "");
    r.checkpoint = j.value("checkpoint", "");
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("stage record: ") + e.what());
  }
}

std::string history_to_jsonl(const std::vector<StageRecord>& history) {
  std::string out;
  for (const auto& r : history) out += to_json(r).dump() + "\n";
  return out;
}

std::vector<StageRecord> history_from_jsonl(const std::string& text) {
  std::vector<StageRecord> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("stage history: ") + e.what());
    }
    out.push_back(stage_record_from_json(j));
  }
  return out;
}

std::string topology_snapshot_id(const std::vector<LayerNode>& topology) {
  const std::string text = topology_to_json(topology).dump();
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : text) h = (h ^ c) * 1099511628211ULL;
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void CascadePlan::validate() const {
  if (!(transition_ratio > 0.0 && transition_ratio < 1.0)) throw InvalidArgument("transition_ratio must be in (0, 1)");
  if (max_blocks < 0) throw InvalidArgument("max_blocks must be >= 0");
  if (epoch_cap < 1) throw InvalidArgument("epoch_cap must be >= 1");
  if (plateau_window < 1) throw InvalidArgument("plateau_window must be >= 1");
  if (batch_size == 0) throw InvalidArgument("batch_size must be > 0");
  if (models.empty()) throw InvalidArgument("at least one noise model is required");
  if (!blind && models.size() != 1) throw InvalidArgument("non-blind training takes exactly one noise model");
  for (const auto& m : models) dnres::validate(m);
}

void EvolutionPlan::validate() const {
  if (fine_tune_epochs < 1) throw InvalidArgument("fine_tune_epochs must be >= 1");
  if (batch_size == 0) throw InvalidArgument("batch_size must be > 0");
}

double train_epoch(Network& net, const std::vector<PatchPair>& pairs, const LossSpec& loss, Optimizer<float>& optimizer,
                   std::size_t batch_size, std::uint64_t epoch_seed) {
  if (pairs.empty()) throw InvalidArgument("train_epoch: no training pairs");
  BatchIterator it(pairs, batch_size, epoch_seed);
  Batch batch;
  double total = 0.0;
  std::size_t batches = 0;
  while (it.next(batch)) {
    ForwardCache<float> cache;
    const TensorF pred = net.forward(batch.noisy, cache);
    const LossResult<float> r = compute_loss(pred, batch.clean, loss);
    if (!std::isfinite(r.report.total)) {
      throw NumericError("train_epoch: non-finite loss at batch " + std::to_string(batches));
    }
    auto grads = net.make_gradients();
    net.backward(r.grad, cache, grads);
    auto params = net.parameters();
    std::vector<std::span<const float>> grad_views(grads.begin(), grads.end());
    optimizer.step(params, grad_views);
    total += r.report.total;
    ++batches;
  }
  return total / static_cast<double>(batches);
}

double evaluate_loss(const Network& net, const std::vector<PatchPair>& pairs, const LossSpec& loss,
                     std::size_t batch_size) {
  if (pairs.empty()) throw InvalidArgument("evaluate_loss: no pairs");
  BatchIterator it(pairs, batch_size, 0);
  Batch batch;
  double total = 0.0;
  while (it.next(batch)) {
    const TensorF pred = net.forward(batch.noisy);
    total += compute_loss(pred, batch.clean, loss).report.total * static_cast<double>(batch.indices.size());
  }
  return total / static_cast<double>(pairs.size());
}

namespace {

// Seeds for one run; each purpose draws from its own substream.
struct SeedPlan {
  std::uint64_t seed;
  Rng init() const { return Rng(seed, 20); }
  std::uint64_t epoch(int stage, int epoch) const {
    return derive_seed(derive_seed(seed, 21), static_cast<std::uint64_t>(stage) * 100000 + static_cast<std::uint64_t>(epoch));
  }
};

bool should_stop(const TrainerHooks& hooks, int stage, int epoch) {
  return hooks.stop_requested && hooks.stop_requested(stage, epoch);
}

std::string with_stage(const char* phase, int stage, const std::string& what) {
  return std::string(phase) + " stage " + std::to_string(stage) + ": " + what;
}

// Trains until `done` says so or the cap fires.
template <class Done>
StageRecord train_stage(Network& net, const std::vector<PatchPair>& pairs, const OptimizerConfig& opt,
                        const LossSpec& loss, std::size_t batch_size, int cap, const SeedPlan& seeds, int stage,
                        const char* phase, const TrainerHooks& hooks, Done done) {
  StageRecord rec;
  rec.stage = stage;
  rec.phase = phase;
  Optimizer<float> optimizer(opt);
  rec.reason = TransitionReason::epoch_cap;
  for (int epoch = 1; epoch <= cap; ++epoch) {
    double l;
    try {
      l = train_epoch(net, pairs, loss, optimizer, batch_size, seeds.epoch(stage, epoch));
    } catch (const NumericError& e) {
      throw NumericError(with_stage(phase, stage, "epoch " + std::to_string(epoch) + ": " + e.what()));
    }
    rec.epoch_losses.push_back(l);
    rec.epochs = epoch;
    if (hooks.on_epoch) hooks.on_epoch(stage, epoch, l);
    if (auto reason = done(rec.epoch_losses)) {
      rec.reason = *reason;
      break;
    }
    if (should_stop(hooks, stage, epoch)) {
      rec.reason = TransitionReason::manual;
      break;
    }
  }
  rec.final_training_loss = rec.epoch_losses.back();
  rec.blocks = net.block_count();
  rec.snapshot_id = topology_snapshot_id(net.topology());
  return rec;
}

}  // namespace

TrainingResult run_cascade(const CascadePlan& plan, const std::vector<PatchPair>& pairs, std::uint64_t seed,
                           const TrainerHooks& hooks) {
  plan.validate();
  if (pairs.empty()) throw InvalidArgument("run_cascade: no training pairs");
  const SeedPlan seeds{seed};
  Rng init = seeds.init();
  TrainingResult result;
  result.net = build_base<float>(init);

  const auto plateau = [&](const std::vector<double>& losses) -> std::optional<TransitionReason> {
    const auto w = static_cast<std::size_t>(plan.plateau_window);
    if (losses.size() <= w) return std::nullopt;
    const double before = losses[losses.size() - 1 - w];
    const double now = losses.back();
    if ((before - now) / before < plan.plateau_tolerance) return TransitionReason::plateau;
    return std::nullopt;
  };
  StageRecord rec = train_stage(result.net, pairs, plan.optimizer, plan.loss, plan.batch_size, plan.epoch_cap, seeds,
                                0, "cascade", hooks, plateau);
  if (hooks.on_stage_end) hooks.on_stage_end(rec, result.net);
  result.history.push_back(rec);

  for (int stage = 1; stage <= plan.max_blocks; ++stage) {
    const double target = plan.transition_ratio * result.history.back().final_training_loss;
    result.net = insert_resblock(result.net, init);
    const auto threshold = [&](const std::vector<double>& losses) -> std::optional<TransitionReason> {
      if (losses.back() <= target) return TransitionReason::loss_threshold_met;
      return std::nullopt;
    };
    rec = train_stage(result.net, pairs, plan.optimizer, plan.loss, plan.batch_size, plan.epoch_cap, seeds, stage,
                      "cascade", hooks, threshold);
    rec.node = result.net.provenance().back().node;
    if (hooks.on_stage_end) hooks.on_stage_end(rec, result.net);
    result.history.push_back(rec);
  }
  return result;
}

TrainingResult run_evolution(const Network& net, const EvolutionPlan& plan, const std::vector<PatchPair>& pairs,
                             std::uint64_t seed, const TrainerHooks& hooks) {
  plan.validate();
  if (pairs.empty()) throw InvalidArgument("run_evolution: no training pairs");
  const int blocks = net.block_count();
  if (blocks == 0) throw TopologyError("run_evolution: the network has no ResBlock to evolve");
  for (std::size_t i : net.block_indices()) {
    if (net.layers()[i].node.kind != LayerKind::resblock) {
      throw TopologyError("run_evolution: expected a DN-ResNet, found '" + net.layers()[i].node.name + "'");
    }
  }
  const SeedPlan seeds{derive_seed(seed, 30)};
  Rng init = seeds.init();
  TrainingResult result;
  result.net = net;
  const auto fixed = [](const std::vector<double>&) -> std::optional<TransitionReason> { return std::nullopt; };

  if (plan.one_shot) {
    for (int t = 0; t < blocks; ++t) result.net = evolve_block_to_ds(result.net, t, init);
    StageRecord rec = train_stage(result.net, pairs, plan.optimizer, plan.loss, plan.batch_size,
                                  plan.fine_tune_epochs * blocks, seeds, 1, "one_shot", hooks, fixed);
    rec.node = "all";
    if (hooks.on_stage_end) hooks.on_stage_end(rec, result.net);
    result.history.push_back(rec);
    return result;
  }
  for (int t = 0; t < blocks; ++t) {
    result.net = evolve_block_to_ds(result.net, t, init);
    StageRecord rec = train_stage(result.net, pairs, plan.optimizer, plan.loss, plan.batch_size,
                                  plan.fine_tune_epochs, seeds, t + 1, "evolve", hooks, fixed);
    rec.node = result.net.provenance().back().node;
    if (hooks.on_stage_end) hooks.on_stage_end(rec, result.net);
    result.history.push_back(rec);
  }
  return result;
}

std::string to_string(BorderMode mode) { return mode == BorderMode::replicate ? "replicate" : "reflect"; }

BorderMode parse_border_mode(const std::string& text) {
  if (text == "replicate") return BorderMode::replicate;
  if (text == "reflect") return BorderMode::reflect;
  throw InvalidArgument("unknown border mode '" + text + "' (expected replicate or reflect)");
}

namespace {

// Source index for an out-of-range coordinate. Reflect mirrors about the
// edge sample without repeating it (dcb|abcd|cba).
std::size_t border_index(std::ptrdiff_t i, std::ptrdiff_t n, BorderMode mode) {
  if (mode == BorderMode::replicate) return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(i, 0, n - 1));
  if (n == 1) return 0;
  const std::ptrdiff_t period = 2 * (n - 1);
  std::ptrdiff_t m = i % period;
  if (m < 0) m += period;
  return static_cast<std::size_t>(m < n ? m : period - m);
}

}  // namespace

TensorF pad_image(const TensorF& image, std::size_t pad, BorderMode mode) {
  const auto h = static_cast<std::ptrdiff_t>(image.h());
  const auto w = static_cast<std::ptrdiff_t>(image.w());
  const auto p = static_cast<std::ptrdiff_t>(pad);
  TensorF out(image.n(), image.c(), image.h() + 2 * pad, image.w() + 2 * pad);
  for (std::size_t n = 0; n < image.n(); ++n) {
    for (std::size_t c = 0; c < image.c(); ++c) {
      for (std::ptrdiff_t y = 0; y < h + 2 * p; ++y) {
        const std::size_t sy = border_index(y - p, h, mode);
        for (std::ptrdiff_t x = 0; x < w + 2 * p; ++x) {
          out(n, c, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) =
              image(n, c, sy, border_index(x - p, w, mode));
        }
      }
    }
  }
  return out;
}

TensorF denoise_image(const Network& net, const TensorF& noisy, BorderMode mode) {
  const auto min_side = static_cast<std::size_t>(2 * net.border() + 1);
  if (noisy.h() < min_side || noisy.w() < min_side) {
    throw ShapeError("denoise_image", noisy.h() < min_side ? "height" : "width", min_side,
                     std::min(noisy.h(), noisy.w()));
  }
  if (noisy.c() != 1) throw ShapeError("denoise_image", "channels", 1, noisy.c());
  return net.forward(pad_image(noisy, static_cast<std::size_t>(net.border()), mode));
}

namespace {

std::string csv_number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

}  // namespace

std::string EvalTable::to_csv() const {
  std::string out = "image,model,psnr_noisy,ssim_noisy,psnr_denoised,ssim_denoised\n";
  auto line = [&](const EvalRow& r) {
    out += r.image + "," + r.model + "," + csv_number(r.psnr_noisy) + "," + csv_number(r.ssim_noisy) + "," +
           csv_number(r.psnr_denoised) + "," + csv_number(r.ssim_denoised) + "\n";
  };
  for (const auto& r : rows) line(r);
  line(mean);
  return out;
}

EvalTable evaluate(const Network& net, const std::vector<LabeledImage>& images, const std::vector<NoiseModel>& models,
                   std::uint64_t seed, BorderMode mode) {
  if (images.empty()) throw InvalidArgument("evaluate: empty test split");
  EvalTable table;
  Rng root(seed, 5);
  auto score = [&](const LabeledImage& img, const TensorF& noisy, const std::string& model) {
    const TensorF out = denoise_image(net, noisy, mode);
    table.rows.push_back({img.id, model, psnr(noisy, img.clean), ssim(noisy, img.clean), psnr(out, img.clean),
                          ssim(out, img.clean)});
  };
  for (std::size_t i = 0; i < images.size(); ++i) {
    const LabeledImage& img = images[i];
    if (img.degraded) {
      score(img, *img.degraded, "external");
      continue;
    }
    if (models.empty()) throw InvalidArgument("evaluate: no noise model given");
    for (std::size_t m = 0; m < models.size(); ++m) {
      Rng r = root.substream(i * 1024 + m);
      score(img, degrade(img.clean, models[m], r), to_string(models[m]));
    }
  }
  table.mean = {"mean", "all", 0, 0, 0, 0};
  for (const auto& r : table.rows) {
    table.mean.psnr_noisy += r.psnr_noisy;
    table.mean.ssim_noisy += r.ssim_noisy;
    table.mean.psnr_denoised += r.psnr_denoised;
    table.mean.ssim_denoised += r.ssim_denoised;
  }
  const auto n = static_cast<double>(table.rows.size());
  table.mean.psnr_noisy /= n;
  table.mean.ssim_noisy /= n;
  table.mean.psnr_denoised /= n;
  table.mean.ssim_denoised /= n;
  return table;
}

}  // namespace dnres
