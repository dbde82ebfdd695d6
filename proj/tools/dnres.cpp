// dnres: command-line driver for training, evolving, running and auditing
// DN-ResNet denoisers. Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "dnres/checkpoint.hpp"
#include "dnres/data.hpp"
#include "dnres/error.hpp"
#include "dnres/gradcheck.hpp"
#include "dnres/image_io.hpp"
#include "dnres/network.hpp"
#include "dnres/noise.hpp"
#include "dnres/trainer.hpp"

namespace fs = std::filesystem;
using namespace dnres;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

// Bad flag values found after CLI11 has parsed the command line.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <class F>
auto as_usage(F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
}

std::string with_commas(std::uint64_t v) {
  std::string s = std::to_string(v);
  for (int i = static_cast<int>(s.size()) - 3; i > 0; i -= 3) s.insert(static_cast<std::size_t>(i), ",");
  return s;
}

std::string billions(std::uint64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f B", static_cast<double>(v) / 1e9);
  return buf;
}

std::vector<NoiseModel> parse_noise_list(const std::string& text) {
  std::vector<NoiseModel> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(parse_noise_model(item));
  }
  if (out.empty()) throw InvalidArgument("--noise: at least one noise model is required");
  return out;
}

std::pair<std::size_t, std::size_t> parse_size(const std::string& text) {
  const auto x = text.find('x');
  std::size_t w = 0, h = 0;
  try {
    if (x == std::string::npos) throw std::invalid_argument("");
    w = std::stoul(text.substr(0, x));
    h = std::stoul(text.substr(x + 1));
  } catch (const std::exception&) {
    throw UsageError("--size: expected WIDTHxHEIGHT, got '" + text + "'");
  }
  if (w == 0 || h == 0) throw UsageError("--size: dimensions must be positive");
  return {w, h};
}

// The fully resolved configuration of this run, readable back through --config.
void write_config_sidecar(const CLI::App& sub, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << "[" << sub.get_name() << "]\n" << sub.config_to_str(true, false);
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

bool is_image(const fs::path& p) {
  const auto ext = p.extension().string();
  return ext == ".pgm" || ext == ".ppm" || ext == ".pnm";
}

// (input, output) pairs: one file, or every image of a directory in name order.
std::vector<std::pair<fs::path, fs::path>> io_pairs(const fs::path& in, const fs::path& out) {
  std::vector<std::pair<fs::path, fs::path>> jobs;
  if (fs::is_directory(in)) {
    fs::create_directories(out);
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(in)) {
      if (e.is_regular_file() && is_image(e.path())) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) jobs.emplace_back(f, out / f.filename().replace_extension(".pgm"));
    if (jobs.empty()) throw IoError("no .pgm/.ppm images in '" + in.string() + "'");
  } else {
    if (!fs::exists(in)) throw IoError("no such file '" + in.string() + "'");
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    jobs.emplace_back(in, out);
  }
  return jobs;
}

fs::path sidecar_for(const fs::path& out, const std::string& command) {
  return fs::is_directory(out) ? out / (command + ".config") : fs::path(out.string() + ".config");
}

void print_params(std::ostream& os, const std::vector<LayerNode>& topology) {
  const int blocks = static_cast<int>(std::count_if(topology.begin(), topology.end(), [](const LayerNode& n) {
    return n.kind == LayerKind::resblock || n.kind == LayerKind::ds_resblock;
  }));
  os << "layers: " << 3 + 2 * blocks << " (" << blocks << " blocks)\n";
  os << "parameters (weights only): " << with_commas(count_params(topology, ParamCountMode::weights_only)) << "\n";
  os << "parameters (with bias):    " << with_commas(count_params(topology, ParamCountMode::with_bias)) << "\n";
  if (topology == dn_resnet_topology(5, 5)) {
    os << "note: the published DS-DN-13 parameter figure is 63,728; the weights-only count above includes every "
          "depthwise and pointwise weight\n";
  }
}

// Shared by train, evolve and eval.
struct DataFlags {
  std::string manifest;
  std::string degraded_dir;
  std::string noise = "gaussian:25";
  bool blind = false;
  std::size_t stride = 17;
  std::size_t jitter = 0;
};

void add_data_flags(CLI::App* sub, DataFlags& f) {
  sub->add_option("--manifest", f.manifest, "Manifest of 'path<TAB>train|test' lines")->required()->check(CLI::ExistingFile);
  sub->add_option("--degraded-dir", f.degraded_dir, "Directory of pre-degraded images with matching names");
  sub->add_option("--noise", f.noise, "Noise models, comma separated (gaussian:S, poisson:P, pg:S[:P])")
      ->capture_default_str();
  sub->add_flag("--blind", f.blind, "Blind training: each patch draws one of the --noise models");
  sub->add_option("--stride", f.stride, "Patch stride")->capture_default_str()->check(CLI::PositiveNumber);
  sub->add_option("--jitter", f.jitter, "Random patch origin offset, +-pixels")->capture_default_str();
}

DatasetManifest load_manifest(const DataFlags& f) {
  DatasetManifest m = read_manifest(f.manifest);
  if (!f.degraded_dir.empty()) m.degraded_dir = f.degraded_dir;
  m.models = as_usage([&] { return parse_noise_list(f.noise); });
  if (!f.blind && m.models.size() != 1) throw UsageError("--noise lists several models; add --blind or give one");
  return m;
}

std::vector<PatchPair> training_pairs(const DataFlags& f, const DatasetManifest& m, std::uint64_t seed) {
  const auto images = load_split(m, Split::train);
  if (images.empty()) throw IoError("manifest '" + f.manifest + "' has no train images");
  auto set = build_training_set(images, m.models, f.blind, {f.stride, f.jitter}, derive_seed(seed, 40));
  if (set.pairs.empty()) throw IoError("no 33x33 training patches could be cut from the train split");
  std::cerr << "training pairs: " << set.pairs.size() << " from " << images.size() << " images\n";
  return std::move(set.pairs);
}

struct OptimFlags {
  std::string loss = "mse";
  double w = -1.0;
  std::string optimizer = "adam";
  double lr = 1e-4;
  std::size_t batch = 64;
};

void add_optim_flags(CLI::App* sub, OptimFlags& f) {
  sub->add_option("--loss", f.loss, "mse, edge-a or edge-b")->capture_default_str();
  sub->add_option("--w", f.w, "Edge-term weight; -1 picks 0.025 for edge-a, 4 for edge-b")->capture_default_str();
  sub->add_option("--optimizer", f.optimizer, "adam or sgd")->capture_default_str();
  sub->add_option("--lr", f.lr, "Learning rate, constant")->capture_default_str()->check(CLI::NonNegativeNumber);
  sub->add_option("--batch", f.batch, "Mini-batch size")->capture_default_str()->check(CLI::PositiveNumber);
}

OptimizerConfig optimizer_config(const OptimFlags& f) {
  OptimizerConfig c;
  c.kind = as_usage([&] { return parse_optimizer_kind(f.optimizer); });
  c.learning_rate = f.lr;
  return c;
}

nlohmann::json history_json(const std::vector<StageRecord>& history) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : history) j.push_back(to_json(r));
  return j;
}

TrainerHooks progress_hooks(const fs::path& out_dir, const std::string& prefix, std::vector<std::string>& saved) {
  TrainerHooks hooks;
  hooks.on_epoch = [](int stage, int epoch, double loss) {
    std::cerr << "stage " << stage << " epoch " << epoch << " loss " << loss << "\n";
  };
  hooks.on_stage_end = [&saved, out_dir, prefix](const StageRecord& r, const Network& net) {
    const std::string name = prefix + "-" + std::to_string(r.stage) + ".ckpt";
    save_checkpoint(net, out_dir / name, {{"stage", to_json(r)}});
    saved.push_back(name);
    std::cerr << "stage " << r.stage << " done: " << r.epochs << " epochs, loss " << r.final_training_loss << " ("
              << to_string(r.reason) << ")\n";
  };
  return hooks;
}

void finish_run(const CLI::App& sub, const fs::path& out_dir, const std::string& history_name, TrainingResult& result,
                const std::vector<std::string>& saved) {
  for (std::size_t i = 0; i < result.history.size() && i < saved.size(); ++i) result.history[i].checkpoint = saved[i];
  write_text(out_dir / history_name, history_to_jsonl(result.history));
  save_checkpoint(result.net, out_dir / "final.ckpt", {{"history", history_json(result.history)}});
  write_config_sidecar(sub, out_dir / (sub.get_name() + ".config"));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DN-ResNet denoiser: cascade training, DS evolution, inference and audits"};
  app.set_config("--config", "", "Overlay of key=value settings; flags on the command line win");
  app.require_subcommand(1);

  // noise
  auto* noise = app.add_subcommand("noise", "Degrade images with a synthetic noise model");
  std::string n_model = "gaussian", n_in, n_out;
  double n_sigma = 25.0, n_peak = -1.0;
  std::uint64_t n_seed = 0;
  bool n_validate = false;
  std::size_t n_samples = 200000;
  noise->add_option("--model", n_model, "gaussian, poisson or poisson-gaussian")
      ->capture_default_str()
      ->check(CLI::IsMember({"gaussian", "poisson", "poisson-gaussian"}));
  noise->add_option("--sigma", n_sigma, "Gaussian sigma (0-255 scale; photon scale for poisson-gaussian)")
      ->capture_default_str();
  noise->add_option("--peak", n_peak, "Photon count at intensity 1; -1 picks 4 for poisson, 10 sigma for pg")
      ->capture_default_str();
  noise->add_option("--seed", n_seed, "Random seed")->capture_default_str();
  noise->add_option("--in", n_in, "Input image or directory");
  noise->add_option("--out", n_out, "Output image or directory");
  noise->add_flag("--validate", n_validate, "Check sample moments against the model");
  noise->add_option("--samples", n_samples, "Samples per intensity for --validate")->capture_default_str();

  // train
  auto* train = app.add_subcommand("train", "Grow a DN-ResNet stage by stage");
  DataFlags t_data;
  OptimFlags t_opt;
  int t_blocks = 5, t_epoch_cap = 100, t_plateau_window = 3;
  double t_ratio = 0.97, t_plateau_tol = 1e-3;
  std::uint64_t t_seed = 0;
  std::string t_out;
  add_data_flags(train, t_data);
  add_optim_flags(train, t_opt);
  train->add_option("--blocks", t_blocks, "ResBlocks to cascade (0..)")->capture_default_str()->check(CLI::NonNegativeNumber);
  train->add_option("--epoch-cap", t_epoch_cap, "Epoch limit per stage")->capture_default_str()->check(CLI::PositiveNumber);
  train->add_option("--ratio", t_ratio, "A stage ends once loss <= ratio x previous stage loss")->capture_default_str();
  train->add_option("--plateau-window", t_plateau_window, "Stage 0 plateau window, epochs")->capture_default_str();
  train->add_option("--plateau-tolerance", t_plateau_tol, "Stage 0 minimum relative improvement per window")
      ->capture_default_str();
  train->add_option("--seed", t_seed, "Random seed")->capture_default_str();
  train->add_option("--out-dir", t_out, "Output directory")->required();

  // evolve
  auto* evolve = app.add_subcommand("evolve", "Convert a DN-ResNet into a DS-DN-ResNet");
  DataFlags e_data;
  OptimFlags e_opt;
  std::string e_ckpt, e_out;
  int e_fine_tune = 10;
  bool e_one_shot = false;
  std::uint64_t e_seed = 0;
  add_data_flags(evolve, e_data);
  add_optim_flags(evolve, e_opt);
  evolve->add_option("--checkpoint", e_ckpt, "Trained DN-ResNet checkpoint")->required()->check(CLI::ExistingFile);
  evolve->add_option("--fine-tune-epochs", e_fine_tune, "Epochs after each block conversion")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  evolve->add_flag("--one-shot", e_one_shot, "Convert every block at once, then fine-tune (same epoch budget)");
  evolve->add_option("--seed", e_seed, "Random seed")->capture_default_str();
  evolve->add_option("--out-dir", e_out, "Output directory")->required();

  // denoise
  auto* denoise = app.add_subcommand("denoise", "Run a trained network over images");
  std::string d_ckpt, d_in, d_out, d_border = "replicate";
  denoise->add_option("--checkpoint", d_ckpt, "Network checkpoint")->required()->check(CLI::ExistingFile);
  denoise->add_option("--in", d_in, "Noisy image or directory")->required();
  denoise->add_option("--out", d_out, "Output image or directory")->required();
  denoise->add_option("--border", d_border, "Edge padding: replicate or reflect")
      ->capture_default_str()
      ->check(CLI::IsMember({"replicate", "reflect"}));

  // eval
  auto* eval = app.add_subcommand("eval", "PSNR/SSIM of the test split as CSV");
  DataFlags v_data;
  std::string v_ckpt, v_out, v_border = "replicate";
  std::uint64_t v_seed = 0;
  add_data_flags(eval, v_data);
  eval->add_option("--checkpoint", v_ckpt, "Network checkpoint")->required()->check(CLI::ExistingFile);
  eval->add_option("--out", v_out, "CSV file (default: stdout)");
  eval->add_option("--border", v_border, "Edge padding: replicate or reflect")
      ->capture_default_str()
      ->check(CLI::IsMember({"replicate", "reflect"}));
  eval->add_option("--seed", v_seed, "Random seed for the synthetic test noise")->capture_default_str();

  // count
  auto* count = app.add_subcommand("count", "Parameter and MAC accounting");
  std::string c_ckpt, c_size = "640x480", c_conv = "full";
  int c_blocks = 5, c_ds = 0;
  count->add_option("--checkpoint", c_ckpt, "Count this network instead of --blocks/--ds")->check(CLI::ExistingFile);
  count->add_option("--blocks", c_blocks, "Number of blocks")->capture_default_str()->check(CLI::NonNegativeNumber);
  count->add_option("--ds", c_ds, "How many blocks, from the tail, are DS-ResBlocks")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  count->add_option("--size", c_size, "Image WIDTHxHEIGHT for MACs")->capture_default_str();
  count->add_option("--mac-convention", c_conv, "full: every layer at image size; valid: unpadded extents")
      ->capture_default_str()
      ->check(CLI::IsMember({"full", "valid"}));

  // gradcheck
  auto* grad = app.add_subcommand("gradcheck", "Finite-difference audit of every backward pass");
  int g_trials = 20;
  std::uint64_t g_seed = 0;
  double g_tol = 1e-5;
  grad->add_option("--trials", g_trials, "Random trials per subject")->capture_default_str()->check(CLI::PositiveNumber);
  grad->add_option("--seed", g_seed, "Random seed")->capture_default_str();
  grad->add_option("--tolerance", g_tol, "Maximum relative error")->capture_default_str();

  // synth
  auto* synth = app.add_subcommand("synth", "Write a procedural image corpus and its manifest");
  std::size_t s_count = 32, s_size = 96, s_test = 8;
  std::uint64_t s_seed = 0;
  std::string s_out;
  synth->add_option("--count", s_count, "Number of images")->capture_default_str()->check(CLI::PositiveNumber);
  synth->add_option("--size", s_size, "Side length, pixels")->capture_default_str()->check(CLI::PositiveNumber);
  synth->add_option("--test", s_test, "How many of them (the last ones) form the test split")->capture_default_str();
  synth->add_option("--seed", s_seed, "Random seed")->capture_default_str();
  synth->add_option("--out-dir", s_out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (noise->parsed()) {
      const NoiseModel model = as_usage([&]() -> NoiseModel {
        NoiseModel m;
        if (n_model == "gaussian") {
          m = GaussianNoise{n_sigma};
        } else if (n_model == "poisson") {
          m = PoissonNoise{n_peak < 0 ? 4.0 : n_peak};
        } else {
          m = PoissonGaussianNoise{n_sigma, n_peak < 0 ? 10.0 * n_sigma : n_peak};
        }
        validate(m);
        return m;
      });
      if (!n_validate && (n_in.empty() || n_out.empty())) throw UsageError("noise: give --in and --out, or --validate");
      if (n_in.empty() != n_out.empty()) throw UsageError("noise: --in and --out go together");
      int status = 0;
      if (n_validate) {
        Rng rng(n_seed, 7);
        const auto report = validate_noise_statistics(model, n_samples, rng);
        std::cout << "model " << report.claimed << ", " << report.samples_per_level << " samples per intensity\n";
        for (const auto& c : report.checks) {
          std::printf("  x=%.2f mean %.6f (expect %.6f +- %.2g) var %.6g (expect %.6g +- %.2g) %s\n", c.intensity,
                      c.empirical_mean, c.expected_mean, c.mean_tolerance, c.empirical_variance, c.expected_variance,
                      c.variance_tolerance, c.passed ? "ok" : "FAIL");
        }
        std::cout << "moment check: " << (report.passed ? "pass" : "FAIL") << std::endl;
        if (!report.passed) status = kExitRuntime;
      }
      if (!n_in.empty()) {
        const auto jobs = io_pairs(n_in, n_out);
        const Rng base(n_seed, 6);
        for (std::size_t i = 0; i < jobs.size(); ++i) {
          Rng rng = base.substream(i);
          write_pgm(jobs[i].second, degrade(load_grayscale(jobs[i].first), model, rng));
        }
        write_config_sidecar(*noise, sidecar_for(n_out, "noise"));
        std::cerr << "wrote " << jobs.size() << " image(s) with " << to_string(model) << "\n";
      }
      return status;
    }

    if (train->parsed()) {
      CascadePlan plan;
      plan.max_blocks = t_blocks;
      plan.epoch_cap = t_epoch_cap;
      plan.transition_ratio = t_ratio;
      plan.plateau_window = t_plateau_window;
      plan.plateau_tolerance = t_plateau_tol;
      plan.optimizer = optimizer_config(t_opt);
      plan.loss = as_usage([&] { return parse_loss_spec(t_opt.loss, t_opt.w); });
      plan.blind = t_data.blind;
      plan.batch_size = t_opt.batch;
      const auto manifest = load_manifest(t_data);
      plan.models = manifest.models;
      as_usage([&] { plan.validate(); return 0; });

      const fs::path out(t_out);
      fs::create_directories(out);
      const auto pairs = training_pairs(t_data, manifest, t_seed);
      std::vector<std::string> saved;
      auto result = run_cascade(plan, pairs, t_seed, progress_hooks(out, "stage", saved));
      finish_run(*train, out, "history.jsonl", result, saved);
      print_params(std::cout, result.net.topology());
      std::cout << "final training loss: " << result.history.back().final_training_loss << "\n";
      return 0;
    }

    if (evolve->parsed()) {
      EvolutionPlan plan;
      plan.fine_tune_epochs = e_fine_tune;
      plan.one_shot = e_one_shot;
      plan.optimizer = optimizer_config(e_opt);
      plan.loss = as_usage([&] { return parse_loss_spec(e_opt.loss, e_opt.w); });
      plan.batch_size = e_opt.batch;
      as_usage([&] { plan.validate(); return 0; });
      const auto manifest = load_manifest(e_data);
      const Checkpoint input = load_checkpoint(e_ckpt);

      const fs::path out(e_out);
      fs::create_directories(out);
      const auto pairs = training_pairs(e_data, manifest, e_seed);
      std::vector<std::string> saved;
      auto result = run_evolution(input.network, plan, pairs, e_seed, progress_hooks(out, "evolve", saved));
      finish_run(*evolve, out, "evolution.jsonl", result, saved);
      std::cout << "evolution stages: " << result.history.size() << (e_one_shot ? " (one-shot)" : "") << "\n";
      print_params(std::cout, result.net.topology());
      std::cout << "final training loss: " << result.history.back().final_training_loss << "\n";
      return 0;
    }

    if (denoise->parsed()) {
      const auto mode = parse_border_mode(d_border);
      const Network net = load_checkpoint(d_ckpt).network;
      const auto jobs = io_pairs(d_in, d_out);
      for (const auto& [in, out] : jobs) write_pgm(out, denoise_image(net, load_grayscale(in), mode));
      write_config_sidecar(*denoise, sidecar_for(d_out, "denoise"));
      std::cerr << "denoised " << jobs.size() << " image(s)\n";
      return 0;
    }

    if (eval->parsed()) {
      const auto manifest = load_manifest(v_data);
      const Network net = load_checkpoint(v_ckpt).network;
      const auto images = load_split(manifest, Split::test);
      if (images.empty()) throw IoError("manifest '" + v_data.manifest + "' has no test images");
      const auto table = evaluate(net, images, manifest.models, v_seed, parse_border_mode(v_border));
      if (v_out.empty()) {
        std::cout << table.to_csv();
      } else {
        const fs::path out(v_out);
        if (out.has_parent_path()) fs::create_directories(out.parent_path());
        write_text(out, table.to_csv());
        write_config_sidecar(*eval, sidecar_for(out, "eval"));
      }
      return 0;
    }

    if (count->parsed()) {
      const auto [w, h] = parse_size(c_size);
      std::vector<LayerNode> topology;
      if (!c_ckpt.empty()) {
        topology = load_checkpoint(c_ckpt).network.topology();
      } else {
        if (c_ds > c_blocks) throw UsageError("--ds cannot exceed --blocks");
        topology = dn_resnet_topology(c_blocks, c_ds);
      }
      const auto conv = c_conv == "full" ? MacConvention::full_resolution : MacConvention::valid;
      print_params(std::cout, topology);
      const auto macs = count_macs(topology, h, w, conv);
      std::cout << "MACs @" << w << "x" << h << " (" << c_conv << "): " << with_commas(macs) << " (" << billions(macs)
                << ")\n";
      return 0;
    }

    if (grad->parsed()) {
      GradcheckOptions options;
      options.tolerance = g_tol;
      bool ok = true;
      for (auto subject : all_gradcheck_subjects()) {
        const auto r = run_gradcheck_trials(subject, g_trials, g_seed, options);
        const bool pass = r.passed == r.trials;
        ok = ok && pass;
        std::printf("%-14s %s %d/%d trials, worst rel error %.2e, %zu entries checked, %zu skipped at kinks\n",
                    to_string(subject).c_str(), pass ? "pass" : "FAIL", r.passed, r.trials, r.worst_rel_error,
                    r.checked, r.skipped);
        if (!pass) std::printf("  first failure: %s\n", r.first_failure.c_str());
      }
      // The end-to-end check: a fresh 5-layer network on a full training patch.
      Rng rng(g_seed, 50);
      NetworkD net = insert_resblock(build_base<double>(rng), rng);
      Rng xr(g_seed, 51);
      TensorD x(1, 1, kInputPatch, kInputPatch);
      for (double& v : x.data()) v = xr.uniform();
      auto probe = make_network_probe(net, derive_seed(g_seed, 52));
      GradcheckOptions o = options;
      o.max_entries = 32;
      o.step = kNetworkCheckStep;
      const auto report = gradient_check(*probe, x, rng, o);
      std::printf("%-14s %s %s\n", "5-layer 33x33", report.passed() ? "pass" : "FAIL", report.summary().c_str());
      ok = ok && report.passed();
      std::cout << "gradcheck at " << g_tol << ": " << (ok ? "pass" : "FAIL") << std::endl;
      return ok ? 0 : kExitRuntime;
    }

    if (synth->parsed()) {
      if (s_test > s_count) throw UsageError("--test cannot exceed --count");
      const fs::path out(s_out);
      fs::create_directories(out);
      const auto corpus = synthetic_corpus(s_count, s_size, s_seed);
      std::vector<ManifestEntry> entries;
      for (std::size_t i = 0; i < corpus.size(); ++i) {
        const auto name = corpus[i].id + ".pgm";
        write_pgm(out / name, corpus[i].clean);
        entries.push_back({name, i + s_test >= s_count ? Split::test : Split::train});
      }
      write_manifest(out / "manifest.tsv", entries);
      write_config_sidecar(*synth, out / "synth.config");
      std::cout << "wrote " << corpus.size() << " images and " << (out / "manifest.tsv").string() << "\n";
      return 0;
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.code()) << "): " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
