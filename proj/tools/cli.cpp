#include "cli.hpp"

#include <CLI11.hpp>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <ostream>

#include "spamri/config.hpp"
#include "spamri/encoding.hpp"
#include "spamri/error.hpp"
#include "spamri/evalbench.hpp"
#include "spamri/masks.hpp"
#include "spamri/sampler.hpp"
#include "spamri/tensor_io.hpp"
#include "spamri/tiny_unet.hpp"

namespace spamri::cli {

namespace {

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::Io:
    case ErrorCode::Format:
    case ErrorCode::Divergence:
    case ErrorCode::DegenerateInput:
    case ErrorCode::DegenerateDivision:
    case ErrorCode::EmptyDataset:
      return 2;
    default:
      return 1;
  }
}

int thread_cap() {
  if (const char* env = std::getenv("SPA_RECON_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  return 1 << 20;
}

std::optional<std::uint64_t> seed_value(const CLI::Option* opt, std::uint64_t v) {
  if (opt->count() == 0) return std::nullopt;
  return v;
}

void require_seed(const std::optional<std::uint64_t>& seed, const std::string& what) {
  if (!seed) throw Error(ErrorCode::InvalidParameter, what + " is stochastic; --seed is required");
}

std::unique_ptr<Denoiser> load_denoiser(const Settings& s) {
  if (s.weights.empty()) throw Error(ErrorCode::InvalidParameter, "this method needs --weights");
  return std::make_unique<TinyDenoiser>(load_weights(s.weights));
}

}  // namespace

void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 32 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
  mallopt(M_TOP_PAD, 64 << 20);
#endif
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sampling-pattern-agnostic diffusion MRI reconstruction", "spamri"};
  app.require_subcommand(0, 1);
  // "-h" stays free because --h/--w set grid sizes.
  app.set_help_flag("--help", "Print this help message and exit");

  std::string config_path;
  std::vector<std::string> overrides;
  bool print_config = false;
  app.add_option("--config", config_path, "Key = value configuration file")->check(CLI::ExistingFile);
  app.add_option("--set", overrides, "Override one config key, e.g. --set consistency.xi=2");
  app.add_flag("--print-config", print_config, "Print the fully resolved configuration and exit");

  // Sampler and schedule overrides shared by every command.
  std::optional<int> reverse_steps, inversion_steps, T_opt, t_start;
  std::optional<double> xi, eta, noise_scale, lambda_low, lambda_high;
  std::optional<int> center;
  std::optional<std::string> schedule_name, omega_form;
  app.add_option("--reverse-steps", reverse_steps, "Reverse DDIM steps");
  app.add_option("--inversion-steps", inversion_steps, "Inversion steps (0 = start from noise)");
  app.add_option("--T", T_opt, "Diffusion steps of the noise schedule");
  app.add_option("--schedule", schedule_name, "cosine or linear");
  app.add_option("--t-start", t_start, "Inversion endpoint and first reverse index");
  app.add_option("--xi", xi, "Back-projection base scale");
  app.add_option("--eta", eta, "DDIM stochasticity");
  app.add_option("--noise-scale", noise_scale, "Inversion perturbation scale in [0, 1]");
  app.add_option("--lambda-low", lambda_low, "Residual weight inside the centre block");
  app.add_option("--lambda-high", lambda_high, "Residual weight outside the centre block");
  app.add_option("--center", center, "Side of the centred low-frequency block");
  app.add_option("--omega-form", omega_form, "half-tanh or full-range");
  std::string weights;
  app.add_option("--weights", weights, "Tiny denoiser weight file (SPAW)");

  std::uint64_t seed_raw = 0;
  auto add_seed = [&](CLI::App* sub) { return sub->add_option("--seed", seed_raw, "RNG seed"); };

  // phantom
  auto* ph_cmd = app.add_subcommand("phantom", "Generate a synthetic phantom image");
  int ph_h = 64, ph_w = 64, ph_n = 8;
  std::string ph_out;
  ph_cmd->add_option("--h", ph_h, "Rows")->capture_default_str();
  ph_cmd->add_option("--w", ph_w, "Columns")->capture_default_str();
  ph_cmd->add_option("--n-ellipses", ph_n, "Number of ellipses")->capture_default_str();
  ph_cmd->add_option("-o,--output", ph_out, "Output CXG1 image")->required();
  auto* ph_seed = add_seed(ph_cmd);

  // mask
  auto* mk_cmd = app.add_subcommand("mask", "Generate an undersampling mask");
  std::string mk_pattern = "gaussian", mk_out;
  double mk_accel = 4.0;
  int mk_acs = 16, mk_h = 64, mk_w = 64;
  mk_cmd->add_option("--pattern", mk_pattern, "gaussian, uniform or radial")->capture_default_str();
  mk_cmd->add_option("--accel", mk_accel, "Acceleration factor")->capture_default_str();
  mk_cmd->add_option("--acs", mk_acs, "Fully sampled centre columns (Cartesian patterns)")->capture_default_str();
  mk_cmd->add_option("--h", mk_h, "Rows")->capture_default_str();
  mk_cmd->add_option("--w", mk_w, "Columns")->capture_default_str();
  mk_cmd->add_option("-o,--output", mk_out, "Output CXG1 mask")->required();
  auto* mk_seed = add_seed(mk_cmd);

  // coils
  auto* co_cmd = app.add_subcommand("coils", "Generate coil sensitivity maps");
  int co_n = 4, co_h = 64, co_w = 64;
  std::string co_out;
  co_cmd->add_option("--n", co_n, "Number of coils")->capture_default_str();
  co_cmd->add_option("--h", co_h, "Rows")->capture_default_str();
  co_cmd->add_option("--w", co_w, "Columns")->capture_default_str();
  co_cmd->add_option("-o,--output", co_out, "Output CXG1 maps")->required();
  auto* co_seed = add_seed(co_cmd);

  // acquire
  auto* aq_cmd = app.add_subcommand("acquire", "Simulate undersampled multi-coil k-space");
  std::string aq_image, aq_mask, aq_coils, aq_out;
  aq_cmd->add_option("--image", aq_image, "Ground-truth image")->required()->check(CLI::ExistingFile);
  aq_cmd->add_option("--mask", aq_mask, "Sampling mask")->required()->check(CLI::ExistingFile);
  aq_cmd->add_option("--coils", aq_coils, "Coil maps (default: one unit coil)")->check(CLI::ExistingFile);
  aq_cmd->add_option("-o,--output", aq_out, "Output CXG1 k-space")->required();

  // train
  auto* tr_cmd = app.add_subcommand("train", "Train the tiny denoiser on synthetic phantoms");
  std::optional<int> tr_epochs, tr_n;
  std::optional<double> tr_lr;
  std::string tr_out, tr_log;
  tr_cmd->add_option("--epochs", tr_epochs, "Training epochs");
  tr_cmd->add_option("--n-phantoms", tr_n, "Training set size");
  tr_cmd->add_option("--lr", tr_lr, "Learning rate");
  tr_cmd->add_option("--loss-log", tr_log, "CSV of per-epoch losses");
  tr_cmd->add_option("-o,--output", tr_out, "Output weight file")->required();
  auto* tr_seed = add_seed(tr_cmd);

  // reconstruct
  auto* rc_cmd = app.add_subcommand("reconstruct", "Reconstruct an image from undersampled k-space");
  std::string rc_method = "spa", rc_kspace, rc_mask, rc_coils, rc_out, rc_trace;
  rc_cmd->add_option("--method", rc_method, "spa, ddnm or zero-filled")->capture_default_str();
  rc_cmd->add_option("--kspace", rc_kspace, "Measured k-space")->required()->check(CLI::ExistingFile);
  rc_cmd->add_option("--mask", rc_mask, "Sampling mask")->required()->check(CLI::ExistingFile);
  rc_cmd->add_option("--coils", rc_coils, "Coil maps (default: one unit coil)")->check(CLI::ExistingFile);
  rc_cmd->add_option("--trace", rc_trace, "Write the per-step trace CSV here");
  rc_cmd->add_option("-o,--output", rc_out, "Output CXG1 image")->required();
  auto* rc_seed = add_seed(rc_cmd);

  // eval
  auto* ev_cmd = app.add_subcommand("eval", "PSNR and SSIM of a reconstruction against ground truth");
  std::string ev_recon, ev_truth;
  bool ev_global = false;
  ev_cmd->add_option("--recon", ev_recon, "Reconstruction")->required()->check(CLI::ExistingFile);
  ev_cmd->add_option("--truth", ev_truth, "Ground truth")->required()->check(CLI::ExistingFile);
  ev_cmd->add_flag("--global", ev_global, "Single-window SSIM instead of the windowed mean");

  // bench
  auto* bn_cmd = app.add_subcommand("bench", "Run the method comparison benchmark");
  std::optional<int> bn_workers;
  std::string bn_out;
  bn_cmd->add_option("--workers", bn_workers, "Parallel benchmark cells");
  bn_cmd->add_option("-o,--output-dir", bn_out, "Directory for report.csv and PNG panels");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n\n" << app.help();
    return 1;
  }

  if (app.get_subcommands().empty() && !print_config) {
    err << app.help();
    return 1;
  }

  try {
    Settings s;
    if (!config_path.empty()) apply_settings_file(s, config_path);
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw Error(ErrorCode::InvalidParameter, "--set expects key=value");
      apply_settings_text(s, kv);
    }
    if (reverse_steps) s.recon.reverse_steps = *reverse_steps;
    if (inversion_steps) s.recon.inversion_steps = *inversion_steps;
    if (T_opt) s.T = *T_opt;
    if (schedule_name) s.schedule = parse_schedule_kind(*schedule_name);
    if (t_start) s.recon.t_start = *t_start;
    if (xi) s.recon.xi = *xi;
    if (eta) s.recon.eta = *eta;
    if (noise_scale) s.recon.inversion_noise_scale = *noise_scale;
    if (lambda_low) s.recon.freq.lambda_low = *lambda_low;
    if (lambda_high) s.recon.freq.lambda_high = *lambda_high;
    if (center) s.recon.freq.center_rows = s.recon.freq.center_cols = *center;
    if (omega_form) s.recon.omega_form = parse_omega_form(*omega_form);
    if (!weights.empty()) s.weights = weights;
    if (tr_epochs) s.train.epochs = *tr_epochs;
    if (tr_n) s.train.n_phantoms = *tr_n;
    if (tr_lr) s.train.lr = *tr_lr;
    if (bn_workers) s.bench.workers = *bn_workers;
    if (!bn_out.empty()) s.bench.output_dir = bn_out;
    s.bench.workers = std::min(s.bench.workers, thread_cap());
    s.validate();

    if (print_config) {
      out << format_settings(s);
      if (app.get_subcommands().empty()) return 0;
    }
    const NoiseSchedule sched = s.make_noise_schedule();

    if (ph_cmd->parsed()) {
      const auto seed = seed_value(ph_seed, seed_raw);
      require_seed(seed, "phantom");
      save_grid(ph_out, gen_phantom(ph_h, ph_w, *seed, ph_n).image);
    } else if (mk_cmd->parsed()) {
      const MaskPattern p = parse_mask_pattern(mk_pattern);
      const auto seed = seed_value(mk_seed, seed_raw);
      if (p != MaskPattern::Uniform) require_seed(seed, "mask");
      SamplingMask m;
      switch (p) {
        case MaskPattern::Gaussian: m = gen_gaussian_mask(mk_h, mk_w, mk_accel, mk_acs, *seed); break;
        case MaskPattern::Uniform: m = gen_uniform_mask(mk_h, mk_w, mk_accel, mk_acs); break;
        case MaskPattern::Radial: m = gen_radial_mask(mk_h, mk_w, mk_accel, *seed); break;
      }
      save_mask(mk_out, m);
      out << "effective_acceleration " << effective_acceleration(m) << '\n';
    } else if (co_cmd->parsed()) {
      const auto seed = seed_value(co_seed, seed_raw);
      require_seed(seed, "coils");
      save_coils(co_out, gen_coil_maps(co_n, co_h, co_w, *seed));
    } else if (aq_cmd->parsed()) {
      const ComplexGrid img = load_grid(aq_image);
      const SamplingMask m = load_mask(aq_mask);
      const CoilSensitivities c = aq_coils.empty() ? CoilSensitivities::unit(m.rows(), m.cols()) : load_coils(aq_coils);
      save_kspace(aq_out, EncodingOperator(m, c).forward(img));
    } else if (tr_cmd->parsed()) {
      const auto seed = seed_value(tr_seed, seed_raw);
      require_seed(seed, "train");
      std::vector<PseudoRealStack> data;
      data.reserve(s.train.n_phantoms);
      for (int i = 0; i < s.train.n_phantoms; ++i) {
        const Phantom ph = gen_phantom(s.train.rows, s.train.cols, static_cast<std::uint64_t>(i), s.train.n_ellipses);
        data.push_back(to_pseudo_real(normalize(ph.image).first));
      }
      TrainOptions opts;
      opts.epochs = s.train.epochs;
      opts.lr = s.train.lr;
      opts.seed = *seed;
      opts.batch_size = s.train.batch_size;
      opts.optimizer = s.train.optimizer;
      opts.cosine_decay = s.train.cosine_decay;
      opts.ema_decay = s.train.ema_decay;
      opts.model = s.train.model;
      opts.on_epoch = [&out](int epoch, double loss) { out << "epoch " << epoch << " loss " << loss << std::endl; };
      const TrainResult r = train_tiny_denoiser(data, sched, opts);
      save_weights(tr_out, r.weights);
      if (!tr_log.empty()) {
        std::ofstream log(tr_log);
        log << "epoch,loss\n";
        log.precision(10);
        for (std::size_t i = 0; i < r.epoch_losses.size(); ++i) log << i << ',' << r.epoch_losses[i] << '\n';
      }
    } else if (rc_cmd->parsed()) {
      const ReconMethod method = parse_recon_method(rc_method);
      const SamplingMask m = load_mask(rc_mask);
      const CoilSensitivities c = rc_coils.empty() ? CoilSensitivities::unit(m.rows(), m.cols()) : load_coils(rc_coils);
      const KSpaceData y = load_kspace(rc_kspace);
      const EncodingOperator op(m, c);
      if (method == ReconMethod::ZeroFilled) {
        save_grid(rc_out, zero_filled(op, y));
        return 0;
      }
      const auto seed = seed_value(rc_seed, seed_raw);
      require_seed(seed, "reconstruct");
      ReconConfig rc = s.recon;
      rc.seed = *seed;
      const auto den = load_denoiser(s);
      try {
        const SampleResult r =
            method == ReconMethod::Spa ? spa_mri_sample(y, op, *den, sched, rc) : ddnm_sample(y, op, *den, sched, rc);
        save_grid(rc_out, r.image);
        if (!rc_trace.empty()) save_trace_csv(rc_trace, r.trace);
        out << "nfe " << r.trace.nfe << '\n';
      } catch (const DivergenceError& e) {
        if (!rc_trace.empty()) save_trace_csv(rc_trace, e.trace());
        throw;
      }
    } else if (ev_cmd->parsed()) {
      const ComplexGrid rec = load_grid(ev_recon);
      const ComplexGrid truth = load_grid(ev_truth);
      auto [p, q] = evaluate(rec, truth);
      if (ev_global) q = ssim_global(unit_magnitude(rec), unit_magnitude(truth));
      out.precision(10);
      out << "psnr_db,ssim\n" << p << ',' << q << '\n';
    } else if (bn_cmd->parsed()) {
      const bool needs_model = std::any_of(s.bench.methods.begin(), s.bench.methods.end(),
                                           [](ReconMethod m) { return m != ReconMethod::ZeroFilled; });
      const ZeroDenoiser unused;
      const auto den = needs_model ? load_denoiser(s) : nullptr;
      const BenchReport r = run_benchmark(s.bench, den ? *den : static_cast<const Denoiser&>(unused), sched, s.recon);
      write_report_csv(out, r);
    }
    return 0;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace spamri::cli
