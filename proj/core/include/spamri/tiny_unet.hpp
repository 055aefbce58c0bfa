#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "spamri/denoiser.hpp"
#include "spamri/grid.hpp"
#include "spamri/schedule.hpp"

namespace spamri {

/// Architecture of the small encoder-decoder noise predictor. Channel width
/// doubles per level from base_width and is capped at 64; every level below
/// the top halves the resolution with 2x2 average pooling.
struct TinyDenoiserConfig {
  int in_channels = 2;
  int base_width = 8;
  int levels = 4;
  int embed_dim = 32;
  int hidden_dim = 64;

  int width(int level) const;
  void validate() const;
  bool operator==(const TinyDenoiserConfig&) const = default;
};

struct NamedTensor {
  std::string name;
  std::vector<int> dims;
  std::vector<float> values;

  bool operator==(const NamedTensor&) const = default;
};

class TinyDenoiserWeights {
 public:
  static constexpr std::uint16_t kFormatVersion = 1;

  TinyDenoiserWeights() = default;
  explicit TinyDenoiserWeights(const TinyDenoiserConfig& cfg);  // all zeros

  const TinyDenoiserConfig& config() const noexcept { return config_; }
  std::vector<NamedTensor>& params() noexcept { return params_; }
  const std::vector<NamedTensor>& params() const noexcept { return params_; }
  const NamedTensor& param(std::string_view name) const;
  NamedTensor& param(std::string_view name);

  std::size_t parameter_count() const;
  bool all_finite() const;

  bool operator==(const TinyDenoiserWeights&) const = default;

 private:
  TinyDenoiserConfig config_;
  std::vector<NamedTensor> params_;
};

/// Seeded fan-in scaled uniform initialisation; biases start at zero.
TinyDenoiserWeights init_tiny_denoiser(const TinyDenoiserConfig& cfg, std::uint64_t seed);

/// One forward pass. Rows and columns must be divisible by 2^(levels-1) and
/// the channel count must equal config().in_channels.
PseudoRealStack tiny_denoiser_eps(const TinyDenoiserWeights& w, const PseudoRealStack& x_t, int t);

/// Mean squared error between eps_theta(x_t, t) and target. Accumulates the
/// gradient of that loss into grad, which must share w's configuration.
double tiny_denoiser_loss_grad(const TinyDenoiserWeights& w, const PseudoRealStack& x_t, int t,
                               const PseudoRealStack& target, TinyDenoiserWeights& grad);

enum class OptimizerKind { Adam, Sgd };

struct TrainOptions {
  int epochs = 1;
  double lr = 1e-4;
  std::uint64_t seed = 0;
  int batch_size = 8;
  OptimizerKind optimizer = OptimizerKind::Adam;
  /// Anneal the step size from lr to zero along a half cosine over all steps.
  bool cosine_decay = false;
  /// When positive, the returned weights are an exponential moving average of
  /// the iterates with this per-step decay.
  double ema_decay = 0.0;
  TinyDenoiserConfig model;
  /// Called after each epoch with (epoch index, mean loss over the epoch).
  std::function<void(int, double)> on_epoch;
};

struct TrainResult {
  TinyDenoiserWeights weights;
  std::vector<double> epoch_losses;
};

/// Noise-prediction regression: for x0 from the dataset, t ~ U[0, T) and
/// eps ~ N(0, I), minimise mean (eps - eps_theta(sqrt(abar) x0 + sqrt(1-abar) eps, t))^2.
TrainResult train_tiny_denoiser(std::span<const PseudoRealStack> dataset, const NoiseSchedule& s,
                                const TrainOptions& opts);

class TinyDenoiser final : public Denoiser {
 public:
  explicit TinyDenoiser(TinyDenoiserWeights w);
  PseudoRealStack eps(const PseudoRealStack& x_t, int t) const override;
  const TinyDenoiserWeights& weights() const noexcept { return weights_; }

 private:
  TinyDenoiserWeights weights_;
};

/// "SPAW" sectioned weight file: magic, u16 version, then records of
/// (u16 name length, name bytes, CXG1-style dims, float32 payload) until EOF.
/// The first record, "config", stores the architecture.
void save_weights(const std::filesystem::path& path, const TinyDenoiserWeights& w);
TinyDenoiserWeights load_weights(const std::filesystem::path& path);

}  // namespace spamri
