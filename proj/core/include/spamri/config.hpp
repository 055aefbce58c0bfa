#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "spamri/evalbench.hpp"
#include "spamri/sampler.hpp"
#include "spamri/schedule.hpp"
#include "spamri/tiny_unet.hpp"

namespace spamri {

struct TrainSettings {
  int epochs = 20;
  double lr = 1e-4;
  int batch_size = 8;
  OptimizerKind optimizer = OptimizerKind::Adam;
  bool cosine_decay = false;
  double ema_decay = 0.0;
  int n_phantoms = 200;
  int rows = 64;
  int cols = 64;
  int n_ellipses = 8;
  TinyDenoiserConfig model;
};

/// Everything the CLI can configure. Defaults: cosine schedule with T = 4000,
/// 200 reverse and 25 inversion steps, xi = 3, lambda 0.4 / 0.6 on a 32x32 centre.
struct Settings {
  ScheduleKind schedule = ScheduleKind::Cosine;
  int T = 4000;
  ReconConfig recon;
  TrainSettings train;
  BenchConfig bench;
  std::filesystem::path weights;

  NoiseSchedule make_noise_schedule() const { return make_schedule(schedule, T); }
  void validate() const;
};

/// Parses "section.key = value" lines. '#' starts a comment; blank lines are
/// skipped. Throws Format with the line number on malformed input.
std::vector<std::pair<std::string, std::string>> parse_key_values(std::string_view text);

/// Throws InvalidParameter for unknown keys or unparsable values.
void apply_setting(Settings& s, std::string_view key, std::string_view value);
void apply_settings_text(Settings& s, std::string_view text);
void apply_settings_file(Settings& s, const std::filesystem::path& path);

/// Fully resolved configuration in the same key = value format.
std::string format_settings(const Settings& s);

}  // namespace spamri
