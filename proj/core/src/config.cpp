#include "spamri/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "spamri/error.hpp"

namespace spamri {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value) {
  throw Error(ErrorCode::InvalidParameter, "bad value '" + std::string(value) + "' for " + std::string(key));
}

template <typename T>
T parse_number(std::string_view key, std::string_view value) {
  T out{};
  const char* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) bad_value(key, value);
  return out;
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  bad_value(key, value);
}

template <typename F>
auto parse_list(std::string_view value, F&& parse_one) {
  std::vector<decltype(parse_one(std::string_view{}))> out;
  while (!value.empty()) {
    const auto comma = value.find(',');
    const auto item = trim(value.substr(0, comma));
    if (!item.empty()) out.push_back(parse_one(item));
    if (comma == std::string_view::npos) break;
    value.remove_prefix(comma + 1);
  }
  return out;
}

template <typename T, typename F>
std::string join(const std::vector<T>& xs, F&& fmt) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i > 0) out += ", ";
    out += fmt(xs[i]);
  }
  return out;
}

std::string num(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

void Settings::validate() const {
  if (T < 2) throw Error(ErrorCode::InvalidParameter, "schedule.T must be at least 2");
  const NoiseSchedule s = make_noise_schedule();
  recon.validate(s);
  bench.validate();
  if (train.epochs < 0 || train.batch_size < 1 || !(train.lr > 0.0) || !(train.ema_decay >= 0.0 && train.ema_decay < 1.0) || train.n_phantoms < 1 || train.rows < 16 ||
      train.cols < 16 || train.n_ellipses < 1) {
    throw Error(ErrorCode::InvalidParameter, "invalid training settings");
  }
  train.model.validate();
}

std::vector<std::pair<std::string, std::string>> parse_key_values(std::string_view text) {
  std::vector<std::pair<std::string, std::string>> out;
  int line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorCode::Format, "line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (key.empty()) throw Error(ErrorCode::Format, "line " + std::to_string(line_no) + ": empty key");
    out.emplace_back(std::string(key), std::string(value));
  }
  return out;
}

void apply_setting(Settings& s, std::string_view key, std::string_view v) {
  auto as_int = [&] { return parse_number<int>(key, v); };
  auto as_u64 = [&] { return parse_number<std::uint64_t>(key, v); };
  auto as_double = [&] { return parse_number<double>(key, v); };

  if (key == "schedule.type") s.schedule = parse_schedule_kind(v);
  else if (key == "schedule.T") s.T = as_int();
  else if (key == "sampler.reverse_steps") s.recon.reverse_steps = as_int();
  else if (key == "sampler.inversion_steps") s.recon.inversion_steps = as_int();
  else if (key == "sampler.eta") s.recon.eta = as_double();
  else if (key == "sampler.inversion_noise_scale") s.recon.inversion_noise_scale = as_double();
  else if (key == "sampler.t_start") s.recon.t_start = as_int();
  else if (key == "sampler.seed") s.recon.seed = as_u64();
  else if (key == "sampler.clip_x0") s.recon.clip_x0 = parse_bool(key, v);
  else if (key == "consistency.xi") s.recon.xi = as_double();
  else if (key == "consistency.lambda_low") s.recon.freq.lambda_low = as_double();
  else if (key == "consistency.lambda_high") s.recon.freq.lambda_high = as_double();
  else if (key == "consistency.center") s.recon.freq.center_rows = s.recon.freq.center_cols = as_int();
  else if (key == "consistency.omega_form") s.recon.omega_form = parse_omega_form(v);
  else if (key == "train.epochs") s.train.epochs = as_int();
  else if (key == "train.lr") s.train.lr = as_double();
  else if (key == "train.batch_size") s.train.batch_size = as_int();
  else if (key == "train.optimizer") {
    if (v == "adam") s.train.optimizer = OptimizerKind::Adam;
    else if (v == "sgd") s.train.optimizer = OptimizerKind::Sgd;
    else bad_value(key, v);
  }
  else if (key == "train.cosine_decay") s.train.cosine_decay = parse_bool(key, v);
  else if (key == "train.ema_decay") s.train.ema_decay = as_double();
  else if (key == "train.n_phantoms") s.train.n_phantoms = as_int();
  else if (key == "train.rows") s.train.rows = as_int();
  else if (key == "train.cols") s.train.cols = as_int();
  else if (key == "train.n_ellipses") s.train.n_ellipses = as_int();
  else if (key == "model.base_width") s.train.model.base_width = as_int();
  else if (key == "model.levels") s.train.model.levels = as_int();
  else if (key == "model.embed_dim") s.train.model.embed_dim = as_int();
  else if (key == "model.hidden_dim") s.train.model.hidden_dim = as_int();
  else if (key == "bench.patterns") s.bench.patterns = parse_list(v, parse_mask_pattern);
  else if (key == "bench.accels") s.bench.accels = parse_list(v, [&](std::string_view x) { return parse_number<double>(key, x); });
  else if (key == "bench.seeds") s.bench.seeds = parse_list(v, [&](std::string_view x) { return parse_number<std::uint64_t>(key, x); });
  else if (key == "bench.methods") s.bench.methods = parse_list(v, parse_recon_method);
  else if (key == "bench.rows") s.bench.rows = as_int();
  else if (key == "bench.cols") s.bench.cols = as_int();
  else if (key == "bench.coils") s.bench.coils = as_int();
  else if (key == "bench.acs") s.bench.acs = as_int();
  else if (key == "bench.n_ellipses") s.bench.n_ellipses = as_int();
  else if (key == "bench.coil_seed") s.bench.coil_seed = as_u64();
  else if (key == "bench.phantom_seed_offset") s.bench.phantom_seed_offset = as_u64();
  else if (key == "bench.workers") s.bench.workers = as_int();
  else if (key == "bench.output_dir") s.bench.output_dir = std::string(v);
  else if (key == "bench.panels") s.bench.panels = parse_bool(key, v);
  else if (key == "denoiser.weights") s.weights = std::string(v);
  else throw Error(ErrorCode::InvalidParameter, "unknown config key '" + std::string(key) + "'");
}

void apply_settings_text(Settings& s, std::string_view text) {
  for (const auto& [k, v] : parse_key_values(text)) apply_setting(s, k, v);
}

void apply_settings_file(Settings& s, const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::Io, "cannot open config " + path.string());
  std::ostringstream buf;
  buf << is.rdbuf();
  apply_settings_text(s, buf.str());
}

std::string format_settings(const Settings& s) {
  std::ostringstream os;
  const int t_start = s.recon.t_start < 0 ? s.T - 1 : s.recon.t_start;
  os << "schedule.type = " << to_string(s.schedule) << '\n'
     << "schedule.T = " << s.T << '\n'
     << "sampler.reverse_steps = " << s.recon.reverse_steps << '\n'
     << "sampler.inversion_steps = " << s.recon.inversion_steps << '\n'
     << "sampler.eta = " << num(s.recon.eta) << '\n'
     << "sampler.inversion_noise_scale = " << num(s.recon.inversion_noise_scale) << '\n'
     << "sampler.t_start = " << t_start << '\n'
     << "sampler.seed = " << s.recon.seed << '\n'
     << "sampler.clip_x0 = " << (s.recon.clip_x0 ? "true" : "false") << '\n'
     << "consistency.xi = " << num(s.recon.xi) << '\n'
     << "consistency.lambda_low = " << num(s.recon.freq.lambda_low) << '\n'
     << "consistency.lambda_high = " << num(s.recon.freq.lambda_high) << '\n'
     << "consistency.center = " << s.recon.freq.center_rows << '\n'
     << "consistency.omega_form = " << to_string(s.recon.omega_form) << '\n'
     << "train.epochs = " << s.train.epochs << '\n'
     << "train.lr = " << num(s.train.lr) << '\n'
     << "train.batch_size = " << s.train.batch_size << '\n'
     << "train.optimizer = " << (s.train.optimizer == OptimizerKind::Adam ? "adam" : "sgd") << '\n'
     << "train.cosine_decay = " << (s.train.cosine_decay ? "true" : "false") << '\n'
     << "train.ema_decay = " << num(s.train.ema_decay) << '\n'
     << "train.n_phantoms = " << s.train.n_phantoms << '\n'
     << "train.rows = " << s.train.rows << '\n'
     << "train.cols = " << s.train.cols << '\n'
     << "train.n_ellipses = " << s.train.n_ellipses << '\n'
     << "model.base_width = " << s.train.model.base_width << '\n'
     << "model.levels = " << s.train.model.levels << '\n'
     << "model.embed_dim = " << s.train.model.embed_dim << '\n'
     << "model.hidden_dim = " << s.train.model.hidden_dim << '\n'
     << "bench.patterns = " << join(s.bench.patterns, [](MaskPattern p) { return std::string(to_string(p)); }) << '\n'
     << "bench.accels = " << join(s.bench.accels, [](double a) { return accel_tag(a); }) << '\n'
     << "bench.seeds = " << join(s.bench.seeds, [](std::uint64_t x) { return std::to_string(x); }) << '\n'
     << "bench.methods = " << join(s.bench.methods, [](ReconMethod m) { return std::string(to_string(m)); }) << '\n'
     << "bench.rows = " << s.bench.rows << '\n'
     << "bench.cols = " << s.bench.cols << '\n'
     << "bench.coils = " << s.bench.coils << '\n'
     << "bench.acs = " << s.bench.acs << '\n'
     << "bench.n_ellipses = " << s.bench.n_ellipses << '\n'
     << "bench.coil_seed = " << s.bench.coil_seed << '\n'
     << "bench.phantom_seed_offset = " << s.bench.phantom_seed_offset << '\n'
     << "bench.workers = " << s.bench.workers << '\n'
     << "bench.output_dir = " << s.bench.output_dir.string() << '\n'
     << "bench.panels = " << (s.bench.panels ? "true" : "false") << '\n'
     << "denoiser.weights = " << s.weights.string() << '\n';
  return os.str();
}

}  // namespace spamri
