#include "convseq/config.h"

#include <cctype>
#include <cmath>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

namespace convseq {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

// Shortest round-trip text; fixed notation for ordinary magnitudes so 0.0002 stays readable.
std::string fmt_double(double v) {
  char buf[64];
  const double a = std::abs(v);
  const auto format = (a == 0 || (a >= 1e-5 && a < 1e15)) ? std::chars_format::fixed : std::chars_format::scientific;
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v, format);
  return std::string(buf, end);
}

template <class T>
T parse_number(std::string_view key, std::string_view text) {
  T v{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size()) {
    throw ConfigError("config key '" + std::string(key) + "': invalid value '" + std::string(text) + "'");
  }
  return v;
}

bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "true" || text == "1" || text == "on") return true;
  if (text == "false" || text == "0" || text == "off") return false;
  throw ConfigError("config key '" + std::string(key) + "': expected true/false, got '" + std::string(text) + "'");
}

struct Field {
  const char* key;
  std::function<std::string(const Config&)> get;
  std::function<void(Config&, std::string_view)> set;
};

template <class T>
Field size_field(const char* key, T Config::*group, std::size_t T::*member) {
  return {key, [=](const Config& c) { return std::to_string(c.*group.*member); },
          [=](Config& c, std::string_view v) { c.*group.*member = parse_number<std::size_t>(key, v); }};
}

template <class T>
Field double_field(const char* key, T Config::*group, double T::*member) {
  return {key, [=](const Config& c) { return fmt_double(c.*group.*member); },
          [=](Config& c, std::string_view v) { c.*group.*member = parse_number<double>(key, v); }};
}

template <class T>
Field bool_field(const char* key, T Config::*group, bool T::*member) {
  return {key, [=](const Config& c) { return std::string(c.*group.*member ? "true" : "false"); },
          [=](Config& c, std::string_view v) { c.*group.*member = parse_bool(key, v); }};
}

template <class T>
Field u64_field(const char* key, T Config::*group, std::uint64_t T::*member) {
  return {key, [=](const Config& c) { return std::to_string(c.*group.*member); },
          [=](Config& c, std::string_view v) { c.*group.*member = parse_number<std::uint64_t>(key, v); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back(size_field("seed_length", &Config::hp, &HyperParams::seed_length));
    f.push_back(size_field("target_length", &Config::hp, &HyperParams::target_length));
    f.push_back(size_field("window", &Config::hp, &HyperParams::window));
    f.push_back(double_field("eta", &Config::hp, &HyperParams::eta));
    f.push_back(double_field("lambda_l2", &Config::hp, &HyperParams::lambda_l2));
    f.push_back(double_field("lambda_adv", &Config::hp, &HyperParams::lambda_adv));
    f.push_back(double_field("learning_rate", &Config::hp, &HyperParams::learning_rate));
    f.push_back(size_field("batch_size", &Config::hp, &HyperParams::batch_size));
    f.push_back(double_field("dropout", &Config::hp, &HyperParams::dropout));
    f.push_back(double_field("leaky_slope", &Config::hp, &HyperParams::leaky_slope));
    f.push_back(double_field("adam_beta1", &Config::hp, &HyperParams::adam_beta1));
    f.push_back(double_field("adam_beta2", &Config::hp, &HyperParams::adam_beta2));
    f.push_back(double_field("adam_eps", &Config::hp, &HyperParams::adam_eps));
    f.push_back({"channels",
                 [](const Config& c) {
                   const auto& ch = c.arch.channels;
                   return std::to_string(ch[0]) + "," + std::to_string(ch[1]) + "," + std::to_string(ch[2]);
                 },
                 [](Config& c, std::string_view v) {
                   for (std::size_t i = 0; i < 3; ++i) {
                     const std::size_t comma = v.find(',');
                     if ((comma == std::string_view::npos) != (i == 2)) {
                       throw ConfigError("config key 'channels': expected three comma-separated counts");
                     }
                     c.arch.channels[i] = parse_number<std::size_t>("channels", trim(v.substr(0, comma)));
                     if (comma != std::string_view::npos) v.remove_prefix(comma + 1);
                   }
                 }});
    f.push_back({"kernel", [](const Config& c) { return kernel_str(c.arch.kernel); },
                 [](Config& c, std::string_view v) { c.arch.kernel = parse_kernel(v); }});
    f.push_back({"stride", [](const Config& c) { return kernel_str(c.arch.stride); },
                 [](Config& c, std::string_view v) { c.arch.stride = parse_kernel(v); }});
    f.push_back(size_field("fc_out", &Config::arch, &ArchConfig::fc_out));
    f.push_back(size_field("decoder_hidden", &Config::arch, &ArchConfig::decoder_hidden));
    f.push_back(bool_field("use_long_term", &Config::arch, &ArchConfig::use_long_term));
    f.push_back(bool_field("discriminator_dropout", &Config::arch, &ArchConfig::discriminator_dropout));
    f.push_back(size_field("iterations", &Config::schedule, &Schedule::iterations));
    f.push_back(size_field("checkpoint_every", &Config::schedule, &Schedule::checkpoint_every));
    f.push_back(u64_field("seed", &Config::schedule, &Schedule::seed));
    f.push_back(bool_field("use_adversarial", &Config::schedule, &Schedule::use_adversarial));
    f.push_back(double_field("grad_clip", &Config::schedule, &Schedule::grad_clip));
    f.push_back(size_field("eval_sequences", &Config::schedule, &Schedule::eval_sequences));
    f.push_back(u64_field("eval_seed", &Config::schedule, &Schedule::eval_seed));
    f.push_back(bool_field("report_timing", &Config::schedule, &Schedule::report_timing));
    return f;
  }();
  return table;
}

}  // namespace

Config tiny_config() {
  Config c;
  c.hp.seed_length = 16;
  c.hp.target_length = 6;
  c.hp.window = 8;
  c.hp.batch_size = 4;
  c.hp.dropout = 0.0;
  c.arch.channels = {8, 16, 16};
  c.arch.fc_out = 64;
  c.arch.decoder_hidden = 64;
  return c;
}

void validate(const Config& c) {
  const auto& hp = c.hp;
  if (hp.seed_length == 0 || hp.target_length == 0 || hp.window == 0) {
    throw ConfigError("seed_length, target_length and window must be positive");
  }
  if (hp.window > hp.seed_length) {
    throw ConfigError("window (C=" + std::to_string(hp.window) + ") must not exceed seed_length (t=" +
                      std::to_string(hp.seed_length) + ")");
  }
  if (!(hp.eta >= 0 && hp.eta <= 1)) throw ConfigError("eta must lie in [0,1]");
  if (!(hp.dropout >= 0 && hp.dropout < 1)) throw ConfigError("dropout must lie in [0,1)");
  if (!(hp.leaky_slope > 0 && hp.leaky_slope < 1)) throw ConfigError("leaky_slope must lie in (0,1)");
  if (!(hp.learning_rate > 0)) throw ConfigError("learning_rate must be positive");
  if (hp.lambda_l2 < 0 || hp.lambda_adv < 0) throw ConfigError("regularizer weights must be non-negative");
  if (hp.batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(hp.adam_beta1 >= 0 && hp.adam_beta1 < 1 && hp.adam_beta2 >= 0 && hp.adam_beta2 < 1 && hp.adam_eps > 0)) {
    throw ConfigError("invalid ADAM coefficients");
  }
  for (auto ch : c.arch.channels)
    if (ch == 0) throw ConfigError("channel counts must be positive");
  if (c.arch.kernel.h == 0 || c.arch.kernel.w == 0 || c.arch.stride.h == 0 || c.arch.stride.w == 0) {
    throw ConfigError("kernel and stride extents must be positive");
  }
  if (c.arch.fc_out == 0 || c.arch.decoder_hidden == 0) throw ConfigError("layer widths must be positive");
  if (c.schedule.grad_clip < 0) throw ConfigError("grad_clip must be non-negative");
}

std::string to_config_text(const Config& config) {
  std::string out;
  for (const Field& f : fields()) out += std::string(f.key) + " = " + f.get(config) + "\n";
  return out;
}

void set_config_value(Config& config, std::string_view key, std::string_view value) {
  for (const Field& f : fields()) {
    if (key == f.key) {
      f.set(config, trim(value));
      return;
    }
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

Config parse_config_text(std::string_view text, const Config& base) {
  Config c = base;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const std::size_t nl = text.find('\n');
    std::string_view line = trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    set_config_value(c, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  validate(c);
  return c;
}

Config load_config(const std::filesystem::path& file, const Config& base) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open config file " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), base);
}

Extent2 parse_kernel(std::string_view text) {
  const std::size_t x = text.find('x');
  if (x == std::string_view::npos) throw ConfigError("expected HxW, got '" + std::string(text) + "'");
  Extent2 e{parse_number<std::size_t>("kernel", trim(text.substr(0, x))),
            parse_number<std::size_t>("kernel", trim(text.substr(x + 1)))};
  if (e.h == 0 || e.w == 0) throw ConfigError("extents must be positive in '" + std::string(text) + "'");
  return e;
}

std::string kernel_str(const Extent2& k) { return std::to_string(k.h) + "x" + std::to_string(k.w); }

}  // namespace convseq
