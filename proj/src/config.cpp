#include "gcfsr/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "gcfsr/errors.hpp"

namespace gcfsr {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end)
    throw ConfigError(key, "config key '" + key + "': cannot parse '" + value + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError(key, "config key '" + key + "': expected true or false, got '" + value + "'");
}

std::string fmt(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

using Setter = std::function<void(ModelConfig&, const std::string&, const std::string&)>;
using Getter = std::function<std::string(const ModelConfig&)>;

struct Field {
  Setter set;
  Getter get;
};

template <class T>
Field number_field(T ModelConfig::*member) {
  return {[member](ModelConfig& c, const std::string& k, const std::string& v) {
            c.*member = parse_number<T>(k, v);
          },
          [member](const ModelConfig& c) {
            if constexpr (std::is_floating_point_v<T>)
              return fmt(c.*member);
            else
              return std::to_string(c.*member);
          }};
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = {
      {"u", number_field(&ModelConfig::u)},
      {"factors",
       {[](ModelConfig& c, const std::string& k, const std::string& v) {
          c.factors.clear();
          std::stringstream ss(v);
          std::string item;
          while (std::getline(ss, item, ',')) c.factors.push_back(parse_number<int>(k, trim(item)));
        },
        [](const ModelConfig& c) {
          std::string out;
          for (std::size_t i = 0; i < c.factors.size(); ++i)
            out += (i ? "," : "") + std::to_string(c.factors[i]);
          return out;
        }}},
      {"c_base", number_field(&ModelConfig::c_base)},
      {"c_max", number_field(&ModelConfig::c_max)},
      {"d_w", number_field(&ModelConfig::d_w)},
      {"lambda_l1", number_field(&ModelConfig::lambda_l1)},
      {"lambda_perc", number_field(&ModelConfig::lambda_perc)},
      {"lambda_adv", number_field(&ModelConfig::lambda_adv)},
      {"lr_g", number_field(&ModelConfig::lr_g)},
      {"lr_d", number_field(&ModelConfig::lr_d)},
      {"beta1", number_field(&ModelConfig::beta1)},
      {"beta2", number_field(&ModelConfig::beta2)},
      {"lr_decay", number_field(&ModelConfig::lr_decay)},
      {"batch_size", number_field(&ModelConfig::batch_size)},
      {"total_iters", number_field(&ModelConfig::total_iters)},
      {"seed", number_field(&ModelConfig::seed)},
      {"s_norm_mode",
       {[](ModelConfig& c, const std::string& k, const std::string& v) {
          if (v == "log")
            c.s_norm_mode = SNormMode::log;
          else if (v == "linear")
            c.s_norm_mode = SNormMode::linear;
          else
            throw ConfigError(k, "config key 's_norm_mode': expected log or linear, got '" + v + "'");
        },
        [](const ModelConfig& c) {
          return std::string(c.s_norm_mode == SNormMode::log ? "log" : "linear");
        }}},
      {"adversarial_only",
       {[](ModelConfig& c, const std::string& k, const std::string& v) {
          c.adversarial_only = parse_bool(k, v);
        },
        [](const ModelConfig& c) { return std::string(c.adversarial_only ? "true" : "false"); }}},
      {"fixed_s",
       {[](ModelConfig& c, const std::string& k, const std::string& v) {
          if (v == "none" || v.empty())
            c.fixed_s.reset();
          else
            c.fixed_s = parse_number<double>(k, v);
        },
        [](const ModelConfig& c) { return c.fixed_s ? fmt(*c.fixed_s) : std::string("none"); }}},
      {"log_interval", number_field(&ModelConfig::log_interval)},
      {"checkpoint_interval", number_field(&ModelConfig::checkpoint_interval)},
      {"r1_gamma", number_field(&ModelConfig::r1_gamma)},
      {"ema_decay", number_field(&ModelConfig::ema_decay)},
  };
  return table;
}

bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

int log2_int(int v) {
  int r = 0;
  while ((1 << r) < v) ++r;
  return r;
}

}  // namespace

int ModelConfig::s_min() const { return *std::min_element(factors.begin(), factors.end()); }
int ModelConfig::s_max() const { return *std::max_element(factors.begin(), factors.end()); }
int ModelConfig::l() const { return u - log2_int(s_max()); }

int ModelConfig::chan(int level) const {
  if (level < l() || level > u)
    throw InvalidArgument("chan: level " + std::to_string(level) + " outside [" +
                          std::to_string(l()) + ", " + std::to_string(u) + "]");
  const int shift = u - level;
  const long long c = static_cast<long long>(c_base) << shift;
  return static_cast<int>(std::min<long long>(c_max, c));
}

LossWeights ModelConfig::loss_weights() const {
  if (adversarial_only) return {0.0, 0.0, lambda_adv};
  return {lambda_l1, lambda_perc, lambda_adv};
}

double ModelConfig::lr_scale(std::int64_t iteration) const {
  const double span = lr_decay * total_iters;
  const double left = static_cast<double>(total_iters - iteration);
  if (span <= 0 || left >= span) return 1.0;
  // Never exactly zero: the last step of the run still moves by lr/span.
  return std::max(left, 1.0) / span;
}

void ModelConfig::validate() const {
  auto fail = [](const char* key, const std::string& what) {
    throw ConfigError(key, std::string("config key '") + key + "': " + what);
  };
  if (u < 2 || u > 12) fail("u", "must be in [2, 12]");
  if (factors.empty()) fail("factors", "must list at least one factor");
  for (int f : factors)
    if (!is_power_of_two(f) || f < 2) fail("factors", "every factor must be a power of two >= 2");
  {
    auto sorted = factors;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      fail("factors", "factors must be distinct");
  }
  if (l() < 1) fail("factors", "largest factor leaves a coarsest level below 1 (needs u - log2(max) >= 1)");
  if (c_base < 1) fail("c_base", "must be positive");
  if (c_max < c_base) fail("c_max", "must be >= c_base");
  if (d_w < 1) fail("d_w", "must be positive");
  if (lambda_l1 < 0) fail("lambda_l1", "must be >= 0");
  if (lambda_perc < 0) fail("lambda_perc", "must be >= 0");
  if (lambda_adv < 0) fail("lambda_adv", "must be >= 0");
  if (!(lr_g > 0)) fail("lr_g", "must be positive");
  if (!(lr_d > 0)) fail("lr_d", "must be positive");
  if (beta1 < 0 || beta1 >= 1) fail("beta1", "must be in [0, 1)");
  if (beta2 < 0 || beta2 >= 1) fail("beta2", "must be in [0, 1)");
  if (!(lr_decay >= 0 && lr_decay <= 1)) fail("lr_decay", "must be in [0, 1]");
  if (batch_size < 1) fail("batch_size", "must be positive");
  if (total_iters < 0) fail("total_iters", "must be >= 0");
  if (log_interval < 1) fail("log_interval", "must be positive");
  if (checkpoint_interval < 1) fail("checkpoint_interval", "must be positive");
  if (fixed_s && std::find(factors.begin(), factors.end(), *fixed_s) == factors.end())
    fail("fixed_s", "must be one of the configured factors");
  if (r1_gamma != 0) fail("r1_gamma", "R1 regularization is not implemented; only 0 is accepted");
  if (ema_decay != 0) fail("ema_decay", "weight EMA is not implemented; only 0 is accepted");
}

std::string ModelConfig::canonical() const {
  std::string out;
  for (const auto& [key, field] : fields()) out += key + "=" + field.get(*this) + "\n";
  return out;
}

ModelConfig ModelConfig::parse(std::string_view text) {
  ModelConfig c;
  std::stringstream ss{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("", "config line " + std::to_string(lineno) + ": expected key=value");
    const std::string key = trim(std::string_view(t).substr(0, eq));
    const std::string value = trim(std::string_view(t).substr(eq + 1));
    const auto it = fields().find(key);
    if (it == fields().end()) throw ConfigError(key, "unknown config key '" + key + "'");
    it->second.set(c, key, value);
  }
  c.validate();
  return c;
}

ModelConfig ModelConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

}  // namespace gcfsr
