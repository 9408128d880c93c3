#pragma once

#include "nf3d/neural_field.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace nf3d {

/// Every knob of the codec. Defaults reproduce the reference setup; a flat
/// `key = value` file and command-line flags override them (flags win).
struct RunConfig {
  std::string kind = "auto";  // auto | udf | sdf; auto picks sdf for meshes, udf for clouds
  int width = 32;
  std::vector<int> widths = {16, 24, 32, 48, 64, 96};
  int num_hidden = 2;
  int levels = 16;
  int attr_levels = 8;
  double sigma_p = 1.4;
  double omega0 = 30.0;
  double d_star = 0.1;
  double sigma = -1.0;  // < 0: 0.01 for SDF, 0.025 for UDF
  std::size_t m_total = 250000;
  double lr = 1e-4;
  int epochs = 500;
  std::size_t batch_size = 10000;
  double lambda_l1 = 1e-8;
  double lambda_a = 1e-3;
  bool joint = false;
  std::string head = "default";  // default | abs | relu | identity
  bool truncate = true;
  int bitwidth = 8;
  std::vector<int> bitwidths = {};  // sweep ablation; empty = use `bitwidth`
  int qat_epochs = 50;
  double qat_lr = 1e-7;
  int r_mc = 256;
  std::size_t n_points = 100000;
  std::optional<std::uint64_t> seed_params;
  std::optional<std::uint64_t> seed_data;
  std::string attributes = "auto";  // auto | on | off
  int attr_width = 32;
  std::size_t attr_m = 250000;
  int threads = 0;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

namespace detail {

inline std::string trim(std::string s) {
  auto ws = [](unsigned char c) { return std::isspace(c); };
  while (!s.empty() && ws(s.back())) s.pop_back();
  std::size_t i = 0;
  while (i < s.size() && ws(s[i])) ++i;
  return s.substr(i);
}

inline std::string fmt_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

}  // namespace detail

inline std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = detail::trim(item);
    if (item.empty()) continue;
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size()) throw Error(ErrorKind::Config, "invalid integer list element '" + item + "'");
    out.push_back(v);
  }
  return out;
}

/// Applies one `key = value` setting. Unknown keys and malformed values are config errors.
inline void set_option(RunConfig& c, const std::string& key, const std::string& raw) {
  const std::string v = detail::trim(raw);
  auto as_double = [&] {
    std::size_t used = 0;
    double d = 0;
    try {
      d = std::stod(v, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != v.size() || v.empty()) throw Error(ErrorKind::Config, "invalid number for '" + key + "': " + v);
    return d;
  };
  auto as_int = [&] {
    const double d = as_double();
    if (d != std::floor(d)) throw Error(ErrorKind::Config, "expected an integer for '" + key + "': " + v);
    return static_cast<long long>(d);
  };
  auto as_bool = [&] {
    if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "off" || v == "no") return false;
    throw Error(ErrorKind::Config, "expected a boolean for '" + key + "': " + v);
  };
  auto as_seed = [&]() -> std::optional<std::uint64_t> {
    if (v == "auto") return std::nullopt;
    std::size_t used = 0;
    unsigned long long s = 0;
    try {
      s = std::stoull(v, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != v.size()) throw Error(ErrorKind::Config, "invalid seed for '" + key + "': " + v);
    return s;
  };
  auto one_of = [&](std::initializer_list<const char*> allowed) {
    for (const char* a : allowed)
      if (v == a) return v;
    throw Error(ErrorKind::Config, "invalid value for '" + key + "': " + v);
  };

  if (key == "kind") c.kind = one_of({"auto", "udf", "sdf"});
  else if (key == "width") c.width = int(as_int());
  else if (key == "widths") c.widths = parse_int_list(v);
  else if (key == "num_hidden") c.num_hidden = int(as_int());
  else if (key == "levels") c.levels = int(as_int());
  else if (key == "attr_levels") c.attr_levels = int(as_int());
  else if (key == "sigma_p") c.sigma_p = as_double();
  else if (key == "omega0") c.omega0 = as_double();
  else if (key == "d_star") c.d_star = as_double();
  else if (key == "sigma") c.sigma = as_double();
  else if (key == "m_total") c.m_total = static_cast<std::size_t>(as_int());
  else if (key == "lr") c.lr = as_double();
  else if (key == "epochs") c.epochs = int(as_int());
  else if (key == "batch_size") c.batch_size = static_cast<std::size_t>(as_int());
  else if (key == "lambda_l1") c.lambda_l1 = as_double();
  else if (key == "lambda_a") c.lambda_a = as_double();
  else if (key == "joint") c.joint = as_bool();
  else if (key == "head") c.head = one_of({"default", "abs", "relu", "identity"});
  else if (key == "truncate") c.truncate = as_bool();
  else if (key == "bitwidth") c.bitwidth = int(as_int());
  else if (key == "bitwidths") c.bitwidths = parse_int_list(v);
  else if (key == "qat_epochs") c.qat_epochs = int(as_int());
  else if (key == "qat_lr") c.qat_lr = as_double();
  else if (key == "r_mc") c.r_mc = int(as_int());
  else if (key == "n_points") c.n_points = static_cast<std::size_t>(as_int());
  else if (key == "seed_params") c.seed_params = as_seed();
  else if (key == "seed_data") c.seed_data = as_seed();
  else if (key == "attributes") c.attributes = one_of({"auto", "on", "off"});
  else if (key == "attr_width") c.attr_width = int(as_int());
  else if (key == "attr_m") c.attr_m = static_cast<std::size_t>(as_int());
  else if (key == "threads") c.threads = int(as_int());
  else throw Error(ErrorKind::Config, "unknown configuration key '" + key + "'");
}

/// Parses `key = value` lines; '#' starts a comment.
inline void apply_config_text(RunConfig& c, const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorKind::Config, "config line " + std::to_string(line_no) + ": expected 'key = value'");
    try {
      set_option(c, detail::trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const Error& e) {
      throw Error(ErrorKind::Config, "config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

inline void apply_config_file(RunConfig& c, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Config, "cannot open config file '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  apply_config_text(c, ss.str());
}

/// Serializes every key; apply_config_text(RunConfig{}, to_text(c)) reproduces c.
inline std::string to_text(const RunConfig& c) {
  using detail::fmt_double;
  std::ostringstream os;
  auto seed = [](const std::optional<std::uint64_t>& s) { return s ? std::to_string(*s) : std::string("auto"); };
  os << "kind = " << c.kind << '\n'
     << "width = " << c.width << '\n'
     << "widths = " << detail::join(c.widths) << '\n'
     << "num_hidden = " << c.num_hidden << '\n'
     << "levels = " << c.levels << '\n'
     << "attr_levels = " << c.attr_levels << '\n'
     << "sigma_p = " << fmt_double(c.sigma_p) << '\n'
     << "omega0 = " << fmt_double(c.omega0) << '\n'
     << "d_star = " << fmt_double(c.d_star) << '\n'
     << "sigma = " << fmt_double(c.sigma) << '\n'
     << "m_total = " << c.m_total << '\n'
     << "lr = " << fmt_double(c.lr) << '\n'
     << "epochs = " << c.epochs << '\n'
     << "batch_size = " << c.batch_size << '\n'
     << "lambda_l1 = " << fmt_double(c.lambda_l1) << '\n'
     << "lambda_a = " << fmt_double(c.lambda_a) << '\n'
     << "joint = " << (c.joint ? "true" : "false") << '\n'
     << "head = " << c.head << '\n'
     << "truncate = " << (c.truncate ? "true" : "false") << '\n'
     << "bitwidth = " << c.bitwidth << '\n'
     << "bitwidths = " << detail::join(c.bitwidths) << '\n'
     << "qat_epochs = " << c.qat_epochs << '\n'
     << "qat_lr = " << fmt_double(c.qat_lr) << '\n'
     << "r_mc = " << c.r_mc << '\n'
     << "n_points = " << c.n_points << '\n'
     << "seed_params = " << seed(c.seed_params) << '\n'
     << "seed_data = " << seed(c.seed_data) << '\n'
     << "attributes = " << c.attributes << '\n'
     << "attr_width = " << c.attr_width << '\n'
     << "attr_m = " << c.attr_m << '\n'
     << "threads = " << c.threads << '\n';
  return os.str();
}

inline HeadActivation parse_head(const std::string& s) {
  if (s == "abs") return HeadActivation::Abs;
  if (s == "relu") return HeadActivation::Relu;
  if (s == "identity") return HeadActivation::Identity;
  return HeadActivation::Default;
}

/// Range checks that do not depend on the input shape.
inline void validate(const RunConfig& c) {
  auto fail = [](const std::string& m) { throw Error(ErrorKind::Config, m); };
  if (c.width < 1 || c.width > 65535) fail("width out of range");
  for (int w : c.widths)
    if (w < 1 || w > 65535) fail("widths entry out of range");
  if (c.num_hidden < 0 || c.num_hidden > 254) fail("num_hidden out of range");
  if (c.levels < 0 || c.levels > 255 || c.attr_levels < 0 || c.attr_levels > 255) fail("levels out of range");
  if (!(c.sigma_p > 0)) fail("sigma_p must be positive");
  if (!(c.d_star > 0)) fail("d_star must be positive");
  if (c.m_total < 10) fail("m_total must be >= 10");
  if (!(c.lr >= 0) || !(c.qat_lr >= 0)) fail("learning rates must be non-negative");
  if (c.epochs < 0 || c.qat_epochs < 0) fail("epoch counts must be non-negative");
  if (c.batch_size < 1) fail("batch_size must be >= 1");
  if (!(c.lambda_l1 >= 0) || !(c.lambda_a >= 0)) fail("penalty weights must be non-negative");
  if (c.bitwidth < 2 || c.bitwidth > 16) fail("bitwidth must be in [2, 16]");
  for (int b : c.bitwidths)
    if (b < 2 || b > 16) fail("bitwidths entry must be in [2, 16]");
  if (c.r_mc < 8) fail("r_mc must be >= 8");
  if (c.attr_width < 1 || c.attr_width > 65535) fail("attr_width out of range");
}

}  // namespace nf3d
