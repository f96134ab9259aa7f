#include "fishdreamer/config.hpp"

#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "fishdreamer/errors.hpp"

namespace fd {

namespace {

std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return std::string(s.substr(a, b - a));
}

std::string unquote(const std::string& v) {
  if (v.size() >= 2 && (v.front() == '"' || v.front() == '\'') && v.back() == v.front()) {
    return v.substr(1, v.size() - 2);
  }
  return v;
}

}  // namespace

KeyValues KeyValues::parse(std::string_view text, const std::string& source) {
  KeyValues kv;
  kv.source_ = source;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') quoted = !quoted;
      if (line[i] == '#' && !quoted) {
        line.resize(i);
        break;
      }
    }
    const std::string t = trim(line);
    if (t.empty() || t.front() == '[') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ContractError(source + ":" + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(std::string_view(t).substr(0, eq));
    if (key.empty()) throw ContractError(source + ":" + std::to_string(lineno) + ": empty key");
    if (kv.values_.count(key)) {
      throw ContractError(source + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
    }
    kv.values_[key] = unquote(trim(std::string_view(t).substr(eq + 1)));
  }
  return kv;
}

KeyValues KeyValues::load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ContractError("cannot read config " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse(ss.str(), path.string());
}

std::string KeyValues::str(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ContractError(source_ + ": missing required key '" + key + "'");
  return it->second;
}

double KeyValues::number(const std::string& key) const {
  const std::string v = str(key);
  double out = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw ContractError(source_ + ": '" + key + "' is not a number: " + v);
  }
  return out;
}

std::int64_t KeyValues::integer(const std::string& key) const {
  const std::string v = str(key);
  std::int64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw ContractError(source_ + ": '" + key + "' is not an integer: " + v);
  }
  return out;
}

std::vector<std::int64_t> KeyValues::integers(const std::string& key) const {
  std::string v = str(key);
  if (!v.empty() && v.front() == '[') {
    if (v.back() != ']') throw ContractError(source_ + ": unterminated list for '" + key + "'");
    v = v.substr(1, v.size() - 2);
  }
  std::vector<std::int64_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const std::string t = trim(item);
    std::int64_t x = 0;
    auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), x);
    if (t.empty() || ec != std::errc() || p != t.data() + t.size()) {
      throw ContractError(source_ + ": bad list entry '" + t + "' in '" + key + "'");
    }
    out.push_back(x);
  }
  return out;
}

void KeyValues::require_known(const std::set<std::string>& allowed) const {
  for (const auto& [k, v] : values_) {
    if (!allowed.count(k)) throw ContractError(source_ + ": unknown key '" + k + "'");
  }
}

namespace {

std::size_t positive(const KeyValues& kv, const std::string& key) {
  const auto v = kv.integer(key);
  if (v <= 0) throw ContractError("config: '" + key + "' must be positive");
  return static_cast<std::size_t>(v);
}

std::array<std::size_t, 4> four(const KeyValues& kv, const std::string& key) {
  const auto v = kv.integers(key);
  if (v.size() != 4) throw ContractError("config: '" + key + "' needs four entries");
  std::array<std::size_t, 4> out{};
  for (std::size_t i = 0; i < 4; ++i) {
    if (v[i] <= 0) throw ContractError("config: '" + key + "' entries must be positive");
    out[i] = static_cast<std::size_t>(v[i]);
  }
  return out;
}

}  // namespace

AppConfig parse_app_config(const KeyValues& kv) {
  kv.require_known({"k1", "k2", "k3", "k4", "center_x", "center_y", "norm_radius", "fov_radius",
                    "out_width", "out_height", "num_classes", "ignore_index", "n_mask",
                    "pca_direction", "window", "patch", "widths", "depths", "heads",
                    "decoder_width", "seed", "batch_size", "steps", "lr", "dataset"});
  AppConfig a;
  for (int i = 0; i < 4; ++i) a.k[i] = kv.number("k" + std::to_string(i + 1));
  a.fov_radius = kv.number("fov_radius");
  if (!(a.fov_radius > 0.0)) throw ContractError("config: 'fov_radius' must be positive");
  if (kv.has("center_x")) a.center_x = kv.number("center_x");
  if (kv.has("center_y")) a.center_y = kv.number("center_y");
  if (a.center_x.has_value() != a.center_y.has_value()) {
    throw ContractError("config: set both center_x and center_y or neither");
  }
  if (kv.has("norm_radius")) a.norm_radius = kv.number("norm_radius");
  if (kv.has("out_width")) a.out_width = positive(kv, "out_width");
  if (kv.has("out_height")) a.out_height = positive(kv, "out_height");
  if (kv.has("ignore_index")) {
    const auto v = kv.integer("ignore_index");
    if (v < 0 || v > 255) throw ContractError("config: 'ignore_index' must be in [0, 255]");
    a.ignore_index = static_cast<std::int32_t>(v);
  }
  if (kv.has("dataset")) a.dataset = kv.str("dataset");
  auto& m = a.model;
  if (kv.has("num_classes")) m.num_classes = positive(kv, "num_classes");
  if (kv.has("n_mask")) m.n_mask = positive(kv, "n_mask");
  if (kv.has("pca_direction")) m.direction = parse_direction(kv.str("pca_direction"));
  if (kv.has("window")) m.window = positive(kv, "window");
  if (kv.has("patch")) m.patch = positive(kv, "patch");
  if (kv.has("widths")) m.widths = four(kv, "widths");
  if (kv.has("depths")) m.depths = four(kv, "depths");
  if (kv.has("heads")) m.heads = four(kv, "heads");
  if (kv.has("decoder_width")) m.decoder_width = positive(kv, "decoder_width");
  if (kv.has("seed")) m.seed = static_cast<std::uint64_t>(kv.integer("seed"));
  if (kv.has("batch_size")) a.batch_size = positive(kv, "batch_size");
  if (kv.has("steps")) a.steps = static_cast<std::size_t>(kv.integer("steps"));
  if (kv.has("lr")) a.lr = static_cast<float>(kv.number("lr"));
  if (a.model.num_classes > 255 ||
      static_cast<std::size_t>(a.ignore_index) < a.model.num_classes) {
    throw ContractError("config: ignore_index must not be a valid class id");
  }
  m.fov_radius = a.fov_radius;
  return a;
}

AppConfig load_app_config(const std::filesystem::path& path) {
  return parse_app_config(KeyValues::load(path));
}

DreamerConfig model_config(const AppConfig& app, std::size_t width, std::size_t height) {
  DreamerConfig m = app.model;
  m.width = width;
  m.height = height;
  m.fov_radius = app.fov_radius;
  m.validate();
  return m;
}

std::uint64_t distortion_hash(const AppConfig& a) {
  std::string canon;
  char buf[64];
  auto add = [&](const char* key, double v) {
    std::snprintf(buf, sizeof(buf), "%s=%.17g;", key, v);
    canon += buf;
  };
  add("k1", a.k[0]);
  add("k2", a.k[1]);
  add("k3", a.k[2]);
  add("k4", a.k[3]);
  canon += a.center_x ? "" : "center=default;";
  if (a.center_x) {
    add("center_x", *a.center_x);
    add("center_y", *a.center_y);
  }
  if (a.norm_radius) add("norm_radius", *a.norm_radius);
  add("fov_radius", a.fov_radius);
  if (a.out_width) add("out_width", static_cast<double>(*a.out_width));
  if (a.out_height) add("out_height", static_cast<double>(*a.out_height));
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : canon) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace fd
