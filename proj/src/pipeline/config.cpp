#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "bitforge/config.hpp"

namespace bitforge {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view want) {
  throw ConfigError("key '" + std::string(key) + "': expected " + std::string(want) + ", got '" +
                    std::string(value) + "'");
}

template <typename T>
T parse_integer(std::string_view key, std::string_view value) {
  T out{};
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size() || value.empty()) {
    bad_value(key, value, "an integer");
  }
  return out;
}

double parse_real(std::string_view key, std::string_view value) {
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size() || value.empty()) {
    bad_value(key, value, "a number");
  }
  return out;
}

bool parse_flag(std::string_view key, std::string_view value) {
  if (value == "1" || value == "true") return true;
  if (value == "0" || value == "false") return false;
  bad_value(key, value, "true/false");
}

std::string real_text(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Key {
  std::string_view name;
  std::function<void(TrainConfig&, std::string_view)> set;
  std::function<std::string(const TrainConfig&)> get;
};

#define BF_SIZE_KEY(field)                                                                   \
  Key {                                                                                      \
    #field, [](TrainConfig& c, std::string_view v) { c.field = parse_integer<std::size_t>(#field, v); }, \
        [](const TrainConfig& c) { return std::to_string(c.field); }                         \
  }
#define BF_REAL_KEY(field)                                                                   \
  Key {                                                                                      \
    #field, [](TrainConfig& c, std::string_view v) { c.field = parse_real(#field, v); },    \
        [](const TrainConfig& c) { return real_text(c.field); }                              \
  }

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      {"seed", [](TrainConfig& c, std::string_view v) { c.seed = parse_integer<std::uint64_t>("seed", v); },
       [](const TrainConfig& c) { return std::to_string(c.seed); }},
      {"depth_in", [](TrainConfig& c, std::string_view v) { c.depth_in = parse_integer<int>("depth_in", v); },
       [](const TrainConfig& c) { return std::to_string(c.depth_in); }},
      {"depth_out", [](TrainConfig& c, std::string_view v) { c.depth_out = parse_integer<int>("depth_out", v); },
       [](const TrainConfig& c) { return std::to_string(c.depth_out); }},
      BF_SIZE_KEY(patch_size),
      BF_SIZE_KEY(batch_size),
      BF_SIZE_KEY(epochs_total),
      BF_SIZE_KEY(epochs_sgd),
      BF_SIZE_KEY(patches_per_epoch),
      BF_REAL_KEY(lr),
      BF_REAL_KEY(momentum),
      BF_REAL_KEY(weight_decay),
      {"decay_mode",
       [](TrainConfig& c, std::string_view v) {
         if (v == "l2") c.decay_mode = optim::DecayMode::kL2;
         else if (v == "lr_time") c.decay_mode = optim::DecayMode::kLrTime;
         else bad_value("decay_mode", v, "l2 or lr_time");
       },
       [](const TrainConfig& c) {
         return std::string(c.decay_mode == optim::DecayMode::kL2 ? "l2" : "lr_time");
       }},
      BF_SIZE_KEY(arch.trunk_width),
      BF_SIZE_KEY(arch.sr_res_blocks),
      BF_SIZE_KEY(arch.fused_width),
      BF_SIZE_KEY(arch.ira_blocks),
      BF_SIZE_KEY(arch.ira_expansion),
      {"arch.use_sr", [](TrainConfig& c, std::string_view v) { c.arch.use_sr = parse_flag("arch.use_sr", v); },
       [](const TrainConfig& c) { return std::string(c.arch.use_sr ? "true" : "false"); }},
      BF_SIZE_KEY(synth_count),
      BF_SIZE_KEY(synth_size),
      {"generators",
       [](TrainConfig& c, std::string_view v) {
         c.generators.clear();
         while (!v.empty()) {
           const auto comma = v.find(',');
           const auto item = trim(v.substr(0, comma));
           try {
             c.generators.push_back(data::parse_generator(item));
           } catch (const std::invalid_argument&) {
             bad_value("generators", item, "a generator name");
           }
           v = comma == std::string_view::npos ? std::string_view{} : v.substr(comma + 1);
         }
       },
       [](const TrainConfig& c) {
         std::string s;
         for (auto g : c.generators) {
           if (!s.empty()) s += ',';
           s += data::to_string(g);
         }
         return s;
       }},
      {"data_dir", [](TrainConfig& c, std::string_view v) { c.data_dir = std::string(v); },
       [](const TrainConfig& c) { return c.data_dir; }},
      BF_REAL_KEY(heldout_fraction),
      BF_SIZE_KEY(sr_count),
      BF_SIZE_KEY(sr_patch_size),
      BF_SIZE_KEY(sr_batch_size),
      BF_SIZE_KEY(sr_epochs),
      BF_SIZE_KEY(sr_patches_per_epoch),
      BF_REAL_KEY(sr_lr),
  };
  return table;
}

#undef BF_SIZE_KEY
#undef BF_REAL_KEY

// Architecture keys also answer to their bare names.
std::string_view canonical(std::string_view key) {
  for (std::string_view k : {"trunk_width", "sr_res_blocks", "fused_width", "ira_blocks",
                             "ira_expansion", "use_sr"}) {
    if (key == k) {
      for (const auto& entry : keys()) {
        if (entry.name.starts_with("arch.") && entry.name.substr(5) == k) return entry.name;
      }
    }
  }
  return key;
}

}  // namespace

std::vector<int> TrainConfig::stage_depths() const {
  std::vector<int> d;
  for (int b = depth_in; b < depth_out; ++b) d.push_back(b);
  return d;
}

data::SynthSpec TrainConfig::dataset_spec() const {
  return {synth_count, synth_size, generators, derive_seed(seed, "dataset")};
}

data::SynthSpec TrainConfig::sr_dataset_spec() const {
  return {sr_count, synth_size, generators, derive_seed(seed, "sr-dataset")};
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (depth_in < 1 || depth_out > kMaxBitDepth || depth_in >= depth_out) {
    fail("need 1 <= depth_in < depth_out <= 16, got " + std::to_string(depth_in) + " and " +
         std::to_string(depth_out));
  }
  if (epochs_total == 0 || epochs_sgd >= epochs_total) {
    fail("need epochs_sgd < epochs_total and epochs_total > 0");
  }
  if (patch_size < 1 || batch_size < 1 || patches_per_epoch < 1) {
    fail("patch_size, batch_size and patches_per_epoch must be positive");
  }
  if (!(lr > 0.0) || !(momentum >= 0.0 && momentum < 1.0) || !(weight_decay >= 0.0)) {
    fail("need lr > 0, 0 <= momentum < 1, weight_decay >= 0");
  }
  if (arch.trunk_width == 0 || arch.trunk_width % 4 != 0) {
    fail("trunk_width must be a positive multiple of 4");
  }
  if (arch.fused_width < 8) fail("fused_width must be at least 8");
  if (arch.ira_expansion == 0 || arch.fused_width * arch.ira_expansion < 4) {
    fail("ira_expansion must be positive");
  }
  if (generators.empty()) fail("generators must not be empty");
  if (synth_count < 2) fail("synth_count must be at least 2");
  if (synth_size < 11) fail("synth_size must be at least 11");
  if (data_dir.empty() && patch_size > synth_size) fail("patch_size exceeds synth_size");
  if (!(heldout_fraction > 0.0 && heldout_fraction < 1.0)) {
    fail("heldout_fraction must lie in (0, 1)");
  }
  if (arch.use_sr) {
    if (sr_count < 1 || sr_epochs < 1 || sr_batch_size < 1 || sr_patches_per_epoch < 1) {
      fail("SR pretraining counts must be positive");
    }
    if (sr_patch_size == 0 || sr_patch_size % 4 != 0 || sr_patch_size > synth_size) {
      fail("sr_patch_size must be a positive multiple of 4 no larger than synth_size");
    }
    if (!(sr_lr > 0.0)) fail("sr_lr must be positive");
  }
}

std::string TrainConfig::to_text() const {
  std::string out;
  for (const auto& k : keys()) {
    out += k.name;
    out += '=';
    out += k.get(*this);
    out += '\n';
  }
  return out;
}

std::uint64_t TrainConfig::hash() const { return fnv1a64(to_text()); }

std::pair<std::string, std::string> split_assignment(std::string_view text) {
  const auto eq = text.find('=');
  if (eq == std::string_view::npos) {
    throw ConfigError("expected key=value, got '" + std::string(text) + "'");
  }
  return {std::string(trim(text.substr(0, eq))), std::string(trim(text.substr(eq + 1)))};
}

void apply_setting(TrainConfig& cfg, std::string_view key, std::string_view value) {
  key = canonical(key);
  for (const auto& k : keys()) {
    if (k.name == key) {
      k.set(cfg, value);
      return;
    }
  }
  throw ConfigError("unknown key '" + std::string(key) + "'");
}

namespace {

// Applies file text to cfg, listing the keys it assigned.
void apply_text(std::string_view text, TrainConfig& cfg, std::vector<std::string>& assigned) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("line " + std::to_string(line_no) + ": bad section");
      continue;
    }
    try {
      auto [k, v] = split_assignment(line);
      apply_setting(cfg, k, v);
      assigned.emplace_back(canonical(k));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

}  // namespace

TrainConfig parse_config_text(std::string_view text, TrainConfig base) {
  std::vector<std::string> assigned;
  apply_text(text, base, assigned);
  return base;
}

TrainConfig load_config(const std::filesystem::path& path,
                        const std::vector<std::string>& overrides) {
  TrainConfig cfg;
  std::vector<std::string> assigned;
  if (!path.empty()) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    std::ostringstream text;
    text << in.rdbuf();
    apply_text(text.str(), cfg, assigned);
  }
  for (const auto& o : overrides) {
    auto [k, v] = split_assignment(o);
    apply_setting(cfg, k, v);
    assigned.emplace_back(canonical(k));
  }
  // a new epoch budget without an explicit SGD share keeps the 1:3 split
  auto given = [&](std::string_view k) {
    return std::find(assigned.begin(), assigned.end(), k) != assigned.end();
  };
  if (given("epochs_total") && !given("epochs_sgd")) cfg.epochs_sgd = cfg.epochs_total / 4;
  cfg.validate();
  return cfg;
}

}  // namespace bitforge
