#include "config.hpp"

#include <json.hpp>

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace lart::cli {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

// Shortest text that parses back to the same double.
std::string num(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size())
    throw ConfigError("config key '" + key + "': cannot parse '" + v + "' as a number");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key '" + key + "': expected true/false, got '" + v + "'");
}

std::vector<std::uint64_t> parse_seeds(const std::string& key, const std::string& v) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_number<std::uint64_t>(key, item));
  }
  if (out.empty()) throw ConfigError("config key '" + key + "': empty seed list");
  return out;
}

std::string join(const std::vector<std::uint64_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

struct Field {
  std::function<void(Settings&, const std::string& key, const std::string&)> set;
  std::function<std::string(Settings&)> get;
};

// Builders for the key table. `ref` maps a Settings to the member.
template <typename Ref>
Field int_field(Ref ref) {
  return {[ref](Settings& s, const std::string& k, const std::string& v) { ref(s) = parse_number<int>(k, v); },
          [ref](Settings& s) { return std::to_string(ref(s)); }};
}
template <typename Ref>
Field u64_field(Ref ref) {
  return {[ref](Settings& s, const std::string& k, const std::string& v) {
            ref(s) = parse_number<std::uint64_t>(k, v);
          },
          [ref](Settings& s) { return std::to_string(ref(s)); }};
}
template <typename Ref>
Field real_field(Ref ref) {
  return {[ref](Settings& s, const std::string& k, const std::string& v) { ref(s) = parse_number<double>(k, v); },
          [ref](Settings& s) { return num(ref(s)); }};
}
template <typename Ref>
Field bool_field(Ref ref) {
  return {[ref](Settings& s, const std::string& k, const std::string& v) { ref(s) = parse_bool(k, v); },
          [ref](Settings& s) { return std::string(ref(s) ? "true" : "false"); }};
}

void add_train_fields(std::map<std::string, Field>& f, const std::string& prefix, TrainConfig Settings::*member) {
  auto tc = [member](Settings& s) -> TrainConfig& { return s.*member; };
  f[prefix + ".base_lr"] = real_field([tc](Settings& s) -> double& { return tc(s).base_lr; });
  f[prefix + ".beta1"] = real_field([tc](Settings& s) -> double& { return tc(s).beta1; });
  f[prefix + ".beta2"] = real_field([tc](Settings& s) -> double& { return tc(s).beta2; });
  f[prefix + ".eps"] = real_field([tc](Settings& s) -> double& { return tc(s).eps; });
  f[prefix + ".weight_decay"] = real_field([tc](Settings& s) -> double& { return tc(s).weight_decay; });
  f[prefix + ".warmup_epochs"] = int_field([tc](Settings& s) -> int& { return tc(s).warmup_epochs; });
  f[prefix + ".total_epochs"] = int_field([tc](Settings& s) -> int& { return tc(s).total_epochs; });
  f[prefix + ".batch_size"] = int_field([tc](Settings& s) -> int& { return tc(s).batch_size; });
  f[prefix + ".mask_ratio"] = real_field([tc](Settings& s) -> double& { return tc(s).mask_ratio; });
  f[prefix + ".layer_wise_decay"] = real_field([tc](Settings& s) -> double& { return tc(s).layer_wise_decay; });
  f[prefix + ".dropout"] = real_field([tc](Settings& s) -> double& { return tc(s).dropout; });
  f[prefix + ".drop_path"] = real_field([tc](Settings& s) -> double& { return tc(s).drop_path; });
  f[prefix + ".grad_clip"] = real_field([tc](Settings& s) -> double& { return tc(s).grad_clip; });
  f[prefix + ".eval_every"] = int_field([tc](Settings& s) -> int& { return tc(s).eval_every; });
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = [] {
    std::map<std::string, Field> f;
    f["seed"] = u64_field([](Settings& s) -> std::uint64_t& { return s.seed; });

    auto gen = [](Settings& s) -> GeneratorConfig& { return s.data.generator; };
    f["gen.train_clips"] = int_field([](Settings& s) -> int& { return s.data.train_clips; });
    f["gen.eval_clips"] = int_field([](Settings& s) -> int& { return s.data.eval_clips; });
    f["gen.n_people"] = int_field([gen](Settings& s) -> int& { return gen(s).n_people; });
    f["gen.num_frames"] = int_field([gen](Settings& s) -> int& { return gen(s).num_frames; });
    f["gen.fps"] = int_field([gen](Settings& s) -> int& { return gen(s).fps; });
    f["gen.gap_rate"] = real_field([gen](Settings& s) -> double& { return gen(s).gap_rate; });
    f["gen.mean_gap_length"] = real_field([gen](Settings& s) -> double& { return gen(s).mean_gap_length; });
    f["gen.interaction_radius"] = real_field([gen](Settings& s) -> double& { return gen(s).interaction_radius; });
    f["gen.pair_fraction"] = real_field([gen](Settings& s) -> double& { return gen(s).pair_fraction; });
    f["gen.teacher_flip_p"] = real_field([gen](Settings& s) -> double& { return gen(s).teacher_flip_p; });
    f["gen.appearance_fs"] = real_field([gen](Settings& s) -> double& { return gen(s).appearance_fs; });
    f["gen.appearance_sigma"] = real_field([gen](Settings& s) -> double& { return gen(s).appearance_sigma; });
    f["gen.appearance_half_window"] = int_field([gen](Settings& s) -> int& { return gen(s).appearance_half_window; });
    f["gen.with_appearance"] = bool_field([gen](Settings& s) -> bool& { return gen(s).with_appearance; });
    f["gen.movement_switch_p"] = real_field([gen](Settings& s) -> double& { return gen(s).movement_switch_p; });
    f["gen.appearance_seed"] = u64_field([gen](Settings& s) -> std::uint64_t& { return gen(s).appearance_seed; });

    f["model.layers"] = int_field([](Settings& s) -> int& { return s.model.layers; });
    f["model.heads"] = int_field([](Settings& s) -> int& { return s.model.heads; });
    f["model.d_model"] = int_field([](Settings& s) -> int& { return s.model.d_model; });
    f["model.mlp_ratio"] = int_field([](Settings& s) -> int& { return s.model.mlp_ratio; });
    f["model.norm"] = {[](Settings& s, const std::string&, const std::string& v) {
                         s.model.norm = norm_position_from_string(v);
                       },
                       [](const Settings& s) { return std::string(to_string(s.model.norm)); }};

    f["tokens.mode"] = {[](Settings& s, const std::string&, const std::string& v) {
                          s.tokens.mode = token_mode_from_string(v);
                        },
                        [](const Settings& s) { return std::string(to_string(s.tokens.mode)); }};
    f["tokens.n_tracks"] = int_field([](Settings& s) -> int& { return s.tokens.n_tracks; });
    f["tokens.window"] = int_field([](Settings& s) -> int& { return s.tokens.window; });
    f["tokens.pose_embed"] = int_field([](Settings& s) -> int& { return s.tokens.pose_embed; });
    f["tokens.hidden"] = int_field([](Settings& s) -> int& { return s.tokens.hidden; });

    add_train_fields(f, "pretrain", &Settings::pretrain);
    add_train_fields(f, "finetune", &Settings::finetune);

    f["eval.n_tracks"] = int_field([](Settings& s) -> int& { return s.inference.n_tracks; });
    f["eval.pooling_width"] = int_field([](Settings& s) -> int& { return s.inference.pooling_width; });
    f["eval.iou_threshold"] = real_field([](Settings& s) -> double& { return s.inference.iou_threshold; });

    f["ablate.suite"] = {[](Settings& s, const std::string& k, const std::string& v) {
                           if (v != "pose" && v != "appearance")
                             throw ConfigError("config key '" + k + "': expected pose or appearance, got '" + v + "'");
                           s.ablate.suite = v;
                         },
                         [](const Settings& s) { return s.ablate.suite; }};
    f["ablate.max_n"] = int_field([](Settings& s) -> int& { return s.ablate.max_n; });
    f["ablate.train_clips"] = int_field([](Settings& s) -> int& { return s.ablate.train_clips; });
    f["ablate.eval_clips"] = int_field([](Settings& s) -> int& { return s.ablate.eval_clips; });
    f["ablate.seeds"] = {[](Settings& s, const std::string& k, const std::string& v) {
                           s.ablate.seeds = parse_seeds(k, v);
                         },
                         [](const Settings& s) { return join(s.ablate.seeds); }};
    f["ablate.window"] = int_field([](Settings& s) -> int& { return s.ablate.window; });
    f["ablate.pose_embed"] = int_field([](Settings& s) -> int& { return s.ablate.pose_embed; });
    f["ablate.pretrain_epochs"] = int_field([](Settings& s) -> int& { return s.ablate.pretrain_epochs; });
    f["ablate.baseline"] = {[](Settings& s, const std::string&, const std::string& v) { s.ablate.baseline = v; },
                            [](const Settings& s) { return s.ablate.baseline; }};
    return f;
  }();
  return table;
}

}  // namespace

KeyValues parse_key_values(std::string_view text, const std::string& origin) {
  KeyValues kv;
  std::istringstream is{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = trim(t.substr(0, eq));
    if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    kv[key] = trim(t.substr(eq + 1));
  }
  return kv;
}

KeyValues read_config_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  if (path.extension() == ".json") {
    // A run manifest: replay its resolved configuration.
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(ss.str());
    } catch (const std::exception& e) {
      throw ConfigError("cannot parse " + path.string() + ": " + e.what());
    }
    if (!j.contains("config") || !j["config"].is_object())
      throw ConfigError(path.string() + " has no 'config' object");
    KeyValues kv;
    for (const auto& [k, v] : j["config"].items()) kv[k] = v.is_string() ? v.get<std::string>() : v.dump();
    return kv;
  }
  return parse_key_values(ss.str(), path.string());
}

KeyValues parse_overrides(const std::vector<std::string>& assignments) {
  KeyValues kv;
  for (const auto& a : assignments) {
    const auto eq = a.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + a + "' is not key=value");
    kv[trim(a.substr(0, eq))] = trim(a.substr(eq + 1));
  }
  return kv;
}

Settings::Settings() {
  tokens.n_tracks = 5;
  tokens.window = 24;
  data.generator.num_frames = 48;
}

void Settings::apply(const KeyValues& kv) {
  const auto& table = fields();
  for (const auto& [key, value] : kv) {
    const auto it = table.find(key);
    if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second.set(*this, key, value);
  }
  // Token widths follow the model width unless the split is explicit.
  if (tokens.d_model != model.d_model || kv.count("tokens.mode") || kv.count("tokens.pose_embed") ||
      kv.count("model.d_model")) {
    const int d = model.d_model;
    const int pose = kv.count("tokens.pose_embed") ? tokens.pose_embed : d / 2;
    TokenConfig t;
    switch (tokens.mode) {
      case TokenMode::PoseOnly: t = TokenConfig::pose_only(d); break;
      case TokenMode::AppearanceOnly: t = TokenConfig::appearance_only(d); break;
      case TokenMode::Fused: t = TokenConfig::fused(pose, d - pose); break;
    }
    t.n_tracks = tokens.n_tracks;
    t.window = tokens.window;
    t.hidden = tokens.hidden;
    tokens = t;
  }
}

KeyValues Settings::resolved() const {
  KeyValues kv;
  Settings copy = *this;
  for (const auto& [key, field] : fields()) kv[key] = field.get(copy);
  return kv;
}

void Settings::validate() const {
  data.generator.validate();
  if (data.train_clips < 0 || data.eval_clips < 0) throw ConfigError("clip counts must be non-negative");
  model.validate();
  tokens.validate();
  pretrain.validate();
  finetune.validate();
  if (finetune.mask_ratio != 0)
    throw ConfigError("finetune.mask_ratio must be 0: finetuning never substitutes mask tokens");
  inference.validate();
}

AblationConfig Settings::ablation_config() const {
  AblationConfig a;
  a.data = data.generator;
  a.train_clips = ablate.train_clips;
  a.eval_clips = ablate.eval_clips;
  a.seeds = ablate.seeds;
  a.model = model;
  a.window = ablate.window;
  a.pose_embed = ablate.pose_embed;
  a.pretrain = pretrain;
  a.pretrain.total_epochs = ablate.pretrain_epochs;
  a.pretrain.warmup_epochs = std::min(a.pretrain.warmup_epochs, ablate.pretrain_epochs);
  a.finetune = finetune;
  a.inference = inference;
  a.arms = ablate.suite == "pose" ? pose_arms(ablate.max_n) : appearance_arms(inference.n_tracks);
  a.baseline = ablate.baseline;
  return a;
}

std::vector<std::string> known_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, f] : fields()) keys.push_back(k);
  return keys;
}

}  // namespace lart::cli
