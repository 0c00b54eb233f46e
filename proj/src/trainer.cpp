#include "lart/trainer.hpp"

#include "lart/eval.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

namespace lart {

std::string_view to_string(Stage s) { return s == Stage::Pretrain ? "pretrain" : "finetune"; }

TrainConfig TrainConfig::pretrain_defaults() {
  TrainConfig c;
  c.stage = Stage::Pretrain;
  c.mask_ratio = 0.4;
  c.layer_wise_decay = 1.0;
  c.drop_path = 0.0;
  return c;
}

TrainConfig TrainConfig::finetune_defaults() {
  TrainConfig c;
  c.stage = Stage::Finetune;
  c.mask_ratio = 0.0;
  c.layer_wise_decay = 0.9;
  c.drop_path = 0.1;
  return c;
}

void TrainConfig::validate() const {
  if (!(base_lr > 0)) throw ConfigError("base_lr must be positive");
  if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1) throw ConfigError("betas must lie in [0,1)");
  if (!(eps > 0)) throw ConfigError("eps must be positive");
  if (weight_decay < 0) throw ConfigError("weight_decay must be non-negative");
  if (total_epochs < 1) throw ConfigError("total_epochs must be at least 1");
  if (warmup_epochs < 0 || warmup_epochs > total_epochs)
    throw ConfigError("warmup_epochs must lie in [0, total_epochs]");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (mask_ratio < 0 || mask_ratio > 1) throw ConfigError("mask_ratio must lie in [0,1]");
  if (!(layer_wise_decay > 0) || layer_wise_decay > 1) throw ConfigError("layer_wise_decay must lie in (0,1]");
  if (dropout < 0 || dropout >= 1) throw ConfigError("dropout must lie in [0,1)");
  if (drop_path < 0 || drop_path >= 1) throw ConfigError("drop_path must lie in [0,1)");
  if (grad_clip < 0) throw ConfigError("grad_clip must be non-negative");
  if (eval_every < 0) throw ConfigError("eval_every must be non-negative");
}

namespace {

// Shortest text that parses back to the same double.
std::string num(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace

std::map<std::string, std::string> TrainConfig::to_map() const {
  return {
      {"stage", std::string(to_string(stage))},
      {"base_lr", num(base_lr)},
      {"beta1", num(beta1)},
      {"beta2", num(beta2)},
      {"eps", num(eps)},
      {"weight_decay", num(weight_decay)},
      {"warmup_epochs", std::to_string(warmup_epochs)},
      {"total_epochs", std::to_string(total_epochs)},
      {"batch_size", std::to_string(batch_size)},
      {"mask_ratio", num(mask_ratio)},
      {"layer_wise_decay", num(layer_wise_decay)},
      {"dropout", num(dropout)},
      {"drop_path", num(drop_path)},
      {"grad_clip", num(grad_clip)},
      {"eval_every", std::to_string(eval_every)},
      {"seed", std::to_string(seed)},
  };
}

std::uint64_t TrainConfig::hash() const {
  std::string canon;
  for (const auto& [k, v] : to_map()) canon += k + "=" + v + "\n";
  return fnv1a(canon);
}

double lr_at(long step, long steps_per_epoch, const TrainConfig& cfg) {
  if (step < 0) throw ConfigError("step must be non-negative");
  if (steps_per_epoch < 1) throw ConfigError("steps_per_epoch must be positive");
  const long warmup = cfg.warmup_epochs * steps_per_epoch;
  const long last = cfg.total_epochs * steps_per_epoch - 1;
  if (step < warmup) return cfg.base_lr * static_cast<double>(step) / static_cast<double>(warmup);
  if (last <= warmup) return step >= last && last > 0 && step > warmup ? 0.0 : cfg.base_lr;
  const double progress = std::min(1.0, static_cast<double>(step - warmup) / static_cast<double>(last - warmup));
  return cfg.base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

double layerwise_lr(int layer_index, int total_layers, double decay) {
  if (!(decay > 0) || decay > 1) throw ConfigError("layer-wise decay must lie in (0,1]");
  if (layer_index >= total_layers) return 1.0;
  return std::pow(decay, total_layers - std::max(layer_index, 0));
}

// ---------------------------------------------------------------------------

std::string TrainReport::to_json() const {
  nlohmann::ordered_json j;
  j["stage"] = stage;
  j["seed"] = seed;
  j["config_hash"] = hex64(config_hash);
  j["steps"] = steps;
  j["skipped_steps"] = skipped_steps;
  j["mask_ratio"] = mask_ratio;
  j["layer_wise_decay"] = layer_wise_decay;
  j["drop_path"] = drop_path;
  nlohmann::ordered_json cfg;
  for (const auto& [k, v] : config.to_map()) cfg[k] = v;
  j["config"] = cfg;
  nlohmann::ordered_json mult;
  for (const auto& [depth, m] : layer_multipliers) mult[std::to_string(depth)] = m;
  j["layer_multipliers"] = mult;
  j["epoch_loss"] = epoch_loss;
  nlohmann::ordered_json maps = nlohmann::ordered_json::array();
  for (double m : epoch_map) maps.push_back(std::isnan(m) ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(m));
  j["epoch_map"] = maps;
  return j.dump(2) + "\n";
}

std::string TrainReport::to_csv() const {
  std::ostringstream os;
  os.precision(9);
  os << "epoch,loss,map\n";
  for (std::size_t e = 0; e < epoch_loss.size(); ++e) {
    os << e + 1 << ',' << epoch_loss[e] << ',';
    if (e < epoch_map.size() && !std::isnan(epoch_map[e])) os << epoch_map[e];
    os << '\n';
  }
  return os.str();
}

bool loss_decreased(const TrainReport& r) {
  const std::size_t n = r.step_loss.size();
  if (n < 10) return false;
  const std::size_t tenth = n / 10;
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t h = v.size() / 2;
    return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
  };
  const double first = median({r.step_loss.begin(), r.step_loss.begin() + static_cast<std::ptrdiff_t>(tenth)});
  const double last = median({r.step_loss.end() - static_cast<std::ptrdiff_t>(tenth), r.step_loss.end()});
  return last < first;
}

// ---------------------------------------------------------------------------
// Checkpoints: version line, 8-byte little-endian header length, JSON header,
// then raw float32 value / first-moment / second-moment blocks per parameter.

namespace {

nlohmann::ordered_json model_config_json(const ModelConfig& m) {
  return {{"layers", m.layers},   {"heads", m.heads},     {"d_model", m.d_model},
          {"mlp_ratio", m.mlp_ratio}, {"dropout", m.dropout}, {"drop_path", m.drop_path},
          {"num_classes", m.num_classes}, {"norm", std::string(to_string(m.norm))}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig m;
  m.layers = j.at("layers");
  m.heads = j.at("heads");
  m.d_model = j.at("d_model");
  m.mlp_ratio = j.at("mlp_ratio");
  m.dropout = j.at("dropout");
  m.drop_path = j.at("drop_path");
  m.num_classes = j.at("num_classes");
  m.norm = norm_position_from_string(j.at("norm").get<std::string>());
  return m;
}

nlohmann::ordered_json token_config_json(const TokenConfig& t) {
  return {{"d_model", t.d_model},   {"n_tracks", t.n_tracks},
          {"window", t.window},     {"mode", std::string(to_string(t.mode))},
          {"pose_embed", t.pose_embed}, {"appearance_embed", t.appearance_embed},
          {"hidden", t.hidden},     {"mask_ratio", t.mask_ratio}};
}

TokenConfig token_config_from_json(const nlohmann::json& j) {
  TokenConfig t;
  t.d_model = j.at("d_model");
  t.n_tracks = j.at("n_tracks");
  t.window = j.at("window");
  t.mode = token_mode_from_string(j.at("mode").get<std::string>());
  t.pose_embed = j.at("pose_embed");
  t.appearance_embed = j.at("appearance_embed");
  t.hidden = j.at("hidden");
  t.mask_ratio = j.at("mask_ratio");
  return t;
}

void write_block(std::ostream& os, const Mat<Real>& m) {
  os.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(Real)));
}

void read_block(std::istream& is, Mat<Real>& m) {
  is.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(Real)));
  if (!is) throw DataError("checkpoint truncated");
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Model& model, const AdamState<Real>& optimizer,
                     long step, const std::string& manifest_hash) {
  const auto& store = model.parameters();
  nlohmann::ordered_json header;
  header["model"] = model_config_json(model.model_config());
  header["tokens"] = token_config_json(model.token_config());
  header["step"] = step;
  header["optimizer_step"] = optimizer.step;
  header["optimizer_skipped"] = optimizer.skipped;
  header["manifest"] = manifest_hash;
  header["has_optimizer"] = optimizer.m.size() == store.size();
  nlohmann::ordered_json params = nlohmann::ordered_json::array();
  for (const auto& p : store.all()) params.push_back({{"name", p.name}, {"rows", p.value.rows()}, {"cols", p.value.cols()}});
  header["parameters"] = params;
  const std::string text = header.dump();

  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  os << kCheckpointVersion << '\n';
  std::uint64_t len = text.size();
  unsigned char len_bytes[8];
  for (int i = 0; i < 8; ++i) len_bytes[i] = static_cast<unsigned char>(len >> (8 * i));
  os.write(reinterpret_cast<const char*>(len_bytes), 8);
  os << text;
  const bool with_opt = optimizer.m.size() == store.size();
  for (std::size_t i = 0; i < store.size(); ++i) {
    write_block(os, store.value(i));
    if (with_opt) {
      write_block(os, optimizer.m[i]);
      write_block(os, optimizer.v[i]);
    }
  }
  os.close();
  if (!os) throw Error("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const std::optional<ModelConfig>& expected) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint " + path.string());
  std::string version;
  std::getline(is, version);
  if (version != kCheckpointVersion)
    throw DataError("unsupported checkpoint version '" + version + "' in " + path.string());
  unsigned char len_bytes[8];
  is.read(reinterpret_cast<char*>(len_bytes), 8);
  if (!is) throw DataError("checkpoint truncated");
  std::uint64_t len = 0;
  for (int i = 0; i < 8; ++i) len |= static_cast<std::uint64_t>(len_bytes[i]) << (8 * i);
  if (len > (1ULL << 30)) throw DataError("checkpoint header too large");
  std::string text(len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(len));
  if (!is) throw DataError("checkpoint truncated");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed checkpoint header: ") + e.what());
  }

  Checkpoint ck;
  try {
    ck.model_config = model_config_from_json(header.at("model"));
    ck.token_config = token_config_from_json(header.at("tokens"));
    ck.step = header.at("step");
    ck.manifest_hash = header.at("manifest");
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed checkpoint header: ") + e.what());
  }
  if (expected && !expected->same_architecture(ck.model_config))
    throw ConfigError("checkpoint model config does not match the requested configuration");
  ck.model = std::make_unique<Model>(ck.model_config, ck.token_config);
  auto& store = ck.model->parameters();
  const auto& params = header.at("parameters");
  if (params.size() != store.size()) throw DataError("checkpoint parameter count does not match its config");
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& p = store.all()[i];
    if (params[i].at("name") != p.name || params[i].at("rows") != p.value.rows() || params[i].at("cols") != p.value.cols())
      throw DataError("checkpoint parameter " + p.name + " does not match its config");
  }
  const bool with_opt = header.value("has_optimizer", false);
  if (with_opt) ck.optimizer.reset(store);
  for (std::size_t i = 0; i < store.size(); ++i) {
    read_block(is, store.value(i));
    if (with_opt) {
      read_block(is, ck.optimizer.m[i]);
      read_block(is, ck.optimizer.v[i]);
    }
  }
  ck.optimizer.step = header.value("optimizer_step", 0L);
  ck.optimizer.skipped = header.value("optimizer_skipped", 0L);
  for (const auto& p : store.all())
    if (!p.value.allFinite()) throw DataError("checkpoint parameter " + p.name + " is not finite");
  return ck;
}

// ---------------------------------------------------------------------------

int choose_window_start(const Clip& c, int poi_track, int window, Rng& rng) {
  if (c.num_frames <= window) return 0;
  const Tracklet* t = c.find_track(poi_track);
  if (!t) throw DataError("person of interest " + std::to_string(poi_track) + " not in clip");
  const Tracklet trimmed = trim_tracklet(*t, window, rng());
  return std::clamp(trimmed.start_frame, 0, c.num_frames - window);
}

TokenGrid<Real> make_training_grid(const Clip& c, const Model& model, double mask_ratio, Rng& rng) {
  if (c.tracklets.empty()) throw DataError("clip " + c.clip_id + " has no tracks");
  const TokenConfig& tcfg = model.token_config();
  const std::size_t n = c.tracklets.size();
  const std::size_t poi_index = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  const int poi = c.tracklets[poi_index].track_id;
  std::vector<int> others;
  for (const auto& t : c.tracklets)
    if (t.track_id != poi) others.push_back(t.track_id);
  const std::size_t take = std::min(others.size(), static_cast<std::size_t>(tcfg.n_tracks - 1));
  for (std::size_t k = 0; k < take; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, others.size() - 1);
    std::swap(others[k], others[pick(rng)]);
  }
  others.resize(take);
  const int start = choose_window_start(c, poi, tcfg.window, rng);
  TokenGrid<Real> g = assemble_grid<Real>(c, poi, others, tcfg, start);
  apply_mask_tokens(g, mask_ratio, model.mask_token(), rng);
  return g;
}

namespace {

double global_grad_norm(const nn::ParameterStore<Real>& store) {
  double sq = 0;
  for (const auto& p : store.all()) sq += p.grad.template cast<double>().squaredNorm();
  return std::sqrt(sq);
}

}  // namespace

TrainReport train_stage(Model& model, AdamState<Real>& opt, const std::vector<Clip>& clips, const TrainConfig& cfg,
                        const StageOptions& options) {
  cfg.validate();
  if (clips.empty()) throw DataError("training dataset is empty");
  const auto t0 = std::chrono::steady_clock::now();
  model.set_regularization(cfg.dropout, cfg.drop_path);
  auto& store = model.parameters();
  if (opt.m.size() != store.size()) opt.reset(store);

  const int layers = model.model_config().layers;
  auto multiplier = [&](int depth) { return layerwise_lr(depth, layers + 1, cfg.layer_wise_decay); };

  TrainReport report;
  report.stage = std::string(to_string(cfg.stage));
  report.config = cfg;
  report.config_hash = cfg.hash();
  report.seed = cfg.seed;
  report.mask_ratio = cfg.mask_ratio;
  report.layer_wise_decay = cfg.layer_wise_decay;
  report.drop_path = cfg.drop_path;
  for (int depth = 0; depth <= layers + 1; ++depth) report.layer_multipliers[depth] = multiplier(depth);

  const long n = static_cast<long>(clips.size());
  const long steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  const long skipped_before = opt.skipped;
  long step = 0;
  std::vector<std::size_t> order(clips.size());
  for (int epoch = 0; epoch < cfg.total_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng order_rng = substream(cfg.seed, "train-order", static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), order_rng);
    double epoch_sum = 0;
    int epoch_steps = 0;
    for (long b = 0; b < steps_per_epoch; ++b) {
      store.zero_grad();
      double loss_sum = 0;
      int used = 0;
      const long begin = b * cfg.batch_size;
      const long end = std::min(n, begin + cfg.batch_size);
      for (long i = begin; i < end; ++i) {
        const std::size_t clip_index = order[static_cast<std::size_t>(i)];
        Rng rng = substream(cfg.seed, "train-sample",
                            static_cast<std::uint64_t>(epoch) * 1000003ULL + clip_index);
        TokenGrid<Real> g = make_training_grid(clips[clip_index], model, cfg.mask_ratio, rng);
        if (!g.loss_mask.any()) continue;
        Model::ForwardCache cache;
        const Mat<Real> logits = model.forward(g, Mode::Train, &rng, &cache);
        const auto bce = bce_loss<Real>(logits, g.labels, g.loss_mask);
        model.backward(cache, bce.grad);
        loss_sum += bce.loss;
        ++used;
      }
      if (used == 0) continue;
      const Real scale = Real(1) / static_cast<Real>(used);
      for (auto& p : store.all()) p.grad *= scale;
      if (cfg.grad_clip > 0) {
        const double norm = global_grad_norm(store);
        if (std::isfinite(norm) && norm > cfg.grad_clip) {
          const Real c = static_cast<Real>(cfg.grad_clip / norm);
          for (auto& p : store.all()) p.grad *= c;
        }
      }
      optimizer_step(store, opt, lr_at(step, steps_per_epoch, cfg), cfg, multiplier);
      const double batch_loss = loss_sum / used;
      report.step_loss.push_back(batch_loss);
      epoch_sum += batch_loss;
      ++epoch_steps;
      ++step;
    }
    report.epoch_loss.push_back(epoch_steps ? epoch_sum / epoch_steps : std::nan(""));
    const bool last = epoch + 1 == cfg.total_epochs;
    const bool due = cfg.eval_every > 0 && (epoch + 1) % cfg.eval_every == 0;
    if (options.evaluator && options.eval_clips && (last || due)) {
      report.epoch_map.push_back(options.evaluator->evaluate(model, *options.eval_clips).map_or_nan());
    } else {
      report.epoch_map.push_back(std::nan(""));
    }
  }
  store.zero_grad();
  report.steps = step;
  report.skipped_steps = opt.skipped - skipped_before;
  report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

TrainReport pretrain(Model& model, AdamState<Real>& opt, const std::vector<Clip>& clips, TrainConfig cfg,
                     const StageOptions& options) {
  for (const auto& c : clips)
    if (c.label_source != LabelSource::Pseudo)
      throw DataError("pretraining expects teacher pseudo-labels; clip " + c.clip_id + " carries ground truth");
  cfg.stage = Stage::Pretrain;
  return train_stage(model, opt, clips, cfg, options);
}

TrainReport finetune(Model& model, AdamState<Real>& opt, const std::vector<Clip>& clips, TrainConfig cfg,
                     const StageOptions& options) {
  for (const auto& c : clips)
    if (c.label_source != LabelSource::GroundTruth)
      throw DataError("finetuning expects ground-truth labels; clip " + c.clip_id + " carries pseudo-labels");
  cfg.stage = Stage::Finetune;
  cfg.mask_ratio = 0.0;
  return train_stage(model, opt, clips, cfg, options);
}

}  // namespace lart
