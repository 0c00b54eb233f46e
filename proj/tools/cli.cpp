#include "cli.hpp"

#include "config.hpp"
#include "plots.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace lart::cli {

namespace {

// ---------------------------------------------------------------------------
// Files

std::string read_file(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw DataError("cannot read " + p.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& bytes) {
  if (p.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(p.parent_path(), ec);
    if (ec) throw Error("cannot create directory " + p.parent_path().string() + ": " + ec.message());
  }
  std::ofstream os(p, std::ios::binary);
  if (!os) throw Error("cannot write " + p.string());
  os << bytes;
  if (!os) throw Error("failed writing " + p.string());
}

std::string file_hash(const fs::path& p) { return hex64(fnv1a(read_file(p))); }

// Report JSON carries the hash of the manifest that produced it.
std::string stamp_json(const std::string& text, const std::string& manifest_hash) {
  json j = json::parse(text);
  j["manifest_hash"] = manifest_hash;
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Manifests: command, resolved config, inputs. The manifest hash covers those
// three, so it is known before any output exists and artifacts can embed it.

struct Manifest {
  std::string command;
  KeyValues config;
  std::vector<std::pair<std::string, std::string>> inputs;   // name -> hash
  std::vector<std::pair<std::string, std::string>> outputs;  // relative path -> hash
  json extra = json::object();
  json arguments = json::object();  // paths given on the command line; not hashed

  std::string hash() const {
    std::string canon = command + "\n";
    for (const auto& [k, v] : config) canon += k + "=" + v + "\n";
    for (const auto& [k, v] : inputs) canon += "in:" + k + "=" + v + "\n";
    return hex64(fnv1a(canon));
  }

  void add_output(const fs::path& dir, const std::string& name) { outputs.emplace_back(name, file_hash(dir / name)); }

  std::string to_json() const {
    json j;
    j["tool"] = kVersion;
    j["command"] = command;
    j["manifest_hash"] = hash();
    j["seed"] = config.count("seed") ? config.at("seed") : "0";
    json cfg = json::object();
    for (const auto& [k, v] : config) cfg[k] = v;
    j["config"] = cfg;
    json in = json::object();
    for (const auto& [k, v] : inputs) in[k] = v;
    j["inputs"] = in;
    j["arguments"] = arguments;
    for (const auto& [k, v] : extra.items()) j[k] = v;
    json out = json::object();
    for (const auto& [k, v] : outputs) out[k] = v;
    j["outputs"] = out;
    if (const char* stamp = std::getenv("LART_TIMESTAMP")) j["timestamp"] = stamp;
    return j.dump(2) + "\n";
  }
};

// ---------------------------------------------------------------------------
// Datasets: <dir>/manifest.json, <dir>/train/*.lart, <dir>/eval/*.lart.

struct Dataset {
  std::vector<Clip> clips;
  std::string hash;          // hash of the split's clip files
  json manifest;
};

std::string clip_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "clip-%05d.lart", index);
  return buf;
}

Dataset load_split(const fs::path& dir, const std::string& split) {
  const fs::path mpath = dir / "manifest.json";
  if (!fs::exists(mpath)) throw DataError("no dataset manifest at " + mpath.string() + " (run `lart gen` first)");
  Dataset d;
  try {
    d.manifest = json::parse(read_file(mpath));
  } catch (const json::exception& e) {
    throw DataError("malformed dataset manifest " + mpath.string() + ": " + e.what());
  }
  if (!d.manifest.contains("splits") || !d.manifest["splits"].contains(split))
    throw DataError("dataset " + dir.string() + " has no '" + split + "' split");
  const json& files = d.manifest["splits"][split]["files"];
  std::string canon;
  for (const auto& [name, hash] : files.items()) {
    const fs::path p = dir / split / name;
    if (!fs::exists(p)) throw DataError("dataset file missing: " + p.string());
    const std::string bytes = read_file(p);
    if (hex64(fnv1a(bytes)) != hash.get<std::string>())
      throw DataError("dataset file " + p.string() + " does not match its manifest hash");
    std::istringstream is(bytes);
    d.clips.push_back(read_clip(is));
    canon += name + "=" + hash.get<std::string>() + "\n";
  }
  if (d.clips.empty()) throw DataError("split '" + split + "' of " + dir.string() + " is empty");
  d.hash = hex64(fnv1a(canon));
  return d;
}

// ---------------------------------------------------------------------------

struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config, "key = value config file, or a run manifest to replay");
  cmd->add_option("--set", c.sets, "override a config key (key=value); repeatable");
  cmd->add_option("--seed", c.seed, "root seed");
}

Settings resolve(const Common& c, const KeyValues& flags) {
  Settings s;
  if (!c.config.empty()) s.apply(read_config_file(c.config));
  s.apply(parse_overrides(c.sets));
  KeyValues f = flags;
  if (c.seed) f["seed"] = std::to_string(*c.seed);
  s.apply(f);
  s.validate();
  return s;
}

// Keys a command's manifest records: the shared ones plus its own sections.
KeyValues section(const Settings& s, std::initializer_list<std::string_view> prefixes) {
  KeyValues out;
  for (const auto& [k, v] : s.resolved()) {
    bool keep = k == "seed";
    for (auto p : prefixes) keep |= k.starts_with(p);
    if (keep) out[k] = v;
  }
  return out;
}

void log(const std::string& msg) { std::cerr << msg << '\n'; }

// ---------------------------------------------------------------------------
// gen

int cmd_gen(const Settings& s, const fs::path& out) {
  Manifest m{"gen", section(s, {"gen."}), {}, {}};
  m.arguments["out"] = out.string();
  GeneratorConfig g = s.data.generator;
  g.seed = s.seed;
  json splits = json::object();
  int index = 0;
  for (const auto& [split, count] : {std::pair<std::string, int>{"train", s.data.train_clips}, {"eval", s.data.eval_clips}}) {
    fs::create_directories(out / split);
    std::vector<Clip> clips(static_cast<std::size_t>(count));
    const int first = index;
    parallel_for(clips.size(), [&](std::size_t i) {
      clips[i] = generate_clip(clip_config(g, first + static_cast<int>(i)));
    });
    json files = json::object();
    json seeds = json::array();
    for (int i = 0; i < count; ++i) {
      const std::string name = clip_name(first + i);
      std::ostringstream os;
      write_clip(clips[static_cast<std::size_t>(i)], os);
      write_file(out / split / name, os.str());
      files[name] = hex64(fnv1a(os.str()));
      seeds.push_back(clip_config(g, first + i).seed);
    }
    splits[split] = {{"count", count}, {"files", files}, {"clip_seeds", seeds}};
    index += count;
  }
  json catalog = json::array();
  for (const auto& c : action_catalog()) catalog.push_back({{"name", c.name}, {"category", to_string(c.category)}});
  std::string config_canon;
  for (const auto& [k, v] : m.config) config_canon += k + "=" + v + "\n";
  m.extra["config_hash"] = hex64(fnv1a(config_canon));
  m.extra["catalog"] = catalog;
  m.extra["splits"] = splits;
  write_file(out / "manifest.json", m.to_json());
  std::cout << "wrote " << s.data.train_clips << " train and " << s.data.eval_clips << " eval clips to "
            << out.string() << " (manifest " << m.hash() << ")\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// pretrain / finetune

void write_train_outputs(const fs::path& out, Manifest& m, const Model& model, const AdamState<Real>& opt,
                         const TrainReport& report) {
  fs::create_directories(out);
  save_checkpoint(out / "checkpoint.bin", model, opt, report.steps, m.hash());
  write_file(out / "train_report.json", stamp_json(report.to_json(), m.hash()));
  write_file(out / "train_report.csv", report.to_csv());
  for (const char* f : {"checkpoint.bin", "train_report.json", "train_report.csv"}) m.add_output(out, f);
  write_file(out / "manifest.json", m.to_json());
  std::cout << report.stage << ": " << report.steps << " steps, final loss "
            << (report.epoch_loss.empty() ? std::nan("") : report.epoch_loss.back()) << ", skipped "
            << report.skipped_steps << " (manifest " << m.hash() << ")\n";
}

int cmd_pretrain(const Settings& s, const fs::path& data, const fs::path& out) {
  Dataset d = load_split(data, "train");
  Manifest m{"pretrain", section(s, {"model.", "tokens.", "pretrain."}), {{"data/train", d.hash}}, {}};
  m.arguments = {{"data", data.string()}, {"out", out.string()}};
  // Teacher pseudo-labels are a pure function of the clip, the dataset's
  // flip rate and the root seed.
  const double flip = std::stod(d.manifest["config"]["gen.teacher_flip_p"].get<std::string>());
  std::vector<Clip> pseudo;
  for (const auto& c : d.clips)
    pseudo.push_back(with_pseudo_labels(c, teacher_pseudo_label(c, flip, fnv1a(c.clip_id, s.seed))));
  Model model(s.model, s.tokens);
  model.init(s.seed);
  AdamState<Real> opt;
  TrainConfig cfg = s.pretrain;
  cfg.seed = s.seed;
  log("pretraining on " + std::to_string(pseudo.size()) + " clips");
  const TrainReport report = pretrain(model, opt, pseudo, cfg);
  write_train_outputs(out, m, model, opt, report);
  return kExitOk;
}

void require_same_tokens(const TokenConfig& have, const TokenConfig& want) {
  TokenConfig a = have, b = want;
  a.mask_ratio = b.mask_ratio = 0;
  if (!(a == b))
    throw ConfigError("checkpoint token layout (" + std::string(to_string(have.mode)) + ", N=" +
                      std::to_string(have.n_tracks) + ", window " + std::to_string(have.window) +
                      ") does not match the configured one (" + std::string(to_string(want.mode)) + ", N=" +
                      std::to_string(want.n_tracks) + ", window " + std::to_string(want.window) + ")");
}

int cmd_finetune(const Settings& s, const fs::path& data, const std::string& checkpoint, bool scratch,
                 const fs::path& out) {
  if (checkpoint.empty() && !scratch)
    throw ConfigError("finetune needs --checkpoint <pretrain-dir>/checkpoint.bin (run `lart pretrain` first), "
                      "or --from-scratch to skip pretraining");
  Dataset d = load_split(data, "train");
  Manifest m{"finetune", section(s, {"model.", "tokens.", "finetune."}), {{"data/train", d.hash}}, {}};
  m.arguments = {{"data", data.string()}, {"checkpoint", checkpoint}, {"out", out.string()}};
  std::unique_ptr<Model> model;
  if (!checkpoint.empty()) {
    if (!fs::exists(checkpoint)) throw DataError("checkpoint " + checkpoint + " does not exist");
    Checkpoint ck = load_checkpoint(checkpoint, s.model);
    require_same_tokens(ck.token_config, s.tokens);
    m.inputs.emplace_back("checkpoint", file_hash(checkpoint));
    model = std::move(ck.model);
  } else {
    model = std::make_unique<Model>(s.model, s.tokens);
    model->init(s.seed);
  }
  AdamState<Real> opt;
  TrainConfig cfg = s.finetune;
  cfg.seed = s.seed;
  std::vector<Clip> eval_clips;
  std::unique_ptr<Evaluator> evaluator;
  StageOptions options;
  if (cfg.eval_every > 0) {
    eval_clips = load_split(data, "eval").clips;
    InferenceConfig inf = s.inference;
    inf.seed = s.seed;
    evaluator = std::make_unique<Evaluator>(inf);
    options.eval_clips = &eval_clips;
    options.evaluator = evaluator.get();
  }
  log("finetuning on " + std::to_string(d.clips.size()) + " clips");
  const TrainReport report = finetune(*model, opt, d.clips, cfg, options);
  write_train_outputs(out, m, *model, opt, report);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// eval

int cmd_eval(const Settings& s, const std::string& checkpoint, const fs::path& data, const std::string& split,
             const fs::path& out) {
  if (checkpoint.empty()) throw ConfigError("eval needs --checkpoint");
  if (!fs::exists(checkpoint)) throw DataError("checkpoint " + checkpoint + " does not exist");
  const Checkpoint ck = load_checkpoint(checkpoint);
  Dataset d = load_split(data, split);
  Manifest m{"eval", section(s, {"eval."}), {{"checkpoint", file_hash(checkpoint)}, {"data/" + split, d.hash}}, {}};
  m.arguments = {{"checkpoint", checkpoint}, {"data", data.string()}, {"split", split}, {"out", out.string()}};
  InferenceConfig inf = s.inference;
  inf.seed = s.seed;
  const EvalResult r = Evaluator(inf).evaluate(*ck.model, d.clips);
  write_file(out / "eval.csv", r.to_csv());
  write_file(out / "eval.json", stamp_json(r.to_json(), m.hash()));
  write_file(out / "summary.txt", r.summary());
  write_file(out / "pr_curves.csv", r.pr_csv());
  for (const char* f : {"eval.csv", "eval.json", "summary.txt", "pr_curves.csv"}) m.add_output(out, f);
  write_file(out / "manifest.json", m.to_json());
  std::cout << r.summary();
  return kExitOk;
}

// ---------------------------------------------------------------------------
// ablate

int cmd_ablate(const Settings& s, const fs::path& out) {
  const AblationConfig cfg = s.ablation_config();
  Manifest m{"ablate", section(s, {"gen.", "model.", "pretrain.", "finetune.", "eval.", "ablate."}), {}, {}};
  m.arguments["out"] = out.string();
  log("ablation: " + std::to_string(cfg.arms.size()) + " arms x " + std::to_string(cfg.seeds.size()) + " seeds");
  const AblationReport r = ablation_suite(cfg);
  write_file(out / "ablation.csv", r.to_csv());
  write_file(out / "ablation_summary.csv", r.summary_csv());
  write_file(out / "gains.csv", r.gains_csv());
  write_file(out / "ablation.json", stamp_json(r.to_json(), m.hash()));
  for (const char* f : {"ablation.csv", "ablation_summary.csv", "gains.csv", "ablation.json"}) m.add_output(out, f);
  write_file(out / "manifest.json", m.to_json());
  std::cout << r.summary_csv();
  return kExitOk;
}

// ---------------------------------------------------------------------------
// report

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream is(read_file(p));
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(std::move(cells));
  }
  if (rows.empty()) throw DataError(p.string() + " is empty");
  return rows;
}

double cell_number(const std::string& s) {
  if (s.empty()) return std::nan("");
  try {
    return std::stod(s);
  } catch (const std::exception&) {
    throw DataError("malformed number '" + s + "' in report input");
  }
}

std::size_t column(const std::vector<std::string>& header, const std::string& name, const fs::path& p) {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw DataError(p.string() + " lacks column '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

void report_pr(const fs::path& in, const fs::path& out, Manifest& m) {
  const auto rows = read_csv(in);
  std::vector<Series> series;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() < 3) throw DataError("malformed row in " + in.string());
    if (series.empty() || series.back().name != rows[i][0]) series.push_back({rows[i][0], {0.0}, {1.0}});
    series.back().x.push_back(cell_number(rows[i][1]));
    series.back().y.push_back(cell_number(rows[i][2]));
  }
  write_file(out / "pr_curves.svg", line_chart_svg("Precision-recall per class", "recall", "precision", series));
  m.add_output(out, "pr_curves.svg");
}

void report_train(const fs::path& in, const fs::path& out, Manifest& m) {
  json j;
  try {
    j = json::parse(read_file(in));
  } catch (const json::exception& e) {
    throw DataError("malformed train report " + in.string() + ": " + e.what());
  }
  TrainConfig cfg;
  const auto& c = j.at("config");
  cfg.base_lr = std::stod(c.at("base_lr").get<std::string>());
  cfg.warmup_epochs = std::stoi(c.at("warmup_epochs").get<std::string>());
  cfg.total_epochs = std::stoi(c.at("total_epochs").get<std::string>());
  const long steps = j.at("steps").get<long>();
  const long spe = std::max(1L, steps / std::max(1, cfg.total_epochs));
  Series lr{"lr", {}, {}};
  std::string csv = "step,epoch,lr\n";
  for (long step = 0; step < spe * cfg.total_epochs; ++step) {
    const double epoch = static_cast<double>(step) / static_cast<double>(spe);
    const double v = lr_at(step, spe, cfg);
    lr.x.push_back(epoch);
    lr.y.push_back(v);
    std::ostringstream row;
    row.precision(9);
    row << step << ',' << epoch << ',' << v << '\n';
    csv += row.str();
  }
  write_file(out / "lr_schedule.csv", csv);
  write_file(out / "lr_schedule.svg", line_chart_svg("Learning-rate schedule", "epoch", "learning rate", {lr}));
  Series loss{"loss", {}, {}};
  const auto& el = j.at("epoch_loss");
  for (std::size_t e = 0; e < el.size(); ++e) {
    loss.x.push_back(static_cast<double>(e + 1));
    loss.y.push_back(el[e].is_number() ? el[e].get<double>() : std::nan(""));
  }
  write_file(out / "loss.svg", line_chart_svg("Training loss", "epoch", "BCE", {loss}));
  for (const char* f : {"lr_schedule.csv", "lr_schedule.svg", "loss.svg"}) m.add_output(out, f);
}

void report_ablation(const fs::path& in, const fs::path& out, Manifest& m) {
  const auto rows = read_csv(in);
  const auto& h = rows[0];
  const std::size_t arm = column(h, "arm", in), mm = column(h, "map_mean", in), ms = column(h, "map_std", in),
                    pm = column(h, "pi_mean", in), ps = column(h, "pi_std", in);
  std::vector<BarGroup> groups;
  for (std::size_t i = 1; i < rows.size(); ++i)
    groups.push_back({rows[i][arm], {cell_number(rows[i][mm]), cell_number(rows[i][pm])},
                      {cell_number(rows[i][ms]), cell_number(rows[i][ps])}});
  write_file(out / "ablation.svg", bar_chart_svg("Ablation: mean over seeds", "AP", {"mAP", "PI mean"}, groups));
  m.add_output(out, "ablation.svg");
}

void report_gains(const fs::path& in, const fs::path& out, Manifest& m) {
  const auto rows = read_csv(in);
  const auto& h = rows[0];
  std::vector<std::string> names;
  for (std::size_t c = 3; c < h.size(); ++c) names.push_back(h[c]);
  std::vector<BarGroup> groups;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    BarGroup g{rows[i][0], {}, {}};
    for (std::size_t c = 3; c < h.size(); ++c) g.values.push_back(c < rows[i].size() ? cell_number(rows[i][c]) : std::nan(""));
    groups.push_back(std::move(g));
  }
  write_file(out / "gains.svg", bar_chart_svg("Class-wise AP gain over " + h[2], "AP gain", names, groups));
  m.add_output(out, "gains.svg");
}

int cmd_report(const std::string& pr, const std::string& train, const std::string& ablation, const std::string& gains,
               const fs::path& out) {
  std::vector<std::string> missing;
  std::vector<std::pair<std::string, std::string>> given;
  for (const auto& [kind, path] : {std::pair<std::string, std::string>{"pr", pr}, {"train", train},
                                   {"ablation", ablation}, {"gains", gains}}) {
    if (path.empty()) continue;
    if (!fs::exists(path)) missing.push_back(path);
    else given.emplace_back(kind, path);
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& p : missing) list += "\n  " + p;
    throw DataError("report inputs not found:" + list);
  }
  if (given.empty()) throw ConfigError("report needs at least one of --pr, --train, --ablation, --gains");
  Manifest m{"report", {}, {}, {}};
  m.arguments["out"] = out.string();
  for (const auto& [kind, path] : given) {
    m.inputs.emplace_back(kind, file_hash(path));
    m.arguments[kind] = path;
  }
  for (const auto& [kind, path] : given) {
    if (kind == "pr") report_pr(path, out, m);
    if (kind == "train") report_train(path, out, m);
    if (kind == "ablation") report_ablation(path, out, m);
    if (kind == "gains") report_gains(path, out, m);
  }
  write_file(out / "manifest.json", m.to_json());
  for (const auto& [name, hash] : m.outputs) std::cout << (out / name).string() << '\n';
  return kExitOk;
}

int run(int argc, const char* const* argv) {
  CLI::App app{"Action recognition over person tracklets: data generation, training, evaluation and reports"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  Common common;
  std::string out, data, checkpoint, split = "eval", suite, seeds;
  std::optional<int> train_clips, eval_clips, n_tracks, pooling;
  bool scratch = false;
  std::string pr, train, ablation, gains;

  auto* gen = app.add_subcommand("gen", "generate a synthetic clip dataset");
  add_common(gen, common);
  gen->add_option("-o,--out", out, "dataset directory")->required();
  gen->add_option("--train-clips", train_clips, "clips in the train split");
  gen->add_option("--eval-clips", eval_clips, "clips in the eval split");

  auto* pre = app.add_subcommand("pretrain", "train on teacher pseudo-labels");
  add_common(pre, common);
  pre->add_option("-d,--data", data, "dataset directory")->required();
  pre->add_option("-o,--out", out, "output directory")->required();

  auto* fine = app.add_subcommand("finetune", "train on ground-truth labels from a pretrained checkpoint");
  add_common(fine, common);
  fine->add_option("-d,--data", data, "dataset directory")->required();
  fine->add_option("--checkpoint", checkpoint, "pretrained checkpoint");
  fine->add_flag("--from-scratch", scratch, "start from a fresh initialization");
  fine->add_option("-o,--out", out, "output directory")->required();

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(ev, common);
  ev->add_option("--checkpoint", checkpoint, "checkpoint to evaluate")->required();
  ev->add_option("-d,--data", data, "dataset directory")->required();
  ev->add_option("--split", split, "dataset split")->check(CLI::IsMember({"train", "eval"}));
  ev->add_option("--n-tracks", n_tracks, "tracks per grid at inference (default 5)");
  ev->add_option("--pooling", pooling, "frames pooled around each annotated frame (default 12)");
  ev->add_option("-o,--out", out, "output directory")->required();

  auto* abl = app.add_subcommand("ablate", "run an ablation suite");
  add_common(abl, common);
  abl->add_option("--suite", suite, "pose (N = 1..max_n) or appearance")->check(CLI::IsMember({"pose", "appearance"}));
  abl->add_option("--seeds", seeds, "comma-separated seeds");
  abl->add_option("-o,--out", out, "output directory")->required();

  auto* rep = app.add_subcommand("report", "render plots from result files");
  rep->add_option("--pr", pr, "pr_curves.csv from eval");
  rep->add_option("--train", train, "train_report.json from pretrain/finetune");
  rep->add_option("--ablation", ablation, "ablation_summary.csv from ablate");
  rep->add_option("--gains", gains, "gains.csv from ablate");
  rep->add_option("-o,--out", out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  KeyValues flags;
  if (train_clips) flags["gen.train_clips"] = std::to_string(*train_clips);
  if (eval_clips) flags["gen.eval_clips"] = std::to_string(*eval_clips);
  if (n_tracks) flags["eval.n_tracks"] = std::to_string(*n_tracks);
  if (pooling) flags["eval.pooling_width"] = std::to_string(*pooling);
  if (!suite.empty()) flags["ablate.suite"] = suite;
  if (!seeds.empty()) flags["ablate.seeds"] = seeds;

  if (*rep) return cmd_report(pr, train, ablation, gains, out);
  const Settings s = resolve(common, flags);
  if (*gen) return cmd_gen(s, out);
  if (*pre) return cmd_pretrain(s, data, out);
  if (*fine) return cmd_finetune(s, data, checkpoint, scratch, out);
  if (*ev) return cmd_eval(s, checkpoint, data, split, out);
  if (*abl) return cmd_ablate(s, out);
  return kExitFailure;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  try {
    return run(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace lart::cli
