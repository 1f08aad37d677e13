#include "cclab/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cclab/eval.hpp"
#include "cclab/image.hpp"
#include "cclab/ops.hpp"
#include "cclab/pct.hpp"
#include "cclab/version.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;  // insertion order keeps echoes stable

namespace cclab {

namespace {

// ------------------------------------------------------------- plumbing ----

void write_text_file(const fs::path& path, const std::string& text, const char* what) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error(std::string("cannot open ") + what + " " + path.string());
  f << text;
  if (!f.flush()) throw std::runtime_error(std::string("failed writing ") + what + " " + path.string());
}

std::string slurp(const fs::path& path, const char* what) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error(std::string("cannot open ") + what + " " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// Relative output paths live under $CCLAB_OUT_ROOT when it is set; inputs
// are always taken as given.
fs::path resolve_out(const std::string& p) {
  fs::path out(p);
  if (out.is_relative())
    if (const char* root = std::getenv("CCLAB_OUT_ROOT"); root && *root) return fs::path(root) / out;
  return out;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

const char* direction_file_token(Direction d) {
  switch (d) {
    case Direction::NirToRgb: return "nir2rgb";
    case Direction::RgbToNir: return "rgb2nir";
    case Direction::ClothChange: return "cc";
  }
  throw std::logic_error("direction_file_token: bad enum value");
}

// -------------------------------------------------------- config schema ----

void set_mode_everywhere(RunConfig& c, Regime r) {
  c.data.regime = r;
  c.train.mode = r;
}

void set_seed_everywhere(RunConfig& c, std::uint64_t s) {
  c.data.seed = s;
  c.train.seed = s;
}

void apply_config_obj(RunConfig& c, const ojson& j) {
  if (!j.is_object()) throw std::invalid_argument("config: top level must be a JSON object");
  static const std::set<std::string> known = {
      "mode",          "variant",      "seed",         "epochs",       "steps_per_epoch",
      "lr0",           "momentum",     "weight_decay", "warmup_epochs", "decay_epochs",
      "decay_factor",  "p",            "k",            "use_nonlocal", "wrt_neg_sign",
      "crop_pad",      "pct_hidden",   "n_train_ids",  "n_test_ids",   "views",
      "clothing_sets", "images_per_cell"};
  for (const auto& item : j.items())
    if (!known.count(item.key()))
      throw std::invalid_argument("config: unknown key \"" + item.key() + "\"");

  if (j.contains("mode")) set_mode_everywhere(c, regime_from_string(j.at("mode").get<std::string>()));
  if (j.contains("variant")) c.train.variant = variant_from_string(j.at("variant").get<std::string>());
  if (j.contains("seed")) set_seed_everywhere(c, j.at("seed").get<std::uint64_t>());
  auto geti = [&j](const char* key, int& dst) {
    if (j.contains(key)) dst = j.at(key).get<int>();
  };
  auto getf = [&j](const char* key, float& dst) {
    if (j.contains(key)) dst = j.at(key).get<float>();
  };
  geti("epochs", c.train.epochs);
  geti("steps_per_epoch", c.train.steps_per_epoch);
  getf("lr0", c.train.lr0);
  getf("momentum", c.train.momentum);
  getf("weight_decay", c.train.weight_decay);
  geti("warmup_epochs", c.train.warmup_epochs);
  if (j.contains("decay_epochs")) c.train.decay_epochs = j.at("decay_epochs").get<std::vector<int>>();
  getf("decay_factor", c.train.decay_factor);
  geti("p", c.train.p);
  geti("k", c.train.k);
  if (j.contains("use_nonlocal")) c.train.use_nonlocal = j.at("use_nonlocal").get<bool>();
  getf("wrt_neg_sign", c.train.wrt_neg_sign);
  geti("crop_pad", c.train.crop_pad);
  geti("pct_hidden", c.train.pct_hidden);
  geti("n_train_ids", c.data.n_train_ids);
  geti("n_test_ids", c.data.n_test_ids);
  geti("views", c.data.views);
  geti("clothing_sets", c.data.clothing_sets);
  geti("images_per_cell", c.data.images_per_cell);
}

// Echo floats through their shortest round-trip decimal form: the dump stays
// short ("0.1", not the promoted double) and get<float>() recovers the exact
// stored value (the binary64 detour cannot disturb a binary32 round-trip).
double echo_num(float v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  *res.ptr = '\0';
  return std::strtod(buf, nullptr);
}

ojson config_to_json_obj(const RunConfig& c) {
  ojson j;
  j["mode"] = regime_name(c.train.mode);
  j["variant"] = variant_name(c.train.variant);
  j["seed"] = c.train.seed;
  j["epochs"] = c.train.epochs;
  j["steps_per_epoch"] = c.train.steps_per_epoch;
  j["lr0"] = echo_num(c.train.lr0);
  j["momentum"] = echo_num(c.train.momentum);
  j["weight_decay"] = echo_num(c.train.weight_decay);
  j["warmup_epochs"] = c.train.warmup_epochs;
  j["decay_epochs"] = c.train.decay_epochs;
  j["decay_factor"] = echo_num(c.train.decay_factor);
  j["p"] = c.train.p;
  j["k"] = c.train.k;
  j["use_nonlocal"] = c.train.use_nonlocal;
  j["wrt_neg_sign"] = echo_num(c.train.wrt_neg_sign);
  j["crop_pad"] = c.train.crop_pad;
  j["pct_hidden"] = c.train.pct_hidden;
  j["n_train_ids"] = c.data.n_train_ids;
  j["n_test_ids"] = c.data.n_test_ids;
  j["views"] = c.data.views;
  j["clothing_sets"] = c.data.clothing_sets;
  j["images_per_cell"] = c.data.images_per_cell;
  return j;
}

RunConfig load_config_file(const std::string& path) {
  RunConfig cfg;
  if (!path.empty()) apply_config_json(cfg, slurp(path, "config file"));
  return cfg;
}

void write_echo(const fs::path& path, const ojson& j) {
  write_text_file(path, j.dump(2) + "\n", "config echo");
}

// A training run directory is identified by its echoed config.
struct TrainRun {
  fs::path dir;
  RunConfig cfg;
  int n_classes = 0;
};

TrainRun load_train_run(const std::string& run_dir) {
  TrainRun r;
  r.dir = fs::path(run_dir);
  const ojson j = ojson::parse(slurp(r.dir / "config.json", "run config"));
  const std::string cmd = j.value("command", "");
  if (cmd != "train")
    throw std::invalid_argument(run_dir + "/config.json does not describe a training run (command \"" +
                                cmd + "\")");
  apply_config_obj(r.cfg, j.at("config"));
  r.n_classes = j.at("n_classes").get<int>();
  return r;
}

Model load_run_model(const TrainRun& r) {
  Model m = make_model(r.cfg.train, r.n_classes);
  load_model((r.dir / "model").string(), m);
  return m;
}

void check_dataset_mode(const std::string& data_dir, const DataBundle& b, Regime mode) {
  if (b.train_manifest.regime != mode)
    throw std::invalid_argument("dataset at " + data_dir + " was generated for regime \"" +
                                regime_name(b.train_manifest.regime) + "\" but this run uses \"" +
                                regime_name(mode) + "\"");
}

// ------------------------------------------------------------------ gen ----

struct GenArgs {
  std::string out, config;
  bool force = false;
  std::optional<std::string> regime;
  std::optional<std::uint64_t> seed;
  std::optional<int> n_train_ids, n_test_ids, views, clothing_sets, images_per_cell;
};

void print_manifest_summary(std::ostream& out, const char* split, const DatasetManifest& m) {
  std::set<int> ids, cloth, views;
  int rgb = 0, ir = 0;
  for (const ManifestRow& r : m.rows) {
    ids.insert(r.identity);
    cloth.insert(r.clothing);
    views.insert(r.view);
    (r.modality == Modality::RGB ? rgb : ir) += 1;
  }
  out << "  " << split << ": " << m.rows.size() << " images, " << ids.size() << " identities, "
      << rgb << " rgb / " << ir << " ir, " << cloth.size() << " clothing set(s), " << views.size()
      << " view(s)\n";
}

int cmd_gen(const GenArgs& a, std::ostream& out) {
  RunConfig cfg = load_config_file(a.config);
  if (a.regime) set_mode_everywhere(cfg, regime_from_string(*a.regime));
  if (a.seed) set_seed_everywhere(cfg, *a.seed);
  if (a.n_train_ids) cfg.data.n_train_ids = *a.n_train_ids;
  if (a.n_test_ids) cfg.data.n_test_ids = *a.n_test_ids;
  if (a.views) cfg.data.views = *a.views;
  if (a.clothing_sets) cfg.data.clothing_sets = *a.clothing_sets;
  if (a.images_per_cell) cfg.data.images_per_cell = *a.images_per_cell;

  const fs::path out_dir = resolve_out(a.out);
  if (fs::exists(out_dir) && !fs::is_empty(out_dir) && !a.force)
    throw std::invalid_argument("output directory " + out_dir.string() +
                                " is not empty (pass --force to overwrite)");
  fs::create_directories(out_dir);

  const GeneratedDataset ds = make_dataset(cfg.data, out_dir.string());

  ojson echo;
  echo["command"] = "gen";
  echo["out"] = out_dir.string();
  echo["config"] = config_to_json_obj(cfg);
  write_echo(out_dir / "config.json", echo);

  out << "dataset written to " << out_dir.string() << "\n";
  print_manifest_summary(out, "train", ds.train);
  print_manifest_summary(out, "test", ds.test);
  return 0;
}

// ---------------------------------------------------------------- train ----

struct TrainArgs {
  std::string data, out, config;
  std::optional<std::string> mode, variant;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs, steps, p, k;
  std::optional<float> lr0, neg_sign;
  bool no_nonlocal = false;
};

void apply_train_flags(RunConfig& cfg, const TrainArgs& a) {
  if (a.mode) set_mode_everywhere(cfg, regime_from_string(*a.mode));
  if (a.variant) cfg.train.variant = variant_from_string(*a.variant);
  if (a.seed) set_seed_everywhere(cfg, *a.seed);
  if (a.epochs) cfg.train.epochs = *a.epochs;
  if (a.steps) cfg.train.steps_per_epoch = *a.steps;
  if (a.p) cfg.train.p = *a.p;
  if (a.k) cfg.train.k = *a.k;
  if (a.lr0) cfg.train.lr0 = *a.lr0;
  if (a.neg_sign) cfg.train.wrt_neg_sign = *a.neg_sign;
  if (a.no_nonlocal) cfg.train.use_nonlocal = false;
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
  RunConfig cfg = load_config_file(a.config);
  apply_train_flags(cfg, a);
  validate_train_config(cfg.train);

  const fs::path out_dir = resolve_out(a.out);
  fs::create_directories(out_dir);

  const DataBundle bundle = load_bundle(a.data);
  check_dataset_mode(a.data, bundle, cfg.train.mode);
  PkSampler sampler(bundle.train_manifest, bundle.train_images);
  Model m = make_model(cfg.train, sampler.n_classes());

  ojson echo;
  echo["command"] = "train";
  echo["data"] = a.data;
  echo["out"] = out_dir.string();
  echo["n_classes"] = sampler.n_classes();
  echo["config"] = config_to_json_obj(cfg);
  write_echo(out_dir / "config.json", echo);

  const TrainResult res = train(m, sampler, bundle.train_images, cfg.train, &out);
  save_model((out_dir / "model").string(), m);
  write_training_log((out_dir / "training_log.csv").string(), res.log);

  const auto dirs = directions_for(cfg.train.mode);
  const auto reports = evaluate_model(m, bundle.test_manifest, bundle.test_images, dirs);
  for (const RetrievalReport& r : reports) {
    const std::string name = std::string("report_") + direction_file_token(r.direction) + ".csv";
    write_report_csv((out_dir / name).string(), {r});
    out << report_table(r);
  }
  out << "run written to " << out_dir.string() << "\n";
  return 0;
}

// ----------------------------------------------------------------- eval ----

struct EvalArgs {
  std::string run, data, direction = "auto", out;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const TrainRun run = load_train_run(a.run);
  const auto mode_dirs = directions_for(run.cfg.train.mode);

  std::vector<Direction> dirs;
  if (a.direction == "auto") {
    dirs = mode_dirs;
  } else if (a.direction == "both") {
    dirs = {Direction::NirToRgb, Direction::RgbToNir};
  } else {
    dirs = {direction_from_string(a.direction)};
  }
  for (Direction d : dirs)
    if (std::find(mode_dirs.begin(), mode_dirs.end(), d) == mode_dirs.end())
      throw std::invalid_argument(std::string("direction ") + direction_name(d) +
                                  " does not apply to a " + regime_name(run.cfg.train.mode) +
                                  " run");

  const fs::path out_dir = a.out.empty() ? run.dir : resolve_out(a.out);
  fs::create_directories(out_dir);

  const DataBundle bundle = load_bundle(a.data);
  check_dataset_mode(a.data, bundle, run.cfg.train.mode);
  Model m = load_run_model(run);
  const auto reports = evaluate_model(m, bundle.test_manifest, bundle.test_images, dirs);

  ojson echo;
  echo["command"] = "eval";
  echo["run"] = a.run;
  echo["data"] = a.data;
  echo["out"] = out_dir.string();
  ojson names = ojson::array();
  for (const RetrievalReport& r : reports) names.push_back(direction_name(r.direction));
  echo["directions"] = names;
  echo["config"] = config_to_json_obj(run.cfg);
  write_echo(out_dir / "eval_config.json", echo);

  for (const RetrievalReport& r : reports) {
    const std::string name = std::string("report_") + direction_file_token(r.direction) + ".csv";
    write_report_csv((out_dir / name).string(), {r});
    out << report_table(r);
  }
  out << "reports written to " << out_dir.string() << "\n";
  return 0;
}

// --------------------------------------------------------------- ablate ----

struct AblateArgs {
  std::string data, out, config;
  std::string rows = "baseline,ica,pct,ica+pct";
  std::optional<std::string> mode;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs, steps, p, k;
  bool both_neg_signs = false;
};

std::vector<std::string> parse_row_tokens(const std::string& rows) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char c : rows + ",") {
    if (c == ',') {
      while (!cur.empty() && cur.front() == ' ') cur.erase(cur.begin());
      while (!cur.empty() && cur.back() == ' ') cur.pop_back();
      if (!cur.empty()) tokens.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (tokens.empty()) throw std::invalid_argument("ablate: --rows names no variants");
  return tokens;
}

int cmd_ablate(const AblateArgs& a, std::ostream& out) {
  RunConfig base = load_config_file(a.config);
  if (a.mode) set_mode_everywhere(base, regime_from_string(*a.mode));
  if (a.seed) set_seed_everywhere(base, *a.seed);
  if (a.epochs) base.train.epochs = *a.epochs;
  if (a.steps) base.train.steps_per_epoch = *a.steps;
  if (a.p) base.train.p = *a.p;
  if (a.k) base.train.k = *a.k;

  const std::vector<std::string> tokens = parse_row_tokens(a.rows);
  std::vector<TrainConfig> grid;
  for (const std::string& tok : tokens) {
    TrainConfig row = base.train;
    row.variant = variant_from_string(tok);
    row.wrt_neg_sign = 1.0f;
    grid.push_back(row);
    if (a.both_neg_signs) {
      row.wrt_neg_sign = -1.0f;
      grid.push_back(row);
    }
  }

  const fs::path out_dir = resolve_out(a.out);
  fs::create_directories(out_dir);

  const DataBundle bundle = load_bundle(a.data);
  check_dataset_mode(a.data, bundle, base.train.mode);

  ojson echo;
  echo["command"] = "ablate";
  echo["data"] = a.data;
  echo["out"] = out_dir.string();
  echo["rows"] = tokens;
  echo["both_neg_signs"] = a.both_neg_signs;
  echo["config"] = config_to_json_obj(base);
  write_echo(out_dir / "config.json", echo);

  const auto rows = run_ablation(bundle, grid, &out);
  write_ablation_csv((out_dir / "ablation.csv").string(), rows);

  int failed = 0;
  for (const AblationRow& r : rows) {
    out << "  " << variant_name(r.variant) << (r.neg_sign < 0 ? " [wrt-]" : "") << "  "
        << direction_name(r.direction) << "  ";
    if (r.ok)
      out << "rank1=" << r.report.cmc[0] << " map=" << r.report.map << "\n";
    else
      out << "FAILED: " << r.error << "\n";
    failed += r.ok ? 0 : 1;
  }
  out << "table written to " << (out_dir / "ablation.csv").string() << "\n";
  if (failed > 0) {
    out << failed << " of " << rows.size() << " ablation rows failed\n";
    return 2;
  }
  return 0;
}

// ------------------------------------------------------------ pct-apply ----

struct PctApplyArgs {
  std::string run, images, out;
};

int cmd_pct_apply(const PctApplyArgs& a, std::ostream& out) {
  const TrainRun run = load_train_run(a.run);
  if (!variant_uses_pct(run.cfg.train.variant))
    throw std::invalid_argument("run " + a.run + " trained variant \"" +
                                variant_name(run.cfg.train.variant) +
                                "\" without the pixel transform");
  Model m = load_run_model(run);
  m.set_mode(BNMode::Eval);
  m.set_update_running(false);

  std::vector<fs::path> inputs;
  for (const auto& entry : fs::directory_iterator(a.images))
    if (entry.is_regular_file() && entry.path().extension() == ".png")
      inputs.push_back(entry.path());
  std::sort(inputs.begin(), inputs.end());
  if (inputs.empty()) throw std::invalid_argument("no .png images in " + a.images);

  const fs::path out_dir = resolve_out(a.out);
  fs::create_directories(out_dir);

  for (const fs::path& p : inputs) {
    const Tensor<float> px = read_png(p.string());
    const Stream stream = channels_identical(px) ? Stream::IR : Stream::RGB;
    Tensor<float> x({1, 3, px.dim(1), px.dim(2)});
    std::copy(px.data.begin(), px.data.end(), x.data.begin());
    const Tensor<float> y = pct_forward(x, stream, m.pct);
    Tensor<float> img({3, px.dim(1), px.dim(2)});
    std::copy(y.data.begin(), y.data.end(), img.data.begin());
    const fs::path dst = out_dir / (p.stem().string() + "_pct.png");
    write_png(dst.string(), minmax_rescale(img));
  }

  ojson echo;
  echo["command"] = "pct-apply";
  echo["run"] = a.run;
  echo["images"] = a.images;
  echo["out"] = out_dir.string();
  echo["config"] = config_to_json_obj(run.cfg);
  write_echo(out_dir / "pct_apply_config.json", echo);

  out << inputs.size() << " transformed image(s) written to " << out_dir.string() << "\n";
  return 0;
}

// --------------------------------------------------------------- export ----

struct ExportArgs {
  std::string report, out;
};

// Reshapes any of the three tabular outputs into one tidy series/x/y table.
// Values are copied verbatim so exports of byte-identical inputs are
// byte-identical.
int cmd_export(const ExportArgs& a, std::ostream& out) {
  const std::string text = slurp(a.report, "report");
  std::vector<std::string> lines;
  std::string cur;
  for (char c : text) {
    if (c == '\n') {
      lines.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) lines.push_back(cur);
  if (lines.empty()) throw std::invalid_argument("report " + a.report + " is empty");

  const std::string header = lines.front();
  std::ostringstream os;
  os << "series,x,y\n";
  int rows = 0;
  auto emit = [&os, &rows](const std::string& series, const std::string& x, const std::string& y) {
    os << series << ',' << x << ',' << y << '\n';
    ++rows;
  };

  if (header == "direction,k,value") {
    for (std::size_t i = 1; i < lines.size(); ++i) {
      const auto f = split_csv_line(lines[i]);
      if (f.size() != 3) throw std::invalid_argument("report: bad row \"" + lines[i] + "\"");
      const bool curve_point = !f[1].empty() && std::isdigit(static_cast<unsigned char>(f[1][0]));
      if (curve_point)
        emit(f[0] + " cmc", f[1], f[2]);
      else
        emit(f[0] + " " + f[1], "0", f[2]);
    }
  } else if (header == "variant,neg_sign,direction,rank1,rank5,rank10,rank20,map,status") {
    for (std::size_t i = 1; i < lines.size(); ++i) {
      const auto f = split_csv_line(lines[i]);
      if (f.size() != 9) throw std::invalid_argument("report: bad row \"" + lines[i] + "\"");
      if (f[8] != "ok") {
        out << "note: skipping failed row " << f[0] << " " << f[2] << "\n";
        continue;
      }
      const std::string series = f[0] + (f[1] == "-1" ? " [wrt-] " : " ") + f[2];
      const char* ks[] = {"1", "5", "10", "20"};
      for (int k = 0; k < 4; ++k) emit(series + " cmc", ks[k], f[static_cast<std::size_t>(3 + k)]);
      emit(series + " map", "0", f[7]);
    }
  } else if (header == "step,l_id,l_sq,l_total,mean_delta") {
    for (std::size_t i = 1; i < lines.size(); ++i) {
      const auto f = split_csv_line(lines[i]);
      if (f.size() != 5) throw std::invalid_argument("report: bad row \"" + lines[i] + "\"");
      emit("l_id", f[0], f[1]);
      emit("l_sq", f[0], f[2]);
      emit("l_total", f[0], f[3]);
      emit("mean_delta", f[0], f[4]);
    }
  } else {
    throw std::invalid_argument("unrecognized report header \"" + header +
                                "\" (expected a retrieval report, ablation table, or training log)");
  }

  const fs::path out_path = resolve_out(a.out);
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  write_text_file(out_path, os.str(), "plot table");
  out << rows << " rows written to " << out_path.string() << "\n";
  return 0;
}

}  // namespace

// ----------------------------------------------------------- public api ----

void apply_config_json(RunConfig& cfg, const std::string& json_text) {
  apply_config_obj(cfg, ojson::parse(json_text));
}

std::string config_to_json(const RunConfig& cfg) { return config_to_json_obj(cfg).dump(2) + "\n"; }

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"cross-color person re-identification laboratory"};
  app.set_version_flag("--version", std::string(version()));
  app.require_subcommand(1);

  GenArgs gen;
  CLI::App* c_gen = app.add_subcommand("gen", "generate a synthetic labeled dataset");
  c_gen->add_option("--out", gen.out, "dataset directory")->required();
  c_gen->add_option("--config", gen.config, "JSON config file");
  c_gen->add_option("--regime", gen.regime, "vi (two modalities) or cc (clothing change)");
  c_gen->add_option("--seed", gen.seed, "generator seed");
  c_gen->add_option("--n-train-ids", gen.n_train_ids, "training identities (>= 2)");
  c_gen->add_option("--n-test-ids", gen.n_test_ids, "test identities (>= 2)");
  c_gen->add_option("--views", gen.views, "camera views per identity");
  c_gen->add_option("--clothing-sets", gen.clothing_sets, "outfits per identity (0 = regime default)");
  c_gen->add_option("--images-per-cell", gen.images_per_cell, "images per identity/modality/outfit cell");
  c_gen->add_flag("--force", gen.force, "write into a non-empty directory");

  TrainArgs tr;
  CLI::App* c_train = app.add_subcommand("train", "train one variant and evaluate it");
  c_train->add_option("--data", tr.data, "dataset directory (from gen)")->required();
  c_train->add_option("--out", tr.out, "run directory for checkpoint, logs, and reports")->required();
  c_train->add_option("--config", tr.config, "JSON config file");
  c_train->add_option("--mode", tr.mode, "vi or cc");
  c_train->add_option("--variant", tr.variant, "baseline|cr|cs|gray|ica|pct|ica+pct");
  c_train->add_option("--seed", tr.seed, "run seed");
  c_train->add_option("--epochs", tr.epochs, "training epochs");
  c_train->add_option("--steps-per-epoch", tr.steps, "optimizer steps per epoch");
  c_train->add_option("--p", tr.p, "identities per batch");
  c_train->add_option("--k", tr.k, "images per identity per modality");
  c_train->add_option("--lr0", tr.lr0, "base learning rate");
  c_train->add_option("--neg-sign", tr.neg_sign, "negative-pair weighting sign (+1 or -1)");
  c_train->add_flag("--no-nonlocal", tr.no_nonlocal, "drop the attention block");

  EvalArgs ev;
  CLI::App* c_eval = app.add_subcommand("eval", "evaluate an existing run on a dataset");
  c_eval->add_option("--run", ev.run, "training run directory")->required();
  c_eval->add_option("--data", ev.data, "dataset directory")->required();
  c_eval->add_option("--direction", ev.direction,
                     "nir2rgb, rgb2nir, cc, both, or auto (all for the run's mode)");
  c_eval->add_option("--out", ev.out, "report directory (default: the run directory)");

  AblateArgs ab;
  CLI::App* c_ablate = app.add_subcommand("ablate", "train a variant grid and tabulate it");
  c_ablate->add_option("--data", ab.data, "dataset directory")->required();
  c_ablate->add_option("--out", ab.out, "output directory for the table")->required();
  c_ablate->add_option("--config", ab.config, "JSON config file (base row)");
  c_ablate->add_option("--rows", ab.rows, "comma-separated variant list");
  c_ablate->add_option("--mode", ab.mode, "vi or cc");
  c_ablate->add_option("--seed", ab.seed, "run seed shared by all rows");
  c_ablate->add_option("--epochs", ab.epochs, "training epochs per row");
  c_ablate->add_option("--steps-per-epoch", ab.steps, "optimizer steps per epoch");
  c_ablate->add_option("--p", ab.p, "identities per batch");
  c_ablate->add_option("--k", ab.k, "images per identity per modality");
  c_ablate->add_flag("--both-neg-signs", ab.both_neg_signs,
                     "duplicate every row with the negative-pair sign flipped");

  PctApplyArgs pa;
  CLI::App* c_pct = app.add_subcommand("pct-apply", "write pixel-transformed copies of a PNG directory");
  c_pct->add_option("--run", pa.run, "training run directory (must include the pixel transform)")
      ->required();
  c_pct->add_option("--images", pa.images, "directory of .png inputs")->required();
  c_pct->add_option("--out", pa.out, "output directory")->required();

  ExportArgs ex;
  CLI::App* c_export = app.add_subcommand("export", "reshape a metric CSV into a series/x/y table");
  c_export->add_option("--report", ex.report, "retrieval report, ablation table, or training log CSV")
      ->required();
  c_export->add_option("--out", ex.out, "output CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (c_gen->parsed()) return cmd_gen(gen, out);
    if (c_train->parsed()) return cmd_train(tr, out);
    if (c_eval->parsed()) return cmd_eval(ev, out);
    if (c_ablate->parsed()) return cmd_ablate(ab, out);
    if (c_pct->parsed()) return cmd_pct_apply(pa, out);
    if (c_export->parsed()) return cmd_export(ex, out);
    err << "error: no subcommand\n";
    return 1;
  } catch (const nlohmann::json::exception& e) {
    err << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::out_of_range& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv = {"cclab"};
  for (const std::string& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace cclab
