#include "commands.h"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include <cap/binary_io.h>
#include <cap/errors.h>
#include <cap/feature_bank.h>
#include <cap/heatmap.h>
#include <cap/model.h>
#include <cap/parallel.h>
#include <cap/scoring.h>
#include <cap/synthetic.h>
#include <cap/trainer.h>

#include "run_config.h"

namespace fs = std::filesystem;

namespace cap::cli {

namespace {

// Values given on the command line, keyed like the config file.
struct FlagValues {
  std::string config_path;
  std::map<std::string, std::string> values;
  bool no_attention = false;
};

struct Invocation {
  RunConfig config;
  bool k_explicit = false;
};

Invocation resolve(const FlagValues& flags, const std::map<std::string, std::string>& storage,
                   const std::map<std::string, CLI::Option*>& options) {
  Invocation inv;
  std::vector<std::pair<std::string, std::string>> file_entries;
  if (!flags.config_path.empty()) {
    RunConfig probe;
    const std::string text = io::read_file(flags.config_path);
    apply_config_text(probe, text);  // validates every key up front
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) {
      if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      auto strip = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return std::string();
        return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
      };
      file_entries.emplace_back(strip(line.substr(0, eq)), strip(line.substr(eq + 1)));
    }
  }

  const auto given = [&](const std::string& key) {
    const auto it = options.find(key);
    return it != options.end() && it->second->count() > 0;
  };

  std::optional<std::string> preset;
  for (const auto& [k, v] : file_entries) {
    if (k == "preset") preset = v;
  }
  if (given("preset")) preset = storage.at("preset");
  if (preset) apply_setting(inv.config, "preset", *preset);

  for (const auto& [k, v] : file_entries) {
    if (k == "preset") continue;
    apply_setting(inv.config, k, v);
    if (k == "k") inv.k_explicit = true;
  }
  for (const auto& [key, opt] : options) {
    if (key == "preset" || opt->count() == 0) continue;
    apply_setting(inv.config, key, storage.at(key));
    if (key == "k") inv.k_explicit = true;
  }
  if (flags.no_attention) inv.config.training.attention_enabled = false;
  inv.config.training.workers = worker_count();
  return inv;
}

fs::path require_path(const fs::path& p, const char* flag) {
  if (p.empty()) throw ConfigError(std::string("missing required ") + flag);
  return p;
}

fs::path prepare_out(const RunConfig& c) {
  const fs::path out = require_path(c.out, "--out");
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw DataError("cannot create output directory " + out.string() + ": " + ec.message());
  io::write_file(out / "config.txt", resolved_config_text(c));
  return out;
}

// Resolved settings stored inside a model file. File locations are left out so
// that identical runs written to different directories produce identical bytes.
std::string model_metadata(const RunConfig& c) {
  static constexpr std::string_view kPathKeys[] = {"bank=", "model=", "test=", "maps=", "input=", "out="};
  std::istringstream in(resolved_config_text(c));
  std::string meta;
  for (std::string line; std::getline(in, line);) {
    bool is_path = false;
    for (const auto key : kPathKeys) is_path |= line.rfind(key, 0) == 0;
    if (!is_path) meta += line + '\n';
  }
  return meta;
}

std::string fmt(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

// The trained model records its resolved config; reuse its k unless overridden.
std::size_t resolve_k(const Invocation& inv, const std::string& model_metadata) {
  if (inv.k_explicit) return inv.config.training.k;
  std::istringstream in(model_metadata);
  for (std::string line; std::getline(in, line);) {
    if (line.rfind("k=", 0) == 0) {
      std::size_t k = 0;
      const auto res = std::from_chars(line.data() + 2, line.data() + line.size(), k);
      if (res.ec == std::errc() && k > 0) return k;
    }
  }
  return inv.config.training.k;
}

FeatureSet read_csv_features(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<Vector> rows;
  std::vector<std::string> ids;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    for (std::string f; std::getline(ss, f, ',');) fields.push_back(f);
    if (line_no == 1 && !fields.empty() && fields[0] == "id") continue;
    if (fields.size() < 2) throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected id,v1,...,vD");
    Vector v(static_cast<Eigen::Index>(fields.size() - 1));
    for (std::size_t i = 1; i < fields.size(); ++i) {
      const auto& f = fields[i];
      double x = 0.0;
      const auto res = std::from_chars(f.data(), f.data() + f.size(), x);
      if (res.ec != std::errc() || res.ptr != f.data() + f.size()) {
        throw DataError(path.string() + ":" + std::to_string(line_no) + ": bad number \"" + f + "\"");
      }
      v[static_cast<Eigen::Index>(i - 1)] = x;
    }
    ids.push_back(fields[0]);
    rows.push_back(std::move(v));
  }
  return FeatureSet{build_bank(rows, std::move(ids), {{"source", path.filename().string()}}), std::nullopt};
}

// ---------------------------------------------------------------------------
// Subcommands

int cmd_synth(const Invocation& inv, std::ostream& out) {
  RunConfig c = inv.config;
  c.synth.seed = c.training.seed;
  const fs::path dir = prepare_out(c);
  const SyntheticInstance inst = generate_instance(c.synth);
  save_bank(inst.train, dir / "train.capb");
  save_feature_set(inst.test, dir / "test.capb");
  out << "wrote " << (dir / "train.capb").string() << " (" << inst.train.size() << " x " << inst.train.dim() << ") and "
      << (dir / "test.capb").string() << " (" << inst.test.features.size() << " rows)\n";
  return kExitOk;
}

int cmd_build_bank(const Invocation& inv, bool from_synth, const std::string& extractor, std::ostream& out) {
  const RunConfig& c = inv.config;
  const fs::path dir = prepare_out(c);
  MemoryBank bank = [&] {
    if (from_synth) {
      SyntheticSpec spec = c.synth;
      spec.seed = c.training.seed;
      return generate_instance(spec).train;
    }
    const fs::path input = require_path(c.input, "--input");
    if (input.extension() == ".csv") {
      FeatureSet fs_in = read_csv_features(input);
      Provenance prov = fs_in.features.provenance();
      if (!extractor.empty()) prov["extractor"] = extractor;
      return MemoryBank(fs_in.features.items(), fs_in.features.ids(), prov);
    }
    return load_bank(input);
  }();
  save_bank(bank, dir / "bank.capb");
  out << "wrote " << (dir / "bank.capb").string() << " (" << bank.size() << " x " << bank.dim() << ")\n";
  return kExitOk;
}

int cmd_train(const Invocation& inv, std::ostream& out) {
  RunConfig c = inv.config;
  const MemoryBank bank = load_bank(require_path(c.bank, "--bank"));
  std::optional<FeatureSet> holdout;
  if (!c.test.empty()) holdout = load_feature_set(c.test);
  c.model = c.out / "model.capm";
  const fs::path dir = prepare_out(c);
  const TrainResult result = train(bank, c.training, holdout ? &*holdout : nullptr);
  std::string meta = model_metadata(c);
  meta += "epochs_trained=" + std::to_string(result.trace.epochs.size()) + "\n";
  meta += "init=head:identity,attention:gaussian(0,1/sqrt(D))\n";
  save_model(result.model, dir / "model.capm", meta);
  io::write_file(dir / "trace.csv", result.trace.to_csv());
  out << "trained " << result.trace.epochs.size() << " epochs; wrote " << (dir / "model.capm").string() << '\n';
  return kExitOk;
}

int cmd_score(const Invocation& inv, std::ostream& out, bool with_eval) {
  RunConfig c = inv.config;
  std::string meta;
  const ModelParams model = load_model(require_path(c.model, "--model"), &meta);
  const MemoryBank bank = load_bank(require_path(c.bank, "--bank"));
  const FeatureSet test = load_feature_set(require_path(c.test, "--test"));
  c.training.k = resolve_k(inv, meta);
  if (model.dim != bank.dim()) throw DataError("model dimension does not match bank dimension");
  const fs::path dir = prepare_out(c);
  const ScoreReport report = evaluate(model, bank, test, c.training.k, c.training.workers);
  io::write_file(dir / "scores.csv", score_csv(report));
  if (with_eval) {
    ScoreReport baseline = report;
    baseline.scores = report.baseline_scores;
    io::write_file(dir / "baseline_scores.csv", score_csv(baseline));
    io::write_file(dir / "summary.txt", summary_text(report));
    out << summary_text(report);
  } else {
    out << "scored " << report.scores.size() << " queries; wrote " << (dir / "scores.csv").string() << '\n';
  }
  return kExitOk;
}

int cmd_ablate(const Invocation& inv, std::ostream& out) {
  const RunConfig& c = inv.config;
  if (c.sweep.empty()) throw ConfigError("missing required --sweep {k,lambda}");
  const MemoryBank bank = load_bank(require_path(c.bank, "--bank"));
  const FeatureSet test = load_feature_set(require_path(c.test, "--test"));
  const fs::path dir = prepare_out(c);

  const std::vector<double> points = c.sweep == "k" ? std::vector<double>{1, 4, 8, 16, 32, 64}
                                                    : std::vector<double>{0, 0.1, 1, 2, 10, 100};
  std::ostringstream table;
  table << "sweep,value,auroc,baseline_auroc,normal_mean,anomaly_mean,gap,head_frobenius\n";
  for (double p : points) {
    RunConfig point = c;
    std::string label;
    if (c.sweep == "k") {
      point.training.k = static_cast<std::size_t>(p);
      label = "k_" + std::to_string(point.training.k);
    } else {
      point.training.lambda = p;
      label = "lambda_" + fmt(p);
    }
    if (point.training.k >= bank.size()) {
      out << "skipping " << label << ": bank too small\n";
      continue;
    }
    point.out = dir / label;
    fs::create_directories(point.out);
    io::write_file(point.out / "config.txt", resolved_config_text(point));
    const TrainResult result = train(bank, point.training, &test);
    save_model(result.model, point.out / "model.capm", model_metadata(point));
    io::write_file(point.out / "trace.csv", result.trace.to_csv());
    const ScoreReport report = evaluate(result.model, bank, test, point.training.k, point.training.workers);
    io::write_file(point.out / "summary.txt", summary_text(report));
    const auto opt = [](const std::optional<double>& v) { return v ? fmt(*v) : std::string(); };
    table << c.sweep << ',' << fmt(p) << ',' << opt(report.auroc) << ',' << opt(report.baseline_auroc) << ','
          << fmt(report.normal.mean) << ',' << fmt(report.anomaly.mean) << ','
          << fmt(report.anomaly.mean - report.normal.mean) << ',' << fmt(head_frobenius(result.model)) << '\n';
    out << label << " auroc=" << opt(report.auroc) << " baseline_auroc=" << opt(report.baseline_auroc) << '\n';
  }
  io::write_file(dir / "sweep.csv", table.str());
  return kExitOk;
}

int cmd_heatmap(const Invocation& inv, std::ostream& out) {
  RunConfig c = inv.config;
  std::string meta;
  const ModelParams model = load_model(require_path(c.model, "--model"), &meta);
  const MemoryBank bank = load_bank(require_path(c.bank, "--bank"));
  const SpatialMapFile maps = load_spatial_maps(require_path(c.maps, "--maps"));
  c.training.k = resolve_k(inv, meta);
  if (maps.maps.front().dim() != bank.dim() || model.dim != bank.dim()) {
    throw DataError("spatial-map dimension does not match bank/model dimension");
  }
  const fs::path dir = prepare_out(c);
  std::ostringstream index;
  index << "index,id,score,min,max\n";
  for (std::size_t i = 0; i < maps.maps.size(); ++i) {
    const SpatialFeatureMap& map = maps.maps[i];
    const Vector z = map.pooled();
    const NeighborSet nbrs = top_k_neighbors(bank, z, c.training.k);
    const ForwardOutput fwd = forward(model, z, nbrs);
    const double score = score_with_neighbors(model, z, nbrs.matrix).score;
    const HeatmapResult hm = anomaly_heatmap(z, fwd.z_normal, map, c.heatmap_size, c.heatmap_size);
    const std::string stem = "heatmap_" + std::to_string(i);
    io::write_file(dir / (stem + ".pgm"), to_pgm(hm.upsampled, hm.min, hm.max));
    io::write_file(dir / (stem + ".csv"), to_csv_grid(hm.raw_grid));
    index << i << ',' << map.source_id << ',' << fmt(score) << ',' << fmt(hm.min) << ',' << fmt(hm.max) << '\n';
  }
  io::write_file(dir / "heatmaps.csv", index.str());
  out << "wrote " << maps.maps.size() << " heatmaps to " << dir.string() << '\n';
  return kExitOk;
}

std::string one_line(std::string s) {
  for (char& ch : s) {
    if (ch == '\n' || ch == '\r') ch = ' ';
  }
  return s;
}

int report_error(std::ostream& err, int code, const char* kind, const std::string& message) {
  err << "error code=" << code << " kind=" << kind << " message=" << one_line(message) << '\n';
  return code;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"CAP anomaly-detection engine"};
  app.require_subcommand(1);

  const std::vector<std::string> training_keys = {"preset", "k", "lambda", "lr", "batch", "epochs", "seed", "head"};

  struct Sub {
    CLI::App* app;
    FlagValues flags;
    std::map<std::string, std::string> storage;
    std::map<std::string, CLI::Option*> options;
  };
  std::map<std::string, Sub> subs;
  bool from_synth = false;
  std::string extractor;

  const auto define = [&](const std::string& name, const std::string& help, std::vector<std::string> keys) {
    Sub& s = subs[name];
    s.app = app.add_subcommand(name, help);
    s.app->add_option("--config", s.flags.config_path, "key=value configuration file");
    for (const auto& key : keys) s.options[key] = s.app->add_option("--" + key, s.storage[key]);
    return &s;
  };

  std::vector<std::string> keys = training_keys;
  keys.insert(keys.end(), {"out"});
  Sub* synth = define("synth", "generate a synthetic instance (train bank + labelled test set)", keys);

  keys = training_keys;
  keys.insert(keys.end(), {"input", "out"});
  Sub* build = define("build-bank", "build a bank file from a CSV feature file or the synthetic suite", keys);
  build->app->add_flag("--synth", from_synth, "use the synthetic generator with --seed");
  build->app->add_option("--extractor", extractor, "extractor name recorded in provenance");

  keys = training_keys;
  keys.insert(keys.end(), {"bank", "test", "out"});
  Sub* trn = define("train", "train a model on a bank", keys);
  trn->app->add_flag("--no-attention", trn->flags.no_attention, "disable the attention module");

  keys = training_keys;
  keys.insert(keys.end(), {"model", "bank", "test", "out"});
  Sub* score = define("score", "score queries with a trained model", keys);
  Sub* eval = define("eval", "score a labelled set and report adapted and baseline AUROC", keys);

  keys = training_keys;
  keys.insert(keys.end(), {"bank", "test", "out", "sweep"});
  Sub* ablate = define("ablate", "retrain across a k or lambda sweep", keys);
  ablate->app->add_flag("--no-attention", ablate->flags.no_attention, "disable the attention module");

  keys = training_keys;
  keys.insert(keys.end(), {"model", "bank", "maps", "out"});
  Sub* heat = define("heatmap", "write anomaly heatmaps for spatial feature maps", keys);
  heat->options["heatmap_size"] = heat->app->add_option("--size", heat->storage["heatmap_size"], "output side length");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    return report_error(err, kExitUsage, "usage", e.what());
  }

  try {
    for (auto& [name, s] : subs) {
      if (!s.app->parsed()) continue;
      const Invocation inv = resolve(s.flags, s.storage, s.options);
      if (name == "synth") return cmd_synth(inv, out);
      if (name == "build-bank") return cmd_build_bank(inv, from_synth, extractor, out);
      if (name == "train") return cmd_train(inv, out);
      if (name == "score") return cmd_score(inv, out, false);
      if (name == "eval") return cmd_score(inv, out, true);
      if (name == "ablate") return cmd_ablate(inv, out);
      if (name == "heatmap") return cmd_heatmap(inv, out);
    }
  } catch (const ConfigError& e) {
    return report_error(err, kExitUsage, "usage", e.what());
  } catch (const NumericalError& e) {
    return report_error(err, kExitNumerical, "numerical", e.what());
  } catch (const DataError& e) {
    return report_error(err, kExitData, "data", e.what());
  } catch (const std::exception& e) {
    return report_error(err, kExitData, "data", e.what());
  }
  return report_error(err, kExitUsage, "usage", "no subcommand");
}

}  // namespace cap::cli
