// nrssl: simulate noisy pseudo labels, analyze them, and train the toy
// classifier with hard or uncertainty-aware soft targets.
//
// Exit codes: 0 success, 1 usage or config error, 2 runtime failure.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "nrssl/analysis.hpp"
#include "nrssl/config.hpp"
#include "nrssl/dataset.hpp"
#include "nrssl/experiment.hpp"
#include "nrssl/records.hpp"
#include "nrssl/toy_trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace nrssl;

namespace {

constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kRuntime = 2;

// Raised for failures that are neither usage nor config errors.
struct RuntimeFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CommonArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> overrides;
  std::string data;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool takes_data) {
  cmd->add_option("--config", args.config_path, "JSON config file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", args.seed, "master seed; overrides the config file");
  cmd->add_option("--out", args.out, "output directory")->required();
  cmd->add_option("--override", args.overrides, "key=value, dotted key path; repeatable")
      ->take_all();
  if (takes_data)
    cmd->add_option("--data", args.data,
                    "dataset directory written by simulate; simulated in memory when omitted");
}

RunConfig resolve_config(const CommonArgs& args) {
  json doc = args.config_path.empty() ? to_json(RunConfig{}) : load_config_file(args.config_path);
  if (args.seed) doc["seed"] = *args.seed;
  for (const auto& o : args.overrides) apply_override(doc, o);
  return config_from_json(doc);
}

fs::path prepare_out(const std::string& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out)) throw RuntimeFailure("cannot create output directory " + out);
  return out;
}

template <typename Fn>
void write_file(const fs::path& path, Fn&& body) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw RuntimeFailure("cannot write " + path.string());
  body(os);
  if (!os) throw RuntimeFailure("write failed for " + path.string());
}

void write_json(const fs::path& path, const json& j) {
  write_file(path, [&](std::ostream& os) { os << j.dump(2) << '\n'; });
}

struct LoadedData {
  Dataset data;
  std::string source;
};

LoadedData load_or_simulate(const CommonArgs& args, const RunConfig& cfg) {
  if (args.data.empty()) return {simulate_dataset(cfg.simulation_config()), "simulated"};
  const fs::path dir = args.data;
  std::ifstream in(dir / "manifest.json", std::ios::binary);
  if (!in) throw SchemaError("dataset " + dir.string() + " has no manifest.json");
  json manifest;
  std::size_t classes = 0;
  try {
    manifest = json::parse(in);
    classes = manifest.at("config").at("scene").at("num_classes").get<std::size_t>();
  } catch (const json::exception& e) {
    throw SchemaError("dataset manifest: " + std::string(e.what()));
  }
  if (classes != cfg.simulation.scene.num_classes)
    throw SchemaError("dataset has " + std::to_string(classes) + " classes, config has " +
                      std::to_string(cfg.simulation.scene.num_classes));
  return {read_dataset(dir, classes), manifest.value("config_hash", std::string())};
}

json manifest_for(const RunConfig& cfg, const std::string& command,
                  const std::vector<std::string>& artifacts, const std::string& data_source) {
  json m = make_manifest(cfg, command, artifacts);
  if (!data_source.empty()) m["dataset"] = data_source;
  return m;
}

int cmd_simulate(const CommonArgs& args) {
  const RunConfig cfg = resolve_config(args);
  const fs::path out = prepare_out(args.out);
  const Dataset data = simulate_dataset(cfg.simulation_config());
  write_dataset(out, data);

  write_file(out / "summary.csv", [&](std::ostream& os) {
    os << "split,scenes,objects,pseudo_labels,clean_labels,proposals,positives,sampled\n";
    for (Split split : {Split::kTrain, Split::kHeldout}) {
      std::size_t scenes = 0, objects = 0, labels = 0, clean = 0, proposals = 0, pos = 0, sampled = 0;
      for (const auto& s : data.scenes) {
        if (s.split != split) continue;
        ++scenes;
        objects += s.scene.objects.size();
      }
      for (const auto& l : data.labels) {
        if (data.scenes[l.scene_id].split != split) continue;
        ++labels;
        clean += l.label.clean();
      }
      for (const auto& p : data.proposals) {
        if (p.split != split) continue;
        ++proposals;
        pos += p.assignment.is_positive;
        sampled += p.sampled;
      }
      os << to_string(split) << ',' << scenes << ',' << objects << ',' << labels << ',' << clean
         << ',' << proposals << ',' << pos << ',' << sampled << '\n';
    }
  });
  write_json(out / "manifest.json",
             manifest_for(cfg, "simulate",
                          {kScenesFile, kLabelsFile, kProposalsFile, "summary.csv"}, ""));
  std::cout << "simulate: " << data.scenes.size() << " scenes, " << data.labels.size()
            << " pseudo labels, " << data.proposals.size() << " proposals -> " << out.string()
            << '\n';
  return kOk;
}

int cmd_analyze(const CommonArgs& args) {
  const RunConfig cfg = resolve_config(args);
  const fs::path out = prepare_out(args.out);
  const auto loaded = load_or_simulate(args, cfg);
  const auto items = labeled_assignments(loaded.data.proposals, Split::kTrain);

  const auto curve = accuracy_vs_iou(items, cfg.analysis.iou_bins);
  const auto hists = u_histograms(items, cfg.schedule(), cfg.stages(), cfg.analysis.u_bins);
  write_file(out / "accuracy_curve.csv", [&](std::ostream& os) { write_accuracy_csv(os, curve); });
  write_file(out / "u_histograms.csv", [&](std::ostream& os) { write_histogram_csv(os, hists); });

  json stages = json::array();
  for (const auto& h : hists) {
    stages.push_back({{"stage", to_string(h.stage)},
                      {"iteration", h.iteration},
                      {"clean_mean", h.clean_mean},
                      {"clean_sem", h.clean_sem},
                      {"noisy_mean", h.noisy_mean},
                      {"noisy_sem", h.noisy_sem},
                      {"population_mean", h.population_mean}});
  }
  write_json(out / "u_summary.json", {{"proposals", items.size()}, {"stages", stages}});
  write_json(out / "manifest.json",
             manifest_for(cfg, "analyze", {"accuracy_curve.csv", "u_histograms.csv", "u_summary.json"},
                          loaded.source));
  for (const auto& h : hists) {
    std::cout << to_string(h.stage) << " (t=" << h.iteration << "): mean u clean "
              << format_real(h.clean_mean) << ", noisy " << format_real(h.noisy_mean) << '\n';
  }
  return kOk;
}

int cmd_train(const CommonArgs& args) {
  const RunConfig cfg = resolve_config(args);
  const fs::path out = prepare_out(args.out);
  const auto loaded = load_or_simulate(args, cfg);
  const auto run = train_and_evaluate(loaded.data, cfg.train_config());

  write_file(out / "metrics.csv", [&](std::ostream& os) { write_trace_csv(os, run.result.trace); });
  write_json(out / "model.json", to_json(run.result.model));
  write_json(out / "report.json", to_json(run.report));
  write_json(out / "manifest.json",
             manifest_for(cfg, "train", {"metrics.csv", "model.json", "report.json"}, loaded.source));
  std::cout << "train " << to_string(cfg.train.head) << '/' << to_string(cfg.train.targets)
            << ": held-out clean accuracy " << format_real(run.report.clean_accuracy) << '\n';
  return kOk;
}

int cmd_compare(const CommonArgs& args) {
  const RunConfig cfg = resolve_config(args);
  const fs::path out = prepare_out(args.out);
  const auto loaded = load_or_simulate(args, cfg);
  const auto grid = compare_grid(loaded.data, cfg.train_config(), cfg.compare.seeds,
                                 [&](std::size_t i) { return cfg.train_config(i).seed; });

  write_file(out / "compare.csv", [&](std::ostream& os) { write_grid_csv(os, grid); });
  write_json(out / "compare.json", to_json(grid));
  write_json(out / "manifest.json",
             manifest_for(cfg, "compare", {"compare.csv", "compare.json"}, loaded.source));
  for (const auto& c : grid.cells) {
    std::cout << to_string(c.head) << '/' << to_string(c.targets) << ": "
              << format_real(c.mean()) << " +- " << format_real(c.stddev()) << '\n';
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Region-uncertainty soft targets for noisy pseudo labels"};
  app.require_subcommand(1);

  CommonArgs args;
  auto* simulate = app.add_subcommand("simulate", "generate scenes, pseudo labels and proposals");
  auto* analyze = app.add_subcommand("analyze", "assignment accuracy curve and u histograms");
  auto* train = app.add_subcommand("train", "train one toy classifier");
  auto* compare = app.add_subcommand("compare", "hard/soft x softmax/sigmoid grid over paired seeds");
  add_common(simulate, args, false);
  add_common(analyze, args, true);
  add_common(train, args, true);
  add_common(compare, args, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (simulate->parsed()) return cmd_simulate(args);
    if (analyze->parsed()) return cmd_analyze(args);
    if (train->parsed()) return cmd_train(args);
    if (compare->parsed()) return cmd_compare(args);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kUsage;
  } catch (const SchemaError& e) {
    std::cerr << "dataset error: " << e.what() << '\n';
    return kRuntime;
  } catch (const TrainingDiverged& e) {
    std::cerr << "training diverged: " << e.what() << '\n';
    return kRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kUsage;
}
