// corrstruct: synthetic data, structure learning, evaluation and matching.
#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "corrstruct/config.hpp"
#include "corrstruct/dataset.hpp"
#include "corrstruct/error.hpp"
#include "corrstruct/imaging.hpp"
#include "corrstruct/matching.hpp"
#include "corrstruct/metric.hpp"
#include "corrstruct/pipeline.hpp"
#include "corrstruct/structure.hpp"
#include "corrstruct/synthetic.hpp"

namespace fs = std::filesystem;
using namespace corrstruct;

namespace {

struct ConfigArgs {
  std::string path;
  std::vector<std::string> overrides;  // key=value

  RunConfig load() const {
    RunConfig cfg = path.empty() ? RunConfig{} : load_config(path);
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ArgumentError("--set expects key=value, got '" + kv + "'");
      apply_setting(cfg, detail::trim(kv.substr(0, eq)), detail::trim(kv.substr(eq + 1)));
    }
    cfg.validate();
    return cfg;
  }

  void attach(CLI::App* cmd) {
    cmd->add_option("-c,--config", path, "key = value config file");
    cmd->add_option("--set", overrides, "override one config key (key=value), repeatable");
  }
};

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

int run_synth(const SyntheticSpec& spec, const fs::path& out) {
  const auto m = generate_synthetic(spec, out);
  std::printf("identities,%zu\nmanifest,%s\n", m.identities.size(), (out / "manifest.csv").string().c_str());
  return 0;
}

int run_train(const fs::path& manifest_path, const ConfigArgs& ca, const fs::path& out) {
  const RunConfig cfg = ca.load();
  const auto manifest = load_manifest(manifest_path);
  const auto plan = make_splits(static_cast<int>(manifest.identities.size()), cfg.split_seed, cfg.repeats);
  const auto features = load_features(manifest, cfg);
  const SplitModel sm = train_split(features, plan.splits[static_cast<std::size_t>(cfg.split)], cfg);
  ensure_dir(out);
  save_structure(sm.learned.structure, out / "structure.bin");
  export_structure_csv(sm.learned.structure, out / "structure.csv");
  write_diagnostics_csv(sm.learned.diagnostics, out / "diagnostics.csv");
  save_metric(sm.metric, out / "metric.bin");
  for (const auto& w : sm.learned.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  const auto& last = sm.learned.diagnostics.back();
  std::printf("iterations,%d\nconverged,%d\ndelta,%s\n", last.iteration, sm.learned.converged ? 1 : 0,
              format_double(last.delta).c_str());
  return 0;
}

int run_evaluate(const fs::path& manifest_path, const ConfigArgs& ca, const fs::path& out,
                 const std::vector<std::string>& arm_names) {
  const RunConfig cfg = ca.load();
  std::vector<Arm> arms;
  if (arm_names.empty()) {
    arms.assign(std::begin(kAllArms), std::end(kAllArms));
  } else {
    for (const auto& a : arm_names) arms.push_back(parse_arm(a));
  }
  const auto manifest = load_manifest(manifest_path);
  const auto plan = make_splits(static_cast<int>(manifest.identities.size()), cfg.split_seed, cfg.repeats);
  const auto features = load_features(manifest, cfg);
  const auto reports = run_ablation(features, plan, arms, cfg, [&](int s, const SplitModel&) {
    std::fprintf(stderr, "split %d/%d done\n", s + 1, cfg.repeats);
  });
  ensure_dir(out);
  for (const auto& r : reports) {
    write_cmc_csv(r, cfg.cmc_ranks, out / ("cmc_" + arm_name(r.arm) + ".csv"));
    std::printf("%s,cmc1,%s\n", arm_name(r.arm).c_str(), format_double(r.mean.at(1)).c_str());
  }
  return 0;
}

int run_match(const fs::path& probe_path, const fs::path& gallery_path, const fs::path& structure_path,
              const fs::path& metric_path, const ConfigArgs& ca, const std::string& arm_text) {
  const RunConfig cfg = ca.load();
  const Arm arm = parse_arm(arm_text);
  if (arm == Arm::SimpleAverage) throw ArgumentError("match supports no-structure, no-global and proposed");
  const auto structure = load_structure(structure_path);
  const auto model = load_metric(metric_path);
  if (model.locations() != structure.probe_count()) {
    throw ValidationError("metric has " + std::to_string(model.locations()) + " locations but the structure has " +
                          std::to_string(structure.probe_count()) + " probe patches");
  }
  const auto probe = prepare_probe(
      model, extract_descriptors(scale_to_canonical(load_image(probe_path), structure.probe_grid),
                                 structure.probe_grid, cfg.descriptor));
  const auto gallery = prepare_gallery(
      model, extract_descriptors(scale_to_canonical(load_image(gallery_path), structure.gallery_grid),
                                 structure.gallery_grid, cfg.descriptor));
  const MatchSupport support = arm == Arm::NoStructure
                                   ? colocated_support(structure.probe_grid, structure.gallery_grid)
                                   : gated_support(structure, cfg.learner.gate);
  const CorrelationMatrix c = correlation_matrix(probe, gallery, support, model);
  const Assignment a = arm == Arm::NoGlobal ? greedy_assignment(c, cfg.learner.penalty)
                                            : solve_assignment(c, cfg.learner.penalty);
  std::printf("psi,%s\n", format_double(a.score).c_str());
  std::printf("i,j,c\n");
  for (const auto& [i, j] : a.pairs()) std::printf("%d,%d,%s\n", i, j, format_double(*c.at(i, j)).c_str());
  return 0;
}

int run_export(const fs::path& structure_path, const fs::path& out) {
  export_structure_csv(load_structure(structure_path), out);
  return 0;
}

int fail(const char* kind, const std::string& message, int code) {
  std::string flat = message;
  for (char& ch : flat)
    if (ch == '\n' || ch == '\r') ch = ' ';
  std::fprintf(stderr, "error: %s: %s\n", kind, flat.c_str());
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learned correspondence structures for person re-identification"};
  app.require_subcommand(1);

  SyntheticSpec spec;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "render a synthetic camera pair with a known vertical shift");
  synth->add_option("-o,--out", synth_out, "output directory")->required();
  synth->add_option("--identities", spec.identities, "identity count")->capture_default_str();
  synth->add_option("--shift", spec.shift_rows, "camera B shift in gallery rows")->capture_default_str();
  synth->add_option("--noise", spec.noise, "camera B noise amplitude, fraction of 255")->capture_default_str();
  synth->add_option("--seed", spec.seed, "generator seed")->capture_default_str();
  synth->add_option("--outfits", spec.outfits, "distinct outfits shared among identities")->capture_default_str();

  ConfigArgs train_cfg, eval_cfg, match_cfg;
  std::string train_manifest, train_out;
  auto* train = app.add_subcommand("train", "learn the structure for one split");
  train->add_option("-m,--manifest", train_manifest, "dataset manifest CSV")->required();
  train->add_option("-o,--out", train_out, "run directory")->required();
  train_cfg.attach(train);

  std::string eval_manifest, eval_out;
  std::vector<std::string> eval_arms;
  auto* evaluate = app.add_subcommand("evaluate", "ablation over all splits, one CMC CSV per arm");
  evaluate->add_option("-m,--manifest", eval_manifest, "dataset manifest CSV")->required();
  evaluate->add_option("-o,--out", eval_out, "run directory")->required();
  evaluate->add_option("--arms", eval_arms, "subset of no-structure, simple-average, no-global, proposed");
  eval_cfg.attach(evaluate);

  std::string probe_path, gallery_path, structure_path, metric_path, arm_text = "proposed";
  auto* match = app.add_subcommand("match", "match two images; prints psi and the patch pairs");
  match->add_option("--probe", probe_path, "camera A image (PPM)")->required();
  match->add_option("--gallery", gallery_path, "camera B image (PPM)")->required();
  match->add_option("-s,--structure", structure_path, "structure.bin")->required();
  match->add_option("--metric", metric_path, "metric.bin")->required();
  match->add_option("--arm", arm_text, "proposed, no-global or no-structure")->capture_default_str();
  match_cfg.attach(match);

  std::string export_in, export_out;
  auto* exporter = app.add_subcommand("export-structure", "write a structure as a CSV heat map");
  exporter->add_option("-s,--structure", export_in, "structure.bin")->required();
  exporter->add_option("-o,--out", export_out, "output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    return fail("argument", e.what(), ArgumentError("").exit_code());
  }

  try {
    if (*synth) return run_synth(spec, synth_out);
    if (*train) return run_train(train_manifest, train_cfg, train_out);
    if (*evaluate) return run_evaluate(eval_manifest, eval_cfg, eval_out, eval_arms);
    if (*match) return run_match(probe_path, gallery_path, structure_path, metric_path, match_cfg, arm_text);
    if (*exporter) return run_export(export_in, export_out);
  } catch (const Error& e) {
    return fail(e.kind(), e.what(), e.exit_code());
  } catch (const std::exception& e) {
    return fail("internal", e.what(), 1);
  }
  return 0;
}
