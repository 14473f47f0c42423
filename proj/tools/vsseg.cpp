#include <CLI11.hpp>
#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>

#include "vsseg/error.hpp"
#include "vsseg/inference.hpp"
#include "vsseg/mnet.hpp"
#include "vsseg/nifti.hpp"
#include "vsseg/overlay.hpp"
#include "vsseg/phantom.hpp"
#include "vsseg/pipeline.hpp"
#include "vsseg/run_config.hpp"

namespace {

using namespace vsseg;
namespace fs = std::filesystem;

struct Common {
  std::string config;
  std::optional<uint64_t> seed;
  std::string out;
  std::vector<std::string> overrides;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "run configuration file (INI key-value)");
    app->add_option("--seed", seed, "override run.seed");
    app->add_option("--out", out, "override run.work_dir");
    app->add_option("--set", overrides, "override one key, e.g. --set segmentation.epochs=5");
  }

  RunConfig resolve() const {
    RunConfig cfg = config.empty() ? RunConfig::desk() : RunConfig::load(config);
    if (seed) cfg.seed = *seed;
    if (!out.empty()) cfg.work_dir = out;
    for (const std::string& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
      cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    cfg.validate();
    return cfg;
  }
};

std::vector<fs::path> split_paths(const std::string& text) {
  std::vector<fs::path> out;
  std::stringstream s(text);
  std::string item;
  while (std::getline(s, item, ',')) {
    if (!item.empty()) out.emplace_back(item);
  }
  return out;
}

void print_stage(const StageResult& r) {
  std::cout << to_string(r.stage) << ": " << r.summary << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vsseg: unpaired cross-modality vestibular schwannoma and cochlea segmentation"};
  app.require_subcommand(1);

  // phantom generate
  auto* phantom = app.add_subcommand("phantom", "synthetic two-modality dataset");
  phantom->require_subcommand(1);
  auto* phantom_gen = phantom->add_subcommand("generate", "write phantom cases as NIfTI files");
  int64_t phantom_n = 6;
  uint64_t phantom_seed = 7;
  std::string phantom_size = "48x48x24", phantom_out;
  phantom_gen->add_option("--n", phantom_n, "number of cases")->check(CLI::NonNegativeNumber);
  phantom_gen->add_option("--seed", phantom_seed, "generator seed");
  phantom_gen->add_option("--size", phantom_size, "volume size XxYxZ");
  phantom_gen->add_option("out_dir", phantom_out, "output directory")->required();

  // config-driven stages
  std::map<Stage, Common> stage_opts;
  std::map<Stage, CLI::App*> stage_cmds;
  const std::vector<std::pair<Stage, std::string>> stage_help = {
      {Stage::preprocess, "resample, normalize and crop every case"},
      {Stage::train_synthesis, "train the CycleGAN and CUT translators"},
      {Stage::synthesize, "translate labelled source volumes into fake target volumes"},
      {Stage::train_seg, "cross-validated segmentation training on fake volumes"},
  };
  for (const auto& [stage, help] : stage_help) {
    stage_cmds[stage] = app.add_subcommand(to_string(stage), help);
    stage_opts[stage].attach(stage_cmds[stage]);
  }
  std::optional<int> fold;
  stage_cmds[Stage::train_seg]->add_option("--fold", fold, "train only this fold");

  // infer: stage mode with --config, or standalone on a directory
  auto* infer = app.add_subcommand("infer", "sliding-window ensemble prediction");
  Common infer_common;
  infer_common.attach(infer);
  std::string infer_ckpts, infer_overlap = "16", infer_window = "256x256x64", infer_modality, infer_in, infer_out;
  int infer_k = 0;
  bool infer_probs = false;
  infer->add_option("--checkpoints", infer_ckpts, "comma-separated segmentation checkpoints");
  infer->add_option("--k", infer_k, "use the first k checkpoints (0: all)");
  infer->add_option("--overlap", infer_overlap, "window overlap in voxels, one value or x,y,z");
  infer->add_option("--window", infer_window, "window size XxYxZ");
  infer->add_option("--modality", infer_modality, "only images with this modality tag");
  infer->add_flag("--probabilities", infer_probs, "also write per-class probability volumes");
  infer->add_option("in_dir", infer_in, "directory of normalized volumes");
  infer->add_option("out_dir", infer_out, "output directory for label maps");

  auto* evaluate = app.add_subcommand("evaluate", "DSC and ASSD of predictions against ground truth");
  Common eval_common;
  eval_common.attach(evaluate);
  std::string eval_pred, eval_truth, eval_report;
  evaluate->add_option("pred_dir", eval_pred, "directory of <case>_label predictions");
  evaluate->add_option("truth_dir", eval_truth, "directory of <case>_label ground truth");
  evaluate->add_option("--report", eval_report, "directory for the per-case CSV and aggregate JSON");

  auto* overlay = app.add_subcommand("overlay", "render an axial slice with VS in red and cochlea in green");
  std::string ov_image, ov_label, ov_out;
  std::optional<int64_t> ov_slice;
  overlay->add_option("image", ov_image, "volume")->required();
  overlay->add_option("label", ov_label, "label map")->required();
  overlay->add_option("out", ov_out, "output .ppm")->required();
  overlay->add_option("--slice", ov_slice, "axial slice (default: the most labelled one)");

  auto* summary = app.add_subcommand("summary", "network layout and parameter count");
  bool sum_full = false;
  std::string sum_input = "";
  summary->add_flag("--full", sum_full, "full-scale configuration instead of the desk one");
  summary->add_option("--input", sum_input, "input size XxYxZ for the shape listing");

  auto* run = app.add_subcommand("run", "every pipeline stage in order");
  Common run_common;
  run_common.attach(run);

  auto* dump = app.add_subcommand("config", "print a configuration file");
  bool dump_full = false;
  dump->add_flag("--full", dump_full, "full-scale defaults instead of desk-scale ones");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (phantom_gen->parsed()) {
      PhantomSpec spec = PhantomSpec::desk();
      spec.size = parse_dims(phantom_size);
      spec.seed = phantom_seed;
      const PhantomManifest m = generate_dataset(spec, phantom_n, phantom_out);
      std::cout << "wrote " << m.case_ids.size() << " cases to " << phantom_out << '\n';
    }
    for (const auto& [stage, cmd] : stage_cmds) {
      if (!cmd->parsed()) continue;
      StageOptions opts;
      opts.fold = fold;
      print_stage(run_stage(stage, stage_opts[stage].resolve(), opts));
    }
    if (infer->parsed()) {
      if (infer_in.empty()) {
        print_stage(run_stage(Stage::infer, infer_common.resolve()));
      } else {
        if (infer_out.empty()) throw std::invalid_argument("infer needs both in_dir and out_dir");
        EnsembleConfig ec;
        ec.checkpoints = split_paths(infer_ckpts);
        ec.k = infer_k;
        ec.window = parse_dims(infer_window);
        ec.overlap = parse_overlap(infer_overlap);
        const Ensemble ensemble = Ensemble::load(ec);
        const int64_t n = infer_directory(ensemble, infer_in, infer_out, infer_modality, infer_probs);
        std::cout << "predicted " << n << " cases into " << infer_out << '\n';
      }
    }
    if (evaluate->parsed()) {
      if (eval_pred.empty()) {
        print_stage(run_stage(Stage::evaluate, eval_common.resolve()));
      } else {
        if (eval_truth.empty()) throw std::invalid_argument("evaluate needs both pred_dir and truth_dir");
        const Evaluation e = evaluate_directories(eval_pred, eval_truth);
        for (const SegMetrics& m : e.cases) {
          auto a = [](const std::optional<double>& v) { return v ? std::to_string(*v) : std::string("undefined"); };
          std::printf("%-12s DSC VS %.4f cochlea %.4f | ASSD VS %s cochlea %s\n", m.case_id.c_str(), m.vs.dsc,
                      m.cochlea.dsc, a(m.vs.assd).c_str(), a(m.cochlea.assd).c_str());
        }
        std::cout << e.report.table_row("mean ± std") << '\n';
        for (const auto& w : e.report.warnings) std::cerr << "warning: " << w << '\n';
        if (!eval_report.empty()) {
          fs::create_directories(eval_report);
          write_case_csv(e.cases, fs::path(eval_report) / "cases.csv");
          write_report_json(e.report, fs::path(eval_report) / "report.json");
        }
      }
    }
    if (overlay->parsed()) {
      const Volume3D v = load_volume(ov_image);
      const LabelMap l = load_label_map(ov_label);
      write_ppm(render_overlay(v, l, ov_slice.value_or(most_labelled_slice(l))), ov_out);
    }
    if (summary->parsed()) {
      const MNetConfig cfg = sum_full ? MNetConfig::full_scale() : MNetConfig::desk();
      const MNet net(cfg, 0);
      const Dims in = sum_input.empty() ? Dims{int64_t{1} << cfg.depth, int64_t{1} << cfg.depth,
                                                int64_t{1} << (cfg.depth - 1)}
                                        : parse_dims(sum_input);
      std::cout << net.summary(in.z, in.y, in.x);
      std::cout << "parameters: " << count_parameters(net) << '\n';
    }
    if (run->parsed()) {
      const RunConfig cfg = run_common.resolve();
      run_pipeline(cfg, [](const std::string& line) { std::cout << line << std::endl; });
    }
    if (dump->parsed()) std::cout << (dump_full ? RunConfig::full() : RunConfig::desk()).to_ini();
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
