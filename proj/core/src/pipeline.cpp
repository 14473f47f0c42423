#include "vsseg/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <stdexcept>

#include "vsseg/error.hpp"
#include "vsseg/nifti.hpp"
#include "vsseg/overlay.hpp"
#include "vsseg/phantom.hpp"
#include "vsseg/synthesis.hpp"
#include "vsseg/trainer.hpp"

namespace vsseg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::vector<std::pair<Stage, std::string>>& stage_names() {
  static const std::vector<std::pair<Stage, std::string>> names = {
      {Stage::phantom, "phantom"},     {Stage::preprocess, "preprocess"}, {Stage::train_synthesis, "train-synthesis"},
      {Stage::synthesize, "synthesize"}, {Stage::train_seg, "train-seg"}, {Stage::infer, "infer"},
      {Stage::evaluate, "evaluate"}};
  return names;
}

void require_dir(const fs::path& dir, const std::string& what) {
  if (!fs::is_directory(dir)) throw InputError("missing " + what + " directory " + dir.string());
}

void require_file(const fs::path& path, const std::string& what) {
  if (!fs::exists(path)) throw InputError("missing " + what + " " + path.string());
}

fs::path fresh_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  return dir;
}

fs::path input_dir(const RunConfig& cfg) {
  return cfg.data_dir.empty() ? stage_dir(cfg, Stage::phantom) : cfg.data_dir;
}

fs::path checkpoint_path(const RunConfig& cfg, TranslationMethod m) {
  return stage_dir(cfg, Stage::train_synthesis) / ("generator_" + to_string(m) + ".ckpt");
}

fs::path fold_checkpoint(const RunConfig& cfg, int fold) {
  return stage_dir(cfg, Stage::train_seg) / ("fold" + std::to_string(fold) + ".ckpt");
}

std::string fake_tag(TranslationMethod m) { return "fake" + to_string(m); }

std::vector<nn::Tensor> slices_of(const std::vector<CaseFiles>& cases, const std::string& modality) {
  std::vector<nn::Tensor> out;
  for (const CaseFiles& c : cases) {
    const auto it = c.images.find(modality);
    if (it == c.images.end()) continue;
    for (auto& s : axial_slices(load_volume(it->second))) out.push_back(std::move(s));
  }
  return out;
}

StageResult stage_phantom(const RunConfig& cfg) {
  StageResult r;
  const fs::path dir = fresh_dir(stage_dir(cfg, Stage::phantom));
  PhantomSpec spec = cfg.phantom;
  spec.modality_a.name = cfg.source_modality;
  spec.modality_b.name = cfg.target_modality;
  const PhantomManifest m = generate_dataset(spec, cfg.phantom_cases, dir);
  for (const auto& id : m.case_ids) {
    r.outputs.push_back(dir / case_filename(id, cfg.source_modality));
    r.outputs.push_back(dir / case_filename(id, cfg.target_modality));
    r.outputs.push_back(dir / case_filename(id, "label"));
  }
  r.outputs.push_back(dir / "manifest.json");
  r.summary = std::to_string(m.case_ids.size()) + " phantom cases";
  return r;
}

StageResult stage_preprocess(const RunConfig& cfg) {
  StageResult r;
  const fs::path in = input_dir(cfg);
  require_dir(in, "input data");
  const fs::path out = fresh_dir(stage_dir(cfg, Stage::preprocess));
  int64_t n = 0;
  for (const CaseFiles& c : discover_cases(in)) {
    for (const std::string& mod : {cfg.source_modality, cfg.target_modality}) {
      const auto it = c.images.find(mod);
      if (it == c.images.end()) continue;
      const fs::path dst = out / case_filename(c.case_id, mod);
      save_volume(preprocess(load_volume(it->second), cfg.preprocess), dst);
      r.outputs.push_back(dst);
    }
    if (c.label) {
      const fs::path dst = out / case_filename(c.case_id, "label");
      save_label_map(preprocess(load_label_map(*c.label), cfg.preprocess), dst);
      r.outputs.push_back(dst);
    }
    ++n;
  }
  if (n == 0) throw InputError("no cases found in " + in.string());
  r.summary = std::to_string(n) + " cases preprocessed";
  return r;
}

StageResult stage_train_synthesis(const RunConfig& cfg) {
  StageResult r;
  const fs::path in = stage_dir(cfg, Stage::preprocess);
  require_dir(in, "preprocessed");
  const auto cases = discover_cases(in);
  const auto source = slices_of(cases, cfg.source_modality);
  const auto target = slices_of(cases, cfg.target_modality);
  if (source.empty()) throw InputError("no " + cfg.source_modality + " volumes in " + in.string());
  if (target.empty()) throw InputError("no " + cfg.target_modality + " volumes in " + in.string());
  const fs::path out = fresh_dir(stage_dir(cfg, Stage::train_synthesis));
  for (size_t i = 0; i < cfg.methods.size(); ++i) {
    SynthesisTrainConfig sc = cfg.synthesis;
    sc.method = cfg.methods[i];
    sc.seed = cfg.stage_seed("train-synthesis") + i;
    const TranslationResult t = train_translation(source, target, sc);
    const fs::path ckpt = checkpoint_path(cfg, sc.method);
    save_checkpoint(t.generator, ckpt);
    const fs::path log = out / ("losses_" + to_string(sc.method) + ".csv");
    t.history.write_csv(log);
    r.outputs.push_back(ckpt);
    r.outputs.push_back(log);
  }
  r.summary = std::to_string(cfg.methods.size()) + " generators on " + std::to_string(source.size()) + "/" +
              std::to_string(target.size()) + " slices";
  return r;
}

StageResult stage_synthesize(const RunConfig& cfg) {
  StageResult r;
  const fs::path in = stage_dir(cfg, Stage::preprocess);
  require_dir(in, "preprocessed");
  std::vector<LoadedGenerator> generators;
  for (TranslationMethod m : cfg.methods) {
    const fs::path ckpt = checkpoint_path(cfg, m);
    require_file(ckpt, "checkpoint");
    generators.push_back(generator_from_checkpoint(load_checkpoint(ckpt, "generator")));
  }
  const fs::path out = fresh_dir(stage_dir(cfg, Stage::synthesize));
  int64_t n = 0;
  for (const CaseFiles& c : discover_cases(in)) {
    const auto it = c.images.find(cfg.source_modality);
    if (it == c.images.end() || !c.label) continue;
    const Volume3D src = load_volume(it->second);
    for (const LoadedGenerator& g : generators) {
      const fs::path dst = out / case_filename(c.case_id, fake_tag(g.method));
      save_volume(translate_volume(g.generator, src, g.method), dst);
      r.outputs.push_back(dst);
    }
    const fs::path lab = out / case_filename(c.case_id, "label");
    fs::copy_file(*c.label, lab, fs::copy_options::overwrite_existing);
    r.outputs.push_back(lab);
    ++n;
  }
  if (n == 0) throw InputError("no labelled " + cfg.source_modality + " cases in " + in.string());
  r.summary = std::to_string(n) + " cases x " + std::to_string(generators.size()) + " fake volumes";
  return r;
}

std::vector<SegSample> load_fake_dataset(const RunConfig& cfg) {
  const fs::path in = stage_dir(cfg, Stage::synthesize);
  require_dir(in, "synthesized");
  std::vector<SegSample> out;
  for (const CaseFiles& c : discover_cases(in)) {
    if (!c.label) continue;
    const LabelMap labels = load_label_map(*c.label);
    for (TranslationMethod m : cfg.methods) {
      const auto it = c.images.find(fake_tag(m));
      if (it == c.images.end()) throw InputError("missing " + fake_tag(m) + " volume for case " + c.case_id);
      out.push_back({c.case_id, load_volume(it->second), labels});
    }
  }
  if (out.empty()) throw InputError("no synthesized cases in " + in.string());
  return out;
}

StageResult stage_train_seg(const RunConfig& cfg, const StageOptions& options) {
  StageResult r;
  const auto dataset = load_fake_dataset(cfg);
  std::vector<std::string> ids;
  for (const auto& s : dataset) ids.push_back(s.source_case);
  const FoldSplit folds = make_folds(ids, cfg.n_folds, cfg.stage_seed("train-seg"));
  const fs::path out = fresh_dir(stage_dir(cfg, Stage::train_seg));
  {
    std::ofstream f(out / "folds.json");
    f << folds.to_json() << '\n';
  }
  r.outputs.push_back(out / "folds.json");
  std::vector<int> todo;
  if (options.fold) {
    if (*options.fold < 0 || *options.fold >= cfg.n_folds) {
      throw std::invalid_argument("fold " + std::to_string(*options.fold) + " outside [0, " +
                                  std::to_string(cfg.n_folds) + ")");
    }
    todo.push_back(*options.fold);
  } else {
    for (int k = 0; k < cfg.n_folds; ++k) todo.push_back(k);
  }
  std::ostringstream summary;
  for (int k : todo) {
    SegTrainConfig sc = cfg.segmentation;
    sc.seed = cfg.stage_seed("train-seg") + static_cast<uint64_t>(k);
    sc.augmentation.seed = cfg.stage_seed("augment") + static_cast<uint64_t>(k);
    const SegTrainResult t = train_segmentation(folds, k, dataset, sc);
    save_checkpoint(t.best, fold_checkpoint(cfg, k));
    const fs::path log = out / ("fold" + std::to_string(k) + "_log.csv");
    t.write_log_csv(log);
    r.outputs.push_back(fold_checkpoint(cfg, k));
    r.outputs.push_back(log);
    summary << "fold " << k << " best val DSC " << t.best_val_dsc << " (epoch " << t.best_epoch << "); ";
  }
  r.summary = summary.str();
  return r;
}

fs::path domain_input_dir(const RunConfig& cfg, const std::string& domain) {
  return domain.rfind("fake", 0) == 0 ? stage_dir(cfg, Stage::synthesize) : stage_dir(cfg, Stage::preprocess);
}

StageResult stage_infer(const RunConfig& cfg) {
  StageResult r;
  EnsembleConfig ec = cfg.inference;
  ec.checkpoints.clear();
  const int k = ec.k == 0 ? cfg.n_folds : ec.k;
  for (int f = 0; f < k; ++f) {
    require_file(fold_checkpoint(cfg, f), "checkpoint");
    ec.checkpoints.push_back(fold_checkpoint(cfg, f));
  }
  ec.k = k;
  const Ensemble ensemble = Ensemble::load(ec);
  const fs::path out = fresh_dir(stage_dir(cfg, Stage::infer));
  std::ostringstream summary;
  for (const std::string& domain : cfg.eval_domains) {
    const fs::path in = domain_input_dir(cfg, domain);
    require_dir(in, domain + " input");
    const int64_t n = infer_directory(ensemble, in, out / domain, domain, cfg.save_probabilities);
    r.outputs.push_back(out / domain);
    summary << domain << ": " << n << " cases; ";
  }
  r.summary = summary.str();
  return r;
}

StageResult stage_evaluate(const RunConfig& cfg) {
  StageResult r;
  const fs::path truth = stage_dir(cfg, Stage::preprocess);
  const fs::path out = fresh_dir(stage_dir(cfg, Stage::evaluate));
  std::ostringstream table;
  table << "| domain | cases | DSC VS (%) | DSC cochlea (%) | DSC mean (%) | ASSD VS (mm) | ASSD cochlea (mm) |\n"
        << "|---|---|---|---|---|---|---|\n";
  auto pm = [](const Stat& s) {
    if (s.n == 0) return std::string("n/a");
    char b[64];
    std::snprintf(b, sizeof b, "%.2f ± %.2f", s.mean, s.std);
    return std::string(b);
  };
  for (const std::string& domain : cfg.eval_domains) {
    const fs::path pred = stage_dir(cfg, Stage::infer) / domain;
    require_dir(pred, "prediction");
    const Evaluation e = evaluate_directories(pred, truth);
    const fs::path csv = out / (domain + "_cases.csv"), js = out / (domain + "_report.json");
    write_case_csv(e.cases, csv);
    write_report_json(e.report, js);
    r.outputs.push_back(csv);
    r.outputs.push_back(js);
    table << "| " << domain << " | " << e.report.n_cases << " | " << pm(e.report.dsc_vs) << " | "
          << pm(e.report.dsc_cochlea) << " | " << pm(e.report.dsc_mean) << " | " << pm(e.report.assd_vs) << " | "
          << pm(e.report.assd_cochlea) << " |\n";

    const fs::path overlays = fresh_dir(out / "overlays");
    const fs::path images = domain_input_dir(cfg, domain);
    for (const SegMetrics& m : e.cases) {
      const fs::path img = images / case_filename(m.case_id, domain);
      if (!fs::exists(img)) continue;
      const LabelMap lab = load_label_map(pred / case_filename(m.case_id, "label"));
      const fs::path ppm = overlays / (domain + "_" + m.case_id + ".ppm");
      write_ppm(render_overlay(load_volume(img), lab, most_labelled_slice(lab)), ppm);
      r.outputs.push_back(ppm);
    }
  }
  const fs::path md = out / "report.md";
  std::ofstream(md) << table.str();
  r.outputs.push_back(md);
  r.summary = table.str();
  return r;
}

void append_manifest(const RunConfig& cfg, const StageResult& result) {
  const fs::path path = manifest_path(cfg);
  json m = json::object();
  if (fs::exists(path)) {
    std::ifstream in(path);
    try {
      m = json::parse(in);
    } catch (const json::exception&) {
      throw InputError("corrupt run manifest " + path.string());
    }
  }
  if (!m.contains("runs")) m["runs"] = json::array();
  json entry{{"stage", to_string(result.stage)},
             {"seed", cfg.seed},
             {"stage_seed", cfg.stage_seed(to_string(result.stage))},
             {"config", cfg.to_ini()},
             {"summary", result.summary}};
  std::vector<std::string> outputs;
  for (const auto& p : result.outputs) outputs.push_back(p.string());
  entry["outputs"] = outputs;
  if (result.stage == Stage::train_seg) {
    std::ifstream folds(stage_dir(cfg, Stage::train_seg) / "folds.json");
    if (folds) entry["folds"] = json::parse(folds);
  }
  m["runs"].push_back(entry);
  fresh_dir(cfg.work_dir);
  std::ofstream(path) << m.dump(2) << '\n';
}

}  // namespace

std::string to_string(Stage stage) {
  for (const auto& [s, name] : stage_names()) {
    if (s == stage) return name;
  }
  return "?";
}

Stage parse_stage(const std::string& text) {
  for (const auto& [s, name] : stage_names()) {
    if (name == text) return s;
  }
  throw std::invalid_argument("unknown stage '" + text + "'");
}

const std::vector<Stage>& pipeline_stages() {
  static const std::vector<Stage> stages = {Stage::phantom,   Stage::preprocess, Stage::train_synthesis,
                                            Stage::synthesize, Stage::train_seg, Stage::infer,
                                            Stage::evaluate};
  return stages;
}

fs::path stage_dir(const RunConfig& cfg, Stage stage) { return cfg.work_dir / to_string(stage); }
fs::path manifest_path(const RunConfig& cfg) { return cfg.work_dir / "manifest.json"; }

StageResult run_stage(Stage stage, const RunConfig& cfg, const StageOptions& options) {
  cfg.validate();
  StageResult r;
  switch (stage) {
    case Stage::phantom: r = stage_phantom(cfg); break;
    case Stage::preprocess: r = stage_preprocess(cfg); break;
    case Stage::train_synthesis: r = stage_train_synthesis(cfg); break;
    case Stage::synthesize: r = stage_synthesize(cfg); break;
    case Stage::train_seg: r = stage_train_seg(cfg, options); break;
    case Stage::infer: r = stage_infer(cfg); break;
    case Stage::evaluate: r = stage_evaluate(cfg); break;
  }
  r.stage = stage;
  append_manifest(cfg, r);
  return r;
}

std::vector<StageResult> run_pipeline(const RunConfig& cfg, const ProgressFn& progress) {
  std::vector<StageResult> results;
  for (Stage s : pipeline_stages()) {
    if (s == Stage::phantom && !cfg.data_dir.empty()) continue;
    if (progress) progress("stage " + to_string(s));
    results.push_back(run_stage(s, cfg));
    if (progress) progress("  " + results.back().summary);
  }
  return results;
}

int64_t infer_directory(const Ensemble& ensemble, const fs::path& in_dir, const fs::path& out_dir,
                        const std::string& modality, bool save_probabilities) {
  require_dir(in_dir, "input");
  fresh_dir(out_dir);
  int64_t n = 0;
  for (const CaseFiles& c : discover_cases(in_dir)) {
    fs::path image;
    if (!modality.empty()) {
      const auto it = c.images.find(modality);
      if (it == c.images.end()) continue;
      image = it->second;
    } else {
      if (c.images.empty()) continue;
      if (c.images.size() > 1) {
        throw InputError("case " + c.case_id + " has several images in " + in_dir.string() +
                         "; pick one with a modality filter");
      }
      image = c.images.begin()->second;
    }
    Volume3D v = load_volume(image);
    if (v.domain != IntensityDomain::normalized) {
      throw InputError(image.string() + " is not normalized; run preprocess first");
    }
    const ProbabilityMap p = ensemble.predict_probabilities(v);
    LabelMap lab = p.argmax();
    lab.case_id = c.case_id;
    save_label_map(lab, out_dir / case_filename(c.case_id, "label"));
    if (save_probabilities) save_probability_maps(p, out_dir / "probabilities");
    ++n;
  }
  return n;
}

Evaluation evaluate_directories(const fs::path& pred_dir, const fs::path& truth_dir) {
  require_dir(pred_dir, "prediction");
  require_dir(truth_dir, "ground-truth");
  std::map<std::string, fs::path> preds;
  for (const CaseFiles& c : discover_cases(pred_dir)) {
    if (c.label) preds[c.case_id] = *c.label;
  }
  if (preds.empty()) throw InputError("no <case>_label predictions in " + pred_dir.string());
  Evaluation e;
  for (const CaseFiles& c : discover_cases(truth_dir)) {
    if (!c.label) continue;
    const auto it = preds.find(c.case_id);
    if (it == preds.end()) continue;
    e.cases.push_back(evaluate_case(load_label_map(it->second), load_label_map(*c.label)));
    e.cases.back().case_id = c.case_id;
    preds.erase(it);
  }
  if (!preds.empty()) throw InputError("no ground truth for predicted case " + preds.begin()->first);
  if (e.cases.empty()) throw InputError("no predicted case matches the ground truth in " + truth_dir.string());
  e.report = aggregate_report(e.cases);
  return e;
}

}  // namespace vsseg
