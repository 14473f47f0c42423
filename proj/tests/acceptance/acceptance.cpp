// Runs the acceptance checks and prints one PASS/FAIL line per criterion.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include "oracles.hpp"
#include "support.hpp"
#include "vsseg/augment.hpp"
#include "vsseg/inference.hpp"
#include "vsseg/metrics.hpp"
#include "vsseg/mnet.hpp"
#include "vsseg/nn/ops.hpp"
#include "vsseg/phantom.hpp"
#include "vsseg/pipeline.hpp"
#include "vsseg/synthesis.hpp"
#include "vsseg/trainer.hpp"

namespace fs = std::filesystem;
using namespace vsseg;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << "[failed: " << what << "] ";
    }
  }
};

struct Criterion {
  int id;
  std::string name;
  double limit_s;
  std::function<void(Outcome&)> run;
};

Volume3D normalized_random(const Dims& d, SeededRng& rng) { return vsseg::testing::random_volume(d, rng); }

void metric_oracle(Outcome& out) {
  SeededRng rng(2024);
  const Spacing s{0.6, 0.6, 1.0};
  int dsc_exact = 0;
  double worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    const Mask a = oracle::random_mask({16, 16, 8}, rng, 0.05 + 0.4 * rng.uniform());
    const Mask b = oracle::random_mask({16, 16, 8}, rng, 0.05 + 0.4 * rng.uniform());
    dsc_exact += dsc(a, b) == oracle::dsc(a, b);
    const auto got = assd(a, b, s), ref = oracle::assd(a, b, s);
    out.require(got.has_value() == ref.has_value(), "assd definedness");
    if (got && ref) worst = std::max(worst, std::abs(*got - *ref));
  }
  out.require(dsc_exact == 50, "dsc exact");
  out.require(worst <= 1e-9, "assd within 1e-9 mm");
  out.detail << "dsc exact " << dsc_exact << "/50, max |assd - oracle| " << worst << " mm";
}

void tumor_reduction(Outcome& out) {
  const Dims d{10, 10, 6};
  AugmentationSpec spec;
  spec.seed = 99;
  int64_t unchanged_bad = 0, ratio_bad = 0, identity_bad = 0;
  double lo = 1.0, hi = 0.0;
  for (uint64_t i = 0; i < 1000; ++i) {
    SeededRng rng(i + 1);
    const Volume3D v = normalized_random(d, rng);
    const LabelMap l = vsseg::testing::random_labels(d, rng);
    const double alpha = draw_augmentation(spec, i).alpha;
    const Volume3D r = reduce_tumor_signal(v, l, alpha);
    for (int64_t k = 0; k < d.numel(); ++k) {
      if (l.data[k] != 1) {
        unchanged_bad += r.data[k] != v.data[k];
      } else if (v.data[k] > 0.0) {
        const double ratio = r.data[k] / v.data[k];
        lo = std::min(lo, ratio);
        hi = std::max(hi, ratio);
        ratio_bad += ratio < 0.5 || ratio > 1.0;
      }
    }
    identity_bad += !(reduce_tumor_signal(v, l, 0.0).data == v.data);
  }
  out.require(unchanged_bad == 0, "non-VS voxels unchanged");
  out.require(ratio_bad == 0, "VS ratio in [0.5, 1]");
  out.require(identity_bad == 0, "alpha 0 identity");
  out.detail << "changed non-VS voxels " << unchanged_bad << ", VS ratio range [" << lo << ", " << hi
             << "], alpha=0 mismatches " << identity_bad;
}

void preprocessing(Outcome& out) {
  PreprocessSpec pp;
  Volume3D v;
  v.data = Grid3<double>({5, 1, 1}, std::vector<double>{0.0, 5000.0, -300.0, 9000.0, 2500.0});
  const Volume3D n = minmax_normalize(v, pp);
  out.require(n.data[0] == -1.0 && n.data[1] == 1.0, "endpoints");
  out.require(n.data[2] == -1.0 && n.data[3] == 1.0, "clipping");
  out.require(n.data[4] == 0.0 && n.domain == IntensityDomain::normalized, "midpoint");

  SeededRng rng(7);
  int size_ok = 0;
  for (int t = 0; t < 100; ++t) {
    const Dims d{1 + static_cast<int64_t>(rng.uniform_index(40)), 1 + static_cast<int64_t>(rng.uniform_index(40)),
                 1 + static_cast<int64_t>(rng.uniform_index(12))};
    const Spacing in{rng.uniform(0.3, 1.5), rng.uniform(0.3, 1.5), rng.uniform(0.5, 3.0)};
    const Spacing target{rng.uniform(0.3, 1.5), rng.uniform(0.3, 1.5), rng.uniform(0.5, 3.0)};
    auto expect = [](int64_t n, double si, double so) {
      return std::max<int64_t>(1, static_cast<int64_t>(std::floor(n * si / so + 0.5)));
    };
    Volume3D r;
    r.data = Grid3<double>(d, 0.5);
    r.spacing = in;
    r.domain = IntensityDomain::normalized;
    const Dims got = resample(r, target).dims();
    size_ok += got == Dims{expect(d.x, in.x, target.x), expect(d.y, in.y, target.y), expect(d.z, in.z, target.z)} &&
               got == resampled_dims(d, in, target);
  }
  out.require(size_ok == 100, "resample sizes");

  const Volume3D src = normalized_random({37, 20, 9}, rng);
  const Dims crop{24, 32, 8};
  const Volume3D once = center_crop_or_pad(src, crop, -1.0);
  const Volume3D twice = center_crop_or_pad(once, crop, -1.0);
  out.require(once.dims() == crop && twice.data == once.data, "crop/pad idempotence");

  Volume3D raw = vsseg::testing::random_volume({30, 30, 10}, rng, IntensityDomain::raw);
  for (auto& x : raw.data.values()) x = 5000.0 * (x + 1.0) / 2.0;
  pp.crop_size = {32, 32, 12};
  out.require(preprocess(raw, pp).data == preprocess(raw, pp).data, "deterministic");
  out.detail << "endpoints/clipping ok, resample sizes " << size_ok << "/100, crop/pad idempotent";
}

void gradient_checks(Outcome& out) {
  SeededRng rng(11);
  MNetConfig cfg;
  cfg.depth = 2;
  cfg.base_channels = 2;
  const MNet net(cfg, 3);
  const nn::Tensor x = vsseg::testing::random_tensor({1, 1, 4, 8, 8}, rng);
  const LabelMap labels = vsseg::testing::random_labels({8, 8, 4}, rng);
  std::vector<nn::Var> params;
  for (const auto& p : net.named_parameters()) params.push_back(p.var);
  const auto seg = vsseg::testing::check_gradients(
      [&](const auto&) { return seg_loss(nn::softmax_channels(net.forward(nn::Var(x))), labels); }, params, rng, 6);

  const nn::Shape img{2, 1, 1, 8, 8};
  const auto cyc = vsseg::testing::check_gradients(
      [](const auto& v) { return loss_cycle(v[0], v[1], 10.0); },
      {nn::Var(vsseg::testing::random_tensor(img, rng)), nn::Var(vsseg::testing::random_tensor(img, rng))}, rng);
  const auto adv = vsseg::testing::check_gradients([](const auto& v) { return loss_adversarial(v[0], false); },
                                                   {nn::Var(vsseg::testing::random_tensor({2, 1, 1, 4, 4}, rng))}, rng);
  const auto nce = vsseg::testing::check_gradients(
      [](const auto& v) {
        return loss_patchnce(nn::l2_normalize_rows(v[0]), nn::l2_normalize_rows(v[1]), 0.07);
      },
      {nn::Var(vsseg::testing::random_tensor({16, 8}, rng)), nn::Var(vsseg::testing::random_tensor({16, 8}, rng))},
      rng);
  const double worst = std::max({seg.max_rel_error, cyc.max_rel_error, adv.max_rel_error, nce.max_rel_error});
  out.require(worst < 1e-3, "max relative error < 1e-3");
  out.detail << "max rel err: seg " << seg.max_rel_error << " (" << seg.checked << " probes), cycle "
             << cyc.max_rel_error << ", adversarial " << adv.max_rel_error << ", patchnce " << nce.max_rel_error;
}

SegSample phantom_sample(const PhantomSpec& spec, int index) {
  const PhantomCase c = generate_case(spec, index);
  return {c.labels.case_id, minmax_normalize(c.b, PreprocessSpec{}), c.labels};
}

void overfit(Outcome& out) {
  PhantomSpec spec = PhantomSpec::desk();
  spec.size = {32, 32, 16};
  spec.tumor_radius_min = 4;
  spec.tumor_radius_max = 6;
  const std::vector<SegSample> cases{phantom_sample(spec, 0), phantom_sample(spec, 1)};
  SegTrainConfig cfg = SegTrainConfig::desk();
  cfg.window = spec.size;
  cfg.val_overlap = {0, 0, 0};
  cfg.augmentation = AugmentationSpec::disabled();
  cfg.epochs = 20;
  cfg.steps_per_epoch = 25;
  cfg.seed = 1;
  const SegTrainResult r = train_segmentation(cases, cases, cfg);
  int hit = -1;
  for (const EpochRecord& e : r.log) {
    if (hit < 0 && e.val_dsc_vs >= 0.95 && e.val_dsc_cochlea >= 0.95) hit = e.epoch;
  }
  const EpochRecord& last = r.log.back();
  out.require(hit >= 0, "both classes >= 0.95 within 500 steps");
  out.detail << "steps " << last.step << ", first epoch with both >= 0.95: " << hit;
  if (hit >= 0) out.detail << " (step " << r.log[hit].step << ")";
  out.detail << ", final VS " << last.val_dsc_vs << " cochlea " << last.val_dsc_cochlea;
}

double mean_of(const std::vector<double>& v, size_t from, size_t to) {
  double s = 0.0;
  for (size_t i = from; i < to; ++i) s += v[i];
  return s / static_cast<double>(to - from);
}

void translation(Outcome& out) {
  PhantomSpec spec = PhantomSpec::desk();
  spec.size = {32, 32, 16};
  spec.tumor_radius_min = 4;
  spec.tumor_radius_max = 6;
  std::vector<nn::Tensor> a, b;
  for (int i = 0; i < 4; ++i) {
    const PhantomCase c = generate_case(spec, i);
    for (auto& s : axial_slices(minmax_normalize(c.a, PreprocessSpec{}))) a.push_back(std::move(s));
    for (auto& s : axial_slices(minmax_normalize(c.b, PreprocessSpec{}))) b.push_back(std::move(s));
  }
  for (TranslationMethod m : {TranslationMethod::cyclegan, TranslationMethod::cut}) {
    SynthesisTrainConfig cfg = SynthesisTrainConfig::desk(m);
    cfg.epochs = 1;
    cfg.decay_start_epoch = 1;
    cfg.steps_per_epoch = 2000;
    cfg.seed = 5;
    const TranslationResult r = train_translation(a, b, cfg);
    bool finite = true;
    for (const auto& row : r.history.rows)
      for (double v : row) finite = finite && std::isfinite(v);
    const std::string col = m == TranslationMethod::cyclegan ? "cycle" : "nce";
    const std::vector<double> loss = r.history.column(col);
    const double first = mean_of(loss, 0, 10), final = mean_of(loss, loss.size() - loss.size() / 10, loss.size());
    out.require(finite, to_string(m) + " finite");
    out.require(loss.size() == 2000, to_string(m) + " steps");
    out.require(final <= 0.5 * first, to_string(m) + " " + col + " halved");
    out.detail << to_string(m) << " " << col << " " << first << " -> " << final << " (" << final / first << "); ";
  }
}

void sliding_window(Outcome& out) {
  const MNet net(MNetConfig::desk(), 4);
  SeededRng rng(12);
  const Volume3D v = normalized_random({32, 32, 16}, rng);
  const nn::Tensor direct = net.predict_probabilities(volume_to_tensor(v));
  const ProbabilityMap p = predict_volume(net, v, v.dims(), {16, 16, 8});
  double worst = 0.0;
  for (size_t i = 0; i < p.values.size(); ++i) worst = std::max(worst, std::abs(p.values[i] - direct[static_cast<int64_t>(i)]));
  out.require(worst <= 1e-6, "stitched equals direct forward");

  int agree = 0;
  for (int t = 0; t < 200; ++t) {
    const int64_t w = 1 + static_cast<int64_t>(rng.uniform_index(64));
    const int64_t o = static_cast<int64_t>(rng.uniform_index(static_cast<uint64_t>(w)));
    const int64_t L = w + static_cast<int64_t>(rng.uniform_index(256));
    const auto s = window_starts(L, w, o);
    agree += s == oracle::window_starts(L, w, o) && oracle::covers(s, L, w);
  }
  out.require(agree == 200, "window starts match oracle with full coverage");
  out.detail << "max |stitched - direct| " << worst << ", window_starts agreement " << agree << "/200";
}

void ensemble(Outcome& out, const fs::path& work) {
  fs::create_directories(work);
  std::vector<fs::path> paths;
  for (int i = 0; i < 3; ++i) {
    paths.push_back(work / ("m" + std::to_string(i) + ".ckpt"));
    save_checkpoint(make_mnet_checkpoint(MNet(MNetConfig::desk(), 100 + i), 0, i), paths.back());
  }
  SeededRng rng(13);
  const Volume3D v = normalized_random({40, 36, 20}, rng);
  EnsembleConfig cfg;
  cfg.window = {32, 32, 16};
  cfg.overlap = {16, 16, 8};

  cfg.checkpoints = {paths[0]};
  const LabelMap single = Ensemble::load(cfg).predict(v);
  cfg.checkpoints = {paths[0], paths[0], paths[0]};
  const LabelMap copies = Ensemble::load(cfg).predict(v);
  out.require(copies.data == single.data, "copies reproduce single model");

  cfg.checkpoints = paths;
  const ProbabilityMap base = Ensemble::load(cfg).predict_probabilities(v);
  bool invariant = true;
  for (const std::vector<int>& order : {std::vector<int>{2, 0, 1}, {1, 2, 0}, {2, 1, 0}}) {
    cfg.checkpoints = {paths[order[0]], paths[order[1]], paths[order[2]]};
    invariant = invariant && Ensemble::load(cfg).predict_probabilities(v).values == base.values;
  }
  out.require(invariant, "reordering invariance");
  out.detail << "3 copies == single argmax: " << (copies.data == single.data) << ", bit-identical under 3 reorderings: "
             << invariant;
}

void end_to_end(Outcome& out, const fs::path& work) {
  RunConfig cfg = RunConfig::desk();
  cfg.work_dir = work;
  cfg.eval_domains = {"fakecyclegan", "fakecut", "hrT2"};
  run_pipeline(cfg, [](const std::string& line) { std::cout << "    " << line << '\n' << std::flush; });
  const fs::path eval = stage_dir(cfg, Stage::evaluate);
  double fake_sum = 0.0;
  int fakes = 0;
  for (const std::string& domain : cfg.eval_domains) {
    std::ifstream in(eval / (domain + "_report.json"));
    const auto j = nlohmann::json::parse(in);
    const double vs = j["dsc_percent"]["vs"]["mean"].get<double>();
    out.detail << domain << " VS DSC " << vs << "%; ";
    if (domain.rfind("fake", 0) == 0) {
      fake_sum += vs;
      ++fakes;
    }
  }
  const double fake_mean = fake_sum / fakes;
  out.require(fs::exists(eval / "report.md"), "report.md");
  out.require(fake_mean >= 60.0, "fake-domain VS DSC >= 60%");
  out.detail << "fake-domain mean " << fake_mean << "%";
}

void parameter_count(Outcome& out) {
  const MNetConfig cfg = MNetConfig::full_scale();
  const int64_t n = count_parameters(MNet(cfg, 0));
  out.detail << "full-scale MNet (depth " << cfg.depth << ", base " << cfg.base_channels << "): " << n
             << " parameters vs 8.7M reported (" << (n / 8.7e6 - 1.0) * 100.0 << "% difference)";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vsseg acceptance checks"};
  std::string workdir = (fs::temp_directory_path() / "vsseg_acceptance").string();
  std::vector<int> only;
  app.add_option("--workdir", workdir, "scratch directory for the pipeline run");
  app.add_option("--only", only, "criteria to run (default: all)");
  CLI11_PARSE(app, argc, argv);
  const fs::path work(workdir);

  const std::vector<Criterion> criteria{
      {1, "metric oracle equivalence", 60, metric_oracle},
      {2, "tumor-signal reduction properties", 10, tumor_reduction},
      {3, "preprocessing contracts", 30, preprocessing},
      {4, "gradient checks", 300, gradient_checks},
      {5, "overfit smoke test", 900, overfit},
      {6, "toy translation training", 1800, translation},
      {7, "sliding-window identity", 60, sliding_window},
      {8, "ensemble identity and invariance", 120, [&](Outcome& o) { ensemble(o, work / "ensemble"); }},
      {9, "end-to-end pipeline", 5400, [&](Outcome& o) { end_to_end(o, work / "pipeline"); }},
      {10, "full-scale parameter count", 60, parameter_count},
  };
  const std::set<int> selected(only.begin(), only.end());
  int failures = 0;
  for (const Criterion& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    Outcome out;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      c.run(out);
    } catch (const std::exception& e) {
      out.pass = false;
      out.detail << "[exception: " << e.what() << "]";
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > c.limit_s) {
      out.pass = false;
      out.detail << " [over time limit " << c.limit_s << " s]";
    }
    failures += !out.pass;
    std::printf("%s C%d %s (%.1f s): %s\n", out.pass ? "PASS" : "FAIL", c.id, c.name.c_str(), secs,
                out.detail.str().c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
