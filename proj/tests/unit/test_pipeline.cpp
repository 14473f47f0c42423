#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "support.hpp"
#include "vsseg/error.hpp"
#include "vsseg/nifti.hpp"
#include "vsseg/pipeline.hpp"

using namespace vsseg;

namespace {

RunConfig tiny_run(const std::filesystem::path& work) {
  RunConfig c = RunConfig::desk();
  c.work_dir = work;
  for (const auto& [k, v] : std::vector<std::pair<std::string, std::string>>{
           {"phantom.n_cases", "3"},
           {"phantom.size", "32x32x16"},
           {"preprocess.crop_size", "32x32x16"},
           {"synthesis.epochs", "1"},
           {"synthesis.decay_start_epoch", "1"},
           {"synthesis.steps_per_epoch", "3"},
           {"synthesis.nce_patches", "16"},
           {"segmentation.n_folds", "3"},
           {"segmentation.epochs", "1"},
           {"segmentation.steps_per_epoch", "2"},
           {"segmentation.window", "16x16x8"},
           {"segmentation.val_overlap", "8,8,4"},
           {"segmentation.depth", "2"},
           {"segmentation.base_channels", "2"},
           {"inference.window", "16x16x8"},
           {"inference.overlap", "8,8,4"},
           {"inference.k", "2"},
           {"inference.eval_domains", "fakecyclegan,fakecut,hrT2"}})
    c.set(k, v);
  return c;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Stages, NamesRoundTrip) {
  EXPECT_EQ(pipeline_stages().size(), 7u);
  for (Stage s : pipeline_stages()) EXPECT_EQ(parse_stage(to_string(s)), s);
  EXPECT_EQ(to_string(Stage::train_seg), "train-seg");
  EXPECT_THROW(parse_stage("train"), std::invalid_argument);
}

TEST(Pipeline, MissingUpstreamArtifactsNameThePath) {
  vsseg::testing::TempDir dir("pipe_missing");
  const RunConfig c = tiny_run(dir.path());
  try {
    run_stage(Stage::infer, c);
    FAIL() << "expected InputError";
  } catch (const InputError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("missing checkpoint"), std::string::npos) << msg;
    EXPECT_NE(msg.find((stage_dir(c, Stage::train_seg) / "fold0.ckpt").string()), std::string::npos) << msg;
  }
  EXPECT_THROW(run_stage(Stage::preprocess, c), InputError);
}

TEST(Pipeline, TinyRunEndToEnd) {
  vsseg::testing::TempDir dir("pipe_run");
  const RunConfig c = tiny_run(dir.path());
  std::vector<std::string> lines;
  const auto results = run_pipeline(c, [&](const std::string& s) { lines.push_back(s); });
  ASSERT_EQ(results.size(), 7u);
  EXPECT_FALSE(lines.empty());

  const auto pre = stage_dir(c, Stage::preprocess);
  const auto image = pre / case_filename("case001", "hrT2");
  const std::string before = slurp(image);
  run_stage(Stage::preprocess, c);
  EXPECT_EQ(slurp(image), before);

  for (int k = 0; k < 3; ++k) EXPECT_TRUE(std::filesystem::exists(stage_dir(c, Stage::train_seg) / ("fold" + std::to_string(k) + ".ckpt")));
  EXPECT_TRUE(std::filesystem::exists(stage_dir(c, Stage::train_synthesis) / "generator_cut.ckpt"));
  EXPECT_TRUE(std::filesystem::exists(stage_dir(c, Stage::synthesize) / case_filename("case000", "fakecut")));
  const auto eval = stage_dir(c, Stage::evaluate);
  for (const char* f : {"fakecyclegan_cases.csv", "fakecut_report.json", "hrT2_report.json", "report.md"})
    EXPECT_TRUE(std::filesystem::exists(eval / f)) << f;
  const std::string manifest = slurp(manifest_path(c));
  EXPECT_NE(manifest.find("\"evaluate\""), std::string::npos);

  // Standalone evaluation of a prediction against itself.
  const Evaluation self = evaluate_directories(stage_dir(c, Stage::infer) / "hrT2", stage_dir(c, Stage::infer) / "hrT2");
  EXPECT_EQ(self.cases.size(), 3u);
  EXPECT_EQ(self.report.dsc_vs.n, 3);
}
