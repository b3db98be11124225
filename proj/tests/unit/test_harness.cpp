#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "dualpatch/dataset.hpp"
#include "dualpatch/error.hpp"
#include "dualpatch/fixtures.hpp"
#include "dualpatch/harness.hpp"
#include "test_util.hpp"

using namespace dualpatch;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_manifest(const std::filesystem::path& dir, const std::string& text) {
  std::ofstream(dir / "manifest.jsonl") << text;
}

std::string error_of(const std::filesystem::path& manifest) {
  try {
    load_dataset(manifest);
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

// Ten single-person infrared frames; three bodies are warm enough that an
// additive hot patch crosses the hot threshold.
DatasetStore warm_body_store() {
  DatasetStore store;
  for (int i = 0; i < 10; ++i) {
    DualFrame f;
    f.id = "f" + std::to_string(i);
    const double body = i < 3 ? 0.6 : 0.3;
    f.infrared = ImagePlane(40, 60, Modality::Infrared, body);
    f.persons = {{5, 5, 30, 50}};
    store.frames.push_back(std::move(f));
  }
  return store;
}

class FlakyDetector final : public DetectorAdapter {
 public:
  std::string name() const override { return "flaky"; }
  Modality modality() const override { return Modality::Infrared; }

 protected:
  DetectionSet run(const ImagePlane& frame, std::span<const Rect> persons) override {
    if (frame.at(0, 0) > 0.95) throw Error(ErrorKind::Detector, "flaky: crashed");
    DetectionSet out;
    for (const auto& p : persons) out.push_back({p, 0.9, kPersonClass});
    return out;
  }
};

}  // namespace

TEST(Matching, SpecExamples) {
  const Rect person{10, 10, 20, 40};
  EXPECT_TRUE(match_person(person, {{person, 0.84, kPersonClass}}, {}));
  EXPECT_FALSE(match_person(person, {{person, 0.49, kPersonClass}}, {}));
  // IoU 0.3: same height, overlapping 0.3 * 2 / 1.3 of the width.
  const double shift = 20.0 * (1.0 - 0.6 / 1.3);
  const Rect shifted{10 + shift, 10, 20, 40};
  ASSERT_NEAR(rect_iou(person, shifted), 0.3, 1e-12);
  EXPECT_FALSE(match_person(person, {{shifted, 0.9, kPersonClass}}, {}));
  EXPECT_FALSE(match_person(person, {{person, 0.9, 3}}, {}));
}

TEST(Matching, OneDetectionNeverServesTwoPersons) {
  const std::vector<Rect> persons{{0, 0, 10, 20}, {1, 0, 10, 20}};
  const DetectionSet one{{{0.5, 0, 10, 20}, 0.9, kPersonClass}};
  const auto m = match_persons(persons, one, {});
  EXPECT_EQ(std::count(m.begin(), m.end(), true), 1);
  const DetectionSet two{{{0, 0, 10, 20}, 0.7, kPersonClass}, {{1, 0, 10, 20}, 0.8, kPersonClass}};
  const auto m2 = match_persons(persons, two, {});
  EXPECT_TRUE(m2[0]);
  EXPECT_TRUE(m2[1]);
}

TEST(Asr, ExactValues) {
  EXPECT_EQ(asr(100, 20), 0.8);
  EXPECT_EQ(asr(50, 50), 0.0);
  EXPECT_EQ(asr(10, 12), -0.2);
  EXPECT_EQ(asr(7, 0), 1.0);
  EXPECT_THROW(asr(0, 0), Error);
  EXPECT_THROW(asr(5, -1), Error);
}

TEST(Dataset, LoadsWellFormedManifest) {
  dptest::TempDir dir("ds");
  save_png(ImagePlane(20, 30, Modality::Visible, 0.5), dir / "a.png", 8);
  save_png(ImagePlane(20, 30, Modality::Infrared, 0.25), dir / "a_ir.png", 16);
  write_manifest(dir.path(),
                 R"({"id": "a", "visible": "a.png", "infrared": "a_ir.png", "persons": [{"bbox": [1, 2, 10, 20]}]})"
                 "\n\n"
                 R"({"id": "b", "visible": null, "infrared": "a_ir.png", "persons": []})"
                 "\n");
  const auto store = load_dataset(dir / "manifest.jsonl");
  ASSERT_EQ(store.size(), 2u);
  EXPECT_EQ(store.frames[0].id, "a");
  EXPECT_TRUE(store.frames[0].has(Modality::Visible));
  EXPECT_FALSE(store.frames[1].has(Modality::Visible));
  EXPECT_NEAR(store.frames[1].infrared->at(3, 3), 0.25, 1.0 / 65535.0);
  EXPECT_EQ(store.person_count(Modality::Infrared), 1u);
}

TEST(Dataset, ErrorsNameFrameAndLine) {
  dptest::TempDir dir("ds-bad");
  save_png(ImagePlane(20, 30, Modality::Visible, 0.5), dir / "a.png", 8);
  write_manifest(dir.path(), R"({"id": "a", "visible": "a.png", "persons": []})"
                             "\n"
                             R"({"id": "big", "visible": "a.png", "persons": [{"bbox": [15, 0, 10, 10]}]})"
                             "\n");
  std::string msg = error_of(dir / "manifest.jsonl");
  EXPECT_NE(msg.find("big"), std::string::npos) << msg;
  EXPECT_NE(msg.find(":2:"), std::string::npos) << msg;

  write_manifest(dir.path(), R"({"id": "a", "visible": "a.png", "persons": []})"
                             "\n"
                             R"({"id": "a", "visible": "a.png", "persons": []})"
                             "\n");
  msg = error_of(dir / "manifest.jsonl");
  EXPECT_NE(msg.find("ids unique"), std::string::npos) << msg;

  write_manifest(dir.path(), R"({"id": "m", "visible": "nope.png", "persons": []})");
  msg = error_of(dir / "manifest.jsonl");
  EXPECT_NE(msg.find("missing file"), std::string::npos) << msg;

  write_manifest(dir.path(), R"({"id": "x", "visible": "a.png", "persons": [], "extra": 1})");
  EXPECT_NE(error_of(dir / "manifest.jsonl").find("unknown key"), std::string::npos);

  write_manifest(dir.path(), "{oops\n");
  EXPECT_NE(error_of(dir / "manifest.jsonl").find("malformed"), std::string::npos);

  write_manifest(dir.path(), "\n");
  EXPECT_FALSE(error_of(dir / "manifest.jsonl").empty());
  EXPECT_THROW(load_dataset(dir / "absent.jsonl"), Error);
}

TEST(Fixtures, RoundTripThroughDisk) {
  dptest::TempDir dir("fx");
  FixtureOptions opts;
  opts.frames = 6;
  const auto manifest = generate_fixtures(dir.path(), opts);
  const auto loaded = load_dataset(manifest);
  const auto synth = synthesize_dataset(opts);
  ASSERT_EQ(loaded.size(), synth.size());
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    EXPECT_EQ(loaded.frames[i].persons, synth.frames[i].persons);
    EXPECT_EQ(*loaded.frames[i].visible, *synth.frames[i].visible);
    EXPECT_EQ(*loaded.frames[i].infrared, *synth.frames[i].infrared);
  }
}

TEST(Fixtures, CleanPersonsAreDetectedByBothOracles) {
  const auto store = synthesize_dataset({});
  SmoothColorDetector vis;
  MockCoverageDetector ir;
  for (const auto& f : store.frames) {
    for (const auto& d : vis.detect(*f.visible, f.persons)) EXPECT_GE(d.score, 0.5);
    for (const auto& d : ir.detect(*f.infrared, f.persons)) EXPECT_DOUBLE_EQ(d.score, 0.9);
  }
}

TEST(EvaluatePatch, MockDetectorFullySuppressedByLargePatch) {
  const auto store = synthesize_dataset({.frames = 8});
  SmoothColorDetector vis;
  MockCoverageDetector ir;
  PatchSpec patch{PolygonShape::regular(6, 1.0), TextureGrid(16, 16, 1.0), 0.3};
  EvalOptions opts;
  opts.config_hash = "abc";
  opts.patch_ref = "patches/patch_00";
  const auto r = evaluate_patch(patch, store, {&vis, &ir}, opts);
  EXPECT_EQ(r.modalities.at("infrared").asr, 1.0);
  EXPECT_EQ(r.modalities.at("infrared").n_clean, static_cast<long>(store.person_count(Modality::Infrared)));
  EXPECT_EQ(r.config_hash, "abc");
  EXPECT_EQ(r.frames.size(), 8u);
}

TEST(EvaluatePatch, VanishingPatchChangesNothing) {
  const auto store = synthesize_dataset({.frames = 8});
  SmoothColorDetector vis;
  MockCoverageDetector ir;
  PatchSpec patch{PolygonShape::regular(4, 1.0), TextureGrid(4, 4, 1.0), 1e-6};
  const auto r = evaluate_patch(patch, store, {&vis, &ir}, {});
  EXPECT_EQ(r.modalities.at("visible").asr, 0.0);
  EXPECT_EQ(r.modalities.at("infrared").asr, 0.0);
}

TEST(EvaluatePatch, ThreeOfTenGivesPointThree) {
  const auto store = warm_body_store();
  MockCoverageDetector ir;
  EvalOptions opts;
  opts.thermal = {ThermalMode::Additive, 0.9, 0.3};
  PatchSpec patch{PolygonShape::regular(4, 1.0), TextureGrid(4, 4), 0.3};
  const auto r = evaluate_patch(patch, store, {nullptr, &ir}, opts);
  EXPECT_EQ(r.modalities.count("visible"), 0u);
  const auto& m = r.modalities.at("infrared");
  EXPECT_EQ(m.n_clean, 10);
  EXPECT_EQ(m.n_patch, 7);
  EXPECT_EQ(m.asr, 0.3);
}

TEST(EvaluatePatch, MissingDetectorIsAConfigError) {
  const auto store = warm_body_store();
  PatchSpec patch{PolygonShape::regular(4, 1.0), TextureGrid(4, 4), 0.3};
  try {
    evaluate_patch(patch, store, {}, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Config);
  }
}

TEST(EvaluatePatch, AdapterFailureAbortsUnlessKeepGoing) {
  auto store = warm_body_store();
  store.frames[4].infrared->at(0, 0) = 1.0;
  FlakyDetector det;
  PatchSpec patch{PolygonShape::regular(4, 1.0), TextureGrid(4, 4), 0.3};
  EXPECT_THROW(evaluate_patch(patch, store, {nullptr, &det}, {}), Error);
  EvalOptions opts;
  opts.keep_going = true;
  const auto r = evaluate_patch(patch, store, {nullptr, &det}, opts);
  EXPECT_EQ(r.frames[4].status.rfind("failed: ", 0), 0u);
  EXPECT_FALSE(r.frames[4].infrared_clean.has_value());
  EXPECT_EQ(r.modalities.at("infrared").n_clean, 9);
}

TEST(EvaluatePatch, IndependentOfWorkerCount) {
  const auto store = synthesize_dataset({.frames = 12});
  SmoothColorDetector vis;
  MockCoverageDetector ir;
  PatchSpec patch{PolygonShape::regular(5, 1.0), TextureGrid(8, 8, 0.9), 0.2};
  EvalOptions a;
  a.eot_seed = 99;
  EvalOptions b = a;
  b.workers = 4;
  EXPECT_EQ(evaluate_patch(patch, store, {&vis, &ir}, a), evaluate_patch(patch, store, {&vis, &ir}, b));
}

TEST(Report, EmitLoadRoundTripAndCanonicalBytes) {
  const auto store = warm_body_store();
  MockCoverageDetector ir;
  EvalOptions opts;
  opts.thermal = {ThermalMode::Additive, 0.9, 0.3};
  opts.config_hash = "h";
  opts.patch_ref = "p";
  PatchSpec patch{PolygonShape::regular(4, 1.0), TextureGrid(4, 4), 0.3};
  const auto r = evaluate_patch(patch, store, {nullptr, &ir}, opts);

  dptest::TempDir a("rep-a"), b("rep-b");
  const ReportFormat all[] = {ReportFormat::Json, ReportFormat::Csv, ReportFormat::Png};
  const auto files = emit_report(r, a.path(), all);
  EXPECT_EQ(files.size(), 3u);
  emit_report(r, b.path(), all);
  EXPECT_EQ(load_report(a / "report.json"), r);
  EXPECT_EQ(slurp(a / "report.json"), slurp(b / "report.json"));
  EXPECT_TRUE(std::filesystem::exists(a / "asr_bars.png"));

  const std::string csv = slurp(a / "report.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), static_cast<long>(r.frames.size()) + 1);
}
