#pragma once

#include <array>
#include <chrono>
#include <filesystem>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dualpatch/geometry.hpp"
#include "dualpatch/image.hpp"

namespace dualpatch {

inline constexpr int kPersonClass = 0;

struct Detection {
  Rect box;
  double score = 0.0;
  int class_id = kPersonClass;

  bool operator==(const Detection&) const = default;
};

using DetectionSet = std::vector<Detection>;

nlohmann::json detections_to_json(const DetectionSet& detections);
DetectionSet detections_from_json(const nlohmann::json& doc);

// Integer pixel span [x0, x1) x [y0, y1) whose centers fall inside a box,
// clipped to the image.
struct PixelSpan {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;

  bool empty() const { return x1 <= x0 || y1 <= y0; }
  long count() const { return empty() ? 0L : static_cast<long>(x1 - x0) * (y1 - y0); }
};

PixelSpan box_pixels(const Rect& box, int image_width, int image_height);

struct DetectorInput {
  const ImagePlane* frame = nullptr;
  std::span<const Rect> persons;  // annotated boxes; external backends ignore them
};

// The victim detector. Built-in oracles score each annotated person box;
// external backends propose their own boxes.
class DetectorAdapter {
 public:
  virtual ~DetectorAdapter() = default;

  virtual std::string name() const = 0;
  virtual Modality modality() const = 0;
  virtual bool differentiable() const { return false; }

  // One DetectionSet per input; throws on modality mismatch.
  std::vector<DetectionSet> detect(std::span<const DetectorInput> inputs);
  DetectionSet detect(const ImagePlane& frame, std::span<const Rect> persons);

 protected:
  virtual DetectionSet run(const ImagePlane& frame, std::span<const Rect> persons) = 0;
};

// A detector that exposes confidence gradients with respect to input pixels.
class DifferentiableDetector : public DetectorAdapter {
 public:
  bool differentiable() const override { return true; }

  // Confidence of the detection matched to `person`. When grad is non-null,
  // weight * d(confidence)/d(frame) is added into it.
  virtual double person_confidence(const ImagePlane& frame, const Rect& person,
                                   double weight, ImagePlane* grad) const = 0;
};

struct CoverageParams {
  double c0 = 0.9;
  double rho = 0.25;
  double hot_threshold = 0.85;  // infrared value treated as patch

  void validate() const;
};

// score = c0 * max(0, 1 - coverage / rho), coverage = patch pixels in box / box pixels.
double mock_coverage_confidence(const Rect& person_box, const BitMask& patch_mask,
                                const CoverageParams& params = {});

// Infrared oracle: the patch mask is every pixel at or above hot_threshold.
class MockCoverageDetector final : public DetectorAdapter {
 public:
  explicit MockCoverageDetector(CoverageParams params = {});

  std::string name() const override { return "mock_coverage"; }
  Modality modality() const override { return Modality::Infrared; }
  const CoverageParams& params() const { return params_; }

 protected:
  DetectionSet run(const ImagePlane& frame, std::span<const Rect> persons) override;

 private:
  CoverageParams params_;
};

struct SmoothColorParams {
  double c0 = 0.9;
  double lambda = 8.0;
  std::array<double, 3> mu{0.5, 0.5, 0.5};

  void validate() const;
};

// d = mean over box pixels of |pixel - mu|^2, score = c0 * exp(-lambda * d).
double smooth_color_confidence(const ImagePlane& frame, const Rect& person_box,
                               const SmoothColorParams& params = {},
                               double weight = 0.0, ImagePlane* grad = nullptr);

// Visible oracle with analytic pixel gradients.
class SmoothColorDetector final : public DifferentiableDetector {
 public:
  explicit SmoothColorDetector(SmoothColorParams params = {});

  std::string name() const override { return "smooth_color"; }
  Modality modality() const override { return Modality::Visible; }
  const SmoothColorParams& params() const { return params_; }

  double person_confidence(const ImagePlane& frame, const Rect& person, double weight,
                           ImagePlane* grad) const override;

 protected:
  DetectionSet run(const ImagePlane& frame, std::span<const Rect> persons) override;

 private:
  SmoothColorParams params_;
};

struct SubprocessConfig {
  std::vector<std::string> command;
  Modality modality = Modality::Visible;
  std::chrono::milliseconds timeout{30000};
  std::string name = "subprocess";
};

// External backend speaking newline-delimited JSON over stdin/stdout.
//   request : {"id": str, "image_path": str, "modality": "visible"|"infrared"}
//   response: {"id": str, "detections": [{"box": [x,y,w,h], "score": f, "class_id": i}]}
// Frames are written as PNG into a private scratch directory. The child is
// started lazily and restarted after a failure. Requests are serialized.
class SubprocessDetector final : public DetectorAdapter {
 public:
  explicit SubprocessDetector(SubprocessConfig config);
  ~SubprocessDetector() override;

  SubprocessDetector(const SubprocessDetector&) = delete;
  SubprocessDetector& operator=(const SubprocessDetector&) = delete;

  std::string name() const override { return config_.name; }
  Modality modality() const override { return config_.modality; }

 protected:
  DetectionSet run(const ImagePlane& frame, std::span<const Rect> persons) override;

 private:
  struct Child;

  void start();
  void stop();
  std::string read_line();

  SubprocessConfig config_;
  std::filesystem::path scratch_;
  std::unique_ptr<Child> child_;
  std::mutex mutex_;
  unsigned long long next_id_ = 0;
};

}  // namespace dualpatch
