#include "dualpatch/detect.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <cmath>
#include <cstring>

#include "dualpatch/error.hpp"

extern char** environ;

namespace dualpatch {

nlohmann::json detections_to_json(const DetectionSet& detections) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& d : detections) {
    out.push_back({{"box", {d.box.x, d.box.y, d.box.w, d.box.h}},
                   {"score", d.score},
                   {"class_id", d.class_id}});
  }
  return out;
}

DetectionSet detections_from_json(const nlohmann::json& doc) {
  if (!doc.is_array()) throw Error(ErrorKind::Detector, "detections must be an array");
  DetectionSet out;
  for (const auto& item : doc) {
    if (!item.is_object() || !item.contains("box") || !item.contains("score")) {
      throw Error(ErrorKind::Detector, "detection needs \"box\" and \"score\"");
    }
    const auto& box = item["box"];
    if (!box.is_array() || box.size() != 4) {
      throw Error(ErrorKind::Detector, "detection box must be [x, y, w, h]");
    }
    for (const auto& v : box) {
      if (!v.is_number()) throw Error(ErrorKind::Detector, "detection box must be numeric");
    }
    if (!item["score"].is_number()) throw Error(ErrorKind::Detector, "score must be numeric");
    Detection d;
    d.box = {box[0].get<double>(), box[1].get<double>(), box[2].get<double>(), box[3].get<double>()};
    d.score = item["score"].get<double>();
    d.class_id = kPersonClass;
    if (item.contains("class_id")) {
      if (!item["class_id"].is_number_integer()) {
        throw Error(ErrorKind::Detector, "class_id must be an integer");
      }
      d.class_id = item["class_id"].get<int>();
    }
    out.push_back(d);
  }
  return out;
}

PixelSpan box_pixels(const Rect& box, int image_width, int image_height) {
  // Pixel i belongs to the box when x <= i + 0.5 < x + w.
  auto first = [](double v) { return static_cast<long>(std::ceil(v - 0.5)); };
  PixelSpan s;
  s.x0 = static_cast<int>(std::clamp(first(box.x), 0L, static_cast<long>(image_width)));
  s.x1 = static_cast<int>(std::clamp(first(box.x + box.w), 0L, static_cast<long>(image_width)));
  s.y0 = static_cast<int>(std::clamp(first(box.y), 0L, static_cast<long>(image_height)));
  s.y1 = static_cast<int>(std::clamp(first(box.y + box.h), 0L, static_cast<long>(image_height)));
  return s;
}

std::vector<DetectionSet> DetectorAdapter::detect(std::span<const DetectorInput> inputs) {
  std::vector<DetectionSet> out;
  out.reserve(inputs.size());
  for (const auto& in : inputs) {
    if (!in.frame) throw Error(ErrorKind::InvalidArgument, "detect: null frame");
    out.push_back(detect(*in.frame, in.persons));
  }
  return out;
}

DetectionSet DetectorAdapter::detect(const ImagePlane& frame, std::span<const Rect> persons) {
  if (frame.modality() != modality()) {
    throw Error(ErrorKind::InvalidArgument, name() + ": expected " +
                                                std::string(to_string(modality())) + " frame, got " +
                                                std::string(to_string(frame.modality())));
  }
  return run(frame, persons);
}

void CoverageParams::validate() const {
  if (!(c0 > 0.0 && c0 <= 1.0)) throw Error(ErrorKind::InvalidArgument, "coverage c0 must lie in (0, 1]");
  if (!(rho > 0.0 && rho <= 1.0)) throw Error(ErrorKind::InvalidArgument, "coverage rho must lie in (0, 1]");
  if (!(hot_threshold > 0.0 && hot_threshold <= 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "hot_threshold must lie in (0, 1]");
  }
}

double mock_coverage_confidence(const Rect& person_box, const BitMask& patch_mask,
                                const CoverageParams& params) {
  const PixelSpan span = box_pixels(person_box, patch_mask.width(), patch_mask.height());
  if (span.empty()) throw Error(ErrorKind::InvalidArgument, "mock_coverage_confidence: empty box");
  long covered = 0;
  for (int y = span.y0; y < span.y1; ++y) {
    for (int x = span.x0; x < span.x1; ++x) covered += patch_mask.get(x, y) ? 1 : 0;
  }
  const double coverage = static_cast<double>(covered) / static_cast<double>(span.count());
  return params.c0 * std::max(0.0, 1.0 - coverage / params.rho);
}

MockCoverageDetector::MockCoverageDetector(CoverageParams params) : params_(params) {
  params_.validate();
}

DetectionSet MockCoverageDetector::run(const ImagePlane& frame, std::span<const Rect> persons) {
  BitMask hot(frame.width(), frame.height());
  for (int y = 0; y < frame.height(); ++y) {
    for (int x = 0; x < frame.width(); ++x) {
      if (frame.at(x, y) >= params_.hot_threshold) hot.set(x, y);
    }
  }
  DetectionSet out;
  out.reserve(persons.size());
  for (const auto& box : persons) {
    out.push_back({box, mock_coverage_confidence(box, hot, params_), kPersonClass});
  }
  return out;
}

void SmoothColorParams::validate() const {
  if (!(c0 > 0.0 && c0 <= 1.0)) throw Error(ErrorKind::InvalidArgument, "smooth c0 must lie in (0, 1]");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw Error(ErrorKind::InvalidArgument, "smooth lambda must be >= 0");
  }
  for (double m : mu) {
    if (!(m >= 0.0 && m <= 1.0)) throw Error(ErrorKind::InvalidArgument, "smooth mu must lie in [0, 1]");
  }
}

double smooth_color_confidence(const ImagePlane& frame, const Rect& person_box,
                               const SmoothColorParams& params, double weight, ImagePlane* grad) {
  if (frame.modality() != Modality::Visible) {
    throw Error(ErrorKind::InvalidArgument, "smooth_color_confidence: visible frame required");
  }
  const PixelSpan span = box_pixels(person_box, frame.width(), frame.height());
  if (span.empty()) throw Error(ErrorKind::InvalidArgument, "smooth_color_confidence: empty box");
  const double n = static_cast<double>(span.count());
  double sum = 0.0;
  for (int y = span.y0; y < span.y1; ++y) {
    for (int x = span.x0; x < span.x1; ++x) {
      for (int c = 0; c < 3; ++c) {
        const double d = frame.at(x, y, c) - params.mu[static_cast<std::size_t>(c)];
        sum += d * d;
      }
    }
  }
  const double mean_sq = sum / n;
  const double score = params.c0 * std::exp(-params.lambda * mean_sq);
  if (grad != nullptr && weight != 0.0) {
    const double k = weight * score * (-params.lambda) * 2.0 / n;
    for (int y = span.y0; y < span.y1; ++y) {
      for (int x = span.x0; x < span.x1; ++x) {
        for (int c = 0; c < 3; ++c) {
          grad->at(x, y, c) += k * (frame.at(x, y, c) - params.mu[static_cast<std::size_t>(c)]);
        }
      }
    }
  }
  return score;
}

SmoothColorDetector::SmoothColorDetector(SmoothColorParams params) : params_(params) {
  params_.validate();
}

double SmoothColorDetector::person_confidence(const ImagePlane& frame, const Rect& person,
                                              double weight, ImagePlane* grad) const {
  return smooth_color_confidence(frame, person, params_, weight, grad);
}

DetectionSet SmoothColorDetector::run(const ImagePlane& frame, std::span<const Rect> persons) {
  DetectionSet out;
  out.reserve(persons.size());
  for (const auto& box : persons) {
    out.push_back({box, smooth_color_confidence(frame, box, params_), kPersonClass});
  }
  return out;
}

// --- subprocess adapter ----------------------------------------------------

struct SubprocessDetector::Child {
  pid_t pid = -1;
  int in_fd = -1;   // parent writes requests
  int out_fd = -1;  // parent reads responses
  std::string buffer;
};

namespace {

std::atomic<unsigned long long> scratch_counter{0};

void write_all(int fd, const std::string& data) {
  // SIGPIPE is blocked for this thread; a dead child surfaces as EPIPE.
  sigset_t block, old;
  sigemptyset(&block);
  sigaddset(&block, SIGPIPE);
  pthread_sigmask(SIG_BLOCK, &block, &old);
  std::size_t done = 0;
  int err = 0;
  while (done < data.size()) {
    const ssize_t n = ::write(fd, data.data() + done, data.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      err = errno;
      break;
    }
    done += static_cast<std::size_t>(n);
  }
  if (err == EPIPE) {
    const timespec zero{0, 0};
    sigtimedwait(&block, nullptr, &zero);
  }
  pthread_sigmask(SIG_SETMASK, &old, nullptr);
  if (err != 0) {
    throw Error(ErrorKind::Detector, std::string("adapter write failed: ") + std::strerror(err));
  }
}

}  // namespace

SubprocessDetector::SubprocessDetector(SubprocessConfig config) : config_(std::move(config)) {
  if (config_.command.empty()) {
    throw Error(ErrorKind::InvalidArgument, "subprocess detector: empty command");
  }
  if (config_.timeout.count() <= 0) {
    throw Error(ErrorKind::InvalidArgument, "subprocess detector: timeout must be positive");
  }
  scratch_ = std::filesystem::temp_directory_path() /
             ("dualpatch-adapter-" + std::to_string(::getpid()) + "-" +
              std::to_string(scratch_counter.fetch_add(1)));
  std::filesystem::create_directories(scratch_);
}

SubprocessDetector::~SubprocessDetector() {
  stop();
  std::error_code ec;
  std::filesystem::remove_all(scratch_, ec);
}

void SubprocessDetector::start() {
  int to_child[2];
  int from_child[2];
  if (::pipe2(to_child, O_CLOEXEC) != 0) {
    throw Error(ErrorKind::Detector, std::string("pipe failed: ") + std::strerror(errno));
  }
  if (::pipe2(from_child, O_CLOEXEC) != 0) {
    ::close(to_child[0]);
    ::close(to_child[1]);
    throw Error(ErrorKind::Detector, std::string("pipe failed: ") + std::strerror(errno));
  }
  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, to_child[0], STDIN_FILENO);
  posix_spawn_file_actions_adddup2(&actions, from_child[1], STDOUT_FILENO);

  std::vector<char*> argv;
  for (auto& arg : config_.command) argv.push_back(arg.data());
  argv.push_back(nullptr);

  pid_t pid = -1;
  const int rc = posix_spawnp(&pid, argv[0], &actions, nullptr, argv.data(), environ);
  posix_spawn_file_actions_destroy(&actions);
  ::close(to_child[0]);
  ::close(from_child[1]);
  if (rc != 0) {
    ::close(to_child[1]);
    ::close(from_child[0]);
    throw Error(ErrorKind::Detector,
                "cannot start adapter \"" + config_.command[0] + "\": " + std::strerror(rc));
  }
  child_ = std::make_unique<Child>();
  child_->pid = pid;
  child_->in_fd = to_child[1];
  child_->out_fd = from_child[0];
}

void SubprocessDetector::stop() {
  if (!child_) return;
  if (child_->in_fd >= 0) ::close(child_->in_fd);
  if (child_->out_fd >= 0) ::close(child_->out_fd);
  if (child_->pid > 0) {
    int status = 0;
    bool reaped = false;
    for (int i = 0; i < 20 && !reaped; ++i) {
      if (::waitpid(child_->pid, &status, WNOHANG) == child_->pid) {
        reaped = true;
      } else {
        ::usleep(5000);
      }
    }
    if (!reaped) {
      ::kill(child_->pid, SIGKILL);
      ::waitpid(child_->pid, &status, 0);
    }
  }
  child_.reset();
}

std::string SubprocessDetector::read_line() {
  using clock = std::chrono::steady_clock;
  const auto deadline = clock::now() + config_.timeout;
  for (;;) {
    const auto nl = child_->buffer.find('\n');
    if (nl != std::string::npos) {
      std::string line = child_->buffer.substr(0, nl);
      child_->buffer.erase(0, nl + 1);
      return line;
    }
    const auto left =
        std::chrono::duration_cast<std::chrono::milliseconds>(deadline - clock::now()).count();
    if (left <= 0) {
      throw Error(ErrorKind::Detector, "adapter timed out after " +
                                           std::to_string(config_.timeout.count()) + " ms");
    }
    pollfd pfd{child_->out_fd, POLLIN, 0};
    const int rc = ::poll(&pfd, 1, static_cast<int>(left));
    if (rc < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorKind::Detector, std::string("poll failed: ") + std::strerror(errno));
    }
    if (rc == 0) continue;
    char buf[4096];
    const ssize_t n = ::read(child_->out_fd, buf, sizeof(buf));
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorKind::Detector, std::string("adapter read failed: ") + std::strerror(errno));
    }
    if (n == 0) throw Error(ErrorKind::Detector, "adapter closed its output");
    child_->buffer.append(buf, static_cast<std::size_t>(n));
  }
}

DetectionSet SubprocessDetector::run(const ImagePlane& frame, std::span<const Rect>) {
  std::lock_guard lock(mutex_);
  const std::string id = std::to_string(next_id_++);
  const auto image_path = scratch_ / ("frame-" + id + ".png");
  save_png(frame, image_path, frame.modality() == Modality::Infrared ? 16 : 8);

  struct Cleanup {
    std::filesystem::path path;
    ~Cleanup() {
      std::error_code ec;
      std::filesystem::remove(path, ec);
    }
  } cleanup{image_path};

  try {
    if (!child_) start();
    const nlohmann::json request{{"id", id},
                                 {"image_path", image_path.string()},
                                 {"modality", std::string(to_string(config_.modality))}};
    write_all(child_->in_fd, request.dump() + "\n");
    const std::string line = read_line();
    nlohmann::json response;
    try {
      response = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      throw Error(ErrorKind::Detector, "adapter sent malformed JSON: " + line.substr(0, 200));
    }
    if (!response.is_object() || !response.contains("id") || !response["id"].is_string() ||
        !response.contains("detections")) {
      throw Error(ErrorKind::Detector, "adapter response needs \"id\" and \"detections\"");
    }
    if (response["id"].get<std::string>() != id) {
      throw Error(ErrorKind::Detector, "adapter answered id " + response["id"].dump() +
                                           ", expected \"" + id + "\"");
    }
    DetectionSet detections = detections_from_json(response["detections"]);
    const Rect bounds{0.0, 0.0, static_cast<double>(frame.width()),
                      static_cast<double>(frame.height())};
    for (auto& d : detections) {
      if (!(d.score >= 0.0 && d.score <= 1.0)) {
        throw Error(ErrorKind::Detector, "adapter score outside [0, 1]");
      }
      d.box = intersect(d.box, bounds);
    }
    return detections;
  } catch (const Error& e) {
    stop();
    throw Error(ErrorKind::Detector, config_.name + ": " + e.what());
  }
}

}  // namespace dualpatch
