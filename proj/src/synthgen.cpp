#include "poseforge/synthgen.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "poseforge/io.hpp"

namespace poseforge::synth {

namespace {

using Vec2 = Eigen::Vector2d;

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kLimbWidth = 2.0;
constexpr int kTextureComponents = 6;

// Per-clip appearance drawn from the seed; motion is fully determined by phase.
struct Figure {
  double cx = 0, cy = 0;
  double scale = 1;
  double torso = 0, head_r = 0, shoulder = 0, hip = 0;
  double upper_arm = 0, forearm = 0, thigh = 0, shin = 0;
  double gray = 0;
  std::array<double, kTextureComponents> tex_fx{}, tex_fy{}, tex_phase{};
};

Figure make_figure(const SynthParams& p) {
  Rng rng = make_rng(p.seed, "figure", hash_string(p.video_id));
  const double s = p.image_size;
  Figure f;
  f.scale = 0.92 + 0.16 * uniform01(rng);
  f.cx = s * (0.5 + 0.08 * (uniform01(rng) - 0.5));
  f.cy = s * (0.41 + 0.04 * (uniform01(rng) - 0.5));
  f.torso = 0.24 * s * f.scale;
  f.head_r = 0.055 * s * f.scale;
  f.shoulder = 0.075 * s * f.scale;
  f.hip = 0.045 * s * f.scale;
  f.upper_arm = 0.15 * s * f.scale;
  f.forearm = 0.13 * s * f.scale;
  f.thigh = 0.17 * s * f.scale;
  f.shin = 0.16 * s * f.scale;
  f.gray = 10.0 + 30.0 * uniform01(rng);
  for (int k = 0; k < kTextureComponents; ++k) {
    const double wavelength = 6.0 + 18.0 * uniform01(rng);
    const double dir = kTwoPi * uniform01(rng);
    f.tex_fx[k] = std::cos(dir) / wavelength;
    f.tex_fy[k] = std::sin(dir) / wavelength;
    f.tex_phase[k] = kTwoPi * uniform01(rng);
  }
  return f;
}

// Unit vector at `angle` from straight down, rotated outward on `side` (-1 left, +1 right).
Vec2 limb_dir(double angle, double side) { return {side * std::sin(angle), std::cos(angle)}; }

Joints pose_for_phase(const Figure& f, double amplitude, double phase) {
  const double phi = kTwoPi * phase;
  const double arm_amp = amplitude / (f.upper_arm + f.forearm);
  const double leg_amp = amplitude / (f.thigh + f.shin);
  const Vec2 neck(f.cx, f.cy - f.torso / 2);
  const Vec2 pelvis(f.cx, f.cy + f.torso / 2);

  Joints j;
  auto set = [&](int idx, const Vec2& v) { j.row(idx) = v.transpose(); };
  set(kNeck, neck);
  set(kHead, neck - Vec2(0, f.head_r + 0.35 * f.head_r));

  const double arm_shift[2] = {0.0, 0.6};  // left, right
  const double leg_shift[2] = {0.0, -1.2};
  const int shoulders[2] = {kLeftShoulder, kRightShoulder};
  const int elbows[2] = {kLeftElbow, kRightElbow};
  const int wrists[2] = {kLeftWrist, kRightWrist};
  const int hips[2] = {kLeftHip, kRightHip};
  const int knees[2] = {kLeftKnee, kRightKnee};
  const int ankles[2] = {kLeftAnkle, kRightAnkle};
  for (int side = 0; side < 2; ++side) {
    const double sgn = side == 0 ? -1.0 : 1.0;
    const double a = phi + arm_shift[side];
    const double upper = 0.5 + arm_amp * std::sin(a);
    const double bend = 0.3 + 0.8 * arm_amp * std::cos(a);
    const Vec2 shoulder = neck + Vec2(sgn * f.shoulder, 0.12 * f.torso);
    const Vec2 elbow = shoulder + f.upper_arm * limb_dir(upper, sgn);
    const Vec2 wrist = elbow + f.forearm * limb_dir(upper + bend, sgn);
    set(shoulders[side], shoulder);
    set(elbows[side], elbow);
    set(wrists[side], wrist);

    const double l = phi + leg_shift[side];
    const double thigh = 0.15 + 0.5 * leg_amp * std::sin(l);
    const double knee_bend = -0.4 * leg_amp * std::cos(l);
    const Vec2 hip = pelvis + Vec2(sgn * f.hip, 0);
    const Vec2 knee = hip + f.thigh * limb_dir(thigh, sgn);
    const Vec2 ankle = knee + f.shin * limb_dir(thigh + knee_bend, sgn);
    set(hips[side], hip);
    set(knees[side], knee);
    set(ankles[side], ankle);
  }
  return j;
}

struct Segment {
  Vec2 a, b;
  double gray;
};

double segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double len2 = ab.squaredNorm();
  const double t = len2 > 0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
  return (p - (a + t * ab)).norm();
}

double phase_of(int frame, int period) {
  return static_cast<double>(frame % period) / static_cast<double>(period);
}

}  // namespace

void validate(const SynthParams& p) {
  if (p.period < 4) throw ConfigError("synth: period must be >= 4");
  if (p.n_frames < 2 * p.period) throw ConfigError("synth: n_frames must be >= 2*period");
  if (!(p.amplitude > 0)) throw ConfigError("synth: amplitude must be > 0");
  if (p.image_size < 32) throw ConfigError("synth: image_size must be >= 32");
  if (p.noise_sigma < 0) throw ConfigError("synth: noise_sigma must be >= 0");
  if (p.video_id.empty() || p.video_id.find_first_of("\t\n/:") != std::string::npos) {
    throw ConfigError("synth: video_id must be non-empty without tabs, slashes or colons");
  }
}

Joints pose_at(const SynthParams& params, int frame) {
  return pose_for_phase(make_figure(params), params.amplitude, phase_of(frame, params.period));
}

std::pair<VideoClip, SynthGroundTruth> generate_clip(const SynthParams& params) {
  validate(params);
  const Figure fig = make_figure(params);
  const int size = params.image_size;

  VideoClip clip;
  clip.video_id = params.video_id;
  SynthGroundTruth gt;
  gt.video_id = params.video_id;
  gt.period = params.period;

  Grid<double> coverage(size, size);
  Grid<double> ink(size, size);
  for (int t = 0; t < params.n_frames; ++t) {
    const double phase = phase_of(t, params.period);
    const Joints j = pose_for_phase(fig, params.amplitude, phase);
    auto at = [&](int idx) { return Vec2(j(idx, 0), j(idx, 1)); };

    const double left = fig.gray + 25.0;
    const double right = fig.gray + 50.0;
    const Vec2 pelvis(fig.cx, fig.cy + fig.torso / 2);
    const std::array<Segment, 14> limbs = {{
        {at(kNeck), at(kHead), fig.gray},
        {at(kNeck), pelvis, fig.gray},
        {at(kNeck), at(kLeftShoulder), fig.gray},
        {at(kNeck), at(kRightShoulder), fig.gray},
        {at(kLeftShoulder), at(kLeftElbow), left},
        {at(kLeftElbow), at(kLeftWrist), left},
        {at(kRightShoulder), at(kRightElbow), right},
        {at(kRightElbow), at(kRightWrist), right},
        {pelvis, at(kLeftHip), fig.gray},
        {pelvis, at(kRightHip), fig.gray},
        {at(kLeftHip), at(kLeftKnee), left},
        {at(kLeftKnee), at(kLeftAnkle), left},
        {at(kRightHip), at(kRightKnee), right},
        {at(kRightKnee), at(kRightAnkle), right},
    }};

    const double reach = kLimbWidth / 2 + 0.5;
    for (int r = 0; r < kNumJoints; ++r) {
      const double pad = r == kHead ? fig.head_r + 0.5 : reach;
      if (j(r, 0) - pad < 0 || j(r, 1) - pad < 0 || j(r, 0) + pad > size || j(r, 1) + pad > size) {
        throw ConfigError("synth: amplitude " + format_double(params.amplitude) +
                          " moves the figure outside image_size " + std::to_string(size));
      }
    }

    coverage.setZero();
    ink.setZero();
    auto stamp = [&](double x0, double y0, double x1, double y1, auto&& cover_at, double gray) {
      const int xa = std::max(0, static_cast<int>(std::floor(x0)));
      const int ya = std::max(0, static_cast<int>(std::floor(y0)));
      const int xb = std::min(size - 1, static_cast<int>(std::ceil(x1)));
      const int yb = std::min(size - 1, static_cast<int>(std::ceil(y1)));
      for (int y = ya; y <= yb; ++y) {
        for (int x = xa; x <= xb; ++x) {
          const double c = cover_at(Vec2(x + 0.5, y + 0.5));
          if (c > coverage(y, x)) {
            coverage(y, x) = c;
            ink(y, x) = gray;
          }
        }
      }
    };
    for (const Segment& s : limbs) {
      stamp(std::min(s.a.x(), s.b.x()) - reach, std::min(s.a.y(), s.b.y()) - reach,
            std::max(s.a.x(), s.b.x()) + reach, std::max(s.a.y(), s.b.y()) + reach,
            [&](const Vec2& p) {
              return std::clamp(reach - segment_distance(p, s.a, s.b), 0.0, 1.0);
            },
            s.gray);
    }
    const Vec2 head = at(kHead);
    const double head_reach = fig.head_r + 0.5;
    stamp(head.x() - head_reach, head.y() - head_reach, head.x() + head_reach,
          head.y() + head_reach,
          [&](const Vec2& p) { return std::clamp(head_reach - (p - head).norm(), 0.0, 1.0); },
          fig.gray);

    Rng noise_rng = make_rng(params.seed, "noise/" + params.video_id, static_cast<std::uint64_t>(t));
    std::normal_distribution<double> noise(0.0, params.noise_sigma > 0 ? params.noise_sigma : 1.0);
    const double shift = t * params.background_motion;

    Frame frame;
    frame.video_id = params.video_id;
    frame.frame_index = t;
    frame.image.resize(size, size);
    int bx0 = size, by0 = size, bx1 = -1, by1 = -1;
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        double bg = 150.0;
        for (int k = 0; k < kTextureComponents; ++k) {
          bg += 10.0 * std::sin(kTwoPi * (fig.tex_fx[k] * (x + 0.5 + shift) +
                                          fig.tex_fy[k] * (y + 0.5)) +
                                fig.tex_phase[k]);
        }
        const double c = coverage(y, x);
        double v = bg * (1.0 - c) + ink(y, x) * c;
        if (params.noise_sigma > 0) v += noise(noise_rng);
        frame.image(y, x) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
        if (c > 0) {
          bx0 = std::min(bx0, x);
          by0 = std::min(by0, y);
          bx1 = std::max(bx1, x);
          by1 = std::max(by1, y);
        }
      }
    }
    frame.box = {static_cast<double>(bx0), static_cast<double>(by0), bx1 + 1.0, by1 + 1.0};

    PoseAnnotation pose;
    pose.joints = j;
    pose.visible.fill(true);
    gt.poses.push_back(pose);
    gt.boxes.push_back(frame.box);
    gt.phase.push_back(phase);
    clip.frames.push_back(std::move(frame));
  }
  return {std::move(clip), std::move(gt)};
}

double cyclic_phase_distance(double a, double b) {
  double d = std::fmod(std::abs(a - b), 1.0);
  return std::min(d, 1.0 - d);
}

std::vector<BenchmarkExemplar> generate_benchmark(const SynthGroundTruth& gt, int n_exemplars,
                                                  std::uint64_t rng_seed) {
  constexpr int kPerClass = 10;
  constexpr double kTolerance = 0.05;
  // Phases are exact ratios k/period; the slack keeps k/period == 0.05 out of the open interval.
  constexpr double kSlack = 1e-9;
  if (n_exemplars < 0) throw Error("generate_benchmark: negative exemplar count");
  if (n_exemplars == 0) return {};

  const int n = static_cast<int>(gt.phase.size());
  std::vector<std::vector<int>> pos(n), neg(n);
  std::vector<int> eligible;
  for (int q = 0; q < n; ++q) {
    for (int s = 0; s < n; ++s) {
      if (s == q) continue;
      const double d = cyclic_phase_distance(gt.phase[q], gt.phase[s]);
      if (d < kTolerance - kSlack) pos[q].push_back(s);
      if (std::abs(d - 0.5) < kTolerance - kSlack) neg[q].push_back(s);
    }
    if (static_cast<int>(pos[q].size()) >= kPerClass && static_cast<int>(neg[q].size()) >= kPerClass) {
      eligible.push_back(q);
    }
  }
  if (static_cast<int>(eligible.size()) < n_exemplars) {
    throw Error("generate_benchmark: only " + std::to_string(eligible.size()) +
                " frames of " + gt.video_id + " have 10 positives and 10 negatives, " +
                std::to_string(n_exemplars) + " requested");
  }

  Rng rng = make_rng(rng_seed, "benchmark/" + gt.video_id);
  // Partial Fisher-Yates: the first k entries become a uniform sample without replacement.
  auto draw = [&](std::vector<int> pool, int k) {
    for (int i = 0; i < k; ++i) {
      const std::size_t j = i + uniform_index(rng, pool.size() - i);
      std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    return pool;
  };
  const std::vector<int> queries = draw(eligible, n_exemplars);
  std::vector<BenchmarkExemplar> out;
  out.reserve(queries.size());
  for (int q : queries) {
    BenchmarkExemplar ex;
    ex.query = {gt.video_id, q};
    for (int s : draw(pos[q], kPerClass)) ex.positives.push_back({gt.video_id, s});
    for (int s : draw(neg[q], kPerClass)) ex.negatives.push_back({gt.video_id, s});
    out.push_back(std::move(ex));
  }
  return out;
}

void write_ground_truth(const std::vector<SynthGroundTruth>& gts, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write ground truth: " + path.string());
  for (const auto& gt : gts) {
    for (std::size_t t = 0; t < gt.poses.size(); ++t) {
      out << gt.video_id << '\t' << t << '\t' << format_double(gt.phase[t]);
      for (int j = 0; j < kNumJoints; ++j) {
        out << '\t' << format_double(gt.poses[t].joints(j, 0)) << ','
            << format_double(gt.poses[t].joints(j, 1));
      }
      out << '\n';
    }
  }
}

std::vector<SynthGroundTruth> read_ground_truth(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("ground truth not found: " + path.string());
  std::map<std::string, std::map<int, std::pair<double, PoseAnnotation>>> by_video;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    const auto fields = split(line, '\t');
    if (fields.size() != 3 + kNumJoints) throw Error("malformed ground-truth record at " + where);
    PoseAnnotation pose;
    for (int j = 0; j < kNumJoints; ++j) {
      const auto xy = split(fields[3 + j], ',');
      if (xy.size() != 2) throw Error("malformed joint at " + where);
      pose.joints(j, 0) = parse_double(xy[0], where);
      pose.joints(j, 1) = parse_double(xy[1], where);
    }
    pose.visible.fill(true);
    by_video[std::string(fields[0])][parse_int(fields[1], where)] = {parse_double(fields[2], where), pose};
  }
  std::vector<SynthGroundTruth> out;
  for (auto& [video_id, frames] : by_video) {
    SynthGroundTruth gt;
    gt.video_id = video_id;
    int expected = 0;
    for (auto& [idx, rec] : frames) {
      if (idx != expected++) throw Error("ground truth for " + video_id + " is not contiguous from 0");
      gt.phase.push_back(rec.first);
      gt.poses.push_back(rec.second);
    }
    // Recover the period as the first later frame sharing frame 0's phase.
    for (std::size_t t = 1; t < gt.phase.size(); ++t) {
      if (gt.phase[t] == gt.phase[0]) {
        gt.period = static_cast<int>(t);
        break;
      }
    }
    out.push_back(std::move(gt));
  }
  return out;
}

ClipRecord write_clip_frames(const VideoClip& clip, const std::filesystem::path& root) {
  const std::filesystem::path rel_dir = std::filesystem::path("frames") / clip.video_id;
  std::filesystem::create_directories(root / rel_dir);
  ClipRecord rec;
  rec.video_id = clip.video_id;
  for (const Frame& f : clip.frames) {
    char name[32];
    std::snprintf(name, sizeof(name), "%06d.pgm", f.frame_index);
    const auto rel = rel_dir / name;
    write_pgm(root / rel, f.image);
    rec.frames.push_back({f.frame_index, rel, f.box});
  }
  return rec;
}

}  // namespace poseforge::synth
