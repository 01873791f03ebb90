#include "poseforge/sampling.hpp"

#include <cmath>
#include <fstream>

#include "poseforge/io.hpp"

namespace poseforge::sampling {

void validate(const SamplerConfig& cfg) {
  if (!(0 < cfg.tau_plus && cfg.tau_plus < cfg.tau_neg_min && cfg.tau_neg_min <= cfg.tau_neg_max)) {
    throw ConfigError("sampler: require 0 < tau_plus < tau_neg_min <= tau_neg_max");
  }
  if (!(cfg.sigma_neg.min <= cfg.sigma_neg.max && cfg.sigma_pos.min <= cfg.sigma_pos.max)) {
    throw ConfigError("sampler: IoU intervals must have min <= max");
  }
  if (!(cfg.sigma_neg.max < cfg.sigma_pos.min)) {
    throw ConfigError("sampler: sigma_neg.max must be below sigma_pos.min");
  }
  if (cfg.negatives_per_positive < 1) throw ConfigError("sampler: negatives_per_positive must be >= 1");
  if (cfg.max_crop_attempts < 1) throw ConfigError("sampler: max_crop_attempts must be >= 1");
}

std::optional<int> label_temporal(int delta_t, const SamplerConfig& cfg) {
  if (delta_t == cfg.tau_plus) return 1;
  const int mag = std::abs(delta_t);
  if (mag >= cfg.tau_neg_min && mag <= cfg.tau_neg_max) return 0;
  return std::nullopt;
}

std::optional<int> label_spatial(double iou_value, const SamplerConfig& cfg) {
  if (cfg.sigma_pos.contains(iou_value)) return 1;
  if (cfg.sigma_neg.contains(iou_value)) return 0;
  return std::nullopt;
}

std::vector<TemporalTuple> sample_temporal_tuples(const VideoClip& clip, const SamplerConfig& cfg,
                                                  int anchor_stride) {
  validate(cfg);
  if (anchor_stride < 1) throw ConfigError("sampler: anchor_stride must be >= 1");
  std::vector<TemporalTuple> out;
  const int n = static_cast<int>(clip.frames.size());
  if (n <= cfg.tau_neg_max) return out;

  for (int a = 0; a + cfg.tau_neg_max < n; a += anchor_stride) {
    std::vector<int> offsets;
    for (int d = cfg.tau_neg_min; d <= cfg.tau_neg_max; ++d) {
      if (a - d >= 0) offsets.push_back(-d);
      if (a + d < n) offsets.push_back(d);
    }
    if (static_cast<int>(offsets.size()) < cfg.negatives_per_positive) continue;

    const int anchor_index = clip.frames[a].frame_index;
    auto make = [&](int delta, int label) {
      return TemporalTuple{clip.video_id, anchor_index, clip.frames[a + delta].frame_index, delta,
                           label, TupleOrigin::Temporal};
    };
    out.push_back(make(cfg.tau_plus, 1));
    Rng rng = make_rng(cfg.seed, "temporal/" + clip.video_id, static_cast<std::uint64_t>(anchor_index));
    for (int k = 0; k < cfg.negatives_per_positive; ++k) {
      const std::size_t pick = k + uniform_index(rng, offsets.size() - k);
      std::swap(offsets[k], offsets[pick]);
      out.push_back(make(offsets[k], 0));
    }
  }
  return out;
}

std::vector<SpatialSample> sample_spatial_crops(const Frame& frame, const SamplerConfig& cfg) {
  validate(cfg);
  const double img_w = static_cast<double>(frame.image.cols());
  const double img_h = static_cast<double>(frame.image.rows());
  const BoundingBox& box = frame.box;
  Rng rng = make_rng(cfg.seed, "spatial/" + frame.video_id, static_cast<std::uint64_t>(frame.frame_index));

  // Positive crops need nearly centered proposals; negatives come from a wider spread.
  auto propose = [&](double center_spread) {
    const double cx = box.center_x() + (2 * uniform01(rng) - 1) * center_spread * box.width();
    const double cy = box.center_y() + (2 * uniform01(rng) - 1) * center_spread * box.height();
    const double scale = std::exp(std::log(0.5) + uniform01(rng) * std::log(4.0));
    const double aspect = 1.0 + 0.2 * (2 * uniform01(rng) - 1);
    const double w = box.width() * scale * std::sqrt(aspect);
    const double h = box.height() * scale / std::sqrt(aspect);
    return BoundingBox{cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2};
  };
  auto touches_image = [&](const BoundingBox& c) {
    return c.x_max > 0 && c.y_max > 0 && c.x_min < img_w && c.y_min < img_h;
  };

  std::vector<SpatialSample> out;
  auto collect = [&](int wanted_label, int wanted_count, double spread) {
    int found = 0;
    for (int attempt = 0; attempt < cfg.max_crop_attempts && found < wanted_count; ++attempt) {
      const BoundingBox crop = propose(spread);
      if (!touches_image(crop)) continue;
      const double overlap = iou(box, crop);
      const auto label = label_spatial(overlap, cfg);
      if (label && *label == wanted_label) {
        out.push_back({frame.ref(), crop, overlap, wanted_label});
        ++found;
      }
    }
  };
  collect(1, 1, 0.15);
  collect(0, cfg.negatives_per_positive, 0.75);
  return out;
}

void write_samples(const std::filesystem::path& path, const std::vector<TemporalTuple>& tuples,
                   const std::vector<SpatialSample>& spatial) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write samples: " + path.string());
  for (const auto& t : tuples) {
    out << (t.origin == TupleOrigin::Temporal ? 'T' : 'R') << '\t' << t.video_id << '\t'
        << t.anchor << '\t' << t.candidate << '\t' << t.label << '\n';
  }
  for (const auto& s : spatial) {
    out << "S\t" << s.frame.video_id << '\t' << s.frame.frame_index << '\t'
        << format_double(s.crop.x_min) << ',' << format_double(s.crop.y_min) << ','
        << format_double(s.crop.x_max) << ',' << format_double(s.crop.y_max) << '\t'
        << format_double(s.iou_value) << '\t' << s.label << '\n';
  }
}

void read_samples(const std::filesystem::path& path, std::vector<TemporalTuple>& tuples,
                  std::vector<SpatialSample>& spatial) {
  std::ifstream in(path);
  if (!in) throw ConfigError("samples file not found: " + path.string());
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    const auto f = split(line, '\t');
    if ((f[0] == "T" || f[0] == "R") && f.size() == 5) {
      TemporalTuple t;
      t.origin = f[0] == "T" ? TupleOrigin::Temporal : TupleOrigin::Repetition;
      t.video_id = std::string(f[1]);
      t.anchor = parse_int(f[2], where);
      t.candidate = parse_int(f[3], where);
      t.delta_t = t.candidate - t.anchor;
      t.label = parse_int(f[4], where);
      tuples.push_back(std::move(t));
    } else if (f[0] == "S" && f.size() == 6) {
      SpatialSample s;
      s.frame = {std::string(f[1]), parse_int(f[2], where)};
      const auto c = split(f[3], ',');
      if (c.size() != 4) throw Error("malformed crop at " + where);
      s.crop = {parse_double(c[0], where), parse_double(c[1], where), parse_double(c[2], where),
                parse_double(c[3], where)};
      s.iou_value = parse_double(f[4], where);
      s.label = parse_int(f[5], where);
      spatial.push_back(std::move(s));
    } else {
      throw Error("malformed sample record at " + where);
    }
  }
}

}  // namespace poseforge::sampling
