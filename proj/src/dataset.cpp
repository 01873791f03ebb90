#include "poseforge/dataset.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "poseforge/io.hpp"

namespace poseforge {

const std::array<const char*, kNumJoints> kJointNames = {
    "head",     "neck",      "l_shoulder", "r_shoulder", "l_elbow", "r_elbow", "l_wrist",
    "r_wrist",  "l_hip",     "r_hip",      "l_knee",     "r_knee",  "l_ankle", "r_ankle"};

int VideoClip::position_of(int frame_index) const {
  auto it = std::lower_bound(frames.begin(), frames.end(), frame_index,
                             [](const Frame& f, int idx) { return f.frame_index < idx; });
  if (it == frames.end() || it->frame_index != frame_index) return -1;
  return static_cast<int>(it - frames.begin());
}

namespace {

struct PnmHeader {
  char kind = 0;  // '5' or '6'
  int width = 0;
  int height = 0;
  int maxval = 0;
};

PnmHeader read_pnm_header(std::istream& in, const std::filesystem::path& path) {
  auto next_token = [&]() {
    std::string tok;
    char c;
    while (in.get(c)) {
      if (c == '#') {
        std::string skip;
        std::getline(in, skip);
      } else if (!std::isspace(static_cast<unsigned char>(c))) {
        tok.push_back(c);
        break;
      }
    }
    while (in.get(c) && !std::isspace(static_cast<unsigned char>(c))) tok.push_back(c);
    return tok;
  };
  PnmHeader h;
  const std::string magic = next_token();
  if (magic != "P5" && magic != "P6") {
    throw Error("unsupported image format (expected P5/P6): " + path.string());
  }
  h.kind = magic[1];
  try {
    h.width = std::stoi(next_token());
    h.height = std::stoi(next_token());
    h.maxval = std::stoi(next_token());
  } catch (const std::exception&) {
    throw Error("malformed PNM header: " + path.string());
  }
  if (h.width <= 0 || h.height <= 0 || h.maxval <= 0 || h.maxval > 255) {
    throw Error("unsupported PNM dimensions or depth: " + path.string());
  }
  return h;
}

PnmHeader peek_pnm_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open frame file: " + path.string());
  return read_pnm_header(in, path);
}

}  // namespace

GrayImage read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open frame file: " + path.string());
  const PnmHeader h = read_pnm_header(in, path);
  const int channels = h.kind == '6' ? 3 : 1;
  std::vector<unsigned char> raw(static_cast<std::size_t>(h.width) * h.height * channels);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size())) {
    throw Error("truncated image data: " + path.string());
  }
  GrayImage img(h.height, h.width);
  for (int y = 0; y < h.height; ++y) {
    for (int x = 0; x < h.width; ++x) {
      const std::size_t o = (static_cast<std::size_t>(y) * h.width + x) * channels;
      int v = raw[o];
      if (channels == 3) v = (raw[o] + raw[o + 1] + raw[o + 2] + 1) / 3;
      if (h.maxval != 255) v = (v * 255 + h.maxval / 2) / h.maxval;
      img(y, x) = static_cast<std::uint8_t>(v);
    }
  }
  return img;
}

void write_pgm(const std::filesystem::path& path, const GrayImage& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write image: " + path.string());
  out << "P5\n" << image.cols() << ' ' << image.rows() << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.data()),
            static_cast<std::streamsize>(image.size()));
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("manifest not found: " + path.string());
  DatasetManifest manifest;
  manifest.root = path.parent_path();
  std::map<std::string, std::vector<FrameRecord>> by_video;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split(line, '\t');
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (fields.size() != 4) throw Error("malformed manifest record at " + where);
    FrameRecord rec;
    const std::string video_id(fields[0]);
    rec.frame_index = parse_int(fields[1], where);
    rec.relative_path = std::string(fields[2]);
    const auto coords = split(fields[3], ',');
    if (coords.size() != 4) throw Error("malformed box at " + where);
    rec.box = {parse_double(coords[0], where), parse_double(coords[1], where),
               parse_double(coords[2], where), parse_double(coords[3], where)};
    const std::string id = video_id + "/" + std::to_string(rec.frame_index);
    if (rec.frame_index < 0) throw Error("negative frame_index for " + id);
    if (!rec.box.valid()) throw Error("invalid box (min >= max) for " + id);
    const auto file = manifest.root / rec.relative_path;
    if (!std::filesystem::exists(file)) {
      throw Error("missing frame file for " + id + ": " + file.string());
    }
    const PnmHeader h = peek_pnm_header(file);
    if (!rec.box.inside(h.width, h.height)) throw Error("box outside image bounds for " + id);
    by_video[video_id].push_back(std::move(rec));
  }
  for (auto& [video_id, frames] : by_video) {
    std::sort(frames.begin(), frames.end(),
              [](const FrameRecord& a, const FrameRecord& b) { return a.frame_index < b.frame_index; });
    for (std::size_t i = 1; i < frames.size(); ++i) {
      if (frames[i].frame_index == frames[i - 1].frame_index) {
        throw Error("duplicate frame_index for " + video_id + "/" +
                    std::to_string(frames[i].frame_index));
      }
    }
    manifest.clips.push_back({video_id, std::move(frames)});
  }
  return manifest;
}

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  std::vector<const ClipRecord*> clips;
  for (const auto& c : manifest.clips) clips.push_back(&c);
  std::sort(clips.begin(), clips.end(),
            [](const ClipRecord* a, const ClipRecord* b) { return a->video_id < b->video_id; });
  std::ofstream out(path);
  if (!out) throw Error("cannot write manifest: " + path.string());
  for (const ClipRecord* clip : clips) {
    std::vector<const FrameRecord*> frames;
    for (const auto& f : clip->frames) frames.push_back(&f);
    std::sort(frames.begin(), frames.end(), [](const FrameRecord* a, const FrameRecord* b) {
      return a->frame_index < b->frame_index;
    });
    for (const FrameRecord* f : frames) {
      out << clip->video_id << '\t' << f->frame_index << '\t' << f->relative_path.generic_string()
          << '\t' << format_double(f->box.x_min) << ',' << format_double(f->box.y_min) << ','
          << format_double(f->box.x_max) << ',' << format_double(f->box.y_max) << '\n';
    }
  }
}

VideoClip load_clip(const DatasetManifest& manifest, const ClipRecord& clip) {
  VideoClip out;
  out.video_id = clip.video_id;
  out.frames.reserve(clip.frames.size());
  for (const auto& rec : clip.frames) {
    Frame f;
    f.video_id = clip.video_id;
    f.frame_index = rec.frame_index;
    f.image = read_pnm(manifest.root / rec.relative_path);
    f.box = rec.box;
    out.frames.push_back(std::move(f));
  }
  return out;
}

std::vector<VideoClip> load_clips(const DatasetManifest& manifest) {
  std::vector<VideoClip> clips;
  clips.reserve(manifest.clips.size());
  for (const auto& c : manifest.clips) clips.push_back(load_clip(manifest, c));
  return clips;
}

ImageF crop_resize(const GrayImage& image, const BoundingBox& box, int out_size) {
  const int w = static_cast<int>(image.cols());
  const int h = static_cast<int>(image.rows());
  if (out_size <= 0) throw Error("crop_resize: out_size must be positive");
  if (!box.valid() || box.x_max <= 0 || box.y_max <= 0 || box.x_min >= w || box.y_min >= h) {
    throw Error("crop_resize: box lies fully outside the image");
  }
  const double sx = box.width() / out_size;
  const double sy = box.height() / out_size;
  ImageF out(out_size, out_size);
  for (int i = 0; i < out_size; ++i) {
    const double y = box.y_min + (i + 0.5) * sy;
    for (int j = 0; j < out_size; ++j) {
      const double x = box.x_min + (j + 0.5) * sx;
      if (x < 0 || y < 0 || x > w || y > h) {
        out(i, j) = 0.0f;
        continue;
      }
      const double px = std::clamp(x - 0.5, 0.0, static_cast<double>(w - 1));
      const double py = std::clamp(y - 0.5, 0.0, static_cast<double>(h - 1));
      const int x0 = static_cast<int>(px);
      const int y0 = static_cast<int>(py);
      const int x1 = std::min(x0 + 1, w - 1);
      const int y1 = std::min(y0 + 1, h - 1);
      const double fx = px - x0;
      const double fy = py - y0;
      const double top = (1 - fx) * image(y0, x0) + fx * image(y0, x1);
      const double bottom = (1 - fx) * image(y1, x0) + fx * image(y1, x1);
      out(i, j) = static_cast<float>((1 - fy) * top + fy * bottom);
    }
  }
  return out;
}

}  // namespace poseforge
