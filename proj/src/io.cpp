#include "pan/io.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;

namespace pan::io {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

std::string frame_name(std::size_t index_1based) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%06zu.ppm", index_1based);
  return buf;
}

void write_u32_le(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32_le(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) fail("checkpoint: truncated file");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_f32_le(std::ostream& os, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  write_u32_le(os, bits);
}

float read_f32_le(std::istream& is) {
  const std::uint32_t bits = read_u32_le(is);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

// Skips PNM whitespace and comments.
int pnm_int(std::istream& is, const std::string& path) {
  int c = is.get();
  while (c == '#' || std::isspace(c)) {
    if (c == '#') {
      while (c != '\n' && c != EOF) c = is.get();
    }
    c = is.get();
  }
  int value = 0;
  bool any = false;
  while (std::isdigit(c)) {
    value = value * 10 + (c - '0');
    any = true;
    c = is.get();
  }
  if (!any) fail("malformed PNM header in " + path);
  return value;
}

}  // namespace

// --- images -----------------------------------------------------------------

void write_ppm(const std::string& path, const Image8& img) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail("cannot write " + path);
  os << "P6\n" << img.width << " " << img.height << "\n255\n";
  os.write(reinterpret_cast<const char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
  if (!os) fail("short write to " + path);
}

Image8 read_ppm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail("cannot open " + path);
  char m0 = static_cast<char>(is.get()), m1 = static_cast<char>(is.get());
  if (m0 != 'P' || m1 != '6') fail(path + " is not a binary PPM (P6) image");
  Image8 img;
  img.width = static_cast<std::size_t>(pnm_int(is, path));
  img.height = static_cast<std::size_t>(pnm_int(is, path));
  const int maxval = pnm_int(is, path);
  if (maxval != 255) fail(path + ": unsupported maxval " + std::to_string(maxval));
  img.rgb.resize(img.width * img.height * 3);
  is.read(reinterpret_cast<char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
  if (!is) fail(path + ": truncated pixel data");
  return img;
}

void write_pgm(const std::string& path, std::size_t width, std::size_t height,
               const std::vector<std::uint8_t>& gray) {
  if (gray.size() != width * height) fail("write_pgm: buffer size mismatch for " + path);
  std::ofstream os(path, std::ios::binary);
  if (!os) fail("cannot write " + path);
  os << "P5\n" << width << " " << height << "\n255\n";
  os.write(reinterpret_cast<const char*>(gray.data()), static_cast<std::streamsize>(gray.size()));
  if (!os) fail("short write to " + path);
}

std::vector<std::uint8_t> read_pgm(const std::string& path, std::size_t& width, std::size_t& height) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail("cannot open " + path);
  char m0 = static_cast<char>(is.get()), m1 = static_cast<char>(is.get());
  if (m0 != 'P' || m1 != '5') fail(path + " is not a binary PGM (P5) image");
  width = static_cast<std::size_t>(pnm_int(is, path));
  height = static_cast<std::size_t>(pnm_int(is, path));
  const int maxval = pnm_int(is, path);
  if (maxval != 255) fail(path + ": unsupported maxval " + std::to_string(maxval));
  std::vector<std::uint8_t> gray(width * height);
  is.read(reinterpret_cast<char*>(gray.data()), static_cast<std::streamsize>(gray.size()));
  if (!is) fail(path + ": truncated pixel data");
  return gray;
}

// --- clips -------------------------------------------------------------------

ClipData load_clip_data(const std::string& dir) {
  if (!fs::is_directory(dir)) fail(dir + " is not a clip directory");
  std::size_t max_index = 0;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("frame_", 0) == 0 && name.size() == 16 && name.substr(12) == ".ppm") {
      max_index = std::max(max_index, static_cast<std::size_t>(std::stoul(name.substr(6, 6))));
    }
  }
  if (max_index == 0) fail("no frames found in " + dir);

  ClipData clip;
  clip.path = dir;
  clip.frames = max_index;
  for (std::size_t i = 1; i <= max_index; ++i) {
    const std::string path = (fs::path(dir) / frame_name(i)).string();
    if (!fs::exists(path)) fail("missing frame " + frame_name(i) + " in " + dir);
    Image8 img = read_ppm(path);
    if (i == 1) {
      clip.height = img.height;
      clip.width = img.width;
      clip.rgb.resize(clip.frames * clip.frame_bytes());
    } else if (img.height != clip.height || img.width != clip.width) {
      fail(path + ": resolution " + std::to_string(img.width) + "x" + std::to_string(img.height) +
           " differs from clip resolution " + std::to_string(clip.width) + "x" +
           std::to_string(clip.height));
    }
    // interleaved -> planar
    std::uint8_t* dst = clip.rgb.data() + (i - 1) * clip.frame_bytes();
    const std::size_t hw = clip.height * clip.width;
    for (std::size_t p = 0; p < hw; ++p) {
      dst[p] = img.rgb[3 * p];
      dst[hw + p] = img.rgb[3 * p + 1];
      dst[2 * hw + p] = img.rgb[3 * p + 2];
    }
  }
  return clip;
}

std::vector<TensorF> load_clip(const std::string& dir) {
  const ClipData clip = load_clip_data(dir);
  std::vector<TensorF> frames;
  frames.reserve(clip.frames);
  for (std::size_t t = 0; t < clip.frames; ++t) frames.push_back(clip.frame<float>(t));
  return frames;
}

void write_clip_frame(const std::string& dir, std::size_t index_1based, const Image8& img) {
  write_ppm((fs::path(dir) / frame_name(index_1based)).string(), img);
}

// --- dataset index ------------------------------------------------------------

void write_index(const std::string& csv_path, const DatasetIndex& index) {
  std::ofstream os(csv_path);
  if (!os) fail("cannot write " + csv_path);
  os << "path,label,frames\n";
  for (const auto& e : index.entries) os << e.path << "," << e.label << "," << e.frames << "\n";
}

DatasetIndex read_index(const std::string& csv_path) {
  std::ifstream is(csv_path);
  if (!is) fail("cannot open " + csv_path);
  std::string line;
  if (!std::getline(is, line) || line != "path,label,frames") {
    fail(csv_path + ": expected header 'path,label,frames'");
  }
  DatasetIndex index;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    DatasetIndex::Entry e;
    std::string label, frames;
    if (!std::getline(ss, e.path, ',') || !std::getline(ss, label, ',') || !std::getline(ss, frames)) {
      fail(csv_path + ": malformed row '" + line + "'");
    }
    e.label = std::stoi(label);
    e.frames = std::stoul(frames);
    index.entries.push_back(std::move(e));
  }
  return index;
}

std::vector<ClipData> load_dataset(const std::string& dir) {
  const std::string csv = (fs::path(dir) / "labels.csv").string();
  const DatasetIndex index = read_index(csv);
  std::vector<ClipData> clips;
  clips.reserve(index.entries.size());
  for (const auto& e : index.entries) {
    ClipData clip = load_clip_data((fs::path(dir) / e.path).string());
    if (clip.frames != e.frames) {
      fail(e.path + ": index lists " + std::to_string(e.frames) + " frames but found " +
           std::to_string(clip.frames));
    }
    clip.label = e.label;
    clips.push_back(std::move(clip));
  }
  return clips;
}

// --- checkpoint -----------------------------------------------------------------

static constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const ParamSet<float>& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail("cannot write " + path);
  os.write("PANW", 4);
  write_u32_le(os, kCheckpointVersion);
  write_u32_le(os, static_cast<std::uint32_t>(params.items.size()));
  for (const auto& p : params.items) {
    write_u32_le(os, static_cast<std::uint32_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    write_u32_le(os, static_cast<std::uint32_t>(p.value.shape.size()));
    for (std::size_t e : p.value.shape) write_u32_le(os, static_cast<std::uint32_t>(e));
    for (float v : p.value.data) write_f32_le(os, v);
  }
  if (!os) fail("short write to " + path);
}

ParamSet<float> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail("cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "PANW", 4) != 0) fail(path + " is not a PANW checkpoint");
  const std::uint32_t version = read_u32_le(is);
  if (version != kCheckpointVersion) {
    fail(path + ": unknown checkpoint version " + std::to_string(version));
  }
  const std::uint32_t count = read_u32_le(is);
  ParamSet<float> params;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = read_u32_le(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is) fail(path + ": truncated entry name");
    const std::uint32_t rank = read_u32_le(is);
    std::vector<std::size_t> shape(rank);
    for (auto& e : shape) e = read_u32_le(is);
    TensorF value(shape);
    for (auto& v : value.data) v = read_f32_le(is);
    params.add(name, std::move(value));
  }
  return params;
}

// --- synthetic dataset ------------------------------------------------------------

const char* const kSynthClassNames[4] = {"MoveUp", "MoveDown", "MoveLeft", "MoveRight"};

void SynthSpec::validate() const {
  if (frames < 2) fail("SynthSpec: need at least 2 frames");
  if (square < 2 || square >= size) fail("SynthSpec: square does not fit the frame");
  const std::size_t travel = (frames - 1) * speed;
  const std::size_t half = (travel + 1) / 2;
  if (size < square + 2 * half) {
    fail("SynthSpec: square leaves the frame (size " + std::to_string(size) + ", square " +
         std::to_string(square) + ", travel " + std::to_string(travel) + ")");
  }
}

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  std::uint64_t h = a * 0x9e3779b97f4a7c15ull;
  h ^= b + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  h ^= c + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  return h;
}

// Smooth per-clip texture: coarse random grid, bilinear upsampled.
std::vector<float> make_texture(std::size_t size, Rng& rng) {
  constexpr std::size_t kGrid = 8;
  float grid[3][kGrid + 1][kGrid + 1];
  for (auto& plane : grid) {
    for (auto& row : plane) {
      for (auto& v : row) v = static_cast<float>(rng.uniform(0.1, 0.9));
    }
  }
  std::vector<float> tex(3 * size * size);
  const double scale = static_cast<double>(kGrid) / static_cast<double>(size);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t y = 0; y < size; ++y) {
      const double gy = y * scale;
      const std::size_t y0 = static_cast<std::size_t>(gy);
      const double fy = gy - static_cast<double>(y0);
      for (std::size_t x = 0; x < size; ++x) {
        const double gx = x * scale;
        const std::size_t x0 = static_cast<std::size_t>(gx);
        const double fx = gx - static_cast<double>(x0);
        const double v = (1 - fy) * ((1 - fx) * grid[c][y0][x0] + fx * grid[c][y0][x0 + 1]) +
                         fy * ((1 - fx) * grid[c][y0 + 1][x0] + fx * grid[c][y0 + 1][x0 + 1]);
        tex[(c * size + y) * size + x] = static_cast<float>(v);
      }
    }
  }
  return tex;
}

std::uint8_t to_byte(double v) {
  const double s = v * 255.0 + 0.5;
  return static_cast<std::uint8_t>(std::clamp(s, 0.0, 255.0));
}

}  // namespace

DatasetIndex synth_dataset(const SynthSpec& spec, const std::string& out_dir) {
  spec.validate();
  fs::create_directories(out_dir);

  const std::size_t travel = (spec.frames - 1) * spec.speed;
  const std::size_t half = (travel + 1) / 2;
  const std::int64_t mid_lo = static_cast<std::int64_t>(half);
  const std::int64_t mid_hi = static_cast<std::int64_t>(spec.size - spec.square - half);
  // direction (dr, dc) per class: Up, Down, Left, Right
  const int dir_r[4] = {-1, 1, 0, 0};
  const int dir_c[4] = {0, 0, -1, 1};

  DatasetIndex index;
  for (int cls = 0; cls < 4; ++cls) {
    for (std::size_t clip = 0; clip < spec.clips_per_class; ++clip) {
      Rng rng(mix(spec.seed, static_cast<std::uint64_t>(cls) + 1, clip + 1));
      const std::vector<float> tex = make_texture(spec.size, rng);
      const float sq_color[3] = {static_cast<float>(rng.uniform()), static_cast<float>(rng.uniform()),
                                 static_cast<float>(rng.uniform())};
      // Trajectory midpoint from a class-independent distribution.
      const std::int64_t mid_r = rng.uniform_int(mid_lo, mid_hi);
      const std::int64_t mid_c = rng.uniform_int(mid_lo, mid_hi);
      const std::int64_t start_r =
          dir_r[cls] == 0 ? mid_r
                          : (dir_r[cls] > 0 ? mid_r - static_cast<std::int64_t>(travel / 2)
                                            : mid_r + static_cast<std::int64_t>(travel - travel / 2));
      const std::int64_t start_c =
          dir_c[cls] == 0 ? mid_c
                          : (dir_c[cls] > 0 ? mid_c - static_cast<std::int64_t>(travel / 2)
                                            : mid_c + static_cast<std::int64_t>(travel - travel / 2));

      const std::string rel =
          (fs::path(kSynthClassNames[cls]) / ("clip_" + std::to_string(clip))).string();
      const std::string dir = (fs::path(out_dir) / rel).string();
      fs::create_directories(dir);

      Image8 img;
      img.width = img.height = spec.size;
      img.rgb.resize(3 * spec.size * spec.size);
      for (std::size_t t = 0; t < spec.frames; ++t) {
        const std::int64_t r0 = start_r + dir_r[cls] * static_cast<std::int64_t>(t * spec.speed);
        const std::int64_t c0 = start_c + dir_c[cls] * static_cast<std::int64_t>(t * spec.speed);
        for (std::size_t y = 0; y < spec.size; ++y) {
          for (std::size_t x = 0; x < spec.size; ++x) {
            const bool inside = static_cast<std::int64_t>(y) >= r0 &&
                                static_cast<std::int64_t>(y) < r0 + static_cast<std::int64_t>(spec.square) &&
                                static_cast<std::int64_t>(x) >= c0 &&
                                static_cast<std::int64_t>(x) < c0 + static_cast<std::int64_t>(spec.square);
            for (std::size_t c = 0; c < 3; ++c) {
              double v = inside ? sq_color[c] : tex[(c * spec.size + y) * spec.size + x];
              if (spec.noise_sigma > 0) v += spec.noise_sigma * rng.normal();
              img.rgb[(y * spec.size + x) * 3 + c] = to_byte(v);
            }
          }
        }
        write_clip_frame(dir, t + 1, img);
      }
      index.entries.push_back({rel, cls, spec.frames});
    }
  }

  write_index((fs::path(out_dir) / "labels.csv").string(), index);
  nlohmann::json manifest = {
      {"classes", {kSynthClassNames[0], kSynthClassNames[1], kSynthClassNames[2], kSynthClassNames[3]}},
      {"clips_per_class", spec.clips_per_class},
      {"frames", spec.frames},
      {"size", spec.size},
      {"square", spec.square},
      {"speed", spec.speed},
      {"noise_sigma", spec.noise_sigma},
      {"seed", spec.seed}};
  std::ofstream mf((fs::path(out_dir) / "manifest.json").string());
  mf << manifest.dump(2) << "\n";
  return index;
}

// --- PA map export ------------------------------------------------------------------

void export_pa_pgm(const TensorF& pa, const std::string& path) {
  require_rank(pa, 3, "export_pa_pgm");
  if (pa.dim(0) != 1) fail("export_pa_pgm: expected a single-channel map");
  const std::size_t h = pa.dim(1), w = pa.dim(2);
  float lo = pa[0], hi = pa[0];
  for (float v : pa.data) {
    if (!std::isfinite(v)) fail("export_pa_pgm: non-finite value in map");
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const bool degenerate = hi == lo;
  std::vector<std::uint8_t> gray(h * w);
  if (degenerate) {
    std::fill(gray.begin(), gray.end(), static_cast<std::uint8_t>(128));
  } else {
    const float scale = 255.0f / (hi - lo);
    for (std::size_t i = 0; i < gray.size(); ++i) {
      gray[i] = static_cast<std::uint8_t>(std::clamp((pa[i] - lo) * scale + 0.5f, 0.0f, 255.0f));
    }
  }
  write_pgm(path, w, h, gray);
  nlohmann::json sidecar = {{"min", lo}, {"max", hi}, {"degenerate", degenerate}};
  std::ofstream os(path + ".json");
  if (!os) fail("cannot write " + path + ".json");
  os << sidecar.dump(2) << "\n";
}

TensorF import_pa_pgm(const std::string& path) {
  std::ifstream js(path + ".json");
  if (!js) fail("cannot open sidecar " + path + ".json");
  nlohmann::json sidecar = nlohmann::json::parse(js);
  const float lo = sidecar.at("min").get<float>();
  const float hi = sidecar.at("max").get<float>();
  const bool degenerate = sidecar.at("degenerate").get<bool>();
  std::size_t w = 0, h = 0;
  const std::vector<std::uint8_t> gray = read_pgm(path, w, h);
  TensorF pa({1, h, w});
  for (std::size_t i = 0; i < gray.size(); ++i) {
    pa[i] = degenerate ? lo : lo + (hi - lo) * (static_cast<float>(gray[i]) / 255.0f);
  }
  return pa;
}

}  // namespace pan::io
