#include <doctest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "pan/io.hpp"
#include "pan/rng.hpp"

using namespace pan;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("pan_test_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
};

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  REQUIRE(is.good());
  return std::string(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

io::Image8 random_image(std::size_t w, std::size_t h, Rng& rng) {
  io::Image8 img;
  img.width = w;
  img.height = h;
  img.rgb.resize(3 * w * h);
  for (auto& b : img.rgb) b = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
  return img;
}

// Row/column centroid of the summed absolute difference of two frames.
std::pair<double, double> diff_centroid(const TensorF& a, const TensorF& b) {
  const std::size_t h = a.dim(1), w = a.dim(2);
  double total = 0.0, ry = 0.0, cx = 0.0;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double d = 0.0;
      for (std::size_t c = 0; c < 3; ++c) d += std::abs(a.at3(c, y, x) - b.at3(c, y, x));
      total += d;
      ry += d * static_cast<double>(y);
      cx += d * static_cast<double>(x);
    }
  }
  return {ry / total, cx / total};
}

}  // namespace

TEST_CASE("ppm round trip") {
  TempDir tmp("ppm");
  Rng rng(1);
  auto img = random_image(7, 5, rng);
  const std::string path = (tmp.path / "img.ppm").string();
  io::write_ppm(path, img);
  auto back = io::read_ppm(path);
  CHECK(back.width == 7);
  CHECK(back.height == 5);
  CHECK(back.rgb == img.rgb);
  CHECK_THROWS(io::read_ppm((tmp.path / "missing.ppm").string()));
}

TEST_CASE("pgm round trip and comment handling") {
  TempDir tmp("pgm");
  std::vector<std::uint8_t> gray = {0, 64, 128, 192, 255, 10};
  const std::string path = (tmp.path / "img.pgm").string();
  io::write_pgm(path, 3, 2, gray);
  std::size_t w = 0, h = 0;
  auto back = io::read_pgm(path, w, h);
  CHECK(w == 3);
  CHECK(h == 2);
  CHECK(back == gray);

  // a header comment must be skipped
  std::ofstream os((tmp.path / "comment.pgm").string(), std::ios::binary);
  os << "P5\n# a comment\n2 1\n255\n";
  os.put(static_cast<char>(9));
  os.put(static_cast<char>(200));
  os.close();
  auto c = io::read_pgm((tmp.path / "comment.pgm").string(), w, h);
  CHECK(w == 2);
  CHECK(c[1] == 200);
}

TEST_CASE("checkpoint round trips are bit identical") {
  TempDir tmp("ckpt");
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    ParamSet<float> params;
    const std::size_t n_params = 1 + static_cast<std::size_t>(rng.uniform_int(0, 4));
    for (std::size_t i = 0; i < n_params; ++i) {
      std::vector<std::size_t> shape;
      const std::size_t rank = 1 + static_cast<std::size_t>(rng.uniform_int(0, 3));
      for (std::size_t r = 0; r < rank; ++r) {
        shape.push_back(1 + static_cast<std::size_t>(rng.uniform_int(0, 4)));
      }
      TensorF t(shape);
      for (auto& v : t.data) v = static_cast<float>(rng.uniform(-10.0, 10.0));
      params.add("p" + std::to_string(i), std::move(t));
    }
    const std::string path = (tmp.path / "model.bin").string();
    io::save_checkpoint(path, params);
    auto back = io::load_checkpoint(path);
    REQUIRE(back.items.size() == params.items.size());
    for (std::size_t i = 0; i < params.items.size(); ++i) {
      CHECK(back.items[i].name == params.items[i].name);
      REQUIRE(back.items[i].value.shape == params.items[i].value.shape);
      for (std::size_t j = 0; j < params.items[i].value.size(); ++j) {
        // bit identity, not approximate equality
        CHECK(back.items[i].value[j] == params.items[i].value[j]);
      }
    }
    // a second save of the loaded set produces the same bytes
    const std::string path2 = (tmp.path / "model2.bin").string();
    io::save_checkpoint(path2, back);
    CHECK(slurp(path) == slurp(path2));
  }
}

TEST_CASE("checkpoint loader rejects bad files") {
  TempDir tmp("badckpt");
  {
    std::ofstream os((tmp.path / "magic.bin").string(), std::ios::binary);
    os << "NOPE";
  }
  CHECK_THROWS_WITH_AS(io::load_checkpoint((tmp.path / "magic.bin").string()),
                       doctest::Contains("not a PANW checkpoint"), std::runtime_error);
  {
    std::ofstream os((tmp.path / "version.bin").string(), std::ios::binary);
    os << "PANW";
    const unsigned char v2[8] = {2, 0, 0, 0, 0, 0, 0, 0};  // version 2, zero entries
    os.write(reinterpret_cast<const char*>(v2), 8);
  }
  CHECK_THROWS_WITH_AS(io::load_checkpoint((tmp.path / "version.bin").string()),
                       doctest::Contains("unknown checkpoint version"), std::runtime_error);
}

TEST_CASE("clip loading validates numbering and resolution") {
  TempDir tmp("clip");
  Rng rng(3);
  io::write_clip_frame(tmp.str(), 1, random_image(4, 4, rng));
  io::write_clip_frame(tmp.str(), 3, random_image(4, 4, rng));
  CHECK_THROWS_WITH_AS(io::load_clip_data(tmp.str()), doctest::Contains("frame_000002.ppm"),
                       std::runtime_error);
  io::write_clip_frame(tmp.str(), 2, random_image(5, 4, rng));
  CHECK_THROWS_WITH_AS(io::load_clip_data(tmp.str()), doctest::Contains("differs"), std::runtime_error);
  io::write_clip_frame(tmp.str(), 2, random_image(4, 4, rng));
  auto clip = io::load_clip_data(tmp.str());
  CHECK(clip.frames == 3);
  CHECK(clip.height == 4);
  auto frames = io::load_clip(tmp.str());
  CHECK(frames.size() == 3);
  for (float v : frames[0].data) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }
}

TEST_CASE("index round trip") {
  TempDir tmp("index");
  io::DatasetIndex index;
  index.entries.push_back({"a/clip_0", 0, 8});
  index.entries.push_back({"b/clip_1", 3, 16});
  const std::string path = (tmp.path / "labels.csv").string();
  io::write_index(path, index);
  auto back = io::read_index(path);
  REQUIRE(back.entries.size() == 2);
  CHECK(back.entries[1].path == "b/clip_1");
  CHECK(back.entries[1].label == 3);
  CHECK(back.entries[1].frames == 16);
}

TEST_CASE("synthetic dataset is byte deterministic and motion matches the label") {
  TempDir a("synth_a"), b("synth_b");
  io::SynthSpec spec;
  spec.clips_per_class = 2;
  spec.frames = 16;
  spec.size = 32;
  spec.square = 6;
  spec.noise_sigma = 0.0;  // keep the centroid oracle clean
  auto index = io::synth_dataset(spec, a.str());
  io::synth_dataset(spec, b.str());
  CHECK(index.entries.size() == 8);
  CHECK(slurp(a.path / "labels.csv") == slurp(b.path / "labels.csv"));
  for (const auto& e : index.entries) {
    CHECK(slurp(a.path / e.path / "frame_000001.ppm") == slurp(b.path / e.path / "frame_000001.ppm"));
    CHECK(slurp(a.path / e.path / "frame_000016.ppm") == slurp(b.path / e.path / "frame_000016.ppm"));
  }

  auto clips = io::load_dataset(a.str());
  REQUIRE(clips.size() == 8);
  for (const auto& clip : clips) {
    // drift of the frame-difference centroid across the clip
    auto first = diff_centroid(clip.frame<float>(0), clip.frame<float>(1));
    auto last = diff_centroid(clip.frame<float>(clip.frames - 2), clip.frame<float>(clip.frames - 1));
    const double dy = last.first - first.first;
    const double dx = last.second - first.second;
    switch (clip.label) {
      case 0: CHECK(dy < -3.0); break;  // up
      case 1: CHECK(dy > 3.0); break;   // down
      case 2: CHECK(dx < -3.0); break;  // left
      case 3: CHECK(dx > 3.0); break;   // right
      default: FAIL("unexpected label");
    }
  }
}

TEST_CASE("synth spec validation") {
  io::SynthSpec spec;
  spec.size = 24;  // 31 px travel cannot fit
  CHECK_THROWS(io::synth_dataset(spec, "/nonexistent/ignored"));
}

TEST_CASE("pa map export and import") {
  TempDir tmp("pamap");
  Rng rng(5);
  TensorF pa({1, 6, 7});
  for (auto& v : pa.data) v = static_cast<float>(rng.uniform(0.0, 2.5));
  const std::string path = (tmp.path / "pa.pgm").string();
  io::export_pa_pgm(pa, path);
  auto back = io::import_pa_pgm(path);
  REQUIRE(back.shape == pa.shape);
  float lo = pa[0], hi = pa[0];
  for (float v : pa.data) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const float tol = (hi - lo) / 255.0f;
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(std::abs(back[i] - pa[i]) <= tol);

  // constant maps round trip through the degenerate path
  TensorF flat({1, 3, 3}, 0.75f);
  const std::string flat_path = (tmp.path / "flat.pgm").string();
  io::export_pa_pgm(flat, flat_path);
  auto flat_back = io::import_pa_pgm(flat_path);
  for (float v : flat_back.data) CHECK(v == 0.75f);
}
