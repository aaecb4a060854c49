#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pan/dataset.hpp"
#include "pan/params.hpp"
#include "pan/tensor.hpp"

namespace pan::io {

// --- images ---------------------------------------------------------------

/// 8-bit RGB image, interleaved rows.
struct Image8 {
  std::size_t width = 0, height = 0;
  std::vector<std::uint8_t> rgb;  // height * width * 3
};

void write_ppm(const std::string& path, const Image8& img);
Image8 read_ppm(const std::string& path);

void write_pgm(const std::string& path, std::size_t width, std::size_t height,
               const std::vector<std::uint8_t>& gray);
std::vector<std::uint8_t> read_pgm(const std::string& path, std::size_t& width, std::size_t& height);

// --- clips ----------------------------------------------------------------

/// Frames are frame_000001.ppm, frame_000002.ppm, ... with gapless numbering
/// and one shared resolution.
ClipData load_clip_data(const std::string& dir);

/// Frames as [3,H,W] float tensors in [0,1].
std::vector<TensorF> load_clip(const std::string& dir);

void write_clip_frame(const std::string& dir, std::size_t index_1based, const Image8& img);

// --- dataset index ---------------------------------------------------------

struct DatasetIndex {
  struct Entry {
    std::string path;  // clip directory, relative to the index file
    int label = -1;
    std::size_t frames = 0;
  };
  std::vector<Entry> entries;
};

void write_index(const std::string& csv_path, const DatasetIndex& index);
DatasetIndex read_index(const std::string& csv_path);

/// Loads every clip listed in <dir>/labels.csv.
std::vector<ClipData> load_dataset(const std::string& dir);

// --- checkpoint ------------------------------------------------------------

/// Binary model checkpoint: magic "PANW", u32 LE version, u32 LE entry count,
/// then per entry u32 name length, UTF-8 name, u32 rank, u32 extents and a
/// row-major little-endian f32 payload. Round-trips are bit-identical.
void save_checkpoint(const std::string& path, const ParamSet<float>& params);
ParamSet<float> load_checkpoint(const std::string& path);

// --- synthetic dataset -----------------------------------------------------

/// Four motion classes, distinguished only by the direction of a square
/// moving over a per-clip static random texture. Single-frame appearance is
/// kept label-uninformative by drawing square trajectories from a shared
/// midpoint distribution.
struct SynthSpec {
  std::size_t clips_per_class = 100;
  std::size_t frames = 32;
  std::size_t size = 64;
  std::size_t square = 10;
  std::size_t speed = 1;  // pixels per frame
  double noise_sigma = 0.02;
  std::uint64_t seed = 42;

  void validate() const;
};

extern const char* const kSynthClassNames[4];  // MoveUp, MoveDown, MoveLeft, MoveRight

/// Writes clips, labels.csv and manifest.json under out_dir; byte-identical
/// for a fixed seed.
DatasetIndex synth_dataset(const SynthSpec& spec, const std::string& out_dir);

// --- PA map export ----------------------------------------------------------

/// Min-max normalized 8-bit grayscale image plus a JSON sidecar {min, max,
/// degenerate} preserving the true range. A constant map exports as uniform
/// mid-gray with degenerate=true.
void export_pa_pgm(const TensorF& pa, const std::string& path);

/// Reconstructs the map from an exported image + sidecar (inverse up to
/// quantization).
TensorF import_pa_pgm(const std::string& path);

}  // namespace pan::io
