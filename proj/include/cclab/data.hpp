#pragma once
// Procedural synthetic person dataset. Identity is carried by body geometry
// plus a fixed torso speckle texture (color-invariant); clothing color is
// drawn from a palette shared across identities, so color actively misleads.
// Two regimes: visible/infrared pairs and cloth-recolored RGB.

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "cclab/image.hpp"
#include "cclab/tensor.hpp"

namespace cclab {

enum class Regime { VI, CC };

inline const char* regime_name(Regime r) { return r == Regime::VI ? "vi" : "cc"; }
Regime regime_from_string(const std::string& s);

// ------------------------------------------------------------- identities --

struct ClothColors {
  float torso[3];
  float legs[3];
};

struct IdentitySpec {
  int id = 0;
  // geometry in canvas pixels (64 rows x 32 cols, pre-jitter)
  int head_radius = 4;       // 3..5
  int torso_width = 12;      // 10..16
  int torso_height = 22;     // 18..26
  int leg_width = 4;         // 3..6
  float skin_tone = 0.5f;    // gray level, 0.3..0.8
  std::uint32_t texture_seed = 0;
  std::vector<ClothColors> cloth_sets;  // one entry per clothing set
};

constexpr int kCanvasH = 64;
constexpr int kCanvasW = 32;

// Shared clothing palette; identities sample outfits from the same colors.
extern const ClothColors kClothPalette[10];
constexpr int kClothPaletteSize = 10;

IdentitySpec make_identity(int id, int n_cloth_sets, std::mt19937& rng);

// ------------------------------------------------------------- rendering --

// Region masks of the most recent render, canvas-sized row-major bytes.
struct RenderMasks {
  std::vector<std::uint8_t> clothing;  // torso + legs
  std::vector<std::uint8_t> skin;      // head + hands
  std::vector<std::uint8_t> background;
};

// Deterministic given (spec, view, clothing, modality) and the rng state.
// Draw order: scale jitter, horizontal offset jitter, then (IR only) one
// noise value per pixel. Background color depends on the view index alone.
Image render_sample(const IdentitySpec& spec, int view, int clothing, Modality modality,
                    std::mt19937& rng, RenderMasks* masks = nullptr);

// ---------------------------------------------------------------- dataset --

struct ManifestRow {
  std::string path;  // relative to the dataset root
  int identity = 0;
  Modality modality = Modality::RGB;
  int view = 0;
  int clothing = 0;
};

struct DatasetManifest {
  Regime regime = Regime::VI;
  std::string split;  // "train" or "test"
  std::vector<ManifestRow> rows;
  // header comment key/values: generator config echo + signal stats
  std::map<std::string, std::string> meta;
};

struct DatasetConfig {
  int n_train_ids = 32;
  int n_test_ids = 16;
  int views = 4;
  int clothing_sets = 0;  // 0 = regime default (VI: 1, CC: 3)
  int images_per_cell = 4;
  Regime regime = Regime::VI;
  std::uint64_t seed = 0;
};

struct GeneratedDataset {
  DatasetManifest train, test;
};

// Writes PNGs under <out_dir>/{train,test}/ plus manifest_{train,test}.csv.
// Signal-validity statistics (pixel nearest-neighbor checks on the test
// split) are recorded in both manifest headers.
GeneratedDataset make_dataset(const DatasetConfig& cfg, const std::string& out_dir);

DatasetManifest load_manifest(const std::string& csv_path);
std::vector<Image> load_images(const DatasetManifest& m, const std::string& root_dir);

// ---------------------------------------------------------------- sampler --

struct Batch {
  Tensor<float> rgb;  // N_rgb x 3 x H x W
  Tensor<float> ir;   // empty in the CC regime
  std::vector<int> rgb_labels, ir_labels;  // contiguous training label space
  std::vector<int> rgb_rows, ir_rows;      // manifest row indices (provenance)
};

// P identities x K images per modality (VI) or K RGB images spanning at
// least two clothing sets (CC). Identities with too few images are resampled
// with replacement and the event is logged.
class PkSampler {
 public:
  PkSampler(const DatasetManifest& manifest, const std::vector<Image>& images);

  Batch sample(int p, int k, std::mt19937& rng);

  int n_classes() const { return static_cast<int>(ids_.size()); }
  int label_of(int identity) const;
  int resample_events() const { return resample_events_; }
  const std::vector<std::string>& log() const { return log_; }

 private:
  const DatasetManifest* manifest_;
  const std::vector<Image>* images_;
  Regime regime_;
  std::vector<int> ids_;                          // sorted unique identities
  std::map<int, std::vector<int>> rgb_pool_;      // identity -> row indices
  std::map<int, std::vector<int>> ir_pool_;
  int resample_events_ = 0;
  std::vector<std::string> log_;

  std::vector<int> pick(const std::vector<int>& pool, int k, int identity, std::mt19937& rng);
};

}  // namespace cclab
