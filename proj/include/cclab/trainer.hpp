#pragma once
// End-to-end optimization loop: augmentation twins -> pixel color transform
// -> two-stream backbone -> identity + squared-difference losses -> SGD with
// linear warm-up and step decay. Plus the ablation-matrix runner.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "cclab/backbone.hpp"
#include "cclab/checkpoint.hpp"
#include "cclab/color_aug.hpp"
#include "cclab/data.hpp"
#include "cclab/eval.hpp"
#include "cclab/losses.hpp"
#include "cclab/pct.hpp"

namespace cclab {

// ---------------------------------------------------------------- variant --

// Ablation rows: which augmentation builds the twin, and whether the pixel
// color transform is in the path. Baseline bypasses both.
enum class VariantId { Baseline, CR, CS, Gray, ICA, PCT, IcaPct };

inline constexpr VariantId kAllVariants[] = {
    VariantId::Baseline, VariantId::CR,  VariantId::CS,    VariantId::Gray,
    VariantId::ICA,      VariantId::PCT, VariantId::IcaPct};

const char* variant_name(VariantId v);  // "baseline" ... "ica+pct"
VariantId variant_from_string(const std::string& s);
AugVariant variant_aug(VariantId v);
bool variant_uses_pct(VariantId v);

// ----------------------------------------------------------------- config --

struct TrainConfig {
  Regime mode = Regime::VI;
  VariantId variant = VariantId::IcaPct;
  int epochs = 20;
  int steps_per_epoch = 40;
  float lr0 = 0.1f;
  float momentum = 0.9f;
  float weight_decay = 5e-4f;
  int warmup_epochs = 5;
  std::vector<int> decay_epochs = {10, 15};
  float decay_factor = 0.1f;
  int p = 4;  // identities per batch
  int k = 4;  // images per identity (per modality in the two-stream regime)
  std::uint64_t seed = 0;
  bool use_nonlocal = true;
  float wrt_neg_sign = 1.0f;  // +1 or -1: negative-pair weighting sign
  int crop_pad = 4;
  int pct_hidden = 8;
};

void validate_train_config(const TrainConfig& cfg);

// Linear ramp lr0*(epoch+1)/warmup_epochs during warm-up, afterwards lr0
// times decay_factor once per decay epoch already passed.
float lr_schedule(int epoch, const TrainConfig& cfg);

// ------------------------------------------------------------------ model --

// Both streams are always instantiated (checkpoints stay shape-compatible
// across regimes); trainable() drops the IR-stream parameters when train_ir
// is false, so cloth-change runs leave them at their seeded init.
struct Model {
  bool pct_active = false;
  bool train_ir = true;
  PctParams<float> pct;
  BackboneParams<float> backbone;

  std::vector<ParamTensor<float>*> trainable();
  void set_mode(BNMode m);
  void set_update_running(bool v);
  void zero_grad();
};

Model make_model(const TrainConfig& cfg, int n_classes);

// Every weight plus the batch-norm running statistics.
NamedTensorRefs model_tensors(Model& m);
void save_model(const std::string& prefix, Model& m);
void load_model(const std::string& prefix, Model& m);

// -------------------------------------------------------------- optimizer --

struct SgdConfig {
  float lr = 0;
  float momentum = 0;
  float weight_decay = 0;  // skipped for params with decay=false (biases, BN)
};

struct SgdState {
  std::vector<Tensor<float>> velocity;  // parallel to the parameter list
};

// v = momentum*v + grad (+ weight_decay*value where decay applies);
// value -= lr*v. lr=0 leaves every parameter bit-identical.
void sgd_step(const std::vector<ParamTensor<float>*>& params, SgdState& st,
              const SgdConfig& opt);

// ------------------------------------------------------------------ steps --

// One batch in feature-row order: RGB originals, their augmented twins
// (sharing the original's label and crop), then IR rows.
struct StepInputs {
  Tensor<float> rgb;  // originals then twins
  Tensor<float> ir;   // empty in the cloth-change regime
  std::vector<int> labels;
  int n_orig = 0;  // RGB originals before twinning
};

StepInputs assemble_step_inputs(const Batch& batch, const std::vector<Image>& images,
                                const TrainConfig& cfg, std::mt19937& crop_rng,
                                std::mt19937& aug_rng);

// Forward, both losses, backward, SGD update. In the cloth-change regime
// every IR-stream gradient is asserted zero before the update.
LossReport<float> train_step(Model& m, const StepInputs& in, const TrainConfig& cfg,
                             float lr, SgdState& opt);

struct StepLogRow {
  int step = 0;
  double l_id = 0, l_sq = 0, l_total = 0, mean_delta = 0;
};

struct TrainResult {
  std::vector<StepLogRow> log;  // one row per step
};

TrainResult train(Model& m, PkSampler& sampler, const std::vector<Image>& images,
                  const TrainConfig& cfg, std::ostream* progress = nullptr);

void write_training_log(const std::string& path, const std::vector<StepLogRow>& log);

// -------------------------------------------------------------- inference --

// Eval-mode embeddings (pre-neck, unnormalized), rows parallel to `images`,
// processed in fixed-size chunks per stream. Chunk size never changes values.
Tensor<float> extract_features(Model& m, const std::vector<Image>& images, int chunk = 64);

std::vector<Direction> directions_for(Regime mode);

std::vector<RetrievalReport> evaluate_model(Model& m, const DatasetManifest& manifest,
                                            const std::vector<Image>& images,
                                            const std::vector<Direction>& directions);

// --------------------------------------------------------------- ablation --

struct DataBundle {
  DatasetManifest train_manifest, test_manifest;
  std::vector<Image> train_images, test_images;
};

DataBundle load_bundle(const std::string& dataset_dir);

struct AblationRow {
  VariantId variant = VariantId::Baseline;
  float neg_sign = 1.0f;
  Direction direction = Direction::NirToRgb;
  RetrievalReport report;
  bool ok = false;
  std::string error;  // empty on success
};

// Trains and evaluates every config; a failed row is recorded and the rest
// still run. VI rows report both directions, CC rows the cloth-change one.
std::vector<AblationRow> run_ablation(const DataBundle& data,
                                      const std::vector<TrainConfig>& rows,
                                      std::ostream* progress = nullptr);

void write_ablation_csv(const std::string& path, const std::vector<AblationRow>& rows);

}  // namespace cclab
