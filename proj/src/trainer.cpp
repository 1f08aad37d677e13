#include "cclab/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "cclab/seeds.hpp"

namespace cclab {

namespace {

// Stream tags for seed derivation: sampler / crop / twin augmentation /
// transform init / backbone init. Distinct streams keep the baseline's
// draws identical whether or not the augmentation stream is consumed.
constexpr std::uint64_t kTagSampler = 0x72611;
constexpr std::uint64_t kTagCrop = 0x72612;
constexpr std::uint64_t kTagAug = 0x72613;
constexpr std::uint64_t kTagPctInit = 0x72614;
constexpr std::uint64_t kTagBackboneInit = 0x72615;

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

void write_text_file(const std::string& path, const std::string& body, const char* what) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(std::string(what) + ": cannot open " + path);
  out << body;
  out.flush();
  if (!out) throw std::runtime_error(std::string(what) + ": write failed for " + path);
}

Tensor<float> stack_images(const std::vector<Image>& imgs) {
  const int n = static_cast<int>(imgs.size());
  const int h = imgs[0].height(), w = imgs[0].width();
  Tensor<float> x({n, 3, h, w});
  const std::size_t plane = imgs[0].pixels.numel();
  for (int i = 0; i < n; ++i) {
    if (imgs[static_cast<std::size_t>(i)].pixels.numel() != plane)
      throw std::invalid_argument("train: batch mixes image sizes");
    std::copy(imgs[static_cast<std::size_t>(i)].pixels.data.begin(),
              imgs[static_cast<std::size_t>(i)].pixels.data.end(),
              x.data.begin() + static_cast<std::size_t>(i) * plane);
  }
  return x;
}

// IR-stream parameters: frozen in the cloth-change regime and asserted
// gradient-free there on every step.
std::vector<const ParamTensor<float>*> ir_params(const Model& m) {
  return {&m.backbone.shallow_ir.w,      &m.backbone.shallow_ir.b,
          &m.backbone.shallow_ir.bn.gamma, &m.backbone.shallow_ir.bn.beta,
          &m.pct.c_in_ir_w,              &m.pct.c_in_ir_b,
          &m.pct.bn_ir.gamma,            &m.pct.bn_ir.beta};
}

void assert_no_ir_gradient(const Model& m) {
  for (const auto* p : ir_params(m))
    for (std::size_t i = 0; i < p->grad.numel(); ++i)
      if (p->grad[i] != 0.0f)
        throw std::logic_error("cloth-change step produced an IR-stream gradient: " + p->name);
}

}  // namespace

// ----------------------------------------------------------------- variant --

const char* variant_name(VariantId v) {
  switch (v) {
    case VariantId::Baseline: return "baseline";
    case VariantId::CR: return "cr";
    case VariantId::CS: return "cs";
    case VariantId::Gray: return "gray";
    case VariantId::ICA: return "ica";
    case VariantId::PCT: return "pct";
    case VariantId::IcaPct: return "ica+pct";
  }
  throw std::invalid_argument("variant_name: bad id");
}

VariantId variant_from_string(const std::string& s) {
  for (VariantId v : kAllVariants)
    if (s == variant_name(v)) return v;
  throw std::invalid_argument("variant: unknown \"" + s +
                              "\" (want baseline|cr|cs|gray|ica|pct|ica+pct)");
}

AugVariant variant_aug(VariantId v) {
  switch (v) {
    case VariantId::Baseline:
    case VariantId::PCT: return AugVariant::None;
    case VariantId::CR: return AugVariant::ChannelReplace;
    case VariantId::CS: return AugVariant::ChannelSwap;
    case VariantId::Gray: return AugVariant::Gray;
    case VariantId::ICA:
    case VariantId::IcaPct: return AugVariant::ICA;
  }
  throw std::invalid_argument("variant_aug: bad id");
}

bool variant_uses_pct(VariantId v) {
  return v == VariantId::PCT || v == VariantId::IcaPct;
}

// ------------------------------------------------------------------ config --

void validate_train_config(const TrainConfig& cfg) {
  auto bad = [](const std::string& msg) { throw std::invalid_argument("train config: " + msg); };
  if (cfg.epochs < 1) bad("epochs must be >= 1");
  if (cfg.steps_per_epoch < 1) bad("steps_per_epoch must be >= 1");
  if (!std::isfinite(cfg.lr0) || cfg.lr0 < 0) bad("lr0 must be finite and >= 0");
  if (!(cfg.momentum >= 0) || cfg.momentum >= 1) bad("momentum must be in [0, 1)");
  if (!(cfg.weight_decay >= 0)) bad("weight_decay must be >= 0");
  if (cfg.warmup_epochs < 0) bad("warmup_epochs must be >= 0");
  int prev = -1;
  for (int d : cfg.decay_epochs) {
    if (d <= prev) bad("decay_epochs must be strictly increasing");
    if (d < 0 || d >= cfg.epochs) bad("decay epoch " + std::to_string(d) +
                                      " outside [0, epochs)");
    prev = d;
  }
  if (!(cfg.decay_factor > 0) || cfg.decay_factor > 1) bad("decay_factor must be in (0, 1]");
  if (cfg.p < 2) bad("need at least two identities per batch");
  if (cfg.k < 1) bad("k must be >= 1");
  if (cfg.mode == Regime::CC && cfg.k < 2)
    bad("cloth-change batches need k >= 2 so every anchor has an in-modality positive");
  if (cfg.wrt_neg_sign != 1.0f && cfg.wrt_neg_sign != -1.0f)
    bad("negative-pair weighting sign must be +1 or -1");
  if (cfg.crop_pad < 0) bad("crop_pad must be >= 0");
  if (cfg.pct_hidden < 1) bad("pct_hidden must be >= 1");
}

float lr_schedule(int epoch, const TrainConfig& cfg) {
  if (epoch < 0 || epoch >= cfg.epochs)
    throw std::out_of_range("lr_schedule: epoch " + std::to_string(epoch) + " outside [0, " +
                            std::to_string(cfg.epochs) + ")");
  if (epoch < cfg.warmup_epochs)
    return cfg.lr0 * static_cast<float>(epoch + 1) / static_cast<float>(cfg.warmup_epochs);
  float lr = cfg.lr0;
  for (int d : cfg.decay_epochs)
    if (epoch >= d) lr *= cfg.decay_factor;
  return lr;
}

// ------------------------------------------------------------------- model --

std::vector<ParamTensor<float>*> Model::trainable() {
  std::vector<ParamTensor<float>*> out;
  if (pct_active)
    for (auto* p : pct.params()) out.push_back(p);
  for (auto* p : backbone.params()) out.push_back(p);
  if (!train_ir) {
    const auto frozen = ir_params(*this);
    std::erase_if(out, [&frozen](const ParamTensor<float>* p) {
      return std::find(frozen.begin(), frozen.end(), p) != frozen.end();
    });
  }
  return out;
}

void Model::set_mode(BNMode m) {
  pct.set_mode(m);
  backbone.set_mode(m);
}

void Model::set_update_running(bool v) {
  pct.set_update_running(v);
  backbone.set_update_running(v);
}

void Model::zero_grad() {
  pct.zero_grad();
  backbone.zero_grad();
}

Model make_model(const TrainConfig& cfg, int n_classes) {
  validate_train_config(cfg);
  if (n_classes < 2) throw std::invalid_argument("make_model: need at least two identities");
  Model m;
  m.pct_active = variant_uses_pct(cfg.variant);
  m.train_ir = cfg.mode == Regime::VI;
  // independent init streams: the backbone starts identically across variants
  auto pct_rng = make_rng(derive_seed(cfg.seed, kTagPctInit));
  m.pct = pct_init<float>(cfg.pct_hidden, pct_rng, /*ir_enabled=*/true);
  auto bb_rng = make_rng(derive_seed(cfg.seed, kTagBackboneInit));
  m.backbone = backbone_init<float>(n_classes, bb_rng, cfg.use_nonlocal, /*ir_enabled=*/true);
  return m;
}

NamedTensorRefs model_tensors(Model& m) {
  NamedTensorRefs out;
  for (auto* p : m.pct.params()) out.emplace_back(p->name, &p->value);
  for (auto* p : m.backbone.params()) out.emplace_back(p->name, &p->value);
  auto add_bn = [&out](BNState<float>& s) {
    out.emplace_back(s.name + ".running_mean", &s.running_mean);
    out.emplace_back(s.name + ".running_var", &s.running_var);
  };
  add_bn(m.pct.bn_rgb);
  add_bn(m.pct.bn_ir);
  add_bn(m.backbone.shallow_rgb.bn);
  add_bn(m.backbone.shallow_ir.bn);
  for (auto& blk : m.backbone.shared) add_bn(blk.bn);
  add_bn(m.backbone.bnneck);
  return out;
}

void save_model(const std::string& prefix, Model& m) {
  ConstNamedTensorRefs items;
  for (auto& [name, t] : model_tensors(m)) items.emplace_back(name, t);
  save_checkpoint(prefix, items);
}

void load_model(const std::string& prefix, Model& m) {
  load_checkpoint(prefix, model_tensors(m));
}

// --------------------------------------------------------------- optimizer --

void sgd_step(const std::vector<ParamTensor<float>*>& params, SgdState& st,
              const SgdConfig& opt) {
  if (st.velocity.empty()) {
    st.velocity.reserve(params.size());
    for (const auto* p : params) st.velocity.emplace_back(p->value.shape);
  }
  if (st.velocity.size() != params.size())
    throw std::invalid_argument("sgd: optimizer state tracks a different parameter list");
  for (std::size_t i = 0; i < params.size(); ++i) {
    ParamTensor<float>& p = *params[i];
    if (!p.trainable) continue;
    Tensor<float>& v = st.velocity[i];
    if (!v.same_shape(p.value))
      throw std::invalid_argument("sgd: velocity shape drifted for " + p.name);
    for (std::size_t j = 0; j < p.value.numel(); ++j) {
      float g = p.grad[j];
      if (p.decay) g += opt.weight_decay * p.value[j];
      v[j] = opt.momentum * v[j] + g;
      p.value[j] -= opt.lr * v[j];
    }
  }
}

// ------------------------------------------------------------------- steps --

StepInputs assemble_step_inputs(const Batch& batch, const std::vector<Image>& images,
                                const TrainConfig& cfg, std::mt19937& crop_rng,
                                std::mt19937& aug_rng) {
  if (batch.rgb_rows.empty()) throw std::invalid_argument("train: batch has no rgb rows");
  // crop draw order is fixed: every RGB original, then every IR row
  std::vector<Image> rgb;
  rgb.reserve(batch.rgb_rows.size() * 2);
  for (int row : batch.rgb_rows)
    rgb.push_back(random_crop(images.at(static_cast<std::size_t>(row)), cfg.crop_pad, crop_rng));
  std::vector<Image> ir;
  ir.reserve(batch.ir_rows.size());
  for (int row : batch.ir_rows)
    ir.push_back(random_crop(images.at(static_cast<std::size_t>(row)), cfg.crop_pad, crop_rng));

  StepInputs in;
  in.n_orig = static_cast<int>(batch.rgb_rows.size());
  in.labels = batch.rgb_labels;

  const AugVariant aug = variant_aug(cfg.variant);
  if (aug != AugVariant::None) {
    // the twin always exists: p_apply=1, sharing its original's crop + label
    AugPolicy pol;
    pol.variant = aug;
    pol.p_apply = 1.0f;
    pol.validate();
    for (int i = 0; i < in.n_orig; ++i) {
      const Image orig = rgb[static_cast<std::size_t>(i)];
      rgb.push_back(apply_policy(orig, pol, aug_rng));
    }
    in.labels.insert(in.labels.end(), batch.rgb_labels.begin(), batch.rgb_labels.end());
  }
  in.labels.insert(in.labels.end(), batch.ir_labels.begin(), batch.ir_labels.end());

  in.rgb = stack_images(rgb);
  in.ir = ir.empty() ? Tensor<float>() : stack_images(ir);
  return in;
}

LossReport<float> train_step(Model& m, const StepInputs& in, const TrainConfig& cfg,
                             float lr, SgdState& opt) {
  const int n_rgb = in.rgb.numel() ? in.rgb.dim(0) : 0;
  const int n_ir = in.ir.numel() ? in.ir.dim(0) : 0;
  if (static_cast<std::size_t>(n_rgb + n_ir) != in.labels.size())
    throw std::invalid_argument("train_step: " + std::to_string(in.labels.size()) +
                                " labels for " + std::to_string(n_rgb + n_ir) + " rows");

  m.set_mode(BNMode::Train);
  m.set_update_running(true);
  m.zero_grad();

  PctCache<float> pc;
  BackboneCache<float> bc;
  EmbedOut<float> out;
  if (m.pct_active) {
    auto y = pct_forward_mixed(in.rgb, in.ir, m.pct, pc);
    auto y_rgb = slice_rows(y, 0, n_rgb);
    auto y_ir = n_ir ? slice_rows(y, n_rgb, n_ir) : Tensor<float>();
    out = backbone_forward_mixed(y_rgb, y_ir, m.backbone, bc);
  } else {
    out = backbone_forward_mixed(in.rgb, in.ir, m.backbone, bc);
  }

  auto ctx = make_triplet_context(out.features, in.labels);
  SqLossOpts<float> sq_opts;
  sq_opts.neg_sign = cfg.wrt_neg_sign;
  auto sq = sq_loss(ctx, sq_opts);
  auto xent = id_loss(out.logits, in.labels);

  LossReport<float> rep;
  rep.l_id = xent.loss;
  rep.l_sq = sq.loss;
  rep.l_total = total_loss(xent.loss, sq.loss);  // throws on non-finite
  rep.per_anchor_delta = sq.delta;

  auto ddist = sq_loss_backward(ctx, sq_opts);
  auto dfeat = distance_matrix_backward(ctx.features, ctx.dist, ddist);
  auto dlogits = softmax_cross_entropy_backward(xent, in.labels);

  if (m.pct_active) {
    Tensor<float> dx_rgb, dx_ir;
    backbone_backward_mixed(dfeat, dlogits, m.backbone, bc, &dx_rgb,
                            n_ir ? &dx_ir : nullptr);
    pct_backward_mixed(n_ir ? concat_rows(dx_rgb, dx_ir) : dx_rgb, m.pct, pc, nullptr, nullptr);
  } else {
    backbone_backward_mixed(dfeat, dlogits, m.backbone, bc, nullptr, nullptr);
  }

  if (cfg.mode == Regime::CC) assert_no_ir_gradient(m);

  sgd_step(m.trainable(), opt, SgdConfig{lr, cfg.momentum, cfg.weight_decay});
  return rep;
}

TrainResult train(Model& m, PkSampler& sampler, const std::vector<Image>& images,
                  const TrainConfig& cfg, std::ostream* progress) {
  validate_train_config(cfg);
  auto sampler_rng = make_rng(derive_seed(cfg.seed, kTagSampler));
  auto crop_rng = make_rng(derive_seed(cfg.seed, kTagCrop));
  auto aug_rng = make_rng(derive_seed(cfg.seed, kTagAug));
  SgdState opt;
  TrainResult res;
  res.log.reserve(static_cast<std::size_t>(cfg.epochs) *
                  static_cast<std::size_t>(cfg.steps_per_epoch));
  if (progress)
    *progress << "train: mode=" << regime_name(cfg.mode)
              << " variant=" << variant_name(cfg.variant) << " epochs=" << cfg.epochs << "x"
              << cfg.steps_per_epoch << " lr0=" << cfg.lr0 << " momentum=" << cfg.momentum
              << " weight_decay=" << cfg.weight_decay
              << " (biases and batch-norm parameters excluded from decay)\n";

  int step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const float lr = lr_schedule(epoch, cfg);
    for (int s = 0; s < cfg.steps_per_epoch; ++s, ++step) {
      try {
        Batch b = sampler.sample(cfg.p, cfg.k, sampler_rng);
        auto in = assemble_step_inputs(b, images, cfg, crop_rng, aug_rng);
        auto rep = train_step(m, in, cfg, lr, opt);
        res.log.push_back({step, static_cast<double>(rep.l_id), static_cast<double>(rep.l_sq),
                           static_cast<double>(rep.l_total),
                           static_cast<double>(rep.mean_delta())});
      } catch (const std::exception& e) {
        throw std::runtime_error("train: aborted at step " + std::to_string(step) + ": " +
                                 e.what());
      }
    }
    if (progress)
      *progress << "epoch " << epoch << ": lr=" << lr
                << " l_total=" << res.log.back().l_total << "\n";
  }
  return res;
}

void write_training_log(const std::string& path, const std::vector<StepLogRow>& log) {
  std::ostringstream out;
  out << "step,l_id,l_sq,l_total,mean_delta\n";
  for (const auto& r : log)
    out << r.step << "," << fmt6(r.l_id) << "," << fmt6(r.l_sq) << "," << fmt6(r.l_total)
        << "," << fmt6(r.mean_delta) << "\n";
  write_text_file(path, out.str(), "training log");
}

// --------------------------------------------------------------- inference --

Tensor<float> extract_features(Model& m, const std::vector<Image>& images, int chunk) {
  if (images.empty()) throw std::invalid_argument("extract_features: no images");
  if (chunk < 1) throw std::invalid_argument("extract_features: chunk must be >= 1");
  m.set_mode(BNMode::Eval);
  m.set_update_running(false);

  Tensor<float> out({static_cast<int>(images.size()), m.backbone.d_emb});
  std::vector<int> idx_rgb, idx_ir;
  for (std::size_t i = 0; i < images.size(); ++i)
    (images[i].modality == Modality::RGB ? idx_rgb : idx_ir).push_back(static_cast<int>(i));

  auto run_stream = [&](const std::vector<int>& idx, Stream stream) {
    for (std::size_t start = 0; start < idx.size(); start += static_cast<std::size_t>(chunk)) {
      const std::size_t end = std::min(idx.size(), start + static_cast<std::size_t>(chunk));
      std::vector<Image> part;
      part.reserve(end - start);
      for (std::size_t i = start; i < end; ++i)
        part.push_back(images[static_cast<std::size_t>(idx[i])]);
      Tensor<float> x = stack_images(part);
      if (m.pct_active) x = pct_forward(x, stream, m.pct);
      auto e = embed(x, stream, m.backbone);
      for (std::size_t i = start; i < end; ++i)
        for (int d = 0; d < m.backbone.d_emb; ++d)
          out.at2(idx[i], d) = e.features.at2(static_cast<int>(i - start), d);
    }
  };
  run_stream(idx_rgb, Stream::RGB);
  run_stream(idx_ir, Stream::IR);
  return out;
}

std::vector<Direction> directions_for(Regime mode) {
  if (mode == Regime::VI) return {Direction::NirToRgb, Direction::RgbToNir};
  return {Direction::ClothChange};
}

std::vector<RetrievalReport> evaluate_model(Model& m, const DatasetManifest& manifest,
                                            const std::vector<Image>& images,
                                            const std::vector<Direction>& directions) {
  if (manifest.rows.size() != images.size())
    throw std::invalid_argument("evaluate_model: " + std::to_string(manifest.rows.size()) +
                                " manifest rows but " + std::to_string(images.size()) +
                                " images");
  auto feats = l2_normalize_rows(extract_features(m, images));
  std::vector<RetrievalReport> out;
  out.reserve(directions.size());
  for (Direction dir : directions) {
    auto qg = build_query_gallery(manifest, dir);
    out.push_back(cmc_map(dir, gather_rows(feats, qg.query_idx), qg.query_meta,
                          gather_rows(feats, qg.gallery_idx), qg.gallery_meta));
  }
  return out;
}

// ---------------------------------------------------------------- ablation --

DataBundle load_bundle(const std::string& dataset_dir) {
  DataBundle b;
  b.train_manifest = load_manifest(dataset_dir + "/manifest_train.csv");
  b.test_manifest = load_manifest(dataset_dir + "/manifest_test.csv");
  b.train_images = load_images(b.train_manifest, dataset_dir);
  b.test_images = load_images(b.test_manifest, dataset_dir);
  return b;
}

std::vector<AblationRow> run_ablation(const DataBundle& data,
                                      const std::vector<TrainConfig>& rows,
                                      std::ostream* progress) {
  if (rows.empty()) throw std::invalid_argument("run_ablation: no rows");
  std::vector<AblationRow> out;
  for (const TrainConfig& cfg : rows) {
    const auto dirs = directions_for(cfg.mode);
    if (progress)
      *progress << "ablation row: variant=" << variant_name(cfg.variant)
                << " neg_sign=" << (cfg.wrt_neg_sign > 0 ? "+1" : "-1") << "\n";
    try {
      validate_train_config(cfg);
      PkSampler sampler(data.train_manifest, data.train_images);
      Model model = make_model(cfg, sampler.n_classes());
      train(model, sampler, data.train_images, cfg, progress);
      auto reports = evaluate_model(model, data.test_manifest, data.test_images, dirs);
      for (std::size_t i = 0; i < reports.size(); ++i) {
        AblationRow row;
        row.variant = cfg.variant;
        row.neg_sign = cfg.wrt_neg_sign;
        row.direction = dirs[i];
        row.report = std::move(reports[i]);
        row.ok = true;
        out.push_back(std::move(row));
      }
    } catch (const std::exception& e) {
      for (Direction d : dirs) {
        AblationRow row;
        row.variant = cfg.variant;
        row.neg_sign = cfg.wrt_neg_sign;
        row.direction = d;
        row.ok = false;
        row.error = e.what();
        out.push_back(std::move(row));
      }
      if (progress) *progress << "ablation row failed: " << e.what() << "\n";
    }
  }
  return out;
}

void write_ablation_csv(const std::string& path, const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  out << "variant,neg_sign,direction,rank1,rank5,rank10,rank20,map,status\n";
  for (const auto& r : rows) {
    out << variant_name(r.variant) << "," << (r.neg_sign > 0 ? "+1" : "-1") << ","
        << direction_name(r.direction) << ",";
    if (r.ok) {
      out << fmt6(r.report.cmc[0]) << "," << fmt6(r.report.cmc[4]) << ","
          << fmt6(r.report.cmc[9]) << "," << fmt6(r.report.cmc[19]) << ","
          << fmt6(r.report.map) << ",ok\n";
    } else {
      std::string msg = r.error;
      for (char& c : msg)
        if (c == ',' || c == '\n' || c == '\r') c = ';';
      out << ",,,,," << "error: " << msg << "\n";
    }
  }
  write_text_file(path, out.str(), "ablation table");
}

}  // namespace cclab
