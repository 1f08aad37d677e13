#include "cclab/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "cclab/seeds.hpp"

namespace cclab {

namespace fs = std::filesystem;

Regime regime_from_string(const std::string& s) {
  if (s == "vi") return Regime::VI;
  if (s == "cc") return Regime::CC;
  throw std::invalid_argument("unknown regime '" + s + "' (expected vi or cc)");
}

// ------------------------------------------------------------- identities --

const ClothColors kClothPalette[10] = {
    {{0.85f, 0.15f, 0.15f}, {0.15f, 0.15f, 0.55f}},  // red / navy
    {{0.15f, 0.35f, 0.85f}, {0.25f, 0.25f, 0.25f}},  // blue / charcoal
    {{0.15f, 0.65f, 0.25f}, {0.60f, 0.55f, 0.45f}},  // green / khaki
    {{0.90f, 0.80f, 0.20f}, {0.20f, 0.45f, 0.30f}},  // yellow / forest
    {{0.60f, 0.20f, 0.70f}, {0.80f, 0.80f, 0.80f}},  // purple / light gray
    {{0.20f, 0.75f, 0.75f}, {0.45f, 0.25f, 0.15f}},  // teal / brown
    {{0.90f, 0.50f, 0.15f}, {0.15f, 0.15f, 0.15f}},  // orange / black
    {{0.85f, 0.30f, 0.60f}, {0.30f, 0.40f, 0.60f}},  // pink / slate blue
    {{0.40f, 0.40f, 0.40f}, {0.70f, 0.65f, 0.55f}},  // gray / sand
    {{0.92f, 0.92f, 0.88f}, {0.35f, 0.20f, 0.45f}},  // off-white / plum
};

IdentitySpec make_identity(int id, int n_cloth_sets, std::mt19937& rng) {
  if (n_cloth_sets < 1 || n_cloth_sets > kClothPaletteSize)
    throw std::invalid_argument("make_identity: clothing sets must be in [1, " +
                                std::to_string(kClothPaletteSize) + "]");
  IdentitySpec s;
  s.id = id;
  s.head_radius = std::uniform_int_distribution<int>(3, 5)(rng);
  s.torso_width = std::uniform_int_distribution<int>(10, 16)(rng);
  s.torso_height = std::uniform_int_distribution<int>(18, 26)(rng);
  s.leg_width = std::uniform_int_distribution<int>(3, 6)(rng);
  s.skin_tone = std::uniform_real_distribution<float>(0.3f, 0.8f)(rng);
  s.texture_seed = rng();

  // outfits come from the shared palette; combos are unique per identity so
  // clothing sets are visually distinct
  std::vector<std::pair<int, int>> used;
  std::uniform_int_distribution<int> pick(0, kClothPaletteSize - 1);
  while (static_cast<int>(s.cloth_sets.size()) < n_cloth_sets) {
    const int torso = pick(rng);
    const int legs = pick(rng);
    if (std::find(used.begin(), used.end(), std::make_pair(torso, legs)) != used.end()) continue;
    used.emplace_back(torso, legs);
    ClothColors c;
    for (int k = 0; k < 3; ++k) {
      c.torso[k] = kClothPalette[torso].torso[k];
      c.legs[k] = kClothPalette[legs].legs[k];
    }
    s.cloth_sets.push_back(c);
  }

  // tallest body at max scale must stay on the canvas
  const float total = (2.0f * s.head_radius + 1.0f + s.torso_height + 1.0f + 16.0f) * 1.1f + 2.0f;
  if (total > kCanvasH)
    throw std::logic_error("make_identity: geometry exceeds canvas height");
  return s;
}

// ------------------------------------------------------------- rendering --

namespace {

struct Canvas {
  Tensor<float> px{{3, kCanvasH, kCanvasW}};
  RenderMasks masks;

  Canvas() {
    const std::size_t n = static_cast<std::size_t>(kCanvasH) * kCanvasW;
    masks.clothing.assign(n, 0);
    masks.skin.assign(n, 0);
    masks.background.assign(n, 1);
  }

  void put(int r, int c, const float* rgb, std::vector<std::uint8_t>* mask) {
    if (r < 0 || r >= kCanvasH || c < 0 || c >= kCanvasW) return;
    for (int k = 0; k < 3; ++k) px.at3(k, r, c) = rgb[k];
    const std::size_t idx = static_cast<std::size_t>(r) * kCanvasW + c;
    masks.clothing[idx] = 0;
    masks.skin[idx] = 0;
    masks.background[idx] = 0;
    if (mask) (*mask)[idx] = 1;
  }

  void rect(float r0, float r1, float c0, float c1, const float* rgb,
            std::vector<std::uint8_t>* mask) {
    for (int r = static_cast<int>(std::lround(r0)); r < static_cast<int>(std::lround(r1)); ++r)
      for (int c = static_cast<int>(std::lround(c0)); c < static_cast<int>(std::lround(c1)); ++c)
        put(r, c, rgb, mask);
  }
};

}  // namespace

Image render_sample(const IdentitySpec& spec, int view, int clothing, Modality modality,
                    std::mt19937& rng, RenderMasks* masks) {
  if (clothing < 0 || clothing >= static_cast<int>(spec.cloth_sets.size()))
    throw std::invalid_argument("render_sample: clothing set " + std::to_string(clothing) +
                                " of " + std::to_string(spec.cloth_sets.size()));
  if (view < 0) throw std::invalid_argument("render_sample: negative view");

  // jitter first so downstream draws never shift the silhouette
  const float scale = std::uniform_real_distribution<float>(0.9f, 1.1f)(rng);
  const float dx = std::uniform_real_distribution<float>(-3.0f, 3.0f)(rng);

  Canvas cv;

  // per-view backdrop, shared by every sample captured at this view
  auto bg_rng = make_rng(derive_seed(0xB6u, static_cast<std::uint64_t>(view)));
  std::uniform_real_distribution<float> bg_dist(0.05f, 0.45f);
  float bg[3];
  for (int k = 0; k < 3; ++k) bg[k] = bg_dist(bg_rng);
  for (int r = 0; r < kCanvasH; ++r)
    for (int c = 0; c < kCanvasW; ++c)
      for (int k = 0; k < 3; ++k) cv.px.at3(k, r, c) = bg[k];

  const ClothColors& outfit = spec.cloth_sets[static_cast<std::size_t>(clothing)];
  const float skin[3] = {spec.skin_tone, spec.skin_tone * 0.92f, spec.skin_tone * 0.82f};

  const float cx = kCanvasW / 2.0f + dx;
  const float top = 2.0f;
  const float r_head = spec.head_radius * scale;
  const float torso_top = top + (2.0f * spec.head_radius + 1.0f) * scale;
  const float torso_h = spec.torso_height * scale;
  const float torso_half = spec.torso_width * scale / 2.0f;
  const float legs_top = torso_top + torso_h + 1.0f * scale;
  const float legs_len = 16.0f * scale;
  const float leg_w = spec.leg_width * scale;

  // legs: two strips with a gap
  cv.rect(legs_top, legs_top + legs_len, cx - leg_w - 1.0f, cx - 1.0f, outfit.legs,
          &cv.masks.clothing);
  cv.rect(legs_top, legs_top + legs_len, cx + 1.0f, cx + leg_w + 1.0f, outfit.legs,
          &cv.masks.clothing);

  // torso
  cv.rect(torso_top, torso_top + torso_h, cx - torso_half, cx + torso_half, outfit.torso,
          &cv.masks.clothing);

  // identity speckle, anchored to torso-local coordinates so the pattern
  // tracks the body through jitter and never changes across renders
  {
    auto trng = make_rng(spec.texture_seed);
    std::uniform_real_distribution<float> uv(0.0f, 1.0f);
    std::uniform_real_distribution<float> amp_dist(-0.35f, 0.35f);
    for (int dot = 0; dot < 60; ++dot) {
      const float u = uv(trng);
      const float v = uv(trng);
      const float amp = amp_dist(trng);
      const int r = static_cast<int>(std::lround(torso_top + v * (torso_h - 1.0f)));
      const int c = static_cast<int>(std::lround(cx - torso_half + u * (2.0f * torso_half - 1.0f)));
      if (r < 0 || r >= kCanvasH || c < 0 || c >= kCanvasW) continue;
      const std::size_t idx = static_cast<std::size_t>(r) * kCanvasW + c;
      if (!cv.masks.clothing[idx]) continue;
      for (int k = 0; k < 3; ++k) cv.px.at3(k, r, c) = outfit.torso[k] * (1.0f + amp);
    }
  }

  // head
  {
    const float cy = top + r_head;
    const int r0 = static_cast<int>(std::floor(cy - r_head)), r1 = static_cast<int>(std::ceil(cy + r_head));
    const int c0 = static_cast<int>(std::floor(cx - r_head)), c1 = static_cast<int>(std::ceil(cx + r_head));
    for (int r = r0; r <= r1; ++r)
      for (int c = c0; c <= c1; ++c) {
        const float dr = r - cy, dc = c - cx;
        if (dr * dr + dc * dc <= r_head * r_head) cv.put(r, c, skin, &cv.masks.skin);
      }
  }

  // hands: small skin patches at the torso's lower corners
  const float hand_top = torso_top + torso_h - 2.0f * scale;
  cv.rect(hand_top, hand_top + 2.0f * scale, cx - torso_half - 2.0f * scale, cx - torso_half,
          skin, &cv.masks.skin);
  cv.rect(hand_top, hand_top + 2.0f * scale, cx + torso_half, cx + torso_half + 2.0f * scale,
          skin, &cv.masks.skin);

  for (auto& v : cv.px.data) v = std::min(1.0f, std::max(0.0f, v));

  Image img;
  img.modality = modality;
  img.identity = spec.id;
  img.view = view;
  img.clothing = clothing;

  if (modality == Modality::IR) {
    // luminance capture: one noise draw per pixel, replicated to 3 channels
    Tensor<float> ir({3, kCanvasH, kCanvasW});
    std::normal_distribution<float> noise(0.0f, 0.02f);
    for (int r = 0; r < kCanvasH; ++r)
      for (int c = 0; c < kCanvasW; ++c) {
        const float y = 0.299f * cv.px.at3(0, r, c) + 0.587f * cv.px.at3(1, r, c) +
                        0.114f * cv.px.at3(2, r, c);
        const float v = std::min(1.0f, std::max(0.0f, y + noise(rng)));
        for (int k = 0; k < 3; ++k) ir.at3(k, r, c) = v;
      }
    img.pixels = ir;
  } else {
    img.pixels = cv.px;
  }
  if (masks) *masks = cv.masks;
  return img;
}

// ---------------------------------------------------------------- dataset --

namespace {

std::string row_filename(const char* split, const ManifestRow& row, int img_idx) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%s/id%04d_v%d_c%d_%s_i%d.png", split, row.identity, row.view,
                row.clothing, row.modality == Modality::RGB ? "rgb" : "ir", img_idx);
  return buf;
}

// identity of the nearest gallery row under squared pixel distance; the
// gallery is filtered by `admit`, ties broken by the lower row index
template <typename Admit>
int nearest_identity(const std::vector<std::vector<float>>& feats,
                     const std::vector<ManifestRow>& rows, int query, Admit admit) {
  double best = 0;
  int best_row = -1;
  const std::vector<float>& q = feats[static_cast<std::size_t>(query)];
  for (std::size_t g = 0; g < feats.size(); ++g) {
    if (static_cast<int>(g) == query || !admit(rows[g])) continue;
    const std::vector<float>& v = feats[g];
    double d = 0;
    for (std::size_t k = 0; k < q.size(); ++k) {
      const double diff = static_cast<double>(q[k]) - v[k];
      d += diff * diff;
    }
    if (best_row < 0 || d < best) {
      best = d;
      best_row = static_cast<int>(g);
    }
  }
  return best_row < 0 ? -1 : rows[static_cast<std::size_t>(best_row)].identity;
}

std::string fmt6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

void write_manifest(const std::string& path, const DatasetManifest& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("make_dataset: cannot write " + path);
  for (const auto& [k, v] : m.meta) out << "# " << k << " " << v << "\n";
  out << "path,identity,modality,view,clothing\n";
  for (const auto& r : m.rows)
    out << r.path << "," << r.identity << "," << (r.modality == Modality::RGB ? "rgb" : "ir")
        << "," << r.view << "," << r.clothing << "\n";
  if (!out.good()) throw std::runtime_error("make_dataset: short write to " + path);
}

}  // namespace

GeneratedDataset make_dataset(const DatasetConfig& cfg_in, const std::string& out_dir) {
  DatasetConfig cfg = cfg_in;
  if (cfg.clothing_sets == 0) cfg.clothing_sets = cfg.regime == Regime::CC ? 3 : 1;
  if (cfg.n_train_ids < 2 || cfg.n_test_ids < 2)
    throw std::invalid_argument("make_dataset: need at least 2 identities per split");
  if (cfg.views < 1 || cfg.images_per_cell < 1)
    throw std::invalid_argument("make_dataset: views and images_per_cell must be positive");
  if (cfg.regime == Regime::CC && cfg.clothing_sets < 2)
    throw std::invalid_argument("make_dataset: the cloth-change regime needs >= 2 clothing sets");

  std::error_code ec;
  fs::create_directories(fs::path(out_dir) / "train", ec);
  if (ec) throw std::runtime_error("make_dataset: cannot create " + out_dir + ": " + ec.message());
  fs::create_directories(fs::path(out_dir) / "test", ec);
  if (ec) throw std::runtime_error("make_dataset: cannot create " + out_dir + ": " + ec.message());

  const int n_mod = cfg.regime == Regime::VI ? 2 : 1;
  GeneratedDataset out;
  std::vector<Image> test_images;  // kept for the signal statistics

  for (int split = 0; split < 2; ++split) {
    const bool is_test = split == 1;
    DatasetManifest& man = is_test ? out.test : out.train;
    man.regime = cfg.regime;
    man.split = is_test ? "test" : "train";
    const int id_lo = is_test ? cfg.n_train_ids : 0;
    const int id_hi = is_test ? cfg.n_train_ids + cfg.n_test_ids : cfg.n_train_ids;

    for (int id = id_lo; id < id_hi; ++id) {
      auto id_rng = make_rng(derive_seed(cfg.seed, 1, static_cast<std::uint64_t>(id)));
      const IdentitySpec spec = make_identity(id, cfg.clothing_sets, id_rng);
      for (int view = 0; view < cfg.views; ++view)
        for (int cloth = 0; cloth < cfg.clothing_sets; ++cloth)
          for (int mod = 0; mod < n_mod; ++mod)
            for (int i = 0; i < cfg.images_per_cell; ++i) {
              ManifestRow row;
              row.identity = id;
              row.view = view;
              row.clothing = cloth;
              row.modality = mod == 0 ? Modality::RGB : Modality::IR;
              row.path = row_filename(man.split.c_str(), row, i);
              auto rng = make_rng(derive_seed(
                  cfg.seed, 2, static_cast<std::uint64_t>(id),
                  (static_cast<std::uint64_t>(view) * 8 + static_cast<std::uint64_t>(cloth)) * 2 +
                      static_cast<std::uint64_t>(mod),
                  static_cast<std::uint64_t>(i)));
              Image img = render_sample(spec, view, cloth, row.modality, rng);
              write_png(out_dir + "/" + row.path, img.pixels);
              man.rows.push_back(row);
              if (is_test) test_images.push_back(std::move(img));
            }
    }
  }

  // ------------------------------------------------ signal validity checks
  // pixel nearest-neighbor probes on the test split: identity must be
  // recoverable without color, and in the cloth-change regime raw color must
  // help when clothes persist and hurt when they change
  const auto& rows = out.test.rows;
  const std::size_t n_test = rows.size();
  std::vector<std::vector<float>> gray(n_test), rgbv(n_test);
  for (std::size_t i = 0; i < n_test; ++i) {
    const Tensor<float>& px = test_images[i].pixels;
    const std::size_t hw = px.numel() / 3;
    gray[i].resize(hw);
    for (std::size_t p = 0; p < hw; ++p)
      gray[i][p] = 0.299f * px[p] + 0.587f * px[p + hw] + 0.114f * px[p + 2 * hw];
    if (cfg.regime == Regime::CC) rgbv[i].assign(px.data.begin(), px.data.end());
  }

  std::vector<int> queries;
  for (std::size_t i = 0; i < n_test; ++i) {
    const bool is_query = cfg.regime == Regime::VI ? rows[i].modality == Modality::IR : true;
    if (is_query) queries.push_back(static_cast<int>(i));
  }
  if (queries.size() > 192) {  // cap the probe cost; stride keeps it deterministic
    const std::size_t stride = (queries.size() + 191) / 192;
    std::vector<int> sub;
    for (std::size_t i = 0; i < queries.size(); i += stride) sub.push_back(queries[i]);
    queries.swap(sub);
  }

  int gray_hits = 0, rgb_cross_hits = 0, rgb_same_hits = 0;
  for (int q : queries) {
    const ManifestRow& qr = rows[static_cast<std::size_t>(q)];
    if (cfg.regime == Regime::VI) {
      const int id = nearest_identity(gray, rows, q, [&](const ManifestRow& g) {
        return g.modality == Modality::RGB && g.view != qr.view;
      });
      gray_hits += id == qr.identity;
    } else {
      auto cross = [&](const ManifestRow& g) {
        return g.clothing != qr.clothing && g.view != qr.view;
      };
      auto same = [&](const ManifestRow& g) {
        return g.clothing == qr.clothing && g.view != qr.view;
      };
      gray_hits += nearest_identity(gray, rows, q, cross) == qr.identity;
      rgb_cross_hits += nearest_identity(rgbv, rows, q, cross) == qr.identity;
      rgb_same_hits += nearest_identity(rgbv, rows, q, same) == qr.identity;
    }
  }
  const double nq = static_cast<double>(queries.size());

  for (DatasetManifest* man : {&out.train, &out.test}) {
    auto& meta = man->meta;
    meta["regime"] = regime_name(cfg.regime);
    meta["seed"] = std::to_string(cfg.seed);
    meta["n_train_ids"] = std::to_string(cfg.n_train_ids);
    meta["n_test_ids"] = std::to_string(cfg.n_test_ids);
    meta["views"] = std::to_string(cfg.views);
    meta["clothing_sets"] = std::to_string(cfg.clothing_sets);
    meta["images_per_cell"] = std::to_string(cfg.images_per_cell);
    meta["canvas"] = std::to_string(kCanvasH) + "x" + std::to_string(kCanvasW);
    meta["signal_chance"] = fmt6(1.0 / cfg.n_test_ids);
    meta["signal_gray_rank1"] = fmt6(gray_hits / nq);
    if (cfg.regime == Regime::CC) {
      meta["signal_rgb_cross_cloth_rank1"] = fmt6(rgb_cross_hits / nq);
      meta["signal_rgb_same_cloth_rank1"] = fmt6(rgb_same_hits / nq);
    }
  }

  write_manifest(out_dir + "/manifest_train.csv", out.train);
  write_manifest(out_dir + "/manifest_test.csv", out.test);
  return out;
}

DatasetManifest load_manifest(const std::string& csv_path) {
  std::ifstream in(csv_path, std::ios::binary);
  if (!in) throw std::runtime_error("load_manifest: cannot open " + csv_path);
  DatasetManifest m;
  std::string line;
  int line_no = 0;
  bool saw_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream ls(line.substr(1));
      std::string key, value;
      ls >> key >> value;
      if (!key.empty()) m.meta[key] = value;
      continue;
    }
    if (!saw_header) {
      if (line != "path,identity,modality,view,clothing")
        throw std::runtime_error("load_manifest: " + csv_path + ":" + std::to_string(line_no) +
                                 ": unexpected header '" + line + "'");
      saw_header = true;
      continue;
    }
    std::istringstream ls(line);
    std::string path, id_s, mod_s, view_s, cloth_s;
    if (!std::getline(ls, path, ',') || !std::getline(ls, id_s, ',') ||
        !std::getline(ls, mod_s, ',') || !std::getline(ls, view_s, ',') ||
        !std::getline(ls, cloth_s))
      throw std::runtime_error("load_manifest: " + csv_path + ":" + std::to_string(line_no) +
                               ": expected 5 columns");
    ManifestRow row;
    row.path = path;
    row.identity = std::stoi(id_s);
    row.view = std::stoi(view_s);
    row.clothing = std::stoi(cloth_s);
    if (mod_s == "rgb")
      row.modality = Modality::RGB;
    else if (mod_s == "ir")
      row.modality = Modality::IR;
    else
      throw std::runtime_error("load_manifest: " + csv_path + ":" + std::to_string(line_no) +
                               ": unknown modality '" + mod_s + "'");
    m.rows.push_back(std::move(row));
  }
  if (!saw_header)
    throw std::runtime_error("load_manifest: " + csv_path + " has no header row");
  auto it = m.meta.find("regime");
  if (it != m.meta.end()) m.regime = regime_from_string(it->second);
  const std::string stem = fs::path(csv_path).stem().string();
  m.split = stem.rfind("manifest_", 0) == 0 ? stem.substr(9) : stem;
  return m;
}

std::vector<Image> load_images(const DatasetManifest& m, const std::string& root_dir) {
  std::vector<Image> out;
  out.reserve(m.rows.size());
  for (const auto& row : m.rows) {
    Image img;
    img.pixels = read_png(root_dir + "/" + row.path);
    img.modality = row.modality;
    img.identity = row.identity;
    img.view = row.view;
    img.clothing = row.clothing;
    out.push_back(std::move(img));
  }
  return out;
}

// ---------------------------------------------------------------- sampler --

PkSampler::PkSampler(const DatasetManifest& manifest, const std::vector<Image>& images)
    : manifest_(&manifest), images_(&images), regime_(manifest.regime) {
  if (manifest.rows.size() != images.size())
    throw std::invalid_argument("PkSampler: " + std::to_string(images.size()) + " images for " +
                                std::to_string(manifest.rows.size()) + " manifest rows");
  for (std::size_t i = 0; i < manifest.rows.size(); ++i) {
    const ManifestRow& r = manifest.rows[i];
    auto& pool = r.modality == Modality::RGB ? rgb_pool_ : ir_pool_;
    pool[r.identity].push_back(static_cast<int>(i));
  }
  for (const auto& kv : rgb_pool_) ids_.push_back(kv.first);
  if (regime_ == Regime::VI)
    for (int id : ids_)
      if (ir_pool_.find(id) == ir_pool_.end())
        throw std::invalid_argument("PkSampler: identity " + std::to_string(id) +
                                    " has no infrared images in the vi regime");
}

int PkSampler::label_of(int identity) const {
  auto it = std::lower_bound(ids_.begin(), ids_.end(), identity);
  if (it == ids_.end() || *it != identity)
    throw std::invalid_argument("PkSampler: unknown identity " + std::to_string(identity));
  return static_cast<int>(it - ids_.begin());
}

std::vector<int> PkSampler::pick(const std::vector<int>& pool, int k, int identity,
                                 std::mt19937& rng) {
  std::vector<int> chosen;
  chosen.reserve(static_cast<std::size_t>(k));
  if (static_cast<int>(pool.size()) >= k) {
    std::vector<int> idx(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i) idx[i] = static_cast<int>(i);
    for (int i = 0; i < k; ++i) {  // partial Fisher-Yates
      std::uniform_int_distribution<int> d(i, static_cast<int>(idx.size()) - 1);
      std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(d(rng))]);
      chosen.push_back(pool[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])]);
    }
  } else {
    ++resample_events_;
    log_.push_back("identity " + std::to_string(identity) + ": " +
                   std::to_string(pool.size()) + " images for k=" + std::to_string(k) +
                   ", sampling with replacement");
    std::uniform_int_distribution<int> d(0, static_cast<int>(pool.size()) - 1);
    for (int i = 0; i < k; ++i) chosen.push_back(pool[static_cast<std::size_t>(d(rng))]);
  }
  return chosen;
}

Batch PkSampler::sample(int p, int k, std::mt19937& rng) {
  if (p < 2 || k < 1)
    throw std::invalid_argument("PkSampler: need p >= 2 identities and k >= 1 images");
  if (p > n_classes())
    throw std::invalid_argument("PkSampler: p=" + std::to_string(p) + " with only " +
                                std::to_string(n_classes()) + " identities");
  if (regime_ == Regime::CC && k < 2)
    throw std::invalid_argument("PkSampler: the cloth-change regime needs k >= 2 to span " +
                                std::string("two clothing sets"));

  // choose P identities without replacement
  std::vector<int> ids = ids_;
  std::vector<int> picked;
  for (int i = 0; i < p; ++i) {
    std::uniform_int_distribution<int> d(i, static_cast<int>(ids.size()) - 1);
    std::swap(ids[static_cast<std::size_t>(i)], ids[static_cast<std::size_t>(d(rng))]);
    picked.push_back(ids[static_cast<std::size_t>(i)]);
  }

  std::vector<int> rgb_rows, ir_rows;
  for (int id : picked) {
    std::vector<int> mine = pick(rgb_pool_[id], k, id, rng);
    if (regime_ == Regime::CC) {
      // make sure the K picks span at least two clothing sets
      const auto cloth_of = [&](int row) {
        return manifest_->rows[static_cast<std::size_t>(row)].clothing;
      };
      bool uniform_cloth = true;
      for (int r : mine) uniform_cloth = uniform_cloth && cloth_of(r) == cloth_of(mine[0]);
      if (uniform_cloth) {
        const auto& pool = rgb_pool_[id];
        std::vector<int> alt;
        for (int r : pool)
          if (cloth_of(r) != cloth_of(mine[0])) alt.push_back(r);
        if (!alt.empty()) {
          std::uniform_int_distribution<int> d(0, static_cast<int>(alt.size()) - 1);
          mine.back() = alt[static_cast<std::size_t>(d(rng))];
        }
      }
    }
    rgb_rows.insert(rgb_rows.end(), mine.begin(), mine.end());
    if (regime_ == Regime::VI) {
      std::vector<int> irs = pick(ir_pool_[id], k, id, rng);
      ir_rows.insert(ir_rows.end(), irs.begin(), irs.end());
    }
  }

  const Image& first = (*images_)[static_cast<std::size_t>(rgb_rows[0])];
  const int h = first.height(), w = first.width();
  auto fill = [&](const std::vector<int>& rows_idx, Tensor<float>& t, std::vector<int>& labels) {
    t = Tensor<float>({static_cast<int>(rows_idx.size()), 3, h, w});
    labels.clear();
    for (std::size_t i = 0; i < rows_idx.size(); ++i) {
      const Image& img = (*images_)[static_cast<std::size_t>(rows_idx[i])];
      std::copy(img.pixels.data.begin(), img.pixels.data.end(),
                t.data.begin() + static_cast<std::ptrdiff_t>(i * img.pixels.numel()));
      labels.push_back(label_of(img.identity));
    }
  };

  Batch b;
  b.rgb_rows = rgb_rows;
  b.ir_rows = ir_rows;
  fill(rgb_rows, b.rgb, b.rgb_labels);
  if (!ir_rows.empty()) fill(ir_rows, b.ir, b.ir_labels);
  return b;
}

}  // namespace cclab
