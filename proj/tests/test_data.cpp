#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <vector>

#include "cclab/data.hpp"
#include "cclab/losses.hpp"
#include "cclab/seeds.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace cclab;
using namespace cclab::testutil;
namespace fs = std::filesystem;

TEST_SUITE_BEGIN("data");

static std::string fresh_dir(const char* name) {
  fs::path p = fs::temp_directory_path() / "cclab_tests" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p.string();
}

static std::string file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

static IdentitySpec demo_identity(int id = 7, int cloth_sets = 2, std::uint64_t seed = 5) {
  auto rng = make_rng(seed);
  return make_identity(id, cloth_sets, rng);
}

// ---------------------------------------------------------------- identity

TEST_CASE("identity spec: seeded geometry within bounds, distinct outfits") {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    auto rng = make_rng(seed);
    auto s = make_identity(static_cast<int>(seed), 3, rng);
    CHECK(s.head_radius >= 3);
    CHECK(s.head_radius <= 5);
    CHECK(s.torso_width >= 10);
    CHECK(s.torso_width <= 16);
    CHECK(s.torso_height >= 18);
    CHECK(s.torso_height <= 26);
    CHECK(s.leg_width >= 3);
    CHECK(s.leg_width <= 6);
    CHECK(s.skin_tone >= 0.3f);
    CHECK(s.skin_tone <= 0.8f);
    REQUIRE(s.cloth_sets.size() == 3);
    for (std::size_t a = 0; a < 3; ++a)
      for (std::size_t b = a + 1; b < 3; ++b) {
        bool same = true;
        for (int k = 0; k < 3; ++k)
          same = same && s.cloth_sets[a].torso[k] == s.cloth_sets[b].torso[k] &&
                 s.cloth_sets[a].legs[k] == s.cloth_sets[b].legs[k];
        CHECK(!same);
      }
  }
  auto rng = make_rng(1);
  CHECK(contains(thrown_message([&] { make_identity(0, 0, rng); }), "clothing sets"));
  auto rng2 = make_rng(1), rng3 = make_rng(1);
  auto a = make_identity(3, 2, rng2), b = make_identity(3, 2, rng3);
  CHECK(a.texture_seed == b.texture_seed);
  CHECK(a.torso_width == b.torso_width);
}

// --------------------------------------------------------------- rendering

TEST_CASE("render: same inputs and seed give identical pixels and bytes") {
  auto spec = demo_identity();
  auto r1 = make_rng(11), r2 = make_rng(11);
  auto a = render_sample(spec, 1, 0, Modality::RGB, r1);
  auto b = render_sample(spec, 1, 0, Modality::RGB, r2);
  REQUIRE(a.pixels.numel() == b.pixels.numel());
  for (std::size_t i = 0; i < a.pixels.numel(); ++i) CHECK(a.pixels[i] == b.pixels[i]);

  const std::string dir = fresh_dir("render_bytes");
  write_png(dir + "/a.png", a.pixels);
  write_png(dir + "/b.png", b.pixels);
  CHECK(file_bytes(dir + "/a.png") == file_bytes(dir + "/b.png"));

  auto r3 = make_rng(12);
  auto c = render_sample(spec, 1, 0, Modality::RGB, r3);
  bool all_same = true;
  for (std::size_t i = 0; i < a.pixels.numel(); ++i) all_same = all_same && a.pixels[i] == c.pixels[i];
  CHECK(!all_same);  // different jitter seed moves the body
}

TEST_CASE("render: infrared replicates one noisy luminance plane") {
  auto spec = demo_identity();
  auto rng = make_rng(13);
  auto ir = render_sample(spec, 0, 0, Modality::IR, rng);
  CHECK(channels_identical(ir.pixels));
  for (float v : ir.pixels.data) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }

  // same seed, RGB render: the IR plane is its luminance plus noise
  auto rng2 = make_rng(13);
  auto rgb = render_sample(spec, 0, 0, Modality::RGB, rng2);
  int diffs = 0;
  const std::size_t hw = static_cast<std::size_t>(kCanvasH) * kCanvasW;
  for (std::size_t p = 0; p < hw; ++p) {
    const float luma = 0.299f * rgb.pixels[p] + 0.587f * rgb.pixels[p + hw] +
                       0.114f * rgb.pixels[p + 2 * hw];
    const float got = ir.pixels[p];
    CHECK(std::abs(got - luma) < 0.15f);  // noise is small
    diffs += got != luma;
  }
  CHECK(diffs > static_cast<int>(hw) / 2);  // but actually applied
}

TEST_CASE("render: clothing change touches only clothing-region pixels") {
  auto spec = demo_identity(3, 3, 17);
  for (int other : {1, 2}) {
    RenderMasks m0, m1;
    auto r0 = make_rng(21), r1 = make_rng(21);
    auto a = render_sample(spec, 2, 0, Modality::RGB, r0, &m0);
    auto b = render_sample(spec, 2, other, Modality::RGB, r1, &m1);
    CHECK(m0.clothing == m1.clothing);  // same jitter, same silhouette
    CHECK(m0.skin == m1.skin);
    int diffs = 0;
    for (int r = 0; r < kCanvasH; ++r)
      for (int c = 0; c < kCanvasW; ++c) {
        bool differ = false;
        for (int k = 0; k < 3; ++k)
          differ = differ || a.pixels.at3(k, r, c) != b.pixels.at3(k, r, c);
        if (differ) {
          ++diffs;
          CHECK(m0.clothing[static_cast<std::size_t>(r) * kCanvasW + c] == 1);
        }
      }
    CHECK(diffs > 0);
  }
}

TEST_CASE("render: region masks partition the canvas") {
  auto spec = demo_identity();
  RenderMasks m;
  auto rng = make_rng(14);
  render_sample(spec, 0, 0, Modality::RGB, rng, &m);
  int clothing = 0, skin = 0;
  for (std::size_t i = 0; i < m.clothing.size(); ++i) {
    CHECK(m.clothing[i] + m.skin[i] + m.background[i] == 1);
    clothing += m.clothing[i];
    skin += m.skin[i];
  }
  CHECK(clothing > 100);  // torso + legs dominate the body
  CHECK(skin > 10);

  auto rng2 = make_rng(14);
  CHECK(contains(thrown_message([&] { render_sample(spec, 0, 5, Modality::RGB, rng2); }),
                 "clothing set"));
}

TEST_CASE("render: background depends on the view alone") {
  auto s1 = demo_identity(1, 1, 31);
  auto s2 = demo_identity(2, 1, 32);
  RenderMasks m1, m2;
  auto r1 = make_rng(41), r2 = make_rng(42);
  auto a = render_sample(s1, 3, 0, Modality::RGB, r1, &m1);
  auto b = render_sample(s2, 3, 0, Modality::RGB, r2, &m2);
  // any pixel that is background in both images has the same color
  for (int r = 0; r < kCanvasH; ++r)
    for (int c = 0; c < kCanvasW; ++c) {
      const std::size_t idx = static_cast<std::size_t>(r) * kCanvasW + c;
      if (m1.background[idx] && m2.background[idx])
        for (int k = 0; k < 3; ++k) CHECK(a.pixels.at3(k, r, c) == b.pixels.at3(k, r, c));
    }
  // and a different view recolors it
  auto r3 = make_rng(41);
  RenderMasks m3;
  auto d = render_sample(s1, 1, 0, Modality::RGB, r3, &m3);
  bool bg_differs = false;
  for (std::size_t i = 0; i < m1.background.size(); ++i)
    if (m1.background[i] && m3.background[i]) {
      const int r = static_cast<int>(i) / kCanvasW, c = static_cast<int>(i) % kCanvasW;
      for (int k = 0; k < 3; ++k) bg_differs = bg_differs || a.pixels.at3(k, r, c) != d.pixels.at3(k, r, c);
    }
  CHECK(bg_differs);
}

// ----------------------------------------------------------------- dataset

TEST_CASE("dataset: default visible-infrared config counts and invariants") {
  const std::string dir = fresh_dir("vi_default");
  DatasetConfig cfg;  // defaults: 32/16 ids, 4 views, 4 per cell, VI
  auto ds = make_dataset(cfg, dir);

  CHECK(ds.train.rows.size() == 32u * 4 * 2 * 4);  // 1024
  CHECK(ds.test.rows.size() == 16u * 4 * 2 * 4);   // 512
  CHECK(ds.train.split == "train");
  CHECK(ds.test.split == "test");

  // every identity has at least two images per modality; splits disjoint
  std::map<int, int> rgb_count, ir_count;
  std::set<int> train_ids, test_ids;
  for (const auto& r : ds.train.rows) {
    train_ids.insert(r.identity);
    (r.modality == Modality::RGB ? rgb_count : ir_count)[r.identity]++;
  }
  for (const auto& r : ds.test.rows) test_ids.insert(r.identity);
  CHECK(train_ids.size() == 32u);
  CHECK(test_ids.size() == 16u);
  for (int id : train_ids) {
    CHECK(test_ids.count(id) == 0u);
    CHECK(rgb_count[id] >= 2);
    CHECK(ir_count[id] >= 2);
  }

  // files exist and the manifest loads back identically
  CHECK(fs::exists(dir + "/" + ds.train.rows.front().path));
  CHECK(fs::exists(dir + "/" + ds.test.rows.back().path));
  auto loaded = load_manifest(dir + "/manifest_train.csv");
  REQUIRE(loaded.rows.size() == ds.train.rows.size());
  CHECK(loaded.regime == Regime::VI);
  CHECK(loaded.split == "train");
  for (std::size_t i = 0; i < loaded.rows.size(); ++i) {
    CHECK(loaded.rows[i].path == ds.train.rows[i].path);
    CHECK(loaded.rows[i].identity == ds.train.rows[i].identity);
    CHECK(loaded.rows[i].view == ds.train.rows[i].view);
    CHECK(loaded.rows[i].clothing == ds.train.rows[i].clothing);
    CHECK((loaded.rows[i].modality == ds.train.rows[i].modality));
  }

  // identity signal survives grayscale: recorded at generation time
  const double gray = std::stod(loaded.meta.at("signal_gray_rank1"));
  const double chance = std::stod(loaded.meta.at("signal_chance"));
  CHECK(chance == doctest::Approx(1.0 / 16).epsilon(1e-9));
  CHECK(gray > chance);
}

TEST_CASE("dataset: cloth-change regime stats show color misleading") {
  const std::string dir = fresh_dir("cc_stats");
  DatasetConfig cfg;
  cfg.regime = Regime::CC;
  cfg.n_train_ids = 8;  // stats only probe the test split; keep train small
  auto ds = make_dataset(cfg, dir);

  CHECK(ds.train.rows.size() == 8u * 4 * 3 * 4);
  CHECK(ds.test.rows.size() == 16u * 4 * 3 * 4);
  for (const auto& r : ds.test.rows) CHECK(r.modality == Modality::RGB);

  // every test identity has at least two clothing sets
  std::map<int, std::set<int>> cloth;
  for (const auto& r : ds.test.rows) cloth[r.identity].insert(r.clothing);
  for (const auto& kv : cloth) CHECK(kv.second.size() >= 2u);

  const double gray = std::stod(ds.test.meta.at("signal_gray_rank1"));
  const double chance = std::stod(ds.test.meta.at("signal_chance"));
  const double rgb_cross = std::stod(ds.test.meta.at("signal_rgb_cross_cloth_rank1"));
  const double rgb_same = std::stod(ds.test.meta.at("signal_rgb_same_cloth_rank1"));
  CHECK(gray > chance);
  CHECK(rgb_cross < rgb_same);
}

TEST_CASE("dataset: same seed reproduces bytes, different seed does not") {
  DatasetConfig cfg;
  cfg.n_train_ids = 2;
  cfg.n_test_ids = 2;
  cfg.views = 2;
  cfg.images_per_cell = 1;
  const std::string d1 = fresh_dir("det_a"), d2 = fresh_dir("det_b"), d3 = fresh_dir("det_c");
  auto a = make_dataset(cfg, d1);
  auto b = make_dataset(cfg, d2);
  CHECK(file_bytes(d1 + "/manifest_train.csv") == file_bytes(d2 + "/manifest_train.csv"));
  CHECK(file_bytes(d1 + "/manifest_test.csv") == file_bytes(d2 + "/manifest_test.csv"));
  for (const auto& r : a.train.rows)
    CHECK(file_bytes(d1 + "/" + r.path) == file_bytes(d2 + "/" + r.path));

  cfg.seed = 99;
  auto c = make_dataset(cfg, d3);
  bool any_differs = false;
  for (const auto& r : c.train.rows)
    any_differs = any_differs || file_bytes(d1 + "/" + r.path) != file_bytes(d3 + "/" + r.path);
  CHECK(any_differs);
}

TEST_CASE("dataset: images load back with metadata and 8-bit fidelity") {
  DatasetConfig cfg;
  cfg.n_train_ids = 2;
  cfg.n_test_ids = 2;
  cfg.views = 2;
  cfg.images_per_cell = 1;
  const std::string dir = fresh_dir("load_back");
  auto ds = make_dataset(cfg, dir);
  auto images = load_images(ds.train, dir);
  REQUIRE(images.size() == ds.train.rows.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    CHECK(images[i].height() == kCanvasH);
    CHECK(images[i].width() == kCanvasW);
    CHECK(images[i].identity == ds.train.rows[i].identity);
    CHECK((images[i].modality == ds.train.rows[i].modality));
    if (images[i].modality == Modality::IR) CHECK(channels_identical(images[i].pixels));
  }

  // quantization error bound for a fresh render written and read back
  auto spec = demo_identity();
  auto rng = make_rng(55);
  auto img = render_sample(spec, 0, 0, Modality::RGB, rng);
  write_png(dir + "/roundtrip.png", img.pixels);
  auto back = read_png(dir + "/roundtrip.png");
  for (std::size_t i = 0; i < img.pixels.numel(); ++i)
    CHECK(std::abs(back[i] - img.pixels[i]) <= 0.5f / 255.0f + 1e-6f);
}

TEST_CASE("dataset: invalid configurations are rejected with a reason") {
  DatasetConfig cfg;
  cfg.n_train_ids = 1;
  CHECK(contains(thrown_message([&] { make_dataset(cfg, "/tmp/never"); }), "2 identities"));
  DatasetConfig cc;
  cc.regime = Regime::CC;
  cc.clothing_sets = 1;
  CHECK(contains(thrown_message([&] { make_dataset(cc, "/tmp/never"); }), "clothing sets"));
  CHECK(contains(thrown_message([&] { load_manifest("/tmp/does_not_exist.csv"); }), "cannot open"));
  CHECK(contains(thrown_message([&] { regime_from_string("thermal"); }), "unknown regime"));
}

// ----------------------------------------------------------------- sampler

static GeneratedDataset small_vi(const std::string& dir) {
  DatasetConfig cfg;
  cfg.n_train_ids = 4;
  cfg.n_test_ids = 2;
  cfg.views = 2;
  cfg.images_per_cell = 2;  // 4 rgb + 4 ir per identity
  return make_dataset(cfg, dir);
}

TEST_CASE("sampler: P identities with K images per modality") {
  const std::string dir = fresh_dir("pk_vi");
  auto ds = small_vi(dir);
  auto images = load_images(ds.train, dir);
  PkSampler sampler(ds.train, images);
  CHECK(sampler.n_classes() == 4);

  auto rng = make_rng(7);
  auto batch = sampler.sample(4, 4, rng);
  CHECK(batch.rgb.dim(0) == 16);
  CHECK(batch.ir.dim(0) == 16);
  CHECK(batch.rgb_labels.size() == 16u);
  CHECK(batch.ir_labels.size() == 16u);

  std::map<int, int> per_id_rgb, per_id_ir;
  for (int l : batch.rgb_labels) per_id_rgb[l]++;
  for (int l : batch.ir_labels) per_id_ir[l]++;
  CHECK(per_id_rgb.size() == 4u);
  for (const auto& kv : per_id_rgb) {
    CHECK(kv.second == 4);
    CHECK(per_id_ir[kv.first] == 4);
    CHECK(kv.first >= 0);
    CHECK(kv.first < 4);  // contiguous training labels
  }
  CHECK(sampler.resample_events() == 0);

  // distinct images within one identity draw (pool exactly covers K)
  std::set<int> uniq(batch.rgb_rows.begin(), batch.rgb_rows.end());
  CHECK(uniq.size() == batch.rgb_rows.size());

  // the combined batch satisfies the metric-loss precondition
  std::vector<int> all_labels = batch.rgb_labels;
  all_labels.insert(all_labels.end(), batch.ir_labels.begin(), batch.ir_labels.end());
  for (std::size_t i = 0; i < all_labels.size(); ++i) {
    int pos = 0, neg = 0;
    for (std::size_t j = 0; j < all_labels.size(); ++j) {
      if (i == j) continue;
      (all_labels[i] == all_labels[j] ? pos : neg)++;
    }
    CHECK(pos >= 1);
    CHECK(neg >= 1);
  }
}

TEST_CASE("sampler: two identities one image each still pairs across modalities") {
  const std::string dir = fresh_dir("pk_vi_min");
  auto ds = small_vi(dir);
  auto images = load_images(ds.train, dir);
  PkSampler sampler(ds.train, images);
  auto rng = make_rng(8);
  auto batch = sampler.sample(2, 1, rng);
  CHECK(batch.rgb.dim(0) == 2);
  CHECK(batch.ir.dim(0) == 2);
  // every anchor's positive is its cross-modality twin
  CHECK(batch.rgb_labels == batch.ir_labels);
  CHECK(batch.rgb_labels[0] != batch.rgb_labels[1]);
}

TEST_CASE("sampler: fixed seed fixes the batch sequence") {
  const std::string dir = fresh_dir("pk_det");
  auto ds = small_vi(dir);
  auto images = load_images(ds.train, dir);
  PkSampler s1(ds.train, images), s2(ds.train, images);
  auto r1 = make_rng(123), r2 = make_rng(123);
  for (int step = 0; step < 3; ++step) {
    auto b1 = s1.sample(3, 2, r1);
    auto b2 = s2.sample(3, 2, r2);
    CHECK(b1.rgb_rows == b2.rgb_rows);
    CHECK(b1.ir_rows == b2.ir_rows);
  }
  auto r3 = make_rng(124);
  auto b3 = s1.sample(3, 2, r3);
  auto r4 = make_rng(123);
  auto b4 = s2.sample(3, 2, r4);
  CHECK(b3.rgb_rows != b4.rgb_rows);
}

TEST_CASE("sampler: short pools resample with replacement and log it") {
  const std::string dir = fresh_dir("pk_short");
  DatasetConfig cfg;
  cfg.n_train_ids = 2;
  cfg.n_test_ids = 2;
  cfg.views = 1;
  cfg.images_per_cell = 1;  // one rgb + one ir per identity
  auto ds = make_dataset(cfg, dir);
  auto images = load_images(ds.train, dir);
  PkSampler sampler(ds.train, images);
  auto rng = make_rng(9);
  auto batch = sampler.sample(2, 4, rng);
  CHECK(batch.rgb.dim(0) == 8);
  CHECK(batch.ir.dim(0) == 8);
  CHECK(sampler.resample_events() > 0);
  REQUIRE(!sampler.log().empty());
  CHECK(contains(sampler.log().front(), "replacement"));
}

TEST_CASE("sampler: cloth-change batches span clothing sets, no infrared") {
  // in-memory manifest: identity 0 has four images of outfit 0 and one of
  // outfit 1, so uniform draws are likely and the span guarantee must kick in
  DatasetManifest man;
  man.regime = Regime::CC;
  man.split = "train";
  std::vector<Image> images;
  auto add = [&](int identity, int cloth, int view) {
    ManifestRow r;
    r.identity = identity;
    r.clothing = cloth;
    r.view = view;
    r.modality = Modality::RGB;
    r.path = "mem";
    man.rows.push_back(r);
    Image img;
    img.pixels = Tensor<float>({3, 8, 4});
    img.pixels.fill(0.25f * static_cast<float>(cloth + 1));
    img.identity = identity;
    img.clothing = cloth;
    img.view = view;
    images.push_back(img);
  };
  for (int id : {0, 1}) {
    for (int i = 0; i < 4; ++i) add(id, 0, i % 2);
    add(id, 1, 0);
  }
  PkSampler sampler(man, images);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    auto rng = make_rng(seed);
    auto batch = sampler.sample(2, 4, rng);
    CHECK(batch.ir.numel() == 0u);
    CHECK(batch.ir_labels.empty());
    for (int id_slot = 0; id_slot < 2; ++id_slot) {
      std::set<int> cloths;
      for (int k = 0; k < 4; ++k)
        cloths.insert(man.rows[static_cast<std::size_t>(batch.rgb_rows[id_slot * 4 + k])].clothing);
      CHECK(cloths.size() >= 2u);
    }
  }
  auto rng = make_rng(1);
  CHECK(contains(thrown_message([&] { sampler.sample(2, 1, rng); }), "k >= 2"));
  CHECK(contains(thrown_message([&] { sampler.sample(5, 2, rng); }), "only"));
}

TEST_SUITE_END();
