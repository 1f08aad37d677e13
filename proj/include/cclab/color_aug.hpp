#pragma once
// Image-level color augmentation: channel replacement, channel swap, the
// 0.5/0.5 mix with the original, grayscale, and random-crop preprocessing.
// All functions are pure; randomness comes in through an explicit generator
// and is drawn in a fixed order.

#include <array>
#include <random>
#include <stdexcept>
#include <string>

#include "cclab/image.hpp"
#include "cclab/tensor.hpp"

namespace cclab {

enum class AugVariant { None, ChannelReplace, ChannelSwap, Gray, ICA };

struct AugPolicy {
  AugVariant variant = AugVariant::ICA;
  float p_apply = 0.5f;          // chance an RGB image is augmented at all
  float p_cr_given_apply = 0.5f; // within ICA, chance of replace vs swap
  std::uint64_t rng_seed = 0;    // stream tag; the trainer derives the generator

  void validate() const {
    if (p_apply < 0.f || p_apply > 1.f || p_cr_given_apply < 0.f || p_cr_given_apply > 1.f)
      throw std::invalid_argument("aug policy: probabilities must lie in [0,1]");
  }
};

inline AugVariant aug_variant_from_string(const std::string& s) {
  if (s == "none") return AugVariant::None;
  if (s == "cr") return AugVariant::ChannelReplace;
  if (s == "cs") return AugVariant::ChannelSwap;
  if (s == "gray") return AugVariant::Gray;
  if (s == "ica") return AugVariant::ICA;
  throw std::invalid_argument("unknown augmentation variant '" + s +
                              "' (expected none|cr|cs|gray|ica)");
}

inline const char* aug_variant_name(AugVariant v) {
  switch (v) {
    case AugVariant::None: return "none";
    case AugVariant::ChannelReplace: return "cr";
    case AugVariant::ChannelSwap: return "cs";
    case AugVariant::Gray: return "gray";
    case AugVariant::ICA: return "ica";
  }
  return "?";
}

// All six permutations of (0,1,2); index 0 is the identity.
inline constexpr std::array<std::array<int, 3>, 6> kChannelPerms = {
    {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};

// Copies source channel c into all three output channels.
inline Image channel_replace(const Image& img, int c) {
  if (img.modality != Modality::RGB)
    throw std::invalid_argument("channel_replace: defined on RGB images only");
  if (c < 0 || c > 2) throw std::invalid_argument("channel_replace: channel index out of range");
  Image out = img;
  const std::size_t plane = img.pixels.numel() / 3;
  const float* src = img.pixels.ptr() + static_cast<std::size_t>(c) * plane;
  for (int ch = 0; ch < 3; ++ch) {
    float* dst = out.pixels.ptr() + static_cast<std::size_t>(ch) * plane;
    for (std::size_t i = 0; i < plane; ++i) dst[i] = src[i];
  }
  return out;
}

// Output channel i = input channel perm[i].
inline Image channel_swap(const Image& img, const std::array<int, 3>& perm) {
  if (img.modality != Modality::RGB)
    throw std::invalid_argument("channel_swap: defined on RGB images only");
  bool seen[3] = {false, false, false};
  for (int p : perm) {
    if (p < 0 || p > 2 || seen[p])
      throw std::invalid_argument("channel_swap: permutation must be a bijection on {0,1,2}");
    seen[p] = true;
  }
  Image out = img;
  const std::size_t plane = img.pixels.numel() / 3;
  for (int ch = 0; ch < 3; ++ch) {
    const float* src = img.pixels.ptr() + static_cast<std::size_t>(perm[ch]) * plane;
    float* dst = out.pixels.ptr() + static_cast<std::size_t>(ch) * plane;
    for (std::size_t i = 0; i < plane; ++i) dst[i] = src[i];
  }
  return out;
}

// perm equivalent to applying `first`, then `second`:
// swap(swap(x, first), second) == swap(x, compose_perm(first, second)).
inline std::array<int, 3> compose_perm(const std::array<int, 3>& first,
                                       const std::array<int, 3>& second) {
  return {first[second[0]], first[second[1]], first[second[2]]};
}

// Elementwise 0.5*original + 0.5*augmented; the pair must describe the same
// person record.
inline Image ica_mix(const Image& original, const Image& augmented) {
  if (!original.pixels.same_shape(augmented.pixels))
    throw std::invalid_argument("ica_mix: shape mismatch " + shape_str(original.pixels.shape) +
                                " vs " + shape_str(augmented.pixels.shape));
  if (original.identity != augmented.identity || original.view != augmented.view ||
      original.clothing != augmented.clothing || original.modality != augmented.modality)
    throw std::invalid_argument("ica_mix: metadata mismatch between the two inputs");
  Image out = original;
  for (std::size_t i = 0; i < out.pixels.numel(); ++i)
    out.pixels[i] = 0.5f * original.pixels[i] + 0.5f * augmented.pixels[i];
  return out;
}

// BT.601 luminance into all three channels.
inline Image grayscale(const Image& img) {
  Image out = img;
  const std::size_t plane = img.pixels.numel() / 3;
  const float* r = img.pixels.ptr();
  const float* g = r + plane;
  const float* b = g + plane;
  for (std::size_t i = 0; i < plane; ++i) {
    const float y = 0.299f * r[i] + 0.587f * g[i] + 0.114f * b[i];
    out.pixels[i] = y;
    out.pixels[plane + i] = y;
    out.pixels[2 * plane + i] = y;
  }
  return out;
}

// Draw order is fixed: apply-gate first, then the replace-vs-swap gate (ICA
// only), then the channel or permutation index. IR images pass through.
inline Image apply_policy(const Image& img, const AugPolicy& pol, std::mt19937& rng) {
  pol.validate();
  if (img.modality != Modality::RGB || pol.variant == AugVariant::None) return img;
  std::uniform_real_distribution<float> unit(0.f, 1.f);
  if (unit(rng) >= pol.p_apply) return img;
  std::uniform_int_distribution<int> channel(0, 2);
  std::uniform_int_distribution<int> nonid_perm(1, 5);
  switch (pol.variant) {
    case AugVariant::ChannelReplace:
      return channel_replace(img, channel(rng));
    case AugVariant::ChannelSwap:
      return channel_swap(img, kChannelPerms[static_cast<std::size_t>(nonid_perm(rng))]);
    case AugVariant::Gray:
      return grayscale(img);
    case AugVariant::ICA: {
      const bool use_replace = unit(rng) < pol.p_cr_given_apply;
      Image aug = use_replace
                      ? channel_replace(img, channel(rng))
                      : channel_swap(img, kChannelPerms[static_cast<std::size_t>(nonid_perm(rng))]);
      return ica_mix(img, aug);
    }
    case AugVariant::None:
      break;
  }
  return img;
}

// Crop of the zero-padded image at offset (dy, dx), dy/dx in [0, 2*pad].
inline Image shift_crop(const Image& img, int pad, int dy, int dx) {
  const int h = img.height(), w = img.width();
  Image out = img;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const int sy = y + dy - pad;
        const int sx = x + dx - pad;
        out.pixels.at3(c, y, x) = (sy >= 0 && sy < h && sx >= 0 && sx < w)
                                      ? img.pixels.at3(c, sy, sx)
                                      : 0.f;
      }
  return out;
}

// Zero-pad by `pad` on every side, then crop back to H x W at a uniform
// offset. Offset draw order: vertical, then horizontal.
inline Image random_crop(const Image& img, int pad, std::mt19937& rng) {
  if (pad < 0) throw std::invalid_argument("random_crop: pad must be >= 0");
  if (pad == 0) return img;
  std::uniform_int_distribution<int> off(0, 2 * pad);
  const int dy = off(rng);
  const int dx = off(rng);
  return shift_crop(img, pad, dy, dx);
}

}  // namespace cclab
