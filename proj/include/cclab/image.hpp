#pragma once
// Labeled person crops: 3xHxW float pixels in [0,1] plus retrieval metadata.

#include <string>

#include "cclab/tensor.hpp"

namespace cclab {

enum class Modality { RGB, IR };

// Network path selector; modalities route through the stream of the same name.
enum class Stream { RGB, IR };

inline Stream stream_for(Modality m) { return m == Modality::RGB ? Stream::RGB : Stream::IR; }

struct Image {
  Tensor<float> pixels;  // 3 x H x W, values in [0,1]
  Modality modality = Modality::RGB;
  int identity = 0;
  int view = 0;      // camera surrogate
  int clothing = 0;  // clothing-set id; 0 when the regime has one outfit

  int height() const { return pixels.dim(1); }
  int width() const { return pixels.dim(2); }
};

// True when the three channels are elementwise identical (the stored form of
// a single-channel capture).
bool channels_identical(const Tensor<float>& pixels);

// 8-bit RGB PNG. Writing quantizes by round(v*255) after clamping to [0,1];
// reading maps back by /255, so write-then-read is exact at 8-bit resolution.
void write_png(const std::string& path, const Tensor<float>& pixels);
Tensor<float> read_png(const std::string& path);

}  // namespace cclab
