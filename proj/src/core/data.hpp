#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace convprobe {

// ---- Images -----------------------------------------------------------------

// 8-bit RGB, interleaved row-major (H, W, 3).
struct Image {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> rgb;
};

Image read_ppm(const std::string& path);
Image decode_ppm(std::span<const std::uint8_t> bytes, const std::string& what = "image");
void write_ppm(const Image& image, const std::string& path);

// [3,H,W] float pixel tensor with values in 0..255.
Tensor image_to_tensor(const Image& image);

// Decodes a P6 PPM, or a raw tensor sidecar (.tensor / .nsrt) holding [3,H,W].
Tensor load_image(const std::string& path);

// ---- Preprocessing ----------------------------------------------------------

enum class ChannelOrder { kRgb, kBgr };

struct PreprocessConfig {
  int resize_to = 256;
  int crop = 227;
  std::array<float, 3> mean{0.0f, 0.0f, 0.0f};  // in output channel order
  ChannelOrder order = ChannelOrder::kRgb;
  float scale = 1.0f;  // applied after mean subtraction

  void validate() const;
};

enum class Mode { kTrain, kTest };

enum class CropPosition { kCenter, kTopLeft, kTopRight, kBottomLeft, kBottomRight, kRandom };

struct ImageView {
  Tensor pixels;  // [3, crop, crop], mean-subtracted
  CropPosition position = CropPosition::kCenter;
  bool flipped = false;
  int row = 0;  // crop origin inside the resized square
  int col = 0;
};

// Bilinear resize of the shorter side to `side`, then a centered side x side crop.
Tensor resize_square(const Tensor& image, int side);

ImageView crop_view(const Tensor& square, const PreprocessConfig& config, int row, int col, bool flip,
                    CropPosition position);

// Test mode: deterministic center crop. Train mode: random crop origin and
// horizontal flip drawn from rng.
ImageView preprocess(const Tensor& image, const PreprocessConfig& config, Mode mode, std::mt19937_64* rng = nullptr);

// Corners TL, TR, BL, BR, then center; followed by the five mirrors in the same order.
std::array<ImageView, 10> ten_crop(const Tensor& image, const PreprocessConfig& config);

// Per-channel mean over all pixels of the given (already resized) images, in
// the config's channel order.
std::array<float, 3> channel_mean(const std::vector<Tensor>& images, ChannelOrder order = ChannelOrder::kRgb);

void write_mean_file(const std::array<float, 3>& mean, const std::string& path);
std::array<float, 3> read_mean_file(const std::string& path);

// Stacks views into an [N,3,crop,crop] batch.
Tensor stack_views(const std::vector<const Tensor*>& views);

// ---- Datasets ---------------------------------------------------------------

struct ManifestRecord {
  std::string path;  // resolved against the manifest's directory
  int label = 0;     // 0 negative, 1 positive
  int fold = -1;     // -1 when the manifest has no fold column
};

struct DatasetManifest {
  std::vector<ManifestRecord> records;
  bool has_folds = false;
  int num_folds = 0;
  int positives = 0;
  int negatives = 0;

  std::vector<int> labels() const;
  std::vector<int> folds() const;
};

DatasetManifest load_manifest(const std::string& path);
void write_manifest(const DatasetManifest& manifest, const std::string& path, bool write_folds);

int parse_label(const std::string& token);

// Decoded, resized images with labels, in manifest order.
struct LabeledImages {
  std::vector<Tensor> images;  // [3, resize_to, resize_to]
  std::vector<int> labels;

  std::size_t size() const { return images.size(); }
  LabeledImages subset(const std::vector<int>& indices) const;
};

LabeledImages load_images(const DatasetManifest& manifest, int resize_to);

// Class-stratified assignment of every index to one of k folds.
std::vector<int> stratified_kfold(const std::vector<int>& labels, int k, std::uint64_t seed);

// Indices with fold == f (test) or != f (train).
std::vector<int> fold_indices(const std::vector<int>& folds, int f, bool test);

}  // namespace convprobe
