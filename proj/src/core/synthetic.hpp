#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "data.hpp"

namespace convprobe {

// Two-class task: textured blobs (positive) versus smooth gradients
// (negative), with shared clutter so the classes overlap in color statistics.
Image render_binary(int label, int size, std::mt19937_64& rng, double contrast = 1.0);

// Multi-class pretext task whose classes cover blob, gradient and texture
// families.
constexpr int kPretextClasses = 10;
Image render_pretext(int cls, int size, std::mt19937_64& rng);

struct SyntheticSet {
  std::vector<Tensor> images;  // [3, size, size]
  std::vector<int> labels;
};

// Balanced labels in a seeded order.
SyntheticSet make_binary_set(int count, int size, std::uint64_t seed, double contrast = 1.0);
SyntheticSet make_pretext_set(int count, int size, std::uint64_t seed);

// Writes PPM files plus manifest.csv into dir; returns the manifest path.
std::string write_binary_dataset(const std::string& dir, int count, int size, std::uint64_t seed,
                                 double contrast = 1.0, int positives = -1);

}  // namespace convprobe
