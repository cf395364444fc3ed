#pragma once

// Synthetic multi-domain image generation for desk-scale experiments, plus
// the simple record-file format for dumping a generated set to disk.

#include <filesystem>
#include <string>
#include <vector>

#include "tucknet/tensor.hpp"

namespace tucknet {

struct Dataset {
  Index resolution = 0;
  Index channels = 3;
  int num_classes = 0;
  std::vector<TensorXd> images;  // each (C, H, W), values in [0, 1]
  std::vector<int> labels;

  std::size_t size() const { return images.size(); }

  /// Stacks the given items into an (n, C, H, W) batch tensor.
  TensorXd batch(std::span<const std::size_t> indices) const;
  std::vector<int> batch_labels(std::span<const std::size_t> indices) const;
};

enum class GeneratorId { Shapes, Textures, Glyphs };

GeneratorId parse_generator(const std::string& name);
std::string generator_name(GeneratorId id);

/// Deterministic target-domain transform applied after rendering.
struct DomainShift {
  bool invert_colors = false;
  int rotate_quarters = 0;     // quarter-turns, 0..3
  double noise_stddev = 0.0;   // additive Gaussian pixel noise, clamped to [0,1]
  int relabel_shift = 0;       // label permutation y -> (y + shift) mod classes
};

struct SyntheticDomainSpec {
  GeneratorId generator = GeneratorId::Shapes;
  int num_classes = 3;
  int samples_per_class = 100;
  Index resolution = 72;
  DomainShift shift;
  std::uint64_t seed = 0;
};

/// Class-balanced deterministic generation: item i belongs to class
/// i % num_classes and depends only on (seed, i).
Dataset generate_dataset(const SyntheticDomainSpec& spec);

/// Per-class prefix subsample that preserves the original item order, so a
/// fraction of 1.0 returns the dataset unchanged. Errors if any class would
/// receive no samples.
Dataset stratified_subsample(const Dataset& data, double fraction);

/// Training-time augmentation: per-image random horizontal flip and random
/// crop from a 2px zero-padded canvas.
TensorXd augment_batch(const TensorXd& batch, CounterRng& rng);

/// Record file: magic, version, class/shape metadata, then per item a label
/// and the raw float64 pixel payload. Little-endian throughout.
void dump_dataset(const Dataset& data, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace tucknet
