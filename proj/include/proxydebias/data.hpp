#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "proxydebias/model.hpp"

namespace proxydebias {

// Gaussian block-feature generator. Features are laid out as
// [target block | bias block 0 | bias block 1 | ... | noise block].
// Labels are binary; rho[k] = Pr(b_k == t).
struct GeneratorConfig {
  Index n_samples = 4000;
  Index dim_target = 6;
  std::vector<Index> dim_bias{6};
  Index dim_noise = 8;
  double sep_target = 1.6;
  std::vector<double> sep_bias{3.2};
  double noise_sigma = 1.0;
  std::vector<double> rho{0.9};
  std::uint64_t seed = 0;

  std::size_t num_attributes() const { return dim_bias.size(); }
  Index feature_dim() const;
  void validate() const;
};

struct Dataset {
  Matrix features;
  std::vector<int> targets;
  LabelMatrix bias_labels;
  // Empty for data loaded from disk.
  std::optional<GeneratorConfig> provenance;

  Index size() const { return features.rows(); }
  Index feature_dim() const { return features.cols(); }
  std::size_t num_attributes() const { return static_cast<std::size_t>(bias_labels.cols()); }
  Dataset subset(std::span<const Index> rows) const;
  // Keeps only the listed bias attributes, in the given order.
  Dataset with_attributes(std::span<const Index> attributes) const;
  std::vector<int> attribute_column(std::size_t k) const;
  void validate() const;
};

bool operator==(const Dataset& a, const Dataset& b);

Dataset generate(const GeneratorConfig& config);

// Exactly n_samples / (2 * 2^K) samples in every (t, b_1, ..., b_K) cell.
Dataset balanced_test(const GeneratorConfig& config);

// Fraction of samples with b_k == t.
double empirical_correlation(const Dataset& ds, std::size_t k);

// Header "t,b0[,b1,...],f0,...,f{d-1}"; features printed shortest round-trip.
void save_csv(const Dataset& ds, const std::filesystem::path& path);
Dataset load_csv(const std::filesystem::path& path);

}  // namespace proxydebias
