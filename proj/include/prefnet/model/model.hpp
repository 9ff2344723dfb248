// Copyright 2026 The prefnet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "json.hpp"
#include "prefnet/core/checkpoint.hpp"
#include "prefnet/core/nn.hpp"
#include "prefnet/data/subject.hpp"

namespace prefnet::model {

inline constexpr std::size_t kKernel = 5;
inline constexpr std::size_t kMinFrames = 16;  // survives four 2x2 pools

/// AO: audio only. ASL: subject vector appended to the embedding. ASE:
/// subject-driven per-mel-bin gain on the input. ASP: subject-generated
/// first-layer kernels feeding a parallel convolutional path.
enum class Variant { AO, ASL, ASE, ASP };

Variant parse_variant(std::string_view name);
std::string_view variant_name(Variant v);

struct EncoderConfig {
  std::array<std::size_t, 4> widths{64, 128, 256, 512};
  /// Narrow widths for tests and laptop-scale runs.
  static EncoderConfig desk() { return {{16, 32, 64, 128}}; }
  std::size_t embedding_dim() const { return widths[3]; }
  bool operator==(const EncoderConfig&) const = default;
};

struct ModelConfig {
  Variant variant = Variant::AO;
  EncoderConfig encoder;
  std::size_t subject_dim = data::kSubjectDim;
  std::size_t parallel_dim = 8;     // ASP parallel-path width and output size
  std::size_t mlp_hidden = 512;     // head hidden width
  std::size_t subject_hidden = 64;  // ASE/ASP subject-MLP hidden width
  data::FeatureMask feature_mask = data::FeatureMask::All;

  /// embedding (AO, ASE), embedding + 6 (ASL), embedding + parallel_dim (ASP).
  std::size_t head_input_dim() const;
  void validate() const;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  bool operator==(const ModelConfig&) const = default;
};

/// conv5x5 (pad 2, no bias) -> batchnorm -> relu -> avgpool 2x2
template <typename T>
struct ConvStage {
  ConvStage() = default;
  ConvStage(std::size_t in, std::size_t out, std::mt19937_64& rng);
  Tensor<T> forward(const Tensor<T>& x, Mode mode);
  void collect(const std::string& prefix, ParameterList<T>& out) const;

  Tensor<T> weight;
  BatchNorm<T> bn;
};

/// Four conv stages over [N,1,frames,64], then mean over frequency and
/// max + mean over time -> [N, embedding_dim].
template <typename T>
struct Encoder {
  Encoder() = default;
  Encoder(const EncoderConfig& cfg, std::mt19937_64& rng);
  Tensor<T> forward(const Tensor<T>& x, Mode mode);
  void collect(const std::string& prefix, ParameterList<T>& out) const;

  std::array<ConvStage<T>, 4> stages;
};

/// Global pooling shared by the encoder and the ASP parallel path.
template <typename T>
Tensor<T> global_pool(const Tensor<T>& x);

/// One side of the siamese comparator plus the pair wrapper.
template <typename T>
class PreferenceNet {
 public:
  PreferenceNet(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }

  /// Features entering the head, [M, head_input_dim].
  Tensor<T> head_input(const Tensor<T>& specs, const Tensor<T>& subjects, Mode mode);

  /// One score per input: specs [M,1,frames,64], subjects [M,6] -> [M,1].
  Tensor<T> scores(const Tensor<T>& specs, const Tensor<T>& subjects, Mode mode);

  /// Inputs interleaved as (a0, b0, a1, b1, ...), with each pair's subject
  /// row repeated for both of its clips. Both sides share every weight and
  /// one forward pass. Returns softmax over each pair's scores, [N,2].
  Tensor<T> pair_probabilities(const Tensor<T>& specs, const Tensor<T>& subjects, Mode mode);

  /// Parameters and BN statistics with dotted names, in a stable order.
  ParameterList<T> parameters() const;

  Encoder<T> encoder;
  MlpBlock<T> head;
  MlpBlock<T> gate_mlp;    // ASE only
  MlpBlock<T> kernel_mlp;  // ASP only
  BatchNorm<T> parallel_bn;  // ASP: after the subject-generated convolution
  std::array<ConvStage<T>, 3> parallel_stages;  // ASP

 private:
  Tensor<T> parallel_path(const Tensor<T>& specs, const Tensor<T>& subjects, Mode mode);
  ModelConfig cfg_;
};

/// Writes the checkpoint to `path` and the config to `path` + ".json".
template <typename T>
void save_model(const std::filesystem::path& path, const PreferenceNet<T>& net);

/// Reads the sidecar config.
ModelConfig read_model_config(const std::filesystem::path& checkpoint);

/// Rebuilds a network from a checkpoint and its sidecar.
template <typename T>
PreferenceNet<T> load_model(const std::filesystem::path& checkpoint);

extern template struct ConvStage<float>;
extern template struct ConvStage<double>;
extern template struct Encoder<float>;
extern template struct Encoder<double>;
extern template class PreferenceNet<float>;
extern template class PreferenceNet<double>;

}  // namespace prefnet::model
