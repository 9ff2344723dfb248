// Copyright 2026 The prefnet Authors
// SPDX-License-Identifier: Apache-2.0

#include "prefnet/model/model.hpp"

#include <fstream>

#include "prefnet/audio/features.hpp"
#include "prefnet/core/error.hpp"

namespace prefnet::model {

using nlohmann::json;

namespace {

constexpr Conv2dParams kSame{1, 1, kKernel / 2, kKernel / 2};

constexpr std::array<std::pair<Variant, std::string_view>, 4> kVariantNames{{
    {Variant::AO, "ao"},
    {Variant::ASL, "asl"},
    {Variant::ASE, "ase"},
    {Variant::ASP, "asp"},
}};

}  // namespace

Variant parse_variant(std::string_view name) {
  for (const auto& [v, text] : kVariantNames) {
    if (text == name) return v;
  }
  throw ValidationError("unknown model '" + std::string(name) + "' (valid: ao, asl, ase, asp)");
}

std::string_view variant_name(Variant v) {
  for (const auto& [variant, text] : kVariantNames) {
    if (variant == v) return text;
  }
  return "?";
}

std::size_t ModelConfig::head_input_dim() const {
  switch (variant) {
    case Variant::AO:
    case Variant::ASE: return encoder.embedding_dim();
    case Variant::ASL: return encoder.embedding_dim() + subject_dim;
    case Variant::ASP: return encoder.embedding_dim() + parallel_dim;
  }
  return 0;
}

void ModelConfig::validate() const {
  for (auto w : encoder.widths) {
    if (w == 0) throw ValidationError("model: encoder widths must be positive");
  }
  if (subject_dim != data::kSubjectDim) throw ValidationError("model: subject_dim must be 6");
  if (parallel_dim == 0 || mlp_hidden == 0 || subject_hidden == 0) {
    throw ValidationError("model: parallel_dim, mlp_hidden and subject_hidden must be positive");
  }
}

json ModelConfig::to_json() const {
  return {{"variant", variant_name(variant)},
          {"encoder_widths", encoder.widths},
          {"subject_dim", subject_dim},
          {"parallel_dim", parallel_dim},
          {"mlp_hidden", mlp_hidden},
          {"subject_hidden", subject_hidden},
          {"feature_mask", data::feature_mask_name(feature_mask)}};
}

ModelConfig ModelConfig::from_json(const json& j) {
  try {
    ModelConfig c;
    c.variant = parse_variant(j.at("variant").get<std::string>());
    c.encoder.widths = j.at("encoder_widths").get<std::array<std::size_t, 4>>();
    c.subject_dim = j.at("subject_dim").get<std::size_t>();
    c.parallel_dim = j.at("parallel_dim").get<std::size_t>();
    c.mlp_hidden = j.at("mlp_hidden").get<std::size_t>();
    c.subject_hidden = j.at("subject_hidden").get<std::size_t>();
    c.feature_mask = data::parse_feature_mask(j.at("feature_mask").get<std::string>());
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw FormatError(std::string("model config: ") + e.what());
  }
}

template <typename T>
ConvStage<T>::ConvStage(std::size_t in, std::size_t out, std::mt19937_64& rng)
    : weight(kaiming_uniform<T>({out, in, kKernel, kKernel}, in * kKernel * kKernel, rng)), bn(out) {}

template <typename T>
Tensor<T> ConvStage<T>::forward(const Tensor<T>& x, Mode mode) {
  return avg_pool2d(relu(bn.forward(conv2d(x, weight, kSame), mode)));
}

template <typename T>
void ConvStage<T>::collect(const std::string& prefix, ParameterList<T>& out) const {
  out.params.push_back({prefix + ".conv.weight", weight});
  bn.collect(prefix + ".bn", out);
}

template <typename T>
Tensor<T> global_pool(const Tensor<T>& x) {
  // x: [N,C,time,freq]
  const auto over_freq = mean_axis(x, 3);
  return add(max_axis(over_freq, 2), mean_axis(over_freq, 2));
}

template <typename T>
Encoder<T>::Encoder(const EncoderConfig& cfg, std::mt19937_64& rng) {
  std::size_t in = 1;
  for (std::size_t i = 0; i < 4; ++i) {
    stages[i] = ConvStage<T>(in, cfg.widths[i], rng);
    in = cfg.widths[i];
  }
}

template <typename T>
Tensor<T> Encoder<T>::forward(const Tensor<T>& x, Mode mode) {
  if (x.rank() != 4 || x.dim(1) != 1 || x.dim(3) != audio::kMelBins) {
    throw ShapeError("encoder: expected [N,1,frames,64], got " + shape_str(x.shape()));
  }
  if (x.dim(2) < kMinFrames) {
    throw ValidationError("encoder: " + std::to_string(x.dim(2)) + " frames, need at least " +
                          std::to_string(kMinFrames));
  }
  Tensor<T> h = x;
  for (auto& s : stages) h = s.forward(h, mode);
  return global_pool(h);
}

template <typename T>
void Encoder<T>::collect(const std::string& prefix, ParameterList<T>& out) const {
  for (std::size_t i = 0; i < 4; ++i) stages[i].collect(prefix + ".stage" + std::to_string(i + 1), out);
}

template <typename T>
PreferenceNet<T>::PreferenceNet(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(seed);
  encoder = Encoder<T>(cfg_.encoder, rng);
  head = MlpBlock<T>(cfg_.head_input_dim(), cfg_.mlp_hidden, 1, rng);
  if (cfg_.variant == Variant::ASE) {
    gate_mlp = MlpBlock<T>(cfg_.subject_dim, cfg_.subject_hidden, audio::kMelBins, rng);
  }
  if (cfg_.variant == Variant::ASP) {
    kernel_mlp = MlpBlock<T>(cfg_.subject_dim, cfg_.subject_hidden, cfg_.parallel_dim * kKernel * kKernel, rng);
    parallel_bn = BatchNorm<T>(cfg_.parallel_dim);
    for (auto& s : parallel_stages) s = ConvStage<T>(cfg_.parallel_dim, cfg_.parallel_dim, rng);
  }
}

template <typename T>
Tensor<T> PreferenceNet<T>::parallel_path(const Tensor<T>& specs, const Tensor<T>& subjects, Mode mode) {
  const std::size_t n = specs.dim(0);
  auto kernels = reshape(kernel_mlp.forward(subjects, mode), {n, cfg_.parallel_dim, 1, kKernel, kKernel});
  auto h = avg_pool2d(relu(parallel_bn.forward(conv2d_per_sample(specs, kernels, kSame), mode)));
  for (auto& s : parallel_stages) h = s.forward(h, mode);
  return global_pool(h);
}

template <typename T>
Tensor<T> PreferenceNet<T>::head_input(const Tensor<T>& specs, const Tensor<T>& subjects, Mode mode) {
  if (subjects.rank() != 2 || subjects.dim(0) != specs.dim(0) || subjects.dim(1) != cfg_.subject_dim) {
    throw ShapeError("model: subjects must be [" + std::to_string(specs.dim(0)) + ",6], got " +
                     shape_str(subjects.shape()));
  }
  switch (cfg_.variant) {
    case Variant::AO:
      return encoder.forward(specs, mode);
    case Variant::ASL:
      return concat_cols(encoder.forward(specs, mode), subjects);
    case Variant::ASE: {
      // Gate in (0, 2) per mel bin, so a gate of exactly 1 is reachable.
      const auto gate = scale(sigmoid(gate_mlp.forward(subjects, mode)), T(2));
      return encoder.forward(scale_last_axis(specs, gate), mode);
    }
    case Variant::ASP: {
      auto audio_embedding = encoder.forward(specs, mode);
      return concat_cols(audio_embedding, parallel_path(specs, subjects, mode));
    }
  }
  throw ValidationError("model: unknown variant");
}

template <typename T>
Tensor<T> PreferenceNet<T>::scores(const Tensor<T>& specs, const Tensor<T>& subjects, Mode mode) {
  return head.forward(head_input(specs, subjects, mode), mode);
}

template <typename T>
Tensor<T> PreferenceNet<T>::pair_probabilities(const Tensor<T>& specs, const Tensor<T>& subjects, Mode mode) {
  if (specs.rank() != 4 || specs.dim(0) == 0 || specs.dim(0) % 2 != 0) {
    throw ShapeError("siamese: expected an even, non-empty interleaved batch, got " + shape_str(specs.shape()));
  }
  const std::size_t pairs = specs.dim(0) / 2;
  return softmax(reshape(scores(specs, subjects, mode), {pairs, 2}));
}

template <typename T>
ParameterList<T> PreferenceNet<T>::parameters() const {
  ParameterList<T> out;
  encoder.collect("encoder", out);
  if (cfg_.variant == Variant::ASE) gate_mlp.collect("gate_mlp", out);
  if (cfg_.variant == Variant::ASP) {
    kernel_mlp.collect("kernel_mlp", out);
    parallel_bn.collect("parallel.bn1", out);
    for (std::size_t i = 0; i < parallel_stages.size(); ++i) {
      parallel_stages[i].collect("parallel.stage" + std::to_string(i + 2), out);
    }
  }
  head.collect("head", out);
  return out;
}

template <typename T>
void save_model(const std::filesystem::path& path, const PreferenceNet<T>& net) {
  auto sidecar = path;
  sidecar += ".json";
  atomic_write_file(sidecar, net.config().to_json().dump(2) + "\n");
  write_checkpoint(path, snapshot(net.parameters()));
}

ModelConfig read_model_config(const std::filesystem::path& checkpoint) {
  auto sidecar = checkpoint;
  sidecar += ".json";
  if (!std::filesystem::exists(sidecar)) throw FormatError("model config sidecar missing: " + sidecar.string());
  try {
    return ModelConfig::from_json(json::parse(read_file(sidecar)));
  } catch (const json::parse_error& e) {
    throw FormatError(sidecar.string() + ": " + e.what());
  }
}

template <typename T>
PreferenceNet<T> load_model(const std::filesystem::path& checkpoint) {
  PreferenceNet<T> net(read_model_config(checkpoint), 0);
  restore(net.parameters(), read_checkpoint(checkpoint));
  return net;
}

template struct ConvStage<float>;
template struct ConvStage<double>;
template struct Encoder<float>;
template struct Encoder<double>;
template class PreferenceNet<float>;
template class PreferenceNet<double>;
template Tensor<float> global_pool(const Tensor<float>&);
template Tensor<double> global_pool(const Tensor<double>&);
template void save_model(const std::filesystem::path&, const PreferenceNet<float>&);
template void save_model(const std::filesystem::path&, const PreferenceNet<double>&);
template PreferenceNet<float> load_model(const std::filesystem::path&);
template PreferenceNet<double> load_model(const std::filesystem::path&);

}  // namespace prefnet::model
