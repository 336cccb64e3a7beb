// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sdaudio Authors

#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sdaudio/audio.hpp"
#include "sdaudio/types.hpp"

namespace sdaudio {

inline constexpr int kBlockCount = 4;
inline constexpr int kStudentBlocks = 3;

enum class ScaleProfile { Paper, Desk };

const char* to_string(ScaleProfile p) noexcept;
ScaleProfile parse_profile(std::string_view name);

/// Geometry of the four-block convolutional encoder and all of its heads.
///
/// Every block is conv3x3 (stride 1, pad 1) -> per-item standardization ->
/// channel bias -> SiLU -> 2x2 average pool; the
/// pooled feature of a block is the global average of its output map, so
/// block_channels[i] is also the feature width d_{i+1}.
struct EncoderConfig {
  std::array<int, kBlockCount> block_channels{};
  int proj_hidden = 0;      // h_proj hidden width
  int proj_out = 0;         // h_proj output width, also h_prot input width
  int prototype_count = 0;  // K
  int class_count = 0;      // t
  int input_mel = 64;
  int input_frames = 96;
  ScaleProfile profile = ScaleProfile::Desk;

  /// Paper-scale widths (256, 512, 1024, 2048), projector 2048 -> 2048 -> 512.
  static EncoderConfig paper(int prototype_count = 512, int class_count = 4);
  /// Every paper width divided by 8.
  static EncoderConfig desk(int prototype_count = 8, int class_count = 4);

  int feature_dim(int block) const { return block_channels.at(block); }
  int final_dim() const { return block_channels.back(); }

  void validate() const;
};

bool operator==(const EncoderConfig& a, const EncoderConfig& b);

struct Linear {
  Matrix weight;  // [out x in]
  Vector bias;    // empty when the layer has no bias

  int in_dim() const { return static_cast<int>(weight.cols()); }
  int out_dim() const { return static_cast<int>(weight.rows()); }
  bool has_bias() const { return bias.size() != 0; }
};

struct Conv3x3 {
  Matrix weight;  // [out x in*9], column index = in_channel*9 + ky*3 + kx
  Vector bias;
};

/// Auxiliary head attached to a student block: adapter (d_i -> d_4), SiLU,
/// classifier (d_4 -> t).
struct AuxHead {
  Linear adapter;
  Linear classifier;
};

struct EncoderParams {
  EncoderConfig config;
  std::array<Conv3x3, kBlockCount> blocks;
  Linear proj_hidden;  // h_proj, first layer
  Linear proj_out;     // h_proj, second layer
  Linear prototypes;   // h_prot: [K x proj_out], no bias, unit-norm rows
  Linear classifier;   // h_cl: [t x d_4]
  std::array<AuxHead, kStudentBlocks> aux;

  /// Visits every tensor as (name, Matrix& or Vector&) in a fixed order.
  template <class F>
  void for_each(F&& f) {
    visit(*this, f);
  }
  template <class F>
  void for_each(F&& f) const {
    visit(*this, f);
  }

  /// Same shapes, all zeros. Used as a gradient accumulator.
  EncoderParams zeros_like() const;

 private:
  template <class Self, class F>
  static void visit(Self& self, F& f) {
    static const char* kBlock[] = {"block1", "block2", "block3", "block4"};
    static const char* kAux[] = {"aux1", "aux2", "aux3"};
    for (int i = 0; i < kBlockCount; ++i) {
      f(std::string(kBlock[i]) + ".weight", self.blocks[i].weight);
      f(std::string(kBlock[i]) + ".bias", self.blocks[i].bias);
    }
    f(std::string("proj.hidden.weight"), self.proj_hidden.weight);
    f(std::string("proj.hidden.bias"), self.proj_hidden.bias);
    f(std::string("proj.out.weight"), self.proj_out.weight);
    f(std::string("proj.out.bias"), self.proj_out.bias);
    f(std::string("prototypes.weight"), self.prototypes.weight);
    f(std::string("classifier.weight"), self.classifier.weight);
    f(std::string("classifier.bias"), self.classifier.bias);
    for (int i = 0; i < kStudentBlocks; ++i) {
      f(std::string(kAux[i]) + ".adapter.weight", self.aux[i].adapter.weight);
      f(std::string(kAux[i]) + ".adapter.bias", self.aux[i].adapter.bias);
      f(std::string(kAux[i]) + ".classifier.weight", self.aux[i].classifier.weight);
      f(std::string(kAux[i]) + ".classifier.bias", self.aux[i].classifier.bias);
    }
  }
};

/// He-normal convolutions, LeCun-normal linear layers, zero biases and
/// unit-norm prototype rows. Deterministic in (cfg, seed).
EncoderParams init_encoder(const EncoderConfig& cfg, std::uint64_t seed);

/// Pooled features of every block that was run. pooled[i] is [batch x d_{i+1}].
struct BlockFeatures {
  std::array<Matrix, kBlockCount> pooled;
  int depth = kBlockCount;

  const Matrix& final() const { return pooled[kBlockCount - 1]; }
  Eigen::Index batch_size() const { return pooled[0].rows(); }
};

using FeatureMap = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Activations kept by a training forward pass so gradients can be computed.
struct EncoderTape {
  struct Item {
    std::array<FeatureMap, kBlockCount> input;   // block input [C_in x H*W]
    std::array<FeatureMap, kBlockCount> preact;  // standardized conv output + bias
    std::array<double, kBlockCount> inv_scale{};   // 1 / per-item std of the conv output
  };
  std::vector<Item> items;
  int depth = 0;
};

/// Runs the first `depth` blocks on every item. Items are processed
/// independently; there is no cross-item normalization. Each input, and each
/// block's conv output, is standardized per item.
BlockFeatures forward(const EncoderParams& params, std::span<const LogMelSpec> batch,
                      int depth = kBlockCount, EncoderTape* tape = nullptr);

/// Accumulates into `grads` the block gradients implied by dL/d(pooled[i]).
/// Empty entries of `feature_grads` mean "no gradient at this block".
void backward(const EncoderParams& params, const EncoderTape& tape,
              const std::array<Matrix, kBlockCount>& feature_grads, EncoderParams& grads);

enum class Head { Projector, Prototype, Classifier, Aux1, Aux2, Aux3 };

struct HeadOutput {
  Matrix output;   // g for Projector, logits otherwise
  Matrix adapter;  // u^i for Aux heads; empty otherwise
};

/// Applies one head to a [batch x in] input.
HeadOutput apply_head(const EncoderParams& params, Head head, const Matrix& input);

// Layer primitives shared by the training stages.
Matrix linear_forward(const Linear& layer, const Matrix& x);
/// Accumulates dW, db into `grad`; writes dx when requested.
void linear_backward(const Linear& layer, const Matrix& x, const Matrix& dy, Linear& grad,
                     Matrix* dx);
Matrix silu(const Matrix& x);
Matrix silu_grad(const Matrix& x);

enum class ParamSubset { Student, Full };

/// Convolution weights and biases of blocks 1-3 (Student) or 1-4 (Full).
std::int64_t count_parameters(const EncoderParams& params, ParamSubset subset);
/// Every tensor including heads.
std::int64_t count_all_parameters(const EncoderParams& params);

/// Names of tensors an optimizer must not touch, matched by prefix.
struct FreezeSet {
  std::vector<std::string> prefixes;
  bool contains(std::string_view name) const;
};

/// params -= lr * grads for every tensor not in `frozen`.
void sgd_step(EncoderParams& params, const EncoderParams& grads, double lr, const FreezeSet& frozen);

}  // namespace sdaudio
