// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sdaudio Authors

#include "sdaudio/encoder.hpp"

#include <cmath>

#include "sdaudio/error.hpp"
#include "sdaudio/rng.hpp"

namespace sdaudio {

namespace {

constexpr double kInputEps = 1e-5;

// 3x3, pad 1. Rows of `cols` are (channel, ky, kx); columns are output pixels.
void im2col(const FeatureMap& in, int h, int w, FeatureMap& cols) {
  const auto channels = in.rows();
  cols.setZero(channels * 9, static_cast<Eigen::Index>(h) * w);
  for (Eigen::Index c = 0; c < channels; ++c) {
    const double* src = in.row(c).data();
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        double* dst = cols.row(c * 9 + ky * 3 + kx).data();
        const int dy = ky - 1, dx = kx - 1;
        const int y0 = std::max(0, -dy), y1 = std::min(h, h - dy);
        const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
        for (int y = y0; y < y1; ++y) {
          const double* s = src + (y + dy) * w + dx;
          double* d = dst + y * w;
          for (int x = x0; x < x1; ++x) d[x] = s[x];
        }
      }
    }
  }
}

void col2im_add(const FeatureMap& cols, int h, int w, FeatureMap& out) {
  const auto channels = out.rows();
  for (Eigen::Index c = 0; c < channels; ++c) {
    double* dst = out.row(c).data();
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const double* src = cols.row(c * 9 + ky * 3 + kx).data();
        const int dy = ky - 1, dx = kx - 1;
        const int y0 = std::max(0, -dy), y1 = std::min(h, h - dy);
        const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
        for (int y = y0; y < y1; ++y) {
          double* d = dst + (y + dy) * w + dx;
          const double* s = src + y * w;
          for (int x = x0; x < x1; ++x) d[x] += s[x];
        }
      }
    }
  }
}

FeatureMap avgpool2(const FeatureMap& in, int h, int w) {
  const int ho = h / 2, wo = w / 2;
  FeatureMap out(in.rows(), static_cast<Eigen::Index>(ho) * wo);
  for (Eigen::Index c = 0; c < in.rows(); ++c) {
    const double* s = in.row(c).data();
    double* d = out.row(c).data();
    for (int y = 0; y < ho; ++y)
      for (int x = 0; x < wo; ++x) {
        const double* p = s + 2 * y * w + 2 * x;
        d[y * wo + x] = 0.25 * (p[0] + p[1] + p[w] + p[w + 1]);
      }
  }
  return out;
}

FeatureMap avgpool2_backward(const FeatureMap& dout, int h, int w) {
  const int wo = w / 2;
  FeatureMap din(dout.rows(), static_cast<Eigen::Index>(h) * w);
  for (Eigen::Index c = 0; c < dout.rows(); ++c) {
    const double* s = dout.row(c).data();
    double* d = din.row(c).data();
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) d[y * w + x] = 0.25 * s[(y / 2) * wo + x / 2];
  }
  return din;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

FeatureMap normalized_input(const LogMelSpec& spec) {
  // [frames x mel] -> one channel laid out as mel rows x frame columns.
  const auto& v = spec.values;
  const double mean = v.mean();
  const double var = (v.array() - mean).square().mean();
  const double inv = 1.0 / std::sqrt(var + kInputEps);
  FeatureMap m(1, v.size());
  const auto frames = v.rows();
  for (Eigen::Index mel = 0; mel < v.cols(); ++mel)
    for (Eigen::Index f = 0; f < frames; ++f) m(0, mel * frames + f) = (v(f, mel) - mean) * inv;
  return m;
}

Linear make_linear(int in, int out, bool bias, Rng& rng) {
  Linear l;
  std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(in)));
  l.weight.resize(out, in);
  for (Eigen::Index c = 0; c < l.weight.cols(); ++c)
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) l.weight(r, c) = dist(rng);
  if (bias) l.bias = Vector::Zero(out);
  return l;
}

}  // namespace

const char* to_string(ScaleProfile p) noexcept {
  return p == ScaleProfile::Paper ? "paper" : "desk";
}

ScaleProfile parse_profile(std::string_view name) {
  if (name == "paper") return ScaleProfile::Paper;
  if (name == "desk") return ScaleProfile::Desk;
  fail(ErrorKind::Config, "unknown profile '" + std::string(name) + "' (expected paper|desk)");
}

EncoderConfig EncoderConfig::paper(int prototype_count, int class_count) {
  EncoderConfig c;
  c.block_channels = {256, 512, 1024, 2048};
  c.proj_hidden = 2048;
  c.proj_out = 512;
  c.prototype_count = prototype_count;
  c.class_count = class_count;
  c.profile = ScaleProfile::Paper;
  return c;
}

EncoderConfig EncoderConfig::desk(int prototype_count, int class_count) {
  EncoderConfig c = paper(prototype_count, class_count);
  for (auto& ch : c.block_channels) ch /= 8;
  c.proj_hidden /= 8;
  c.proj_out /= 8;
  c.profile = ScaleProfile::Desk;
  return c;
}

void EncoderConfig::validate() const {
  for (int ch : block_channels)
    require(ch > 0, ErrorKind::Config, "block channel counts must be positive");
  require(proj_hidden > 0 && proj_out > 0, ErrorKind::Config, "projector widths must be positive");
  require(prototype_count > 0, ErrorKind::Config, "prototype count K must be positive");
  require(class_count >= 2, ErrorKind::Config, "class count t must be at least 2");
  require(input_mel > 0 && input_frames > 0 && input_mel % 16 == 0 && input_frames % 16 == 0,
          ErrorKind::Config, "input geometry must be a positive multiple of 16 in both axes");
}

bool operator==(const EncoderConfig& a, const EncoderConfig& b) {
  return a.block_channels == b.block_channels && a.proj_hidden == b.proj_hidden &&
         a.proj_out == b.proj_out && a.prototype_count == b.prototype_count &&
         a.class_count == b.class_count && a.input_mel == b.input_mel &&
         a.input_frames == b.input_frames && a.profile == b.profile;
}

EncoderParams EncoderParams::zeros_like() const {
  EncoderParams z = *this;
  z.for_each([](const std::string&, auto& t) { t.setZero(); });
  return z;
}

EncoderParams init_encoder(const EncoderConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng = make_rng(seed, "init-encoder");
  EncoderParams p;
  p.config = cfg;
  int in = 1;
  for (int i = 0; i < kBlockCount; ++i) {
    const int out = cfg.block_channels[i];
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / (in * 9.0)));
    p.blocks[i].weight.resize(out, in * 9);
    for (Eigen::Index c = 0; c < p.blocks[i].weight.cols(); ++c)
      for (Eigen::Index r = 0; r < out; ++r) p.blocks[i].weight(r, c) = dist(rng);
    p.blocks[i].bias = Vector::Zero(out);
    in = out;
  }
  const int d4 = cfg.final_dim();
  p.proj_hidden = make_linear(d4, cfg.proj_hidden, true, rng);
  p.proj_out = make_linear(cfg.proj_hidden, cfg.proj_out, true, rng);
  p.prototypes = make_linear(cfg.proj_out, cfg.prototype_count, false, rng);
  p.prototypes.weight.rowwise().normalize();
  p.classifier = make_linear(d4, cfg.class_count, true, rng);
  for (int i = 0; i < kStudentBlocks; ++i) {
    p.aux[i].adapter = make_linear(cfg.feature_dim(i), d4, true, rng);
    p.aux[i].classifier = make_linear(d4, cfg.class_count, true, rng);
  }
  return p;
}

BlockFeatures forward(const EncoderParams& params, std::span<const LogMelSpec> batch, int depth,
                      EncoderTape* tape) {
  const auto& cfg = params.config;
  require(depth >= 1 && depth <= kBlockCount, ErrorKind::Contract, "forward depth must be in [1, 4]");
  require(!batch.empty(), ErrorKind::Contract, "forward called on an empty batch");
  const auto n = static_cast<Eigen::Index>(batch.size());

  BlockFeatures feats;
  feats.depth = depth;
  for (int i = 0; i < depth; ++i) feats.pooled[i].resize(n, cfg.feature_dim(i));
  if (tape) {
    tape->items.assign(batch.size(), {});
    tape->depth = depth;
  }

  FeatureMap cols;
  for (Eigen::Index b = 0; b < n; ++b) {
    const auto& spec = batch[b];
    require(spec.frames() == cfg.input_frames && spec.mel_bins() == cfg.input_mel,
            ErrorKind::Contract,
            "input shape " + std::to_string(spec.frames()) + "x" + std::to_string(spec.mel_bins()) +
                " does not match encoder geometry " + std::to_string(cfg.input_frames) + "x" +
                std::to_string(cfg.input_mel));
    FeatureMap x = normalized_input(spec);
    int h = cfg.input_mel, w = cfg.input_frames;
    for (int i = 0; i < depth; ++i) {
      const auto& conv = params.blocks[i];
      require(conv.weight.cols() == x.rows() * 9, ErrorKind::Contract,
              "block " + std::to_string(i + 1) + " weight does not match its input channels");
      im2col(x, h, w, cols);
      FeatureMap pre = conv.weight * cols;
      // Per-item standardization over the whole map, then the channel bias.
      const double mu = pre.mean();
      const double inv_sd = 1.0 / std::sqrt((pre.array() - mu).square().mean() + kInputEps);
      pre = (pre.array() - mu) * inv_sd;
      pre.colwise() += conv.bias;
      FeatureMap act = pre.unaryExpr([](double v) { return v * sigmoid(v); });
      FeatureMap pooled = avgpool2(act, h, w);
      feats.pooled[i].row(b) = pooled.rowwise().mean().transpose();
      if (tape) {
        tape->items[b].input[i] = std::move(x);
        tape->items[b].preact[i] = std::move(pre);
        tape->items[b].inv_scale[i] = inv_sd;
      }
      x = std::move(pooled);
      h /= 2;
      w /= 2;
    }
  }
  return feats;
}

void backward(const EncoderParams& params, const EncoderTape& tape,
              const std::array<Matrix, kBlockCount>& feature_grads, EncoderParams& grads) {
  const auto& cfg = params.config;
  const int depth = tape.depth;
  // Deepest block that receives any gradient; nothing above it needs work.
  int top = -1;
  for (int i = 0; i < depth; ++i)
    if (feature_grads[i].size() != 0) top = i;
  if (top < 0) return;

  std::array<int, kBlockCount> hs{}, ws{};
  hs[0] = cfg.input_mel;
  ws[0] = cfg.input_frames;
  for (int i = 1; i < kBlockCount; ++i) {
    hs[i] = hs[i - 1] / 2;
    ws[i] = ws[i - 1] / 2;
  }

  FeatureMap cols, dcols;
  for (std::size_t b = 0; b < tape.items.size(); ++b) {
    const auto& item = tape.items[b];
    FeatureMap d_out;  // gradient w.r.t. the pooled output map of block i
    for (int i = top; i >= 0; --i) {
      const int h = hs[i], w = ws[i];
      const Eigen::Index pooled_size = static_cast<Eigen::Index>(h / 2) * (w / 2);
      const Eigen::Index channels = cfg.block_channels[i];
      if (d_out.size() == 0) d_out = FeatureMap::Zero(channels, pooled_size);
      if (feature_grads[i].size() != 0) {
        require(feature_grads[i].rows() == static_cast<Eigen::Index>(tape.items.size()) &&
                    feature_grads[i].cols() == channels,
                ErrorKind::Contract, "feature gradient shape mismatch at block " + std::to_string(i + 1));
        d_out.colwise() += feature_grads[i].row(b).transpose() / static_cast<double>(pooled_size);
      }
      FeatureMap d_act = avgpool2_backward(d_out, h, w);
      const FeatureMap& pre = item.preact[i];
      FeatureMap d_pre = d_act.cwiseProduct(pre.unaryExpr([](double v) {
        const double s = sigmoid(v);
        return s * (1.0 + v * (1.0 - s));
      }));
      grads.blocks[i].bias += d_pre.rowwise().sum();
      // Back through the standardization; `pre - bias` is the normalized map.
      {
        FeatureMap z = pre;
        z.colwise() -= params.blocks[i].bias;
        const double m = d_pre.mean();
        const double mz = d_pre.cwiseProduct(z).mean();
        d_pre = ((d_pre.array() - m) - z.array() * mz) * item.inv_scale[i];
      }
      im2col(item.input[i], h, w, cols);
      grads.blocks[i].weight.noalias() += d_pre * cols.transpose();
      if (i > 0) {
        dcols.noalias() = params.blocks[i].weight.transpose() * d_pre;
        d_out = FeatureMap::Zero(item.input[i].rows(), item.input[i].cols());
        col2im_add(dcols, h, w, d_out);
      }
    }
  }
}

Matrix linear_forward(const Linear& layer, const Matrix& x) {
  require(x.cols() == layer.in_dim(), ErrorKind::Contract,
          "linear input width " + std::to_string(x.cols()) + " != " + std::to_string(layer.in_dim()));
  Matrix y = x * layer.weight.transpose();
  if (layer.has_bias()) y.rowwise() += layer.bias.transpose();
  return y;
}

void linear_backward(const Linear& layer, const Matrix& x, const Matrix& dy, Linear& grad,
                     Matrix* dx) {
  grad.weight.noalias() += dy.transpose() * x;
  if (layer.has_bias()) grad.bias += dy.colwise().sum().transpose();
  if (dx) *dx = dy * layer.weight;
}

Matrix silu(const Matrix& x) {
  return x.unaryExpr([](double v) { return v * sigmoid(v); });
}

Matrix silu_grad(const Matrix& x) {
  return x.unaryExpr([](double v) {
    const double s = sigmoid(v);
    return s * (1.0 + v * (1.0 - s));
  });
}

HeadOutput apply_head(const EncoderParams& params, Head head, const Matrix& input) {
  HeadOutput out;
  switch (head) {
    case Head::Projector:
      out.output = linear_forward(params.proj_out, silu(linear_forward(params.proj_hidden, input)));
      break;
    case Head::Prototype:
      out.output = linear_forward(params.prototypes, input);
      break;
    case Head::Classifier:
      out.output = linear_forward(params.classifier, input);
      break;
    case Head::Aux1:
    case Head::Aux2:
    case Head::Aux3: {
      const auto& aux = params.aux[static_cast<int>(head) - static_cast<int>(Head::Aux1)];
      out.adapter = linear_forward(aux.adapter, input);
      out.output = linear_forward(aux.classifier, silu(out.adapter));
      break;
    }
  }
  return out;
}

std::int64_t count_parameters(const EncoderParams& params, ParamSubset subset) {
  const int blocks = subset == ParamSubset::Student ? kStudentBlocks : kBlockCount;
  std::int64_t n = 0;
  for (int i = 0; i < blocks; ++i) n += params.blocks[i].weight.size() + params.blocks[i].bias.size();
  return n;
}

std::int64_t count_all_parameters(const EncoderParams& params) {
  std::int64_t n = 0;
  params.for_each([&n](const std::string&, const auto& t) { n += t.size(); });
  return n;
}

bool FreezeSet::contains(std::string_view name) const {
  for (const auto& p : prefixes)
    if (name.substr(0, p.size()) == p) return true;
  return false;
}

void sgd_step(EncoderParams& params, const EncoderParams& grads, double lr, const FreezeSet& frozen) {
  std::vector<const double*> g;
  std::vector<Eigen::Index> sizes;
  grads.for_each([&](const std::string&, const auto& t) {
    g.push_back(t.data());
    sizes.push_back(t.size());
  });
  std::size_t k = 0;
  params.for_each([&](const std::string& name, auto& t) {
    const std::size_t idx = k++;
    if (frozen.contains(name)) return;
    require(t.size() == sizes[idx], ErrorKind::Contract, "gradient shape mismatch for " + name);
    double* p = t.data();
    for (Eigen::Index j = 0; j < t.size(); ++j) p[j] -= lr * g[idx][j];
  });
}

}  // namespace sdaudio
