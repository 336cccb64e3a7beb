// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sdaudio Authors

#include "sdaudio/config.hpp"

#include <yaml-cpp/yaml.h>

#include <set>
#include <sstream>

#include "sdaudio/error.hpp"
#include "sdaudio/matrix_io.hpp"

namespace sdaudio {

namespace {

class Section {
 public:
  Section(const YAML::Node& node, std::string path) : node_(node), path_(std::move(path)) {
    require(!node_ || node_.IsNull() || node_.IsMap(), ErrorKind::Config,
            "config section '" + path_ + "' must be a mapping");
  }

  template <class T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (!node_ || node_.IsNull()) return;
    const YAML::Node v = node_[key];
    if (!v) return;
    try {
      out = v.as<T>();
    } catch (const YAML::Exception&) {
      fail(ErrorKind::Config, "type mismatch for key '" + qualified(key) + "'");
    }
  }

  Section child(const char* key) {
    seen_.insert(key);
    return Section(node_ && node_.IsMap() ? node_[key] : YAML::Node(), qualified(key));
  }

  void reject_unknown() const {
    if (!node_ || !node_.IsMap()) return;
    for (const auto& kv : node_) {
      const auto key = kv.first.as<std::string>();
      require(seen_.count(key) != 0, ErrorKind::Config, "unknown config key '" + qualified(key.c_str()) + "'");
    }
  }

 private:
  std::string qualified(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  YAML::Node node_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_augment(Section& s, AugmentationPolicy& a) {
  s.read("crop_frames", a.crop_frames);
  s.read("noise_std", a.noise_std);
  s.read("time_shift", a.allow_time_shift);
}

void read_kmeans(Section s, KMeansOptions& k) {
  s.read("max_iters", k.max_iters);
  s.read("tol", k.tol);
  s.read("restarts", k.restarts);
  s.reject_unknown();
}

}  // namespace

ExperimentConfig ExperimentConfig::defaults(ScaleProfile profile) {
  ExperimentConfig c;
  c.profile = profile;
  if (profile == ScaleProfile::Paper) {
    c.encoder = EncoderConfig::paper();
    c.pretrain = PretrainConfig::paper();
    c.distill = DistillConfig::paper();
  } else {
    c.encoder = EncoderConfig::desk();
    c.pretrain = PretrainConfig::desk();
    c.distill = DistillConfig::desk();
  }
  c.encoder.prototype_count = c.pretrain.clusters;
  c.encoder.class_count = c.data.classes;
  return c;
}

void ExperimentConfig::validate() const {
  require(data.source == "synthetic" || data.source == "directory", ErrorKind::Config,
          "data.source must be synthetic or directory");
  if (data.source == "synthetic") {
    require(data.classes >= 2, ErrorKind::Config, "data.classes must be >= 2");
    require(data.per_class >= 8, ErrorKind::Config, "data.per_class must be >= 8");
    require(data.clip_seconds > 0.0, ErrorKind::Config, "data.clip_seconds must be positive");
  } else {
    require(!data.dir.empty(), ErrorKind::Config, "data.dir is required for a directory source");
  }
  require(data.features.mel_bins == encoder.input_mel, ErrorKind::Config,
          "data.mel_bins must equal encoder.input_mel");
  require(pretrain.augment.crop_frames == encoder.input_frames &&
              distill.augment.crop_frames == encoder.input_frames,
          ErrorKind::Config, "crop_frames must equal encoder.input_frames");
  EncoderConfig e = encoder;
  e.class_count = std::max(e.class_count, 2);
  e.validate();
  pretrain.validate();
  require(pseudolabel_kmeans.restarts >= 1 && pseudolabel_kmeans.max_iters >= 0, ErrorKind::Config,
          "invalid pseudolabel k-means options");
  distill.validate();
  probe.validate();
}

ExperimentConfig parse_config(const std::string& text, const ConfigOverrides& overrides) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    fail(ErrorKind::Config, std::string("config does not parse: ") + e.what());
  }
  Section top(root, "");

  std::string profile_name;
  top.read("profile", profile_name);
  ScaleProfile profile = ScaleProfile::Desk;
  if (!profile_name.empty()) profile = parse_profile(profile_name);
  if (overrides.profile) profile = *overrides.profile;

  ExperimentConfig c = ExperimentConfig::defaults(profile);
  top.read("seed", c.seed);

  {
    Section s = top.child("data");
    s.read("source", c.data.source);
    s.read("classes", c.data.classes);
    s.read("per_class", c.data.per_class);
    s.read("clip_seconds", c.data.clip_seconds);
    s.read("dir", c.data.dir);
    s.read("sample_rate", c.data.features.sample_rate);
    s.read("window", c.data.features.window);
    s.read("hop", c.data.features.hop);
    s.read("n_fft", c.data.features.n_fft);
    s.read("mel_bins", c.data.features.mel_bins);
    s.reject_unknown();
  }
  {
    Section s = top.child("encoder");
    std::vector<int> channels(c.encoder.block_channels.begin(), c.encoder.block_channels.end());
    s.read("block_channels", channels);
    require(channels.size() == kBlockCount, ErrorKind::Config, "encoder.block_channels needs 4 entries");
    std::copy(channels.begin(), channels.end(), c.encoder.block_channels.begin());
    s.read("proj_hidden", c.encoder.proj_hidden);
    s.read("proj_out", c.encoder.proj_out);
    s.read("input_mel", c.encoder.input_mel);
    s.read("input_frames", c.encoder.input_frames);
    s.reject_unknown();
  }
  {
    Section s = top.child("pretrain");
    s.read("clusters", c.pretrain.clusters);
    s.read("lr", c.pretrain.lr);
    s.read("batch", c.pretrain.batch);
    s.read("epochs", c.pretrain.epochs);
    read_augment(s, c.pretrain.augment);
    read_kmeans(s.child("kmeans"), c.pretrain.kmeans);
    s.reject_unknown();
  }
  {
    Section s = top.child("pseudolabel");
    read_kmeans(s.child("kmeans"), c.pseudolabel_kmeans);
    s.reject_unknown();
  }
  {
    Section s = top.child("distill");
    s.read("alpha", c.distill.alpha);
    s.read("beta", c.distill.beta);
    s.read("lr", c.distill.lr);
    s.read("batch", c.distill.batch);
    s.read("epochs", c.distill.epochs);
    read_augment(s, c.distill.augment);
    s.reject_unknown();
  }
  {
    Section s = top.child("probe");
    s.read("lr", c.probe.lr);
    s.read("batch", c.probe.batch);
    s.read("epochs", c.probe.epochs);
    s.read("standardize", c.probe.standardize);
    s.reject_unknown();
  }
  top.reject_unknown();

  if (overrides.seed) c.seed = *overrides.seed;
  if (overrides.data_dir) {
    c.data.source = "directory";
    c.data.dir = *overrides.data_dir;
  }
  c.encoder.prototype_count = c.pretrain.clusters;
  c.encoder.class_count = c.data.classes;
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path, const ConfigOverrides& overrides) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error& e) {
    fail(ErrorKind::Config, std::string("cannot read config: ") + e.what());
  }
  return parse_config(text, overrides);
}

std::string ExperimentConfig::to_yaml() const {
  YAML::Emitter out;
  auto aug = [&](const AugmentationPolicy& a) {
    out << YAML::Key << "crop_frames" << YAML::Value << a.crop_frames;
    out << YAML::Key << "noise_std" << YAML::Value << a.noise_std;
    out << YAML::Key << "time_shift" << YAML::Value << a.allow_time_shift;
  };
  auto km = [&](const KMeansOptions& k) {
    out << YAML::Key << "kmeans" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "max_iters" << YAML::Value << k.max_iters;
    out << YAML::Key << "tol" << YAML::Value << k.tol;
    out << YAML::Key << "restarts" << YAML::Value << k.restarts;
    out << YAML::EndMap;
  };
  out << YAML::BeginMap;
  out << YAML::Key << "profile" << YAML::Value << to_string(profile);
  out << YAML::Key << "seed" << YAML::Value << seed;
  out << YAML::Key << "data" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "source" << YAML::Value << data.source;
  out << YAML::Key << "classes" << YAML::Value << data.classes;
  out << YAML::Key << "per_class" << YAML::Value << data.per_class;
  out << YAML::Key << "clip_seconds" << YAML::Value << data.clip_seconds;
  out << YAML::Key << "dir" << YAML::Value << data.dir;
  out << YAML::Key << "sample_rate" << YAML::Value << data.features.sample_rate;
  out << YAML::Key << "window" << YAML::Value << data.features.window;
  out << YAML::Key << "hop" << YAML::Value << data.features.hop;
  out << YAML::Key << "n_fft" << YAML::Value << data.features.n_fft;
  out << YAML::Key << "mel_bins" << YAML::Value << data.features.mel_bins;
  out << YAML::EndMap;
  out << YAML::Key << "encoder" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "block_channels" << YAML::Value << YAML::Flow
      << std::vector<int>(encoder.block_channels.begin(), encoder.block_channels.end());
  out << YAML::Key << "proj_hidden" << YAML::Value << encoder.proj_hidden;
  out << YAML::Key << "proj_out" << YAML::Value << encoder.proj_out;
  out << YAML::Key << "input_mel" << YAML::Value << encoder.input_mel;
  out << YAML::Key << "input_frames" << YAML::Value << encoder.input_frames;
  out << YAML::EndMap;
  out << YAML::Key << "pretrain" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "clusters" << YAML::Value << pretrain.clusters;
  out << YAML::Key << "lr" << YAML::Value << pretrain.lr;
  out << YAML::Key << "batch" << YAML::Value << pretrain.batch;
  out << YAML::Key << "epochs" << YAML::Value << pretrain.epochs;
  aug(pretrain.augment);
  km(pretrain.kmeans);
  out << YAML::EndMap;
  out << YAML::Key << "pseudolabel" << YAML::Value << YAML::BeginMap;
  km(pseudolabel_kmeans);
  out << YAML::EndMap;
  out << YAML::Key << "distill" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "alpha" << YAML::Value << distill.alpha;
  out << YAML::Key << "beta" << YAML::Value << distill.beta;
  out << YAML::Key << "lr" << YAML::Value << distill.lr;
  out << YAML::Key << "batch" << YAML::Value << distill.batch;
  out << YAML::Key << "epochs" << YAML::Value << distill.epochs;
  aug(distill.augment);
  out << YAML::EndMap;
  out << YAML::Key << "probe" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "lr" << YAML::Value << probe.lr;
  out << YAML::Key << "batch" << YAML::Value << probe.batch;
  out << YAML::Key << "epochs" << YAML::Value << probe.epochs;
  out << YAML::Key << "standardize" << YAML::Value << probe.standardize;
  out << YAML::EndMap;
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

}  // namespace sdaudio
