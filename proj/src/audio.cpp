// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sdaudio Authors

#include "sdaudio/audio.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <numbers>
#include <sstream>

#include "sdaudio/error.hpp"
#include "sdaudio/matrix_io.hpp"

namespace sdaudio {
namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;

std::uint16_t read_u16(std::string_view b, std::size_t off) {
  require(off + 2 <= b.size(), ErrorKind::Format, "truncated WAV header");
  return static_cast<std::uint16_t>(static_cast<unsigned char>(b[off]) |
                                    (static_cast<unsigned char>(b[off + 1]) << 8));
}

// FFTW's planner is not reentrant; execution on a built plan is.
std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

class RealFft {
 public:
  explicit RealFft(int n) : n_(n) {
    in_ = fftw_alloc_real(n);
    out_ = fftw_alloc_complex(n / 2 + 1);
    std::lock_guard lock(fftw_planner_mutex());
    plan_ = fftw_plan_dft_r2c_1d(n, in_, out_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    {
      std::lock_guard lock(fftw_planner_mutex());
      fftw_destroy_plan(plan_);
    }
    fftw_free(in_);
    fftw_free(out_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  double* input() { return in_; }
  // Power spectrum |X_k|^2 for k in [0, n/2].
  void power(Vector& out) {
    fftw_execute(plan_);
    out.resize(n_ / 2 + 1);
    for (int k = 0; k <= n_ / 2; ++k) out[k] = out_[k][0] * out_[k][0] + out_[k][1] * out_[k][1];
  }

 private:
  int n_;
  double* in_ = nullptr;
  fftw_complex* out_ = nullptr;
  fftw_plan plan_ = nullptr;
};

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

}  // namespace

AudioClip load_audio(const fs::path& path, int target_rate) {
  require(target_rate > 0, ErrorKind::Contract, "target sample rate must be positive");
  std::string bytes;
  try {
    bytes = read_file(path);
  } catch (const Error& e) {
    fail(ErrorKind::Io, std::string("unreadable audio file: ") + e.what());
  }
  const std::string_view b(bytes);
  require(b.size() >= 12 && b.substr(0, 4) == "RIFF" && b.substr(8, 4) == "WAVE",
          ErrorKind::Format, path.string() + ": not a RIFF/WAVE file");

  int channels = 0, rate = 0, bits = 0;
  std::string_view data;
  bool have_fmt = false, have_data = false;
  std::size_t off = 12;
  while (off + 8 <= b.size()) {
    const auto id = b.substr(off, 4);
    const std::size_t size = get_u32(b, off + 4);
    const std::size_t body = off + 8;
    require(body + size <= b.size() || id == "data", ErrorKind::Format,
            path.string() + ": chunk overruns file");
    if (id == "fmt ") {
      require(size >= 16, ErrorKind::Format, path.string() + ": short fmt chunk");
      std::uint16_t format = read_u16(b, body);
      channels = read_u16(b, body + 2);
      rate = static_cast<int>(get_u32(b, body + 4));
      bits = read_u16(b, body + 14);
      if (format == 0xFFFE && size >= 26) format = read_u16(b, body + 24);
      require(format == 1, ErrorKind::Format, path.string() + ": only PCM WAV is supported");
      have_fmt = true;
    } else if (id == "data") {
      data = b.substr(body, std::min(size, b.size() - body));
      have_data = true;
    }
    off = body + size + (size & 1U);
  }
  require(have_fmt && have_data, ErrorKind::Format, path.string() + ": missing fmt or data chunk");
  require(bits == 16, ErrorKind::Format,
          path.string() + ": unsupported bit depth " + std::to_string(bits) + " (need 16)");
  require(channels > 0 && rate > 0, ErrorKind::Format, path.string() + ": bad fmt chunk");

  const std::size_t frames = data.size() / (2U * channels);
  require(frames > 0, ErrorKind::Format, path.string() + ": no samples");
  std::vector<float> mono(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (int c = 0; c < channels; ++c) {
      const auto raw = static_cast<std::int16_t>(read_u16(data, (i * channels + c) * 2));
      acc += raw / 32768.0;
    }
    mono[i] = static_cast<float>(acc / channels);
  }

  AudioClip clip;
  clip.id = path.stem().string();
  clip.sample_rate = target_rate;
  clip.samples = rate == target_rate ? std::move(mono) : resample(mono, rate, target_rate);
  return clip;
}

void write_wav(const fs::path& path, const std::vector<float>& samples, int sample_rate) {
  std::string out;
  const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  auto put_u16 = [&out](std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xFF));
    out.push_back(static_cast<char>(v >> 8));
  };
  out.append("RIFF");
  put_u32(out, 36 + data_bytes);
  out.append("WAVEfmt ");
  put_u32(out, 16);
  put_u16(1);
  put_u16(1);
  put_u32(out, static_cast<std::uint32_t>(sample_rate));
  put_u32(out, static_cast<std::uint32_t>(sample_rate * 2));
  put_u16(2);
  put_u16(16);
  out.append("data");
  put_u32(out, data_bytes);
  for (float s : samples) {
    const double c = std::clamp(static_cast<double>(s), -1.0, 1.0);
    const auto q = static_cast<std::int16_t>(std::lround(std::clamp(c * 32768.0, -32768.0, 32767.0)));
    put_u16(static_cast<std::uint16_t>(q));
  }
  write_file(path, out);
}

std::vector<float> resample(const std::vector<float>& samples, int from_rate, int to_rate) {
  require(from_rate > 0 && to_rate > 0, ErrorKind::Contract, "sample rates must be positive");
  if (from_rate == to_rate || samples.empty()) return samples;
  const double ratio = static_cast<double>(to_rate) / from_rate;
  const double cutoff = std::min(1.0, ratio);
  const double half_width = 16.0 / cutoff;  // in input samples
  const auto n_in = static_cast<std::ptrdiff_t>(samples.size());
  const auto n_out = static_cast<std::size_t>(std::llround(samples.size() * ratio));
  std::vector<float> out(n_out);
  for (std::size_t j = 0; j < n_out; ++j) {
    const double t = j / ratio;
    const auto lo = static_cast<std::ptrdiff_t>(std::ceil(t - half_width));
    const auto hi = static_cast<std::ptrdiff_t>(std::floor(t + half_width));
    double acc = 0.0;
    for (auto n = std::max<std::ptrdiff_t>(lo, 0); n <= std::min(hi, n_in - 1); ++n) {
      const double x = n - t;
      const double arg = cutoff * x;
      const double sinc = arg == 0.0 ? 1.0 : std::sin(kPi * arg) / (kPi * arg);
      const double window = 0.5 + 0.5 * std::cos(kPi * x / half_width);
      acc += samples[n] * cutoff * sinc * window;
    }
    out[j] = static_cast<float>(std::clamp(acc, -1.0, 1.0));
  }
  return out;
}

Matrix mel_filterbank(const FeatureConfig& cfg) {
  const int n_bins = cfg.n_fft / 2 + 1;
  const double mel_lo = hz_to_mel(cfg.f_min);
  const double mel_hi = hz_to_mel(cfg.f_max);
  std::vector<double> edges(cfg.mel_bins + 2);
  for (int i = 0; i < cfg.mel_bins + 2; ++i)
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (cfg.mel_bins + 1));
  Matrix fb = Matrix::Zero(cfg.mel_bins, n_bins);
  for (int m = 0; m < cfg.mel_bins; ++m) {
    const double left = edges[m], center = edges[m + 1], right = edges[m + 2];
    for (int k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * cfg.sample_rate / cfg.n_fft;
      double w = 0.0;
      if (f > left && f <= center)
        w = (f - left) / (center - left);
      else if (f > center && f < right)
        w = (right - f) / (right - center);
      fb(m, k) = w;
    }
  }
  return fb;
}

LogMelSpec compute_logmel(const AudioClip& clip, const FeatureConfig& cfg) {
  require(!clip.samples.empty(), ErrorKind::Contract, "audio clip has no samples");
  require(cfg.window > 0 && cfg.hop > 0 && cfg.n_fft >= cfg.window && cfg.mel_bins > 0,
          ErrorKind::Config, "invalid feature config");
  require(clip.sample_rate == cfg.sample_rate, ErrorKind::Contract,
          "clip sample rate " + std::to_string(clip.sample_rate) + " does not match feature rate " +
              std::to_string(cfg.sample_rate));

  std::vector<double> x(clip.samples.begin(), clip.samples.end());
  if (static_cast<int>(x.size()) < cfg.window) x.resize(cfg.window, 0.0);
  const int frames = static_cast<int>((x.size() - cfg.window) / cfg.hop) + 1;

  std::vector<double> window(cfg.window);
  for (int i = 0; i < cfg.window; ++i) window[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * i / cfg.window);

  const Matrix fb = mel_filterbank(cfg);
  RealFft fft(cfg.n_fft);
  Vector power;
  LogMelSpec spec;
  spec.frame_hop = static_cast<double>(cfg.hop) / cfg.sample_rate;
  spec.values.resize(frames, cfg.mel_bins);
  for (int f = 0; f < frames; ++f) {
    double* in = fft.input();
    std::fill(in, in + cfg.n_fft, 0.0);
    for (int i = 0; i < cfg.window; ++i) in[i] = x[static_cast<std::size_t>(f) * cfg.hop + i] * window[i];
    fft.power(power);
    const Vector mel = fb * power;
    for (int m = 0; m < cfg.mel_bins; ++m) spec.values(f, m) = std::log(mel[m] + cfg.log_floor);
  }
  return spec;
}

LogMelSpec sample_and_augment(const LogMelSpec& spec, const AugmentationPolicy& policy, Rng& rng,
                              double pad_value) {
  require(policy.crop_frames > 0 && std::isfinite(policy.noise_std) && policy.noise_std >= 0.0,
          ErrorKind::Contract, "invalid augmentation policy");
  const int crop = policy.crop_frames;
  const int bins = spec.mel_bins();
  Matrix padded = spec.values;
  if (spec.frames() < crop) {
    padded = Matrix::Constant(crop, bins, pad_value);
    padded.topRows(spec.frames()) = spec.values;
  }
  const int slack = static_cast<int>(padded.rows()) - crop;
  int start = slack / 2;
  if (policy.allow_time_shift && slack > 0)
    start = std::uniform_int_distribution<int>(0, slack)(rng);

  LogMelSpec out;
  out.frame_hop = spec.frame_hop;
  out.values = padded.middleRows(start, crop);
  if (policy.noise_std > 0.0) {
    std::normal_distribution<double> noise(0.0, policy.noise_std);
    for (Eigen::Index c = 0; c < out.values.cols(); ++c)
      for (Eigen::Index r = 0; r < out.values.rows(); ++r) out.values(r, c) += noise(rng);
  }
  return out;
}

std::vector<std::size_t> LabeledDataset::indices(Split split) const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < items.size(); ++i)
    if (items[i].split == split) idx.push_back(i);
  return idx;
}

std::vector<int> LabeledDataset::labels(const std::vector<std::size_t>& idx) const {
  std::vector<int> out;
  out.reserve(idx.size());
  for (auto i : idx) {
    require(i < items.size() && items[i].label.has_value(), ErrorKind::Contract,
            "dataset item " + std::to_string(i) + " has no label");
    out.push_back(*items[i].label);
  }
  return out;
}

Split split_for_index(std::size_t index_in_class) {
  return index_in_class % 4 == 3 ? Split::Test : Split::Train;
}

LabeledDataset generate_synthetic_dataset(int class_count, int n_per_class, std::uint64_t seed,
                                          const FeatureConfig& cfg, double clip_seconds) {
  require(class_count >= 2, ErrorKind::Contract, "synthetic dataset needs at least 2 classes");
  require(n_per_class >= 8, ErrorKind::Contract, "synthetic dataset needs at least 8 items per class");
  constexpr int kTones = 3;
  constexpr double kLowHz = 300.0, kHighHz = 5000.0;
  const int slots = kTones * class_count;
  auto slot_hz = [&](int s) {
    return kLowHz * std::pow(kHighHz / kLowHz, (s + 0.5) / slots);
  };

  Rng rng = make_rng(seed, "synthetic-dataset");
  std::uniform_real_distribution<double> jitter(-0.02, 0.02);
  std::uniform_real_distribution<double> amp(0.15, 0.3);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * kPi);
  std::normal_distribution<double> noise(0.0, 0.005);

  const auto n_samples = static_cast<std::size_t>(std::llround(clip_seconds * cfg.sample_rate));
  LabeledDataset data;
  data.class_count = class_count;
  data.items.reserve(static_cast<std::size_t>(class_count) * n_per_class);
  for (int c = 0; c < class_count; ++c) {
    for (int j = 0; j < n_per_class; ++j) {
      double freq[kTones], a[kTones], ph[kTones];
      for (int k = 0; k < kTones; ++k) {
        freq[k] = slot_hz(c + k * class_count) * (1.0 + jitter(rng));
        a[k] = amp(rng);
        ph[k] = phase(rng);
      }
      AudioClip clip;
      clip.id = "syn_c" + std::to_string(c) + "_" + std::to_string(j);
      clip.sample_rate = cfg.sample_rate;
      clip.label = c;
      clip.samples.resize(n_samples);
      for (std::size_t i = 0; i < n_samples; ++i) {
        const double t = static_cast<double>(i) / cfg.sample_rate;
        double s = noise(rng);
        for (int k = 0; k < kTones; ++k) s += a[k] * std::sin(2.0 * kPi * freq[k] * t + ph[k]);
        clip.samples[i] = static_cast<float>(std::clamp(s, -1.0, 1.0));
      }
      data.items.push_back({clip.id, compute_logmel(clip, cfg), c, split_for_index(j)});
    }
  }
  return data;
}

LabeledDataset load_wav_directory(const fs::path& root, const FeatureConfig& cfg) {
  require(fs::is_directory(root), ErrorKind::Io, "data directory not found: " + root.string());
  std::vector<fs::path> class_dirs;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) class_dirs.push_back(e.path());
  std::sort(class_dirs.begin(), class_dirs.end());
  require(class_dirs.size() >= 2, ErrorKind::Contract,
          "data directory needs at least two class subdirectories: " + root.string());

  LabeledDataset data;
  data.class_count = static_cast<int>(class_dirs.size());
  for (std::size_t c = 0; c < class_dirs.size(); ++c) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(class_dirs[c]))
      if (e.is_regular_file() && e.path().extension() == ".wav") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    require(!files.empty(), ErrorKind::Contract, "class directory has no .wav files: " +
                                                     class_dirs[c].string());
    for (std::size_t j = 0; j < files.size(); ++j) {
      AudioClip clip = load_audio(files[j], cfg.sample_rate);
      const std::string id = class_dirs[c].filename().string() + "/" + files[j].stem().string();
      data.items.push_back({id, compute_logmel(clip, cfg), static_cast<int>(c), split_for_index(j)});
    }
  }
  return data;
}

void save_dataset(const LabeledDataset& data, const fs::path& dir) {
  fs::create_directories(dir);
  std::ostringstream manifest;
  manifest << "format=sdaudio-dataset-v1\n"
           << "class_count=" << data.class_count << "\n"
           << "item_count=" << data.items.size() << "\n";
  for (std::size_t i = 0; i < data.items.size(); ++i) {
    const auto& item = data.items[i];
    require(item.id.find_first_of(";\n=") == std::string::npos, ErrorKind::Contract,
            "item id contains a reserved character: " + item.id);
    char file[32];
    std::snprintf(file, sizeof file, "item_%05zu.f32", i);
    manifest << "item." << i << "=" << item.id << ";" << item.label.value_or(-1) << ";"
             << (item.split == Split::Test ? "test" : "train") << ";" << file << ";"
             << item.spec.frame_hop << "\n";
    write_matrix_f32(dir / file, item.spec.values);
  }
  write_file(dir / "manifest.txt", manifest.str());
}

LabeledDataset load_dataset(const fs::path& dir) {
  const std::string text = read_file(dir / "manifest.txt");
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos, ErrorKind::Format, "dataset manifest line without '=': " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  require(kv["format"] == "sdaudio-dataset-v1", ErrorKind::Format,
          "unknown dataset manifest format in " + dir.string());
  LabeledDataset data;
  data.class_count = std::stoi(kv.at("class_count"));
  const auto count = std::stoul(kv.at("item_count"));
  data.items.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto it = kv.find("item." + std::to_string(i));
    require(it != kv.end(), ErrorKind::Format, "dataset manifest missing item " + std::to_string(i));
    std::vector<std::string> fields;
    std::istringstream fs_(it->second);
    std::string f;
    while (std::getline(fs_, f, ';')) fields.push_back(f);
    require(fields.size() == 5, ErrorKind::Format, "malformed dataset item record: " + it->second);
    DatasetItem item;
    item.id = fields[0];
    const int label = std::stoi(fields[1]);
    if (label >= 0) item.label = label;
    item.split = fields[2] == "test" ? Split::Test : Split::Train;
    item.spec.values = read_matrix_f32(dir / fields[3]);
    item.spec.frame_hop = std::stod(fields[4]);
    data.items.push_back(std::move(item));
  }
  return data;
}

}  // namespace sdaudio
