#include "kwscl/audio_frontend.hpp"

#include <fftw3.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <fstream>
#include <mutex>
#include <numbers>
#include <string>

#include "kwscl/binary_io.hpp"
#include "kwscl/errors.hpp"

namespace kwscl {

namespace {

constexpr std::uint16_t kWaveFormatPcm = 1;
constexpr std::uint16_t kWaveFormatExtensible = 0xFFFE;

// FFTW planning touches global state; execution with new-array calls does not.
std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

std::size_t FrontendConfig::window_samples() const {
  return static_cast<std::size_t>(std::lround(window_ms * sample_rate_hz / 1000.0));
}

std::size_t FrontendConfig::hop_samples() const {
  return static_cast<std::size_t>(std::lround(hop_ms * sample_rate_hz / 1000.0));
}

void FrontendConfig::validate() const {
  if (sample_rate_hz <= 0) throw ConfigError("sample rate must be positive");
  if (window_ms <= 0 || hop_ms <= 0) throw ConfigError("window and hop must be positive");
  if (window_samples() == 0 || hop_samples() == 0) throw ConfigError("window or hop shorter than one sample");
  if (n_mels < 1) throw ConfigError("n_mels must be >= 1");
  if (!(fmin_hz >= 0.0) || !(fmin_hz < fmax_hz)) throw ConfigError("require 0 <= fmin_hz < fmax_hz");
  if (fmax_hz > sample_rate_hz / 2.0) throw ConfigError("fmax_hz exceeds the Nyquist frequency");
  if (fft_size <= 0 || !std::has_single_bit(static_cast<unsigned>(fft_size)))
    throw ConfigError("fft_size must be a power of two");
  if (static_cast<std::size_t>(fft_size) < window_samples())
    throw ConfigError("fft_size shorter than the analysis window");
  if (!(log_floor > 0.0)) throw ConfigError("log_floor must be positive");
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

namespace {

struct WavData {
  std::uint16_t channels = 0;
  std::uint32_t sample_rate = 0;
  std::vector<std::int16_t> mono;
};

WavData read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  const auto fail = [&](const std::string& why) { return DataError(path.string() + ": " + why); };

  char riff[4];
  in.read(riff, 4);
  if (!in || std::string(riff, 4) != "RIFF") throw fail("malformed header (missing RIFF)");
  io::read<std::uint32_t>(in, "RIFF size");
  char wave[4];
  in.read(wave, 4);
  if (!in || std::string(wave, 4) != "WAVE") throw fail("malformed header (missing WAVE)");

  WavData wav;
  bool have_fmt = false;
  std::uint16_t bits = 0;
  while (true) {
    char id[4];
    in.read(id, 4);
    if (!in) throw fail("malformed header (no data chunk)");
    const auto size = io::read<std::uint32_t>(in, "chunk size");
    const std::string chunk(id, 4);
    if (chunk == "fmt ") {
      if (size < 16) throw fail("malformed header (short fmt chunk)");
      auto format = io::read<std::uint16_t>(in, "format");
      wav.channels = io::read<std::uint16_t>(in, "channels");
      wav.sample_rate = io::read<std::uint32_t>(in, "sample rate");
      io::read<std::uint32_t>(in, "byte rate");
      io::read<std::uint16_t>(in, "block align");
      bits = io::read<std::uint16_t>(in, "bits per sample");
      std::uint32_t consumed = 16;
      if (format == kWaveFormatExtensible && size >= 40) {
        io::read<std::uint16_t>(in, "cb size");
        io::read<std::uint16_t>(in, "valid bits");
        io::read<std::uint32_t>(in, "channel mask");
        format = io::read<std::uint16_t>(in, "sub format");
        consumed = 26;
      }
      in.seekg(size - consumed + (size & 1U), std::ios::cur);
      if (format != kWaveFormatPcm || bits != 16) throw fail("unsupported encoding (only PCM16)");
      if (wav.channels == 0) throw fail("malformed header (zero channels)");
      have_fmt = true;
    } else if (chunk == "data") {
      if (!have_fmt) throw fail("malformed header (data before fmt)");
      if (wav.sample_rate != static_cast<std::uint32_t>(kSampleRateHz))
        throw fail("unsupported sample rate " + std::to_string(wav.sample_rate));
      const std::size_t frames = size / (2U * wav.channels);
      std::vector<std::int16_t> interleaved(frames * wav.channels);
      in.read(reinterpret_cast<char*>(interleaved.data()),
              static_cast<std::streamsize>(interleaved.size() * 2));
      if (!in) throw fail("truncated data chunk");
      wav.mono.resize(frames);
      for (std::size_t f = 0; f < frames; ++f) {
        long sum = 0;
        for (std::size_t c = 0; c < wav.channels; ++c) sum += interleaved[f * wav.channels + c];
        wav.mono[f] = static_cast<std::int16_t>(sum / static_cast<long>(wav.channels));
      }
      return wav;
    } else {
      in.seekg(size + (size & 1U), std::ios::cur);
    }
  }
}

}  // namespace

std::vector<std::int16_t> load_wav_samples(const std::filesystem::path& path) {
  return read_wav(path).mono;
}

PcmClip load_wav(const std::filesystem::path& path) {
  return crop_clip(read_wav(path).mono, 0);
}

PcmClip crop_clip(std::span<const std::int16_t> samples, std::size_t offset) {
  PcmClip clip;
  clip.samples.assign(kClipSamples, 0);
  if (offset < samples.size()) {
    const std::size_t n = std::min(kClipSamples, samples.size() - offset);
    std::copy_n(samples.begin() + static_cast<std::ptrdiff_t>(offset), n, clip.samples.begin());
  }
  return clip;
}

void save_wav(const std::filesystem::path& path, std::span<const std::int16_t> samples,
              int sample_rate_hz) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  io::write_magic(out, "RIFF");
  io::write<std::uint32_t>(out, 36 + data_bytes);
  io::write_magic(out, "WAVEfmt ");
  io::write<std::uint32_t>(out, 16);
  io::write<std::uint16_t>(out, kWaveFormatPcm);
  io::write<std::uint16_t>(out, 1);
  io::write<std::uint32_t>(out, static_cast<std::uint32_t>(sample_rate_hz));
  io::write<std::uint32_t>(out, static_cast<std::uint32_t>(sample_rate_hz * 2));
  io::write<std::uint16_t>(out, 2);
  io::write<std::uint16_t>(out, 16);
  io::write_magic(out, "data");
  io::write<std::uint32_t>(out, data_bytes);
  out.write(reinterpret_cast<const char*>(samples.data()), data_bytes);
}

FilterBank mel_filterbank(const FrontendConfig& cfg) {
  cfg.validate();
  FilterBank bank;
  bank.bands = static_cast<std::size_t>(cfg.n_mels);
  bank.bins = static_cast<std::size_t>(cfg.fft_size) / 2 + 1;
  bank.weights.assign(bank.bands * bank.bins, 0.0);

  const double mel_lo = hz_to_mel(cfg.fmin_hz);
  const double mel_hi = hz_to_mel(cfg.fmax_hz);
  std::vector<double> edges(bank.bands + 2);
  for (std::size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                      static_cast<double>(bank.bands + 1));

  const double bin_hz = static_cast<double>(cfg.sample_rate_hz) / cfg.fft_size;
  for (std::size_t b = 0; b < bank.bands; ++b) {
    const double lower = edges[b];
    const double center = edges[b + 1];
    const double upper = edges[b + 2];
    bool nonempty = false;
    for (std::size_t k = 0; k < bank.bins; ++k) {
      const double f = static_cast<double>(k) * bin_hz;
      double w = 0.0;
      if (f > lower && f < center)
        w = (f - lower) / (center - lower);
      else if (f >= center && f < upper)
        w = (upper - f) / (upper - center);
      bank.weights[b * bank.bins + k] = w;
      nonempty = nonempty || w > 0.0;
    }
    if (!nonempty)
      throw ConfigError("n_mels too large for fft resolution: band " + std::to_string(b) +
                        " covers no FFT bin");
    bank.center_hz.push_back(center);
  }
  return bank;
}

std::size_t frame_count(std::size_t clip_samples, const FrontendConfig& cfg) {
  const std::size_t win = cfg.window_samples();
  if (clip_samples < win) return 0;
  return (clip_samples - win) / cfg.hop_samples() + 1;
}

struct LogMelFrontend::Plan {
  fftw_plan plan = nullptr;
};

LogMelFrontend::LogMelFrontend(const FrontendConfig& cfg)
    : cfg_(cfg), bank_(mel_filterbank(cfg)), plan_(std::make_unique<Plan>()) {
  const std::size_t win = cfg_.window_samples();
  window_.resize(win);
  // Periodic Hann.
  for (std::size_t n = 0; n < win; ++n)
    window_[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) /
                                      static_cast<double>(win));

  std::vector<double> in(static_cast<std::size_t>(cfg_.fft_size));
  std::vector<std::complex<double>> out(bank_.bins);
  std::lock_guard lock(fftw_planner_mutex());
  plan_->plan = fftw_plan_dft_r2c_1d(cfg_.fft_size, in.data(),
                                     reinterpret_cast<fftw_complex*>(out.data()),
                                     FFTW_ESTIMATE | FFTW_UNALIGNED);
  if (plan_->plan == nullptr) throw ConfigError("failed to create FFT plan");
}

LogMelFrontend::~LogMelFrontend() {
  if (plan_ && plan_->plan != nullptr) {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(plan_->plan);
  }
}

LogMelSpectrogram LogMelFrontend::compute(std::span<const std::int16_t> samples) const {
  const std::size_t win = cfg_.window_samples();
  const std::size_t hop = cfg_.hop_samples();
  LogMelSpectrogram spec;
  spec.frames = frame_count(samples.size(), cfg_);
  spec.bands = bank_.bands;
  spec.values.resize(spec.frames * spec.bands);

  std::vector<double> frame(static_cast<std::size_t>(cfg_.fft_size), 0.0);
  std::vector<std::complex<double>> spectrum(bank_.bins);
  std::vector<double> power(bank_.bins);
  for (std::size_t t = 0; t < spec.frames; ++t) {
    for (std::size_t n = 0; n < win; ++n)
      frame[n] = static_cast<double>(samples[t * hop + n]) / 32768.0 * window_[n];
    fftw_execute_dft_r2c(plan_->plan, frame.data(), reinterpret_cast<fftw_complex*>(spectrum.data()));
    for (std::size_t k = 0; k < bank_.bins; ++k) power[k] = std::norm(spectrum[k]);
    for (std::size_t b = 0; b < bank_.bands; ++b) {
      double energy = 0.0;
      const double* row = &bank_.weights[b * bank_.bins];
      for (std::size_t k = 0; k < bank_.bins; ++k) energy += row[k] * power[k];
      spec.values[t * spec.bands + b] = std::log(energy + cfg_.log_floor);
    }
  }
  return spec;
}

LogMelSpectrogram log_mel(const PcmClip& clip, const FrontendConfig& cfg) {
  return LogMelFrontend(cfg).compute(clip.samples);
}

void save_spectrogram(const std::filesystem::path& path, const LogMelSpectrogram& spec) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  io::write_magic(out, "LMEL0001");
  io::write<std::uint32_t>(out, static_cast<std::uint32_t>(spec.frames));
  io::write<std::uint32_t>(out, static_cast<std::uint32_t>(spec.bands));
  for (double v : spec.values) io::write<float>(out, static_cast<float>(v));
}

LogMelSpectrogram load_spectrogram(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  io::expect_magic(in, "LMEL0001");
  LogMelSpectrogram spec;
  spec.frames = io::read<std::uint32_t>(in, "frames");
  spec.bands = io::read<std::uint32_t>(in, "bands");
  spec.values.resize(spec.frames * spec.bands);
  for (double& v : spec.values) v = io::read<float>(in, "spectrogram values");
  return spec;
}

}  // namespace kwscl
