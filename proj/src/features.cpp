#include "cid/features.h"

#include <algorithm>
#include <cmath>
#include <complex>
#include <stdexcept>

namespace cid {

InputVariant variant_from_string(const std::string& s) {
  if (s == "frame") return InputVariant::kFrame;
  if (s == "onset") return InputVariant::kOnset;
  if (s == "frame+onset") return InputVariant::kFrameOnset;
  if (s == "frame+onset+velocity") return InputVariant::kFrameOnsetVelocity;
  if (s == "logmel") return InputVariant::kLogMel;
  throw std::invalid_argument("unknown input variant: " + s);
}

const char* variant_name(InputVariant v) {
  switch (v) {
    case InputVariant::kFrame: return "frame";
    case InputVariant::kOnset: return "onset";
    case InputVariant::kFrameOnset: return "frame+onset";
    case InputVariant::kFrameOnsetVelocity: return "frame+onset+velocity";
    case InputVariant::kLogMel: return "logmel";
  }
  return "?";
}

int variant_channels(InputVariant v) {
  switch (v) {
    case InputVariant::kFrame:
    case InputVariant::kOnset:
    case InputVariant::kLogMel: return 1;
    case InputVariant::kFrameOnset: return 2;
    case InputVariant::kFrameOnsetVelocity: return 3;
  }
  return 0;
}

RollSet extract_rolls(const MidiPiece& piece, double start, double duration,
                      double fps) {
  if (fps <= 0 || duration <= 0 || start < 0)
    throw std::invalid_argument("extract_rolls: bad window");
  RollSet rolls;
  rolls.fps = fps;
  rolls.frames = std::llround(duration * fps);
  const int64_t T = rolls.frames;
  const size_t n = static_cast<size_t>(T) * kPitchCount;
  rolls.frame.assign(n, 0.0f);
  rolls.onset.assign(n, 0.0f);
  rolls.velocity.assign(n, 0.0f);
  if (T == 0) return rolls;

  for (const NoteEvent& ev : piece.notes) {
    if (ev.pitch < kLowestPitch || ev.pitch >= kLowestPitch + kPitchCount) continue;
    const int k = ev.pitch - kLowestPitch;
    const int64_t s_idx = static_cast<int64_t>(std::floor((ev.onset - start) * fps));
    const int64_t e_idx = static_cast<int64_t>(std::floor((ev.offset - start) * fps));
    // Sub-frame notes still occupy one frame.
    const int64_t paint_end = std::max(e_idx, s_idx + 1);
    const int64_t lo = std::max<int64_t>(s_idx, 0);
    const int64_t hi = std::min<int64_t>(paint_end, T);
    const float vel = static_cast<float>(ev.velocity) / 127.0f;
    for (int64_t t = lo; t < hi; ++t) {
      rolls.frame[rolls.idx(t, k)] = 1.0f;
      rolls.velocity[rolls.idx(t, k)] = std::max(rolls.velocity[rolls.idx(t, k)], vel);
    }
    if (ev.onset >= start && ev.onset < start + duration) {
      const int64_t o = std::clamp<int64_t>(s_idx, 0, T - 1);
      rolls.onset[rolls.idx(o, k)] = 1.0f;
      rolls.frame[rolls.idx(o, k)] = 1.0f;
      rolls.velocity[rolls.idx(o, k)] = std::max(rolls.velocity[rolls.idx(o, k)], vel);
    }
  }
  return rolls;
}

InputStack stack_channels(const RollSet& rolls, InputVariant variant) {
  const std::vector<float>* sources[3] = {nullptr, nullptr, nullptr};
  int c = 0;
  switch (variant) {
    case InputVariant::kFrame: sources[c++] = &rolls.frame; break;
    case InputVariant::kOnset: sources[c++] = &rolls.onset; break;
    case InputVariant::kFrameOnset:
      sources[c++] = &rolls.frame;
      sources[c++] = &rolls.onset;
      break;
    case InputVariant::kFrameOnsetVelocity:
      sources[c++] = &rolls.frame;
      sources[c++] = &rolls.onset;
      sources[c++] = &rolls.velocity;
      break;
    case InputVariant::kLogMel:
      throw std::invalid_argument("stack_channels: logmel is not a roll variant");
  }
  InputStack stack;
  stack.channels = c;
  stack.frames = rolls.frames;
  stack.bins = kPitchCount;
  stack.data.reserve(static_cast<size_t>(c) * rolls.frame.size());
  for (int i = 0; i < c; ++i)
    stack.data.insert(stack.data.end(), sources[i]->begin(), sources[i]->end());
  return stack;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<double> mel_frequencies(int n_mels, double f_min, double f_max) {
  if (n_mels < 1 || f_min < 0 || f_min >= f_max)
    throw std::invalid_argument("mel_frequencies: invalid range");
  const double m_lo = hz_to_mel(f_min);
  const double m_hi = hz_to_mel(f_max);
  std::vector<double> freqs(static_cast<size_t>(n_mels) + 2);
  for (int i = 0; i < n_mels + 2; ++i)
    freqs[static_cast<size_t>(i)] =
        mel_to_hz(m_lo + (m_hi - m_lo) * i / static_cast<double>(n_mels + 1));
  return freqs;
}

std::vector<double> mel_filterbank(int n_mels, int sample_rate, int window_size,
                                   double f_min, double f_max) {
  const int n_bins = window_size / 2 + 1;
  const std::vector<double> edges = mel_frequencies(n_mels, f_min, f_max);
  std::vector<double> bank(static_cast<size_t>(n_mels) * n_bins, 0.0);
  for (int m = 0; m < n_mels; ++m) {
    const double f0 = edges[static_cast<size_t>(m)];
    const double f1 = edges[static_cast<size_t>(m) + 1];
    const double f2 = edges[static_cast<size_t>(m) + 2];
    for (int k = 0; k < n_bins; ++k) {
      const double fk = static_cast<double>(k) * sample_rate / window_size;
      double w = 0.0;
      if (fk > f0 && fk < f1)
        w = (fk - f0) / (f1 - f0);
      else if (fk >= f1 && fk < f2)
        w = (f2 - fk) / (f2 - f1);
      bank[static_cast<size_t>(m) * n_bins + static_cast<size_t>(k)] = w;
    }
  }
  return bank;
}

namespace {

// Iterative radix-2 FFT, in place, complex double.
void fft_radix2(std::vector<std::complex<double>>& a) {
  const size_t n = a.size();
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * 3.14159265358979323846 / static_cast<double>(len);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t j = 0; j < len / 2; ++j) {
        const std::complex<double> u = a[i + j];
        const std::complex<double> v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

// Reflection (without edge repeat) for out-of-range sample indices.
float sample_reflect(const std::vector<float>& s, int64_t j) {
  const int64_t n = static_cast<int64_t>(s.size());
  if (n == 1) return s[0];
  while (j < 0 || j >= n) {
    if (j < 0) j = -j;
    if (j >= n) j = 2 * n - 2 - j;
  }
  return s[static_cast<size_t>(j)];
}

}  // namespace

std::vector<float> stft_magnitude(const std::vector<float>& samples,
                                  int window_size, int hop, int64_t* out_frames) {
  if (window_size <= 0 || (window_size & (window_size - 1)) != 0)
    throw std::invalid_argument("stft_magnitude: window must be a power of two");
  if (hop < 1) throw std::invalid_argument("stft_magnitude: hop must be >= 1");
  const int n_bins = window_size / 2 + 1;
  if (samples.empty()) {
    *out_frames = 0;
    return {};
  }
  const int64_t T = static_cast<int64_t>(samples.size()) / hop + 1;
  *out_frames = T;

  std::vector<double> window(static_cast<size_t>(window_size));
  for (int i = 0; i < window_size; ++i)
    window[static_cast<size_t>(i)] =
        0.5 - 0.5 * std::cos(2.0 * 3.14159265358979323846 * i / (window_size - 1));

  std::vector<float> out(static_cast<size_t>(T) * n_bins);
  std::vector<std::complex<double>> buf(static_cast<size_t>(window_size));
  for (int64_t t = 0; t < T; ++t) {
    const int64_t base = t * hop - window_size / 2;
    for (int i = 0; i < window_size; ++i)
      buf[static_cast<size_t>(i)] = {
          window[static_cast<size_t>(i)] *
              static_cast<double>(sample_reflect(samples, base + i)),
          0.0};
    fft_radix2(buf);
    for (int k = 0; k < n_bins; ++k)
      out[static_cast<size_t>(t) * n_bins + static_cast<size_t>(k)] =
          static_cast<float>(std::abs(buf[static_cast<size_t>(k)]));
  }
  return out;
}

MelSpectrogram log_mel(const std::vector<float>& spec, int64_t spec_frames,
                       int n_bins, const std::vector<double>& filterbank,
                       int n_mels, double frame_rate) {
  if (filterbank.size() != static_cast<size_t>(n_mels) * n_bins)
    throw std::invalid_argument("log_mel: filterbank shape mismatch");
  if (spec.size() != static_cast<size_t>(spec_frames) * n_bins)
    throw std::invalid_argument("log_mel: spectrogram shape mismatch");
  MelSpectrogram mel;
  mel.frames = spec_frames;
  mel.bins = n_mels;
  mel.frame_rate = frame_rate;
  mel.values.assign(static_cast<size_t>(spec_frames) * n_mels, 0.0f);
  for (int64_t t = 0; t < spec_frames; ++t) {
    const float* row = spec.data() + t * n_bins;
    for (int m = 0; m < n_mels; ++m) {
      const double* f = filterbank.data() + static_cast<size_t>(m) * n_bins;
      double acc = 0.0;
      for (int k = 0; k < n_bins; ++k) acc += f[k] * static_cast<double>(row[k]);
      mel.values[static_cast<size_t>(t) * n_mels + static_cast<size_t>(m)] =
          static_cast<float>(std::log(std::max(acc, kLogFloor)));
    }
  }
  return mel;
}

InputStack audio_to_stack(const std::vector<float>& samples) {
  static const std::vector<double> bank =
      mel_filterbank(kNumMels, kSampleRate, kStftWindow, kMelFmin, kMelFmax);
  int64_t frames = 0;
  const std::vector<float> spec = stft_magnitude(samples, kStftWindow, kStftHop, &frames);
  const MelSpectrogram mel =
      log_mel(spec, frames, kStftWindow / 2 + 1, bank, kNumMels,
              static_cast<double>(kSampleRate) / kStftHop);
  InputStack stack;
  stack.channels = 1;
  stack.frames = mel.frames;
  stack.bins = kNumMels;
  stack.data = mel.values;
  return stack;
}

}  // namespace cid
