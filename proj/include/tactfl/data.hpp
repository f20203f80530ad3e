#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "tactfl/errors.hpp"
#include "tactfl/rng.hpp"
#include "tactfl/tensor.hpp"

namespace tactfl {

using ModalityId = int;

// Label value carried by samples whose label has been stripped.
inline constexpr int kNoLabel = -1;

// One multi-modal recording: per-modality feature sequences [T x d_m] over a
// shared timeline, plus a class label (kNoLabel when withheld).
struct MultiModalSample {
  std::uint32_t sample_id = 0;
  int label = kNoLabel;
  std::map<ModalityId, Tensor> modalities;

  std::size_t timesteps() const {
    if (modalities.empty()) return 0;
    return modalities.begin()->second.rows();
  }
};

struct DatasetSpec {
  std::size_t num_classes = 4;
  std::size_t samples_per_class = 50;
  std::size_t timesteps = 16;
  std::size_t dim_a = 6;
  std::size_t dim_b = 6;
  std::size_t latent_dim = 4;
  double noise_sigma = 0.5;
  // Multiplier on the Fourier component amplitudes of every latent
  // trajectory; 1 keeps the base oscillation budget.
  double amp_scale = 1.0;
  // Per-sample offset of the latent mean, visible to both modalities. Widens
  // within-class spread without touching class geometry. Zero disables it.
  double mean_jitter = 0.0;
  // Modality-private clutter: a per-sample offset drawn from a fixed rank-q
  // subspace, constant across frames and independent between modalities.
  // Disabled when either value is zero.
  std::size_t distractor_rank = 0;
  double distractor_scale = 0.0;
  std::uint64_t seed = 1;

  void validate() const {
    if (num_classes < 1) throw parameter_error("dataset: num_classes must be >= 1");
    if (samples_per_class < 1)
      throw parameter_error("dataset: samples_per_class must be >= 1");
    if (timesteps < 1) throw parameter_error("dataset: timesteps must be >= 1");
    if (dim_a < 1 || dim_b < 1)
      throw parameter_error("dataset: modality dims must be >= 1");
    if (latent_dim < 1) throw parameter_error("dataset: latent_dim must be >= 1");
    if (noise_sigma < 0.0)
      throw parameter_error("dataset: noise_sigma must be >= 0");
    if (amp_scale < 0.0)
      throw parameter_error("dataset: amp_scale must be >= 0");
    if (mean_jitter < 0.0)
      throw parameter_error("dataset: mean_jitter must be >= 0");
    if (distractor_scale < 0.0)
      throw parameter_error("dataset: distractor_scale must be >= 0");
  }
};

namespace detail {

// Fourier mixture components per (class, latent dim). Class identity lives in
// the mean offset and the spectral signature; samples within a class vary by
// phase and amplitude jitter.
inline constexpr std::size_t kFourierComponents = 3;
inline constexpr double kClassMeanScale = 1.6;
inline constexpr double kTwoPi = 6.283185307179586476925286766559;

struct ClassTrajectory {
  std::vector<double> mean;                   // [d_z]
  std::vector<double> amp, freq, phase;       // [d_z * F]
};

inline ClassTrajectory make_class_trajectory(const DatasetSpec& spec, std::size_t k) {
  SplitMix64 rng(derive_seed(spec.seed, 0xC1A55u, k));
  ClassTrajectory c;
  c.mean.resize(spec.latent_dim);
  const std::size_t nf = spec.latent_dim * kFourierComponents;
  c.amp.resize(nf);
  c.freq.resize(nf);
  c.phase.resize(nf);
  for (std::size_t d = 0; d < spec.latent_dim; ++d) {
    c.mean[d] = kClassMeanScale * rng.next_gaussian();
  }
  for (std::size_t i = 0; i < nf; ++i) {
    c.amp[i] = rng.next_uniform(0.5, 1.2);
    c.freq[i] = rng.next_uniform(0.5, 2.2);
    c.phase[i] = rng.next_uniform(0.0, kTwoPi);
  }
  return c;
}

}  // namespace detail

// Synthetic multi-modal dataset. Every sample owns a smooth latent trajectory
// z(t); modality 0 is a linear view W_A z(t) + noise and modality 1 a
// saturating view tanh(W_B z(t)) + noise, so overlapping windows of the two
// modalities describe the same latent content. Optional clutter adds each
// modality a private low-rank offset that carries no label information yet
// dominates raw variance when distractor_scale is large. Deterministic given
// spec.seed. When latents_out is non-null it receives each sample's [T x d_z]
// trajectory.
inline std::vector<MultiModalSample> generate(const DatasetSpec& spec,
                                              std::vector<Tensor>* latents_out) {
  spec.validate();
  const std::size_t dz = spec.latent_dim;

  SplitMix64 view_rng(derive_seed(spec.seed, 0xD5u));
  Tensor wa({spec.dim_a, dz});
  Tensor wb({spec.dim_b, dz});
  const double wa_scale = 1.0 / std::sqrt(static_cast<double>(dz));
  const double wb_scale = 0.5 / std::sqrt(static_cast<double>(dz));
  for (auto& v : wa.data) v = wa_scale * view_rng.next_gaussian();
  for (auto& v : wb.data) v = wb_scale * view_rng.next_gaussian();

  const bool clutter = spec.distractor_rank > 0 && spec.distractor_scale > 0.0;
  Tensor da, db;
  if (clutter) {
    SplitMix64 clutter_rng(derive_seed(spec.seed, 0xD157u));
    da = Tensor({spec.dim_a, spec.distractor_rank});
    db = Tensor({spec.dim_b, spec.distractor_rank});
    const double ds =
        spec.distractor_scale / std::sqrt(static_cast<double>(spec.distractor_rank));
    for (auto& v : da.data) v = ds * clutter_rng.next_gaussian();
    for (auto& v : db.data) v = ds * clutter_rng.next_gaussian();
  }

  std::vector<detail::ClassTrajectory> classes;
  classes.reserve(spec.num_classes);
  for (std::size_t k = 0; k < spec.num_classes; ++k) {
    classes.push_back(detail::make_class_trajectory(spec, k));
  }

  std::vector<MultiModalSample> out;
  out.reserve(spec.num_classes * spec.samples_per_class);
  if (latents_out) latents_out->clear();

  std::uint32_t next_id = 0;
  const std::size_t nf = dz * detail::kFourierComponents;
  std::vector<double> jitter_phase(nf), jitter_amp(nf), z(dz);
  std::vector<double> mean_off(dz, 0.0);
  std::vector<double> off_a(spec.dim_a), off_b(spec.dim_b);

  for (std::size_t k = 0; k < spec.num_classes; ++k) {
    const auto& cls = classes[k];
    for (std::size_t s = 0; s < spec.samples_per_class; ++s, ++next_id) {
      SplitMix64 rng(derive_seed(spec.seed, 0x5A3913Eu, next_id));
      for (std::size_t i = 0; i < nf; ++i) {
        jitter_phase[i] = rng.next_uniform(-0.9, 0.9);
        jitter_amp[i] = rng.next_uniform(0.75, 1.25);
      }
      if (spec.mean_jitter > 0.0) {
        for (std::size_t d = 0; d < dz; ++d) {
          mean_off[d] = spec.mean_jitter * rng.next_gaussian();
        }
      }
      if (clutter) {
        std::fill(off_a.begin(), off_a.end(), 0.0);
        std::fill(off_b.begin(), off_b.end(), 0.0);
        for (std::size_t q = 0; q < spec.distractor_rank; ++q) {
          const double ua = rng.next_gaussian();
          const double ub = rng.next_gaussian();
          for (std::size_t j = 0; j < spec.dim_a; ++j) off_a[j] += da(j, q) * ua;
          for (std::size_t j = 0; j < spec.dim_b; ++j) off_b[j] += db(j, q) * ub;
        }
      }

      MultiModalSample sample;
      sample.sample_id = next_id;
      sample.label = static_cast<int>(k);
      Tensor a({spec.timesteps, spec.dim_a});
      Tensor b({spec.timesteps, spec.dim_b});
      Tensor latent({spec.timesteps, dz});

      for (std::size_t t = 0; t < spec.timesteps; ++t) {
        const double tt = (static_cast<double>(t) + 0.5) /
                          static_cast<double>(spec.timesteps);
        for (std::size_t d = 0; d < dz; ++d) {
          double v = cls.mean[d] + mean_off[d];
          for (std::size_t f = 0; f < detail::kFourierComponents; ++f) {
            const std::size_t i = d * detail::kFourierComponents + f;
            v += spec.amp_scale * jitter_amp[i] * cls.amp[i] *
                 std::sin(detail::kTwoPi * cls.freq[i] * tt + cls.phase[i] +
                          jitter_phase[i]);
          }
          z[d] = v;
          latent(t, d) = v;
        }
        for (std::size_t j = 0; j < spec.dim_a; ++j) {
          double v = 0.0;
          for (std::size_t d = 0; d < dz; ++d) v += wa(j, d) * z[d];
          a(t, j) = v;
        }
        for (std::size_t j = 0; j < spec.dim_b; ++j) {
          double v = 0.0;
          for (std::size_t d = 0; d < dz; ++d) v += wb(j, d) * z[d];
          b(t, j) = std::tanh(v);
        }
      }
      if (clutter) {
        for (std::size_t t = 0; t < spec.timesteps; ++t) {
          for (std::size_t j = 0; j < spec.dim_a; ++j) a(t, j) += off_a[j];
          for (std::size_t j = 0; j < spec.dim_b; ++j) b(t, j) += off_b[j];
        }
      }
      if (spec.noise_sigma > 0.0) {
        for (auto& v : a.data) v += spec.noise_sigma * rng.next_gaussian();
        for (auto& v : b.data) v += spec.noise_sigma * rng.next_gaussian();
      }
      sample.modalities.emplace(0, std::move(a));
      sample.modalities.emplace(1, std::move(b));
      out.push_back(std::move(sample));
      if (latents_out) latents_out->push_back(std::move(latent));
    }
  }
  return out;
}

inline std::vector<MultiModalSample> generate(const DatasetSpec& spec) {
  return generate(spec, nullptr);
}

// ---------------------------------------------------------------------------
// Feature file format (binary, little-endian):
//   magic "TCTF", u32 version=1, u32 num_samples, u32 num_modalities,
//   per modality: u32 dim;
//   per sample: u32 sample_id, u32 label (0xFFFFFFFF = unlabelled), u32 T,
//     per modality: u8 present, then T*dim float64 values when present.
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_f64(std::string& out, double v) {
  std::uint64_t bits;
  static_assert(sizeof(bits) == sizeof(v));
  __builtin_memcpy(&bits, &v, 8);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

struct ByteReader {
  const std::string& buf;
  std::size_t pos = 0;

  bool need(std::size_t n, const char* what) {
    if (pos + n > buf.size()) {
      throw format_error(std::string("truncated input reading ") + what +
                         " at byte " + std::to_string(pos));
    }
    return true;
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return static_cast<std::uint8_t>(buf[pos++]);
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  double f64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 8;
    double d;
    __builtin_memcpy(&d, &v, 8);
    return d;
  }
};

inline std::string read_file(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw format_error("cannot open file: " + path);
  std::string buf;
  char chunk[65536];
  std::size_t n;
  while ((n = std::fread(chunk, 1, sizeof(chunk), f)) > 0) buf.append(chunk, n);
  std::fclose(f);
  return buf;
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw format_error("cannot open file for writing: " + path);
  if (std::fwrite(bytes.data(), 1, bytes.size(), f) != bytes.size()) {
    std::fclose(f);
    throw format_error("short write to " + path);
  }
  std::fclose(f);
}

}  // namespace detail

inline void save_features(const std::string& path,
                          const std::vector<MultiModalSample>& samples) {
  // Modality table: sorted union across samples, dims must agree.
  std::map<ModalityId, std::uint32_t> dims;
  for (const auto& s : samples) {
    for (const auto& [id, t] : s.modalities) {
      if (t.ndim() != 2) {
        throw parameter_error("save_features: modality tensors must be T x d");
      }
      auto it = dims.find(id);
      if (it == dims.end()) {
        dims.emplace(id, static_cast<std::uint32_t>(t.cols()));
      } else if (it->second != t.cols()) {
        throw parameter_error("save_features: modality " + std::to_string(id) +
                              " has inconsistent dims across samples");
      }
    }
  }
  std::string out;
  out += "TCTF";
  detail::put_u32(out, 1u);
  detail::put_u32(out, static_cast<std::uint32_t>(samples.size()));
  detail::put_u32(out, static_cast<std::uint32_t>(dims.size()));
  for (const auto& [id, d] : dims) {
    (void)id;
    detail::put_u32(out, d);
  }
  for (const auto& s : samples) {
    detail::put_u32(out, s.sample_id);
    detail::put_u32(out, s.label == kNoLabel ? 0xFFFFFFFFu
                                             : static_cast<std::uint32_t>(s.label));
    const std::uint32_t T = static_cast<std::uint32_t>(s.timesteps());
    detail::put_u32(out, T);
    for (const auto& [id, d] : dims) {
      auto it = s.modalities.find(id);
      if (it == s.modalities.end()) {
        out.push_back('\0');
        continue;
      }
      if (it->second.rows() != T) {
        throw parameter_error("save_features: sample " + std::to_string(s.sample_id) +
                              " has modalities with differing T");
      }
      out.push_back('\1');
      for (double v : it->second.data) detail::put_f64(out, v);
    }
  }
  detail::write_file(path, out);
}

inline std::vector<MultiModalSample> load_features(const std::string& path) {
  const std::string buf = detail::read_file(path);
  detail::ByteReader r{buf};
  if (buf.size() < 4 || buf.compare(0, 4, "TCTF") != 0) {
    throw format_error("feature file: bad magic at byte 0 (want \"TCTF\")");
  }
  r.pos = 4;
  const std::uint32_t version = r.u32("version");
  if (version != 1) {
    throw format_error("feature file: unsupported version " +
                       std::to_string(version) + " at byte 4");
  }
  const std::uint32_t num_samples = r.u32("sample count");
  const std::uint32_t num_modalities = r.u32("modality count");
  std::vector<std::uint32_t> dims(num_modalities);
  for (auto& d : dims) {
    d = r.u32("modality dim");
    if (d == 0) {
      throw format_error("feature file: zero modality dim at byte " +
                         std::to_string(r.pos - 4));
    }
  }
  std::vector<MultiModalSample> out;
  out.reserve(num_samples);
  for (std::uint32_t i = 0; i < num_samples; ++i) {
    MultiModalSample s;
    s.sample_id = r.u32("sample id");
    const std::uint32_t raw_label = r.u32("label");
    s.label = raw_label == 0xFFFFFFFFu ? kNoLabel : static_cast<int>(raw_label);
    const std::uint32_t T = r.u32("timesteps");
    if (T == 0) {
      throw format_error("feature file: sample " + std::to_string(s.sample_id) +
                         " declares 0 timesteps at byte " + std::to_string(r.pos - 4));
    }
    for (std::uint32_t m = 0; m < num_modalities; ++m) {
      const std::uint8_t present = r.u8("presence flag");
      if (present > 1) {
        throw format_error("feature file: invalid presence flag at byte " +
                           std::to_string(r.pos - 1));
      }
      if (!present) continue;
      Tensor t({T, dims[m]});
      for (auto& v : t.data) v = r.f64("feature payload");
      s.modalities.emplace(static_cast<ModalityId>(m), std::move(t));
    }
    out.push_back(std::move(s));
  }
  if (r.pos != buf.size()) {
    throw format_error("feature file: " + std::to_string(buf.size() - r.pos) +
                       " trailing bytes at byte " + std::to_string(r.pos));
  }
  return out;
}

}  // namespace tactfl
