#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "tactfl/data.hpp"
#include "tactfl/errors.hpp"
#include "tactfl/model.hpp"
#include "tactfl/rng.hpp"
#include "tactfl/tensor.hpp"

namespace tactfl {

// A temporal chunk of one sample, on the normalized timeline [0, 1).
struct TemporalSegment {
  std::uint32_t sample_id = 0;
  double start = 0.0;  // inclusive
  double end = 0.0;    // exclusive
  std::size_t first_step = 0;  // inclusive frame index
  std::size_t last_step = 0;   // exclusive frame index
};

struct SegmentBatch {
  std::vector<TemporalSegment> segments;
  std::vector<Tensor> features;  // [steps x d_m] per segment, same order
};

// Cuts each sample into a leading and a trailing window covering a fraction
// `window` of the timeline: [0, w) and [1-w, 1). Frame ranges are
// [0, floor(w*T)) and [T - floor(w*T), T). With w > 0.5 the two windows of a
// sample overlap, which is what gives the soft targets their signal.
inline SegmentBatch segment_batch(const std::vector<const MultiModalSample*>& samples,
                                  ModalityId modality, double window) {
  if (!(window >= 0.5 && window <= 1.0)) {
    throw parameter_error("segment_batch: window fraction must lie in [0.5, 1]");
  }
  SegmentBatch out;
  out.segments.reserve(samples.size() * 2);
  out.features.reserve(samples.size() * 2);
  for (const MultiModalSample* s : samples) {
    auto it = s->modalities.find(modality);
    if (it == s->modalities.end()) {
      throw parameter_error("segment_batch: sample " + std::to_string(s->sample_id) +
                            " lacks modality " + std::to_string(modality));
    }
    const Tensor& feat = it->second;
    const std::size_t T = feat.rows();
    const auto steps = static_cast<std::size_t>(std::floor(window * static_cast<double>(T)));
    if (steps < 1) {
      throw parameter_error("segment_batch: window covers no frames (T=" +
                            std::to_string(T) + ")");
    }
    auto slice = [&](std::size_t lo, std::size_t hi) {
      Tensor t({hi - lo, feat.cols()});
      for (std::size_t i = lo; i < hi; ++i) {
        for (std::size_t j = 0; j < feat.cols(); ++j) t(i - lo, j) = feat(i, j);
      }
      return t;
    };
    out.segments.push_back({s->sample_id, 0.0, window, 0, steps});
    out.features.push_back(slice(0, steps));
    out.segments.push_back({s->sample_id, 1.0 - window, 1.0, T - steps, T});
    out.features.push_back(slice(T - steps, T));
  }
  return out;
}

// Temporal intersection over union of two segments; zero across samples.
inline double tiou(const TemporalSegment& a, const TemporalSegment& b) {
  if (a.sample_id != b.sample_id) return 0.0;
  const double inter = std::min(a.end, b.end) - std::max(a.start, b.start);
  if (inter <= 0.0) return 0.0;
  const double uni = std::max(a.end, b.end) - std::min(a.start, b.start);
  return inter / uni;
}

// Row-normalized tIoU matrix. Each segment overlaps itself fully, so every
// row has positive mass and sums to exactly one.
inline Tensor soft_targets(const std::vector<TemporalSegment>& segments) {
  const std::size_t n = segments.size();
  if (n == 0) throw parameter_error("soft_targets: empty segment list");
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double v = tiou(segments[i], segments[j]);
      t(i, j) = v;
      row += v;
    }
    for (std::size_t j = 0; j < n; ++j) t(i, j) /= row;
  }
  return t;
}

struct ContrastiveResult {
  double loss = 0.0;
  Tensor grad_a;  // [n x d_e], d(loss)/d(embeddings_a)
  Tensor grad_b;  // [n x d_e]
};

namespace detail {

// Pairwise cosine similarity between the rows of a and b, with each row's
// norm kept for the gradient.
inline void cosine_matrix(const Tensor& a, const Tensor& b, Tensor& sim,
                          std::vector<double>& norm_a, std::vector<double>& norm_b) {
  const std::size_t n = a.rows(), d = a.cols();
  norm_a.assign(n, 0.0);
  norm_b.assign(n, 0.0);
  std::vector<double> sq_a(n, 0.0), sq_b(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double sa = 0.0, sb = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      sa += a(i, k) * a(i, k);
      sb += b(i, k) * b(i, k);
    }
    sq_a[i] = sa;
    sq_b[i] = sb;
    norm_a[i] = std::sqrt(sa);
    norm_b[i] = std::sqrt(sb);
  }
  sim = Tensor({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (sq_a[i] == 0.0 || sq_b[j] == 0.0) {
        sim(i, j) = 0.0;
        continue;
      }
      // sqrt of the product so that bitwise-equal rows give exactly 1:
      // uv == sq_a == sq_b and sqrt(fl(s*s)) == s under correct rounding.
      double nn = std::sqrt(sq_a[i] * sq_b[j]);
      if (!std::isfinite(nn) || nn == 0.0) nn = norm_a[i] * norm_b[j];
      double uv = 0.0;
      for (std::size_t k = 0; k < d; ++k) uv += a(i, k) * b(j, k);
      sim(i, j) = std::clamp(uv / nn, -1.0, 1.0);
    }
  }
}

}  // namespace detail

// Soft-target contrastive loss over two aligned embedding sets:
//   l(i,j) = -T(i,j) * log softmax_j(S(i,:) / tau)
// summed over both directions (rows of S for a->b, rows of S^T with targets
// T^T for b->a) and scaled by 1 / (2n) with n = number of segments, so a
// batch of N samples divides by 2 * 2N.
inline ContrastiveResult contrastive_loss_grad(const Tensor& emb_a, const Tensor& emb_b,
                                               const Tensor& targets, double tau) {
  if (emb_a.ndim() != 2 || emb_b.ndim() != 2 || !emb_a.same_shape(emb_b)) {
    throw shape_error("contrastive_loss_grad: embedding sets " + shape_str(emb_a.shape) +
                      " and " + shape_str(emb_b.shape) + " must match");
  }
  const std::size_t n = emb_a.rows(), d = emb_a.cols();
  if (n == 0) throw parameter_error("contrastive_loss_grad: empty batch");
  if (targets.ndim() != 2 || targets.rows() != n || targets.cols() != n) {
    throw shape_error("contrastive_loss_grad: targets " + shape_str(targets.shape) +
                      " must be [" + std::to_string(n) + " x " + std::to_string(n) + "]");
  }
  if (!(tau > 0.0)) throw parameter_error("contrastive_loss_grad: tau must be > 0");

  Tensor sim;
  std::vector<double> norm_a, norm_b;
  detail::cosine_matrix(emb_a, emb_b, sim, norm_a, norm_b);

  Tensor scaled = sim;
  for (auto& v : scaled.data) v /= tau;
  const Tensor p_ab = row_softmax(scaled, 1.0);  // softmax over j for fixed i

  Tensor scaled_t({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) scaled_t(i, j) = sim(j, i) / tau;
  }
  const Tensor p_ba = row_softmax(scaled_t, 1.0);  // softmax over i for fixed j

  const double scale = 1.0 / (2.0 * static_cast<double>(n));
  double loss = 0.0;
  // d(loss)/d(S(i,j)), folding in both directions.
  Tensor dsim({n, n});
  // Per-row and per-column target mass; both are 1 for row-normalized soft
  // targets but the gradient stays exact for arbitrary nonnegative targets.
  std::vector<double> row_mass(n, 0.0), col_mass(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      row_mass[i] += targets(i, j);
      col_mass[j] += targets(i, j);
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double t = targets(i, j);
      if (t > 0.0) {
        loss -= t * std::log(std::max(p_ab(i, j), 1e-300));
        loss -= t * std::log(std::max(p_ba(j, i), 1e-300));
      }
      dsim(i, j) = scale / tau *
                   ((p_ab(i, j) * row_mass[i] - t) + (p_ba(j, i) * col_mass[j] - t));
    }
  }
  loss *= scale;

  ContrastiveResult res;
  res.loss = loss;
  res.grad_a = Tensor({n, d});
  res.grad_b = Tensor({n, d});
  // dS(i,j)/da_i = (b_j / |b_j| - S * a_i / |a_i|) / |a_i|, and symmetrically
  // for b_j. Zero-norm rows have zero similarity everywhere and get no
  // gradient.
  for (std::size_t i = 0; i < n; ++i) {
    if (norm_a[i] == 0.0) continue;
    for (std::size_t j = 0; j < n; ++j) {
      const double g = dsim(i, j);
      if (g == 0.0 || norm_b[j] == 0.0) continue;
      const double s = sim(i, j);
      for (std::size_t k = 0; k < d; ++k) {
        const double bh = emb_b(j, k) / norm_b[j];
        const double ah = emb_a(i, k) / norm_a[i];
        res.grad_a(i, k) += g * (bh - s * ah) / norm_a[i];
        res.grad_b(j, k) += g * (ah - s * bh) / norm_b[j];
      }
    }
  }
  return res;
}

// Stand-in partner for a modality that is missing on a client: the available
// embedding plus small gaussian noise, so the contrastive pair stays defined.
inline Tensor pseudo_pair(const Tensor& emb, SplitMix64& rng, double sigma = 0.01) {
  if (!(sigma >= 0.0)) throw parameter_error("pseudo_pair: sigma must be >= 0");
  Tensor out = emb;
  for (auto& v : out.data) v += sigma * rng.next_gaussian();
  return out;
}

}  // namespace tactfl
