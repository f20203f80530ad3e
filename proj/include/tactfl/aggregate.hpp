#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "tactfl/data.hpp"
#include "tactfl/errors.hpp"
#include "tactfl/model.hpp"
#include "tactfl/tensor.hpp"

namespace tactfl {

struct AggregationWeights {
  std::vector<double> values;
};

inline std::vector<double> normalized_weights(const std::vector<std::size_t>& counts) {
  if (counts.empty()) throw parameter_error("normalized_weights: empty counts");
  double total = 0.0;
  for (std::size_t c : counts) total += static_cast<double>(c);
  if (total <= 0.0) throw parameter_error("normalized_weights: all counts are zero");
  std::vector<double> w(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) w[i] = static_cast<double>(counts[i]) / total;
  return w;
}

namespace detail {

inline void validate_weights(std::size_t n_models, const std::vector<double>& weights) {
  if (n_models == 0) throw parameter_error("aggregate: no models");
  if (weights.size() != n_models) {
    throw parameter_error("aggregate: " + std::to_string(n_models) + " models but " +
                          std::to_string(weights.size()) + " weights");
  }
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw parameter_error("aggregate: negative or NaN weight");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-6) {
    throw parameter_error("aggregate: weights sum to " + std::to_string(sum) +
                          ", expected 1");
  }
}

// Coordinate-wise weighted sum over clients in ascending index order with
// Kahan compensation, so the result is independent of worker count and
// stable under permutation-free reruns.
inline Tensor weighted_sum(const std::vector<Tensor>& flats,
                           const std::vector<double>& weights) {
  for (std::size_t i = 1; i < flats.size(); ++i) {
    if (flats[i].shape != flats[0].shape) {
      throw shape_error("aggregate: model " + std::to_string(i) + " has shape " +
                        shape_str(flats[i].shape) + ", expected " +
                        shape_str(flats[0].shape));
    }
  }
  Tensor out(flats[0].shape);
  const std::size_t n = flats[0].size();
  for (std::size_t k = 0; k < n; ++k) {
    double sum = 0.0, comp = 0.0;
    for (std::size_t i = 0; i < flats.size(); ++i) {
      const double y = weights[i] * flats[i].data[k] - comp;
      const double t = sum + y;
      comp = (t - sum) - y;
      sum = t;
    }
    out.data[k] = sum;
  }
  return out;
}

}  // namespace detail

inline Tensor fedavg(const std::vector<Tensor>& flats, const std::vector<double>& weights) {
  detail::validate_weights(flats.size(), weights);
  return detail::weighted_sum(flats, weights);
}

// Server-side momentum state for fedopt. A fresh state has zero momentum.
struct ServerOptState {
  Tensor momentum;
  double beta = 0.9;
  double server_lr = 1.0;
};

// Server momentum update:
//   avg = fedavg(clients)
//   v'  = beta * v + (avg - g)
//   g'  = g + server_lr * v'
// The new global model is computed in the algebraically equal arrangement
//   g' = (1 - server_lr) * g + server_lr * (beta * v + avg)
// so with beta = 0 and server_lr = 1 it reproduces fedavg bit for bit.
inline Tensor fedopt(const Tensor& global_flat, const std::vector<Tensor>& flats,
                     const std::vector<double>& weights, ServerOptState& state) {
  detail::validate_weights(flats.size(), weights);
  if (flats[0].shape != global_flat.shape) {
    throw shape_error("fedopt: client shape " + shape_str(flats[0].shape) +
                      " does not match global " + shape_str(global_flat.shape));
  }
  if (!(state.server_lr > 0.0)) throw parameter_error("fedopt: server_lr must be > 0");
  if (!(state.beta >= 0.0 && state.beta < 1.0)) {
    throw parameter_error("fedopt: beta must lie in [0, 1)");
  }
  if (state.momentum.size() == 0) state.momentum = Tensor(global_flat.shape);
  if (state.momentum.shape != global_flat.shape) {
    throw shape_error("fedopt: momentum shape " + shape_str(state.momentum.shape) +
                      " does not match global " + shape_str(global_flat.shape));
  }
  const Tensor avg = detail::weighted_sum(flats, weights);
  Tensor out(global_flat.shape);
  for (std::size_t k = 0; k < out.size(); ++k) {
    const double v_old = state.momentum.data[k];
    out.data[k] = (1.0 - state.server_lr) * global_flat.data[k] +
                  state.server_lr * (state.beta * v_old + avg.data[k]);
    state.momentum.data[k] = state.beta * v_old + (avg.data[k] - global_flat.data[k]);
  }
  return out;
}

// Weights from a client-by-client similarity matrix: entries below zero are
// clipped to zero, each client scores the sum of its row, and scores are
// normalized by the sum of all entries. A zero matrix falls back to uniform.
inline AggregationWeights sma_weights_from_similarity(const Tensor& similarity,
                                                      bool include_diagonal = true) {
  if (similarity.ndim() != 2 || similarity.rows() != similarity.cols()) {
    throw shape_error("sma_weights: similarity must be square, got " +
                      shape_str(similarity.shape));
  }
  const std::size_t n = similarity.rows();
  if (n == 0) throw parameter_error("sma_weights: empty similarity matrix");
  std::vector<double> row_sum(n, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (!include_diagonal && i == j) continue;
      const double v = std::max(similarity(i, j), 0.0);
      row_sum[i] += v;
      total += v;
    }
  }
  AggregationWeights w;
  w.values.assign(n, 1.0 / static_cast<double>(n));
  if (total > 0.0) {
    for (std::size_t i = 0; i < n; ++i) w.values[i] = row_sum[i] / total;
  }
  return w;
}

// Mean fused embedding of the proxy set under each client model, then the
// pairwise cosine similarity of those means.
inline Tensor sma_similarity(const std::vector<ModelParams>& clients,
                             const std::vector<const MultiModalSample*>& proxy) {
  if (clients.empty()) throw parameter_error("sma_similarity: no client models");
  if (proxy.empty()) throw parameter_error("sma_similarity: empty proxy set");
  const std::size_t n = clients.size();
  const std::size_t d = clients[0].fused_dim();
  Tensor means({n, d});
  for (std::size_t i = 0; i < n; ++i) {
    Tensor acc({d});
    for (const MultiModalSample* s : proxy) {
      const Tensor e = embed_sample(clients[i], *s);
      for (std::size_t k = 0; k < d; ++k) acc(k) += e(k);
    }
    for (std::size_t k = 0; k < d; ++k) {
      means(i, k) = acc(k) / static_cast<double>(proxy.size());
    }
  }
  Tensor sim({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    Tensor vi({d});
    for (std::size_t k = 0; k < d; ++k) vi(k) = means(i, k);
    for (std::size_t j = 0; j < n; ++j) {
      Tensor vj({d});
      for (std::size_t k = 0; k < d; ++k) vj(k) = means(j, k);
      sim(i, j) = cosine(vi, vj);
    }
  }
  return sim;
}

struct SmaResult {
  ModelParams model;
  AggregationWeights weights;
  Tensor similarity;
};

// Weighted blend of the encoder region only. Local training freezes the
// head, so client heads must all equal the broadcast head, which is carried
// over unchanged.
inline ModelParams sma_aggregate(const std::vector<ModelParams>& clients,
                                 const AggregationWeights& weights) {
  if (clients.empty()) throw parameter_error("sma_aggregate: no client models");
  for (std::size_t i = 1; i < clients.size(); ++i) {
    if (!heads_equal(clients[i].head, clients[0].head)) {
      throw protocol_error("sma_aggregate: client " + std::to_string(i) +
                           " returned a modified head; heads are frozen during "
                           "contrastive local training");
    }
  }
  detail::validate_weights(clients.size(), weights.values);
  const ShapeManifest manifest = manifest_of(clients[0]);
  std::vector<Tensor> flats;
  flats.reserve(clients.size());
  for (const auto& m : clients) flats.push_back(flatten(m));
  Tensor blended = detail::weighted_sum(flats, weights.values);
  // Restore the shared head region untouched.
  for (std::size_t k = manifest.encoder_total(); k < blended.size(); ++k) {
    blended.data[k] = flats[0].data[k];
  }
  return unflatten(blended, manifest);
}

// Similarity-guided aggregation: score each client model by its mean proxy
// embedding, then blend with the resulting weights.
inline SmaResult sma_aggregate(const std::vector<ModelParams>& clients,
                               const std::vector<const MultiModalSample*>& proxy,
                               bool include_diagonal = true) {
  SmaResult res;
  res.similarity = sma_similarity(clients, proxy);
  res.weights = sma_weights_from_similarity(res.similarity, include_diagonal);
  res.model = sma_aggregate(clients, res.weights);
  return res;
}

}  // namespace tactfl
