#pragma once

#include <cstdint>
#include <cstring>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "tactfl/data.hpp"
#include "tactfl/errors.hpp"
#include "tactfl/rng.hpp"
#include "tactfl/tensor.hpp"

namespace tactfl {

// Two-layer encoder over a temporal feature segment:
//   embed = W2^T relu(mean_t(W1^T x_t + b1)) + b2
// The temporal mean commutes with the first linear layer, so the forward
// pass reduces to the segment's mean feature vector.
struct EncoderParams {
  Tensor in_weight;   // [d_m x h]
  Tensor in_bias;     // [h]
  Tensor out_weight;  // [h x d_e]
  Tensor out_bias;    // [d_e]

  std::size_t input_dim() const { return in_weight.shape[0]; }
  std::size_t hidden_dim() const { return in_weight.shape[1]; }
  std::size_t embed_dim() const { return out_weight.shape[1]; }
};

struct HeadParams {
  Tensor weight;  // [d_fused x K]
  Tensor bias;    // [K]

  std::size_t input_dim() const { return weight.shape[0]; }
  std::size_t num_classes() const { return weight.shape[1]; }
};

struct ModelParams {
  std::map<ModalityId, EncoderParams> encoders;
  HeadParams head;

  std::size_t fused_dim() const {
    std::size_t d = 0;
    for (const auto& [id, enc] : encoders) {
      (void)id;
      d += enc.embed_dim();
    }
    return d;
  }
  std::size_t num_classes() const { return head.num_classes(); }
};

struct ModelConfig {
  std::map<ModalityId, std::size_t> input_dims;
  std::size_t hidden_dim = 32;
  std::size_t embed_dim = 16;
  std::size_t num_classes = 4;
  std::uint64_t seed = 1;
};

namespace detail {

inline void init_uniform(Tensor& t, std::size_t fan_in, std::uint64_t seed) {
  SplitMix64 rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& v : t.data) v = rng.next_uniform(-bound, bound);
}

}  // namespace detail

// Every parameter block draws from its own stream, keyed by block name, so
// initialization does not depend on construction order.
inline ModelParams init_model(const ModelConfig& cfg) {
  if (cfg.input_dims.empty()) throw parameter_error("init_model: no modalities");
  if (cfg.hidden_dim < 1 || cfg.embed_dim < 1 || cfg.num_classes < 1) {
    throw parameter_error("init_model: dims and classes must be >= 1");
  }
  ModelParams m;
  for (const auto& [id, d_in] : cfg.input_dims) {
    EncoderParams enc;
    enc.in_weight = Tensor({d_in, cfg.hidden_dim});
    enc.in_bias = Tensor({cfg.hidden_dim});
    enc.out_weight = Tensor({cfg.hidden_dim, cfg.embed_dim});
    enc.out_bias = Tensor({cfg.embed_dim});
    const std::string prefix = "enc" + std::to_string(id) + ".";
    detail::init_uniform(enc.in_weight, d_in,
                         derive_seed(cfg.seed, fnv1a64(prefix + "in_weight")));
    detail::init_uniform(enc.in_bias, d_in,
                         derive_seed(cfg.seed, fnv1a64(prefix + "in_bias")));
    detail::init_uniform(enc.out_weight, cfg.hidden_dim,
                         derive_seed(cfg.seed, fnv1a64(prefix + "out_weight")));
    detail::init_uniform(enc.out_bias, cfg.hidden_dim,
                         derive_seed(cfg.seed, fnv1a64(prefix + "out_bias")));
    m.encoders.emplace(id, std::move(enc));
  }
  const std::size_t d_fused = m.fused_dim();
  m.head.weight = Tensor({d_fused, cfg.num_classes});
  m.head.bias = Tensor({cfg.num_classes});
  detail::init_uniform(m.head.weight, d_fused,
                       derive_seed(cfg.seed, fnv1a64("head.weight")));
  detail::init_uniform(m.head.bias, d_fused,
                       derive_seed(cfg.seed, fnv1a64("head.bias")));
  return m;
}

// Forward intermediates needed by the backward pass.
struct EncodeCache {
  Tensor mean_input;      // [d_m] temporal mean of the segment
  Tensor pre_activation;  // [h]
  Tensor hidden;          // [h] relu(pre_activation)
};

inline Tensor encode_with_cache(const EncoderParams& enc, const Tensor& segment,
                                EncodeCache* cache) {
  if (segment.ndim() != 2 || segment.cols() != enc.input_dim()) {
    throw shape_error("encode: segment " + shape_str(segment.shape) +
                      " does not match encoder input dim " +
                      std::to_string(enc.input_dim()));
  }
  const std::size_t T = segment.rows();
  if (T == 0) throw parameter_error("encode: empty segment");
  const std::size_t d = enc.input_dim(), h = enc.hidden_dim(), e = enc.embed_dim();

  Tensor mean({d});
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t j = 0; j < d; ++j) mean(j) += segment(t, j);
  }
  for (auto& v : mean.data) v /= static_cast<double>(T);

  Tensor pre({h});
  for (std::size_t k = 0; k < h; ++k) {
    double v = enc.in_bias(k);
    for (std::size_t j = 0; j < d; ++j) v += enc.in_weight(j, k) * mean(j);
    pre(k) = v;
  }
  Tensor hidden = pre;
  for (auto& v : hidden.data) v = v > 0.0 ? v : 0.0;

  Tensor out({e});
  for (std::size_t k = 0; k < e; ++k) {
    double v = enc.out_bias(k);
    for (std::size_t j = 0; j < h; ++j) v += enc.out_weight(j, k) * hidden(j);
    out(k) = v;
  }
  if (cache) {
    cache->mean_input = std::move(mean);
    cache->pre_activation = std::move(pre);
    cache->hidden = std::move(hidden);
  }
  return out;
}

inline Tensor encode(const EncoderParams& enc, const Tensor& segment) {
  return encode_with_cache(enc, segment, nullptr);
}

inline EncoderParams zero_grad_like(const EncoderParams& enc) {
  EncoderParams g;
  g.in_weight = Tensor(enc.in_weight.shape);
  g.in_bias = Tensor(enc.in_bias.shape);
  g.out_weight = Tensor(enc.out_weight.shape);
  g.out_bias = Tensor(enc.out_bias.shape);
  return g;
}

inline HeadParams zero_grad_like(const HeadParams& head) {
  HeadParams g;
  g.weight = Tensor(head.weight.shape);
  g.bias = Tensor(head.bias.shape);
  return g;
}

// Accumulates d(loss)/d(encoder params) for one encoded segment into `grad`,
// given d_embed = d(loss)/d(embedding).
inline void encoder_backward(const EncoderParams& enc, const EncodeCache& cache,
                             const Tensor& d_embed, EncoderParams& grad) {
  const std::size_t d = enc.input_dim(), h = enc.hidden_dim(), e = enc.embed_dim();
  for (std::size_t k = 0; k < e; ++k) grad.out_bias(k) += d_embed(k);
  Tensor d_hidden({h});
  for (std::size_t j = 0; j < h; ++j) {
    const double r = cache.hidden(j);
    double acc = 0.0;
    for (std::size_t k = 0; k < e; ++k) {
      grad.out_weight(j, k) += r * d_embed(k);
      acc += enc.out_weight(j, k) * d_embed(k);
    }
    d_hidden(j) = acc;
  }
  for (std::size_t j = 0; j < h; ++j) {
    const double dp = cache.pre_activation(j) > 0.0 ? d_hidden(j) : 0.0;
    if (dp == 0.0) continue;
    grad.in_bias(j) += dp;
    for (std::size_t i = 0; i < d; ++i) {
      grad.in_weight(i, j) += cache.mean_input(i) * dp;
    }
  }
}

// Concatenation fusion in ascending modality order; a modality absent from
// the mask (or missing from the embedding map) contributes a zero block.
inline Tensor fuse(const ModelParams& model,
                   const std::map<ModalityId, Tensor>& embeddings,
                   const std::map<ModalityId, bool>* present = nullptr) {
  Tensor out({model.fused_dim()});
  std::size_t offset = 0;
  bool any = false;
  for (const auto& [id, enc] : model.encoders) {
    const std::size_t d_e = enc.embed_dim();
    bool on = true;
    if (present) {
      auto it = present->find(id);
      on = it != present->end() && it->second;
    }
    auto emb = embeddings.find(id);
    if (on && emb != embeddings.end()) {
      if (emb->second.size() != d_e) {
        throw shape_error("fuse: embedding for modality " + std::to_string(id) +
                          " is " + shape_str(emb->second.shape) + ", expected " +
                          std::to_string(d_e));
      }
      for (std::size_t k = 0; k < d_e; ++k) out(offset + k) = emb->second(k);
      any = true;
    }
    offset += d_e;
  }
  if (!any) throw parameter_error("fuse: no modality present");
  return out;
}

// Encode all usable modalities of a sample over its full timeline and fuse.
inline Tensor embed_sample(const ModelParams& model, const MultiModalSample& sample,
                           const std::map<ModalityId, bool>* present = nullptr) {
  std::map<ModalityId, Tensor> embeddings;
  for (const auto& [id, enc] : model.encoders) {
    if (present) {
      auto it = present->find(id);
      if (it == present->end() || !it->second) continue;
    }
    auto feat = sample.modalities.find(id);
    if (feat == sample.modalities.end()) continue;
    embeddings.emplace(id, encode(enc, feat->second));
  }
  return fuse(model, embeddings, nullptr);
}

inline Tensor head_forward(const HeadParams& head, const Tensor& fused) {
  if (fused.size() != head.input_dim()) {
    throw shape_error("head_forward: fused " + shape_str(fused.shape) +
                      " does not match head input dim " +
                      std::to_string(head.input_dim()));
  }
  const std::size_t k = head.num_classes();
  Tensor logits({k});
  for (std::size_t c = 0; c < k; ++c) {
    double v = head.bias(c);
    for (std::size_t j = 0; j < fused.size(); ++j) v += head.weight(j, c) * fused(j);
    logits(c) = v;
  }
  return logits;
}

struct HeadGrad {
  double loss = 0.0;
  Tensor d_weight;
  Tensor d_bias;
  Tensor d_fused;  // [B x d_fused], for callers that also train encoders
};

// Mean softmax cross-entropy over a batch of fused embeddings.
inline HeadGrad head_loss_grad(const HeadParams& head, const Tensor& fused_batch,
                               const std::vector<int>& labels) {
  if (fused_batch.ndim() != 2 || fused_batch.cols() != head.input_dim()) {
    throw shape_error("head_loss_grad: batch " + shape_str(fused_batch.shape) +
                      " does not match head input dim " +
                      std::to_string(head.input_dim()));
  }
  const std::size_t B = fused_batch.rows();
  if (B == 0 || labels.size() != B) {
    throw parameter_error("head_loss_grad: batch and labels must be nonempty and equal");
  }
  const std::size_t K = head.num_classes();
  HeadGrad g;
  g.d_weight = Tensor(head.weight.shape);
  g.d_bias = Tensor(head.bias.shape);
  g.d_fused = Tensor(fused_batch.shape);

  const double inv_b = 1.0 / static_cast<double>(B);
  std::vector<double> probs(K);
  for (std::size_t b = 0; b < B; ++b) {
    const int y = labels[b];
    if (y < 0 || static_cast<std::size_t>(y) >= K) {
      throw parameter_error("head_loss_grad: label " + std::to_string(y) +
                            " outside [0, " + std::to_string(K) + ")");
    }
    double mx = -1e300;
    for (std::size_t c = 0; c < K; ++c) {
      double v = head.bias(c);
      for (std::size_t j = 0; j < fused_batch.cols(); ++j) {
        v += head.weight(j, c) * fused_batch(b, j);
      }
      probs[c] = v;
      mx = std::max(mx, v);
    }
    double denom = 0.0;
    for (auto& v : probs) {
      v = std::exp(v - mx);
      denom += v;
    }
    for (auto& v : probs) v /= denom;
    g.loss -= std::log(std::max(probs[static_cast<std::size_t>(y)], 1e-300)) * inv_b;

    for (std::size_t c = 0; c < K; ++c) {
      const double dl = (probs[c] - (static_cast<std::size_t>(y) == c ? 1.0 : 0.0)) * inv_b;
      g.d_bias(c) += dl;
      for (std::size_t j = 0; j < fused_batch.cols(); ++j) {
        g.d_weight(j, c) += fused_batch(b, j) * dl;
        g.d_fused(b, j) += head.weight(j, c) * dl;
      }
    }
  }
  return g;
}

struct ModelGrad {
  double loss = 0.0;
  std::map<ModalityId, EncoderParams> encoders;
  HeadParams head;
};

// Supervised cross-entropy gradients through head, fusion, and every present
// encoder. Absent modalities contribute zero embedding blocks and receive no
// gradient. Labels come from the samples themselves.
inline ModelGrad supervised_loss_grad(const ModelParams& model,
                                      const std::vector<const MultiModalSample*>& batch,
                                      const std::map<ModalityId, bool>* present = nullptr) {
  if (batch.empty()) throw parameter_error("supervised_loss_grad: empty batch");
  const std::size_t B = batch.size();
  const std::size_t d_fused = model.fused_dim();

  Tensor fused_batch({B, d_fused});
  std::vector<int> labels(B);
  // caches[b][id] — present modalities only
  std::vector<std::map<ModalityId, EncodeCache>> caches(B);

  for (std::size_t b = 0; b < B; ++b) {
    const MultiModalSample& s = *batch[b];
    labels[b] = s.label;
    std::map<ModalityId, Tensor> embeddings;
    for (const auto& [id, enc] : model.encoders) {
      if (present) {
        auto it = present->find(id);
        if (it == present->end() || !it->second) continue;
      }
      auto feat = s.modalities.find(id);
      if (feat == s.modalities.end()) continue;
      EncodeCache cache;
      embeddings.emplace(id, encode_with_cache(enc, feat->second, &cache));
      caches[b].emplace(id, std::move(cache));
    }
    Tensor fused = fuse(model, embeddings, nullptr);
    for (std::size_t j = 0; j < d_fused; ++j) fused_batch(b, j) = fused(j);
  }

  HeadGrad hg = head_loss_grad(model.head, fused_batch, labels);

  ModelGrad g;
  g.loss = hg.loss;
  g.head.weight = std::move(hg.d_weight);
  g.head.bias = std::move(hg.d_bias);
  for (const auto& [id, enc] : model.encoders) g.encoders.emplace(id, zero_grad_like(enc));

  for (std::size_t b = 0; b < B; ++b) {
    std::size_t offset = 0;
    for (const auto& [id, enc] : model.encoders) {
      const std::size_t d_e = enc.embed_dim();
      auto cache = caches[b].find(id);
      if (cache != caches[b].end()) {
        Tensor d_embed({d_e});
        for (std::size_t k = 0; k < d_e; ++k) d_embed(k) = hg.d_fused(b, offset + k);
        encoder_backward(enc, cache->second, d_embed, g.encoders.at(id));
      }
      offset += d_e;
    }
  }
  return g;
}

inline void sgd_update(EncoderParams& p, const EncoderParams& g, double lr) {
  if (lr == 0.0) return;
  for (std::size_t i = 0; i < p.in_weight.size(); ++i) p.in_weight(i) -= lr * g.in_weight(i);
  for (std::size_t i = 0; i < p.in_bias.size(); ++i) p.in_bias(i) -= lr * g.in_bias(i);
  for (std::size_t i = 0; i < p.out_weight.size(); ++i) p.out_weight(i) -= lr * g.out_weight(i);
  for (std::size_t i = 0; i < p.out_bias.size(); ++i) p.out_bias(i) -= lr * g.out_bias(i);
}

inline void sgd_update(HeadParams& p, const HeadParams& g, double lr) {
  if (lr == 0.0) return;
  for (std::size_t i = 0; i < p.weight.size(); ++i) p.weight(i) -= lr * g.weight(i);
  for (std::size_t i = 0; i < p.bias.size(); ++i) p.bias(i) -= lr * g.bias(i);
}

// ---------------------------------------------------------------------------
// Flat parameter view. Block order: encoders by ascending modality id, each
// as in_weight, in_bias, out_weight, out_bias; then head.weight, head.bias.
// ---------------------------------------------------------------------------

struct ShapeManifest {
  std::vector<std::pair<std::string, std::vector<std::size_t>>> blocks;

  std::size_t total() const {
    std::size_t n = 0;
    for (const auto& [name, shape] : blocks) {
      (void)name;
      n += shape_count(shape);
    }
    return n;
  }
  // Flat length of the encoder region (encoder blocks always come first).
  std::size_t encoder_total() const {
    std::size_t n = 0;
    for (const auto& [name, shape] : blocks) {
      if (name.rfind("enc", 0) == 0) n += shape_count(shape);
    }
    return n;
  }
  bool operator==(const ShapeManifest&) const = default;
};

inline ShapeManifest manifest_of(const ModelParams& m) {
  ShapeManifest man;
  for (const auto& [id, enc] : m.encoders) {
    const std::string prefix = "enc" + std::to_string(id) + ".";
    man.blocks.emplace_back(prefix + "in_weight", enc.in_weight.shape);
    man.blocks.emplace_back(prefix + "in_bias", enc.in_bias.shape);
    man.blocks.emplace_back(prefix + "out_weight", enc.out_weight.shape);
    man.blocks.emplace_back(prefix + "out_bias", enc.out_bias.shape);
  }
  man.blocks.emplace_back("head.weight", m.head.weight.shape);
  man.blocks.emplace_back("head.bias", m.head.bias.shape);
  return man;
}

inline Tensor flatten(const ModelParams& m) {
  Tensor flat({manifest_of(m).total()});
  std::size_t pos = 0;
  auto emit = [&](const Tensor& t) {
    std::memcpy(flat.data.data() + pos, t.data.data(), t.size() * sizeof(double));
    pos += t.size();
  };
  for (const auto& [id, enc] : m.encoders) {
    (void)id;
    emit(enc.in_weight);
    emit(enc.in_bias);
    emit(enc.out_weight);
    emit(enc.out_bias);
  }
  emit(m.head.weight);
  emit(m.head.bias);
  return flat;
}

inline ModelParams unflatten(const Tensor& flat, const ShapeManifest& manifest) {
  if (flat.size() != manifest.total()) {
    throw format_error("unflatten: flat vector holds " + std::to_string(flat.size()) +
                       " values but manifest expects " +
                       std::to_string(manifest.total()));
  }
  ModelParams m;
  std::size_t pos = 0;
  auto take = [&](const std::vector<std::size_t>& shape) {
    Tensor t(shape);
    std::memcpy(t.data.data(), flat.data.data() + pos, t.size() * sizeof(double));
    pos += t.size();
    return t;
  };
  for (std::size_t i = 0; i < manifest.blocks.size();) {
    const std::string& name = manifest.blocks[i].first;
    if (name.rfind("enc", 0) == 0) {
      const std::size_t dot = name.find('.');
      if (dot == std::string::npos || i + 3 >= manifest.blocks.size()) {
        throw format_error("unflatten: malformed encoder block group at '" + name + "'");
      }
      const ModalityId id = std::stoi(name.substr(3, dot - 3));
      EncoderParams enc;
      enc.in_weight = take(manifest.blocks[i].second);
      enc.in_bias = take(manifest.blocks[i + 1].second);
      enc.out_weight = take(manifest.blocks[i + 2].second);
      enc.out_bias = take(manifest.blocks[i + 3].second);
      m.encoders.emplace(id, std::move(enc));
      i += 4;
    } else if (name == "head.weight") {
      m.head.weight = take(manifest.blocks[i].second);
      i += 1;
    } else if (name == "head.bias") {
      m.head.bias = take(manifest.blocks[i].second);
      i += 1;
    } else {
      throw format_error("unflatten: unknown block '" + name + "'");
    }
  }
  return m;
}

inline bool tensors_equal(const Tensor& a, const Tensor& b) {
  if (a.shape != b.shape) return false;
  return std::memcmp(a.data.data(), b.data.data(), a.size() * sizeof(double)) == 0;
}

inline bool heads_equal(const HeadParams& a, const HeadParams& b) {
  return tensors_equal(a.weight, b.weight) && tensors_equal(a.bias, b.bias);
}

inline bool encoders_equal(const EncoderParams& a, const EncoderParams& b) {
  return tensors_equal(a.in_weight, b.in_weight) && tensors_equal(a.in_bias, b.in_bias) &&
         tensors_equal(a.out_weight, b.out_weight) && tensors_equal(a.out_bias, b.out_bias);
}

inline bool models_equal(const ModelParams& a, const ModelParams& b) {
  if (a.encoders.size() != b.encoders.size()) return false;
  auto ia = a.encoders.begin();
  auto ib = b.encoders.begin();
  for (; ia != a.encoders.end(); ++ia, ++ib) {
    if (ia->first != ib->first || !encoders_equal(ia->second, ib->second)) return false;
  }
  return heads_equal(a.head, b.head);
}

// ---------------------------------------------------------------------------
// Checkpoint format (binary, little-endian):
//   magic "TCKM", u32 version=1, u32 num_blocks,
//   per block: u32 name length, name bytes, u32 ndim, per dim u32;
//   then the flat float64 payload in block order.
// ---------------------------------------------------------------------------

inline void save_model(const std::string& path, const ModelParams& m) {
  const ShapeManifest man = manifest_of(m);
  const Tensor flat = flatten(m);
  std::string out = "TCKM";
  detail::put_u32(out, 1u);
  detail::put_u32(out, static_cast<std::uint32_t>(man.blocks.size()));
  for (const auto& [name, shape] : man.blocks) {
    detail::put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    detail::put_u32(out, static_cast<std::uint32_t>(shape.size()));
    for (std::size_t d : shape) detail::put_u32(out, static_cast<std::uint32_t>(d));
  }
  for (double v : flat.data) detail::put_f64(out, v);
  detail::write_file(path, out);
}

inline ModelParams load_model(const std::string& path,
                              const ShapeManifest* expected = nullptr) {
  const std::string buf = detail::read_file(path);
  if (buf.size() < 4 || buf.compare(0, 4, "TCKM") != 0) {
    throw format_error("checkpoint: bad magic at byte 0 (want \"TCKM\")");
  }
  detail::ByteReader r{buf};
  r.pos = 4;
  const std::uint32_t version = r.u32("version");
  if (version != 1) {
    throw format_error("checkpoint: unsupported version " + std::to_string(version));
  }
  const std::uint32_t num_blocks = r.u32("block count");
  ShapeManifest man;
  for (std::uint32_t i = 0; i < num_blocks; ++i) {
    const std::uint32_t name_len = r.u32("name length");
    r.need(name_len, "block name");
    std::string name = buf.substr(r.pos, name_len);
    r.pos += name_len;
    const std::uint32_t ndim = r.u32("ndim");
    std::vector<std::size_t> shape(ndim);
    for (auto& d : shape) d = r.u32("dim");
    man.blocks.emplace_back(std::move(name), std::move(shape));
  }
  if (expected && !(man == *expected)) {
    throw format_error("checkpoint: manifest does not match the expected model layout");
  }
  Tensor flat({man.total()});
  for (auto& v : flat.data) v = r.f64("parameter payload");
  if (r.pos != buf.size()) {
    throw format_error("checkpoint: " + std::to_string(buf.size() - r.pos) +
                       " trailing bytes at byte " + std::to_string(r.pos));
  }
  return unflatten(flat, man);
}

}  // namespace tactfl
