#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <map>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "tactfl/aggregate.hpp"
#include "tactfl/contrastive.hpp"
#include "tactfl/data.hpp"
#include "tactfl/errors.hpp"
#include "tactfl/model.hpp"
#include "tactfl/partition.hpp"
#include "tactfl/rng.hpp"
#include "tactfl/tensor.hpp"

namespace tactfl {

enum class Aggregator { kFedAvg, kFedOpt, kSma };

// full:       contrastive local training + the configured aggregator
// tct_only:   contrastive local training, similarity weighting disabled
// ssfl_only:  no client training; supervised training on the proxy set only
// supervised: labels restored on clients, full-model local training
enum class AblationMode { kFull, kTctOnly, kSsflOnly, kSupervised };

inline std::string to_string(Aggregator a) {
  switch (a) {
    case Aggregator::kFedAvg: return "fedavg";
    case Aggregator::kFedOpt: return "fedopt";
    case Aggregator::kSma: return "sma";
  }
  throw parameter_error("unknown aggregator");
}

inline Aggregator aggregator_from_string(const std::string& s) {
  if (s == "fedavg") return Aggregator::kFedAvg;
  if (s == "fedopt") return Aggregator::kFedOpt;
  if (s == "sma") return Aggregator::kSma;
  throw config_error("unknown aggregator '" + s + "' (fedavg, fedopt, sma)");
}

inline std::string to_string(AblationMode m) {
  switch (m) {
    case AblationMode::kFull: return "full";
    case AblationMode::kTctOnly: return "tct_only";
    case AblationMode::kSsflOnly: return "ssfl_only";
    case AblationMode::kSupervised: return "supervised";
  }
  throw parameter_error("unknown mode");
}

inline AblationMode mode_from_string(const std::string& s) {
  if (s == "full") return AblationMode::kFull;
  if (s == "tct_only") return AblationMode::kTctOnly;
  if (s == "ssfl_only") return AblationMode::kSsflOnly;
  if (s == "supervised") return AblationMode::kSupervised;
  throw config_error("unknown mode '" + s +
                     "' (full, tct_only, ssfl_only, supervised)");
}

struct TrainingConfig {
  std::size_t rounds = 200;
  std::size_t local_epochs = 1;
  std::size_t batch_size = 16;
  double local_lr = 0.05;
  double head_lr = 0.1;
  std::size_t head_epochs = 5;
  double window = 0.8;        // temporal chunk fraction
  double tau = 0.1;           // softmax temperature
  double pseudo_sigma = 0.01; // noise for stand-in pairs on single-modality clients
};

struct AggregationConfig {
  Aggregator method = Aggregator::kSma;
  double beta = 0.9;       // fedopt momentum
  double server_lr = 1.0;  // fedopt server step size
  bool include_diagonal = true;
};

struct ExperimentConfig {
  DatasetSpec data;
  PartitionConfig partition;
  std::size_t hidden_dim = 32;
  std::size_t embed_dim = 16;
  std::uint64_t model_seed = 1;
  TrainingConfig training;
  AggregationConfig aggregation;
  AblationMode mode = AblationMode::kFull;
  std::size_t workers = 1;
  std::uint64_t run_seed = 1;

  void validate() const {
    data.validate();
    if (partition.num_clients < 1) throw config_error("num_clients must be >= 1");
    if (hidden_dim < 1 || embed_dim < 1) throw config_error("model dims must be >= 1");
    if (training.rounds < 1) throw config_error("rounds must be >= 1");
    if (training.local_epochs < 1) throw config_error("local_epochs must be >= 1");
    if (training.batch_size < 1) throw config_error("batch_size must be >= 1");
    if (!(training.local_lr > 0.0) || !(training.head_lr > 0.0)) {
      throw config_error("learning rates must be > 0");
    }
    if (training.head_epochs < 1) throw config_error("head_epochs must be >= 1");
    if (!(training.window >= 0.5 && training.window <= 1.0)) {
      throw config_error("window must lie in [0.5, 1]");
    }
    if (!(training.tau > 0.0)) throw config_error("tau must be > 0");
    if (!(training.pseudo_sigma >= 0.0)) throw config_error("pseudo_sigma must be >= 0");
    if (aggregation.method == Aggregator::kFedOpt) {
      if (!(aggregation.server_lr > 0.0)) throw config_error("server_lr must be > 0");
      if (!(aggregation.beta >= 0.0 && aggregation.beta < 1.0)) {
        throw config_error("beta must lie in [0, 1)");
      }
    }
    if (workers < 1) throw config_error("workers must be >= 1");
  }
};

struct RoundRecord {
  std::size_t round = 0;  // 1-based
  double train_loss = 0.0;
  double head_loss = 0.0;
  double accuracy = 0.0;  // percent
  double macro_f1 = 0.0;  // percent
  std::vector<double> weights;  // aggregation weights, empty in ssfl_only mode
};

struct EvalResult {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
};

namespace detail {

struct LocalResult {
  ModelParams model;
  double mean_loss = 0.0;
  std::size_t sample_count = 0;
};

inline std::vector<ModalityId> usable_modalities(const ModelParams& model,
                                                 const ClientDataset& client) {
  std::vector<ModalityId> out;
  for (const auto& [id, enc] : model.encoders) {
    (void)enc;
    auto it = client.modality_present.find(id);
    if (it != client.modality_present.end() && it->second) out.push_back(id);
  }
  return out;
}

inline Tensor row_of(const Tensor& m, std::size_t i) {
  Tensor r({m.cols()});
  for (std::size_t k = 0; k < m.cols(); ++k) r(k) = m(i, k);
  return r;
}

}  // namespace detail

// One round of temporal contrastive training on a client shard. The head is
// never touched; encoders of dropped modalities are never touched. A client
// left with a single modality pairs real embeddings against noisy stand-in
// copies, which act as constants in the backward pass.
inline detail::LocalResult local_train_contrastive(const ModelParams& broadcast,
                                                   const ClientDataset& client,
                                                   const ExperimentConfig& cfg,
                                                   std::size_t round) {
  const std::vector<ModalityId> usable = detail::usable_modalities(broadcast, client);
  if (usable.empty()) {
    throw protocol_error("client " + std::to_string(client.client_id) +
                         " has no usable modality");
  }
  if (client.samples.empty()) {
    throw protocol_error("client " + std::to_string(client.client_id) + " has no samples");
  }
  const ModalityId id_a = usable[0];
  const bool paired = usable.size() >= 2;
  const ModalityId id_b = paired ? usable[1] : id_a;

  detail::LocalResult res;
  res.model = broadcast;
  res.sample_count = client.samples.size();

  const std::uint64_t client_stream = derive_seed(cfg.run_seed, 0x10CA17EAull,
                                                  client.client_id);
  SplitMix64 rng(derive_seed(client_stream, 0x2007ull, round));

  double loss_sum = 0.0;
  std::size_t batches = 0;
  for (std::size_t epoch = 0; epoch < cfg.training.local_epochs; ++epoch) {
    std::vector<std::size_t> order = rng.permutation(client.samples.size());
    for (std::size_t lo = 0; lo < order.size(); lo += cfg.training.batch_size) {
      const std::size_t hi = std::min(order.size(), lo + cfg.training.batch_size);
      std::vector<const MultiModalSample*> batch;
      batch.reserve(hi - lo);
      for (std::size_t i = lo; i < hi; ++i) batch.push_back(&client.samples[order[i]]);

      const SegmentBatch seg_a = segment_batch(batch, id_a, cfg.training.window);
      const Tensor targets = soft_targets(seg_a.segments);
      const std::size_t n_seg = seg_a.segments.size();

      EncoderParams& enc_a = res.model.encoders.at(id_a);
      std::vector<EncodeCache> caches_a(n_seg);
      Tensor emb_a({n_seg, enc_a.embed_dim()});
      for (std::size_t i = 0; i < n_seg; ++i) {
        const Tensor e = encode_with_cache(enc_a, seg_a.features[i], &caches_a[i]);
        for (std::size_t k = 0; k < e.size(); ++k) emb_a(i, k) = e(k);
      }

      Tensor emb_b;
      std::vector<EncodeCache> caches_b;
      if (paired) {
        const SegmentBatch seg_b = segment_batch(batch, id_b, cfg.training.window);
        EncoderParams& enc_b = res.model.encoders.at(id_b);
        caches_b.resize(n_seg);
        emb_b = Tensor({n_seg, enc_b.embed_dim()});
        for (std::size_t i = 0; i < n_seg; ++i) {
          const Tensor e = encode_with_cache(enc_b, seg_b.features[i], &caches_b[i]);
          for (std::size_t k = 0; k < e.size(); ++k) emb_b(i, k) = e(k);
        }
      } else {
        emb_b = Tensor(emb_a.shape);
        for (std::size_t i = 0; i < n_seg; ++i) {
          const Tensor noisy = pseudo_pair(detail::row_of(emb_a, i), rng,
                                           cfg.training.pseudo_sigma);
          for (std::size_t k = 0; k < noisy.size(); ++k) emb_b(i, k) = noisy(k);
        }
      }

      const ContrastiveResult cr =
          contrastive_loss_grad(emb_a, emb_b, targets, cfg.training.tau);
      loss_sum += cr.loss;
      ++batches;

      EncoderParams grad_a = zero_grad_like(enc_a);
      for (std::size_t i = 0; i < n_seg; ++i) {
        encoder_backward(enc_a, caches_a[i], detail::row_of(cr.grad_a, i), grad_a);
      }
      if (paired) {
        EncoderParams& enc_b = res.model.encoders.at(id_b);
        EncoderParams grad_b = zero_grad_like(enc_b);
        for (std::size_t i = 0; i < n_seg; ++i) {
          encoder_backward(enc_b, caches_b[i], detail::row_of(cr.grad_b, i), grad_b);
        }
        sgd_update(enc_b, grad_b, cfg.training.local_lr);
      }
      sgd_update(enc_a, grad_a, cfg.training.local_lr);
    }
  }
  res.mean_loss = batches ? loss_sum / static_cast<double>(batches) : 0.0;
  return res;
}

// Full-model supervised local training; labels are looked up by sample id.
inline detail::LocalResult local_train_supervised(
    const ModelParams& broadcast, const ClientDataset& client,
    const std::map<std::uint32_t, int>& labels, const ExperimentConfig& cfg,
    std::size_t round) {
  if (client.samples.empty()) {
    throw protocol_error("client " + std::to_string(client.client_id) + " has no samples");
  }
  detail::LocalResult res;
  res.model = broadcast;
  res.sample_count = client.samples.size();

  std::vector<MultiModalSample> labelled = client.samples;
  for (auto& s : labelled) {
    auto it = labels.find(s.sample_id);
    if (it == labels.end()) {
      throw protocol_error("no label recorded for sample " + std::to_string(s.sample_id));
    }
    s.label = it->second;
  }

  const std::uint64_t client_stream = derive_seed(cfg.run_seed, 0x10CA17EAull,
                                                  client.client_id);
  SplitMix64 rng(derive_seed(client_stream, 0x2007ull, round));

  double loss_sum = 0.0;
  std::size_t batches = 0;
  for (std::size_t epoch = 0; epoch < cfg.training.local_epochs; ++epoch) {
    std::vector<std::size_t> order = rng.permutation(labelled.size());
    for (std::size_t lo = 0; lo < order.size(); lo += cfg.training.batch_size) {
      const std::size_t hi = std::min(order.size(), lo + cfg.training.batch_size);
      std::vector<const MultiModalSample*> batch;
      for (std::size_t i = lo; i < hi; ++i) batch.push_back(&labelled[order[i]]);
      const ModelGrad g =
          supervised_loss_grad(res.model, batch, &client.modality_present);
      loss_sum += g.loss;
      ++batches;
      for (auto& [id, enc] : res.model.encoders) {
        sgd_update(enc, g.encoders.at(id), cfg.training.local_lr);
      }
      sgd_update(res.model.head, g.head, cfg.training.local_lr);
    }
  }
  res.mean_loss = batches ? loss_sum / static_cast<double>(batches) : 0.0;
  return res;
}

// Head-only training on the labelled proxy set. Encoders stay frozen, so the
// fused embeddings are computed once and reused across epochs. Returns the
// mean loss of the final epoch.
inline double server_head_train(ModelParams& model,
                                const std::vector<MultiModalSample>& proxy,
                                const ExperimentConfig& cfg, std::size_t round) {
  if (proxy.empty()) throw protocol_error("server head training: empty proxy set");
  const std::size_t n = proxy.size();
  const std::size_t d = model.fused_dim();
  Tensor fused({n, d});
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Tensor e = embed_sample(model, proxy[i]);
    for (std::size_t k = 0; k < d; ++k) fused(i, k) = e(k);
    labels[i] = proxy[i].label;
  }
  SplitMix64 rng(derive_seed(cfg.run_seed, 0x5EAD7EADull, round));
  double last_epoch_loss = 0.0;
  for (std::size_t epoch = 0; epoch < cfg.training.head_epochs; ++epoch) {
    std::vector<std::size_t> order = rng.permutation(n);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t lo = 0; lo < n; lo += cfg.training.batch_size) {
      const std::size_t hi = std::min(n, lo + cfg.training.batch_size);
      Tensor fb({hi - lo, d});
      std::vector<int> lb(hi - lo);
      for (std::size_t i = lo; i < hi; ++i) {
        for (std::size_t k = 0; k < d; ++k) fb(i - lo, k) = fused(order[i], k);
        lb[i - lo] = labels[order[i]];
      }
      HeadGrad g = head_loss_grad(model.head, fb, lb);
      loss_sum += g.loss;
      ++batches;
      HeadParams hg;
      hg.weight = std::move(g.d_weight);
      hg.bias = std::move(g.d_bias);
      sgd_update(model.head, hg, cfg.training.head_lr);
    }
    last_epoch_loss = batches ? loss_sum / static_cast<double>(batches) : 0.0;
  }
  return last_epoch_loss;
}

// Supervised epochs over the proxy set through the whole model (the
// no-client baseline).
inline double server_supervised_train(ModelParams& model,
                                      const std::vector<MultiModalSample>& proxy,
                                      const ExperimentConfig& cfg, std::size_t round) {
  if (proxy.empty()) throw protocol_error("server supervised training: empty proxy set");
  SplitMix64 rng(derive_seed(cfg.run_seed, 0x55F1ull, round));
  double loss_sum = 0.0;
  std::size_t batches = 0;
  for (std::size_t epoch = 0; epoch < cfg.training.local_epochs; ++epoch) {
    std::vector<std::size_t> order = rng.permutation(proxy.size());
    for (std::size_t lo = 0; lo < order.size(); lo += cfg.training.batch_size) {
      const std::size_t hi = std::min(order.size(), lo + cfg.training.batch_size);
      std::vector<const MultiModalSample*> batch;
      for (std::size_t i = lo; i < hi; ++i) batch.push_back(&proxy[order[i]]);
      const ModelGrad g = supervised_loss_grad(model, batch, nullptr);
      loss_sum += g.loss;
      ++batches;
      for (auto& [id, enc] : model.encoders) {
        sgd_update(enc, g.encoders.at(id), cfg.training.local_lr);
      }
      sgd_update(model.head, g.head, cfg.training.local_lr);
    }
  }
  return batches ? loss_sum / static_cast<double>(batches) : 0.0;
}

inline EvalResult evaluate(const ModelParams& model,
                           const std::vector<MultiModalSample>& test) {
  if (test.empty()) throw parameter_error("evaluate: empty test set");
  const std::size_t K = model.num_classes();
  std::vector<std::size_t> tp(K, 0), fp(K, 0), fn(K, 0);
  std::size_t correct = 0;
  for (const auto& s : test) {
    const Tensor logits = head_forward(model.head, embed_sample(model, s));
    std::size_t pred = 0;
    for (std::size_t c = 1; c < K; ++c) {
      if (logits(c) > logits(pred)) pred = c;
    }
    const auto truth = static_cast<std::size_t>(s.label);
    if (truth >= K) {
      throw parameter_error("evaluate: label " + std::to_string(s.label) +
                            " outside [0, " + std::to_string(K) + ")");
    }
    if (pred == truth) {
      ++correct;
      ++tp[truth];
    } else {
      ++fp[pred];
      ++fn[truth];
    }
  }
  EvalResult r;
  r.accuracy = 100.0 * static_cast<double>(correct) / static_cast<double>(test.size());
  double f1_sum = 0.0;
  for (std::size_t c = 0; c < K; ++c) {
    const double denom = static_cast<double>(2 * tp[c] + fp[c] + fn[c]);
    f1_sum += denom > 0.0 ? 2.0 * static_cast<double>(tp[c]) / denom : 0.0;
  }
  r.macro_f1 = 100.0 * f1_sum / static_cast<double>(K);
  return r;
}

namespace detail {

// Runs one job per client on up to `workers` threads. Jobs write to their own
// slot and use only their own seed streams, so results do not depend on the
// worker count.
template <typename Fn>
inline void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  const std::size_t w = std::min(workers, n);
  if (w <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> threads;
  threads.reserve(w);
  for (std::size_t t = 0; t < w; ++t) {
    threads.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& th : threads) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace detail

struct ExperimentResult {
  std::vector<RoundRecord> rounds;
  ModelParams model;
  std::uint64_t split_fingerprint = 0;
  std::size_t num_clients = 0;
};

using RoundCallback = std::function<void(const RoundRecord&)>;

// The full protocol. Per round: broadcast, local training on every client,
// aggregation, head training on the labelled proxy set, evaluation. The
// ssfl_only mode skips clients and aggregation entirely.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg,
                                       const RoundCallback& on_round = {}) {
  cfg.validate();
  const std::vector<MultiModalSample> source = generate(cfg.data);
  std::map<std::uint32_t, int> label_of;
  for (const auto& s : source) label_of[s.sample_id] = s.label;

  const FederatedSplit split = build_split(source, cfg.partition);

  ModelConfig mc;
  mc.input_dims = {{0, cfg.data.dim_a}, {1, cfg.data.dim_b}};
  mc.hidden_dim = cfg.hidden_dim;
  mc.embed_dim = cfg.embed_dim;
  mc.num_classes = static_cast<std::size_t>(cfg.data.num_classes);
  mc.seed = cfg.model_seed;
  ModelParams global = init_model(mc);

  std::vector<const MultiModalSample*> proxy;
  proxy.reserve(split.server_labelled.size());
  for (const auto& s : split.server_labelled) proxy.push_back(&s);

  const ShapeManifest manifest = manifest_of(global);
  ServerOptState opt_state;
  opt_state.beta = cfg.aggregation.beta;
  opt_state.server_lr = cfg.aggregation.server_lr;

  // Similarity weighting needs the frozen-head protocol; the ablations that
  // break or bypass it fall back to plain averaging.
  Aggregator method = cfg.aggregation.method;
  if (method == Aggregator::kSma &&
      (cfg.mode == AblationMode::kTctOnly || cfg.mode == AblationMode::kSupervised)) {
    method = Aggregator::kFedAvg;
  }

  ExperimentResult result;
  result.split_fingerprint = split_fingerprint(split);
  result.num_clients = split.clients.size();

  for (std::size_t round = 1; round <= cfg.training.rounds; ++round) {
    RoundRecord rec;
    rec.round = round;

    if (cfg.mode == AblationMode::kSsflOnly) {
      rec.train_loss = server_supervised_train(global, split.server_labelled, cfg, round);
      rec.head_loss = rec.train_loss;
    } else {
      std::vector<detail::LocalResult> locals(split.clients.size());
      detail::parallel_for(split.clients.size(), cfg.workers, [&](std::size_t i) {
        locals[i] = cfg.mode == AblationMode::kSupervised
                        ? local_train_supervised(global, split.clients[i], label_of,
                                                 cfg, round)
                        : local_train_contrastive(global, split.clients[i], cfg, round);
      });

      double weighted_loss = 0.0;
      std::size_t total_samples = 0;
      std::vector<std::size_t> counts(locals.size());
      for (std::size_t i = 0; i < locals.size(); ++i) {
        counts[i] = locals[i].sample_count;
        total_samples += counts[i];
        weighted_loss += locals[i].mean_loss * static_cast<double>(counts[i]);
      }
      rec.train_loss = weighted_loss / static_cast<double>(total_samples);

      if (cfg.mode != AblationMode::kSupervised) {
        for (std::size_t i = 0; i < locals.size(); ++i) {
          if (!heads_equal(locals[i].model.head, global.head)) {
            throw protocol_error("client " + std::to_string(i) +
                                 " modified the frozen head");
          }
        }
      }

      if (method == Aggregator::kSma) {
        std::vector<ModelParams> models;
        models.reserve(locals.size());
        for (auto& l : locals) models.push_back(std::move(l.model));
        SmaResult sma = sma_aggregate(models, proxy, cfg.aggregation.include_diagonal);
        global = std::move(sma.model);
        rec.weights = std::move(sma.weights.values);
      } else {
        std::vector<Tensor> flats;
        flats.reserve(locals.size());
        for (const auto& l : locals) flats.push_back(flatten(l.model));
        rec.weights = normalized_weights(counts);
        Tensor blended = method == Aggregator::kFedOpt
                             ? fedopt(flatten(global), flats, rec.weights, opt_state)
                             : fedavg(flats, rec.weights);
        if (cfg.mode != AblationMode::kSupervised) {
          // Client heads equal the broadcast head; keep it bit-exact rather
          // than letting the blend introduce rounding drift.
          const Tensor global_flat = flatten(global);
          for (std::size_t k = manifest.encoder_total(); k < blended.size(); ++k) {
            blended.data[k] = global_flat.data[k];
          }
        }
        global = unflatten(blended, manifest);
      }

      rec.head_loss = server_head_train(global, split.server_labelled, cfg, round);
    }

    const EvalResult ev = evaluate(global, split.test);
    rec.accuracy = ev.accuracy;
    rec.macro_f1 = ev.macro_f1;
    if (on_round) on_round(rec);
    result.rounds.push_back(std::move(rec));
  }
  result.model = std::move(global);
  return result;
}

}  // namespace tactfl
