#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "tactfl/data.hpp"
#include "tactfl/errors.hpp"
#include "tactfl/rng.hpp"

namespace tactfl {

// Per-client shard. Samples arrive with labels stripped (kNoLabel); the
// modality mask records which modalities the client retains.
struct ClientDataset {
  std::size_t client_id = 0;
  std::vector<MultiModalSample> samples;
  std::map<ModalityId, bool> modality_present;

  std::vector<ModalityId> present_modalities() const {
    std::vector<ModalityId> out;
    for (const auto& [id, on] : modality_present) {
      if (on) out.push_back(id);
    }
    return out;
  }
};

struct PartitionConfig {
  std::size_t num_clients = 8;
  double alpha = 0.1;
  double label_missing_rate = 0.9;     // r_l
  double modality_missing_rate = 0.0;  // r_m
  double test_fraction = 0.1;
  bool drop_on_eval = false;  // extend modality dropping to the proxy/test sets
  std::uint64_t seed = 1;
};

struct FederatedSplit {
  std::vector<ClientDataset> clients;
  std::vector<MultiModalSample> server_labelled;  // proxy set, labels kept
  std::vector<MultiModalSample> test;
  double alpha = 0.0;
  double label_missing_rate = 0.0;
  double modality_missing_rate = 0.0;
  std::uint64_t seed = 0;
};

namespace detail {

inline std::map<int, std::vector<std::size_t>> indices_by_class(
    const std::vector<MultiModalSample>& samples) {
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    by_class[samples[i].label].push_back(i);
  }
  return by_class;
}

}  // namespace detail

// Class-wise Dirichlet shard assignment: for each class draw p ~ Dir(alpha)
// over clients and assign that class's samples multinomially. Clients left
// empty are repaired by taking one sample from the currently largest client.
inline std::vector<std::vector<MultiModalSample>> dirichlet_partition(
    const std::vector<MultiModalSample>& samples, std::size_t num_clients,
    double alpha, std::uint64_t seed) {
  if (num_clients < 1) {
    throw parameter_error("dirichlet_partition: num_clients must be >= 1");
  }
  if (alpha <= 0.0) {
    throw parameter_error("dirichlet_partition: alpha must be > 0, got " +
                          std::to_string(alpha));
  }
  std::vector<std::vector<MultiModalSample>> shards(num_clients);
  if (num_clients == 1) {
    shards[0] = samples;
    return shards;
  }
  auto by_class = detail::indices_by_class(samples);
  for (const auto& [label, idx] : by_class) {
    SplitMix64 rng(derive_seed(seed, 0xD112C4u,
                               static_cast<std::uint64_t>(label + 1)));
    std::vector<double> p = rng.next_dirichlet(alpha, num_clients);
    for (std::size_t i : idx) {
      shards[rng.next_categorical(p)].push_back(samples[i]);
    }
  }
  // Empty-shard repair: move one sample from the largest shard.
  for (std::size_t c = 0; c < num_clients; ++c) {
    if (!shards[c].empty()) continue;
    std::size_t donor = 0;
    for (std::size_t d = 1; d < num_clients; ++d) {
      if (shards[d].size() > shards[donor].size()) donor = d;
    }
    if (shards[donor].size() <= 1) continue;  // nothing movable
    shards[c].push_back(std::move(shards[donor].back()));
    shards[donor].pop_back();
  }
  return shards;
}

// Stratified label split: per class, fraction (1 - r_l) stays labelled on the
// server (at least one sample per class), the rest feeds the client pool.
// Labels are stripped downstream, when client shards are materialized.
inline std::pair<std::vector<MultiModalSample>, std::vector<MultiModalSample>>
split_labels(const std::vector<MultiModalSample>& samples, double label_missing_rate,
             std::uint64_t seed) {
  if (label_missing_rate < 0.0 || label_missing_rate >= 1.0) {
    throw parameter_error(
        "split_labels: label missing rate must be in [0, 1); r_l = 1 leaves no "
        "labelled data for head training");
  }
  std::vector<MultiModalSample> server, pool;
  auto by_class = detail::indices_by_class(samples);
  for (const auto& [label, idx_const] : by_class) {
    auto idx = idx_const;
    SplitMix64 rng(derive_seed(seed, 0x1ABE15u,
                               static_cast<std::uint64_t>(label + 1)));
    rng.shuffle(idx);
    const double keep = (1.0 - label_missing_rate) * static_cast<double>(idx.size());
    std::size_t n_server = static_cast<std::size_t>(std::llround(keep));
    n_server = std::clamp<std::size_t>(n_server, 1, idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      (i < n_server ? server : pool).push_back(samples[idx[i]]);
    }
  }
  return {std::move(server), std::move(pool)};
}

// Bernoulli modality dropping per (client, modality); a client that would
// lose every modality keeps one, chosen uniformly. When given,
// pre_repair_absent receives the raw Bernoulli drop count before the
// keep-one repair, for auditing the drop rate itself.
inline void drop_modalities(std::vector<ClientDataset>& clients,
                            double modality_missing_rate, std::uint64_t seed,
                            std::size_t* pre_repair_absent = nullptr) {
  if (modality_missing_rate < 0.0 || modality_missing_rate >= 1.0) {
    throw parameter_error("drop_modalities: rate must be in [0, 1)");
  }
  if (pre_repair_absent) *pre_repair_absent = 0;
  for (auto& client : clients) {
    SplitMix64 rng(derive_seed(seed, 0xD209u, client.client_id));
    std::vector<ModalityId> kept;
    for (auto& [id, on] : client.modality_present) {
      on = rng.next_double() >= modality_missing_rate;
      if (on) kept.push_back(id);
      else if (pre_repair_absent) ++*pre_repair_absent;
    }
    if (kept.empty() && !client.modality_present.empty()) {
      std::size_t pick = static_cast<std::size_t>(
          rng.next_below(client.modality_present.size()));
      auto it = client.modality_present.begin();
      std::advance(it, pick);
      it->second = true;
    }
  }
}

namespace detail {

// Stratified carve of roughly `fraction` of the samples (used for the test
// split, taken before any other assignment).
inline std::pair<std::vector<MultiModalSample>, std::vector<MultiModalSample>>
stratified_carve(const std::vector<MultiModalSample>& samples, double fraction,
                 std::uint64_t seed) {
  std::vector<MultiModalSample> carved, rest;
  auto by_class = indices_by_class(samples);
  for (const auto& [label, idx_const] : by_class) {
    auto idx = idx_const;
    SplitMix64 rng(derive_seed(seed, 0x7E57u, static_cast<std::uint64_t>(label + 1)));
    rng.shuffle(idx);
    std::size_t n_carve = static_cast<std::size_t>(
        std::llround(fraction * static_cast<double>(idx.size())));
    n_carve = std::min(n_carve, idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      (i < n_carve ? carved : rest).push_back(samples[idx[i]]);
    }
  }
  return {std::move(carved), std::move(rest)};
}

inline void apply_sample_level_drop(std::vector<MultiModalSample>& samples,
                                    double rate, std::uint64_t seed) {
  for (auto& s : samples) {
    SplitMix64 rng(derive_seed(seed, 0xE7A1u, s.sample_id));
    std::vector<ModalityId> to_drop;
    for (const auto& [id, t] : s.modalities) {
      (void)t;
      if (rng.next_double() < rate) to_drop.push_back(id);
    }
    if (to_drop.size() == s.modalities.size() && !to_drop.empty()) {
      std::size_t keep = static_cast<std::size_t>(rng.next_below(to_drop.size()));
      to_drop.erase(to_drop.begin() + static_cast<std::ptrdiff_t>(keep));
    }
    for (ModalityId id : to_drop) s.modalities.erase(id);
  }
}

}  // namespace detail

// Full pipeline: carve the test set, split off the labelled proxy set, shard
// the remaining pool across clients (Dirichlet, labels stripped), then apply
// modality dropping. Together the three parts partition the source dataset.
inline FederatedSplit build_split(const std::vector<MultiModalSample>& source,
                                  const PartitionConfig& cfg) {
  if (source.empty()) throw parameter_error("build_split: empty source dataset");
  if (cfg.test_fraction < 0.0 || cfg.test_fraction >= 1.0) {
    throw parameter_error("build_split: test_fraction must be in [0, 1)");
  }
  FederatedSplit split;
  split.alpha = cfg.alpha;
  split.label_missing_rate = cfg.label_missing_rate;
  split.modality_missing_rate = cfg.modality_missing_rate;
  split.seed = cfg.seed;

  auto [test, rest] = detail::stratified_carve(source, cfg.test_fraction, cfg.seed);
  split.test = std::move(test);

  auto [server, pool] = split_labels(rest, cfg.label_missing_rate, cfg.seed);
  split.server_labelled = std::move(server);

  auto shards = dirichlet_partition(pool, cfg.num_clients, cfg.alpha, cfg.seed);
  std::map<ModalityId, bool> all_present;
  for (const auto& s : source) {
    for (const auto& [id, t] : s.modalities) {
      (void)t;
      all_present[id] = true;
    }
  }
  split.clients.resize(shards.size());
  for (std::size_t c = 0; c < shards.size(); ++c) {
    split.clients[c].client_id = c;
    split.clients[c].samples = std::move(shards[c]);
    for (auto& s : split.clients[c].samples) s.label = kNoLabel;
    split.clients[c].modality_present = all_present;
  }
  if (cfg.modality_missing_rate > 0.0) {
    drop_modalities(split.clients, cfg.modality_missing_rate, cfg.seed);
    if (cfg.drop_on_eval) {
      detail::apply_sample_level_drop(split.server_labelled,
                                      cfg.modality_missing_rate, cfg.seed);
      detail::apply_sample_level_drop(split.test, cfg.modality_missing_rate,
                                      cfg.seed);
    }
  }
  return split;
}

// Audit manifest: one comma-separated record per sample. The mask columns
// follow the modality order of the header; client rows show the client mask,
// server/test rows show per-sample presence.
inline std::string split_manifest(const FederatedSplit& split) {
  std::vector<ModalityId> modality_ids;
  {
    std::map<ModalityId, bool> seen;
    for (const auto& c : split.clients)
      for (const auto& [id, on] : c.modality_present) {
        (void)on;
        seen[id] = true;
      }
    for (const auto& s : split.server_labelled)
      for (const auto& [id, t] : s.modalities) {
        (void)t;
        seen[id] = true;
      }
    for (const auto& s : split.test)
      for (const auto& [id, t] : s.modalities) {
        (void)t;
        seen[id] = true;
      }
    for (const auto& [id, on] : seen) {
      (void)on;
      modality_ids.push_back(id);
    }
  }
  std::string out = "sample_id,assignment";
  for (ModalityId id : modality_ids) out += ",mask_" + std::to_string(id);
  out += '\n';

  struct Row {
    std::uint32_t sample_id;
    std::string assignment;
    std::vector<int> mask;
  };
  std::vector<Row> rows;
  auto sample_mask = [&](const MultiModalSample& s) {
    std::vector<int> mask;
    for (ModalityId id : modality_ids) mask.push_back(s.modalities.count(id) ? 1 : 0);
    return mask;
  };
  for (const auto& s : split.server_labelled)
    rows.push_back({s.sample_id, "server", sample_mask(s)});
  for (const auto& s : split.test) rows.push_back({s.sample_id, "test", sample_mask(s)});
  for (const auto& c : split.clients) {
    std::vector<int> mask;
    for (ModalityId id : modality_ids) {
      auto it = c.modality_present.find(id);
      mask.push_back(it != c.modality_present.end() && it->second ? 1 : 0);
    }
    for (const auto& s : c.samples)
      rows.push_back({s.sample_id, "client_" + std::to_string(c.client_id), mask});
  }
  std::sort(rows.begin(), rows.end(),
            [](const Row& a, const Row& b) { return a.sample_id < b.sample_id; });
  for (const auto& r : rows) {
    out += std::to_string(r.sample_id);
    out += ',';
    out += r.assignment;
    for (int m : r.mask) out += m ? ",1" : ",0";
    out += '\n';
  }
  return out;
}

// Content hash of the manifest; stable across identical runs.
inline std::uint64_t split_fingerprint(const FederatedSplit& split) {
  return fnv1a64(split_manifest(split));
}

}  // namespace tactfl
