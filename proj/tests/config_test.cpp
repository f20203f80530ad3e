#include "tactfl/config.hpp"

#include <gtest/gtest.h>

#include <string>

#include "tactfl/errors.hpp"

using namespace tactfl;

namespace {

std::string canon(const ExperimentConfig& cfg) { return config_to_ini(cfg); }

}  // namespace

TEST(ParseIni, SectionsKeysCommentsAndWhitespace) {
  const std::string text =
      "# leading comment\n"
      "\n"
      "[data]\n"
      "  timesteps   =  32 \n"
      "; another comment style\n"
      "[ training ]\n"
      "tau=0.25\n"
      "tau = 0.5\n";
  const IniData ini = parse_ini(text);
  EXPECT_EQ(ini.at("data").at("timesteps"), "32");
  EXPECT_EQ(ini.at("training").at("tau"), "0.5");  // last assignment wins
}

TEST(ParseIni, ErrorsCarryLineNumbers) {
  try {
    parse_ini("[data]\n[oops\n");
    FAIL() << "expected config_error";
  } catch (const config_error& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }

  try {
    parse_ini("[data]\nnot an assignment\n");
    FAIL() << "expected config_error";
  } catch (const config_error& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }

  EXPECT_THROW(parse_ini("[data]\n = 5\n"), config_error);
  EXPECT_THROW(parse_ini("rounds = 3\n"), config_error);  // key before section
}

TEST(Config, DefaultsRoundTripCanonically) {
  ExperimentConfig cfg;
  const std::string once = canon(cfg);
  const ExperimentConfig back = parse_config(once);
  EXPECT_EQ(canon(back), once);
}

TEST(Config, EveryKeyIsSettable) {
  const std::string text =
      "[data]\n"
      "num_classes = 7\n"
      "samples_per_class = 11\n"
      "timesteps = 24\n"
      "dim_a = 9\n"
      "dim_b = 8\n"
      "latent_dim = 5\n"
      "noise_sigma = 0.75\n"
      "amp_scale = 1.5\n"
      "mean_jitter = 0.9\n"
      "distractor_rank = 6\n"
      "distractor_scale = 2.25\n"
      "seed = 42\n"
      "[partition]\n"
      "num_clients = 6\n"
      "alpha = 0.25\n"
      "label_missing_rate = 0.8\n"
      "modality_missing_rate = 0.3\n"
      "test_fraction = 0.15\n"
      "drop_on_eval = true\n"
      "seed = 43\n"
      "[model]\n"
      "hidden_dim = 20\n"
      "embed_dim = 10\n"
      "seed = 44\n"
      "[training]\n"
      "rounds = 3\n"
      "local_epochs = 2\n"
      "batch_size = 12\n"
      "local_lr = 0.02\n"
      "head_lr = 0.2\n"
      "head_epochs = 4\n"
      "window = 0.7\n"
      "tau = 0.3\n"
      "pseudo_sigma = 0.05\n"
      "[aggregation]\n"
      "method = fedopt\n"
      "beta = 0.8\n"
      "server_lr = 0.6\n"
      "include_diagonal = false\n"
      "[run]\n"
      "mode = tct_only\n"
      "seed = 45\n"
      "workers = 4\n";
  const ExperimentConfig cfg = parse_config(text);
  EXPECT_EQ(cfg.data.num_classes, 7u);
  EXPECT_EQ(cfg.data.samples_per_class, 11u);
  EXPECT_EQ(cfg.data.timesteps, 24u);
  EXPECT_EQ(cfg.data.dim_a, 9u);
  EXPECT_EQ(cfg.data.dim_b, 8u);
  EXPECT_EQ(cfg.data.latent_dim, 5u);
  EXPECT_DOUBLE_EQ(cfg.data.noise_sigma, 0.75);
  EXPECT_DOUBLE_EQ(cfg.data.amp_scale, 1.5);
  EXPECT_DOUBLE_EQ(cfg.data.mean_jitter, 0.9);
  EXPECT_EQ(cfg.data.distractor_rank, 6u);
  EXPECT_DOUBLE_EQ(cfg.data.distractor_scale, 2.25);
  EXPECT_EQ(cfg.data.seed, 42u);
  EXPECT_EQ(cfg.partition.num_clients, 6u);
  EXPECT_DOUBLE_EQ(cfg.partition.alpha, 0.25);
  EXPECT_DOUBLE_EQ(cfg.partition.label_missing_rate, 0.8);
  EXPECT_DOUBLE_EQ(cfg.partition.modality_missing_rate, 0.3);
  EXPECT_DOUBLE_EQ(cfg.partition.test_fraction, 0.15);
  EXPECT_TRUE(cfg.partition.drop_on_eval);
  EXPECT_EQ(cfg.partition.seed, 43u);
  EXPECT_EQ(cfg.hidden_dim, 20u);
  EXPECT_EQ(cfg.embed_dim, 10u);
  EXPECT_EQ(cfg.model_seed, 44u);
  EXPECT_EQ(cfg.training.rounds, 3u);
  EXPECT_EQ(cfg.training.local_epochs, 2u);
  EXPECT_EQ(cfg.training.batch_size, 12u);
  EXPECT_DOUBLE_EQ(cfg.training.local_lr, 0.02);
  EXPECT_DOUBLE_EQ(cfg.training.head_lr, 0.2);
  EXPECT_EQ(cfg.training.head_epochs, 4u);
  EXPECT_DOUBLE_EQ(cfg.training.window, 0.7);
  EXPECT_DOUBLE_EQ(cfg.training.tau, 0.3);
  EXPECT_DOUBLE_EQ(cfg.training.pseudo_sigma, 0.05);
  EXPECT_EQ(cfg.aggregation.method, Aggregator::kFedOpt);
  EXPECT_DOUBLE_EQ(cfg.aggregation.beta, 0.8);
  EXPECT_DOUBLE_EQ(cfg.aggregation.server_lr, 0.6);
  EXPECT_FALSE(cfg.aggregation.include_diagonal);
  EXPECT_EQ(cfg.mode, AblationMode::kTctOnly);
  EXPECT_EQ(cfg.run_seed, 45u);
  EXPECT_EQ(cfg.workers, 4u);

  // And the whole thing survives a serialize/parse cycle.
  EXPECT_EQ(canon(parse_config(canon(cfg))), canon(cfg));
}

TEST(Config, DoublesRoundTripBitwise) {
  ExperimentConfig cfg;
  cfg.data.noise_sigma = 0.1;
  cfg.partition.alpha = 1.0 / 3.0;
  cfg.training.tau = 1e-3;
  cfg.training.window = 0.5000000000000001;
  const ExperimentConfig back = parse_config(canon(cfg));
  EXPECT_EQ(back.data.noise_sigma, cfg.data.noise_sigma);
  EXPECT_EQ(back.partition.alpha, cfg.partition.alpha);
  EXPECT_EQ(back.training.tau, cfg.training.tau);
  EXPECT_EQ(back.training.window, cfg.training.window);
}

TEST(Config, BooleanSpellings) {
  ExperimentConfig cfg;
  for (const char* t : {"true", "1", "yes", "on"}) {
    set_config_value(cfg, "partition", "drop_on_eval", t);
    EXPECT_TRUE(cfg.partition.drop_on_eval) << t;
  }
  for (const char* f : {"false", "0", "no", "off"}) {
    set_config_value(cfg, "partition", "drop_on_eval", f);
    EXPECT_FALSE(cfg.partition.drop_on_eval) << f;
  }
  EXPECT_THROW(set_config_value(cfg, "partition", "drop_on_eval", "maybe"),
               config_error);
}

TEST(Config, RejectsUnknownNamesAndBadValues) {
  ExperimentConfig cfg;
  EXPECT_THROW(set_config_value(cfg, "data", "bogus", "1"), config_error);
  EXPECT_THROW(set_config_value(cfg, "nonsense", "rounds", "1"), config_error);
  EXPECT_THROW(set_config_value(cfg, "training", "rounds", "many"), config_error);
  EXPECT_THROW(set_config_value(cfg, "training", "rounds", "-3"), config_error);
  EXPECT_THROW(set_config_value(cfg, "training", "tau", "warm"), config_error);
  EXPECT_THROW(set_config_value(cfg, "aggregation", "method", "median"), config_error);
  EXPECT_THROW(set_config_value(cfg, "run", "mode", "everything"), config_error);
}

TEST(Config, ApplyOverride) {
  ExperimentConfig cfg;
  apply_override(cfg, "training.rounds=7");
  EXPECT_EQ(cfg.training.rounds, 7u);
  apply_override(cfg, "  training.tau = 0.25  ");
  EXPECT_DOUBLE_EQ(cfg.training.tau, 0.25);
  apply_override(cfg, "aggregation.method=fedavg");
  EXPECT_EQ(cfg.aggregation.method, Aggregator::kFedAvg);

  EXPECT_THROW(apply_override(cfg, "training.rounds"), config_error);
  EXPECT_THROW(apply_override(cfg, "rounds=7"), config_error);
  EXPECT_THROW(apply_override(cfg, ".rounds=7"), config_error);
  EXPECT_THROW(apply_override(cfg, "training.=7"), config_error);
  EXPECT_THROW(apply_override(cfg, "training.gamma=7"), config_error);
}

TEST(Config, ManifestSectionRoundTripsAsConfig) {
  ExperimentConfig cfg;
  cfg.training.rounds = 2;
  ExperimentResult res;
  res.split_fingerprint = 0xDEADBEEF12345678ull;
  res.num_clients = 4;
  res.rounds.resize(2);
  res.rounds.back().accuracy = 61.25;
  res.rounds.back().macro_f1 = 58.5;

  const std::string manifest = run_manifest(cfg, res);
  EXPECT_NE(manifest.find("[manifest]"), std::string::npos);
  EXPECT_NE(manifest.find("split_fingerprint = deadbeef12345678"), std::string::npos);
  EXPECT_NE(manifest.find("rounds_completed = 2"), std::string::npos);

  // Feeding the manifest back in reproduces the config; the [manifest]
  // section itself is informational and ignored.
  const ExperimentConfig back = parse_config(manifest);
  EXPECT_EQ(canon(back), canon(cfg));
}
