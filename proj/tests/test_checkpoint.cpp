#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "adlm/checkpoint.hpp"
#include "adlm/config.hpp"
#include "adlm/corpus.hpp"
#include "adlm/errors.hpp"
#include "adlm/model_io.hpp"
#include "adlm/rng.hpp"

#include <cstdio>
#include <fstream>

using namespace adlm;

namespace {

const std::string kPath = "/tmp/adlm_test_ckpt.bin";

NeuralPredictor small_model(std::uint64_t seed) {
  NeuralConfig cfg;
  cfg.vocab_size = 6;
  cfg.context_len = 5;
  cfg.width = 8;
  cfg.anchor_layers = 2;
  Rng rng(seed);
  return NeuralPredictor::init(cfg, rng);
}

}  // namespace

TEST_CASE("checkpoint round trip is bit exact") {
  const NeuralPredictor model = small_model(3);
  Config cfg;
  cfg.set("objective", "anelbo");
  const Checkpoint saved = neural_to_checkpoint(model, 0xabcdULL, cfg);
  saved.save(kPath);
  const Checkpoint loaded = Checkpoint::load(kPath);
  CHECK(loaded.vocab_hash == 0xabcdULL);
  CHECK(loaded.config_snapshot == saved.config_snapshot);
  REQUIRE(loaded.arrays.size() == saved.arrays.size());
  for (std::size_t i = 0; i < loaded.arrays.size(); ++i) {
    CHECK(loaded.arrays[i].first == saved.arrays[i].first);
    CHECK((loaded.arrays[i].second - saved.arrays[i].second)
              .cwiseAbs()
              .maxCoeff() == 0.0);
  }
  const NeuralPredictor rebuilt = neural_from_checkpoint(loaded);
  TokenSeq z(5);
  z << 0, 5, 2, 5, 1;
  const PredictorOutput a = model.predict(z);
  const PredictorOutput b = rebuilt.predict(z);
  CHECK((a.denoise - b.denoise).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.anchor - b.anchor).cwiseAbs().maxCoeff() == 0.0);
  std::remove(kPath.c_str());
}

TEST_CASE("loader rejects foreign and future files") {
  {
    std::ofstream out(kPath, std::ios::binary);
    out << "not a checkpoint at all";
  }
  CHECK_THROWS_AS(Checkpoint::load(kPath), format_error);

  // Bump the version field and expect a clear rejection.
  const NeuralPredictor model = small_model(4);
  Config cfg;
  neural_to_checkpoint(model, 1, cfg).save(kPath);
  {
    std::fstream f(kPath, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(8);
    const std::uint32_t future = 999;
    f.write(reinterpret_cast<const char*>(&future), sizeof(future));
  }
  CHECK_THROWS_AS(Checkpoint::load(kPath), format_error);
  std::remove(kPath.c_str());
}

TEST_CASE("vocabulary mismatch is detected when rebuilding a predictor") {
  const Vocab vocab = build_vocab_from_text("abcde", TokenizerMode::Char);
  const NeuralPredictor model = small_model(5);
  Config cfg;
  const Checkpoint good =
      neural_to_checkpoint(model, vocab_hash(vocab), cfg);
  CHECK_NOTHROW(predictor_from_checkpoint(good, vocab));
  const Checkpoint bad = neural_to_checkpoint(model, 12345, cfg);
  CHECK_THROWS_AS(predictor_from_checkpoint(bad, vocab), mismatch_error);
}

TEST_CASE("tabular checkpoints round trip") {
  Eigen::VectorXd probs(8);
  probs << 1, 2, 3, 4, 5, 6, 7, 8;
  const TabularJoint joint = TabularJoint::from_probabilities(3, 3, probs);
  Config cfg;
  const Checkpoint saved = tabular_to_checkpoint(joint, 7, cfg);
  saved.save(kPath);
  const TabularJoint loaded = tabular_from_checkpoint(Checkpoint::load(kPath));
  CHECK((loaded.joint() - joint.joint()).cwiseAbs().maxCoeff() == 0.0);
  std::remove(kPath.c_str());
}

TEST_CASE("config parsing, overrides, and unknown keys") {
  const Config kv = Config::from_text("# comment\n gamma = 0.003 \ntau=5\n");
  CHECK(kv.get_double("gamma", 0) == doctest::Approx(3e-3));
  CHECK(kv.get_int("tau", 0) == 5);
  CHECK(kv.get_int("absent", 9) == 9);

  const Config js = Config::from_text(R"({"gamma": 0.003, "mode": "char"})");
  CHECK(js.get_double("gamma", 0) == doctest::Approx(3e-3));
  CHECK(js.get_str("mode", "") == "char");

  CHECK_THROWS_AS(Config::from_text("novalue\n"), config_error);
  CHECK_THROWS_AS(Config::from_text("{broken"), config_error);
  CHECK_THROWS_AS(kv.get_int("gamma", 0), config_error);

  Config cfg;
  cfg.set("gamma", "0.1");
  cfg.set("mystery", "1");
  CHECK_THROWS_AS(cfg.validate_keys({"gamma"}), config_error);
  CHECK_NOTHROW(cfg.validate_keys({"gamma", "mystery"}));

  CHECK(cfg.serialize().rfind("# adlmconfig v1\n", 0) == 0);
}
