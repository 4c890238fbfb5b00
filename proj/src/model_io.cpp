#include "adlm/model_io.hpp"

#include "adlm/errors.hpp"

#include <memory>

namespace adlm {

Checkpoint neural_to_checkpoint(const NeuralPredictor& model,
                                std::uint64_t vocab_hash,
                                const Config& resolved) {
  Checkpoint ckpt;
  ckpt.vocab_hash = vocab_hash;
  Config snapshot = resolved;
  snapshot.set("backend", "neural");
  const NeuralConfig& cfg = model.config();
  snapshot.set("vocab_size", std::to_string(cfg.vocab_size));
  snapshot.set("context_len", std::to_string(cfg.context_len));
  snapshot.set("width", std::to_string(cfg.width));
  snapshot.set("anchor_layers", std::to_string(cfg.anchor_layers));
  snapshot.set("denoiser_layers",
               std::to_string(cfg.resolved_denoiser_layers()));
  ckpt.config_snapshot = snapshot.serialize();
  for (const auto& [name, m] : model.named_tensors())
    ckpt.arrays.emplace_back(name, m);
  return ckpt;
}

NeuralPredictor neural_from_checkpoint(const Checkpoint& ckpt) {
  const Config snapshot = Config::from_text(ckpt.config_snapshot);
  if (snapshot.get_str("backend", "neural") != "neural")
    throw format_error("checkpoint does not hold a neural model");
  NeuralConfig cfg;
  cfg.vocab_size = snapshot.get_int("vocab_size", 0);
  cfg.context_len = snapshot.get_int("context_len", 0);
  cfg.width = snapshot.get_int("width", 0);
  cfg.anchor_layers = snapshot.get_int("anchor_layers", 0);
  cfg.denoiser_layers = snapshot.get_int("denoiser_layers", 0);
  Rng rng(0);
  NeuralPredictor model = NeuralPredictor::init(cfg, rng);
  for (auto& [name, tensor] : model.named_tensors()) {
    if (!ckpt.has_array(name))
      throw format_error("checkpoint is missing array: " + name);
    const Eigen::MatrixXd& stored = ckpt.array(name);
    if (stored.rows() != tensor.rows() || stored.cols() != tensor.cols())
      throw format_error("checkpoint array shape mismatch for " + name);
    tensor = stored;
  }
  return model;
}

Checkpoint tabular_to_checkpoint(const TabularJoint& joint,
                                 std::uint64_t vocab_hash,
                                 const Config& resolved) {
  Checkpoint ckpt;
  ckpt.vocab_hash = vocab_hash;
  Config snapshot = resolved;
  snapshot.set("backend", "tabular");
  snapshot.set("vocab_size", std::to_string(joint.vocab_size()));
  snapshot.set("context_len", std::to_string(joint.seq_len()));
  ckpt.config_snapshot = snapshot.serialize();
  Eigen::MatrixXd table(1, joint.joint().size());
  table.row(0) = joint.joint().transpose();
  ckpt.arrays.emplace_back("tabular_joint", std::move(table));
  return ckpt;
}

TabularJoint tabular_from_checkpoint(const Checkpoint& ckpt) {
  const Config snapshot = Config::from_text(ckpt.config_snapshot);
  if (snapshot.get_str("backend", "") != "tabular")
    throw format_error("checkpoint does not hold a tabular model");
  const int vocab = snapshot.get_int("vocab_size", 0);
  const int seq_len = snapshot.get_int("context_len", 0);
  const Eigen::MatrixXd& table = ckpt.array("tabular_joint");
  return TabularJoint::from_probabilities(seq_len, vocab,
                                          table.row(0).transpose());
}

PredictFn predictor_from_checkpoint(const Checkpoint& ckpt,
                                    const Vocab& vocab) {
  if (ckpt.vocab_hash != vocab_hash(vocab))
    throw mismatch_error(
        "checkpoint was written against a different vocabulary");
  const Config snapshot = Config::from_text(ckpt.config_snapshot);
  const std::string backend = snapshot.get_str("backend", "neural");
  if (backend == "neural") {
    auto model = std::make_shared<NeuralPredictor>(neural_from_checkpoint(ckpt));
    if (model->config().vocab_size != vocab.size())
      throw mismatch_error("checkpoint vocabulary size mismatch");
    return [model](const TokenSeq& z) { return model->predict(z); };
  }
  if (backend == "tabular") {
    auto model = std::make_shared<TabularJoint>(tabular_from_checkpoint(ckpt));
    if (model->vocab_size() != vocab.size())
      throw mismatch_error("checkpoint vocabulary size mismatch");
    return [model](const TokenSeq& z) { return model->predict(z); };
  }
  throw format_error("unknown checkpoint backend: " + backend);
}

}  // namespace adlm
