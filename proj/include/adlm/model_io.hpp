#pragma once

#include "adlm/checkpoint.hpp"
#include "adlm/config.hpp"
#include "adlm/corpus.hpp"
#include "adlm/predictor.hpp"

namespace adlm {

Checkpoint neural_to_checkpoint(const NeuralPredictor& model,
                                std::uint64_t vocab_hash,
                                const Config& resolved);
NeuralPredictor neural_from_checkpoint(const Checkpoint& ckpt);

Checkpoint tabular_to_checkpoint(const TabularJoint& joint,
                                 std::uint64_t vocab_hash,
                                 const Config& resolved);
TabularJoint tabular_from_checkpoint(const Checkpoint& ckpt);

// Builds the evaluation closure for whichever backend the checkpoint holds;
// throws mismatch_error when the vocabulary hash disagrees.
PredictFn predictor_from_checkpoint(const Checkpoint& ckpt, const Vocab& vocab);

}  // namespace adlm
