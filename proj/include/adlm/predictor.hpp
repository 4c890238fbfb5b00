#pragma once

#include "adlm/autodiff.hpp"
#include "adlm/rng.hpp"
#include "adlm/types.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace adlm {

// Per-position mixtures from the two heads. Anchor rows are the importance
// head's distributions; denoise rows are zero-masked and, at unmasked
// positions, exact copies of the input token.
struct PredictorOutput {
  MixtureSeq anchor;
  MixtureSeq denoise;
};

// Bidirectional predictors map a corrupted sequence to mixtures for every
// position. Causal predictors map a sequence to teacher-forced rows: row l
// depends only on tokens 0..l-1.
using PredictFn = std::function<PredictorOutput(const TokenSeq&)>;

struct NeuralConfig {
  int vocab_size = 0;
  int context_len = 0;
  int width = 32;
  int anchor_layers = 2;
  int denoiser_layers = 0;  // 0 picks (anchor_layers + 1) / 2
  double init_scale = 0.02;

  int resolved_denoiser_layers() const {
    return denoiser_layers > 0 ? denoiser_layers : (anchor_layers + 1) / 2;
  }
};

// Token embedding plus additive position embedding, a stack of bidirectional
// mixing layers (per-position linear + pooled context fed back through a
// second linear + tanh), softmax heads for the anchor and the denoiser, and
// a learned projection carrying anchor logits into the denoiser input.
// There is no timestep input; the mask count in the input carries the time.
class NeuralPredictor {
 public:
  static NeuralPredictor init(const NeuralConfig& cfg, Rng& rng);

  const NeuralConfig& config() const { return cfg_; }

  // Diffusion-mode evaluation: bidirectional pooling, carry-over applied to
  // the denoise rows.
  PredictorOutput predict(const TokenSeq& z_t) const;

  // Next-token evaluation: inputs shifted right (mask id as the start
  // symbol), causal prefix pooling. Row l is the law of token l given the
  // prefix. with_anchor toggles the anchor-logit projection path.
  PredictorOutput predict_causal(const TokenSeq& x, bool with_anchor) const;

  struct TapeForward {
    ad::Tape::Var anchor_probs;
    ad::Tape::Var denoise_probs;
  };

  // Differentiable forward pass. param_vars is filled with one tape input per
  // parameter tensor, in parameter order, so callers can read gradients back.
  TapeForward forward(ad::Tape& tape, std::vector<ad::Tape::Var>& param_vars,
                      const TokenSeq& seq, bool causal, bool with_anchor) const;
  TapeForward forward_with_vars(ad::Tape& tape,
                                const std::vector<ad::Tape::Var>& param_vars,
                                const TokenSeq& seq, bool causal,
                                bool with_anchor) const;

  int tensor_count() const { return static_cast<int>(params_.size()); }
  const std::string& tensor_name(int i) const { return params_[i].first; }
  const ad::Matrix& tensor(int i) const { return params_[i].second; }
  ad::Matrix& tensor(int i) { return params_[i].second; }
  int tensor_index(const std::string& name) const;
  std::size_t scalar_count() const;

  void gradient_step(const std::vector<ad::Matrix>& grads, double lr);

  std::vector<std::pair<std::string, ad::Matrix>>& named_tensors() {
    return params_;
  }
  const std::vector<std::pair<std::string, ad::Matrix>>& named_tensors() const {
    return params_;
  }

 private:
  NeuralConfig cfg_;
  std::vector<std::pair<std::string, ad::Matrix>> params_;
};

// Exact tabular backend: a full joint table over data tokens (mask excluded
// from the support). predict() returns the conditional law of each position
// given the unmasked positions, which satisfies carry-over and zero-masking
// by construction.
class TabularJoint {
 public:
  TabularJoint(int seq_len, int vocab_size, Eigen::VectorXd joint);

  static TabularJoint from_probabilities(int seq_len, int vocab_size,
                                         Eigen::VectorXd probs);
  static TabularJoint fit(int seq_len, int vocab_size,
                          const std::vector<TokenSeq>& samples);

  MixtureSeq posterior_rows(const TokenSeq& z_t) const;
  PredictorOutput predict(const TokenSeq& z_t) const;
  // Lab construction: at the given positions the anchor head commits to the
  // most likely token and the denoiser copies that commitment.
  PredictorOutput predict_anchored_oracle(const TokenSeq& z_t,
                                          const BoolArray& anchored) const;

  double prob_of(const TokenSeq& x) const;
  int seq_len() const { return seq_len_; }
  int vocab_size() const { return vocab_size_; }
  int data_tokens() const { return vocab_size_ - 1; }
  const Eigen::VectorXd& joint() const { return joint_; }

  std::size_t state_count() const { return joint_.size(); }
  std::size_t state_index(const TokenSeq& x) const;
  TokenSeq state_at(std::size_t index) const;

 private:
  int seq_len_;
  int vocab_size_;
  Eigen::VectorXd joint_;  // (vocab_size-1)^seq_len entries
};

// Causal tabular model with a single-token context (the mask id doubles as
// the start symbol).
class TabularBigram {
 public:
  TabularBigram(int vocab_size, Eigen::MatrixXd table);

  static TabularBigram fit(int vocab_size, const std::vector<TokenSeq>& seqs);

  // Teacher-forced rows: row l = p(x_l | x_{l-1}).
  PredictorOutput predict_causal(const TokenSeq& x) const;
  const Eigen::MatrixXd& table() const { return table_; }
  int vocab_size() const { return vocab_size_; }

 private:
  int vocab_size_;
  Eigen::MatrixXd table_;  // K x K, rows indexed by previous token
};

enum class CptMode { ArFull, DlmFull, ArAnchored, DlmAnchored };

// Total tabular parameter count for each conditioning regime; nullopt when
// the count exceeds 64 bits.
std::optional<std::uint64_t> cpt_param_count(int seq_len, int alphabet,
                                             CptMode mode, int anchor_size);

}  // namespace adlm
