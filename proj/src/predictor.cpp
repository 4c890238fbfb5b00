#include "adlm/predictor.hpp"

#include "adlm/errors.hpp"

#include <cmath>
#include <limits>

namespace adlm {

namespace {

ad::Matrix gaussian(int rows, int cols, double scale, Rng& rng) {
  ad::Matrix m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      // Box-Muller on our own uniform draws keeps init reproducible.
      const double u1 = std::max(rng.uniform01(), 1e-300);
      const double u2 = rng.uniform01();
      m(r, c) = scale * std::sqrt(-2.0 * std::log(u1)) *
                std::cos(2.0 * M_PI * u2);
    }
  return m;
}

}  // namespace

NeuralPredictor NeuralPredictor::init(const NeuralConfig& cfg, Rng& rng) {
  require(cfg.vocab_size >= 2, "vocabulary too small");
  require(cfg.context_len >= 1, "context length must be positive");
  require(cfg.width >= 1 && cfg.anchor_layers >= 1, "bad architecture sizes");
  NeuralPredictor p;
  p.cfg_ = cfg;
  const int K = cfg.vocab_size;
  const int W = cfg.width;
  auto add = [&](const std::string& name, int rows, int cols) {
    p.params_.emplace_back(name, gaussian(rows, cols, cfg.init_scale, rng));
  };
  add("tok_embed", K, W);
  add("pos_embed", cfg.context_len, W);
  for (int i = 0; i < cfg.anchor_layers; ++i) {
    add("anchor.layer" + std::to_string(i) + ".local", W, W);
    add("anchor.layer" + std::to_string(i) + ".bias", 1, W);
    add("anchor.layer" + std::to_string(i) + ".context", W, W);
  }
  add("anchor.head", W, K);
  add("anchor.head_bias", 1, K);
  add("anchor_proj", K, W);
  for (int i = 0; i < cfg.resolved_denoiser_layers(); ++i) {
    add("denoise.layer" + std::to_string(i) + ".local", W, W);
    add("denoise.layer" + std::to_string(i) + ".bias", 1, W);
    add("denoise.layer" + std::to_string(i) + ".context", W, W);
  }
  add("denoise.head", W, K);
  add("denoise.head_bias", 1, K);
  return p;
}

int NeuralPredictor::tensor_index(const std::string& name) const {
  for (int i = 0; i < tensor_count(); ++i)
    if (params_[i].first == name) return i;
  throw std::out_of_range("unknown parameter tensor: " + name);
}

std::size_t NeuralPredictor::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, m] : params_) n += m.size();
  return n;
}

void NeuralPredictor::gradient_step(const std::vector<ad::Matrix>& grads,
                                    double lr) {
  require(grads.size() == params_.size(), "gradient collection shape mismatch");
  for (std::size_t i = 0; i < params_.size(); ++i)
    params_[i].second -= lr * grads[i];
}

NeuralPredictor::TapeForward NeuralPredictor::forward(
    ad::Tape& tape, std::vector<ad::Tape::Var>& param_vars,
    const TokenSeq& seq, bool causal, bool with_anchor) const {
  param_vars.clear();
  param_vars.reserve(params_.size());
  for (const auto& [name, m] : params_) param_vars.push_back(tape.input(m));
  return forward_with_vars(tape, param_vars, seq, causal, with_anchor);
}

NeuralPredictor::TapeForward NeuralPredictor::forward_with_vars(
    ad::Tape& tape, const std::vector<ad::Tape::Var>& param_vars,
    const TokenSeq& seq, bool causal, bool with_anchor) const {
  const int L = static_cast<int>(seq.size());
  require(L >= 1 && L <= cfg_.context_len, "sequence exceeds context length");
  require(valid_token_seq(seq, cfg_.vocab_size), "token id outside vocabulary");
  const int mask = cfg_.vocab_size - 1;

  auto pv = [&](const std::string& name) {
    return param_vars[tensor_index(name)];
  };

  TokenSeq input = seq;
  if (causal) {
    // Shift right; the mask id (absent from text) doubles as start symbol.
    for (int l = L - 1; l >= 1; --l) input(l) = seq(l - 1);
    input(0) = mask;
  }

  ad::Tape::Var embed = tape.add(tape.gather_rows(pv("tok_embed"), input),
                                 tape.head_rows(pv("pos_embed"), L));

  auto mixing_stack = [&](ad::Tape::Var h, const std::string& prefix,
                          int layers) {
    for (int i = 0; i < layers; ++i) {
      const std::string base = prefix + ".layer" + std::to_string(i);
      ad::Tape::Var local = tape.add_rowvec(tape.matmul(h, pv(base + ".local")),
                                            pv(base + ".bias"));
      ad::Tape::Var pooled = causal ? tape.prefix_mean(h)
                                    : tape.mean_row_broadcast(h);
      ad::Tape::Var context = tape.matmul(pooled, pv(base + ".context"));
      h = tape.tanh(tape.add(local, context));
    }
    return h;
  };

  ad::Tape::Var anchor_h = mixing_stack(embed, "anchor", cfg_.anchor_layers);
  ad::Tape::Var anchor_logits = tape.add_rowvec(
      tape.matmul(anchor_h, pv("anchor.head")), pv("anchor.head_bias"));

  ad::Tape::Var denoise_in = embed;
  if (with_anchor) {
    denoise_in =
        tape.add(denoise_in, tape.matmul(anchor_logits, pv("anchor_proj")));
  }
  ad::Tape::Var denoise_h =
      mixing_stack(denoise_in, "denoise", cfg_.resolved_denoiser_layers());
  ad::Tape::Var denoise_logits = tape.add_rowvec(
      tape.matmul(denoise_h, pv("denoise.head")), pv("denoise.head_bias"));

  TapeForward out;
  out.anchor_probs = tape.softmax_rows(anchor_logits, mask);
  out.denoise_probs = tape.softmax_rows(denoise_logits, mask);
  return out;
}

PredictorOutput NeuralPredictor::predict(const TokenSeq& z_t) const {
  ad::Tape tape;
  std::vector<ad::Tape::Var> vars;
  TapeForward f = forward(tape, vars, z_t, /*causal=*/false,
                          /*with_anchor=*/true);
  PredictorOutput out{tape.val(f.anchor_probs), tape.val(f.denoise_probs)};
  // Carry-over: unmasked tokens are reproduced with probability one. Applied
  // after the softmax, so it holds for all parameter values.
  const int mask = cfg_.vocab_size - 1;
  for (Eigen::Index l = 0; l < z_t.size(); ++l) {
    if (z_t(l) != mask) {
      out.denoise.row(l).setZero();
      out.denoise(l, z_t(l)) = 1.0;
    }
  }
  return out;
}

PredictorOutput NeuralPredictor::predict_causal(const TokenSeq& x,
                                                bool with_anchor) const {
  ad::Tape tape;
  std::vector<ad::Tape::Var> vars;
  TapeForward f = forward(tape, vars, x, /*causal=*/true, with_anchor);
  return PredictorOutput{tape.val(f.anchor_probs), tape.val(f.denoise_probs)};
}

TabularJoint::TabularJoint(int seq_len, int vocab_size, Eigen::VectorXd joint)
    : seq_len_(seq_len), vocab_size_(vocab_size), joint_(std::move(joint)) {
  require(seq_len_ >= 1 && vocab_size_ >= 2, "bad tabular dimensions");
  std::size_t expect = 1;
  for (int l = 0; l < seq_len_; ++l) expect *= data_tokens();
  require(static_cast<std::size_t>(joint_.size()) == expect,
          "joint table size mismatch");
  const double total = joint_.sum();
  require(total > 0.0, "joint table has no mass");
  joint_ /= total;
}

TabularJoint TabularJoint::from_probabilities(int seq_len, int vocab_size,
                                              Eigen::VectorXd probs) {
  return TabularJoint(seq_len, vocab_size, std::move(probs));
}

TabularJoint TabularJoint::fit(int seq_len, int vocab_size,
                               const std::vector<TokenSeq>& samples) {
  require(!samples.empty(), "cannot fit a joint table on an empty sample set");
  std::size_t cells = 1;
  for (int l = 0; l < seq_len; ++l)
    cells *= static_cast<std::size_t>(vocab_size - 1);
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(cells);
  TabularJoint proto(seq_len, vocab_size,
                     Eigen::VectorXd::Ones(cells));
  for (const TokenSeq& x : samples) counts(proto.state_index(x)) += 1.0;
  return TabularJoint(seq_len, vocab_size, std::move(counts));
}

std::size_t TabularJoint::state_index(const TokenSeq& x) const {
  require(x.size() == seq_len_, "sequence length mismatch");
  std::size_t idx = 0;
  for (int l = 0; l < seq_len_; ++l) {
    require(x(l) >= 0 && x(l) < data_tokens(),
            "state contains a mask or out-of-range token");
    idx = idx * data_tokens() + static_cast<std::size_t>(x(l));
  }
  return idx;
}

TokenSeq TabularJoint::state_at(std::size_t index) const {
  TokenSeq x(seq_len_);
  for (int l = seq_len_ - 1; l >= 0; --l) {
    x(l) = static_cast<int>(index % data_tokens());
    index /= data_tokens();
  }
  return x;
}

double TabularJoint::prob_of(const TokenSeq& x) const {
  return joint_(state_index(x));
}

MixtureSeq TabularJoint::posterior_rows(const TokenSeq& z_t) const {
  require(z_t.size() == seq_len_, "sequence length mismatch");
  require(valid_token_seq(z_t, vocab_size_), "token id outside vocabulary");
  const int mask = vocab_size_ - 1;
  MixtureSeq rows = MixtureSeq::Zero(seq_len_, vocab_size_);
  Eigen::MatrixXd marginal = Eigen::MatrixXd::Zero(seq_len_, data_tokens());
  double evidence = 0.0;
  for (std::size_t s = 0; s < state_count(); ++s) {
    const double p = joint_(s);
    if (p <= 0.0) continue;
    const TokenSeq x = state_at(s);
    bool consistent = true;
    for (int l = 0; l < seq_len_ && consistent; ++l)
      if (z_t(l) != mask && z_t(l) != x(l)) consistent = false;
    if (!consistent) continue;
    evidence += p;
    for (int l = 0; l < seq_len_; ++l) marginal(l, x(l)) += p;
  }
  for (int l = 0; l < seq_len_; ++l) {
    if (z_t(l) != mask) {
      rows(l, z_t(l)) = 1.0;
    } else if (evidence > 0.0) {
      rows.row(l).head(data_tokens()) = marginal.row(l) / evidence;
    } else {
      // Conditioning event outside the support: fall back to uniform over
      // data tokens so the row stays a zero-masked distribution.
      rows.row(l).head(data_tokens()).setConstant(1.0 / data_tokens());
    }
  }
  return rows;
}

PredictorOutput TabularJoint::predict(const TokenSeq& z_t) const {
  MixtureSeq rows = posterior_rows(z_t);
  return PredictorOutput{rows, rows};
}

PredictorOutput TabularJoint::predict_anchored_oracle(
    const TokenSeq& z_t, const BoolArray& anchored) const {
  require(anchored.size() == seq_len_, "anchor flag length mismatch");
  PredictorOutput out = predict(z_t);
  const int mask = vocab_size_ - 1;
  for (int l = 0; l < seq_len_; ++l) {
    if (!anchored(l) || z_t(l) != mask) continue;
    Eigen::Index best = 0;
    out.denoise.row(l).head(data_tokens()).maxCoeff(&best);
    out.anchor.row(l).setZero();
    out.anchor(l, best) = 1.0;
    out.denoise.row(l) = out.anchor.row(l);
  }
  return out;
}

TabularBigram::TabularBigram(int vocab_size, Eigen::MatrixXd table)
    : vocab_size_(vocab_size), table_(std::move(table)) {
  require(table_.rows() == vocab_size_ && table_.cols() == vocab_size_,
          "bigram table must be K x K");
}

TabularBigram TabularBigram::fit(int vocab_size,
                                 const std::vector<TokenSeq>& seqs) {
  require(!seqs.empty(), "cannot fit a bigram table on an empty sample set");
  const int mask = vocab_size - 1;
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(vocab_size, vocab_size);
  for (const TokenSeq& x : seqs) {
    int prev = mask;
    for (Eigen::Index l = 0; l < x.size(); ++l) {
      counts(prev, x(l)) += 1.0;
      prev = x(l);
    }
  }
  for (int r = 0; r < vocab_size; ++r) {
    const double total = counts.row(r).sum();
    if (total > 0.0) {
      counts.row(r) /= total;
    } else {
      counts.row(r).head(vocab_size - 1)
          .setConstant(1.0 / (vocab_size - 1));
    }
  }
  return TabularBigram(vocab_size, std::move(counts));
}

PredictorOutput TabularBigram::predict_causal(const TokenSeq& x) const {
  require(valid_token_seq(x, vocab_size_), "token id outside vocabulary");
  const int mask = vocab_size_ - 1;
  MixtureSeq rows(x.size(), vocab_size_);
  int prev = mask;
  for (Eigen::Index l = 0; l < x.size(); ++l) {
    rows.row(l) = table_.row(prev);
    prev = x(l);
  }
  return PredictorOutput{rows, rows};
}

std::optional<std::uint64_t> cpt_param_count(int seq_len, int alphabet,
                                             CptMode mode, int anchor_size) {
  require(seq_len >= 1 && alphabet >= 1, "bad dimensions");
  require(anchor_size >= 0 && anchor_size < seq_len,
          "anchor set size must be in [0, L)");
  constexpr unsigned __int128 limit =
      std::numeric_limits<std::uint64_t>::max();
  const auto pow_checked =
      [&](int base, int exp) -> std::optional<unsigned __int128> {
    unsigned __int128 acc = 1;
    for (int i = 0; i < exp; ++i) {
      acc *= static_cast<unsigned __int128>(base);
      if (acc > limit) return std::nullopt;
    }
    return acc;
  };
  unsigned __int128 total = 0;
  switch (mode) {
    case CptMode::ArFull: {
      // K + K^2 + ... + K^L
      for (int l = 1; l <= seq_len; ++l) {
        const auto term = pow_checked(alphabet, l);
        if (!term) return std::nullopt;
        total += *term;
        if (total > limit) return std::nullopt;
      }
      break;
    }
    case CptMode::DlmFull: {
      const auto term = pow_checked(alphabet, seq_len);
      if (!term) return std::nullopt;
      total = static_cast<unsigned __int128>(seq_len) * *term;
      break;
    }
    case CptMode::ArAnchored:
    case CptMode::DlmAnchored: {
      const auto term = pow_checked(alphabet, anchor_size + 1);
      if (!term) return std::nullopt;
      total = static_cast<unsigned __int128>(seq_len) * *term;
      break;
    }
  }
  if (total > limit) return std::nullopt;
  return static_cast<std::uint64_t>(total);
}

}  // namespace adlm
