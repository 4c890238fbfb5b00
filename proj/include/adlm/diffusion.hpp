#pragma once

#include "adlm/types.hpp"

#include <cmath>

namespace adlm {

// Kernels of the absorbing forward process and its reverse-time posteriors.
// Every function returns an L x K matrix whose row l is the categorical law
// of position l; the mask is always the last token id. All math is in
// double precision so the enumeration oracles can assert exact values.

inline int mask_id_of(int vocab_size) { return vocab_size - 1; }

namespace detail {

inline void check_zero_masking(const MixtureSeq& pred, const char* what) {
  const Eigen::Index mask = pred.cols() - 1;
  for (Eigen::Index l = 0; l < pred.rows(); ++l) {
    require(std::abs(pred(l, mask)) <= 1e-12, what);
    require(std::abs(pred.row(l).sum() - 1.0) <= 1e-9,
            "prediction row does not sum to 1");
  }
}

}  // namespace detail

// Law of the corrupted sequence at masking level alpha_t: each token is kept
// with probability alpha_t and replaced by the mask otherwise.
inline MixtureSeq forward_marginal(const TokenSeq& x, double alpha_t,
                                   int vocab_size) {
  require(alpha_t >= 0.0 && alpha_t <= 1.0, "alpha_t outside [0,1]");
  require(valid_token_seq(x, vocab_size), "token id outside vocabulary");
  const int mask = mask_id_of(vocab_size);
  MixtureSeq out = MixtureSeq::Zero(x.size(), vocab_size);
  for (Eigen::Index l = 0; l < x.size(); ++l) {
    out(l, x(l)) += alpha_t;
    out(l, mask) += 1.0 - alpha_t;
  }
  return out;
}

// One-step kernel s -> t of the absorbing chain. Masked positions stay
// masked; others survive with probability alpha_t / alpha_s.
inline MixtureSeq forward_transition(const TokenSeq& z_s, double alpha_t,
                                     double alpha_s, int vocab_size) {
  require(alpha_s > 0.0 && alpha_s <= 1.0, "alpha_s outside (0,1]");
  require(alpha_t >= 0.0 && alpha_t <= alpha_s, "alpha_t must be <= alpha_s");
  require(valid_token_seq(z_s, vocab_size), "token id outside vocabulary");
  const int mask = mask_id_of(vocab_size);
  const double keep = alpha_t / alpha_s;
  MixtureSeq out = MixtureSeq::Zero(z_s.size(), vocab_size);
  for (Eigen::Index l = 0; l < z_s.size(); ++l) {
    out(l, z_s(l)) += keep;
    out(l, mask) += 1.0 - keep;
  }
  return out;
}

// Reverse posterior with the predicted mixture substituted for the clean
// token. Unmasked positions carry over; masked positions mix the prediction
// with staying masked.
inline MixtureSeq reverse_posterior(const TokenSeq& z_t,
                                    const MixtureSeq& x_pred, double alpha_t,
                                    double alpha_s) {
  const int vocab_size = static_cast<int>(x_pred.cols());
  const int mask = mask_id_of(vocab_size);
  require(z_t.size() == x_pred.rows(), "sequence/prediction length mismatch");
  require(valid_token_seq(z_t, vocab_size), "token id outside vocabulary");
  require(alpha_s >= alpha_t, "alpha_s must be >= alpha_t");
  detail::check_zero_masking(x_pred, "prediction places mass on the mask");
  MixtureSeq out = MixtureSeq::Zero(z_t.size(), vocab_size);
  const double denom = 1.0 - alpha_t;
  for (Eigen::Index l = 0; l < z_t.size(); ++l) {
    if (z_t(l) != mask) {
      out(l, z_t(l)) = 1.0;
    } else {
      require(denom > 0.0, "masked position with alpha_t = 1");
      out.row(l) = ((alpha_s - alpha_t) / denom) * x_pred.row(l);
      out(l, mask) += (1.0 - alpha_s) / denom;
    }
  }
  return out;
}

// Reverse posterior with remasking: unmasked tokens may return to the mask
// with probability sigma_t, and the masked-case coefficients absorb sigma_t
// so that the forward marginals are preserved.
inline MixtureSeq anchored_posterior(const TokenSeq& z_t,
                                     const MixtureSeq& x_pred, double alpha_t,
                                     double alpha_s, double sigma_t) {
  const int vocab_size = static_cast<int>(x_pred.cols());
  const int mask = mask_id_of(vocab_size);
  require(z_t.size() == x_pred.rows(), "sequence/prediction length mismatch");
  require(valid_token_seq(z_t, vocab_size), "token id outside vocabulary");
  detail::check_zero_masking(x_pred, "prediction places mass on the mask");
  const double denom = 1.0 - alpha_t;
  const double tol = 1e-12;
  require(sigma_t >= -tol && sigma_t <= 1.0 + tol, "sigma_t outside [0,1]");
  double predict_mass = 0.0;
  double mask_mass = 0.0;
  if (denom > 0.0) {
    predict_mass = (alpha_s - (1.0 - sigma_t) * alpha_t) / denom;
    mask_mass = (1.0 - alpha_s - alpha_t * sigma_t) / denom;
    require(predict_mass >= -tol && predict_mass <= 1.0 + tol,
            "posterior coefficient outside [0,1]");
    require(mask_mass >= -tol && mask_mass <= 1.0 + tol,
            "posterior coefficient outside [0,1]");
  }
  MixtureSeq out = MixtureSeq::Zero(z_t.size(), vocab_size);
  for (Eigen::Index l = 0; l < z_t.size(); ++l) {
    if (z_t(l) != mask) {
      out(l, z_t(l)) = 1.0 - sigma_t;
      out(l, mask) += sigma_t;
    } else {
      require(denom > 0.0, "masked position with alpha_t = 1");
      out.row(l) = predict_mass * x_pred.row(l);
      out(l, mask) += mask_mass;
    }
  }
  return out;
}

// Transition law over anchor outcomes. Unmasked positions keep the carried
// token (its own anchor value); masked positions mix the predicted anchor
// row with staying masked using the same coefficients as the posterior.
inline MixtureSeq anchor_transition(const TokenSeq& z_t,
                                    const MixtureSeq& y_pred,
                                    const AnchorMask& y_true, double alpha_t,
                                    double alpha_s, double sigma_t) {
  const int vocab_size = static_cast<int>(y_pred.cols());
  const int mask = mask_id_of(vocab_size);
  require(z_t.size() == y_pred.rows(), "sequence/prediction length mismatch");
  require(y_true.important.size() == z_t.size(),
          "anchor mask length mismatch");
  require(valid_token_seq(z_t, vocab_size), "token id outside vocabulary");
  const double denom = 1.0 - alpha_t;
  const double tol = 1e-12;
  double predict_mass = 0.0;
  double mask_mass = 0.0;
  if (denom > 0.0) {
    predict_mass = (alpha_s - (1.0 - sigma_t) * alpha_t) / denom;
    mask_mass = (1.0 - alpha_s - alpha_t * sigma_t) / denom;
    require(predict_mass >= -tol && predict_mass <= 1.0 + tol,
            "posterior coefficient outside [0,1]");
    require(mask_mass >= -tol && mask_mass <= 1.0 + tol,
            "posterior coefficient outside [0,1]");
  }
  MixtureSeq out = MixtureSeq::Zero(z_t.size(), vocab_size);
  for (Eigen::Index l = 0; l < z_t.size(); ++l) {
    if (z_t(l) != mask) {
      const int anchor = y_true.important(l) ? y_true.targets(l) : z_t(l);
      out(l, anchor) = 1.0 - sigma_t;
      out(l, mask) += sigma_t;
    } else {
      require(denom > 0.0, "masked position with alpha_t = 1");
      out.row(l) = predict_mass * y_pred.row(l);
      out(l, mask) += mask_mass;
    }
  }
  return out;
}

}  // namespace adlm
