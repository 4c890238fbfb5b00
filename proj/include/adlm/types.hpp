#pragma once

#include <Eigen/Core>

#include <stdexcept>

namespace adlm {

// Token ids over a vocabulary of size K whose last id (K-1) is the mask.
using TokenSeq = Eigen::VectorXi;

// One categorical distribution per position: L x K with rows on the simplex.
using MixtureSeq = Eigen::MatrixXd;

// A single position's categorical over tokens.
using PosteriorRow = Eigen::RowVectorXd;

using BoolArray = Eigen::Array<bool, Eigen::Dynamic, 1>;

// Positions whose token occurs at most tau times within the sequence.
// targets[l] is meaningful only where important[l] is set.
struct AnchorMask {
  BoolArray important;
  TokenSeq targets;
};

inline PosteriorRow onehot_row(int size, int id) {
  PosteriorRow r = PosteriorRow::Zero(size);
  r(id) = 1.0;
  return r;
}

inline bool is_simplex_row(const Eigen::Ref<const PosteriorRow>& row,
                           double tol = 1e-12) {
  if (row.minCoeff() < -tol) return false;
  return std::abs(row.sum() - 1.0) <= tol;
}

inline void require(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

inline bool valid_token_seq(const TokenSeq& seq, int vocab_size) {
  for (Eigen::Index l = 0; l < seq.size(); ++l)
    if (seq(l) < 0 || seq(l) >= vocab_size) return false;
  return true;
}

}  // namespace adlm
