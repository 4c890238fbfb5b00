#pragma once

#include "adlm/types.hpp"

#include <Eigen/Core>

#include <functional>
#include <vector>

namespace adlm::ad {

using Matrix = Eigen::MatrixXd;

// One weighted log-probability pick: weight * log(probs(row, col)).
struct GatherTerm {
  int row = 0;
  int col = 0;
  double weight = 1.0;
};

// Small reverse-mode tape over dense matrices. Operations append nodes; a
// single backward sweep accumulates gradients for every tracked input.
// Backward closures capture node indices only, never pointers into the node
// vector, so growth during the forward pass is safe.
class Tape {
 public:
  struct Var {
    int i = -1;
    bool valid() const { return i >= 0; }
  };

  Var input(Matrix value);

  const Matrix& val(Var v) const { return nodes_[v.i].value; }
  const Matrix& grad(Var v) const { return nodes_[v.i].grad; }

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  // bias is 1 x C, added to every row of a.
  Var add_rowvec(Var a, Var bias);
  Var tanh(Var a);
  Var scale(Var a, double s);
  // Every row becomes the column-wise mean of a (global pooled context).
  Var mean_row_broadcast(Var a);
  // Row l becomes the mean of rows 0..l (causal pooled context).
  Var prefix_mean(Var a);
  // Picks rows of a table by id (embedding lookup).
  Var gather_rows(Var table, const TokenSeq& ids);
  // First n rows of a.
  Var head_rows(Var a, int n);
  // Row-wise softmax; drop_col (if >= 0) is excluded and gets probability 0.
  Var softmax_rows(Var logits, int drop_col);
  // 1x1 scalar: sum of weight * log(probs(row, col)) over the terms.
  Var weighted_log_sum(Var probs, std::vector<GatherTerm> terms);
  Var add_scalars(const std::vector<Var>& vs);
  Var zero_scalar();

  // Seeds d(root)=1 and sweeps the tape in reverse.
  void backward(Var root);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    std::function<void(Tape&)> back;
  };

  Var push(Matrix value, std::function<void(Tape&)> back = nullptr);
  Matrix& grad_ref(int i) { return nodes_[i].grad; }

  std::vector<Node> nodes_;
};

}  // namespace adlm::ad
