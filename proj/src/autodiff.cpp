#include "adlm/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

namespace adlm::ad {

Tape::Var Tape::push(Matrix value, std::function<void(Tape&)> back) {
  Node node;
  node.grad = Matrix::Zero(value.rows(), value.cols());
  node.value = std::move(value);
  node.back = std::move(back);
  nodes_.push_back(std::move(node));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Tape::Var Tape::input(Matrix value) { return push(std::move(value)); }

Tape::Var Tape::matmul(Var a, Var b) {
  Matrix value = val(a) * val(b);
  Var out{static_cast<int>(nodes_.size())};
  const int ia = a.i, ib = b.i, io = out.i;
  return push(std::move(value), [ia, ib, io](Tape& t) {
    const Matrix& g = t.nodes_[io].grad;
    t.grad_ref(ia).noalias() += g * t.nodes_[ib].value.transpose();
    t.grad_ref(ib).noalias() += t.nodes_[ia].value.transpose() * g;
  });
}

Tape::Var Tape::add(Var a, Var b) {
  Matrix value = val(a) + val(b);
  Var out{static_cast<int>(nodes_.size())};
  const int ia = a.i, ib = b.i, io = out.i;
  return push(std::move(value), [ia, ib, io](Tape& t) {
    t.grad_ref(ia) += t.nodes_[io].grad;
    t.grad_ref(ib) += t.nodes_[io].grad;
  });
}

Tape::Var Tape::add_rowvec(Var a, Var bias) {
  Matrix value = val(a);
  value.rowwise() += val(bias).row(0);
  Var out{static_cast<int>(nodes_.size())};
  const int ia = a.i, ib = bias.i, io = out.i;
  return push(std::move(value), [ia, ib, io](Tape& t) {
    const Matrix& g = t.nodes_[io].grad;
    t.grad_ref(ia) += g;
    t.grad_ref(ib).row(0) += g.colwise().sum();
  });
}

Tape::Var Tape::tanh(Var a) {
  Matrix value = val(a).array().tanh().matrix();
  Var out{static_cast<int>(nodes_.size())};
  const int ia = a.i, io = out.i;
  return push(std::move(value), [ia, io](Tape& t) {
    const Matrix& y = t.nodes_[io].value;
    const Matrix& g = t.nodes_[io].grad;
    t.grad_ref(ia).array() += g.array() * (1.0 - y.array().square());
  });
}

Tape::Var Tape::scale(Var a, double s) {
  Matrix value = s * val(a);
  Var out{static_cast<int>(nodes_.size())};
  const int ia = a.i, io = out.i;
  return push(std::move(value), [ia, io, s](Tape& t) {
    t.grad_ref(ia) += s * t.nodes_[io].grad;
  });
}

Tape::Var Tape::mean_row_broadcast(Var a) {
  const Matrix& x = val(a);
  const double inv_rows = 1.0 / static_cast<double>(x.rows());
  Matrix value(x.rows(), x.cols());
  value.rowwise() = (x.colwise().sum() * inv_rows).row(0);
  Var out{static_cast<int>(nodes_.size())};
  const int ia = a.i, io = out.i;
  return push(std::move(value), [ia, io, inv_rows](Tape& t) {
    const Matrix& g = t.nodes_[io].grad;
    const Eigen::RowVectorXd col_sum = g.colwise().sum() * inv_rows;
    t.grad_ref(ia).rowwise() += col_sum;
  });
}

Tape::Var Tape::prefix_mean(Var a) {
  const Matrix& x = val(a);
  Matrix value(x.rows(), x.cols());
  Eigen::RowVectorXd running = Eigen::RowVectorXd::Zero(x.cols());
  for (Eigen::Index l = 0; l < x.rows(); ++l) {
    running += x.row(l);
    value.row(l) = running / static_cast<double>(l + 1);
  }
  Var out{static_cast<int>(nodes_.size())};
  const int ia = a.i, io = out.i;
  return push(std::move(value), [ia, io](Tape& t) {
    const Matrix& g = t.nodes_[io].grad;
    Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(g.cols());
    Matrix& ga = t.grad_ref(ia);
    for (Eigen::Index l = g.rows() - 1; l >= 0; --l) {
      acc += g.row(l) / static_cast<double>(l + 1);
      ga.row(l) += acc;
    }
  });
}

Tape::Var Tape::gather_rows(Var table, const TokenSeq& ids) {
  const Matrix& tab = val(table);
  Matrix value(ids.size(), tab.cols());
  for (Eigen::Index l = 0; l < ids.size(); ++l) value.row(l) = tab.row(ids(l));
  Var out{static_cast<int>(nodes_.size())};
  const int it = table.i, io = out.i;
  TokenSeq ids_copy = ids;
  return push(std::move(value), [it, io, ids_copy](Tape& t) {
    const Matrix& g = t.nodes_[io].grad;
    Matrix& gt = t.grad_ref(it);
    for (Eigen::Index l = 0; l < ids_copy.size(); ++l)
      gt.row(ids_copy(l)) += g.row(l);
  });
}

Tape::Var Tape::head_rows(Var a, int n) {
  Matrix value = val(a).topRows(n);
  Var out{static_cast<int>(nodes_.size())};
  const int ia = a.i, io = out.i;
  return push(std::move(value), [ia, io, n](Tape& t) {
    t.grad_ref(ia).topRows(n) += t.nodes_[io].grad;
  });
}

Tape::Var Tape::softmax_rows(Var logits, int drop_col) {
  const Matrix& z = val(logits);
  Matrix value = Matrix::Zero(z.rows(), z.cols());
  for (Eigen::Index l = 0; l < z.rows(); ++l) {
    double max_logit = -std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < z.cols(); ++k)
      if (k != drop_col) max_logit = std::max(max_logit, z(l, k));
    double sum = 0.0;
    for (Eigen::Index k = 0; k < z.cols(); ++k) {
      if (k == drop_col) continue;
      value(l, k) = std::exp(z(l, k) - max_logit);
      sum += value(l, k);
    }
    for (Eigen::Index k = 0; k < z.cols(); ++k)
      if (k != drop_col) value(l, k) /= sum;
  }
  Var out{static_cast<int>(nodes_.size())};
  const int ia = logits.i, io = out.i;
  return push(std::move(value), [ia, io, drop_col](Tape& t) {
    const Matrix& y = t.nodes_[io].value;
    const Matrix& g = t.nodes_[io].grad;
    Matrix& gz = t.grad_ref(ia);
    for (Eigen::Index l = 0; l < y.rows(); ++l) {
      double dot = 0.0;
      for (Eigen::Index k = 0; k < y.cols(); ++k)
        if (k != drop_col) dot += g(l, k) * y(l, k);
      for (Eigen::Index k = 0; k < y.cols(); ++k)
        if (k != drop_col) gz(l, k) += y(l, k) * (g(l, k) - dot);
    }
  });
}

Tape::Var Tape::weighted_log_sum(Var probs, std::vector<GatherTerm> terms) {
  const Matrix& p = val(probs);
  double acc = 0.0;
  for (const GatherTerm& term : terms)
    acc += term.weight * std::log(p(term.row, term.col));
  Matrix value(1, 1);
  value(0, 0) = acc;
  Var out{static_cast<int>(nodes_.size())};
  const int ip = probs.i, io = out.i;
  return push(std::move(value), [ip, io, terms = std::move(terms)](Tape& t) {
    const double g = t.nodes_[io].grad(0, 0);
    const Matrix& p = t.nodes_[ip].value;
    Matrix& gp = t.grad_ref(ip);
    for (const GatherTerm& term : terms)
      gp(term.row, term.col) += g * term.weight / p(term.row, term.col);
  });
}

Tape::Var Tape::add_scalars(const std::vector<Var>& vs) {
  double acc = 0.0;
  for (Var v : vs) acc += val(v)(0, 0);
  Matrix value(1, 1);
  value(0, 0) = acc;
  Var out{static_cast<int>(nodes_.size())};
  std::vector<int> idx;
  idx.reserve(vs.size());
  for (Var v : vs) idx.push_back(v.i);
  const int io = out.i;
  return push(std::move(value), [idx = std::move(idx), io](Tape& t) {
    const double g = t.nodes_[io].grad(0, 0);
    for (int i : idx) t.grad_ref(i)(0, 0) += g;
  });
}

Tape::Var Tape::zero_scalar() { return push(Matrix::Zero(1, 1)); }

void Tape::backward(Var root) {
  require(val(root).rows() == 1 && val(root).cols() == 1,
          "backward expects a scalar root");
  nodes_[root.i].grad(0, 0) = 1.0;
  for (int i = root.i; i >= 0; --i)
    if (nodes_[i].back) nodes_[i].back(*this);
}

}  // namespace adlm::ad
