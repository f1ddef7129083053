#include "ddcmix/linear_operator.hpp"

#include <memory>
#include <stdexcept>
#include <string>
#include <utility>

namespace ddcmix {

LinearOperator::LinearOperator(Eigen::Index dim, ApplyFn apply)
    : dim_(dim), apply_(std::move(apply)) {
  if (dim_ <= 0) throw std::invalid_argument("LinearOperator: dimension must be positive");
  if (!apply_) throw std::invalid_argument("LinearOperator: empty apply function");
}

Eigen::VectorXd LinearOperator::apply(const Eigen::Ref<const Eigen::VectorXd>& v) const {
  if (v.size() != dim_)
    throw std::invalid_argument("LinearOperator::apply: expected length " + std::to_string(dim_) +
                                ", got " + std::to_string(v.size()));
  return apply_(v);
}

LinearOperator LinearOperator::identity(Eigen::Index dim) {
  return LinearOperator(dim, [](const Eigen::Ref<const Eigen::VectorXd>& v) {
    return Eigen::VectorXd(v);
  });
}

LinearOperator LinearOperator::from_dense(Eigen::MatrixXd a) {
  if (a.rows() != a.cols()) throw std::invalid_argument("LinearOperator::from_dense: matrix not square");
  const Eigen::Index n = a.rows();
  auto m = std::make_shared<Eigen::MatrixXd>(std::move(a));
  return LinearOperator(n, [m](const Eigen::Ref<const Eigen::VectorXd>& v) {
    return Eigen::VectorXd((*m) * v);
  });
}

Eigen::MatrixXd kron_matmat(const std::vector<Eigen::MatrixXd>& factors,
                            const Eigen::Ref<const Eigen::MatrixXd>& v) {
  if (factors.empty()) throw std::invalid_argument("kron_matmat: no factors");
  Eigen::Index total = 1;
  for (const auto& f : factors) {
    if (f.rows() != f.cols() || f.rows() == 0)
      throw std::invalid_argument("kron_matmat: factors must be square and non-empty");
    total *= f.rows();
  }
  if (v.rows() != total)
    throw std::invalid_argument("kron_matmat: expected length " + std::to_string(total) +
                                ", got " + std::to_string(v.rows()));

  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::MatrixXd out(v.rows(), v.cols());
  Eigen::VectorXd cur(total), next(total);
  for (Eigen::Index c = 0; c < v.cols(); ++c) {
    cur = v.col(c);
    Eigen::Index left = 1, right = total;
    for (const auto& f : factors) {
      const Eigen::Index l = f.rows();
      right /= l;
      for (Eigen::Index blk = 0; blk < left; ++blk) {
        Eigen::Map<const RowMat> in(cur.data() + blk * l * right, l, right);
        Eigen::Map<RowMat> dst(next.data() + blk * l * right, l, right);
        dst.noalias() = f * in;
      }
      std::swap(cur, next);
      left *= l;
    }
    out.col(c) = cur;
  }
  return out;
}

Eigen::VectorXd kron_matvec(const std::vector<Eigen::MatrixXd>& factors,
                            const Eigen::Ref<const Eigen::VectorXd>& v) {
  return kron_matmat(factors, v);
}

KroneckerOperator::KroneckerOperator(std::vector<Eigen::MatrixXd> factors)
    : factors_(std::move(factors)) {
  if (factors_.empty()) throw std::invalid_argument("KroneckerOperator: no factors");
  dim_ = 1;
  for (const auto& f : factors_) {
    if (f.rows() != f.cols() || f.rows() == 0)
      throw std::invalid_argument("KroneckerOperator: factors must be square and non-empty");
    dim_ *= f.rows();
  }
}

Eigen::VectorXd KroneckerOperator::apply(const Eigen::Ref<const Eigen::VectorXd>& v) const {
  return kron_matvec(factors_, v);
}

LinearOperator KroneckerOperator::as_operator() const {
  auto self = *this;  // value copy keeps the factors alive inside the closure
  return LinearOperator(dim_, [self](const Eigen::Ref<const Eigen::VectorXd>& v) {
    return self.apply(v);
  });
}

}  // namespace ddcmix
