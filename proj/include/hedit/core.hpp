#pragma once

// Shared numeric vocabulary for the hedit library: dense vector/matrix
// aliases, the contract-violation exception, and small helpers used by
// every module.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <sstream>
#include <stdexcept>
#include <string>

namespace hedit {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// A decoder hidden state. Length is the model's hidden dimension d.
using HiddenState = Eigen::VectorXd;

/// Thrown when a caller breaks a documented precondition (shape mismatch,
/// non-finite input, non-orthogonal bases, ...).
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {

template <typename... Args>
[[noreturn]] inline void fail_contract(const Args&... parts) {
  std::ostringstream os;
  (os << ... << parts);
  throw ContractViolation(os.str());
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& x) {
  return x.allFinite();
}

inline double max_abs(const Matrix& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

// In each column the entry of largest magnitude is made non-negative.
// Ties go to the lowest row index.
inline void apply_sign_convention(Matrix& columns) {
  for (Index j = 0; j < columns.cols(); ++j) {
    Index best = 0;
    double best_abs = -1.0;
    for (Index i = 0; i < columns.rows(); ++i) {
      const double a = std::abs(columns(i, j));
      if (a > best_abs) {
        best_abs = a;
        best = i;
      }
    }
    if (columns.rows() > 0 && columns(best, j) < 0.0) columns.col(j) *= -1.0;
  }
}

}  // namespace detail

inline void require_dim(const HiddenState& h, Index d, const char* what) {
  if (h.size() != d) {
    detail::fail_contract(what, ": expected length ", d, ", got ", h.size());
  }
}

inline void require_finite(const HiddenState& h, const char* what) {
  if (!h.allFinite()) detail::fail_contract(what, ": non-finite entry");
}

}  // namespace hedit
