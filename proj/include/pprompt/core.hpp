#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace pprompt {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// Exit codes of the CLI are taken from these values, so keep them stable.
enum class ErrorCode : int {
  invalid_argument = 2,
  dimension_mismatch = 3,
  schema = 4,
  non_finite = 5,
  missing_file = 6,
  version = 7,
  io = 8,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::dimension_mismatch: return "dimension_mismatch";
    case ErrorCode::schema: return "schema";
    case ErrorCode::non_finite: return "non_finite";
    case ErrorCode::missing_file: return "missing_file";
    case ErrorCode::version: return "version";
    case ErrorCode::io: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

namespace detail {

inline void require(bool cond, ErrorCode code, const std::string& msg) {
  if (!cond) throw Error(code, msg);
}

inline void require_dim(Index got, Index want, const char* what) {
  if (got != want) {
    throw Error(ErrorCode::dimension_mismatch,
                std::string(what) + ": expected dimension " +
                    std::to_string(want) + ", got " + std::to_string(got));
  }
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.allFinite();
}

// log(sum(exp(z))) without overflow.
inline double log_sum_exp(const Vector& z) {
  const double zmax = z.maxCoeff();
  return zmax + std::log((z.array() - zmax).exp().sum());
}

inline Vector softmax(const Vector& z) {
  Vector e = (z.array() - z.maxCoeff()).exp();
  return e / e.sum();
}

}  // namespace detail
}  // namespace pprompt
