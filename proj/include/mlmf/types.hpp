#pragma once

#include <Eigen/Core>
#include <stdexcept>
#include <string>

namespace mlmf {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Error thrown on contract violations (bad dimensions, infeasible inputs,
/// non-contractive parameters, ...). Message carries the offending context.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

inline void check(bool cond, const std::string& msg) {
  if (!cond) throw Error(msg);
}

inline void check_dim(Eigen::Index got, Eigen::Index want, const std::string& who) {
  if (got != want)
    throw Error(who + ": dimension mismatch, got " + std::to_string(got) +
                ", expected " + std::to_string(want));
}

}  // namespace mlmf
