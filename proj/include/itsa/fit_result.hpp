#pragma once

#include <Eigen/Dense>

namespace itsa {

enum class Method { OlsNw, PraisWinsten };

inline const char* method_name(Method m) {
  return m == Method::OlsNw ? "olsnw" : "pw";
}

// Output of either estimator. The AR fields are filled only by the
// Prais-Winsten fit (rho_hat has size 0 otherwise); lag_used is only
// meaningful for the Newey-West fit (-1 otherwise).
struct FitResult {
  Method method = Method::OlsNw;
  Eigen::Matrix<double, 8, 1> beta = Eigen::Matrix<double, 8, 1>::Zero();
  Eigen::Matrix<double, 8, 8> cov = Eigen::Matrix<double, 8, 8>::Zero();
  Eigen::Matrix<double, 8, 1> se = Eigen::Matrix<double, 8, 1>::Zero();
  long n_obs = 0;
  long df = 0;  // n_obs minus the 8 regression parameters

  Eigen::VectorXd rho_hat;
  Eigen::MatrixXd rho_cov;
  int iterations = 0;
  bool converged = true;

  int lag_used = -1;
};

}  // namespace itsa
