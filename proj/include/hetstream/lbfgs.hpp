#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <functional>

namespace hetstream {

struct LbfgsOptions {
    std::size_t memory = 10;
    std::size_t maxIterations = 100;
    double gradientTolerance = 1e-6;  // stop when |grad|_inf falls below
    std::size_t maxLineSearchSteps = 40;
    double c1 = 1e-4;  // sufficient decrease
    double c2 = 0.9;   // curvature (strong Wolfe)
};

struct LbfgsResult {
    Eigen::VectorXd x;
    double value = 0.0;
    double gradientInfNorm = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
    bool lineSearchFailed = false;  // x is the best iterate seen
};

// Returns f(x) and writes the gradient into `grad`.
using GradientObjective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd& grad)>;

// Minimizes f with limited-memory BFGS and a strong-Wolfe line search.
LbfgsResult lbfgs_minimize(const GradientObjective& f, Eigen::VectorXd x0,
                           const LbfgsOptions& options = {});

}  // namespace hetstream
