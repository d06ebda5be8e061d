#pragma once

// State-space realization of a Matern-3/2 Gaussian process prior, with the
// Kalman filter / RTS smoother that turn GP regression into an O(n) sweep.
//
// State x(t) = (f(t), f'(t)); dx/dt = F x + L w(t), f(t) = H x(t).

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <vector>

namespace hetstream {

using StateVector = Eigen::Vector2d;
using StateMatrix = Eigen::Matrix2d;

struct SsmKernel {
    StateMatrix F;
    Eigen::Vector2d L;
    Eigen::RowVector2d H;
    double qNoise = 0.0;  // spectral density of w(t)
    StateMatrix Pinf;     // stationary covariance
    int order = 1;        // highest derivative kept in the state
    double lambda = 0.0;  // sqrt(3) / lengthscale
    double lengthscale = 0.0;
    double signalVar = 0.0;

    // max |F Pinf + Pinf F^T + L q L^T|
    double lyapunov_residual() const;
};

struct GaussState {
    StateVector m = StateVector::Zero();
    StateMatrix P = StateMatrix::Zero();

    double mean() const { return m(0); }
    double var() const { return P(0, 0); }
};

struct Transition {
    StateMatrix Phi = StateMatrix::Identity();
    StateMatrix Q = StateMatrix::Zero();
};

SsmKernel matern32_ssm(double lengthscale, double signalVar);

// Matern-3/2 covariance at distance r.
double matern32_cov(double r, double lengthscale, double signalVar);

Transition discretize(const SsmKernel& kernel, double dt);

GaussState predict(const GaussState& prev, const Transition& tr);

struct KalmanStep {
    GaussState predicted;
    GaussState filtered;
    double innovation = 0.0;     // obs - H m^p
    double innovationVar = 0.0;  // H P^p H^T + obsVar
};

// Predict through `tr`, then condition on obs ~ N(H x, obsVar). Joseph-form update.
KalmanStep kalman_step(const GaussState& prev, const Transition& tr, const SsmKernel& kernel,
                       double obs, double obsVar);

struct SmoothResult {
    std::vector<GaussState> smoothed;
    bool regularized = false;  // a predicted covariance needed jitter to invert
};

// transitions[t] maps state t to t+1 (size n-1); predicted[t] is the one-step
// prediction at t.
SmoothResult rts_sweep(std::span<const GaussState> filtered, std::span<const GaussState> predicted,
                       std::span<const Transition> transitions);

struct FilterSmoothResult {
    std::vector<GaussState> predicted;
    std::vector<GaussState> filtered;
    std::vector<GaussState> smoothed;
    std::vector<double> innovations;
    std::vector<double> innovationVars;
    bool regularized = false;
};

// Full forward-backward pass. `init` is the state distribution at `initTime`
// (<= inputs[0]); inputs must be non-decreasing.
FilterSmoothResult filter_smooth(const SsmKernel& kernel, std::span<const double> inputs,
                                 std::span<const double> obs, std::span<const double> obsVars,
                                 const GaussState& init, double initTime);

struct GpPosterior {
    Eigen::VectorXd mean;
    Eigen::VectorXd var;
};

// Dense O(n^3) Matern-3/2 regression evaluated at the inputs. Reference
// implementation for checking the state-space route.
GpPosterior exact_gp_posterior(std::span<const double> inputs, std::span<const double> obs,
                               std::span<const double> obsVars, double lengthscale,
                               double signalVar);

}  // namespace hetstream
