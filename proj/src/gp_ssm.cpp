#include "hetstream/gp_ssm.hpp"

#include <cmath>
#include <string>

#include "hetstream/error.hpp"

namespace hetstream {
namespace {

constexpr double kJitter = 1e-9;

StateMatrix symmetrize(const StateMatrix& P) { return 0.5 * (P + P.transpose()); }

}  // namespace

double SsmKernel::lyapunov_residual() const {
    const StateMatrix R = F * Pinf + Pinf * F.transpose() + L * qNoise * L.transpose();
    return R.cwiseAbs().maxCoeff();
}

SsmKernel matern32_ssm(double lengthscale, double signalVar) {
    if (!(lengthscale > 0.0) || !(signalVar > 0.0) || !std::isfinite(lengthscale) ||
        !std::isfinite(signalVar)) {
        throw ConfigError("matern32_ssm: lengthscale and signal variance must be positive, got " +
                          std::to_string(lengthscale) + ", " + std::to_string(signalVar));
    }
    SsmKernel k;
    const double lam = std::sqrt(3.0) / lengthscale;
    k.lambda = lam;
    k.lengthscale = lengthscale;
    k.signalVar = signalVar;
    k.order = 1;
    k.F << 0.0, 1.0, -lam * lam, -2.0 * lam;
    k.L << 0.0, 1.0;
    k.H << 1.0, 0.0;
    k.qNoise = 4.0 * lam * lam * lam * signalVar;
    // Closed-form solution of F P + P F^T + L q L^T = 0.
    k.Pinf << signalVar, 0.0, 0.0, lam * lam * signalVar;
    return k;
}

double matern32_cov(double r, double lengthscale, double signalVar) {
    const double a = std::sqrt(3.0) * std::abs(r) / lengthscale;
    return signalVar * (1.0 + a) * std::exp(-a);
}

Transition discretize(const SsmKernel& kernel, double dt) {
    if (!(dt >= 0.0) || !std::isfinite(dt)) {
        throw ContractError("discretize: dt must be finite and non-negative");
    }
    Transition tr;
    if (dt == 0.0) return tr;
    const double lam = kernel.lambda;
    const double e = std::exp(-lam * dt);
    // exp(F dt) for the repeated eigenvalue -lambda.
    tr.Phi << e * (1.0 + lam * dt), e * dt, -e * lam * lam * dt, e * (1.0 - lam * dt);
    tr.Q = symmetrize(kernel.Pinf - tr.Phi * kernel.Pinf * tr.Phi.transpose());
    return tr;
}

GaussState predict(const GaussState& prev, const Transition& tr) {
    GaussState out;
    out.m = tr.Phi * prev.m;
    out.P = symmetrize(tr.Phi * prev.P * tr.Phi.transpose() + tr.Q);
    return out;
}

KalmanStep kalman_step(const GaussState& prev, const Transition& tr, const SsmKernel& kernel,
                       double obs, double obsVar) {
    if (!std::isfinite(obs) || !std::isfinite(obsVar) || !(obsVar > 0.0)) {
        throw NumericError("kalman_step: observation must be finite with positive variance");
    }
    KalmanStep step;
    step.predicted = predict(prev, tr);
    const auto& H = kernel.H;
    const StateMatrix& Pp = step.predicted.P;

    const double S = (H * Pp * H.transpose())(0, 0) + obsVar;
    const StateVector gain = Pp * H.transpose() / S;
    const double innov = obs - (H * step.predicted.m)(0, 0);

    step.filtered.m = step.predicted.m + gain * innov;
    const StateMatrix IKH = StateMatrix::Identity() - gain * H;
    step.filtered.P = symmetrize(IKH * Pp * IKH.transpose() + gain * obsVar * gain.transpose());
    step.innovation = innov;
    step.innovationVar = S;
    return step;
}

SmoothResult rts_sweep(std::span<const GaussState> filtered, std::span<const GaussState> predicted,
                       std::span<const Transition> transitions) {
    const std::size_t n = filtered.size();
    if (n == 0 || predicted.size() != n || transitions.size() + 1 != n) {
        throw ContractError("rts_sweep: misaligned inputs");
    }
    SmoothResult out;
    out.smoothed.resize(n);
    out.smoothed[n - 1] = filtered[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) {
        const StateMatrix& Phi = transitions[i].Phi;
        StateMatrix Pp = predicted[i + 1].P;
        Eigen::LDLT<StateMatrix> ldlt(Pp);
        if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().minCoeff() > 1e-14 * Pp.trace())) {
            Pp += kJitter * StateMatrix::Identity();
            ldlt.compute(Pp);
            out.regularized = true;
        }
        // J = P^f Phi^T (P^p)^{-1}, via (P^p)^{-1} Phi P^f since P^p is symmetric.
        const StateMatrix J = ldlt.solve(Phi * filtered[i].P).transpose();
        GaussState& s = out.smoothed[i];
        s.m = filtered[i].m + J * (out.smoothed[i + 1].m - predicted[i + 1].m);
        s.P = symmetrize(filtered[i].P +
                         J * (out.smoothed[i + 1].P - predicted[i + 1].P) * J.transpose());
    }
    return out;
}

FilterSmoothResult filter_smooth(const SsmKernel& kernel, std::span<const double> inputs,
                                 std::span<const double> obs, std::span<const double> obsVars,
                                 const GaussState& init, double initTime) {
    const std::size_t n = inputs.size();
    if (obs.size() != n || obsVars.size() != n) {
        throw ContractError("filter_smooth: inputs, observations and variances differ in length");
    }
    FilterSmoothResult r;
    if (n == 0) return r;
    r.predicted.reserve(n);
    r.filtered.reserve(n);
    r.innovations.reserve(n);
    r.innovationVars.reserve(n);
    std::vector<Transition> transitions;
    transitions.reserve(n - 1);

    GaussState state = init;
    double prevTime = initTime;
    for (std::size_t i = 0; i < n; ++i) {
        const double dt = inputs[i] - prevTime;
        if (dt < 0.0) throw OrderingError("filter_smooth: inputs must be non-decreasing");
        const Transition tr = discretize(kernel, dt);
        if (i > 0) transitions.push_back(tr);
        const KalmanStep step = kalman_step(state, tr, kernel, obs[i], obsVars[i]);
        r.predicted.push_back(step.predicted);
        r.filtered.push_back(step.filtered);
        r.innovations.push_back(step.innovation);
        r.innovationVars.push_back(step.innovationVar);
        state = step.filtered;
        prevTime = inputs[i];
    }
    SmoothResult s = rts_sweep(r.filtered, r.predicted, transitions);
    r.smoothed = std::move(s.smoothed);
    r.regularized = s.regularized;
    return r;
}

GpPosterior exact_gp_posterior(std::span<const double> inputs, std::span<const double> obs,
                               std::span<const double> obsVars, double lengthscale,
                               double signalVar) {
    const auto n = static_cast<Eigen::Index>(inputs.size());
    if (obs.size() != inputs.size() || obsVars.size() != inputs.size()) {
        throw ContractError("exact_gp_posterior: misaligned inputs");
    }
    if (n > 1000) throw ContractError("exact_gp_posterior: n must be <= 1000");
    GpPosterior post;
    post.mean = Eigen::VectorXd::Zero(n);
    post.var = Eigen::VectorXd::Constant(n, signalVar);
    if (n == 0) return post;

    Eigen::MatrixXd Kf(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            Kf(i, j) = matern32_cov(inputs[i] - inputs[j], lengthscale, signalVar);
    Eigen::MatrixXd Ky = Kf;
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        Ky(i, i) += obsVars[i];
        y(i) = obs[i];
    }
    Eigen::LLT<Eigen::MatrixXd> llt(Ky);
    if (llt.info() != Eigen::Success) {
        Ky.diagonal().array() += kJitter;
        llt.compute(Ky);
        if (llt.info() != Eigen::Success)
            throw NumericError("exact_gp_posterior: kernel matrix is singular");
    }
    post.mean = Kf * llt.solve(y);
    const Eigen::MatrixXd V = llt.solve(Kf);
    post.var = (Kf - Kf * V).diagonal();
    return post;
}

}  // namespace hetstream
