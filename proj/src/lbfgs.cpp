#include "hetstream/lbfgs.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

namespace hetstream {
namespace {

struct Probe {
    double step = 0.0;
    double value = 0.0;
    double slope = 0.0;  // directional derivative
    Eigen::VectorXd x;
    Eigen::VectorXd grad;
};

// Minimizer of the cubic through (a, fa, da) and (b, fb, db); bisection when
// the cubic is degenerate. Result is kept away from both ends.
double interpolate(const Probe& a, const Probe& b) {
    const double lo = std::min(a.step, b.step);
    const double hi = std::max(a.step, b.step);
    const double margin = 0.1 * (hi - lo);
    const double d1 = a.slope + b.slope - 3.0 * (a.value - b.value) / (a.step - b.step);
    const double disc = d1 * d1 - a.slope * b.slope;
    double t = 0.5 * (lo + hi);
    if (disc >= 0.0 && std::isfinite(disc)) {
        const double d2 = std::copysign(std::sqrt(disc), b.step - a.step);
        const double denom = b.slope - a.slope + 2.0 * d2;
        if (denom != 0.0) {
            const double c = b.step - (b.step - a.step) * (b.slope + d2 - d1) / denom;
            if (std::isfinite(c)) t = c;
        }
    }
    return std::clamp(t, lo + margin, hi - margin);
}

class LineSearch {
public:
    LineSearch(const GradientObjective& f, const Eigen::VectorXd& x, const Eigen::VectorXd& dir,
               double f0, double slope0, const LbfgsOptions& opt)
        : f_(f), x_(x), dir_(dir), f0_(f0), slope0_(slope0), opt_(opt) {
        best_.value = std::numeric_limits<double>::infinity();
    }

    // True when a strong-Wolfe step was found; `best()` is always the lowest probe.
    bool run(double initialStep, Probe& accepted) {
        Probe prev{0.0, f0_, slope0_, x_, Eigen::VectorXd()};
        double step = initialStep;
        for (std::size_t i = 0; i < opt_.maxLineSearchSteps; ++i) {
            Probe cur = eval(step);
            if (!std::isfinite(cur.value)) {
                step = 0.5 * (prev.step + step);
                continue;
            }
            if (cur.value > f0_ + opt_.c1 * step * slope0_ || (i > 0 && cur.value >= prev.value))
                return zoom(prev, cur, accepted);
            if (std::abs(cur.slope) <= -opt_.c2 * slope0_) {
                accepted = std::move(cur);
                return true;
            }
            if (cur.slope >= 0.0) return zoom(cur, prev, accepted);
            prev = std::move(cur);
            step *= 2.0;
        }
        return false;
    }

    const Probe& best() const { return best_; }

private:
    Probe eval(double step) {
        Probe p;
        p.step = step;
        p.x = x_ + step * dir_;
        p.grad.resize(x_.size());
        p.value = f_(p.x, p.grad);
        p.slope = p.grad.dot(dir_);
        if (std::isfinite(p.value) && p.value < best_.value) best_ = p;
        ++evals_;
        return p;
    }

    bool zoom(Probe lo, Probe hi, Probe& accepted) {
        while (evals_ < opt_.maxLineSearchSteps) {
            if (std::abs(hi.step - lo.step) < 1e-16 * std::max(1.0, lo.step)) return false;
            Probe cur = eval(interpolate(lo, hi));
            if (!std::isfinite(cur.value) || cur.value > f0_ + opt_.c1 * cur.step * slope0_ ||
                cur.value >= lo.value) {
                hi = std::move(cur);
            } else {
                if (std::abs(cur.slope) <= -opt_.c2 * slope0_) {
                    accepted = std::move(cur);
                    return true;
                }
                if (cur.slope * (hi.step - lo.step) >= 0.0) hi = lo;
                lo = std::move(cur);
            }
        }
        return false;
    }

    const GradientObjective& f_;
    const Eigen::VectorXd& x_;
    const Eigen::VectorXd& dir_;
    double f0_;
    double slope0_;
    const LbfgsOptions& opt_;
    Probe best_;
    std::size_t evals_ = 0;
};

}  // namespace

LbfgsResult lbfgs_minimize(const GradientObjective& f, Eigen::VectorXd x0,
                           const LbfgsOptions& opt) {
    LbfgsResult res;
    res.x = std::move(x0);
    Eigen::VectorXd g(res.x.size());
    res.value = f(res.x, g);
    res.gradientInfNorm = g.size() ? g.cwiseAbs().maxCoeff() : 0.0;

    std::deque<Eigen::VectorXd> S, Y;
    std::deque<double> rho;
    std::vector<double> alpha;

    while (res.iterations < opt.maxIterations) {
        if (res.gradientInfNorm < opt.gradientTolerance) {
            res.converged = true;
            break;
        }
        // Two-loop recursion for d = -H g.
        Eigen::VectorXd q = g;
        alpha.assign(S.size(), 0.0);
        for (std::size_t i = S.size(); i-- > 0;) {
            alpha[i] = rho[i] * S[i].dot(q);
            q -= alpha[i] * Y[i];
        }
        if (!S.empty()) q *= S.back().dot(Y.back()) / Y.back().squaredNorm();
        for (std::size_t i = 0; i < S.size(); ++i) {
            const double beta = rho[i] * Y[i].dot(q);
            q += (alpha[i] - beta) * S[i];
        }
        Eigen::VectorXd dir = -q;
        double slope = g.dot(dir);
        if (!(slope < 0.0)) {
            S.clear();
            Y.clear();
            rho.clear();
            dir = -g;
            slope = -g.squaredNorm();
        }
        const double step0 = S.empty() ? std::min(1.0, 1.0 / g.cwiseAbs().maxCoeff()) : 1.0;

        LineSearch ls(f, res.x, dir, res.value, slope, opt);
        Probe next;
        const bool ok = ls.run(step0, next);
        if (!ok) {
            res.lineSearchFailed = true;
            if (ls.best().value < res.value) {
                res.x = ls.best().x;
                res.value = ls.best().value;
                g = ls.best().grad;
                res.gradientInfNorm = g.cwiseAbs().maxCoeff();
            }
            ++res.iterations;
            break;
        }
        Eigen::VectorXd s = next.x - res.x;
        Eigen::VectorXd y = next.grad - g;
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            S.push_back(std::move(s));
            Y.push_back(std::move(y));
            rho.push_back(1.0 / sy);
            if (S.size() > opt.memory) {
                S.pop_front();
                Y.pop_front();
                rho.pop_front();
            }
        }
        res.x = std::move(next.x);
        res.value = next.value;
        g = std::move(next.grad);
        res.gradientInfNorm = g.cwiseAbs().maxCoeff();
        ++res.iterations;
    }
    if (res.gradientInfNorm < opt.gradientTolerance) res.converged = true;
    return res;
}

}  // namespace hetstream
