#include "hetstream/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "hetstream/error.hpp"
#include "hetstream/lbfgs.hpp"

namespace hetstream {
namespace {

double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& v) {
    const double mx = v.maxCoeff();
    if (!std::isfinite(mx)) return mx;
    return mx + std::log((v.array() - mx).exp().sum());
}

double median_of(std::vector<double> v) {
    std::nth_element(v.begin(), v.begin() + static_cast<long>(v.size() / 2), v.end());
    return v[v.size() / 2];
}

std::vector<double> alpha_vector(const Config& config, std::size_t M1) {
    std::vector<double> a(M1);
    for (std::size_t m = 0; m < M1; ++m) a[m] = config.alpha_for(m);
    return a;
}

// Prior states before any observation of the window: open-loop predictions.
void open_loop_prior(const SsmKernel& kernel, std::span<const double> timestamps,
                     std::span<const GaussState> init, double initTime, double noiseVar,
                     Eigen::MatrixXd& mean, Eigen::MatrixXd& var,
                     std::vector<std::vector<GaussState>>* states = nullptr) {
    const auto T = static_cast<Eigen::Index>(timestamps.size());
    const auto K = static_cast<Eigen::Index>(init.size());
    mean.resize(T, K);
    var.resize(T, K);
    if (states) states->assign(init.size(), {});
    for (Eigen::Index k = 0; k < K; ++k) {
        GaussState s = init[k];
        double prev = initTime;
        for (Eigen::Index t = 0; t < T; ++t) {
            s = predict(s, discretize(kernel, timestamps[t] - prev));
            prev = timestamps[t];
            mean(t, k) = s.mean();
            var(t, k) = s.var() + noiseVar;
            if (states) (*states)[k].push_back(s);
        }
    }
}

void prior_from_states(const std::vector<std::vector<GaussState>>& states, double noiseVar,
                       Eigen::MatrixXd& mean, Eigen::MatrixXd& var) {
    for (std::size_t k = 0; k < states.size(); ++k)
        for (std::size_t t = 0; t < states[k].size(); ++t) {
            mean(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(k)) = states[k][t].mean();
            var(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(k)) =
                states[k][t].var() + noiseVar;
        }
}

}  // namespace

ConditionalTables make_tables(const ModelParams& prev, const std::vector<GridSpec>& grids,
                              const Config& config, std::size_t slots) {
    ConditionalTables tab;
    const std::size_t M1 = prev.Ahat.size();
    tab.alpha = alpha_vector(config, M1);
    for (std::size_t m = 0; m < M1; ++m) tab.alphaAhat.push_back(tab.alpha[m] * prev.Ahat[m]);
    if (grids.size() != prev.Chat.size())
        throw ContractError("make_tables: grid specs do not match the continuous attributes");
    for (std::size_t m = 0; m < prev.Chat.size(); ++m) {
        const Eigen::MatrixXd& Ch = prev.Chat[m];
        const std::vector<double> w = grids[m].widths();
        const Eigen::VectorXd logW =
            Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()))
                .array()
                .log();
        Eigen::MatrixXd lp(Ch.rows(), Ch.cols());
        for (Eigen::Index k = 0; k < Ch.rows(); ++k) {
            const Eigen::VectorXd row = logW + Ch.row(k).transpose();
            lp.row(k) = (row.array() - log_sum_exp(row)).transpose();
        }
        tab.logLgp.push_back(std::move(lp));
    }
    tab.logSoftmaxB = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(slots),
                                                static_cast<Eigen::Index>(prev.carry.size()),
                                                -std::log(static_cast<double>(prev.carry.size())));
    return tab;
}

void set_temporal_prior(ConditionalTables& tables, const Eigen::MatrixXd& mean) {
    tables.logSoftmaxB.resize(mean.rows(), mean.cols());
    for (Eigen::Index t = 0; t < mean.rows(); ++t) {
        const Eigen::VectorXd row = mean.row(t).transpose();
        tables.logSoftmaxB.row(t) = (row.array() - log_sum_exp(row)).transpose();
    }
}

void component_conditional(const RecordView& record, std::size_t slot, const CountStats& counts,
                           const ConditionalTables& tables, std::span<double> probs) {
    const std::size_t K = probs.size();
    const auto t = static_cast<Eigen::Index>(slot);
    for (std::size_t k = 0; k < K; ++k) probs[k] = tables.logSoftmaxB(t, static_cast<Eigen::Index>(k));
    for (std::size_t m = 0; m < record.cat.size(); ++m) {
        const UnitId u = record.cat[m];
        const double a = tables.alpha[m];
        const CountMatrix& nm = counts.nMode[m];
        const Eigen::MatrixXd& prior = tables.alphaAhat[m];
        for (std::size_t k = 0; k < K; ++k) {
            const auto kk = static_cast<Eigen::Index>(k);
            probs[k] += std::log(static_cast<double>(nm(kk, u)) + prior(kk, u)) -
                        std::log(static_cast<double>(counts.nK(kk)) + a);
        }
    }
    for (std::size_t m = 0; m < record.grid.size(); ++m) {
        const Eigen::MatrixXd& lp = tables.logLgp[m];
        const GridId g = record.grid[m];
        for (std::size_t k = 0; k < K; ++k) probs[k] += lp(static_cast<Eigen::Index>(k), g);
    }
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : probs) mx = std::max(mx, v);
    if (!std::isfinite(mx)) throw NumericError("component_conditional: non-finite log-probability");
    double z = 0.0;
    for (double& v : probs) {
        if (std::isnan(v)) throw NumericError("component_conditional: NaN log-probability");
        v = std::exp(v - mx);
        z += v;
    }
    for (double& v : probs) v /= z;
}

std::vector<GridId> grid_indices(const CurrentTensor& tensor, const std::vector<GridSpec>& grids) {
    const std::size_t M2 = grids.size();
    std::vector<GridId> ids(tensor.size() * M2);
    for (std::size_t i = 0; i < tensor.size(); ++i) {
        const auto& cont = tensor.records[i].cont;
        if (cont.size() != M2) throw ContractError("grid_indices: record arity mismatch");
        for (std::size_t m = 0; m < M2; ++m) ids[i * M2 + m] = locate_grid(cont[m], grids[m]);
    }
    return ids;
}

void gibbs_epoch(const CurrentTensor& tensor, std::span<const GridId> gridIds, GibbsState& state,
                 const ConditionalTables& tables, RngHandle& rng) {
    const std::size_t K = state.counts.components();
    const std::size_t M2 = tables.logLgp.size();
    std::vector<double> probs(K);
    for (std::size_t t = 0; t < tensor.slots(); ++t) {
        for (std::size_t i = tensor.offsets[t]; i < tensor.offsets[t + 1]; ++i) {
            const RecordView rec{tensor.records[i].cat, gridIds.subspan(i * M2, M2)};
            state.counts.update(t, state.z[i], rec.cat, rec.grid, -1);
            component_conditional(rec, t, state.counts, tables, probs);
            const auto k = static_cast<ComponentId>(sample_categorical(probs, rng));
            state.z[i] = k;
            state.counts.update(t, k, rec.cat, rec.grid, +1);
        }
    }
}

void pg_posterior_row_given(std::span<const std::int64_t> nT, std::int64_t total,
                            std::span<const double> mu, std::span<const double> var,
                            std::span<const double> omega, std::span<double> outMean,
                            std::span<double> outVar) {
    const std::size_t K = mu.size();
    for (std::size_t k = 0; k < K; ++k) {
        // xi_k = log sum_{j != k} exp(mu_j)
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < K; ++j)
            if (j != k) mx = std::max(mx, mu[j]);
        double s = 0.0;
        for (std::size_t j = 0; j < K; ++j)
            if (j != k) s += std::exp(mu[j] - mx);
        const double xi = mx + std::log(s);
        if (!std::isfinite(xi)) throw NumericError("pg_posterior: non-finite xi");
        if (!(var[k] > 0.0)) throw NumericError("pg_posterior: prior variance must be positive");
        const double w = omega[k];
        const double postVar = 1.0 / (1.0 / var[k] + w);
        const double kappa = static_cast<double>(nT[k]) - 0.5 * static_cast<double>(total);
        outVar[k] = postVar;
        outMean[k] = postVar * (mu[k] / var[k] + kappa + w * xi);
    }
}

void pg_posterior_row(std::span<const std::int64_t> nT, std::int64_t total,
                      std::span<const double> mu, std::span<const double> var, RngHandle& rng,
                      std::span<double> outMean, std::span<double> outVar,
                      std::span<double> outOmega) {
    const std::size_t K = mu.size();
    for (std::size_t k = 0; k < K; ++k) {
        // Shape N_t: with kappa = N_{t,k} - N_t/2 this is the binomial-logit
        // identity for N_{t,k} successes out of N_t.
        if (total == 0) {
            outOmega[k] = 0.0;  // PG(0, c) is the point mass at zero
            continue;
        }
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < K; ++j)
            if (j != k) mx = std::max(mx, mu[j]);
        double s = 0.0;
        for (std::size_t j = 0; j < K; ++j)
            if (j != k) s += std::exp(mu[j] - mx);
        const double xi = mx + std::log(s);
        if (!std::isfinite(xi)) throw NumericError("pg_posterior: non-finite xi");
        outOmega[k] = sample_polya_gamma(static_cast<double>(total), mu[k] - xi, rng);
    }
    pg_posterior_row_given(nT, total, mu, var, outOmega, outMean, outVar);
}

PgPosterior pg_augmented_posterior(const CountMatrix& nTK, const Eigen::MatrixXd& priorMean,
                                   const Eigen::MatrixXd& priorVar, RngHandle& rng) {
    const Eigen::Index T = nTK.rows();
    const Eigen::Index K = nTK.cols();
    PgPosterior out;
    out.mean.resize(T, K);
    out.var.resize(T, K);
    out.omega.resize(T, K);
    std::vector<double> mu(K), var(K), m(K), v(K), w(K);
    for (Eigen::Index t = 0; t < T; ++t) {
        for (Eigen::Index k = 0; k < K; ++k) {
            mu[k] = priorMean(t, k);
            var[k] = priorVar(t, k);
        }
        pg_posterior_row(std::span<const std::int64_t>(nTK.row(t).data(), K), nTK.row(t).sum(), mu,
                         var, rng, m, v, w);
        for (Eigen::Index k = 0; k < K; ++k) {
            out.mean(t, k) = m[k];
            out.var(t, k) = v[k];
            out.omega(t, k) = w[k];
        }
    }
    return out;
}

BEstimate estimate_B(const PgPosterior& pg, std::span<const double> timestamps,
                     const SsmKernel& kernel, std::span<const GaussState> init, double initTime) {
    const Eigen::Index K = pg.mean.cols();
    const Eigen::Index T = pg.mean.rows();
    if (static_cast<std::size_t>(T) != timestamps.size() || static_cast<std::size_t>(K) != init.size())
        throw ContractError("estimate_B: posterior shape does not match timestamps / components");
    BEstimate out;
    out.predicted.resize(K);
    out.smoothed.resize(K);
    std::vector<double> obs(T), obsVar(T);
    for (Eigen::Index k = 0; k < K; ++k) {
        for (Eigen::Index t = 0; t < T; ++t) {
            obs[t] = pg.mean(t, k);
            obsVar[t] = pg.var(t, k);
        }
        FilterSmoothResult fs = filter_smooth(kernel, timestamps, obs, obsVar, init[k], initTime);
        out.predicted[k] = std::move(fs.predicted);
        out.smoothed[k] = std::move(fs.smoothed);
        out.regularized = out.regularized || fs.regularized;
    }
    return out;
}

std::vector<Eigen::MatrixXd> estimate_A(const CountStats& counts,
                                        const std::vector<Eigen::MatrixXd>& Ahat,
                                        std::span<const double> alpha) {
    if (Ahat.size() != counts.nMode.size() || alpha.size() != Ahat.size())
        throw ContractError("estimate_A: attribute count mismatch");
    std::vector<Eigen::MatrixXd> A;
    A.reserve(Ahat.size());
    for (std::size_t m = 0; m < Ahat.size(); ++m) {
        const Eigen::MatrixXd n = counts.nMode[m].cast<double>();
        Eigen::MatrixXd a = n + alpha[m] * Ahat[m];
        for (Eigen::Index k = 0; k < a.rows(); ++k) {
            if (counts.nK(k) == 0) a.row(k) = Ahat[m].row(k);  // exact, not alpha*x/alpha
            else a.row(k) /= static_cast<double>(counts.nK(k)) + alpha[m];
        }
        A.push_back(std::move(a));
    }
    return A;
}

Eigen::VectorXd lgp_probabilities(const Eigen::VectorXd& c, const Eigen::VectorXd& logWidths) {
    const Eigen::VectorXd s = logWidths + c;
    return (s.array() - log_sum_exp(s)).exp();
}

LgpValue lgp_objective_and_gradient(const Eigen::VectorXd& c, const LgpObjective& obj) {
    const Eigen::Index G = c.size();
    const Eigen::VectorXd d = c - obj.prior;
    const std::vector<double> noise(static_cast<std::size_t>(G), obj.noiseVar);
    const GaussState init{StateVector::Zero(), obj.kernel.Pinf};
    const FilterSmoothResult fs = filter_smooth(
        obj.kernel, obj.centers, std::span<const double>(d.data(), static_cast<std::size_t>(G)),
        noise, init, obj.centers.front());

    const Eigen::VectorXd s = obj.logWidths + c;
    const double lse = log_sum_exp(s);
    LgpValue out;
    out.value = obj.counts.dot(s) - obj.total * lse;
    out.gradient = obj.counts - obj.total * (s.array() - lse).exp().matrix();
    for (Eigen::Index g = 0; g < G; ++g) {
        const double r = fs.innovations[g];
        const double rv = fs.innovationVars[g];
        out.value -= 0.5 * (std::log(2.0 * std::numbers::pi * rv) + r * r / rv);
        // d/dc of the prediction-error decomposition is -(K + s I)^{-1} d, which
        // equals -(d - E[f | d]) / s with E[f | d] from the smoother.
        out.gradient(g) -= (d(g) - fs.smoothed[g].mean()) / obj.noiseVar;
    }
    out.innovations = fs.innovations;
    out.innovationVars = fs.innovationVars;
    return out;
}

double grid_lengthscale(const Config& config, const GridSpec& grid) {
    if (config.kernelC.lengthscale) return *config.kernelC.lengthscale;
    return 10.0 * median_of(grid.widths());
}

CEstimate estimate_C(const CountStats& counts, const std::vector<Eigen::MatrixXd>& Chat,
                     const std::vector<GridSpec>& grids, const Config& config) {
    if (Chat.size() != counts.nGrid.size() || grids.size() != Chat.size())
        throw ContractError("estimate_C: attribute count mismatch");
    CEstimate out;
    LbfgsOptions opt;
    opt.maxIterations = config.lbfgsMaxIter;
    for (std::size_t m = 0; m < Chat.size(); ++m) {
        LgpObjective obj;
        const std::vector<double> w = grids[m].widths();
        obj.logWidths = Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()))
                            .array()
                            .log();
        obj.centers = grids[m].centers();
        obj.kernel = matern32_ssm(grid_lengthscale(config, grids[m]), config.kernelC.signalVar);
        obj.noiseVar = config.sigma2C;
        Eigen::MatrixXd C(Chat[m].rows(), Chat[m].cols());
        for (Eigen::Index k = 0; k < Chat[m].rows(); ++k) {
            obj.counts = counts.nGrid[m].row(k).cast<double>().transpose();
            obj.total = static_cast<double>(counts.nK(k));
            obj.prior = Chat[m].row(k).transpose();
            const auto negLogLik = [&obj](const Eigen::VectorXd& c, Eigen::VectorXd& grad) {
                LgpValue v = lgp_objective_and_gradient(c, obj);
                grad = -v.gradient;
                return -v.value;
            };
            const LbfgsResult r = lbfgs_minimize(negLogLik, obj.prior, opt);
            if (!r.x.allFinite()) throw NumericError("estimate_C: optimizer produced non-finite values");
            out.lineSearchFailures += r.lineSearchFailed ? 1 : 0;
            out.unconverged += r.converged ? 0 : 1;
            C.row(k) = r.x.transpose();
        }
        out.C.push_back(std::move(C));
    }
    return out;
}

Config resolve_kernels(Config config, const CurrentTensor& tensor) {
    if (!config.kernelB.lengthscale) {
        std::vector<double> gaps;
        for (std::size_t t = 1; t < tensor.slots(); ++t)
            gaps.push_back(tensor.timestamps[t] - tensor.timestamps[t - 1]);
        config.kernelB.lengthscale = gaps.empty() ? 10.0 : 10.0 * median_of(gaps);
    }
    return config;
}

InferenceResult run_inference(const CurrentTensor& tensor, const std::vector<GridSpec>& grids,
                              const ModelParams& prev, const Config& rawConfig, RngHandle& rng) {
    const Config config = resolve_kernels(rawConfig, tensor);
    config.validate();
    const std::size_t K = config.K;
    if (prev.carry.size() != K || prev.Chat.size() != grids.size())
        throw ContractError("run_inference: previous parameters do not match the configuration");
    TensorShape shape;
    for (const auto& a : prev.Ahat) shape.units.push_back(static_cast<std::size_t>(a.cols()));
    for (const auto& g : grids) shape.grids.push_back(g.size());

    const std::size_t T = tensor.slots();
    const std::size_t N = tensor.size();
    const SsmKernel kernel = matern32_ssm(*config.kernelB.lengthscale, config.kernelB.signalVar);
    const double noise = config.sigma2Noise;

    std::vector<GaussState> init;
    double initTime;
    if (prev.carryTime) {
        init = prev.carry;
        initTime = *prev.carryTime;
    } else {
        init.assign(K, GaussState{StateVector::Zero(), kernel.Pinf});
        initTime = T ? tensor.timestamps.front() : 0.0;
    }

    InferenceResult res;
    res.params = prev;
    const std::vector<GridId> gridIds = grid_indices(tensor, grids);
    ConditionalTables tables = make_tables(prev, grids, config, T);

    GibbsState state;
    state.counts = CountStats::zeros(K, shape, T);
    open_loop_prior(kernel, tensor.timestamps, init, initTime, noise, state.priorMean,
                    state.priorVar, &res.params.B);
    set_temporal_prior(tables, state.priorMean);

    // Initial assignments: uniform in the first window, otherwise drawn
    // sequentially from the conditional so labels follow the previous window.
    state.z.resize(N);
    const std::size_t M2 = grids.size();
    {
        std::vector<double> probs(K);
        for (std::size_t t = 0; t < T; ++t) {
            for (std::size_t i = tensor.offsets[t]; i < tensor.offsets[t + 1]; ++i) {
                const RecordView rec{tensor.records[i].cat,
                                     std::span<const GridId>(gridIds).subspan(i * M2, M2)};
                ComponentId k;
                if (prev.carryTime) {
                    component_conditional(rec, t, state.counts, tables, probs);
                    k = static_cast<ComponentId>(sample_categorical(probs, rng));
                } else {
                    k = static_cast<ComponentId>(rng.below(K));
                }
                state.z[i] = k;
                state.counts.update(t, k, rec.cat, rec.grid, +1);
            }
        }
    }

    std::vector<std::vector<GaussState>> smoothed = res.params.B;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        gibbs_epoch(tensor, gridIds, state, tables, rng);
        if (K < 2 || T == 0) continue;  // softmax over one component carries no information

        if (epoch == 0) {
            // Priors are the one-step predictions, so filter all components in lockstep.
            std::vector<GaussState> cur = init;
            std::vector<std::vector<GaussState>> pred(K), filt(K);
            std::vector<Transition> transitions;
            std::vector<double> mu(K), var(K), pm(K), pv(K), w(K);
            double prevTime = initTime;
            state.omega.resize(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(K));
            for (std::size_t t = 0; t < T; ++t) {
                const Transition tr = discretize(kernel, tensor.timestamps[t] - prevTime);
                if (t > 0) transitions.push_back(tr);
                prevTime = tensor.timestamps[t];
                for (std::size_t k = 0; k < K; ++k) {
                    const GaussState p = predict(cur[k], tr);
                    mu[k] = p.mean();
                    var[k] = p.var() + noise;
                    state.priorMean(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(k)) = mu[k];
                    state.priorVar(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(k)) = var[k];
                }
                const auto row = static_cast<Eigen::Index>(t);
                pg_posterior_row(std::span<const std::int64_t>(state.counts.nTK.row(row).data(), K),
                                 static_cast<std::int64_t>(tensor.count_at(t)), mu, var, rng, pm, pv, w);
                for (std::size_t k = 0; k < K; ++k) {
                    state.omega(row, static_cast<Eigen::Index>(k)) = w[k];
                    const KalmanStep step = kalman_step(cur[k], tr, kernel, pm[k], pv[k]);
                    pred[k].push_back(step.predicted);
                    filt[k].push_back(step.filtered);
                    cur[k] = step.filtered;
                }
            }
            for (std::size_t k = 0; k < K; ++k) {
                SmoothResult s = rts_sweep(filt[k], pred[k], transitions);
                smoothed[k] = std::move(s.smoothed);
                res.regularized = res.regularized || s.regularized;
            }
        } else {
            const PgPosterior pg = pg_augmented_posterior(state.counts.nTK, state.priorMean,
                                                          state.priorVar, rng);
            state.omega = pg.omega;
            BEstimate b = estimate_B(pg, tensor.timestamps, kernel, init, initTime);
            smoothed = std::move(b.smoothed);
            res.regularized = res.regularized || b.regularized;
        }
        prior_from_states(smoothed, noise, state.priorMean, state.priorVar);
        set_temporal_prior(tables, state.priorMean);
    }

    res.params.A = estimate_A(state.counts, prev.Ahat, tables.alpha);
    CEstimate c = estimate_C(state.counts, prev.Chat, grids, config);
    res.params.C = std::move(c.C);
    res.lineSearchFailures = c.lineSearchFailures;
    res.params.B = std::move(smoothed);
    res.params.bTimestamps = tensor.timestamps;
    if (T > 0) {
        for (std::size_t k = 0; k < K; ++k) res.params.carry[k] = res.params.B[k].back();
        res.params.carryTime = tensor.timestamps.back();
    }
    res.counts = std::move(state.counts);
    res.z = std::move(state.z);
    return res;
}

}  // namespace hetstream
