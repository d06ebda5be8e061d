#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "hetstream/error.hpp"
#include "hetstream/evaluation.hpp"
#include "hetstream/inference.hpp"
#include "hetstream/synthetic.hpp"

using namespace hetstream;

namespace {

GridSpec uniform_grid(std::size_t G, double lo = 0.0, double hi = 1.0) {
    GridSpec g;
    for (std::size_t i = 0; i <= G; ++i) g.edges.push_back(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(G));
    return g;
}

CurrentTensor random_tensor(std::mt19937_64& gen, std::size_t n, std::size_t U, std::size_t slots) {
    CurrentTensor x;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> times;
    for (std::size_t i = 0; i < n; ++i) times.push_back(static_cast<double>(gen() % slots));
    std::sort(times.begin(), times.end());
    for (double t : times) {
        EventRecord r;
        r.timestamp = t;
        r.cat = {static_cast<UnitId>(gen() % U)};
        r.cont = {u(gen)};
        x.push(r);
    }
    x.interval = x.timestamps.back() + 1.0;
    return x;
}

LgpObjective random_objective(std::mt19937_64& gen, std::size_t G) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    LgpObjective obj;
    obj.counts.resize(static_cast<Eigen::Index>(G));
    obj.logWidths.resize(static_cast<Eigen::Index>(G));
    obj.prior.resize(static_cast<Eigen::Index>(G));
    double x = 0.0;
    for (std::size_t g = 0; g < G; ++g) {
        const double w = 0.1 + u(gen);
        obj.centers.push_back(x + 0.5 * w);
        x += w;
        obj.logWidths(static_cast<Eigen::Index>(g)) = std::log(w);
        obj.counts(static_cast<Eigen::Index>(g)) = static_cast<double>(gen() % 20);
        obj.prior(static_cast<Eigen::Index>(g)) = 2.0 * (u(gen) - 0.5);
    }
    obj.total = obj.counts.sum();
    obj.kernel = matern32_ssm(0.5 + 3.0 * u(gen), 0.5 + u(gen));
    obj.noiseVar = 0.2 + u(gen);
    return obj;
}

}  // namespace

TEST(ComponentConditional, HandComputedTwoComponents) {
    // K=2, one categorical attribute with U=2, B=0 so the softmax prior is 1/2 each.
    const TensorShape shape{{2}, {}};
    CountStats c = CountStats::zeros(2, shape, 1);
    c.nK << 3, 1;
    c.nMode[0] << 1, 2, 0, 1;
    ModelParams prev = ModelParams::initial(2, shape);
    Config cfg;
    cfg.K = 2;
    cfg.alpha = {0.5};
    ConditionalTables tab = make_tables(prev, {}, cfg, 1);
    set_temporal_prior(tab, Eigen::MatrixXd::Zero(1, 2));
    const std::vector<UnitId> cat{0};
    std::vector<double> p(2);
    component_conditional(RecordView{cat, {}}, 0, c, tab, p);
    const double a = 0.5 * (1 + 0.25) / (3 + 0.5);
    const double b = 0.5 * (0 + 0.25) / (1 + 0.5);
    EXPECT_NEAR(p[0], a / (a + b), 1e-14);
    EXPECT_NEAR(p[1], b / (a + b), 1e-14);
}

TEST(ComponentConditional, PriorOnlyReducesToSoftmax) {
    const TensorShape shape{{}, {}};
    const CountStats c = CountStats::zeros(3, shape, 1);
    ModelParams prev = ModelParams::initial(3, shape);
    Config cfg;
    cfg.K = 3;
    ConditionalTables tab = make_tables(prev, {}, cfg, 1);
    Eigen::MatrixXd mu(1, 3);
    mu << 0.5, -1.0, 2.0;
    set_temporal_prior(tab, mu);
    std::vector<double> p(3);
    component_conditional(RecordView{}, 0, c, tab, p);
    const double z = std::exp(0.5) + std::exp(-1.0) + std::exp(2.0);
    EXPECT_NEAR(p[0], std::exp(0.5) / z, 1e-14);
    EXPECT_NEAR(p[2], std::exp(2.0) / z, 1e-14);

    std::vector<double> one(1);
    Config c1;
    c1.K = 1;
    ConditionalTables t1 = make_tables(ModelParams::initial(1, shape), {}, c1, 1);
    component_conditional(RecordView{}, 0, CountStats::zeros(1, shape, 1), t1, one);
    EXPECT_DOUBLE_EQ(one[0], 1.0);
}

TEST(ComponentConditional, ContinuousTermUsesWidthWeightedDensity) {
    const TensorShape shape{{}, {2}};
    ModelParams prev = ModelParams::initial(1, shape);
    prev.Chat[0] << 0.0, std::log(3.0);
    Config cfg;
    cfg.K = 1;
    GridSpec g{{0.0, 1.0, 3.0}};  // widths 1, 2
    const ConditionalTables tab = make_tables(prev, {g}, cfg, 1);
    EXPECT_NEAR(std::exp(tab.logLgp[0](0, 0)), 1.0 / 7.0, 1e-14);
    EXPECT_NEAR(std::exp(tab.logLgp[0](0, 1)), 6.0 / 7.0, 1e-14);
}

TEST(Gibbs, CountsMatchRecountAfterEveryEpochProperty) {
    std::mt19937_64 gen(21);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 1 + gen() % 1000, U = 2 + gen() % 6, K = 1 + gen() % 5, T = 1 + gen() % 30;
        const CurrentTensor x = random_tensor(gen, n, U, T);
        const std::vector<GridSpec> grids{uniform_grid(1 + 1 + gen() % 9)};
        const TensorShape shape{{U}, {grids[0].size()}};
        Config cfg;
        cfg.K = K;
        const ModelParams prev = ModelParams::initial(K, shape);
        ConditionalTables tab = make_tables(prev, grids, cfg, x.slots());
        const auto gid = grid_indices(x, grids);
        GibbsState st;
        RngHandle rng(static_cast<std::uint64_t>(trial));
        for (std::size_t i = 0; i < n; ++i) st.z.push_back(static_cast<ComponentId>(rng.below(K)));
        st.counts = counts_from_assignments(x, shape, K, st.z, gid);
        for (int epoch = 0; epoch < 5; ++epoch) {
            gibbs_epoch(x, gid, st, tab, rng);
            ASSERT_TRUE(st.counts == counts_from_assignments(x, shape, K, st.z, gid));
            ASSERT_TRUE(is_consistent(st.counts, x));
        }
    }
}

TEST(Gibbs, DeterministicConditionalIsAFixedPoint) {
    std::mt19937_64 gen(22);
    const CurrentTensor x = random_tensor(gen, 200, 3, 10);
    const TensorShape shape{{3}, {}};
    Config cfg;
    cfg.K = 2;
    ConditionalTables tab = make_tables(ModelParams::initial(2, shape), {}, cfg, x.slots());
    tab.logSoftmaxB.col(1).setConstant(-std::numeric_limits<double>::infinity());
    GibbsState st;
    st.z.assign(x.size(), 0);
    const std::vector<GridId> gid;
    st.counts = counts_from_assignments(x, shape, 2, st.z, gid);
    RngHandle rng(1);
    for (int e = 0; e < 3; ++e) gibbs_epoch(x, gid, st, tab, rng);
    for (auto z : st.z) EXPECT_EQ(z, 0u);
}

TEST(PolyaGammaPosterior, FixedOmegaClosedForm) {
    const std::vector<std::int64_t> nT{3, 1};
    const std::vector<double> mu{0.0, 0.0}, var{1.0, 1.0}, omega{1.0, 1.0};
    std::vector<double> m(2), v(2);
    pg_posterior_row_given(nT, 4, mu, var, omega, m, v);
    EXPECT_DOUBLE_EQ(v[0], 0.5);
    EXPECT_DOUBLE_EQ(m[0], 0.5);
}

TEST(PolyaGammaPosterior, EmptyTimestampKeepsThePrior) {
    const std::vector<std::int64_t> nT{0, 0, 0};
    const std::vector<double> mu{0.3, -1.0, 2.0}, var{0.7, 1.1, 0.4};
    std::vector<double> m(3), v(3), w(3);
    RngHandle rng(2);
    pg_posterior_row(nT, 0, mu, var, rng, m, v, w);
    for (std::size_t k = 0; k < 3; ++k) {
        EXPECT_EQ(w[k], 0.0);
        EXPECT_DOUBLE_EQ(m[k], mu[k]);
        EXPECT_DOUBLE_EQ(v[k], var[k]);
    }
}

TEST(PolyaGammaPosterior, LargeOmegaCollapsesVariance) {
    const std::vector<std::int64_t> nT{3, 1};
    const std::vector<double> mu{0.0, 0.0}, var{1.0, 1.0}, omega{1e12, 1e12};
    std::vector<double> m(2), v(2);
    pg_posterior_row_given(nT, 4, mu, var, omega, m, v);
    EXPECT_LT(v[0], 1e-11);
}

TEST(PolyaGammaPosterior, ShareOfRecordsIsRecoveredOnAverage) {
    // With a flat prior the augmented posterior centres B_k - xi on logit(N_tk / N_t).
    const std::vector<std::int64_t> nT{60, 30, 10};
    std::vector<double> mu{0.0, 0.0, 0.0}, var{1e6, 1e6, 1e6};
    std::vector<double> m(3), v(3), w(3);
    RngHandle rng(5);
    for (int it = 0; it < 200; ++it) {
        pg_posterior_row(nT, 100, mu, var, rng, m, v, w);
        mu = m;
    }
    Eigen::Vector3d e(std::exp(mu[0]), std::exp(mu[1]), std::exp(mu[2]));
    e /= e.sum();
    EXPECT_NEAR(e(0), 0.6, 0.08);
    EXPECT_NEAR(e(2), 0.1, 0.05);
}

TEST(EstimateB, ConstantZeroObservations) {
    PgPosterior pg;
    pg.mean = Eigen::MatrixXd::Zero(10, 2);
    pg.var = Eigen::MatrixXd::Constant(10, 2, 1e-10);
    std::vector<double> ts(10);
    for (int i = 0; i < 10; ++i) ts[i] = i;
    const SsmKernel k = matern32_ssm(3.0, 1.0);
    const std::vector<GaussState> init(2, GaussState{StateVector::Zero(), k.Pinf});
    const BEstimate b = estimate_B(pg, ts, k, init, 0.0);
    for (const auto& row : b.smoothed)
        for (const auto& s : row) EXPECT_NEAR(s.mean(), 0.0, 1e-12);
}

TEST(EstimateB, MatchesExactGp) {
    std::mt19937_64 gen(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    PgPosterior pg;
    pg.mean.resize(25, 1);
    pg.var.resize(25, 1);
    std::vector<double> ts;
    double t = 0;
    for (int i = 0; i < 25; ++i) {
        t += 0.1 + u(gen);
        ts.push_back(t);
        pg.mean(i, 0) = u(gen) - 0.5;
        pg.var(i, 0) = 0.1 + u(gen);
    }
    const SsmKernel k = matern32_ssm(2.0, 1.3);
    const std::vector<GaussState> init{GaussState{StateVector::Zero(), k.Pinf}};
    const BEstimate b = estimate_B(pg, ts, k, init, ts[0]);
    std::vector<double> y(25), v(25);
    for (int i = 0; i < 25; ++i) {
        y[i] = pg.mean(i, 0);
        v[i] = pg.var(i, 0);
    }
    const GpPosterior ex = exact_gp_posterior(ts, y, v, 2.0, 1.3);
    for (int i = 0; i < 25; ++i) EXPECT_NEAR(b.smoothed[0][i].mean(), ex.mean(i), 1e-6);
}

TEST(EstimateA, HandComputedRow) {
    const TensorShape shape{{2}, {}};
    CountStats c = CountStats::zeros(2, shape, 1);
    c.nK << 4, 0;
    c.nMode[0] << 3, 1, 0, 0;
    const std::vector<Eigen::MatrixXd> Ahat{Eigen::MatrixXd::Constant(2, 2, 0.5)};
    const std::vector<double> alpha{1.0};
    const auto A = estimate_A(c, Ahat, alpha);
    EXPECT_NEAR(A[0](0, 0), 0.7, 1e-15);
    EXPECT_NEAR(A[0](0, 1), 0.3, 1e-15);
    EXPECT_EQ(A[0](1, 0), 0.5);  // empty component keeps its prior exactly
    EXPECT_EQ(A[0](1, 1), 0.5);
}

TEST(EstimateA, RowsSumToOneProperty) {
    std::mt19937_64 gen(8);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t K = 1 + gen() % 6, U = 1 + gen() % 12;
        const TensorShape shape{{U}, {}};
        CountStats c = CountStats::zeros(K, shape, 1);
        Eigen::MatrixXd Ahat = Eigen::MatrixXd::Random(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(U)).cwiseAbs();
        for (Eigen::Index k = 0; k < Ahat.rows(); ++k) {
            Ahat.row(k) /= Ahat.row(k).sum();
            if (gen() % 3 == 0) continue;  // leave some components empty
            for (Eigen::Index u = 0; u < Ahat.cols(); ++u) c.nMode[0](k, u) = static_cast<std::int64_t>(gen() % 50);
            c.nK(k) = c.nMode[0].row(k).sum();
        }
        const std::vector<double> alpha{0.01 + static_cast<double>(gen() % 100) / 10.0};
        const auto A = estimate_A(c, {Ahat}, alpha);
        for (Eigen::Index k = 0; k < A[0].rows(); ++k) {
            EXPECT_NEAR(A[0].row(k).sum(), 1.0, 1e-9);
            if (c.nK(k) == 0) EXPECT_TRUE(A[0].row(k) == Ahat.row(k));
        }
    }
}

TEST(LgpObjective, GradientMatchesFiniteDifferencesProperty) {
    std::mt19937_64 gen(9);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t G = 2 + gen() % 49;
        const LgpObjective obj = random_objective(gen, G);
        Eigen::VectorXd c(static_cast<Eigen::Index>(G));
        for (Eigen::Index g = 0; g < c.size(); ++g) c(g) = n(gen);
        const LgpValue v = lgp_objective_and_gradient(c, obj);
        double worst = 0.0;
        for (Eigen::Index g = 0; g < c.size(); ++g) {
            Eigen::VectorXd cp = c, cm = c;
            cp(g) += 1e-5;
            cm(g) -= 1e-5;
            const double fd = (lgp_objective_and_gradient(cp, obj).value -
                               lgp_objective_and_gradient(cm, obj).value) / 2e-5;
            worst = std::max(worst, std::abs(fd - v.gradient(g)));
        }
        ASSERT_LT(worst, 1e-5) << "trial " << trial << " G=" << G;
    }
}

TEST(LgpObjective, PriorModeAndSoftmaxGradientIdentity) {
    std::mt19937_64 gen(10);
    LgpObjective obj = random_objective(gen, 12);
    obj.counts.setZero();
    obj.total = 0.0;
    const LgpValue atPrior = lgp_objective_and_gradient(obj.prior, obj);
    EXPECT_LT(atPrior.gradient.cwiseAbs().maxCoeff(), 1e-12);
    for (double r : atPrior.innovations) EXPECT_NEAR(r, 0.0, 1e-12);

    // Data part of the gradient sums to N_k - N_k = 0 over the grid.
    LgpObjective data = random_objective(gen, 12);
    const Eigen::VectorXd c = Eigen::VectorXd::Random(12);
    const Eigen::VectorXd full = lgp_objective_and_gradient(c, data).gradient;
    data.counts.setZero();
    data.total = 0.0;
    const Eigen::VectorXd priorOnly = lgp_objective_and_gradient(c, data).gradient;
    EXPECT_NEAR((full - priorOnly).sum(), 0.0, 1e-9);
}

TEST(LgpObjective, DensitySumsToOne) {
    std::mt19937_64 gen(11);
    for (int trial = 0; trial < 100; ++trial) {
        const LgpObjective obj = random_objective(gen, 2 + gen() % 300);
        const Eigen::VectorXd c = 5.0 * Eigen::VectorXd::Random(obj.prior.size());
        EXPECT_NEAR(lgp_probabilities(c, obj.logWidths).sum(), 1.0, 1e-12);
    }
}

TEST(EstimateC, MassConcentratesOnTheObservedGrid) {
    const TensorShape shape{{}, {5}};
    CountStats c = CountStats::zeros(1, shape, 1);
    c.nK << 50;
    c.nGrid[0] << 0, 0, 0, 50, 0;
    Config cfg;
    cfg.K = 1;
    const std::vector<GridSpec> grids{uniform_grid(5)};
    const std::vector<Eigen::MatrixXd> Chat{Eigen::MatrixXd::Zero(1, 5)};
    const CEstimate a = estimate_C(c, Chat, grids, cfg);
    Eigen::Index best;
    a.C[0].row(0).maxCoeff(&best);
    EXPECT_EQ(best, 3);
    const CEstimate b = estimate_C(c, Chat, grids, cfg);
    EXPECT_EQ((a.C[0] - b.C[0]).cwiseAbs().maxCoeff(), 0.0);
}

TEST(EstimateC, ZeroCountsStayNearTheSmoothedPrior) {
    const TensorShape shape{{}, {20}};
    const CountStats c = CountStats::zeros(2, shape, 1);
    Config cfg;
    cfg.K = 2;
    const std::vector<GridSpec> grids{uniform_grid(20)};
    const std::vector<Eigen::MatrixXd> Chat{Eigen::MatrixXd::Random(2, 20)};
    const CEstimate e = estimate_C(c, Chat, grids, cfg);
    // Maximizer of the prior term alone is c = Chat (d = 0).
    EXPECT_LT((e.C[0] - Chat[0]).cwiseAbs().maxCoeff(), 1e-5);
}

TEST(RunInference, EmptyTensorKeepsPriors) {
    const TensorShape shape{{3}, {4}};
    Config cfg;
    cfg.K = 2;
    cfg.epochs = 3;
    cfg.kernelB.lengthscale = 5.0;
    ModelParams prev = ModelParams::initial(2, shape);
    prev.Ahat[0] << 0.2, 0.3, 0.5, 0.6, 0.2, 0.2;
    CurrentTensor x;
    RngHandle rng(1);
    const InferenceResult r = run_inference(x, {uniform_grid(4)}, prev, cfg, rng);
    EXPECT_TRUE(r.params.A[0] == prev.Ahat[0]);
    EXPECT_LT(r.params.C[0].cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_EQ(r.counts.total(), 0);
}

TEST(RunInference, SeededRunsAreIdentical) {
    std::mt19937_64 gen(12);
    const CurrentTensor x = random_tensor(gen, 300, 4, 10);
    const TensorShape shape{{4}, {6}};
    Config cfg;
    cfg.K = 3;
    cfg.epochs = 5;
    const std::vector<GridSpec> grids{uniform_grid(6)};
    RngHandle a(4), b(4);
    const InferenceResult ra = run_inference(x, grids, ModelParams::initial(3, shape), cfg, a);
    const InferenceResult rb = run_inference(x, grids, ModelParams::initial(3, shape), cfg, b);
    EXPECT_EQ(ra.z, rb.z);
    EXPECT_TRUE(ra.params.C[0] == rb.params.C[0]);
    EXPECT_TRUE(is_consistent(ra.counts, x));
}

TEST(RunInference, RecoversTwoSeparableComponents) {
    SyntheticSpec s;
    s.components = 2;
    s.units = {10, 10};
    s.continuous = 1;
    s.timestamps = 30;
    s.rate = 20;
    s.anomalyFraction = 0.0;
    s.seed = 3;
    const SyntheticStream data = generate_synthetic(s);
    const auto windows = window_stream(data.records, 30);
    ASSERT_EQ(windows.size(), 1u);
    Config cfg;
    cfg.K = 2;
    cfg.defaultGrids = 20;
    std::vector<double> v;
    for (const auto& r : windows[0].records) v.push_back(r.cont[0]);
    const std::vector<GridSpec> grids{build_grid(v, 20)};
    RngHandle rng(5);
    const InferenceResult r = run_inference(windows[0], grids,
                                            ModelParams::initial(2, TensorShape{{10, 10}, {20}}), cfg, rng);
    EXPECT_GT(adjusted_rand_index(data.components, r.z), 0.95);
}
