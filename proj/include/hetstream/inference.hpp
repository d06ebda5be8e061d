#pragma once

// Per-window inference: collapsed Gibbs over component assignments, Polya-Gamma
// augmented Kalman/RTS estimation of the temporal weights B, the conjugate
// update of the categorical multinomials A and MAP estimation of the
// logistic-GP log-densities C.

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <vector>

#include "hetstream/core_model.hpp"
#include "hetstream/gp_ssm.hpp"
#include "hetstream/ingestion.hpp"
#include "hetstream/samplers.hpp"

namespace hetstream {

// Per-window lookup tables for the component conditional.
struct ConditionalTables {
    std::vector<double> alpha;               // per categorical attribute
    std::vector<Eigen::MatrixXd> alphaAhat;  // alpha * Ahat, K x U
    std::vector<Eigen::MatrixXd> logLgp;     // log p_LGP(g | Chat_k), K x G
    Eigen::MatrixXd logSoftmaxB;             // Tc x K
};

ConditionalTables make_tables(const ModelParams& prev, const std::vector<GridSpec>& grids,
                              const Config& config, std::size_t slots);

// log-softmax of each row of `mean` (Tc x K) into tables.logSoftmaxB.
void set_temporal_prior(ConditionalTables& tables, const Eigen::MatrixXd& mean);

struct RecordView {
    std::span<const UnitId> cat;
    std::span<const GridId> grid;
};

// Normalized probability over components for one record whose own
// contribution has already been removed from `counts`.
void component_conditional(const RecordView& record, std::size_t slot, const CountStats& counts,
                           const ConditionalTables& tables, std::span<double> probs);

struct GibbsState {
    std::vector<ComponentId> z;
    CountStats counts;
    Eigen::MatrixXd priorMean;  // mu_{t,k}
    Eigen::MatrixXd priorVar;   // sigma^2_{t,k}
    Eigen::MatrixXd omega;      // last Polya-Gamma draws
};

// Row-major N x M2 grid index of every record.
std::vector<GridId> grid_indices(const CurrentTensor& tensor, const std::vector<GridSpec>& grids);

// One sweep of leave-one-out resampling over every record.
void gibbs_epoch(const CurrentTensor& tensor, std::span<const GridId> gridIds, GibbsState& state,
                 const ConditionalTables& tables, RngHandle& rng);

struct PgPosterior {
    Eigen::MatrixXd mean;   // (mu_{t,k})_pg
    Eigen::MatrixXd var;    // (sigma^2_{t,k})_pg
    Eigen::MatrixXd omega;  // draws; 0 where N_{t,k} = 0
};

// Polya-Gamma conditioning of one timestamp: nT[k] = N_{t,k}, total = N_t.
void pg_posterior_row(std::span<const std::int64_t> nT, std::int64_t total,
                      std::span<const double> mu, std::span<const double> var, RngHandle& rng,
                      std::span<double> outMean, std::span<double> outVar,
                      std::span<double> outOmega);

// Same with a fixed omega row (no sampling); used to check the closed forms.
void pg_posterior_row_given(std::span<const std::int64_t> nT, std::int64_t total,
                            std::span<const double> mu, std::span<const double> var,
                            std::span<const double> omega, std::span<double> outMean,
                            std::span<double> outVar);

PgPosterior pg_augmented_posterior(const CountMatrix& nTK, const Eigen::MatrixXd& priorMean,
                                   const Eigen::MatrixXd& priorVar, RngHandle& rng);

struct BEstimate {
    std::vector<std::vector<GaussState>> predicted;  // [k][t]
    std::vector<std::vector<GaussState>> smoothed;   // [k][t]
    bool regularized = false;
};

// Kalman filter + RTS smoother per component, treating the Polya-Gamma
// posteriors as observations. `init[k]` is the state at `initTime`.
BEstimate estimate_B(const PgPosterior& pg, std::span<const double> timestamps,
                     const SsmKernel& kernel, std::span<const GaussState> init, double initTime);

// A_{k,u} = (N_{k,u} + alpha Ahat_{k,u}) / (N_k + alpha).
std::vector<Eigen::MatrixXd> estimate_A(const CountStats& counts,
                                        const std::vector<Eigen::MatrixXd>& Ahat,
                                        std::span<const double> alpha);

// Log-likelihood of one (component, continuous attribute) log-density row.
struct LgpObjective {
    Eigen::VectorXd counts;     // N_{k,g}
    double total = 0.0;         // N_k
    Eigen::VectorXd logWidths;  // log w_g
    std::vector<double> centers;
    Eigen::VectorXd prior;  // Chat_k
    SsmKernel kernel;       // GP over the grid axis
    double noiseVar = 1.0;  // sigma^2_C
};

struct LgpValue {
    double value = 0.0;
    Eigen::VectorXd gradient;
    std::vector<double> innovations;     // r_g
    std::vector<double> innovationVars;  // sigma^2_{r_g}
};

LgpValue lgp_objective_and_gradient(const Eigen::VectorXd& c, const LgpObjective& obj);

// Normalized grid probabilities w_g e^{c_g} / sum w e^c.
Eigen::VectorXd lgp_probabilities(const Eigen::VectorXd& c, const Eigen::VectorXd& logWidths);

struct CEstimate {
    std::vector<Eigen::MatrixXd> C;
    std::size_t lineSearchFailures = 0;
    std::size_t unconverged = 0;
};

CEstimate estimate_C(const CountStats& counts, const std::vector<Eigen::MatrixXd>& Chat,
                     const std::vector<GridSpec>& grids, const Config& config);

// Fills an unset B lengthscale with 10x the median timestamp gap of `tensor`.
// An unset C lengthscale is resolved per attribute inside estimate_C
// (10x the median grid width).
Config resolve_kernels(Config config, const CurrentTensor& tensor);

double grid_lengthscale(const Config& config, const GridSpec& grid);

struct InferenceResult {
    ModelParams params;
    CountStats counts;
    std::vector<ComponentId> z;
    std::size_t lineSearchFailures = 0;
    bool regularized = false;
};

// All epochs of Gibbs + B estimation, then one A and C update.
InferenceResult run_inference(const CurrentTensor& tensor, const std::vector<GridSpec>& grids,
                              const ModelParams& prev, const Config& config, RngHandle& rng);

}  // namespace hetstream
