#pragma once

#include <string>
#include <utility>
#include <vector>

#include "sere/idfe.hpp"
#include "sere/irf.hpp"
#include "sere/matrix.hpp"

namespace sere {

/// Loss-term weights of the training objective.
struct TricParams {
    double lambda1 = 1.0;
    double lambda2 = 1.0;
};

/// All learnable parameters. The projection head (an optional square map
/// applied to H before everything else) is disabled when empty.
struct ModelParams {
    IdfeParams gate;
    IrfParams irf;
    Matrix projection;

    bool has_projection() const { return !projection.empty(); }
};

/// One prepared utterance: embeddings plus the data-only normalized
/// deltas. Everything downstream of these depends on learnable parameters
/// and is recomputed per step.
struct Sample {
    std::string id;
    int label = -1;  // class index; -1 when unlabeled
    Matrix H;        // T x d
    Matrix dhat;     // T x 4

    int frames() const { return H.rows(); }
};

/// Builds a Sample: resamples static features to H's frame count and
/// computes normalized deltas.
Sample prepare_sample(std::string id, int label, Matrix H, const Matrix& features,
                      double epsilon = 1e-3);

/// The semi-supervised batch: a labeled source set plus unlabeled source
/// and target pools.
struct Batch {
    std::vector<Sample> labeled;
    std::vector<Sample> unl_source;
    std::vector<Sample> unl_target;
    int num_classes = 0;
};

/// Differentiable forward state of one utterance under given parameters.
struct UttState {
    Matrix Heff;                // T x d (projected H, or H itself)
    std::vector<double> gate;   // T
    Matrix U;                   // T x (d+4)
    std::vector<double> burst;  // T
    std::vector<double> s;      // T, alpha*|d1|+beta*|d2|+gamma*(|d3|+|d4|) at gate 1
    std::vector<double> z;      // d+4, frame mean of U
};

UttState forward_utterance(const Sample& sample, const ModelParams& params);

/// z = frame mean of the fused representation.
std::vector<double> pool_semantic(const Matrix& U);

/// Per-class means of labeled semantic embeddings. Throws ValidationError
/// when a class has no labeled sample.
Matrix initial_prototypes(const std::vector<std::vector<double>>& z,
                          const std::vector<int>& labels, int num_classes);

/// Result of scanning a pool for the highest-IRF reference.
struct AnchorChoice {
    int index = -1;              // position in the pool (ties -> lowest)
    int label = -1;              // pool sample's label (pseudo-label)
    double irf = 0.0;
    std::vector<int> alignment;  // j_star of the winning pair
};

/// argmax over the pool of IRF(x, pool[i]); ties break to the lowest
/// index. Throws PreconditionError on an empty pool.
AnchorChoice select_pseudo_anchor(const EnhancedRep& x, const std::vector<EnhancedRep>& pool,
                                  const std::vector<int>& pool_labels, const IrfParams& params);

/// Prototype anchors with per-class labeled / pseudo-assigned counts.
struct PrototypeSet {
    int num_classes = 0;
    Matrix initial;                  // C x (d+4)
    Matrix enhanced;                 // C x (d+4)
    std::vector<int> labeled_count;  // N_c
    std::vector<int> pseudo_count;   // M_c
};

/// Blends labeled embeddings with the pseudo-anchors' embeddings:
/// p_c = (sum z_labeled + sum z_anchor) / (N_c + M_c).
PrototypeSet enhanced_prototypes(const std::vector<std::vector<double>>& z_labeled,
                                 const std::vector<int>& labels,
                                 const std::vector<std::vector<double>>& anchor_z,
                                 const std::vector<int>& pseudo_labels, int num_classes);

/// Mean over classes of labeled and pseudo squared distances to the
/// enhanced anchors; a class without pseudo assignments contributes only
/// its labeled term.
double proto_loss(const std::vector<std::vector<double>>& z_labeled,
                  const std::vector<int>& labels,
                  const std::vector<std::vector<double>>& v_pseudo,
                  const std::vector<int>& pseudo_labels, const Matrix& enhanced_prototypes);

/// One term of the dual instance resonance loss.
struct DualPair {
    double irf = 0.0;
    std::vector<double> v_u;
    std::vector<double> v_ref;
};

/// Mean over pairs of (1 - IRF) * ||v_u - v_ref||^2; empty input gives 0.
double dual_loss(const std::vector<DualPair>& pairs);

/// argmin_c ||v - prototype_c||^2 with lowest-index tie-breaking.
int nearest_prototype(std::span<const double> v, const Matrix& prototypes);

/// Inference rule: resonate x against its highest-IRF pool member, then
/// return the nearest enhanced prototype of the pooled representation.
int classify(const EnhancedRep& x, const std::vector<EnhancedRep>& pool,
             const Matrix& prototypes, const IrfParams& params);

/// Frozen discrete choices of one optimization step: the chosen partner
/// and the row-argmax alignment of that pair.
struct PairPlan {
    int ref_index = -1;
    double irf_at_plan = 0.0;
    std::vector<int> alignment;
};

/// All argmax decisions of an epoch (stop-gradient set).
struct EpochPlan {
    std::vector<PairPlan> target_anchor;  // per unl_target, partner in labeled
    std::vector<int> pseudo_label;        // per unl_target
    std::vector<PairPlan> source_ref;     // per unl_source, partner in labeled
    std::vector<PairPlan> target_ref;     // per unl_target, partner in unl_source
};

/// Ablation switches (loss terms dropped exactly, including gradients).
struct LossSwitches {
    bool disable_proto = false;
    bool disable_dual = false;
};

/// Subset of unlabeled samples whose loss terms are active in one step.
/// Labeled terms are always included; plan references may point outside
/// the slice. An empty struct passed as nullptr means "everything".
struct BatchSlice {
    std::vector<size_t> sources;
    std::vector<size_t> targets;
};

struct LossDiagnostics {
    double proto = 0.0;
    double dual = 0.0;
    double total = 0.0;
};

/// Builds the epoch plan under the current parameters. Pseudo-anchor and
/// reference scans run in parallel across samples; each sample's argmax
/// is a serial ascending scan, so results are schedule-independent.
/// Requires every class to have a labeled sample and, when unlabeled
/// targets exist, a non-empty unlabeled source pool for dual pairing.
EpochPlan make_plan(const Batch& batch, const ModelParams& params);

/// Differentiable objective under a frozen plan:
/// L = lambda1 * L_proto + lambda2 * L_dual (disabled terms omitted).
LossDiagnostics eval_loss(const Batch& batch, const ModelParams& params, const EpochPlan& plan,
                          const TricParams& tric, const LossSwitches& sw = {},
                          const BatchSlice* slice = nullptr);

/// Convenience wrapper: plan + loss in one call.
std::pair<LossDiagnostics, EpochPlan> total_loss(const Batch& batch, const ModelParams& params,
                                                 const TricParams& tric,
                                                 const LossSwitches& sw = {});

/// Analytic gradient of the objective with respect to every learnable
/// parameter. Gradient accumulation runs serially in batch order.
struct ParamGrad {
    std::vector<double> w;
    double b = 0.0;
    double alpha = 0.0;
    double beta = 0.0;
    double gamma = 0.0;
    double delta = 0.0;
    Matrix projection;
};

ParamGrad grad_total_loss(const Batch& batch, const ModelParams& params, const EpochPlan& plan,
                          const TricParams& tric, const LossSwitches& sw = {},
                          const BatchSlice* slice = nullptr);

}  // namespace sere
