#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sere/tric.hpp"

namespace sere {

/// Training protocol settings. Defaults follow the evaluation protocol:
/// 80 epochs, Adam at 1e-4, 5 labeled samples per class.
struct TrainConfig {
    int epochs = 80;
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    uint64_t seed = 0;
    double lambda1 = 1.0;
    double lambda2 = 1.0;
    bool disable_proto = false;
    bool disable_dual = false;
    int shots_per_class = 5;
    int batch_size = 0;  // unlabeled samples per pool per step; 0 = full batch
    double epsilon = 1e-3;
    bool use_projection_head = false;
};

/// Everything the trainer consumes: labeled source candidates, the two
/// unlabeled pools, and a held-out labeled target set for scoring.
struct Dataset {
    std::vector<Sample> labeled;
    std::vector<Sample> unl_source;
    std::vector<Sample> unl_target;
    std::vector<Sample> eval_target;
    std::vector<std::string> classes;
};

/// A trained model: parameters, enhanced prototype anchors, and the ids
/// of the 5-shot labeled pool used as classification references.
struct SereModel {
    ModelParams params;
    TricParams tric;
    Matrix prototypes;  // C x (d+4)
    std::vector<std::string> classes;
    std::vector<std::string> labeled_ids;
    double epsilon = 1e-3;
};

struct PseudoRow {
    int epoch = 0;
    std::string id;
    int pseudo_label = -1;
    double irf = 0.0;
};

struct TrainResult {
    SereModel model;
    std::vector<LossDiagnostics> epoch_loss;  // one row per epoch, pre-update
    LossDiagnostics final_loss;               // fresh plan after the last update
    std::vector<PseudoRow> pseudo_table;
};

/// Per-fold scoring summary. uar averages recalls over classes that have
/// at least one true sample.
struct EvalReport {
    int fold = 0;
    int num_classes = 0;
    std::vector<double> recall;
    double uar = 0.0;
    std::vector<int> confusion;  // C x C row-major, rows = truth

    int at(int truth, int pred) const { return confusion[static_cast<size_t>(truth) * num_classes + pred]; }
};

/// Confusion matrix, per-class recall and UAR from label vectors.
EvalReport compute_eval_report(const std::vector<int>& truth, const std::vector<int>& pred,
                               int num_classes, int fold = 0);

/// Stratified k-fold split, deterministic in the seed. Folds are disjoint,
/// their union is the full index set. Throws PreconditionError when a
/// class has fewer than k samples.
std::vector<std::vector<size_t>> make_folds(const std::vector<int>& labels, int k, uint64_t seed);

/// One Adam update with bias correction.
struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    long step = 0;
};

void adam_step(std::vector<double>& params, const std::vector<double>& grads, AdamState& state,
               double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

/// Runs the semi-supervised loop: per epoch, recompute the pseudo-anchor
/// plan, log the full-batch loss, then take Adam steps over the epoch's
/// chunks. Deterministic for a fixed (config, data) pair. Throws
/// DivergenceError when the loss turns non-finite.
TrainResult train(const TrainConfig& config, const Dataset& data);

/// Classifies every eval sample against the model's labeled reference
/// pool and scores recalls. pool holds the prepared labeled samples
/// matching model.labeled_ids.
EvalReport evaluate(const SereModel& model, const std::vector<Sample>& pool,
                    const std::vector<Sample>& eval_samples, int fold = 0);

}  // namespace sere
