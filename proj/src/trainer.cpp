#include "sere/trainer.hpp"

#include <algorithm>
#include <cmath>

#include "sere/errors.hpp"
#include "sere/rng.hpp"

namespace sere {

namespace {

constexpr double kDeltaFloor = 1e-6;

/// Parameter order: w[0..d-1], b, alpha, beta, gamma, delta, projection
/// row-major (when enabled).
std::vector<double> flatten(const ModelParams& p) {
    std::vector<double> theta(p.gate.w);
    theta.push_back(p.gate.b);
    theta.push_back(p.irf.alpha);
    theta.push_back(p.irf.beta);
    theta.push_back(p.irf.gamma);
    theta.push_back(p.irf.delta);
    if (p.has_projection()) {
        theta.insert(theta.end(), p.projection.data().begin(), p.projection.data().end());
    }
    return theta;
}

void unflatten(const std::vector<double>& theta, ModelParams& p) {
    const size_t d = p.gate.w.size();
    for (size_t m = 0; m < d; ++m) p.gate.w[m] = theta[m];
    p.gate.b = theta[d];
    p.irf.alpha = theta[d + 1];
    p.irf.beta = theta[d + 2];
    p.irf.gamma = theta[d + 3];
    p.irf.delta = theta[d + 4];
    if (p.has_projection()) {
        std::copy(theta.begin() + static_cast<long>(d) + 5, theta.end(),
                  p.projection.data().begin());
    }
}

std::vector<double> flatten_grad(const ParamGrad& g, bool head) {
    std::vector<double> out(g.w);
    out.push_back(g.b);
    out.push_back(g.alpha);
    out.push_back(g.beta);
    out.push_back(g.gamma);
    out.push_back(g.delta);
    if (head) out.insert(out.end(), g.projection.data().begin(), g.projection.data().end());
    return out;
}

/// Intensity weights stay non-negative and the temperature positive;
/// projects after each step.
void clamp_params(ModelParams& p) {
    p.irf.alpha = std::max(0.0, p.irf.alpha);
    p.irf.beta = std::max(0.0, p.irf.beta);
    p.irf.gamma = std::max(0.0, p.irf.gamma);
    p.irf.delta = std::max(kDeltaFloor, p.irf.delta);
}

/// Seed-shuffled permutation of the labeled candidates, keeping the first
/// shots_per_class of each class.
std::vector<size_t> select_shots(const std::vector<Sample>& labeled, int num_classes, int shots,
                                 uint64_t seed) {
    std::vector<size_t> order(labeled.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order);

    std::vector<int> taken(static_cast<size_t>(num_classes), 0);
    std::vector<size_t> picked;
    for (size_t idx : order) {
        int c = labeled[idx].label;
        if (c < 0 || c >= num_classes) throw ValidationError("labeled sample with bad class index");
        if (taken[static_cast<size_t>(c)] < shots) {
            ++taken[static_cast<size_t>(c)];
            picked.push_back(idx);
        }
    }
    for (int c = 0; c < num_classes; ++c) {
        if (taken[static_cast<size_t>(c)] < shots) {
            throw PreconditionError("class " + std::to_string(c) + " has fewer than " +
                                    std::to_string(shots) + " labeled samples");
        }
    }
    std::sort(picked.begin(), picked.end());  // manifest order within the selection
    return picked;
}

}  // namespace

EvalReport compute_eval_report(const std::vector<int>& truth, const std::vector<int>& pred,
                               int num_classes, int fold) {
    if (truth.empty() || truth.size() != pred.size()) {
        throw PreconditionError("compute_eval_report: empty or mismatched label vectors");
    }
    EvalReport report;
    report.fold = fold;
    report.num_classes = num_classes;
    report.confusion.assign(static_cast<size_t>(num_classes) * num_classes, 0);
    for (size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] < 0 || truth[i] >= num_classes || pred[i] < 0 || pred[i] >= num_classes) {
            throw ValidationError("compute_eval_report: label out of range");
        }
        ++report.confusion[static_cast<size_t>(truth[i]) * num_classes + pred[i]];
    }
    report.recall.assign(static_cast<size_t>(num_classes), 0.0);
    double sum = 0.0;
    int present = 0;
    for (int c = 0; c < num_classes; ++c) {
        int row_total = 0;
        for (int p = 0; p < num_classes; ++p) row_total += report.at(c, p);
        if (row_total > 0) {
            report.recall[static_cast<size_t>(c)] = static_cast<double>(report.at(c, c)) / row_total;
            sum += report.recall[static_cast<size_t>(c)];
            ++present;
        }
    }
    report.uar = present > 0 ? sum / present : 0.0;
    return report;
}

std::vector<std::vector<size_t>> make_folds(const std::vector<int>& labels, int k, uint64_t seed) {
    if (k < 2) throw PreconditionError("make_folds: need k >= 2");
    int num_classes = 0;
    for (int c : labels) num_classes = std::max(num_classes, c + 1);

    std::vector<std::vector<size_t>> by_class(static_cast<size_t>(num_classes));
    for (size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0) throw ValidationError("make_folds: negative label");
        by_class[static_cast<size_t>(labels[i])].push_back(i);
    }

    Rng rng(seed);
    std::vector<std::vector<size_t>> folds(static_cast<size_t>(k));
    for (int c = 0; c < num_classes; ++c) {
        auto& members = by_class[static_cast<size_t>(c)];
        if (static_cast<int>(members.size()) < k) {
            throw PreconditionError("make_folds: class " + std::to_string(c) + " has " +
                                    std::to_string(members.size()) + " samples, need >= " +
                                    std::to_string(k));
        }
        rng.shuffle(members);
        for (size_t i = 0; i < members.size(); ++i) {
            folds[i % static_cast<size_t>(k)].push_back(members[i]);
        }
    }
    for (auto& fold : folds) std::sort(fold.begin(), fold.end());
    return folds;
}

void adam_step(std::vector<double>& params, const std::vector<double>& grads, AdamState& state,
               double lr, double beta1, double beta2, double eps) {
    if (params.size() != grads.size()) throw ShapeError("adam_step: parameter/gradient size mismatch");
    if (state.m.empty()) {
        state.m.assign(params.size(), 0.0);
        state.v.assign(params.size(), 0.0);
    }
    if (state.m.size() != params.size()) throw ShapeError("adam_step: stale optimizer state");

    ++state.step;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
    for (size_t i = 0; i < params.size(); ++i) {
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * grads[i];
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * grads[i] * grads[i];
        double mhat = state.m[i] / bc1;
        double vhat = state.v[i] / bc2;
        params[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

TrainResult train(const TrainConfig& config, const Dataset& data) {
    if (config.epochs < 1) throw PreconditionError("train: epochs must be >= 1");
    if (!(config.learning_rate > 0.0)) throw PreconditionError("train: learning_rate must be > 0");
    if (config.shots_per_class < 1) throw PreconditionError("train: shots_per_class must be >= 1");
    if (data.classes.empty()) throw ValidationError("train: no classes declared");
    if (data.labeled.empty()) throw PreconditionError("train: no labeled samples");
    if (data.unl_source.empty() || data.unl_target.empty()) {
        throw PreconditionError("train: unlabeled source and target pools must be non-empty");
    }

    const int num_classes = static_cast<int>(data.classes.size());
    const int d = data.labeled.front().H.cols();

    std::vector<size_t> picked =
        select_shots(data.labeled, num_classes, config.shots_per_class, config.seed);

    Batch batch;
    batch.num_classes = num_classes;
    for (size_t idx : picked) batch.labeled.push_back(data.labeled[idx]);
    batch.unl_source = data.unl_source;
    batch.unl_target = data.unl_target;

    ModelParams params;
    params.gate = IdfeParams::zeros(d);
    if (config.use_projection_head) {
        params.projection = Matrix(d, d, 0.0);
        for (int m = 0; m < d; ++m) params.projection(m, m) = 1.0;
    }

    TricParams tric{config.lambda1, config.lambda2};
    LossSwitches sw{config.disable_proto, config.disable_dual};

    // per-epoch chunking of the unlabeled pools, manifest order
    const size_t ns = batch.unl_source.size();
    const size_t nt = batch.unl_target.size();
    std::vector<BatchSlice> chunks;
    if (config.batch_size <= 0) {
        chunks.push_back(BatchSlice{});
        for (size_t i = 0; i < ns; ++i) chunks.back().sources.push_back(i);
        for (size_t j = 0; j < nt; ++j) chunks.back().targets.push_back(j);
    } else {
        const size_t bs = static_cast<size_t>(config.batch_size);
        const size_t steps = (std::max(ns, nt) + bs - 1) / bs;
        chunks.resize(steps);
        for (size_t i = 0; i < ns; ++i) chunks[(i / bs) % steps].sources.push_back(i);
        for (size_t j = 0; j < nt; ++j) chunks[(j / bs) % steps].targets.push_back(j);
    }

    std::vector<double> theta = flatten(params);
    AdamState adam;
    TrainResult result;
    result.epoch_loss.reserve(static_cast<size_t>(config.epochs));

    EpochPlan plan;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        plan = make_plan(batch, params);
        LossDiagnostics diag = eval_loss(batch, params, plan, tric, sw);
        if (!std::isfinite(diag.total)) {
            throw DivergenceError("train: non-finite loss at epoch " + std::to_string(epoch),
                                  epoch);
        }
        result.epoch_loss.push_back(diag);
        for (size_t j = 0; j < nt; ++j) {
            result.pseudo_table.push_back({epoch, batch.unl_target[j].id, plan.pseudo_label[j],
                                           plan.target_anchor[j].irf_at_plan});
        }

        for (const BatchSlice& chunk : chunks) {
            ParamGrad grad = grad_total_loss(batch, params, plan, tric, sw, &chunk);
            std::vector<double> g = flatten_grad(grad, params.has_projection());
            adam_step(theta, g, adam, config.learning_rate, config.beta1, config.beta2,
                      config.adam_eps);
            unflatten(theta, params);
            clamp_params(params);
            theta = flatten(params);
        }
    }

    // final loss and prototypes under the trained parameters
    plan = make_plan(batch, params);
    result.final_loss = eval_loss(batch, params, plan, tric, sw);

    std::vector<UttState> labeled_states;
    labeled_states.reserve(batch.labeled.size());
    for (const Sample& s : batch.labeled) labeled_states.push_back(forward_utterance(s, params));

    std::vector<std::vector<double>> z_labeled;
    std::vector<int> labels;
    for (size_t l = 0; l < batch.labeled.size(); ++l) {
        z_labeled.push_back(labeled_states[l].z);
        labels.push_back(batch.labeled[l].label);
    }
    std::vector<std::vector<double>> anchor_z;
    std::vector<int> pseudo_labels;
    for (size_t j = 0; j < nt; ++j) {
        anchor_z.push_back(labeled_states[static_cast<size_t>(plan.target_anchor[j].ref_index)].z);
        pseudo_labels.push_back(plan.pseudo_label[j]);
    }
    PrototypeSet protos =
        enhanced_prototypes(z_labeled, labels, anchor_z, pseudo_labels, num_classes);

    result.model.params = params;
    result.model.tric = tric;
    result.model.prototypes = protos.enhanced;
    result.model.classes = data.classes;
    result.model.epsilon = config.epsilon;
    for (size_t idx : picked) result.model.labeled_ids.push_back(data.labeled[idx].id);
    return result;
}

EvalReport evaluate(const SereModel& model, const std::vector<Sample>& pool,
                    const std::vector<Sample>& eval_samples, int fold) {
    if (eval_samples.empty()) throw PreconditionError("evaluate: empty eval set");
    if (pool.empty()) throw PreconditionError("evaluate: empty reference pool");

    const int d = static_cast<int>(model.params.gate.w.size());
    for (const Sample& s : eval_samples) {
        if (s.H.cols() != d) throw ShapeError("evaluate: eval sample dim != model dim");
    }

    std::vector<EnhancedRep> pool_reps;
    pool_reps.reserve(pool.size());
    for (const Sample& s : pool) {
        UttState st = forward_utterance(s, model.params);
        pool_reps.push_back(EnhancedRep{std::move(st.U), std::move(st.burst)});
    }

    const int n = static_cast<int>(eval_samples.size());
    std::vector<int> pred(static_cast<size_t>(n));
    std::vector<int> truth(static_cast<size_t>(n));

#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
        UttState st = forward_utterance(eval_samples[static_cast<size_t>(i)], model.params);
        EnhancedRep rep{std::move(st.U), std::move(st.burst)};
        pred[static_cast<size_t>(i)] =
            classify(rep, pool_reps, model.prototypes, model.params.irf);
        truth[static_cast<size_t>(i)] = eval_samples[static_cast<size_t>(i)].label;
    }

    return compute_eval_report(truth, pred, static_cast<int>(model.classes.size()), fold);
}

}  // namespace sere
