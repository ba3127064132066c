#include "sere/tric.hpp"

#include <cmath>

#include "sere/errors.hpp"

namespace sere {

namespace {

/// IRF of a pair under a frozen alignment, plus the pooled representation.
/// Only the R entries on the alignment path are evaluated.
struct FrozenPairEval {
    double irf = 0.0;
    std::vector<double> v_u;
};

FrozenPairEval eval_frozen_pair(const UttState& x, const UttState& y,
                                const std::vector<int>& alignment, const IrfParams& irf) {
    FrozenPairEval out;
    const int tx = x.U.rows();
    double acc = 0.0;
    for (int i = 0; i < tx; ++i) {
        int j = alignment[static_cast<size_t>(i)];
        double db = x.burst[static_cast<size_t>(i)] - y.burst[static_cast<size_t>(j)];
        acc += std::exp(-irf.delta * db * db) * safe_cosine(x.U.row(i), y.U.row(j));
    }
    out.irf = acc / static_cast<double>(tx);
    out.v_u = resonance_pool(y.U, alignment);
    return out;
}

std::vector<UttState> forward_all(const Batch& batch, const ModelParams& params) {
    std::vector<UttState> states;
    states.reserve(batch.labeled.size() + batch.unl_source.size() + batch.unl_target.size());
    for (const Sample& s : batch.labeled) states.push_back(forward_utterance(s, params));
    for (const Sample& s : batch.unl_source) states.push_back(forward_utterance(s, params));
    for (const Sample& s : batch.unl_target) states.push_back(forward_utterance(s, params));
    return states;
}

/// Scans a pool for the highest-IRF partner of one utterance state.
PairPlan scan_pool(const UttState& x, const std::vector<UttState>& states, size_t pool_begin,
                   size_t pool_count, const IrfParams& irf) {
    PairPlan best;
    for (size_t p = 0; p < pool_count; ++p) {
        const UttState& y = states[pool_begin + p];
        Matrix R = resonance_matrix(x.U, x.burst, y.U, y.burst, irf);
        std::vector<int> j_star = align(R);
        double score = irf_score(R, j_star);
        if (best.ref_index < 0 || score > best.irf_at_plan) {
            best.ref_index = static_cast<int>(p);
            best.irf_at_plan = score;
            best.alignment = std::move(j_star);
        }
    }
    return best;
}

void check_labels(const Batch& batch) {
    if (batch.num_classes < 1) throw ValidationError("batch declares no classes");
    std::vector<int> count(static_cast<size_t>(batch.num_classes), 0);
    for (const Sample& s : batch.labeled) {
        if (s.label < 0 || s.label >= batch.num_classes) {
            throw ValidationError("labeled sample with out-of-range class " + s.id);
        }
        ++count[static_cast<size_t>(s.label)];
    }
    for (int c = 0; c < batch.num_classes; ++c) {
        if (count[static_cast<size_t>(c)] == 0) {
            throw ValidationError("class " + std::to_string(c) + " has no labeled sample");
        }
    }
}

}  // namespace

Sample prepare_sample(std::string id, int label, Matrix H, const Matrix& features,
                      double epsilon) {
    Sample s;
    s.id = std::move(id);
    s.label = label;
    s.dhat = normalize_deltas(frame_deltas(resample_rows(features, H.rows())), epsilon);
    s.H = std::move(H);
    return s;
}

UttState forward_utterance(const Sample& sample, const ModelParams& params) {
    const int frames = sample.H.rows();
    const int d = sample.H.cols();
    if (static_cast<int>(params.gate.w.size()) != d) {
        throw ShapeError("forward: gate weight length != embedding dim");
    }

    UttState st;
    if (params.has_projection()) {
        if (params.projection.rows() != d || params.projection.cols() != d) {
            throw ShapeError("forward: projection head must be d x d");
        }
        st.Heff = Matrix(frames, d);
        for (int t = 0; t < frames; ++t) {
            for (int m = 0; m < d; ++m) {
                st.Heff(t, m) = dot(params.projection.row(m), sample.H.row(t));
            }
        }
    } else {
        st.Heff = sample.H;
    }

    st.gate = context_gate(st.Heff, params.gate);

    st.U = Matrix(frames, d + 4);
    for (int t = 0; t < frames; ++t) {
        for (int m = 0; m < d; ++m) st.U(t, m) = st.Heff(t, m);
        for (int k = 0; k < 4; ++k) {
            st.U(t, d + k) = st.gate[static_cast<size_t>(t)] * sample.dhat(t, k);
        }
    }

    Matrix r(frames, 4);
    for (int t = 0; t < frames; ++t) {
        for (int k = 0; k < 4; ++k) r(t, k) = st.U(t, d + k);
    }
    st.burst = burst_intensity(r, params.irf);

    st.s.resize(static_cast<size_t>(frames));
    for (int t = 0; t < frames; ++t) {
        st.s[static_cast<size_t>(t)] =
            params.irf.alpha * std::abs(sample.dhat(t, 0)) +
            params.irf.beta * std::abs(sample.dhat(t, 1)) +
            params.irf.gamma * (std::abs(sample.dhat(t, 2)) + std::abs(sample.dhat(t, 3)));
    }

    st.z = pool_semantic(st.U);
    return st;
}

std::vector<double> pool_semantic(const Matrix& U) {
    if (U.rows() < 1) throw PreconditionError("pool_semantic: empty representation");
    std::vector<double> z(static_cast<size_t>(U.cols()), 0.0);
    for (int t = 0; t < U.rows(); ++t) {
        for (int m = 0; m < U.cols(); ++m) z[static_cast<size_t>(m)] += U(t, m);
    }
    for (double& x : z) x /= static_cast<double>(U.rows());
    return z;
}

Matrix initial_prototypes(const std::vector<std::vector<double>>& z,
                          const std::vector<int>& labels, int num_classes) {
    if (z.empty() || z.size() != labels.size()) {
        throw PreconditionError("initial_prototypes: empty or mismatched inputs");
    }
    const int dim = static_cast<int>(z.front().size());
    Matrix proto(num_classes, dim, 0.0);
    std::vector<int> count(static_cast<size_t>(num_classes), 0);
    for (size_t i = 0; i < z.size(); ++i) {
        int c = labels[i];
        if (c < 0 || c >= num_classes) throw ValidationError("initial_prototypes: bad label");
        ++count[static_cast<size_t>(c)];
        for (int m = 0; m < dim; ++m) proto(c, m) += z[i][static_cast<size_t>(m)];
    }
    for (int c = 0; c < num_classes; ++c) {
        if (count[static_cast<size_t>(c)] == 0) {
            throw ValidationError("initial_prototypes: class " + std::to_string(c) +
                                  " has no labeled sample");
        }
        for (int m = 0; m < dim; ++m) proto(c, m) /= count[static_cast<size_t>(c)];
    }
    return proto;
}

AnchorChoice select_pseudo_anchor(const EnhancedRep& x, const std::vector<EnhancedRep>& pool,
                                  const std::vector<int>& pool_labels, const IrfParams& params) {
    if (pool.empty()) throw PreconditionError("select_pseudo_anchor: empty labeled pool");
    AnchorChoice best;
    for (size_t i = 0; i < pool.size(); ++i) {
        ResonanceResult res = resonate(x, pool[i], params);
        if (best.index < 0 || res.irf > best.irf) {
            best.index = static_cast<int>(i);
            best.label = pool_labels.empty() ? -1 : pool_labels[i];
            best.irf = res.irf;
            best.alignment = std::move(res.j_star);
        }
    }
    return best;
}

PrototypeSet enhanced_prototypes(const std::vector<std::vector<double>>& z_labeled,
                                 const std::vector<int>& labels,
                                 const std::vector<std::vector<double>>& anchor_z,
                                 const std::vector<int>& pseudo_labels, int num_classes) {
    PrototypeSet set;
    set.num_classes = num_classes;
    set.initial = initial_prototypes(z_labeled, labels, num_classes);
    set.labeled_count.assign(static_cast<size_t>(num_classes), 0);
    set.pseudo_count.assign(static_cast<size_t>(num_classes), 0);

    const int dim = set.initial.cols();
    Matrix sum(num_classes, dim, 0.0);
    for (size_t i = 0; i < z_labeled.size(); ++i) {
        int c = labels[i];
        ++set.labeled_count[static_cast<size_t>(c)];
        for (int m = 0; m < dim; ++m) sum(c, m) += z_labeled[i][static_cast<size_t>(m)];
    }
    for (size_t j = 0; j < anchor_z.size(); ++j) {
        int c = pseudo_labels[j];
        if (c < 0 || c >= num_classes) throw ValidationError("enhanced_prototypes: bad pseudo-label");
        ++set.pseudo_count[static_cast<size_t>(c)];
        for (int m = 0; m < dim; ++m) sum(c, m) += anchor_z[j][static_cast<size_t>(m)];
    }

    set.enhanced = Matrix(num_classes, dim);
    for (int c = 0; c < num_classes; ++c) {
        int total = set.labeled_count[static_cast<size_t>(c)] + set.pseudo_count[static_cast<size_t>(c)];
        for (int m = 0; m < dim; ++m) set.enhanced(c, m) = sum(c, m) / total;
    }
    return set;
}

double proto_loss(const std::vector<std::vector<double>>& z_labeled,
                  const std::vector<int>& labels,
                  const std::vector<std::vector<double>>& v_pseudo,
                  const std::vector<int>& pseudo_labels, const Matrix& enhanced) {
    const int num_classes = enhanced.rows();
    const int dim = enhanced.cols();

    std::vector<double> labeled_sum(static_cast<size_t>(num_classes), 0.0);
    std::vector<double> pseudo_sum(static_cast<size_t>(num_classes), 0.0);
    std::vector<int> n(static_cast<size_t>(num_classes), 0);
    std::vector<int> m_count(static_cast<size_t>(num_classes), 0);

    auto sq_dist = [dim](std::span<const double> a, std::span<const double> b) {
        double acc = 0.0;
        for (int m = 0; m < dim; ++m) {
            double diff = a[static_cast<size_t>(m)] - b[static_cast<size_t>(m)];
            acc += diff * diff;
        }
        return acc;
    };

    for (size_t i = 0; i < z_labeled.size(); ++i) {
        int c = labels[i];
        labeled_sum[static_cast<size_t>(c)] += sq_dist(z_labeled[i], enhanced.row(c));
        ++n[static_cast<size_t>(c)];
    }
    for (size_t j = 0; j < v_pseudo.size(); ++j) {
        int c = pseudo_labels[j];
        pseudo_sum[static_cast<size_t>(c)] += sq_dist(v_pseudo[j], enhanced.row(c));
        ++m_count[static_cast<size_t>(c)];
    }

    double loss = 0.0;
    for (int c = 0; c < num_classes; ++c) {
        if (n[static_cast<size_t>(c)] == 0) throw ValidationError("proto_loss: class without labeled sample");
        double term = labeled_sum[static_cast<size_t>(c)] / n[static_cast<size_t>(c)];
        if (m_count[static_cast<size_t>(c)] > 0) {
            term += pseudo_sum[static_cast<size_t>(c)] / m_count[static_cast<size_t>(c)];
        }
        loss += term;
    }
    return loss / num_classes;
}

double dual_loss(const std::vector<DualPair>& pairs) {
    if (pairs.empty()) return 0.0;
    double acc = 0.0;
    for (const DualPair& p : pairs) {
        double n2 = 0.0;
        for (size_t m = 0; m < p.v_u.size(); ++m) {
            double diff = p.v_u[m] - p.v_ref[m];
            n2 += diff * diff;
        }
        acc += (1.0 - p.irf) * n2;
    }
    return acc / static_cast<double>(pairs.size());
}

int nearest_prototype(std::span<const double> v, const Matrix& prototypes) {
    if (prototypes.rows() < 1) throw PreconditionError("nearest_prototype: empty prototype set");
    int best = 0;
    double best_dist = 0.0;
    for (int c = 0; c < prototypes.rows(); ++c) {
        double acc = 0.0;
        for (int m = 0; m < prototypes.cols(); ++m) {
            double diff = v[static_cast<size_t>(m)] - prototypes(c, m);
            acc += diff * diff;
        }
        if (c == 0 || acc < best_dist) {
            best = c;
            best_dist = acc;
        }
    }
    return best;
}

int classify(const EnhancedRep& x, const std::vector<EnhancedRep>& pool,
             const Matrix& prototypes, const IrfParams& params) {
    if (prototypes.rows() < 1) throw PreconditionError("classify: empty prototype set");
    AnchorChoice choice = select_pseudo_anchor(x, pool, {}, params);
    std::vector<double> v = resonance_pool(pool[static_cast<size_t>(choice.index)].U,
                                           choice.alignment);
    return nearest_prototype(v, prototypes);
}

EpochPlan make_plan(const Batch& batch, const ModelParams& params) {
    check_labels(batch);
    if (!batch.unl_target.empty() && batch.unl_source.empty()) {
        throw PreconditionError("make_plan: no unlabeled source pool for target dual pairing");
    }
    if (!(params.irf.delta > 0.0)) throw PreconditionError("make_plan: delta must be > 0");

    std::vector<UttState> states = forward_all(batch, params);
    const size_t nl = batch.labeled.size();
    const size_t ns = batch.unl_source.size();
    const size_t nt = batch.unl_target.size();

    EpochPlan plan;
    plan.target_anchor.resize(nt);
    plan.pseudo_label.resize(nt);
    plan.source_ref.resize(ns);
    plan.target_ref.resize(nt);

#pragma omp parallel for schedule(static)
    for (int j = 0; j < static_cast<int>(nt); ++j) {
        const UttState& x = states[nl + ns + static_cast<size_t>(j)];
        plan.target_anchor[static_cast<size_t>(j)] = scan_pool(x, states, 0, nl, params.irf);
        plan.pseudo_label[static_cast<size_t>(j)] =
            batch.labeled[static_cast<size_t>(plan.target_anchor[static_cast<size_t>(j)].ref_index)]
                .label;
        plan.target_ref[static_cast<size_t>(j)] = scan_pool(x, states, nl, ns, params.irf);
    }

#pragma omp parallel for schedule(static)
    for (int i = 0; i < static_cast<int>(ns); ++i) {
        const UttState& x = states[nl + static_cast<size_t>(i)];
        plan.source_ref[static_cast<size_t>(i)] = scan_pool(x, states, 0, nl, params.irf);
    }

    return plan;
}

namespace {

std::vector<size_t> full_range(size_t n) {
    std::vector<size_t> idx(n);
    for (size_t i = 0; i < n; ++i) idx[i] = i;
    return idx;
}

}  // namespace

LossDiagnostics eval_loss(const Batch& batch, const ModelParams& params, const EpochPlan& plan,
                          const TricParams& tric, const LossSwitches& sw,
                          const BatchSlice* slice) {
    std::vector<UttState> states = forward_all(batch, params);
    const size_t nl = batch.labeled.size();
    const size_t ns = batch.unl_source.size();

    const std::vector<size_t> sources = slice ? slice->sources : full_range(ns);
    const std::vector<size_t> targets = slice ? slice->targets : full_range(batch.unl_target.size());

    LossDiagnostics diag;

    if (!sw.disable_proto) {
        std::vector<std::vector<double>> z_labeled(nl);
        std::vector<int> labels(nl);
        for (size_t l = 0; l < nl; ++l) {
            z_labeled[l] = states[l].z;
            labels[l] = batch.labeled[l].label;
        }
        std::vector<std::vector<double>> anchor_z;
        std::vector<std::vector<double>> v_pseudo;
        std::vector<int> pseudo_labels;
        anchor_z.reserve(targets.size());
        v_pseudo.reserve(targets.size());
        pseudo_labels.reserve(targets.size());
        for (size_t j : targets) {
            const PairPlan& p = plan.target_anchor[j];
            anchor_z.push_back(states[static_cast<size_t>(p.ref_index)].z);
            v_pseudo.push_back(resonance_pool(states[static_cast<size_t>(p.ref_index)].U, p.alignment));
            pseudo_labels.push_back(plan.pseudo_label[j]);
        }
        PrototypeSet set =
            enhanced_prototypes(z_labeled, labels, anchor_z, pseudo_labels, batch.num_classes);
        diag.proto = proto_loss(z_labeled, labels, v_pseudo, pseudo_labels, set.enhanced);
        diag.total += tric.lambda1 * diag.proto;
    }

    if (!sw.disable_dual) {
        std::vector<DualPair> pairs;
        pairs.reserve(sources.size() + targets.size());
        for (size_t i : sources) {
            const PairPlan& p = plan.source_ref[i];
            const UttState& y = states[static_cast<size_t>(p.ref_index)];
            FrozenPairEval fp = eval_frozen_pair(states[nl + i], y, p.alignment, params.irf);
            pairs.push_back({fp.irf, std::move(fp.v_u), y.z});
        }
        for (size_t j : targets) {
            const PairPlan& p = plan.target_ref[j];
            const UttState& y = states[nl + static_cast<size_t>(p.ref_index)];
            FrozenPairEval fp = eval_frozen_pair(states[nl + ns + j], y, p.alignment, params.irf);
            pairs.push_back({fp.irf, std::move(fp.v_u), y.z});
        }
        diag.dual = dual_loss(pairs);
        diag.total += tric.lambda2 * diag.dual;
    }

    return diag;
}

std::pair<LossDiagnostics, EpochPlan> total_loss(const Batch& batch, const ModelParams& params,
                                                 const TricParams& tric, const LossSwitches& sw) {
    EpochPlan plan = make_plan(batch, params);
    LossDiagnostics diag = eval_loss(batch, params, plan, tric, sw);
    return {diag, plan};
}

namespace {

/// Reverse-mode accumulator. Upstream code adds gradients with respect to
/// per-frame quantities (U rows, burst values, z vectors); flush() chains
/// them through the gate and the optional projection head into the
/// parameter gradient, visiting utterances and frames in fixed order.
class GradAccum {
public:
    GradAccum(const Batch& batch, const std::vector<UttState>& states, const ModelParams& params)
        : states_(states), params_(params) {
        samples_.reserve(states.size());
        for (const Sample& s : batch.labeled) samples_.push_back(&s);
        for (const Sample& s : batch.unl_source) samples_.push_back(&s);
        for (const Sample& s : batch.unl_target) samples_.push_back(&s);

        const int d = static_cast<int>(params.gate.w.size());
        grad_.w.assign(static_cast<size_t>(d), 0.0);
        if (params.has_projection()) grad_.projection = Matrix(d, d, 0.0);

        dgate_.resize(states.size());
        dz_.resize(states.size());
        for (size_t u = 0; u < states.size(); ++u) {
            dgate_[u].assign(static_cast<size_t>(states[u].U.rows()), 0.0);
            dz_[u].assign(static_cast<size_t>(states[u].U.cols()), 0.0);
        }
        if (params.has_projection()) {
            dheff_.resize(states.size());
            for (size_t u = 0; u < states.size(); ++u) {
                dheff_[u] = Matrix(states[u].Heff.rows(), states[u].Heff.cols(), 0.0);
            }
        }
    }

    /// d(loss)/d(U_u(t, .)). Only the dynamic tail reaches the gate; the
    /// embedding part matters only when the projection head is learned.
    void add_dU(size_t u, int t, std::span<const double> dU) {
        const Sample& s = *samples_[u];
        const int d = s.H.cols();
        double acc = 0.0;
        for (int k = 0; k < 4; ++k) acc += dU[static_cast<size_t>(d + k)] * s.dhat(t, k);
        dgate_[u][static_cast<size_t>(t)] += acc;
        if (params_.has_projection()) {
            for (int m = 0; m < d; ++m) dheff_[u](t, m) += dU[static_cast<size_t>(m)];
        }
    }

    /// d(loss)/d(B_u(t)) with B = gate * (alpha|d1| + beta|d2| + gamma(|d3|+|d4|)).
    void add_dburst(size_t u, int t, double g) {
        const Sample& s = *samples_[u];
        const UttState& st = states_[u];
        double gate = st.gate[static_cast<size_t>(t)];
        grad_.alpha += g * gate * std::abs(s.dhat(t, 0));
        grad_.beta += g * gate * std::abs(s.dhat(t, 1));
        grad_.gamma += g * gate * (std::abs(s.dhat(t, 2)) + std::abs(s.dhat(t, 3)));
        dgate_[u][static_cast<size_t>(t)] += g * st.s[static_cast<size_t>(t)];
    }

    void add_dz(size_t u, std::span<const double> dz) {
        for (size_t m = 0; m < dz.size(); ++m) dz_[u][m] += dz[m];
    }

    void add_ddelta(double g) { grad_.delta += g; }

    ParamGrad flush() {
        const int d = static_cast<int>(params_.gate.w.size());
        for (size_t u = 0; u < states_.size(); ++u) {
            const UttState& st = states_[u];
            const int frames = st.U.rows();

            // z = mean of U rows
            std::vector<double> per_frame(dz_[u].size());
            for (size_t m = 0; m < dz_[u].size(); ++m) {
                per_frame[m] = dz_[u][m] / static_cast<double>(frames);
            }
            for (int t = 0; t < frames; ++t) add_dU(u, t, per_frame);

            // gate(t) = sigmoid(w . Heff(t) + b)
            for (int t = 0; t < frames; ++t) {
                double g = st.gate[static_cast<size_t>(t)];
                double gd = dgate_[u][static_cast<size_t>(t)] * g * (1.0 - g);
                for (int m = 0; m < d; ++m) grad_.w[static_cast<size_t>(m)] += gd * st.Heff(t, m);
                grad_.b += gd;
                if (params_.has_projection()) {
                    for (int m = 0; m < d; ++m) {
                        dheff_[u](t, m) += gd * params_.gate.w[static_cast<size_t>(m)];
                    }
                }
            }

            // Heff(t) = P . H(t)
            if (params_.has_projection()) {
                const Sample& s = *samples_[u];
                for (int t = 0; t < frames; ++t) {
                    for (int m = 0; m < d; ++m) {
                        double gm = dheff_[u](t, m);
                        if (gm == 0.0) continue;
                        for (int nn = 0; nn < d; ++nn) {
                            grad_.projection(m, nn) += gm * s.H(t, nn);
                        }
                    }
                }
            }
        }
        return std::move(grad_);
    }

private:
    const std::vector<UttState>& states_;
    const ModelParams& params_;
    std::vector<const Sample*> samples_;
    std::vector<std::vector<double>> dgate_;
    std::vector<std::vector<double>> dz_;
    std::vector<Matrix> dheff_;
    ParamGrad grad_;
};

/// Backward through one frozen-alignment resonance: given d(loss)/d(irf)
/// and d(loss)/d(v_u), accumulates into both utterances.
void backward_frozen_pair(GradAccum& acc, const std::vector<UttState>& states, size_t ux,
                          size_t uy, const std::vector<int>& alignment, const IrfParams& irf,
                          double d_irf, std::span<const double> dv_u) {
    const UttState& x = states[ux];
    const UttState& y = states[uy];
    const int tx = x.U.rows();
    const int dim = x.U.cols();

    // v_u = mean over source frames of U_y(alignment[i])
    std::vector<double> dv_row(static_cast<size_t>(dim));
    for (size_t m = 0; m < dv_row.size(); ++m) dv_row[m] = dv_u[m] / static_cast<double>(tx);
    for (int i = 0; i < tx; ++i) acc.add_dU(uy, alignment[static_cast<size_t>(i)], dv_row);

    if (d_irf == 0.0) return;

    const double dR = d_irf / static_cast<double>(tx);
    std::vector<double> du(static_cast<size_t>(dim));
    std::vector<double> dvv(static_cast<size_t>(dim));
    for (int i = 0; i < tx; ++i) {
        const int j = alignment[static_cast<size_t>(i)];
        std::span<const double> urow = x.U.row(i);
        std::span<const double> vrow = y.U.row(j);

        double db = x.burst[static_cast<size_t>(i)] - y.burst[static_cast<size_t>(j)];
        double e = std::exp(-irf.delta * db * db);
        double c = safe_cosine(urow, vrow);

        double de = dR * c;
        double dc = dR * e;

        acc.add_ddelta(de * (-db * db) * e);
        double ddb = de * (-2.0 * irf.delta * db) * e;
        acc.add_dburst(ux, i, ddb);
        acc.add_dburst(uy, j, -ddb);

        double nu2 = dot(urow, urow);
        double nv2 = dot(vrow, vrow);
        if (nu2 > 0.0 && nv2 > 0.0) {
            double nu = std::sqrt(nu2);
            double nv = std::sqrt(nv2);
            for (int m = 0; m < dim; ++m) {
                du[static_cast<size_t>(m)] =
                    dc * (vrow[static_cast<size_t>(m)] / (nu * nv) -
                          c * urow[static_cast<size_t>(m)] / nu2);
                dvv[static_cast<size_t>(m)] =
                    dc * (urow[static_cast<size_t>(m)] / (nu * nv) -
                          c * vrow[static_cast<size_t>(m)] / nv2);
            }
            acc.add_dU(ux, i, du);
            acc.add_dU(uy, j, dvv);
        }
    }
}

}  // namespace

ParamGrad grad_total_loss(const Batch& batch, const ModelParams& params, const EpochPlan& plan,
                          const TricParams& tric, const LossSwitches& sw,
                          const BatchSlice* slice) {
    std::vector<UttState> states = forward_all(batch, params);
    const size_t nl = batch.labeled.size();
    const size_t ns = batch.unl_source.size();
    const int num_classes = batch.num_classes;

    const std::vector<size_t> sources = slice ? slice->sources : full_range(ns);
    const std::vector<size_t> targets = slice ? slice->targets : full_range(batch.unl_target.size());

    GradAccum acc(batch, states, params);

    if (!sw.disable_proto && tric.lambda1 != 0.0) {
        // forward pieces of the prototype term (only active targets)
        std::vector<std::vector<double>> v_pseudo(plan.target_anchor.size());
        for (size_t j : targets) {
            const PairPlan& p = plan.target_anchor[j];
            v_pseudo[j] = resonance_pool(states[static_cast<size_t>(p.ref_index)].U, p.alignment);
        }
        std::vector<std::vector<size_t>> labeled_of(static_cast<size_t>(num_classes));
        std::vector<std::vector<size_t>> pseudo_of(static_cast<size_t>(num_classes));
        for (size_t l = 0; l < nl; ++l) {
            labeled_of[static_cast<size_t>(batch.labeled[l].label)].push_back(l);
        }
        for (size_t j : targets) {
            pseudo_of[static_cast<size_t>(plan.pseudo_label[j])].push_back(j);
        }

        const int dim = states.front().U.cols();
        std::vector<double> proto(static_cast<size_t>(dim));
        std::vector<double> dproto(static_cast<size_t>(dim));
        std::vector<double> dvec(static_cast<size_t>(dim));

        for (int c = 0; c < num_classes; ++c) {
            const auto& lab = labeled_of[static_cast<size_t>(c)];
            const auto& pse = pseudo_of[static_cast<size_t>(c)];
            const double n_c = static_cast<double>(lab.size());
            const double m_c = static_cast<double>(pse.size());
            const double denom = n_c + m_c;

            // p_c = (sum z_labeled + sum z_anchor) / (N_c + M_c)
            std::fill(proto.begin(), proto.end(), 0.0);
            for (size_t l : lab) {
                for (int m = 0; m < dim; ++m) proto[static_cast<size_t>(m)] += states[l].z[static_cast<size_t>(m)];
            }
            for (size_t j : pse) {
                const auto& az = states[static_cast<size_t>(plan.target_anchor[j].ref_index)].z;
                for (int m = 0; m < dim; ++m) proto[static_cast<size_t>(m)] += az[static_cast<size_t>(m)];
            }
            for (int m = 0; m < dim; ++m) proto[static_cast<size_t>(m)] /= denom;

            std::fill(dproto.begin(), dproto.end(), 0.0);
            const double wl = tric.lambda1 * 2.0 / (num_classes * n_c);
            for (size_t l : lab) {
                for (int m = 0; m < dim; ++m) {
                    double diff = states[l].z[static_cast<size_t>(m)] - proto[static_cast<size_t>(m)];
                    dvec[static_cast<size_t>(m)] = wl * diff;
                    dproto[static_cast<size_t>(m)] -= wl * diff;
                }
                acc.add_dz(l, dvec);
            }
            if (!pse.empty()) {
                const double wu = tric.lambda1 * 2.0 / (num_classes * m_c);
                for (size_t j : pse) {
                    for (int m = 0; m < dim; ++m) {
                        double diff = v_pseudo[j][static_cast<size_t>(m)] - proto[static_cast<size_t>(m)];
                        dvec[static_cast<size_t>(m)] = wu * diff;
                        dproto[static_cast<size_t>(m)] -= wu * diff;
                    }
                    // v_j is pooled from the anchor's rows at the frozen alignment
                    const PairPlan& p = plan.target_anchor[j];
                    const size_t anchor = static_cast<size_t>(p.ref_index);
                    const int t_j = static_cast<int>(p.alignment.size());
                    std::vector<double> dv_row(static_cast<size_t>(dim));
                    for (int m = 0; m < dim; ++m) {
                        dv_row[static_cast<size_t>(m)] = dvec[static_cast<size_t>(m)] / t_j;
                    }
                    for (int i = 0; i < t_j; ++i) {
                        acc.add_dU(anchor, p.alignment[static_cast<size_t>(i)], dv_row);
                    }
                }
            }

            // prototype contributions back into the member embeddings
            for (int m = 0; m < dim; ++m) dvec[static_cast<size_t>(m)] = dproto[static_cast<size_t>(m)] / denom;
            for (size_t l : lab) acc.add_dz(l, dvec);
            for (size_t j : pse) {
                acc.add_dz(static_cast<size_t>(plan.target_anchor[j].ref_index), dvec);
            }
        }
    }

    if (!sw.disable_dual && tric.lambda2 != 0.0) {
        const size_t num_pairs = sources.size() + targets.size();
        if (num_pairs > 0) {
            const double scale = tric.lambda2 / static_cast<double>(num_pairs);
            const int dim = states.front().U.cols();
            std::vector<double> dv_u(static_cast<size_t>(dim));
            std::vector<double> dv_ref(static_cast<size_t>(dim));

            auto backward_pair = [&](size_t ux, size_t uy, const PairPlan& p) {
                FrozenPairEval fp = eval_frozen_pair(states[ux], states[uy], p.alignment, params.irf);
                const std::vector<double>& v_ref = states[uy].z;
                double n2 = 0.0;
                for (int m = 0; m < dim; ++m) {
                    double diff = fp.v_u[static_cast<size_t>(m)] - v_ref[static_cast<size_t>(m)];
                    dv_u[static_cast<size_t>(m)] = scale * 2.0 * (1.0 - fp.irf) * diff;
                    dv_ref[static_cast<size_t>(m)] = -dv_u[static_cast<size_t>(m)];
                    n2 += diff * diff;
                }
                double d_irf = -scale * n2;
                acc.add_dz(uy, dv_ref);
                backward_frozen_pair(acc, states, ux, uy, p.alignment, params.irf, d_irf, dv_u);
            };

            for (size_t i : sources) {
                backward_pair(nl + i, static_cast<size_t>(plan.source_ref[i].ref_index),
                              plan.source_ref[i]);
            }
            for (size_t j : targets) {
                backward_pair(nl + ns + j, nl + static_cast<size_t>(plan.target_ref[j].ref_index),
                              plan.target_ref[j]);
            }
        }
    }

    return acc.flush();
}

}  // namespace sere
