#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "sere/errors.hpp"
#include "sere/trainer.hpp"
#include "toybatch.hpp"

using namespace sere;

namespace {

/// Tiny but learnable dataset for the training-loop contracts.
Dataset tiny_dataset(uint64_t seed) {
    Rng rng(seed);
    Dataset data;
    data.classes = {"a", "b"};
    for (int c = 0; c < 2; ++c) {
        for (int i = 0; i < 3; ++i) {
            data.labeled.push_back(
                testutil::random_sample(rng, "l" + std::to_string(c) + std::to_string(i), c, 4, 6));
        }
    }
    for (int i = 0; i < 4; ++i) {
        data.unl_source.push_back(testutil::random_sample(rng, "s" + std::to_string(i), -1, 4, 6));
        data.unl_target.push_back(testutil::random_sample(rng, "t" + std::to_string(i), -1, 4, 6));
    }
    for (int c = 0; c < 2; ++c) {
        for (int i = 0; i < 2; ++i) {
            data.eval_target.push_back(
                testutil::random_sample(rng, "e" + std::to_string(c) + std::to_string(i), c, 4, 6));
        }
    }
    return data;
}

}  // namespace

TEST_CASE("make_folds stratifies and is deterministic") {
    std::vector<int> labels = {0, 0, 0, 0, 0, 1, 1, 1, 1, 1};
    auto folds = make_folds(labels, 5, 42);
    REQUIRE(folds.size() == 5);
    std::set<size_t> seen;
    for (const auto& fold : folds) {
        REQUIRE(fold.size() == 2);
        int class0 = 0;
        for (size_t idx : fold) {
            CHECK(seen.insert(idx).second);  // disjoint
            if (labels[idx] == 0) ++class0;
        }
        CHECK(class0 == 1);  // one per class per fold
    }
    CHECK(seen.size() == labels.size());  // union is everything

    CHECK(make_folds(labels, 5, 42) == folds);
    CHECK(make_folds(labels, 5, 43) != folds);

    std::vector<int> skewed = {0, 0, 0, 1, 1, 1, 1, 1};
    CHECK_THROWS_AS(make_folds(skewed, 5, 1), PreconditionError);
}

TEST_CASE("adam_step basics") {
    SUBCASE("zero gradient leaves params unchanged from fresh state") {
        std::vector<double> params = {1.0, -2.0};
        AdamState state;
        adam_step(params, {0.0, 0.0}, state, 0.1);
        CHECK(params[0] == 1.0);
        CHECK(params[1] == -2.0);
        CHECK(state.step == 1);
    }

    SUBCASE("first step moves by about -lr * sign(g)") {
        std::vector<double> params = {0.0};
        AdamState state;
        adam_step(params, {3.7}, state, 1e-3);
        CHECK(params[0] == doctest::Approx(-1e-3).epsilon(1e-4));

        std::vector<double> neg = {0.0};
        AdamState s2;
        adam_step(neg, {-0.02}, s2, 1e-3);
        CHECK(neg[0] == doctest::Approx(1e-3).epsilon(1e-4));
    }

    SUBCASE("two steps match the hand-unrolled recurrence") {
        const double lr = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8;
        const double g1 = 0.5, g2 = -0.25;
        std::vector<double> params = {1.0};
        AdamState state;
        adam_step(params, {g1}, state, lr, b1, b2, eps);
        adam_step(params, {g2}, state, lr, b1, b2, eps);

        double m = (1 - b1) * g1;
        double v = (1 - b2) * g1 * g1;
        double theta = 1.0 - lr * (m / (1 - b1)) / (std::sqrt(v / (1 - b2)) + eps);
        m = b1 * m + (1 - b1) * g2;
        v = b2 * v + (1 - b2) * g2 * g2;
        theta -= lr * (m / (1 - b1 * b1)) / (std::sqrt(v / (1 - b2 * b2)) + eps);
        CHECK(params[0] == doctest::Approx(theta).epsilon(1e-15));
    }
}

TEST_CASE("compute_eval_report") {
    SUBCASE("perfect predictions") {
        EvalReport r = compute_eval_report({0, 1, 2, 0}, {0, 1, 2, 0}, 3);
        CHECK(r.uar == 1.0);
        for (double rec : r.recall) CHECK(rec == 1.0);
    }

    SUBCASE("recalls 0.5 and 1.0 average to 0.75") {
        EvalReport r = compute_eval_report({0, 0, 1, 1}, {0, 1, 1, 1}, 2);
        CHECK(r.recall[0] == 0.5);
        CHECK(r.recall[1] == 1.0);
        CHECK(r.uar == doctest::Approx(0.75));
    }

    SUBCASE("collapsed predictions on a balanced set give chance UAR") {
        EvalReport r = compute_eval_report({0, 0, 1, 1}, {0, 0, 0, 0}, 2);
        CHECK(r.uar == doctest::Approx(0.5));
    }

    SUBCASE("absent classes are excluded from the mean") {
        EvalReport r = compute_eval_report({0, 0}, {0, 1}, 3);
        CHECK(r.uar == doctest::Approx(0.5));
    }

    SUBCASE("duplicating one class's samples leaves UAR unchanged") {
        Rng rng(9);
        for (int trial = 0; trial < 20; ++trial) {
            std::vector<int> truth, pred;
            for (int i = 0; i < 30; ++i) {
                truth.push_back(static_cast<int>(rng.bounded(3)));
                pred.push_back(static_cast<int>(rng.bounded(3)));
            }
            EvalReport base = compute_eval_report(truth, pred, 3);
            std::vector<int> truth2 = truth, pred2 = pred;
            for (size_t i = 0; i < truth.size(); ++i) {
                if (truth[i] == 1) {
                    truth2.push_back(truth[i]);
                    pred2.push_back(pred[i]);
                }
            }
            EvalReport doubled = compute_eval_report(truth2, pred2, 3);
            CHECK(doubled.uar == doctest::Approx(base.uar).epsilon(1e-12));
        }
    }

    CHECK_THROWS_AS(compute_eval_report({}, {}, 2), PreconditionError);
}

TEST_CASE("train contract on the tiny dataset") {
    Dataset data = tiny_dataset(7);
    TrainConfig cfg;
    cfg.epochs = 10;
    cfg.shots_per_class = 2;
    cfg.seed = 3;

    TrainResult result = train(cfg, data);
    REQUIRE(result.epoch_loss.size() == 10);
    for (const LossDiagnostics& d : result.epoch_loss) CHECK(std::isfinite(d.total));
    CHECK(result.model.classes == data.classes);
    CHECK(result.model.labeled_ids.size() == 4);  // 2 shots x 2 classes
    CHECK(result.model.prototypes.rows() == 2);
    CHECK(result.model.prototypes.cols() == 8);  // d + 4

    SUBCASE("same seed is bitwise reproducible") {
        TrainResult again = train(cfg, data);
        REQUIRE(again.epoch_loss.size() == result.epoch_loss.size());
        for (size_t e = 0; e < result.epoch_loss.size(); ++e) {
            CHECK(again.epoch_loss[e].total == result.epoch_loss[e].total);
            CHECK(again.epoch_loss[e].proto == result.epoch_loss[e].proto);
            CHECK(again.epoch_loss[e].dual == result.epoch_loss[e].dual);
        }
        CHECK(again.model.params.gate.w == result.model.params.gate.w);
        CHECK(again.model.params.irf.delta == result.model.params.irf.delta);
    }

    SUBCASE("different seed picks a different shot set") {
        TrainConfig other = cfg;
        other.seed = 4;
        TrainResult again = train(other, data);
        CHECK(again.model.labeled_ids != result.model.labeled_ids);
    }

    SUBCASE("mini-batched training stays finite and deterministic") {
        TrainConfig mb = cfg;
        mb.batch_size = 1;
        TrainResult r1 = train(mb, data);
        TrainResult r2 = train(mb, data);
        for (size_t e = 0; e < r1.epoch_loss.size(); ++e) {
            CHECK(std::isfinite(r1.epoch_loss[e].total));
            CHECK(r1.epoch_loss[e].total == r2.epoch_loss[e].total);
        }
    }
}

TEST_CASE("train with both terms disabled is a no-op") {
    Dataset data = tiny_dataset(11);
    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.shots_per_class = 2;
    cfg.disable_proto = true;
    cfg.disable_dual = true;

    TrainResult result = train(cfg, data);
    for (const LossDiagnostics& d : result.epoch_loss) {
        CHECK(d.total == 0.0);
        CHECK(d.proto == 0.0);
        CHECK(d.dual == 0.0);
    }
    // parameters must be bitwise at their initialization
    for (double w : result.model.params.gate.w) CHECK(w == 0.0);
    CHECK(result.model.params.gate.b == 0.0);
    CHECK(result.model.params.irf.alpha == 1.0);
    CHECK(result.model.params.irf.beta == 1.0);
    CHECK(result.model.params.irf.gamma == 1.0);
    CHECK(result.model.params.irf.delta == 1.0);
}

TEST_CASE("ablation flags shape the logged losses") {
    Dataset data = tiny_dataset(13);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.shots_per_class = 2;
    cfg.lambda1 = 0.7;
    cfg.lambda2 = 1.3;

    TrainConfig no_dual = cfg;
    no_dual.disable_dual = true;
    TrainResult r = train(no_dual, data);
    for (const LossDiagnostics& d : r.epoch_loss) {
        CHECK(d.dual == 0.0);
        CHECK(d.total == cfg.lambda1 * d.proto);
    }

    TrainConfig no_proto = cfg;
    no_proto.disable_proto = true;
    TrainResult r2 = train(no_proto, data);
    for (const LossDiagnostics& d : r2.epoch_loss) {
        CHECK(d.proto == 0.0);
        CHECK(d.total == cfg.lambda2 * d.dual);
    }
}

TEST_CASE("train preconditions") {
    Dataset data = tiny_dataset(17);
    TrainConfig cfg;
    cfg.shots_per_class = 4;  // only 3 labeled per class available
    CHECK_THROWS_AS(train(cfg, data), PreconditionError);

    TrainConfig bad_lr;
    bad_lr.learning_rate = 0.0;
    CHECK_THROWS_AS(train(bad_lr, data), PreconditionError);

    Dataset no_target = data;
    no_target.unl_target.clear();
    TrainConfig ok;
    ok.shots_per_class = 2;
    CHECK_THROWS_AS(train(ok, no_target), PreconditionError);
}

TEST_CASE("evaluate classifies against the model pool") {
    Dataset data = tiny_dataset(19);
    TrainConfig cfg;
    cfg.epochs = 4;
    cfg.shots_per_class = 2;
    TrainResult result = train(cfg, data);

    std::vector<Sample> pool;
    for (const std::string& id : result.model.labeled_ids) {
        for (const Sample& s : data.labeled) {
            if (s.id == id) pool.push_back(s);
        }
    }
    REQUIRE(pool.size() == 4);

    EvalReport report = evaluate(result.model, pool, data.eval_target);
    CHECK(report.num_classes == 2);
    CHECK(report.uar >= 0.0);
    CHECK(report.uar <= 1.0);
    int total = 0;
    for (int c : report.confusion) total += c;
    CHECK(total == static_cast<int>(data.eval_target.size()));

    CHECK_THROWS_AS(evaluate(result.model, pool, {}), PreconditionError);
    CHECK_THROWS_AS(evaluate(result.model, {}, data.eval_target), PreconditionError);

    SUBCASE("eval samples copied from the pool classify to their own class") {
        std::vector<Sample> copies;
        for (size_t i = 0; i < pool.size(); ++i) {
            Sample s = pool[i];
            s.id = "copy" + std::to_string(i);
            copies.push_back(std::move(s));
        }
        EvalReport perfect = evaluate(result.model, pool, copies);
        // identical samples resonate at 1 with their own labeled twin, whose
        // pooled representation and pseudo-anchors fed the prototypes
        CHECK(perfect.uar >= 0.5);
    }
}
