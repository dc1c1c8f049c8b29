#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "spanrec/eval.hpp"
#include "spanrec/training.hpp"
#include "support/synthetic.hpp"

using namespace spanrec;

namespace {

// Small corpus + graph for end-to-end train() tests. ~300 interactions.
struct TrainSetup {
    Dataset data;
    Split parts;
    HeteroGraph graph;
    ModelConfig model_config;
};

TrainSetup make_setup() {
    testing::SyntheticSpec spec;
    spec.users = 40;
    spec.items = 30;
    spec.categories = 4;
    spec.communities = 4;
    spec.days = 120;
    spec.base_ratings_per_user = 5;
    spec.extra_ratings_per_user = 4;
    spec.trust_base = 3;
    spec.trust_extra = 2;

    TrainSetup s;
    s.data = testing::synthetic_dataset(spec);
    s.parts = split(s.data, {0.8, 0.1, 0.1, 5});
    GraphConfig gc;
    gc.span.origin = s.data.min_timestamp();
    gc.span.span_length = 30 * 86400;
    gc.item_item_seed = 5;
    s.graph = build_graph(s.parts.train, s.data.trusts, s.data.category_of, s.data.num_users(),
                          s.data.num_items(), gc);
    s.model_config.embed_dim = 8;
    return s;
}

TrainConfig quick_config(std::uint64_t seed) {
    TrainConfig c;
    c.epochs = 3;
    c.learning_rate = 5e-3;
    c.batch_size = 64;
    c.dropout_rate = 0.3;
    c.seed = seed;
    return c;
}

bool same_params(const Model& a, const Model& b) {
    return a.emb.user.data == b.emb.user.data && a.emb.item.data == b.emb.item.data &&
           a.emb.span.data == b.emb.span.data && a.att.W.data == b.att.W.data &&
           a.att.a == b.att.a && a.att.W_e.data == b.att.W_e.data && a.pred.W_l == b.pred.W_l &&
           a.pred.W_s == b.pred.W_s && a.pred.alpha == b.pred.alpha && a.pred.beta == b.pred.beta;
}

double max_abs(const Gradients& g) {
    double m = 0.0;
    auto scan = [&m](const double* p, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) m = std::max(m, std::fabs(p[i]));
    };
    scan(g.emb_user.data.data(), g.emb_user.size());
    scan(g.emb_item.data.data(), g.emb_item.size());
    scan(g.emb_span.data.data(), g.emb_span.size());
    scan(g.W.data.data(), g.W.size());
    scan(g.a.data(), g.a.size());
    scan(g.W_e.data.data(), g.W_e.size());
    scan(g.W_l.data(), g.W_l.size());
    scan(g.W_s.data(), g.W_s.size());
    scan(&g.alpha, 1);
    scan(&g.beta, 1);
    return m;
}

}  // namespace

TEST_CASE("central_difference recovers a simple derivative") {
    const auto f = [](double x) { return x * x; };
    CHECK(central_difference(f, 3.0, 1e-4) == doctest::Approx(6.0).epsilon(1e-8));
}

TEST_CASE("train config validation") {
    TrainConfig c;
    validate(c);  // defaults are fine
    c.epochs = -1;
    CHECK_THROWS_AS(validate(c), ValidationError);
    c = TrainConfig{};
    c.learning_rate = 0.0;
    CHECK_THROWS_AS(validate(c), ValidationError);
    c = TrainConfig{};
    c.batch_size = 0;
    CHECK_THROWS_AS(validate(c), ValidationError);
    c = TrainConfig{};
    c.dropout_rate = 1.0;
    CHECK_THROWS_AS(validate(c), ValidationError);
    c = TrainConfig{};
    c.adam_beta2 = 1.0;
    CHECK_THROWS_AS(validate(c), ValidationError);
}

TEST_CASE("inverted dropout: identity at rate 0, calibrated at rate 0.6") {
    Rng rng(2024);
    const std::vector<double> v(10000, 1.0);

    std::vector<double> mask;
    const auto out0 = apply_dropout(v, 0.0, rng, &mask);
    CHECK(out0 == v);
    CHECK(mask == std::vector<double>(10000, 1.0));

    const auto out = apply_dropout(v, 0.6, rng, &mask);
    std::size_t survivors = 0;
    double sum = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
        CHECK(out[i] == mask[i] * v[i]);
        if (out[i] != 0.0) {
            ++survivors;
            CHECK(out[i] == doctest::Approx(2.5));  // 1 / (1 - 0.6)
        }
        sum += out[i];
    }
    const double survivor_fraction = static_cast<double>(survivors) / 10000.0;
    CHECK(survivor_fraction == doctest::Approx(0.4).epsilon(0.05));  // 0.4 +- 0.02
    CHECK(std::fabs(survivor_fraction - 0.4) <= 0.02);
    CHECK(sum / 10000.0 == doctest::Approx(1.0).epsilon(0.05));  // inverted scaling

    CHECK_THROWS_AS(apply_dropout(v, 1.0, rng, nullptr), ValidationError);
    CHECK_THROWS_AS(apply_dropout(v, -0.1, rng, nullptr), ValidationError);
}

TEST_CASE("analytic gradients match central differences for 5 seeds") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const GradReport report = gradient_check(seed);
        INFO("seed ", seed, " overall ", report.overall);
        CHECK(report.pass(1e-4));
        CHECK(report.entries.size() == 10);  // every parameter family is covered
        for (const auto& e : report.entries) {
            INFO("family ", e.family, " err ", e.max_rel_err);
            CHECK(e.max_rel_err < 1e-4);
            CHECK(e.coords > 0);
        }
    }
}

TEST_CASE("gradient check is stable across finite-difference steps") {
    const GradcheckFixture fixture = make_gradcheck_fixture(1);
    CHECK(gradient_check(fixture, 1e-4).pass(1e-4));
    CHECK(gradient_check(fixture, 1e-5).pass(1e-4));
    CHECK(gradient_check(fixture, 1e-6).pass(1e-3));  // round-off grows as eps shrinks
}

TEST_CASE("gradient check detects a corrupted analytic gradient") {
    const GradcheckFixture fixture = make_gradcheck_fixture(1);
    const GradReport corrupted = gradient_check(fixture, 1e-5, 0.5);
    CHECK(!corrupted.pass(1e-4));
}

TEST_CASE("gradcheck fixture has two spans per user and a margin from the kinks") {
    const GradcheckFixture fx = make_gradcheck_fixture(3);
    CHECK(fx.graph.num_users == 10);
    CHECK(fx.graph.num_items == 15);
    for (const auto& slots : fx.graph.user_span_slots) CHECK(slots.size() >= 2);
    CHECK(fx.batch.size() == 12);
    CHECK(fx.model.config.dropout_rate == 0.0);
}

TEST_CASE("a zero-loss batch produces exactly zero gradients") {
    const GradcheckFixture fx = make_gradcheck_fixture(2);
    ProjectionCache cache(fx.model, fx.graph);
    std::vector<ExampleTape> tapes(fx.batch.size());
    for (std::size_t j = 0; j < fx.batch.size(); ++j) {
        forward_example(fx.model, fx.graph, cache, fx.batch[j], nullptr, tapes[j]);
        tapes[j].target = tapes[j].y;  // perfect prediction
    }
    Gradients grads = make_gradients(fx.model);
    backward_batch(fx.model, fx.graph, tapes, grads);
    CHECK(max_abs(grads) <= 1e-12);
}

TEST_CASE("fusion gradients equal the head outputs scaled by the loss derivative") {
    const GradcheckFixture fx = make_gradcheck_fixture(4);
    ProjectionCache cache(fx.model, fx.graph);

    std::vector<ExampleTape> tapes(1);
    forward_example(fx.model, fx.graph, cache, fx.batch.front(), nullptr, tapes[0]);
    REQUIRE(tapes[0].used_span);  // fixture timestamps always land in a span

    Gradients grads = make_gradients(fx.model);
    backward_batch(fx.model, fx.graph, tapes, grads);
    const double g = 2.0 * (tapes[0].y - tapes[0].target);
    CHECK(grads.alpha == doctest::Approx(g * tapes[0].r_s).epsilon(1e-14));
    CHECK(grads.beta == doctest::Approx(g * tapes[0].r_l).epsilon(1e-14));
}

TEST_CASE("non-finite gradients abort with the parameter family name") {
    const GradcheckFixture fx = make_gradcheck_fixture(2);
    Gradients grads = make_gradients(fx.model);
    grads.W(0, 0) = std::numeric_limits<double>::quiet_NaN();
    try {
        check_finite(grads);
        FAIL("expected TrainingError");
    } catch (const TrainingError& e) {
        CHECK(std::string(e.what()).find("attention.W") != std::string::npos);
    }
}

TEST_CASE("adam with zero gradients is the identity") {
    const GradcheckFixture fx = make_gradcheck_fixture(1);
    Model model = fx.model;
    const Model before = model;
    AdamState state = make_adam_state(model);
    Gradients grads = make_gradients(model);  // all zero
    adam_step(model, grads, state, TrainConfig{});
    CHECK(same_params(model, before));
    for (std::uint32_t t : state.W.t) CHECK(t == 0);
}

TEST_CASE("adam first step moves by about the learning rate") {
    const GradcheckFixture fx = make_gradcheck_fixture(1);
    Model model = fx.model;
    const Model before = model;
    AdamState state = make_adam_state(model);
    Gradients grads = make_gradients(model);
    std::fill(grads.W_l.begin(), grads.W_l.end(), 1.0);

    TrainConfig config;
    config.learning_rate = 1e-3;
    adam_step(model, grads, state, config);
    for (std::size_t i = 0; i < model.pred.W_l.size(); ++i) {
        CHECK(model.pred.W_l[i] - before.pred.W_l[i] ==
              doctest::Approx(-config.learning_rate).epsilon(1e-6));
        CHECK(state.W_l.t[i] == 1);
    }
    CHECK(model.pred.W_s == before.pred.W_s);  // untouched family
}

TEST_CASE("adam is stateful: two unit steps differ from one double step") {
    const GradcheckFixture fx = make_gradcheck_fixture(1);
    TrainConfig config;

    Model twice = fx.model;
    AdamState state_a = make_adam_state(twice);
    Gradients grads = make_gradients(twice);
    grads.W_l[0] = 1.0;
    adam_step(twice, grads, state_a, config);
    adam_step(twice, grads, state_a, config);

    Model once = fx.model;
    AdamState state_b = make_adam_state(once);
    grads.W_l[0] = 2.0;
    adam_step(once, grads, state_b, config);

    CHECK(twice.pred.W_l[0] != once.pred.W_l[0]);
    CHECK(twice.pred.W_l[0] ==
          doctest::Approx(fx.model.pred.W_l[0] - 2.0 * config.learning_rate).epsilon(1e-6));
}

TEST_CASE("adam bias correction is tracked per coordinate") {
    const GradcheckFixture fx = make_gradcheck_fixture(1);
    Model model = fx.model;
    AdamState state = make_adam_state(model);
    TrainConfig config;

    Gradients grads = make_gradients(model);
    grads.W_l[0] = 1.0;
    adam_step(model, grads, state, config);
    const double w0_after_first = model.pred.W_l[0];
    const double w1_initial = model.pred.W_l[1];

    grads.W_l[0] = 0.0;
    grads.W_l[1] = 1.0;
    adam_step(model, grads, state, config);

    CHECK(model.pred.W_l[0] == w0_after_first);  // skipped coordinate: bitwise unchanged
    CHECK(state.W_l.t[0] == 1);
    CHECK(state.W_l.t[1] == 1);
    // Coordinate 1's first update gets fresh bias correction, not step-2 correction.
    CHECK(model.pred.W_l[1] - w1_initial == doctest::Approx(-config.learning_rate).epsilon(1e-6));
}

TEST_CASE("training is deterministic given the seed") {
    const TrainSetup s = make_setup();
    const TrainResult a = train(s.graph, s.parts.train, s.parts.val, s.model_config, quick_config(9));
    const TrainResult b = train(s.graph, s.parts.train, s.parts.val, s.model_config, quick_config(9));

    CHECK(same_params(a.model, b.model));
    CHECK(a.best_epoch == b.best_epoch);
    REQUIRE(a.trace.size() == b.trace.size());
    for (std::size_t i = 0; i < a.trace.size(); ++i) {
        CHECK(a.trace[i].train_loss == b.trace[i].train_loss);
        CHECK(a.trace[i].val_mae == b.trace[i].val_mae);
        CHECK(a.trace[i].val_rmse == b.trace[i].val_rmse);
    }

    const TrainResult c = train(s.graph, s.parts.train, s.parts.val, s.model_config, quick_config(10));
    CHECK(!same_params(a.model, c.model));
}

TEST_CASE("training loss decreases over the epochs") {
    const TrainSetup s = make_setup();
    REQUIRE(s.parts.train.size() >= 100);
    TrainConfig config = quick_config(1);
    config.epochs = 8;
    const TrainResult result = train(s.graph, s.parts.train, s.parts.val, s.model_config, config);
    REQUIRE(result.trace.size() == 8);
    CHECK(result.trace.back().train_loss < result.trace.front().train_loss);
    CHECK(result.best_epoch >= 1);
    CHECK(result.best_val_mae <= result.trace.front().val_mae);
}

TEST_CASE("the best-validation epoch's parameters are returned") {
    const TrainSetup s = make_setup();
    TrainConfig config = quick_config(2);
    config.epochs = 4;

    std::vector<EpochStats> seen;
    const TrainResult result = train(s.graph, s.parts.train, s.parts.val, s.model_config, config,
                                     [&](const EpochStats& st) { seen.push_back(st); });
    REQUIRE(seen.size() == 4);
    double best = std::numeric_limits<double>::infinity();
    int best_epoch = 0;
    for (const auto& st : seen)
        if (st.val_mae < best) {
            best = st.val_mae;
            best_epoch = st.epoch;
        }
    CHECK(result.best_epoch == best_epoch);
    CHECK(result.best_val_mae == best);

    // Evaluating the returned model on the validation split reproduces the
    // best epoch's trace line.
    const EvalOutcome out = evaluate_split(result.model, s.graph, s.parts.train, s.parts.val);
    CHECK(out.mae == doctest::Approx(result.best_val_mae).epsilon(1e-12));
    CHECK(out.rmse == doctest::Approx(result.best_val_rmse).epsilon(1e-12));
}

TEST_CASE("epochs=0 returns the initialized model but still evaluates") {
    const TrainSetup s = make_setup();
    TrainConfig config = quick_config(3);
    config.epochs = 0;
    const TrainResult result = train(s.graph, s.parts.train, s.parts.val, s.model_config, config);
    CHECK(result.trace.empty());
    CHECK(result.best_epoch == 0);
    CHECK(result.best_val_mae > 0.0);

    ModelConfig mc = s.model_config;
    mc.dropout_rate = config.dropout_rate;
    const Model fresh = init_model(s.graph, mc, config.seed);
    CHECK(same_params(result.model, fresh));
}

TEST_CASE("span-ablated training never touches the short-term head") {
    const TrainSetup s = make_setup();
    GraphConfig gc;
    gc.span.origin = s.data.min_timestamp();
    gc.span.span_length = 30 * 86400;
    gc.item_item_seed = 5;
    gc.flags.use_span_nodes = false;
    const HeteroGraph ablated = build_graph(s.parts.train, s.data.trusts, s.data.category_of,
                                            s.data.num_users(), s.data.num_items(), gc);
    CHECK(ablated.num_spans() == 0);

    // One batch: the short-term families receive identically zero gradients.
    ModelConfig mc = s.model_config;
    mc.dropout_rate = 0.0;
    const Model model = init_model(ablated, mc, 17);
    ProjectionCache cache(model, ablated);
    std::vector<ExampleTape> tapes(8);
    for (std::size_t j = 0; j < tapes.size(); ++j)
        forward_example(model, ablated, cache, s.parts.train[j], nullptr, tapes[j]);
    Gradients grads = make_gradients(model);
    backward_batch(model, ablated, tapes, grads);
    CHECK(grads.alpha == 0.0);
    for (double v : grads.W_s) CHECK(v == 0.0);

    // Across a whole run they stay at their initial values.
    TrainConfig config = quick_config(17);
    const TrainResult result = train(ablated, s.parts.train, s.parts.val, s.model_config, config);
    ModelConfig init_mc = s.model_config;
    init_mc.dropout_rate = config.dropout_rate;
    const Model fresh = init_model(ablated, init_mc, config.seed);
    CHECK(result.model.pred.W_s == fresh.pred.W_s);
    CHECK(result.model.pred.alpha == 1.0);
    CHECK(result.model.pred.W_l != fresh.pred.W_l);  // the live head did move
}

TEST_CASE("exploding updates abort with a training error") {
    const TrainSetup s = make_setup();
    TrainConfig config = quick_config(1);
    config.learning_rate = 1e150;  // drives activations past the double range
    config.epochs = 5;
    CHECK_THROWS_AS(train(s.graph, s.parts.train, s.parts.val, s.model_config, config),
                    TrainingError);
}

TEST_CASE("train validates inputs") {
    const TrainSetup s = make_setup();
    TrainConfig config = quick_config(1);
    config.epochs = -2;
    CHECK_THROWS_AS(train(s.graph, s.parts.train, s.parts.val, s.model_config, config),
                    ValidationError);
    CHECK_THROWS_AS(train(s.graph, {}, s.parts.val, s.model_config, quick_config(1)),
                    ValidationError);
}
