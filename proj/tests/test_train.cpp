#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "qdistill/train.hpp"
#include "qdistill/rng.hpp"
#include "support/oracles.hpp"

using namespace qdistill;
using namespace qdistill::train;

namespace {

// 6x6 two-class toy set, linearly separable: class 0 lights the top half,
// class 1 the bottom half, plus noise.
data::Dataset make_toy(int per_class, std::uint64_t seed) {
    data::Dataset ds;
    const int n = per_class * 2;
    ds.images = Tensor({n, 1, 6, 6});
    Rng rng(derive_seed(seed, "toy"));
    for (int i = 0; i < n; ++i) {
        const int label = i % 2;
        auto img = ds.images.slice(static_cast<std::size_t>(i));
        for (int p = 0; p < 36; ++p) {
            const bool bright = label == 0 ? p < 18 : p >= 18;
            img[static_cast<std::size_t>(p)] =
                (bright ? 0.8 : 0.1) + 0.05 * rng.normal();
        }
        ds.labels.push_back(label);
        ds.source_indices.push_back(i);
    }
    return ds;
}

StudentSpec toy_spec(int qubits = 2) {
    StudentSpec spec;
    spec.num_qubits = qubits;
    spec.layers = 2;
    spec.hidden_dim = 8;
    spec.num_classes = 2;
    spec.channels = 1;
    spec.height = 6;
    spec.width = 6;
    return spec;
}

} // namespace

TEST_CASE("student spec validation") {
    auto spec = toy_spec();
    spec.validate();

    SUBCASE("non-amplitude encodings require the fc reducer") {
        spec.reducer = reduce::ReducerKind::AvgPool;
        spec.encoding = encode::EncodingKind::Angle;
        CHECK_THROWS_AS(spec.validate(), ConfigError);
    }
    SUBCASE("basis-probs readout needs enough basis states") {
        spec.num_qubits = 2;
        spec.num_classes = 10;
        spec.readout = ReadoutMode::BasisProbs;
        CHECK_THROWS_AS(spec.validate(), ConfigError);
        spec.num_qubits = 4; // 16 >= 10
        spec.validate();
    }
}

TEST_CASE("student forward basics") {
    auto spec = toy_spec(2);
    auto model = student_init(spec, 5);

    SUBCASE("zero circuit and head give uniform logits") {
        std::fill(model.params.begin() + static_cast<std::ptrdiff_t>(model.circuit_offset),
                  model.params.end(), 0.0);
        const auto toy = make_toy(2, 1);
        const auto logits = student_forward(model, toy.sample(0));
        for (double z : logits) CHECK(z == 0.0);
    }

    SUBCASE("identical input gives identical logits") {
        const auto toy = make_toy(2, 1);
        const auto a = student_forward(model, toy.sample(1));
        const auto b = student_forward(model, toy.sample(1));
        CHECK(a == b);
    }

    SUBCASE("basis-probs readout concentrates on class 0 for the zero state") {
        StudentSpec bp = toy_spec(4);
        bp.encoding = encode::EncodingKind::Basis;
        bp.readout = ReadoutMode::BasisProbs;
        bp.num_classes = 10;
        auto bp_model = student_init(bp, 5);
        // zero reducer output -> all bits 0 -> |0000>; zero circuit params
        // leave the basis state fixed (the entangler ring fixes |0...0>)
        std::fill(bp_model.params.begin(), bp_model.params.end(), 0.0);
        const auto toy = make_toy(2, 1);
        const auto logits = student_forward(bp_model, toy.sample(0));
        CHECK(logits[0] == doctest::Approx(1.0));
        for (std::size_t c = 1; c < logits.size(); ++c)
            CHECK(logits[c] == doctest::Approx(0.0));
    }
}

TEST_CASE("parameter accounting") {
    auto spec = toy_spec(4);
    spec.height = 6;
    spec.width = 6;
    auto model = student_init(spec, 1);
    const auto counts = student_parameter_counts(model);
    // fc: 36*8+8 + 8*16+16 = 448; circuit: 3*4*2 = 24; head: 2*4+2 = 10
    CHECK(counts.at("reducer") == 36 * 8 + 8 + 8 * 16 + 16);
    CHECK(counts.at("circuit") == 24);
    CHECK(counts.at("readout") == 10);
    CHECK(counts.at("total") ==
          counts.at("reducer") + counts.at("circuit") + counts.at("readout"));

    SUBCASE("frozen reducers contribute no trainable parameters") {
        StudentSpec frozen = toy_spec(4);
        frozen.height = 8;
        frozen.width = 8;
        frozen.reducer = reduce::ReducerKind::AvgPool;
        auto fmodel = student_init(frozen, 1);
        CHECK(student_parameter_counts(fmodel).at("reducer") == 0);
    }
    SUBCASE("linear head 4->10 has 50 parameters") {
        StudentSpec s10 = toy_spec(4);
        s10.num_classes = 10;
        auto m10 = student_init(s10, 1);
        CHECK(student_parameter_counts(m10).at("readout") == 50);
    }
}

TEST_CASE("adam optimizer single steps") {
    auto state = make_optimizer(OptimizerKind::Adam, 0.001, 1);
    std::vector<double> params{0.5};
    adam_step(state, params, std::vector<double>{1.0});
    CHECK(params[0] == doctest::Approx(0.5 - 0.001).epsilon(1e-6));

    SUBCASE("zero gradients never move parameters") {
        std::vector<double> frozen{0.25};
        auto st = make_optimizer(OptimizerKind::Adam, 0.01, 1);
        for (int i = 0; i < 10; ++i) adam_step(st, frozen, std::vector<double>{0.0});
        CHECK(frozen[0] == 0.25);
    }
    SUBCASE("sgd is the literal update rule") {
        auto st = make_optimizer(OptimizerKind::SGD, 0.1, 2);
        std::vector<double> p{1.0, -1.0};
        adam_step(st, p, std::vector<double>{0.5, -2.0});
        CHECK(p[0] == 1.0 - 0.1 * 0.5);
        CHECK(p[1] == -1.0 + 0.1 * 2.0);
    }
}

TEST_CASE("end-to-end gradient matches finite differences") {
    auto spec = toy_spec(4);
    auto model = student_init(spec, 99);
    const auto toy = make_toy(2, 3);
    const int label = toy.labels[1];
    Rng rng(17);
    std::vector<double> teacher(2);
    for (auto& v : teacher) v = rng.uniform(-3.0, 3.0);
    distill::DistillConfig cfg;

    const auto engines = {GradientEngine::Adjoint, GradientEngine::ParameterShift};
    for (const auto engine : engines) {
        bool warned = false;
        const auto g =
            student_backward(model, toy.sample(1), label, teacher, cfg, engine, &warned);
        const auto fd = oracles::finite_difference_gradient(
            [&](std::span<const double> p) {
                StudentModel probe = model;
                probe.params.assign(p.begin(), p.end());
                const auto logits = student_forward(probe, toy.sample(1));
                return distill::distill_loss(teacher, logits, label, cfg).total;
            },
            model.params, 1e-4);
        for (std::size_t j = 0; j < model.params.size(); ++j) {
            const double scale = std::max({1.0, std::fabs(fd[j]), std::fabs(g.params[j])});
            CHECK(std::fabs(g.params[j] - fd[j]) / scale < 1e-4);
        }
    }
}

TEST_CASE("angle encoding gradients flow into the reducer") {
    auto spec = toy_spec(3);
    spec.encoding = encode::EncodingKind::Angle;
    auto model = student_init(spec, 7);
    const auto toy = make_toy(2, 5);
    distill::DistillConfig cfg;

    for (const auto engine : {GradientEngine::Adjoint, GradientEngine::ParameterShift}) {
        const auto g = student_backward(model, toy.sample(0), 0, {}, cfg, engine);
        double fc_norm = 0.0;
        for (std::size_t i = 0; i < model.fc_count; ++i)
            fc_norm += std::fabs(g.params[i]);
        CHECK(fc_norm > 1e-8);

        const auto fd = oracles::finite_difference_gradient(
            [&](std::span<const double> p) {
                StudentModel probe = model;
                probe.params.assign(p.begin(), p.end());
                return distill::ce_loss(student_forward(probe, toy.sample(0)), 0);
            },
            model.params, 1e-4);
        for (std::size_t j = 0; j < model.params.size(); ++j) {
            const double scale = std::max({1.0, std::fabs(fd[j]), std::fabs(g.params[j])});
            CHECK(std::fabs(g.params[j] - fd[j]) / scale < 1e-4);
        }
    }
}

TEST_CASE("engines agree on circuit gradients") {
    auto spec = toy_spec(4);
    auto model = student_init(spec, 31);
    const auto toy = make_toy(2, 9);
    distill::DistillConfig cfg;
    const auto a =
        student_backward(model, toy.sample(0), 0, {}, cfg, GradientEngine::Adjoint);
    const auto p = student_backward(model, toy.sample(0), 0, {}, cfg,
                                    GradientEngine::ParameterShift);
    for (std::size_t j = 0; j < model.params.size(); ++j)
        CHECK(std::fabs(a.params[j] - p.params[j]) < 1e-8);
}

TEST_CASE("basis encoding freezes the reducer gradient") {
    auto spec = toy_spec(4);
    spec.encoding = encode::EncodingKind::Basis;
    auto model = student_init(spec, 3);
    const auto toy = make_toy(2, 11);
    distill::DistillConfig cfg;
    const auto g =
        student_backward(model, toy.sample(0), 0, {}, cfg, GradientEngine::Adjoint);
    for (std::size_t i = 0; i < model.fc_count; ++i) CHECK(g.params[i] == 0.0);
    // circuit still learns
    double circ_norm = 0.0;
    for (std::size_t i = 0; i < model.circuit_count; ++i)
        circ_norm += std::fabs(g.params[model.circuit_offset + i]);
    CHECK(circ_norm > 1e-10);
}

TEST_CASE("alpha zero is bit-identical to the no-teacher baseline") {
    auto spec = toy_spec(2);
    auto model = student_init(spec, 77);
    auto toy = make_toy(10, 13);
    const auto split = data::stratified_split(toy, 0.2, 77);

    data::TeacherLogitsTable table;
    table.num_classes = 2;
    table.teacher_name = "oracle";
    Rng rng(1);
    for (int src : toy.source_indices)
        table.rows[src] = {rng.normal() * 2, rng.normal() * 2};

    TrainLoopConfig loop;
    loop.max_epochs = 5;
    loop.patience = 5;
    loop.batch_size = 4;
    loop.seed = 77;

    distill::DistillConfig zero_alpha;
    zero_alpha.alpha = 0.0;
    const auto with_table = fit(model, split.train, split.val, &table, zero_alpha, loop);
    const auto without = fit(model, split.train, split.val, nullptr, zero_alpha, loop);
    CHECK(with_table.model.params == without.model.params);
    REQUIRE(with_table.history.size() == without.history.size());
    for (std::size_t e = 0; e < with_table.history.size(); ++e) {
        CHECK(with_table.history[e].train_loss == without.history[e].train_loss);
        CHECK(with_table.history[e].val_accuracy == without.history[e].val_accuracy);
        CHECK(with_table.history[e].kd == 0.0);
    }
}

TEST_CASE("alpha zero gradients ignore the teacher") {
    auto spec = toy_spec(2);
    auto model = student_init(spec, 8);
    const auto toy = make_toy(2, 21);
    distill::DistillConfig cfg;
    cfg.alpha = 0.0;
    const std::vector<double> t1{5.0, -1.0};
    const std::vector<double> t2{-3.0, 2.0};
    const auto g1 =
        student_backward(model, toy.sample(0), 0, t1, cfg, GradientEngine::Adjoint);
    const auto g2 =
        student_backward(model, toy.sample(0), 0, t2, cfg, GradientEngine::Adjoint);
    CHECK(g1.params == g2.params);
}

TEST_CASE("early stopping bookkeeping") {
    auto spec = toy_spec(2);
    auto model = student_init(spec, 3);
    auto toy = make_toy(12, 17);
    const auto split = data::stratified_split(toy, 0.25, 3);

    TrainLoopConfig loop;
    loop.max_epochs = 60;
    loop.patience = 3;
    loop.batch_size = 4;
    loop.seed = 3;
    distill::DistillConfig cfg;
    const auto res = fit(model, split.train, split.val, nullptr, cfg, loop);
    if (res.epochs_ran < loop.max_epochs)
        CHECK(res.epochs_ran == res.best_epoch + loop.patience);
    CHECK(res.best_val_accuracy ==
          doctest::Approx(res.history[static_cast<std::size_t>(res.best_epoch - 1)].val_accuracy));

    SUBCASE("invalid loop configs are rejected") {
        TrainLoopConfig bad = loop;
        bad.patience = 0;
        CHECK_THROWS_AS(fit(model, split.train, split.val, nullptr, cfg, bad),
                        ConfigError);
        CHECK_THROWS_AS(fit(model, data::Dataset{}, split.val, nullptr, cfg, loop),
                        ConfigError);
    }
}

TEST_CASE("separable toy set trains to high accuracy") {
    // sanity oracle established empirically; seed frozen
    StudentSpec spec = toy_spec(1);
    spec.layers = 1;
    auto model = student_init(spec, 2024);
    auto toy = make_toy(30, 31337);
    const auto split = data::stratified_split(toy, 0.2, 2024);

    TrainLoopConfig loop;
    loop.max_epochs = 200;
    loop.patience = 200; // run to the cap or convergence
    loop.batch_size = 8;
    loop.seed = 2024;
    distill::DistillConfig cfg;
    const auto res = fit(model, split.train, split.val, nullptr, cfg, loop);
    CHECK(res.best_val_accuracy >= 0.95);
}

TEST_CASE("perfect teacher at alpha 1 drives the kd term down") {
    auto spec = toy_spec(2);
    auto model = student_init(spec, 41);
    auto toy = make_toy(12, 43);
    const auto split = data::stratified_split(toy, 0.25, 41);

    data::TeacherLogitsTable table;
    table.num_classes = 2;
    table.teacher_name = "onehot";
    for (std::size_t i = 0; i < toy.size(); ++i) {
        std::vector<double> row(2, 0.0);
        row[static_cast<std::size_t>(toy.labels[i])] = 10.0;
        table.rows[toy.source_indices[i]] = row;
    }

    TrainLoopConfig loop;
    loop.max_epochs = 10;
    loop.patience = 10;
    loop.batch_size = 4;
    loop.seed = 41;
    distill::DistillConfig cfg;
    cfg.alpha = 1.0;
    const auto res = fit(model, split.train, split.val, &table, cfg, loop);
    REQUIRE(res.history.size() == 10);
    for (const auto& rec : res.history)
        CHECK(rec.train_loss == doctest::Approx(rec.kd)); // alpha = 1
    CHECK(res.history.back().kd < res.history.front().kd);
}

TEST_CASE("teacher training on the toy set") {
    nn::NetworkSpec net;
    net.input_shape = {1, 6, 6};
    net.num_classes = 2;
    net.layers = {nn::LayerSpec::flatten(), nn::LayerSpec::dense(16),
                  nn::LayerSpec::relu(), nn::LayerSpec::dense(2)};
    const auto plan = nn::plan_network(net);

    auto toy = make_toy(20, 3);
    const auto split = data::stratified_split(toy, 0.2, 5);
    TrainLoopConfig loop;
    loop.max_epochs = 30;
    loop.patience = 30;
    loop.batch_size = 8;
    loop.seed = 5;
    const auto res = fit_teacher(plan, split.train, split.val, loop);
    CHECK(res.best_val_accuracy >= 0.95);

    const auto table = export_teacher_logits(plan, res.params, toy, "toy");
    CHECK(table.rows.size() == toy.size()); // one row per sample
    CHECK(table.num_classes == 2);

    SUBCASE("teacher params are untouched by student distillation") {
        const auto before = res.params;
        auto spec = toy_spec(2);
        auto model = student_init(spec, 11);
        distill::DistillConfig cfg;
        TrainLoopConfig sloop;
        sloop.max_epochs = 3;
        sloop.patience = 3;
        sloop.batch_size = 4;
        sloop.seed = 11;
        fit(model, split.train, split.val, &table, cfg, sloop);
        CHECK(res.params == before);
    }
}

TEST_CASE("seed determinism across identical fits") {
    auto spec = toy_spec(2);
    auto model = student_init(spec, 55);
    auto toy = make_toy(10, 5);
    const auto split = data::stratified_split(toy, 0.2, 55);
    TrainLoopConfig loop;
    loop.max_epochs = 4;
    loop.patience = 4;
    loop.batch_size = 4;
    loop.seed = 55;
    distill::DistillConfig cfg;
    const auto a = fit(model, split.train, split.val, nullptr, cfg, loop);
    const auto b = fit(model, split.train, split.val, nullptr, cfg, loop);
    CHECK(a.model.params == b.model.params);
    CHECK(history_to_text(a.history) == history_to_text(b.history));
}

TEST_CASE("shot-based evaluation is deterministic and close to analytic") {
    auto spec = toy_spec(2);
    auto model = student_init(spec, 19);
    auto toy = make_toy(10, 23);
    const auto a = evaluate_student(model, toy, 1024, 7);
    const auto b = evaluate_student(model, toy, 1024, 7);
    CHECK(a.predictions == b.predictions);
    const auto analytic = evaluate_student(model, toy);
    CHECK(analytic.correct.size() == toy.size());
}

TEST_CASE("student checkpoint round trip") {
    auto spec = toy_spec(3);
    auto model = student_init(spec, 123);
    const std::string dir = "train_ckpt_test";
    save_student(dir, model);
    const auto loaded = load_student(dir, spec);
    CHECK(loaded.params == model.params);
    CHECK(loaded.circuit.ops.size() == model.circuit.ops.size());
    std::filesystem::remove_all(dir);
}

TEST_CASE("degenerate amplitude inputs carry the sample id") {
    auto spec = toy_spec(2);
    auto model = student_init(spec, 1);
    // zero fc weights make the reducer output identically zero
    std::fill(model.params.begin(),
              model.params.begin() + static_cast<std::ptrdiff_t>(model.fc_count), 0.0);
    auto toy = make_toy(4, 1);
    const auto split = data::stratified_split(toy, 0.25, 1);
    TrainLoopConfig loop;
    loop.max_epochs = 1;
    loop.patience = 1;
    loop.batch_size = 2;
    loop.seed = 1;
    distill::DistillConfig cfg;
    CHECK_THROWS_AS(fit(model, split.train, split.val, nullptr, cfg, loop),
                    DegenerateInputError);
}
