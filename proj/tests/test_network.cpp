#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "sphcnn/network.hpp"
#include "sphcnn/rng.hpp"

using namespace sphcnn;

namespace {

OperatorCache& cache() {
    static OperatorCache c;
    return c;
}

Dataset random_classification_set(int level, int channels, int classes, int count,
                                  std::uint64_t seed) {
    Dataset d;
    d.level = level;
    d.channels = channels;
    d.verts = static_cast<int>(level_stats(level).n_v);
    std::mt19937_64 rng = rng_stream(seed, "testdata");
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    std::uniform_int_distribution<int> label(0, classes - 1);
    for (int i = 0; i < count; ++i) {
        int y = label(rng);
        std::vector<double> f(static_cast<std::size_t>(channels) * d.verts);
        for (auto& v : f) v = dist(rng);
        // plant a strong class-dependent signal so the task is learnable
        for (int j = 0; j < d.verts; ++j) f[j] += (y + 1) * 0.5;
        d.features.push_back(std::move(f));
        d.labels.push_back(y);
    }
    return d;
}

}  // namespace

TEST_CASE("architecture spec text round trip") {
    ArchitectureSpec spec = climate_spec();
    spec.mask = KernelMask::parse("IY");
    spec.dropout = 0.25;
    ArchitectureSpec back = ArchitectureSpec::from_text(spec.to_text());
    CHECK(back.to_text() == spec.to_text());
    CHECK(back.task == Task::segmentation);
    CHECK(back.in_channels == 16);
    CHECK(back.classes == 3);
    CHECK(back.width_multiplier == spec.width_multiplier);
    CHECK(back.mask.to_string() == "IY");

    CHECK_THROWS(ArchitectureSpec::from_text("task=flying"));
    CHECK_THROWS(ArchitectureSpec::from_text("nonsense"));
}

TEST_CASE("published parameter totals") {
    CHECK(parameter_count(*build_model(mnist_spec(), cache(), 0).net) == 61658);
    CHECK(parameter_count(*build_model(m40_full_spec(), cache(), 0).net) == 3737160);
    CHECK(parameter_count(*build_model(m40_lean_spec(), cache(), 0).net) == 70192);
    CHECK(parameter_count(*build_model(segmentation_2d3ds_spec(), cache(), 0).net) == 5180239);
    CHECK(parameter_count(*build_model(climate_spec(), cache(), 0).net) == 328339);
}

TEST_CASE("segmenter output shape") {
    ArchitectureSpec spec = segmentation_2d3ds_spec();
    spec.input_level = 2;
    spec.in_channels = 4;
    spec.classes = 5;
    Model model = build_model(spec, cache(), 1);
    MeshTensor x(2, 4, 162, 2);
    MeshTensor y = model.forward(x, false);
    CHECK(y.batch == 2);
    CHECK(y.channels == 5);
    CHECK(y.verts == 162);
    CHECK(y.level == 2);
}

TEST_CASE("log-frequency class weights") {
    auto w = class_weights_from_frequencies({1.0});
    CHECK(w.weight[0] == doctest::Approx(0.98039).epsilon(1e-4));
    auto w2 = class_weights_from_frequencies({std::exp(-1.0)});
    CHECK(w2.weight[0] == doctest::Approx(50.0).epsilon(1e-9));
    auto w3 = class_weights_from_frequencies({0.0, 0.5});
    CHECK(w3.weight[0] == 0.0);
    CHECK(w3.weight[1] > 0.0);
    CHECK_THROWS(class_weights_from_frequencies({-0.1}));
    CHECK_THROWS(class_weights_from_frequencies({1.5}));

    // monotone on the domain where the denominator stays positive
    double prev = 1e18;
    for (double f = 0.4; f <= 1.0; f += 0.1) {
        double cur = class_weights_from_frequencies({f}).weight[0];
        CHECK(cur < prev);
        prev = cur;
    }
}

TEST_CASE("cross entropy values and gradient") {
    ClassWeights uni = uniform_class_weights(4);
    MeshTensor logits(2, 4, 1, -1);  // uniform logits
    auto loss = cross_entropy(logits, {1, 3}, uni);
    CHECK(loss.loss == doctest::Approx(std::log(4.0)).epsilon(1e-12));

    MeshTensor confident(1, 4, 1, -1);
    confident.at(0, 2, 0) = 50.0;
    CHECK(cross_entropy(confident, {2}, uni).loss <= 1e-12);

    // finite differences on the logit gradient
    std::mt19937_64 rng = rng_stream(3, "ce");
    std::uniform_real_distribution<double> dist(-2.0, 2.0);
    MeshTensor z(2, 4, 3, -1);
    for (auto& v : z.data) v = dist(rng);
    std::vector<int> labels = {0, 3, 1, 2, 2, 0};
    ClassWeights weighted{{1.0, 0.5, 2.0, 1.5}};
    auto base = cross_entropy(z, labels, weighted);
    double max_rel = 0.0;
    const double eps = 1e-6;
    for (std::size_t i = 0; i < z.size(); ++i) {
        double saved = z.data[i];
        z.data[i] = saved + eps;
        double j1 = cross_entropy(z, labels, weighted).loss;
        z.data[i] = saved - eps;
        double j2 = cross_entropy(z, labels, weighted).loss;
        z.data[i] = saved;
        double fd = (j1 - j2) / (2.0 * eps);
        double a = base.grad_logits.data[i];
        max_rel = std::max(max_rel, std::abs(a - fd) / std::max(std::abs(a) + std::abs(fd), 1e-4));
    }
    CHECK(max_rel <= 1e-6);

    // zero-weight labels do not contribute
    ClassWeights dropped{{1.0, 0.0, 1.0, 1.0}};
    MeshTensor z2 = z;
    auto with = cross_entropy(z2, labels, dropped);
    for (std::size_t p = 0; p < labels.size(); ++p) {
        if (labels[p] != 1) continue;
        int b = static_cast<int>(p) / 3, v = static_cast<int>(p) % 3;
        for (int k = 0; k < 4; ++k) CHECK(with.grad_logits.at(b, k, v) == 0.0);
    }
    CHECK_THROWS(cross_entropy(z, {0, 1, 2, 3, 9, 0}, uni));
}

TEST_CASE("adam: first step size, zero-grad stability, convergence") {
    std::vector<double> param = {0.0};
    std::vector<double> grad = {1.0};
    Adam opt({{"p", param.data(), grad.data(), 1}});
    opt.step(0.1);
    CHECK(param[0] == doctest::Approx(-0.1).epsilon(1e-6));
    CHECK(grad[0] == 0.0);  // gradients are consumed

    // zero gradient on a fresh optimizer: both moments stay zero, so the
    // parameter does not move
    std::vector<double> p0 = {1.5}, g0 = {0.0};
    Adam fresh({{"p", p0.data(), g0.data(), 1}});
    fresh.step(0.1);
    CHECK(p0[0] == 1.5);

    // minimize (x-3)^2
    std::vector<double> x = {0.0}, g = {0.0};
    Adam opt2({{"x", x.data(), g.data(), 1}});
    for (int i = 0; i < 500; ++i) {
        g[0] = 2.0 * (x[0] - 3.0);
        opt2.step(0.05);
    }
    CHECK(std::abs(x[0] - 3.0) < 1e-3);
}

TEST_CASE("learning-rate schedule") {
    CHECK(lr_schedule(0, 1e-2, 0.5, 10) == doctest::Approx(1e-2));
    CHECK(lr_schedule(10, 1e-2, 0.5, 10) == doctest::Approx(5e-3));
    CHECK(lr_schedule(25, 5e-3, 0.7, 25) == doctest::Approx(3.5e-3));
    CHECK(lr_schedule(9, 1e-2, 0.5, 10) == doctest::Approx(1e-2));
    CHECK_THROWS(lr_schedule(-1, 1e-2, 0.5, 10));
}

TEST_CASE("training overfits a 2-sample dataset") {
    Dataset data = random_classification_set(2, 2, 2, 2, 5);
    ArchitectureSpec spec = mnist_spec();
    spec.input_level = 2;
    spec.in_channels = 2;
    spec.classes = 2;
    spec.width_multiplier = 0.25;
    spec.dropout = 0.0;
    Model model = build_model(spec, cache(), 5);
    TrainConfig config;
    config.epochs = 200;
    config.batch_size = 2;
    config.lr0 = 1e-2;
    config.seed = 5;
    TrainReport report = train(model, data, nullptr, config);
    CHECK(report.epochs.back().train_acc == 1.0);
}

TEST_CASE("training is deterministic and reports are written") {
    Dataset data = random_classification_set(2, 2, 3, 12, 6);
    ArchitectureSpec spec = mnist_spec();
    spec.input_level = 2;
    spec.in_channels = 2;
    spec.classes = 3;
    spec.width_multiplier = 0.25;
    Model a = build_model(spec, cache(), 9);
    Model b = build_model(spec, cache(), 9);
    TrainConfig config;
    config.epochs = 3;
    config.batch_size = 4;
    config.seed = 9;
    TrainReport ra = train(a, data, &data, config);
    TrainReport rb = train(b, data, &data, config);
    auto pa = parameters(*a.net), pb = parameters(*b.net);
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i)
        for (std::size_t j = 0; j < pa[i].size; ++j) CHECK(pa[i].value[j] == pb[i].value[j]);
    REQUIRE(ra.epochs.size() == 3);
    for (std::size_t e = 0; e < 3; ++e) {
        CHECK(ra.epochs[e].train_loss == rb.epochs[e].train_loss);
        CHECK(ra.epochs[e].val_acc == rb.epochs[e].val_acc);
    }

    std::ostringstream out;
    write_train_report(ra, out);
    std::istringstream lines(out.str());
    std::string line;
    int count = 0;
    while (std::getline(lines, line)) {
        CHECK(std::count(line.begin(), line.end(), '\t') == 5);
        ++count;
    }
    CHECK(count == 3);
}

TEST_CASE("nan loss aborts with a numerical error") {
    Dataset data = random_classification_set(2, 2, 2, 8, 7);
    ArchitectureSpec spec = mnist_spec();
    spec.input_level = 2;
    spec.in_channels = 2;
    spec.classes = 2;
    spec.width_multiplier = 0.25;
    spec.dropout = 0.0;
    Model model = build_model(spec, cache(), 7);
    // poison the classifier-head bias so the very first loss is NaN
    auto params = parameters(*model.net);
    params.back().value[0] = std::numeric_limits<double>::quiet_NaN();
    TrainConfig config;
    config.epochs = 1;
    config.batch_size = 8;
    config.seed = 7;
    CHECK_THROWS_AS(train(model, data, nullptr, config), NumericalError);
}

TEST_CASE("evaluate metrics via an identity model") {
    // Conv1x1 with identity weights turns features directly into logits,
    // making predictions fully controllable from the dataset.
    ArchitectureSpec spec;
    spec.task = Task::segmentation;
    spec.input_level = 0;
    spec.in_channels = 3;
    spec.classes = 3;
    Model model;
    model.spec = spec;
    model.dropout_rng = std::make_shared<std::mt19937_64>(rng_stream(0, "dropout"));
    std::mt19937_64 rng = rng_stream(0, "init");
    auto conv = std::make_unique<Conv1x1>(3, 3, rng);
    std::fill(conv->weight().begin(), conv->weight().end(), 0.0);
    for (int i = 0; i < 3; ++i) conv->weight()[i * 3 + i] = 1.0;
    model.net = std::move(conv);

    Dataset data;
    data.level = 0;
    data.channels = 3;
    data.verts = 12;
    std::mt19937_64 mc = rng_stream(1, "mc");
    std::uniform_int_distribution<int> cls(0, 2);
    std::size_t positions = 0;
    for (int s = 0; s < 9000; ++s) {
        std::vector<double> f(3 * 12, 0.0);
        std::vector<int> labels(12);
        for (int v = 0; v < 12; ++v) {
            int pred = cls(mc);
            f[static_cast<std::size_t>(pred) * 12 + v] = 1.0;
            labels[v] = cls(mc);
            ++positions;
        }
        data.features.push_back(std::move(f));
        data.vertex_labels.push_back(std::move(labels));
    }
    REQUIRE(positions >= 100000);
    EvalResult random_result = evaluate(model, data);
    CHECK(random_result.accuracy == doctest::Approx(1.0 / 3.0).epsilon(0.03));

    // perfect predictions
    Dataset perfect = data;
    for (std::size_t s = 0; s < perfect.features.size(); ++s)
        for (int v = 0; v < 12; ++v) {
            std::fill(perfect.features[s].begin(), perfect.features[s].end(), 0.0);
            for (int vv = 0; vv < 12; ++vv)
                perfect.features[s][static_cast<std::size_t>(perfect.vertex_labels[s][vv]) * 12 +
                                    vv] = 1.0;
        }
    EvalResult exact = evaluate(model, perfect);
    CHECK(exact.accuracy == 1.0);
    CHECK(exact.miou == 1.0);

    // a class that is present but never predicted has IoU 0
    Dataset skewed;
    skewed.level = 0;
    skewed.channels = 3;
    skewed.verts = 12;
    std::vector<double> f(3 * 12, 0.0);
    for (int v = 0; v < 12; ++v) f[v] = 1.0;  // always predict class 0
    skewed.features.push_back(f);
    skewed.vertex_labels.push_back(std::vector<int>(12, 2));
    EvalResult iou0 = evaluate(model, skewed);
    CHECK(iou0.per_class_iou[2] == 0.0);

    Dataset empty;
    CHECK_THROWS(evaluate(model, empty));
}

TEST_CASE("checkpoint round trip is bitwise") {
    Dataset data = random_classification_set(2, 2, 2, 6, 8);
    ArchitectureSpec spec = mnist_spec();
    spec.input_level = 2;
    spec.in_channels = 2;
    spec.classes = 2;
    spec.width_multiplier = 0.5;
    Model model = build_model(spec, cache(), 8);
    TrainConfig config;
    config.epochs = 2;
    config.batch_size = 3;
    config.seed = 8;
    train(model, data, nullptr, config);

    std::string path = "test_network_ckpt.ugsc";
    save_checkpoint(path, model, nullptr, 2);
    LoadedCheckpoint loaded = load_checkpoint(path, cache());
    CHECK(loaded.epoch == 2);
    CHECK(loaded.model.spec.to_text() == spec.to_text());
    auto pa = parameters(*model.net), pb = parameters(*loaded.model.net);
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i)
        for (std::size_t j = 0; j < pa[i].size; ++j) CHECK(pa[i].value[j] == pb[i].value[j]);
    auto ba = buffers(*model.net), bb = buffers(*loaded.model.net);
    for (std::size_t i = 0; i < ba.size(); ++i)
        for (std::size_t j = 0; j < ba[i].size; ++j) CHECK(ba[i].value[j] == bb[i].value[j]);

    // identical evaluation metrics
    EvalResult ea = evaluate(model, data), eb = evaluate(loaded.model, data);
    CHECK(ea.accuracy == eb.accuracy);

    std::remove(path.c_str());
    CHECK_THROWS(load_checkpoint("does_not_exist.ugsc", cache()));
}

TEST_CASE("ablation harness trains one model per mask") {
    Dataset data = random_classification_set(2, 2, 2, 8, 10);
    ArchitectureSpec spec = mnist_spec();
    spec.input_level = 2;
    spec.in_channels = 2;
    spec.classes = 2;
    spec.width_multiplier = 0.25;
    TrainConfig config;
    config.epochs = 1;
    config.batch_size = 4;
    config.seed = 10;
    std::vector<KernelMask> masks = {KernelMask::parse("I"), KernelMask::parse("IL"),
                                     KernelMask::parse("IXY"), KernelMask::parse("IXYL"),
                                     KernelMask::parse("XY")};
    auto rows = ablation_run(spec, masks, data, data, config, cache());
    REQUIRE(rows.size() == 5);
    // parameter counts grow with mask size at fixed widths
    CHECK(rows[3].parameter_count > rows[1].parameter_count);
    CHECK(rows[1].parameter_count > rows[0].parameter_count);
}

TEST_CASE("benchmark latency grows with mesh level") {
    ArchitectureSpec spec = mnist_spec();
    spec.width_multiplier = 0.25;
    spec.input_level = 2;
    Model small = build_model(spec, cache(), 0);
    spec.input_level = 4;
    Model big = build_model(spec, cache(), 0);
    auto fast = benchmark_inference(small, 4, 6);
    auto slow = benchmark_inference(big, 4, 6);
    CHECK(fast.mean_ms > 0.0);
    CHECK(slow.mean_ms > fast.mean_ms);
    CHECK(fast.batches == 6);
}

TEST_CASE("gradcheck suite passes at level 2") {
    GradCheckReport report = run_gradcheck_suite(2, 0, cache());
    for (const auto& c : report.cases) {
        INFO(c.layer, " err ", c.max_rel_error);
        CHECK(c.pass);
    }
    CHECK(report.all_pass);
}
