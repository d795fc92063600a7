#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "fedrac/error.hpp"
#include "fedrac/model.hpp"
#include "oracles.hpp"

using namespace fedrac;

TEST_CASE("widths shrink by alpha per rank") {
    const ModelSpec spec{20, {128, 64}, 6, 0.5};
    CHECK(spec.widths_for_rank(1) == std::vector<int>{128, 64});
    CHECK(spec.widths_for_rank(2) == std::vector<int>{64, 32});
    CHECK(spec.widths_for_rank(8) == std::vector<int>{1, 1});
    const auto shapes = layer_shapes(spec, 2);
    REQUIRE(shapes.size() == 3);
    CHECK(shapes[0] == LayerShape{20, 64});
    CHECK(shapes[1] == LayerShape{64, 32});
    CHECK(shapes[2] == LayerShape{32, 6});
    CHECK(parameter_bytes(shapes) == 8 * (20 * 64 + 64 + 64 * 32 + 32 + 32 * 6 + 6));
    CHECK(forward_flops(shapes) == 2.0 * (20 * 64 + 64 * 32 + 32 * 6));
    CHECK_THROWS_AS(spec.widths_for_rank(0), InvalidArgument);
    CHECK_THROWS_AS(layer_shapes(ModelSpec{20, {8}, 1, 0.5}, 1), InvalidArgument);
}

TEST_CASE("initialization bounds and determinism") {
    const ModelSpec spec{10, {16, 8}, 3, 0.5};
    const auto a = build_model(spec, 1, 5);
    const auto b = build_model(spec, 1, 5);
    CHECK(a == b);
    CHECK_FALSE(a == build_model(spec, 1, 6));
    std::size_t off = 0;
    for (const auto& l : a.layers) {
        const double bound = std::sqrt(6.0 / l.in);
        for (int i = 0; i < l.in * l.out; ++i) CHECK(std::abs(a.values[off + i]) <= bound);
        for (int o = 0; o < l.out; ++o) CHECK(a.values[off + l.in * l.out + o] == 0.0);
        off += l.param_count();
    }
}

TEST_CASE("zero weights give zero logits and uniform loss ln(c)") {
    const auto w = WeightVector::zeros({{4, 5}, {5, 3}});
    Matrix x(6, 4);
    for (std::size_t i = 0; i < x.data.size(); ++i) x.data[i] = 0.1 * static_cast<double>(i);
    for (double v : forward(w, x).data) CHECK(v == 0.0);
    const std::vector<int> y{0, 1, 2, 0, 1, 2};
    CHECK(ce_loss_and_grad(w, x, y).loss == doctest::Approx(std::log(3.0)).epsilon(1e-15));
}

TEST_CASE("forward pass on a hand-built network") {
    // 2 -> 2 (ReLU) -> 2
    WeightVector w = WeightVector::zeros({{2, 2}, {2, 2}});
    w.values = {1, -1, 2, 0.5, /*b*/ 0, -1, /*W2*/ 1, 0, -1, 2, /*b2*/ 0.5, 0};
    Matrix x(1, 2);
    x.data = {3, 1};
    // h = relu([3-1, 6+0.5-1]) = [2, 5.5]; z = [2+0.5, -2+11] = [2.5, 9]
    const auto z = forward(w, x);
    CHECK(z(0, 0) == 2.5);
    CHECK(z(0, 1) == 9.0);
    CHECK(predict(w, x) == std::vector<int>{1});
}

TEST_CASE("cross-entropy gradient matches central differences") {
    for (int seed = 1; seed <= 30; ++seed) {
        const auto p = oracle::random_problem(seed);
        const auto lg = ce_loss_and_grad(p.w, p.x, p.y);
        const auto fd = oracle::finite_difference([&](const WeightVector& v) { return ce_loss_and_grad(v, p.x, p.y).loss; },
                                                  p.w, lg.grad);
        CAPTURE(seed);
        CHECK(fd.max_rel < 1e-5);
        CHECK(fd.max_abs < 1e-8);
    }
}

TEST_CASE("distillation gradient matches central differences") {
    for (int seed = 101; seed <= 130; ++seed) {
        const auto p = oracle::random_problem(seed);
        const KdOptions kd{1.0 + (seed % 4), 0.25 * (seed % 5)};
        const auto lg = kd_loss_and_grad(p.w, p.x, p.y, p.teacher, kd);
        const auto fd = oracle::finite_difference(
            [&](const WeightVector& v) { return kd_loss_and_grad(v, p.x, p.y, p.teacher, kd).loss; }, p.w, lg.grad);
        CAPTURE(seed);
        CHECK(fd.max_rel < 1e-5);
        CHECK(fd.max_abs < 1e-8);
        CHECK(lg.loss == doctest::Approx(oracle::kd_loss_reference(forward(p.w, p.x), p.teacher, p.y, kd.temperature, kd.mix))
                             .epsilon(1e-12));
    }
}

TEST_CASE("distillation degenerates to cross-entropy") {
    const auto p = oracle::random_problem(7);
    const auto ce = ce_loss_and_grad(p.w, p.x, p.y);
    const auto kd0 = kd_loss_and_grad(p.w, p.x, p.y, p.teacher, {2.0, 0.0});
    CHECK(kd0.loss == doctest::Approx(ce.loss).epsilon(1e-14));
    for (std::size_t i = 0; i < ce.grad.size(); ++i) CHECK(kd0.grad.values[i] == doctest::Approx(ce.grad.values[i]).epsilon(1e-13));
    const auto tiny = kd_loss_and_grad(p.w, p.x, p.y, p.teacher, {2.0, 1e-8});
    for (std::size_t i = 0; i < ce.grad.size(); ++i) CHECK(std::abs(tiny.grad.values[i] - kd0.grad.values[i]) < 1e-6);
    // Teacher equal to the student: the distillation term and its gradient vanish.
    const auto self = kd_loss_and_grad(p.w, p.x, p.y, forward(p.w, p.x), {3.0, 0.4});
    CHECK(self.loss == doctest::Approx(0.6 * ce.loss).epsilon(1e-12));
    for (std::size_t i = 0; i < ce.grad.size(); ++i)
        CHECK(self.grad.values[i] == doctest::Approx(0.6 * ce.grad.values[i]).epsilon(1e-10));
}

TEST_CASE("proximal term gradient and no-op at mu = 0") {
    const auto p = oracle::random_problem(9);
    WeightVector anchor = p.w;
    for (auto& v : anchor.values) v += 0.1;
    const double mu = 0.3;
    auto f = [&](const WeightVector& v) {
        auto lg = ce_loss_and_grad(v, p.x, p.y);
        add_proximal(lg, v, anchor, mu);
        return lg.loss;
    };
    auto lg = ce_loss_and_grad(p.w, p.x, p.y);
    add_proximal(lg, p.w, anchor, mu);
    const auto fd = oracle::finite_difference(f, p.w, lg.grad);
    CHECK(fd.max_rel < 1e-5);
    auto plain = ce_loss_and_grad(p.w, p.x, p.y);
    const auto before = plain;
    add_proximal(plain, p.w, anchor, 0.0);
    CHECK(plain.loss == before.loss);
    CHECK(plain.grad == before.grad);
}

TEST_CASE("sgd step") {
    const auto p = oracle::random_problem(3);
    const auto g = ce_loss_and_grad(p.w, p.x, p.y).grad;
    CHECK(sgd_step(p.w, g, 0.0) == p.w);
    const auto s = sgd_step(p.w, g, 0.5);
    for (std::size_t i = 0; i < s.size(); ++i) CHECK(s.values[i] == p.w.values[i] - 0.5 * g.values[i]);
    CHECK_THROWS_AS(sgd_step(p.w, WeightVector::zeros({{1, 1}}), 0.1), InvalidArgument);
}

TEST_CASE("shape errors") {
    const auto p = oracle::random_problem(4);
    Matrix wrong(2, p.x.cols + 1);
    CHECK_THROWS_AS(forward(p.w, wrong), InvalidArgument);
    std::vector<int> bad = p.y;
    bad[0] = 99;
    CHECK_THROWS_AS(ce_loss_and_grad(p.w, p.x, bad), InvalidArgument);
    CHECK_THROWS_AS(kd_loss_and_grad(p.w, p.x, p.y, Matrix(1, 1), {}), InvalidArgument);
}

TEST_CASE("flatten and unflatten round trip") {
    const auto w = build_model(ModelSpec{7, {5, 3}, 4, 0.5}, 1, 2);
    const auto layers = w.unflatten();
    REQUIRE(layers.size() == 3);
    CHECK(layers[0].weight.rows == 5);
    CHECK(layers[0].weight.cols == 7);
    CHECK(WeightVector::flatten(layers) == w);
}

TEST_CASE("checkpoint round trip and corruption") {
    const auto dir = std::filesystem::temp_directory_path() / "fedrac_test_model";
    std::filesystem::create_directories(dir);
    auto w = build_model(ModelSpec{7, {5, 3}, 4, 0.5}, 1, 2);
    w.values[3] = -0.0;
    w.values[4] = 1e-310;
    save_checkpoint(dir / "w.frwv", w);
    const auto back = load_checkpoint(dir / "w.frwv");
    CHECK(back == w);
    CHECK(std::signbit(back.values[3]));
    CHECK(std::filesystem::file_size(dir / "w.frwv") == 4 + 4 + 4 + 8 * 3 + 8 + 8 * w.size());

    std::ifstream in(dir / "w.frwv", std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), {});
    CHECK(bytes.substr(0, 4) == "FRWV");
    CHECK(bytes[4] == 1);   // little-endian version

    std::ofstream(dir / "magic.frwv", std::ios::binary) << "NOPE" << bytes.substr(4);
    CHECK_THROWS_AS(load_checkpoint(dir / "magic.frwv"), DataError);
    std::ofstream(dir / "short.frwv", std::ios::binary) << bytes.substr(0, bytes.size() - 3);
    CHECK_THROWS_AS(load_checkpoint(dir / "short.frwv"), DataError);
    std::string version = bytes;
    version[4] = 2;
    std::ofstream(dir / "version.frwv", std::ios::binary) << version;
    CHECK_THROWS_AS(load_checkpoint(dir / "version.frwv"), DataError);
    CHECK_THROWS_AS(load_checkpoint(dir / "absent.frwv"), DataError);
}
