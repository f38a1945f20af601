#include "doctest.h"

#include "nova/optim.hpp"
#include "nova/rng.hpp"

#include <cmath>
#include <random>

using namespace nova;
using namespace nova::optim;

namespace {

Parameter<double> make_param(const std::string& name, const MatrixD& value, bool trainable = true) {
    Parameter<double> p(name, value.rows(), value.cols(), trainable);
    p.value = value;
    return p;
}

}  // namespace

TEST_CASE("cosine schedule reference points") {
    const Schedule s{1e-4, 1e-5, 1.0, 20};
    const std::int64_t spe = 10;  // 200 steps, warmup ends at step 10
    CHECK(cosine_lr(0, s, spe) == 0.0);
    CHECK(cosine_lr(5, s, spe) == doctest::Approx(5e-5));
    CHECK(cosine_lr(10, s, spe) == doctest::Approx(1e-4).epsilon(1e-12));
    CHECK(cosine_lr(199, s, spe) == doctest::Approx(1e-5).epsilon(1e-12));
    // 22 steps, warmup ends at 11, progress 0.5 at step 16.
    const Schedule exact{1e-4, 1e-5, 1.0, 2};
    CHECK(cosine_lr(16, exact, 11) == doctest::Approx(5.5e-5).epsilon(1e-12));
}

TEST_CASE("cosine schedule shape") {
    const Schedule s{1e-4, 1e-5, 2.0, 7};
    const std::int64_t spe = 13, total = 7 * 13, warm = 26;
    double prev = -1.0;
    for (std::int64_t t = 0; t < total; ++t) {
        const double lr = cosine_lr(t, s, spe);
        if (t <= warm) {
            CHECK(lr >= prev);
        } else {
            CHECK(lr <= prev);
            CHECK(lr >= s.lr_min - 1e-18);
            CHECK(lr <= s.lr_max + 1e-18);
        }
        prev = lr;
    }
    CHECK_THROWS_AS(cosine_lr(-1, s, spe), std::invalid_argument);
    CHECK_THROWS_AS(cosine_lr(0, s, 0), std::invalid_argument);
}

TEST_CASE("global norm clipping") {
    auto a = make_param("a.weight", MatrixD::Zero(2, 2)), b = make_param("b.bias", MatrixD::Zero(1, 3));
    a.grad << 3.0, 0.0, 0.0, 4.0;
    b.grad << 0.0, 12.0, 0.0;
    std::vector<Parameter<double>*> ps{&a, &b};
    CHECK(global_grad_norm(ps) == doctest::Approx(13.0));
    const double pre = clip_grad_norm(ps, 1.0);
    CHECK(pre == doctest::Approx(13.0));
    CHECK(global_grad_norm(ps) <= 1.0 + 1e-6);
    CHECK(global_grad_norm(ps) == doctest::Approx(1.0).epsilon(1e-5));
    CHECK(a.grad(1, 1) / b.grad(0, 1) == doctest::Approx(4.0 / 12.0));

    MatrixD before = a.grad;
    clip_grad_norm(ps, 10.0);
    CHECK(a.grad == before);
    CHECK_THROWS_AS(clip_grad_norm(ps, 0.0), std::invalid_argument);
}

TEST_CASE("AdamW without decay is Adam") {
    Rng gen(3);
    std::normal_distribution<double> normal;
    MatrixD init(3, 4);
    for (Eigen::Index i = 0; i < init.size(); ++i) init.data()[i] = normal(gen);
    auto p = make_param("layer.weight", init);
    std::vector<Parameter<double>*> ps{&p};
    AdamW<double> opt(ps, {0.9, 0.999, 1e-8, 0.0});

    // Reference Adam, written out elementwise.
    MatrixD x = init, m = MatrixD::Zero(3, 4), v = MatrixD::Zero(3, 4);
    for (int t = 1; t <= 25; ++t) {
        MatrixD g(3, 4);
        for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = normal(gen);
        p.grad = g;
        opt.step(ps, 1e-3);
        for (Eigen::Index i = 0; i < g.size(); ++i) {
            m.data()[i] = 0.9 * m.data()[i] + 0.1 * g.data()[i];
            v.data()[i] = 0.999 * v.data()[i] + 0.001 * g.data()[i] * g.data()[i];
            const double mh = m.data()[i] / (1.0 - std::pow(0.9, t));
            const double vh = v.data()[i] / (1.0 - std::pow(0.999, t));
            x.data()[i] -= 1e-3 * mh / (std::sqrt(vh) + 1e-8);
        }
    }
    CHECK((p.value - x).cwiseAbs().maxCoeff() < 1e-14);
    CHECK(opt.steps() == 25);
}

TEST_CASE("decoupled decay touches weights only") {
    CHECK(decays("vit.blocks.0.fc1.weight"));
    CHECK_FALSE(decays("vit.blocks.0.fc1.bias"));
    CHECK_FALSE(decays("vit.pos_embed"));
    CHECK_FALSE(decays("loss.log_tau"));

    auto w = make_param("w.weight", MatrixD::Constant(1, 1, 2.0)), b = make_param("w.bias", MatrixD::Constant(1, 1, 2.0));
    std::vector<Parameter<double>*> ps{&w, &b};
    AdamW<double> opt(ps, {0.9, 0.999, 1e-8, 0.5});
    opt.step(ps, 0.1);  // zero gradient: only decay acts
    CHECK(w.value(0, 0) == doctest::Approx(2.0 * (1.0 - 0.05)));
    CHECK(b.value(0, 0) == 2.0);
}

TEST_CASE("frozen parameters are skipped") {
    auto f = make_param("table", MatrixD::Constant(2, 2, 1.0), false);
    f.grad.setConstant(5.0);
    std::vector<Parameter<double>*> ps{&f};
    AdamW<double> opt(ps, {});
    opt.step(ps, 1.0);
    CHECK(f.value == MatrixD::Constant(2, 2, 1.0));
    CHECK(global_grad_norm(ps) == 0.0);
}
