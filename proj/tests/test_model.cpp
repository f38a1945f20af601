#include "doctest.h"

#include "nova/gradcheck.hpp"
#include "nova/model.hpp"
#include "nova/rng.hpp"

#include <cmath>
#include <random>

using namespace nova;
using namespace nova::model;

namespace {

ViTConfig small_vit() {
    ViTConfig c;
    c.patch_size = 4;
    c.width = 8;
    c.depth = 2;
    c.heads = 2;
    c.mlp_ratio = 2;
    c.image_size = 12;
    return c;
}

PredictorConfig small_predictor() {
    PredictorConfig p;
    p.hidden = 16;
    p.out_dim = 6;
    return p;
}

template <typename T>
ImageBatch<T> random_batch(int count, int size, std::uint64_t seed) {
    ImageBatch<T> b;
    b.count = count;
    b.channels = 3;
    b.size = size;
    Rng gen(seed);
    std::normal_distribution<double> normal;
    b.data.resize(static_cast<std::size_t>(count) * 3 * size * size);
    for (auto& v : b.data) v = static_cast<T>(normal(gen));
    return b;
}

TextAnchorTable small_table() { return TextAnchorTable({"alpha beta gamma no"}, 10, 3); }

}  // namespace

TEST_CASE("vision encoder and predictor gradients match finite differences") {
    NovaModel<double> m(small_vit(), small_predictor(), small_table(), 11);
    // Unit-scale random parameters so no path is buried under roundoff.
    Rng gen(5);
    for (auto* p : m.parameters()) {
        if (!p->trainable) continue;
        const bool weight = p->name.find("weight") != std::string::npos;
        std::normal_distribution<double> normal(0.0, weight ? 1.0 / std::sqrt(double(p->value.rows())) : 0.3);
        for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] += normal(gen);
    }

    const auto full = random_batch<double>(3, 12, 1);
    const auto half = random_batch<double>(3, 8, 2);
    MatrixD w1 = MatrixD::Random(6, 6), w2 = MatrixD::Random(6, 6);

    auto loss = [&](bool backward) {
        ViTCache<double> c1, c2;
        PredictorCache<double> p1, p2;
        MatrixD e1 = m.vit.forward(full, c1);
        MatrixD e2 = m.vit.forward(half, c2);
        MatrixD y1 = m.predictor.forward(e1, Mode::train, p1);
        MatrixD y2 = m.predictor.forward(e2, Mode::train, p2);
        double l = (y1.array() * w1.topRows(3).array()).sum() + (y2.array().square() * w2.topRows(3).array()).sum();
        if (backward) {
            m.zero_grad();
            m.vit.backward(m.predictor.backward(w1.topRows(3), p1), c1);
            m.vit.backward(m.predictor.backward((2.0 * y2.array() * w2.topRows(3).array()).matrix(), p2), c2);
        }
        return l;
    };
    loss(true);
    auto report = gradcheck::finite_difference_check([&] { return loss(false); },
                                                     gradcheck::parameter_groups(m.parameters()), 1e-5, 40, 9);
    CHECK_MESSAGE(report.max_rel_error < 1e-4, report.worst_group << " " << report.max_rel_error);
}
