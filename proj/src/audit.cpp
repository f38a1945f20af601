#include "nova/audit.hpp"

#include "nova/objectives.hpp"
#include "nova/rng.hpp"
#include "nova/sigreg.hpp"

#include <algorithm>
#include <random>
#include <stdexcept>

namespace nova::audit {

namespace {

using gradcheck::Group;

MatrixD normal_matrix(Eigen::Index r, Eigen::Index c, Rng& gen) {
    std::normal_distribution<double> n(0.0, 1.0);
    MatrixD m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(gen);
    return m;
}

Group group(const std::string& name, MatrixD& values, const MatrixD& grad) {
    const auto n = static_cast<std::size_t>(values.size());
    return {name, {values.data(), n}, {grad.data(), n}};
}

Group scalar_group(const std::string& name, double& value, const double& grad) { return {name, {&value, 1}, {&grad, 1}}; }

struct Trial {
    std::function<double()> loss;
    std::vector<Group> groups;
};

int uniform_int(Rng& gen, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(gen); }
double uniform(Rng& gen, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(gen); }

// Per-loss state for one trial: inputs, analytic gradients, loss closure.
struct MseCase {
    objectives::ViewPredictions preds;
    MatrixD anchor, gp, ga;
    MseCase(Rng& gen) {
        const int B = uniform_int(gen, 2, 8), n = uniform_int(gen, 1, 4), D = uniform_int(gen, 2, 16);
        preds.views = n;
        preds.rows = normal_matrix(n * B, D, gen);
        anchor = normal_matrix(B, D, gen);
        const auto r = objectives::alignment_mse(preds, anchor);
        gp = r.grad_preds;
        ga = r.grad_anchor;
    }
    double loss() const { return objectives::alignment_mse(preds, anchor).loss; }
};

struct SigCase {
    MatrixD emb, grad;
    sigreg::DirectionSet dirs;
    sigreg::Mode mode;
    sigreg::CFGridSpec grid = sigreg::make_cf_grid();
    SigCase(Rng& gen, int trial) {
        const int k = uniform_int(gen, 2, 48), d = uniform_int(gen, 1, 8);
        emb = normal_matrix(k, d, gen) * uniform(gen, 0.3, 2.0);
        dirs = sigreg::sample_directions(d, uniform_int(gen, 1, 16), gen());
        mode = trial % 2 == 0 ? sigreg::Mode::grid : sigreg::Mode::closed_form;
        grad = sigreg::sigreg_loss(emb, dirs, mode, grid).grad;
    }
    double loss() const { return sigreg::sigreg_loss(emb, dirs, mode, grid, false).loss; }
};

// (1 - lambda) * mse(preds, anchor) + lambda * sigreg(cat[preds, anchor]).
struct NovaCase {
    objectives::ViewPredictions preds;
    MatrixD anchor, gp, ga;
    sigreg::DirectionSet dirs;
    sigreg::CFGridSpec grid = sigreg::make_cf_grid();
    double lambda;
    NovaCase(Rng& gen) {
        const int B = uniform_int(gen, 2, 8), n = uniform_int(gen, 1, 4), D = uniform_int(gen, 2, 12);
        preds.views = n;
        preds.rows = normal_matrix(n * B, D, gen);
        anchor = normal_matrix(B, D, gen);
        dirs = sigreg::sample_directions(D, 8, gen());
        lambda = uniform(gen, 0.0, 1.0);
        const auto m = objectives::alignment_mse(preds, anchor);
        const auto s = sigreg::sigreg_loss(joint(), dirs, sigreg::Mode::grid, grid);
        gp = (1.0 - lambda) * m.grad_preds + lambda * s.grad.topRows(preds.rows.rows());
        ga = (1.0 - lambda) * m.grad_anchor + lambda * s.grad.bottomRows(anchor.rows());
    }
    MatrixD joint() const {
        MatrixD j(preds.rows.rows() + anchor.rows(), anchor.cols());
        j << preds.rows, anchor;
        return j;
    }
    double loss() const {
        return objectives::nova_loss(objectives::alignment_mse(preds, anchor).loss,
                                     sigreg::sigreg_loss(joint(), dirs, sigreg::Mode::grid, grid, false).loss,
                                     {lambda});
    }
};

// Contrastive losses on raw embeddings, normalized inside the loss.
struct ContrastiveCase {
    bool siglip;
    MatrixD v, t, gv, gt;
    double tau, bias, g_tau = 0.0, g_bias = 0.0;
    ContrastiveCase(Rng& gen, bool sig) : siglip(sig) {
        const int B = uniform_int(gen, 2, 16), D = uniform_int(gen, 2, 16);
        v = normal_matrix(B, D, gen);
        t = normal_matrix(B, D, gen);
        tau = siglip ? uniform(gen, 1.0, 10.0) : uniform(gen, 0.05, 1.0);
        bias = siglip ? uniform(gen, -5.0, 5.0) : 0.0;
        const auto r = eval();
        gv = objectives::normalize_rows_backward(v, r.grad_v);
        gt = objectives::normalize_rows_backward(t, r.grad_t);
        g_tau = r.grad_tau;
        g_bias = r.grad_bias;
    }
    objectives::ContrastiveResult eval() const {
        const MatrixD vn = objectives::normalize_rows(v), tn = objectives::normalize_rows(t);
        return siglip ? objectives::siglip_loss(vn, tn, {tau, bias}) : objectives::infonce_loss(vn, tn, {tau, bias});
    }
    double loss() const { return eval().loss; }
};

}  // namespace

bool Report::passed() const {
    return std::all_of(entries.begin(), entries.end(), [&](const Entry& e) { return e.max_rel_error < tolerance; });
}

const std::vector<std::string>& loss_names() {
    static const std::vector<std::string> names{"mse", "nova", "infonce", "siglip", "sigreg"};
    return names;
}

Report run_audit(std::uint64_t seed, int trials, const std::string& fault, double tolerance) {
    if (!fault.empty() && std::find(loss_names().begin(), loss_names().end(), fault) == loss_names().end())
        throw std::invalid_argument("audit: unknown fault target '" + fault + "'");
    Report report;
    report.tolerance = tolerance;
    for (const auto& name : loss_names()) {
        Entry entry{name, 0.0, trials, {}};
        for (int trial = 0; trial < trials; ++trial) {
            Rng gen(derive_seed(seed, fnv1a64(name), static_cast<std::uint64_t>(trial)));
            const double scale = name == fault ? 1.01 : 1.0;
            gradcheck::Report r;
            const auto check_seed = derive_seed(seed, static_cast<std::uint64_t>(trial));
            if (name == "mse") {
                MseCase c(gen);
                c.gp *= scale;
                r = gradcheck::finite_difference_check([&] { return c.loss(); },
                                                       {group("preds", c.preds.rows, c.gp), group("anchor", c.anchor, c.ga)},
                                                       1e-5, 200, check_seed);
            } else if (name == "nova") {
                NovaCase c(gen);
                c.gp *= scale;
                r = gradcheck::finite_difference_check([&] { return c.loss(); },
                                                       {group("preds", c.preds.rows, c.gp), group("anchor", c.anchor, c.ga)},
                                                       1e-5, 200, check_seed);
            } else if (name == "sigreg") {
                SigCase c(gen, trial);
                c.grad *= scale;
                r = gradcheck::finite_difference_check([&] { return c.loss(); }, {group("embeddings", c.emb, c.grad)},
                                                       1e-5, 200, check_seed);
            } else {
                ContrastiveCase c(gen, name == "siglip");
                c.gv *= scale;
                std::vector<Group> groups{group("v", c.v, c.gv), group("t", c.t, c.gt), scalar_group("tau", c.tau, c.g_tau)};
                if (c.siglip) groups.push_back(scalar_group("bias", c.bias, c.g_bias));
                r = gradcheck::finite_difference_check([&] { return c.loss(); }, groups, 1e-5, 200, check_seed);
            }
            if (r.max_rel_error >= entry.max_rel_error) {
                entry.max_rel_error = r.max_rel_error;
                entry.worst_group = r.worst_group;
            }
        }
        report.entries.push_back(entry);
    }
    return report;
}

}  // namespace nova::audit
